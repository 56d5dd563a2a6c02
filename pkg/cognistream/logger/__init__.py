from cognistream.logger.logger import get_logger
