import os
import sys
import logging

LOG_DIR_PATH = "logs"
LOG_FILE_PATH = os.path.join(LOG_DIR_PATH, "cognistream_logs.log")

LOG_FORMATS = {
    "TEST": "%(levelname)s | %(asctime)s | %(name)s.%(funcName)s | %(message)s",
    "PROD": "%(levelname)s | %(asctime)s | %(message)s"
}

_HANDLER_TAG = "_cognistream_handler"


def _has_handler(root: logging.Logger, kind: str) -> bool:
    return any(getattr(handler, _HANDLER_TAG, None) == kind for handler in root.handlers)


def _add_handler(root: logging.Logger, handler: logging.Handler, kind: str, log_format: str):
    handler.setFormatter(logging.Formatter(log_format, datefmt="%Y-%m-%d %H:%M:%S"))
    setattr(handler, _HANDLER_TAG, kind)
    root.addHandler(handler)


def _logger_configuration(log_level: str, logging_to_file: bool = False):
    """
    Installs the stderr handler on the root logger once per process, and the log file handler
    the first time any caller asks for it

    Parameters
    ----------
    log_level: str
        The log format of newly installed handlers. It can be either "TEST" or "PROD"

    logging_to_file : bool, (default=False)
        If True, logs are also saved to /logs/cognistream_logs.log
    """
    if log_level not in LOG_FORMATS:
        raise ValueError("Invalid log level. It should be either 'TEST' or 'PROD'.")

    root = logging.getLogger()
    if not _has_handler(root, "console"):
        root.setLevel(logging.INFO)
        _add_handler(root, logging.StreamHandler(sys.stderr), "console", LOG_FORMATS[log_level])

    # file logging can be switched on after the first get_logger call, e.g. by --log-to-file
    if logging_to_file and not _has_handler(root, "file"):
        os.makedirs(LOG_DIR_PATH, exist_ok=True)
        _add_handler(root, logging.FileHandler(LOG_FILE_PATH, encoding="utf-8"), "file", LOG_FORMATS[log_level])


def get_logger(
    name: str,
    log_level: str = "PROD",
    logging_to_file: bool = False
) -> logging.Logger:
    """
    Returns a logger object with the given name

    Logs always go to stderr so that reports printed on stdout stay clean

    Parameters
    ----------
    name : str
        The name of the logger (It's always the name of the class or the module)

    log_level: str, (default="PROD")
        The log format to use. It can be either "TEST" or "PROD"

        Example output for TEST
        >>> logger = get_logger("test_logger", "TEST")
        >>> logger.info("[PROCESS] Mining 3 segments")
        >>> INFO | 2026-07-07 12:00:00 | test_logger.<module> | [PROCESS] Mining 3 segments

        Example output for PROD
        >>> logger = get_logger("test_logger", "PROD")
        >>> logger.info("[PROCESS] Mining 3 segments")
        >>> INFO | 2026-07-07 12:00:00 | [PROCESS] Mining 3 segments

    logging_to_file : bool, (default=False)
        If True, logs are saved to /logs/cognistream_logs.log as well

    Returns
    -------
    logger : logging.Logger
        The logger object with the given name
    """
    _logger_configuration(log_level, logging_to_file)
    return logging.getLogger(name)
