from typing import Any, Optional, Tuple
from cognistream.config import STRUCTURE_MODES, FORECAST_METHODS, TOPOLOGY_SHAPES
from cognistream.exceptions import ConfigError
from cognistream.logger import get_logger


def _raise_config_error(error_msg: str):
    logger = get_logger(__name__, "PROD", False)
    logger.error(error_msg)
    raise ConfigError(error_msg)


def _is_int(value: Any) -> bool:
    # bool is an int subclass but never a valid count
    return isinstance(value, int) and not isinstance(value, bool)


def miner_config_checker(
    min_len: Any,
    max_len: Any,
    min_support: Any,
    window_size: Any
) -> Tuple[int, int, int, int]:
    """
    Validates the pattern mining parameters

    Parameters
    ----------
    min_len : int
        Shortest pattern length in bytes, at least 1

    max_len : int
        Longest pattern length in bytes, at least min_len

    min_support : int
        Minimum non-overlapping occurrence count of a retained pattern, at least 2

    window_size : int
        Number of tokens per stream window, at least 1

    Returns
    -------
    tuple
        The validated (min_len, max_len, min_support, window_size)
    """
    for name, value in (("min_len", min_len), ("max_len", max_len),
                        ("min_support", min_support), ("window_size", window_size)):
        if not _is_int(value):
            _raise_config_error(f"{name} expected to be an integer, got {type(value)}")

    if min_len < 1:
        _raise_config_error(f"min_len should be at least 1, got {min_len}")

    if max_len < min_len:
        _raise_config_error(f"max_len should be greater than or equal to min_len ({min_len}), got {max_len}")

    if min_support < 2:
        _raise_config_error(f"min_support should be at least 2 since a pattern has to repeat, got {min_support}")

    if window_size < 1:
        _raise_config_error(f"window_size should be a positive integer, got {window_size}")

    return min_len, max_len, min_support, window_size


def relevancy_config_checker(decay: Any, saturation: Any, budget: Any) -> Tuple[float, int, int]:
    """
    Validates the relevancy recurrence parameters

    Parameters
    ----------
    decay : float
        The lambda of the recurrence, in (0, 1]

    saturation : int
        The kappa of the recurrence, count that maps to a full observation

    budget : int
        Number of tasks selected per scheduling cycle

    Returns
    -------
    tuple
        The validated (decay, saturation, budget)
    """
    if not isinstance(decay, (int, float)) or isinstance(decay, bool) or not 0 < decay <= 1:
        _raise_config_error(f"decay should be a number in (0, 1], got {decay}")

    if not _is_int(saturation) or saturation < 1:
        _raise_config_error(f"saturation should be a positive integer, got {saturation}")

    if not _is_int(budget) or budget < 1:
        _raise_config_error(f"budget should be a positive integer, got {budget}")

    return float(decay), saturation, budget


def hypothesis_config_checker(
    threshold: Any,
    quorum: Any,
    fluctuation_window: Any,
    ttl: Any,
    budget: Any
) -> Tuple[int, int, int, int, int]:
    """
    Validates the hypothesis lifecycle parameters

    Parameters
    ----------
    threshold : int
        Largest distance still recorded as a near miss, at least 1

    quorum : int
        Consistent near misses needed before a correction, at least 1

    fluctuation_window : int
        Number of recent distances inspected for improvement, at least 2

    ttl : int
        Windows a hypothesis may wait for its first near miss, at least 1

    budget : int
        New hypotheses per synthesis cycle, at least 1

    Returns
    -------
    tuple
        The validated (threshold, quorum, fluctuation_window, ttl, budget)
    """
    minimums = (("threshold", threshold, 1), ("quorum", quorum, 1),
                ("fluctuation_window", fluctuation_window, 2), ("ttl", ttl, 1), ("budget", budget, 1))

    for name, value, minimum in minimums:
        if not _is_int(value) or value < minimum:
            _raise_config_error(f"{name} should be an integer >= {minimum}, got {value}")

    return threshold, quorum, fluctuation_window, ttl, budget


def structure_mode_checker(mode: Optional[str], k: Any = 3, delimiter: Optional[str] = None) -> str:
    """
    Validates the structure extraction mode and its parameters

    Parameters
    ----------
    mode : str, (default='window' If None)
        Either 'window' or 'delimiter'

    k : int, (default=3)
        Window length, only used by the 'window' mode

    delimiter : str, optional
        Hex encoded delimiter bytes, required by the 'delimiter' mode

    Returns
    -------
    str
        The normalized mode name
    """
    if mode is None:
        return 'window'

    if not isinstance(mode, str):
        _raise_config_error(f"structure mode expected to be a string, got {type(mode)}")

    mode = mode.lower()
    if mode not in STRUCTURE_MODES:
        _raise_config_error(f"{mode} is not a valid structure mode, expected one of the following: {STRUCTURE_MODES}")

    if mode == 'window' and not _is_int(k):
        _raise_config_error(f"k expected to be an integer, got {type(k)}")

    if mode == 'delimiter':
        if not delimiter:
            _raise_config_error("The 'delimiter' mode needs delimiter bytes given as hex")
        try:
            bytes.fromhex(delimiter)
        except ValueError:
            _raise_config_error(f"delimiter should be hex encoded bytes, got {delimiter!r}")

    return mode


def forecast_method_checker(method: Optional[str], alpha: Any = 1.0) -> str:
    """
    Validates the forecasting method and the Markov smoothing constant

    Parameters
    ----------
    method : str, (default='markov' If None)
        Either 'markov' or 'trend'

    alpha : float, (default=1.0)
        Additive smoothing of the Markov predictor, non-negative

    Returns
    -------
    str
        The normalized method name
    """
    if method is None:
        method = 'markov'

    method = str(method).lower()
    if method not in FORECAST_METHODS:
        _raise_config_error(f"{method} is not a valid forecast method, expected one of the following: {FORECAST_METHODS}")

    if not isinstance(alpha, (int, float)) or isinstance(alpha, bool) or alpha < 0:
        _raise_config_error(f"alpha should be a non-negative number, got {alpha}")

    return method


def topology_shape_checker(shape: Any) -> str:
    """
    Validates a topology shape name and returns its canonical spelling

    Parameters
    ----------
    shape : str
        'ring', 'mesh' (or 'full-mesh') or 'grid'

    Returns
    -------
    str
        Canonical shape name, e.g. 'full-mesh' for 'mesh'
    """
    if not isinstance(shape, str) or shape.lower() not in TOPOLOGY_SHAPES:
        _raise_config_error(f"{shape} is not a valid topology shape, expected one of the following: {list(TOPOLOGY_SHAPES)}")

    return TOPOLOGY_SHAPES[shape.lower()]


def source_tag_checker(source_tag: Any) -> str:
    """
    Validates a segment source tag so it stays safe inside the line-delimited metadata sidecar
    """
    if not isinstance(source_tag, str):
        _raise_config_error(f"source_tag expected to be a string, got {type(source_tag)}")

    if any(char in source_tag for char in ("\t", "\n", "\r")):
        _raise_config_error(f"source_tag must not contain tabs or newlines, got {source_tag!r}")

    return source_tag
