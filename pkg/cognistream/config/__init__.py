from cognistream.config.cognition_config import (
    MINER_DEFAULTS,
    STRUCTURE_DEFAULTS,
    STRUCTURE_MODES,
    RELEVANCY_DEFAULTS,
    HYPOTHESIS_DEFAULTS,
    HYPOTHESIS_STATES,
    HYPOTHESIS_TRANSITIONS,
    FORECAST_DEFAULTS,
    FORECAST_METHODS,
    DPU_DEFAULTS,
    TOPOLOGY_SHAPES,
    MESSAGE_KINDS,
    STORE_FILES,
    EXIT_CODES,
    CONFIG_ENV_VAR
)
