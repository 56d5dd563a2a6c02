# Pattern mining defaults (cognition layer)
MINER_DEFAULTS = {
    "min_len": 2,
    "max_len": 16,
    "min_support": 2,
    "window_size": 1024
}

# Structure extraction defaults
STRUCTURE_DEFAULTS = {
    "mode": "window",
    "k": 3,
    "delimiter": None  # hex encoded delimiter bytes, only used by the 'delimiter' mode
}

STRUCTURE_MODES = ['window', 'delimiter']

# Relevancy recurrence defaults
RELEVANCY_DEFAULTS = {
    "decay": 0.5,       # lambda in (0, 1]
    "saturation": 4,    # kappa, count that maps to a full observation
    "budget": 8         # tasks scheduled per cycle
}

# Hypothesis lifecycle defaults
HYPOTHESIS_DEFAULTS = {
    "threshold": 1,         # theta, largest near-miss distance that is recorded
    "quorum": 3,            # c, consistent near-misses needed for a correction
    "fluctuation_window": 5,  # w, distances inspected for improvement
    "ttl": 8,               # windows a hypothesis may wait for a first observation
    "budget": 4             # new hypotheses per cycle
}

HYPOTHESIS_STATES = ['Proposed', 'Confirmed', 'Rejected', 'Superseded']

# Allowed state transitions, terminal states map to an empty list
HYPOTHESIS_TRANSITIONS = {
    'Proposed': ['Confirmed', 'Rejected', 'Superseded'],
    'Confirmed': [],
    'Rejected': [],
    'Superseded': []
}

# Forecasting defaults
FORECAST_DEFAULTS = {
    "method": "markov",
    "alpha": 1.0
}

FORECAST_METHODS = ['markov', 'trend']

# Decentralized processing unit simulation
DPU_DEFAULTS = {
    "shape": "ring",
    "units": 3,
    "ttl": None,  # None means ttl = number of units
    "seed": 0
}

TOPOLOGY_SHAPES = {
    # accepted spellings -> canonical shape name
    'ring': 'ring',
    'mesh': 'full-mesh',
    'full-mesh': 'full-mesh',
    'fullmesh': 'full-mesh',
    'grid': 'grid'
}

MESSAGE_KINDS = ['Ingest', 'MineRequest', 'DictSync', 'TemplateSync', 'Query', 'QueryResult', 'ConfirmSync']

# Files the CLI keeps inside a store directory next to the raw segment file
STORE_FILES = {
    "segments": "segments.bin",
    "metadata": "segments.meta",
    "relevancy": "relevancy.tsv",
    "hypotheses": "hypotheses.log"
}

EXIT_CODES = {
    "ok": 0,
    "usage": 1,
    "data": 2
}

CONFIG_ENV_VAR = "COGNISTREAM_CONFIG"
