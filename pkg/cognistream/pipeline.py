import configparser
import os
import shlex
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set
import pandas as pd
from cognistream.config import (
    STRUCTURE_DEFAULTS,
    FORECAST_DEFAULTS,
    DPU_DEFAULTS,
    STORE_FILES,
    HYPOTHESIS_STATES
)
from cognistream.exceptions import ConfigError, UnknownDelimiter
from cognistream.helpers import structure_mode_checker, forecast_method_checker, topology_shape_checker, write_lines
from cognistream.logger import get_logger
from cognistream.stream_store import Segment, StreamStore, StreamWindow
from cognistream.structures import StructureGroup, StructureInstance, StructureKey, extract, dedupe, export_structures
from cognistream._miner import (
    MinerConfig,
    Pattern,
    Token,
    mine_patterns,
    tokenize,
    assign_windows,
    pattern_id_of,
    export_dictionary,
    window_counts as pattern_window_counts
)
from cognistream._generalizer import Hierarchy, build_hierarchy, export_hierarchy, window_counts as node_window_counts
from cognistream._relevancy import RelevancyConfig, RelevancyTable
from cognistream._hypotheses import (
    Hypothesis,
    HypothesisConfig,
    advance,
    readmit,
    export_log,
    load_log
)
from cognistream._forecaster import classify, predict, export_forecast
from cognistream._query_planner import plan, run_queries, export_results

CHECKED_OFFSET_HEADER = "# checked_offset="


@dataclass
class RunConfig:
    """
    Every knob of one cognition run, validated by the owning modules

    Parameters
    ----------
    store_path : str, optional
        Directory of a file-backed store, None keeps everything in memory

    structure_mode : str, (default='window')
        'window' with window length k, or 'delimiter' with hex delimiter bytes

    forecast_method : str, (default='markov')
        'markov' with smoothing alpha, or 'trend'

    dpu_shape, dpu_units, dpu_ttl, dpu_seed
        Topology of the dpu simulation, dpu_ttl None means the unit count
    """
    store_path: Optional[str] = None
    miner: MinerConfig = field(default_factory=MinerConfig)
    relevancy: RelevancyConfig = field(default_factory=RelevancyConfig)
    hypothesis: HypothesisConfig = field(default_factory=HypothesisConfig)
    structure_mode: str = STRUCTURE_DEFAULTS["mode"]
    k: int = STRUCTURE_DEFAULTS["k"]
    delimiter: Optional[str] = STRUCTURE_DEFAULTS["delimiter"]
    forecast_method: str = FORECAST_DEFAULTS["method"]
    alpha: float = FORECAST_DEFAULTS["alpha"]
    dpu_shape: str = DPU_DEFAULTS["shape"]
    dpu_units: int = DPU_DEFAULTS["units"]
    dpu_ttl: Optional[int] = DPU_DEFAULTS["ttl"]
    dpu_seed: int = DPU_DEFAULTS["seed"]

    def __post_init__(self):
        self.structure_mode = structure_mode_checker(self.structure_mode, self.k, self.delimiter)
        self.forecast_method = forecast_method_checker(self.forecast_method, self.alpha)
        self.dpu_shape = topology_shape_checker(self.dpu_shape)

    @classmethod
    def from_file(cls, path: str, store_path: Optional[str] = None) -> "RunConfig":
        """
        Reads an INI file with optional [miner], [structures], [relevancy], [hypotheses], [forecast] and [dpu] sections

        Parameters
        ----------
        path : str
            Config file path, flat 'key = value' pairs under section headers

        store_path : str, optional
            Overrides the [store] path of the file
        """
        logger = get_logger(__name__, "PROD", False)
        parser = configparser.ConfigParser()
        try:
            with open(path, "r", encoding="utf-8") as file:
                parser.read_file(file)
        except (OSError, configparser.Error) as e:
            error_msg = f"Could not read the config file {path}: {e}"
            logger.error(error_msg)
            raise ConfigError(error_msg) from e

        return cls.from_parser(parser, store_path)

    @classmethod
    def from_parser(cls, parser: configparser.ConfigParser, store_path: Optional[str] = None) -> "RunConfig":
        known = {
            "store": {"path": str},
            "miner": {"min_len": int, "max_len": int, "min_support": int, "window_size": int},
            "structures": {"mode": str, "k": int, "delimiter": str},
            "relevancy": {"decay": float, "saturation": int, "budget": int},
            "hypotheses": {"threshold": int, "quorum": int, "fluctuation_window": int, "ttl": int, "budget": int},
            "forecast": {"method": str, "alpha": float},
            "dpu": {"shape": str, "units": int, "ttl": int, "seed": int}
        }

        values: Dict[str, Dict] = {section: {} for section in known}
        for section in parser.sections():
            if section not in known:
                error_msg = f"Unknown config section [{section}], expected one of the following: {list(known)}"
                get_logger(__name__, "PROD", False).error(error_msg)
                raise ConfigError(error_msg)

            for key, raw in parser.items(section):
                if key not in known[section]:
                    error_msg = f"Unknown key '{key}' in config section [{section}], expected one of the following: {list(known[section])}"
                    get_logger(__name__, "PROD", False).error(error_msg)
                    raise ConfigError(error_msg)
                try:
                    values[section][key] = known[section][key](raw.strip())
                except ValueError as e:
                    error_msg = f"Config value {section}.{key} = {raw!r} is not a valid {known[section][key].__name__}"
                    get_logger(__name__, "PROD", False).error(error_msg)
                    raise ConfigError(error_msg) from e

        structures, forecast, dpu = values["structures"], values["forecast"], values["dpu"]
        return cls(
            store_path=store_path or values["store"].get("path"),
            miner=MinerConfig(**values["miner"]),
            relevancy=RelevancyConfig(**values["relevancy"]),
            hypothesis=HypothesisConfig(**values["hypotheses"]),
            structure_mode=structures.get("mode", STRUCTURE_DEFAULTS["mode"]),
            k=structures.get("k", STRUCTURE_DEFAULTS["k"]),
            delimiter=structures.get("delimiter", STRUCTURE_DEFAULTS["delimiter"]),
            forecast_method=forecast.get("method", FORECAST_DEFAULTS["method"]),
            alpha=forecast.get("alpha", FORECAST_DEFAULTS["alpha"]),
            dpu_shape=dpu.get("shape", DPU_DEFAULTS["shape"]),
            dpu_units=dpu.get("units", DPU_DEFAULTS["units"]),
            dpu_ttl=dpu.get("ttl", DPU_DEFAULTS["ttl"]),
            dpu_seed=dpu.get("seed", DPU_DEFAULTS["seed"])
        )


@dataclass
class CognitionState:
    """
    Everything one deterministic pass over the stream produces
    """
    segments: List[Segment]
    dictionary: Dict[str, Pattern]
    tokens: List[Token]
    windows: List[StreamWindow]
    instances: List[StructureInstance]
    groups: Dict[StructureKey, StructureGroup]
    hierarchy: Hierarchy

    @property
    def last_window(self) -> int:
        return self.windows[-1].window_index if self.windows else -1

    @property
    def total_bytes(self) -> int:
        return sum(len(segment.data) for segment in self.segments)


def run_cognition(segments: Sequence[Segment], config: Optional[RunConfig] = None, logging_to_file: bool = False) -> CognitionState:
    """
    Mines, tokenizes, extracts structures and generalizes them into a hierarchy

    Parameters
    ----------
    segments : Sequence[Segment]
        Ordered segments of the stream

    config : RunConfig, optional
        Defaults are used If None

    logging_to_file: bool, (default=False)
        If True, the logs will be saved to /logs/cognistream_logs.log as well
    """
    config = config or RunConfig()
    segments = list(segments)

    dictionary = mine_patterns(segments, config.miner)
    tokens, windows = assign_windows(tokenize(segments, dictionary), config.miner)

    instances: List[StructureInstance] = []
    if tokens:
        if config.structure_mode == "delimiter":
            delimiter_id = pattern_id_of(bytes.fromhex(config.delimiter))
            if delimiter_id not in dictionary:
                error_msg = f"Delimiter bytes {config.delimiter} were not mined as a pattern, lower min_len or min_support"
                get_logger(__name__, "PROD", logging_to_file).error(error_msg)
                raise UnknownDelimiter(error_msg)
            instances = extract(tokens, "delimiter", delimiter=delimiter_id, dictionary=dictionary)
        else:
            instances = extract(tokens, "window", k=config.k)

    groups = dedupe(instances)
    hierarchy = build_hierarchy(groups, logging_to_file)
    return CognitionState(segments, dictionary, tokens, windows, instances, groups, hierarchy)


def subject_window_counts(state: CognitionState) -> Dict[int, Counter]:
    """
    Per window occurrence counts of patterns and matched leaf instances of nodes, the relevancy subjects
    """
    counts: Dict[int, Counter] = {window.window_index: Counter() for window in state.windows}
    for window, counter in pattern_window_counts(state.tokens).items():
        counts[window].update(counter)
    for window, counter in node_window_counts(state.hierarchy).items():
        counts.setdefault(window, Counter()).update(counter)
    return counts


class CognitionPipeline:
    """
    Runs the cognition cycle over a stream store and keeps the persistent state next to it

    Only the relevancy table ('relevancy.tsv') and the hypothesis log ('hypotheses.log') are persisted,
    everything else is recomputed deterministically from the stored segments

    Parameters
    ----------
    store : StreamStore
        In-memory or file-backed stream store

    config : RunConfig, optional
        Defaults are used If None

    logging_to_file: bool, (default=False)
        If True, the logs will be saved to /logs/cognistream_logs.log as well
    """
    def __init__(self, store: StreamStore, config: Optional[RunConfig] = None, logging_to_file: bool = False):
        self.store = store
        self.config = config or RunConfig(store_path=store.path)
        self.logging_to_file = logging_to_file
        self.__logger = get_logger(__name__, "PROD", logging_to_file)

        self._state: Optional[CognitionState] = None
        self._table: Optional[RelevancyTable] = None
        self._hypotheses: Optional[List[Hypothesis]] = None
        self._logged: Dict[str, str] = {}
        self._checked_offset = 0

    def __repr__(self):
        return f"CognitionPipeline(store={self.store!r}, structure_mode={self.config.structure_mode})"

    def __store_file(self, name: str) -> Optional[str]:
        return os.path.join(self.store.path, STORE_FILES[name]) if self.store.path is not None else None

    @property
    def state(self) -> CognitionState:
        if self._state is None:
            self.__logger.info(f"[PROCESS] Running the cognition pass over {len(self.store)} segments")
            self._state = run_cognition(self.store.segments(), self.config, self.logging_to_file)
            readmit(self._state.hierarchy, self.hypotheses)
        return self._state

    @property
    def table(self) -> RelevancyTable:
        if self._table is None:
            path = self.__store_file("relevancy")
            self._table = RelevancyTable.load(path, self.config.relevancy) if path else RelevancyTable(self.config.relevancy)
        return self._table

    @property
    def hypotheses(self) -> List[Hypothesis]:
        if self._hypotheses is None:
            path = self.__store_file("hypotheses")
            self._hypotheses = load_log(path) if path else []
            self._logged = dict(zip((h.hypothesis_id for h in self._hypotheses), export_log(self._hypotheses)))
            if path:
                headers = [line for line in self.__comment_lines(path) if line.startswith(CHECKED_OFFSET_HEADER)]
                self._checked_offset = int(headers[-1][len(CHECKED_OFFSET_HEADER):]) if headers else 0
        return self._hypotheses

    @staticmethod
    def __comment_lines(path: str) -> List[str]:
        if not os.path.exists(path):
            return []
        with open(path, "r", encoding="utf-8", newline="\n") as file:
            return [line.rstrip("\n") for line in file if line.startswith("#")]

    def invalidate(self):
        """
        Drops the cached cognition pass, e.g. after new segments were appended
        """
        self._state = None

    def mine(self) -> List[str]:
        return export_dictionary(self.state.dictionary)

    def structures(self) -> List[str]:
        return export_structures(self.state.groups)

    def generalize(self) -> List[str]:
        return export_hierarchy(self.state.hierarchy)

    def relevancy(self) -> List[str]:
        """
        Folds every window not processed yet into the relevancy table and saves it
        """
        table = self.table
        counts = subject_window_counts(self.state)
        for window in range(table.processed_window + 1, self.state.last_window + 1):
            table.update_window(window, counts.get(window, {}))

        self.__save_table()
        return table.score_lines()

    def __save_table(self):
        path = self.__store_file("relevancy")
        if path:
            write_lines(path, self.table.export_lines())

    def hypothesize(self, focus: Optional[Set[str]] = None) -> List[str]:
        """
        Checks the hypotheses of earlier runs against the part of the stream appended since, corrects
        those with a quorum of near misses, rejects fluctuating or timed out ones and synthesizes new ones

        New hypotheses are first checked on the next run, against data appended after this one

        Returns
        -------
        list[str]
            The hypothesis log of the current state
        """
        state, hypotheses = self.state, self.hypotheses
        # the hypotheses property loads the checked offset
        unchecked = self.__unchecked_instances(state)
        confirmed = advance(
            hypotheses,
            unchecked,
            state.hierarchy,
            self.table,
            self.config.hypothesis,
            max(state.last_window, 0),
            focus
        )
        self.__logger.info(f"[PROCESS] Checked {len(unchecked)} new structures, {len(confirmed)} hypotheses confirmed")
        self._checked_offset = state.total_bytes

        self.__save_hypotheses()
        return export_log(hypotheses)

    def __unchecked_instances(self, state: CognitionState) -> List[StructureInstance]:
        return [instance for instance in state.instances if instance.origin[1] >= self._checked_offset]

    def __save_hypotheses(self):
        changed = []
        for hypothesis, line in zip(self.hypotheses, export_log(self.hypotheses)):
            if self._logged.get(hypothesis.hypothesis_id) != line:
                changed.append(line)
                self._logged[hypothesis.hypothesis_id] = line

        path = self.__store_file("hypotheses")
        if path:
            write_lines(path, changed + [f"{CHECKED_OFFSET_HEADER}{self._checked_offset}"], append=True)

    def cycle(self, focus: Optional[Set[str]] = None) -> List[str]:
        """
        One full cognition cycle, the reports of every step in order
        """
        return self.mine() + self.structures() + self.generalize() + self.relevancy() + self.hypothesize(focus)

    def query(self, query_lines: Iterable[str], broaden: bool = False, narrow: bool = False) -> List[str]:
        """
        Answers keyword queries, one query per line with shell-style quoting

        Keywords of answered queries get a relevancy boost

        Returns
        -------
        list[str]
            query_id, segment_id, offset and items per result
        """
        state = self.state
        queries = []
        for line in query_lines:
            keywords = shlex.split(line)
            if not keywords:
                continue
            queries.append(plan(
                f"q{len(queries)}",
                [keyword.encode("utf-8") for keyword in keywords],
                state.dictionary,
                state.hierarchy,
                received_window=max(state.last_window, 0),
                broaden=broaden
            ))

        results = run_queries(queries, state.hierarchy, self.table, narrow=narrow)
        for query in queries:
            if results[query.query_id]:
                self.table.register(sorted(query.resolved))
                for pattern_id in sorted(query.resolved):
                    self.table.query_boost(pattern_id)

        self.__save_table()
        return export_results(results)

    def forecast(self, template_id: str, position: int, method: Optional[str] = None, alpha: Optional[float] = None) -> List[str]:
        sequence = classify(self.state.hierarchy, template_id, position)
        method = method or self.config.forecast_method
        alpha = self.config.alpha if alpha is None else alpha
        return export_forecast(predict(sequence, method, alpha))

    def summary(self) -> pd.DataFrame:
        """
        One row per template: arity, level, support, relevancy and children count, most relevant first
        """
        columns = ["node_id", "arity", "level", "support", "relevancy", "children"]
        templates = pd.DataFrame(
            [(node.node_id, node.arity, node.level, node.support, len(node.children)) for node in self.state.hierarchy.templates()],
            columns=["node_id", "arity", "level", "support", "children"]
        )
        scores = self.table.to_frame().rename(columns={"subject": "node_id", "score": "relevancy"})[["node_id", "relevancy"]]

        # templates never scored by a relevancy run rank with 0
        frame = templates.merge(scores, on="node_id", how="left").fillna({"relevancy": 0.0})
        frame["relevancy"] = frame["relevancy"].astype(float).round(6)
        return frame[columns].sort_values(["relevancy", "support", "node_id"], ascending=[False, False, True], ignore_index=True)

    def report(self) -> List[str]:
        """
        Store statistics followed by the template table
        """
        state = self.state
        states = Counter(hypothesis.state for hypothesis in self.hypotheses)
        lines = [
            f"segments\t{len(state.segments)}",
            f"bytes\t{state.total_bytes}",
            f"windows\t{len(state.windows)}",
            f"patterns\t{len(state.dictionary)}",
            f"leaves\t{len(state.hierarchy.leaves())}",
            f"templates\t{len(state.hierarchy.templates())}"
        ]
        lines.extend(f"hypotheses.{name}\t{states.get(name, 0)}" for name in HYPOTHESIS_STATES)

        frame = self.summary()
        if not frame.empty:
            lines.extend(frame.to_string(index=False).splitlines())
        return lines
