import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple
from cognistream.config import HYPOTHESIS_DEFAULTS, HYPOTHESIS_TRANSITIONS
from cognistream.exceptions import NoTemplates, NoQuorum, KnownStatement, HypothesisError
from cognistream.helpers import hypothesis_config_checker, content_hash, is_literal, format_score, tsv_line, read_lines
from cognistream.logger import get_logger
from cognistream.structures import StructureInstance, instance_order, mismatches
from cognistream._generalizer import Hierarchy, Slot, TemplateNode, admit, find_node
from cognistream._relevancy import RelevancyTable

PROPOSED = 'Proposed'
CONFIRMED = 'Confirmed'
REJECTED = 'Rejected'
SUPERSEDED = 'Superseded'

# (window_index, distance, ((position, observed item), ...))
HistoryEntry = Tuple[int, int, Tuple[Tuple[int, str], ...]]


@dataclass(frozen=True)
class HypothesisConfig:
    """
    Parameters
    ----------
    threshold : int, (default=1)
        Largest distance still recorded as a near miss

    quorum : int, (default=3)
        Consistent near misses needed before a correction

    fluctuation_window : int, (default=5)
        Recent distances inspected for an improvement of the running minimum

    ttl : int, (default=8)
        Windows a hypothesis may wait for its first near miss

    budget : int, (default=4)
        New hypotheses per synthesis cycle
    """
    threshold: int = HYPOTHESIS_DEFAULTS["threshold"]
    quorum: int = HYPOTHESIS_DEFAULTS["quorum"]
    fluctuation_window: int = HYPOTHESIS_DEFAULTS["fluctuation_window"]
    ttl: int = HYPOTHESIS_DEFAULTS["ttl"]
    budget: int = HYPOTHESIS_DEFAULTS["budget"]

    def __post_init__(self):
        hypothesis_config_checker(self.threshold, self.quorum, self.fluctuation_window, self.ttl, self.budget)


@dataclass
class Hypothesis:
    """
    A synthesized statement that was never observed in the stream

    Parameters
    ----------
    template_id : str
        node_id of the template the statement was synthesized from

    items : tuple[str]
        Concrete items, one per template position

    injected_positions : frozenset[int]
        Positions whose item was not in the slot vector when the statement was made

    history : list
        (window_index, distance, mismatches) of every near miss observed so far
    """
    hypothesis_id: str
    template_id: str
    items: Tuple[str, ...]
    injected_positions: frozenset
    born_window: int
    score: float = 0.0
    state: str = PROPOSED
    history: List[HistoryEntry] = field(default_factory=list)
    successor_id: Optional[str] = None

    @property
    def is_live(self) -> bool:
        return self.state == PROPOSED

    @property
    def arity(self) -> int:
        return len(self.items)


def hypothesis_id_of(template_id: str, items: Sequence[str]) -> str:
    return content_hash(f"{template_id}|{','.join(items)}".encode("utf-8"))


def transition(hypothesis: Hypothesis, state: str):
    """
    Moves a hypothesis to a new state, Confirmed Rejected and Superseded are terminal
    """
    if state not in HYPOTHESIS_TRANSITIONS[hypothesis.state]:
        error_msg = f"Hypothesis {hypothesis.hypothesis_id} cannot move from {hypothesis.state} to {state}"
        get_logger(__name__, "PROD", False).error(error_msg)
        raise HypothesisError(error_msg)

    hypothesis.state = state


def _most_frequent(vector: Dict[str, int]) -> str:
    return min(vector, key=lambda item: (-vector[item], item))


def _candidate_relevancy(table: RelevancyTable, item: str) -> float:
    return 0.0 if is_literal(item) else table.score(item)


def synthesize(
    hierarchy: Hierarchy,
    table: RelevancyTable,
    config: Optional[HypothesisConfig] = None,
    existing: Iterable[Hypothesis] = (),
    current_window: int = 0,
    focus: Optional[Set[str]] = None
) -> List[Hypothesis]:
    """
    Generates new statements by substituting slot members with synonyms from other slots

    The templates to fill are picked by table.schedule(), so at most the relevancy budget of templates
    is worked on per cycle. For a slot with vector V, every other slot V' that shares a member with V is a synonym class and each
    x in V' - V becomes a candidate for that position. The remaining slots are filled with their most
    frequent member. A candidate scores the geometric mean of the template and candidate relevancy

    Parameters
    ----------
    hierarchy : Hierarchy
        Hierarchy with at least one template

    table : RelevancyTable
        Relevancy of templates and patterns

    config : HypothesisConfig, optional
        Defaults are used If None

    existing : Iterable[Hypothesis]
        Hypotheses of earlier cycles, in any state, a statement is never synthesized twice

    current_window : int, (default=0)
        born_window of the new hypotheses

    focus : set[str], optional
        If given, only templates containing one of these items are used

    Returns
    -------
    list[Hypothesis]
        At most config.budget new hypotheses, best score first
    """
    logger = get_logger(__name__, "PROD", False)
    config = config or HypothesisConfig()
    templates = hierarchy.templates()

    if not templates:
        error_msg = "The hierarchy holds no template with a slot, there is nothing to synthesize from"
        logger.error(error_msg)
        raise NoTemplates(error_msg)

    if focus:
        templates = [node for node in templates if node.members() & set(focus)]

    templates.sort(key=lambda node: (-node.support, node.node_id))
    templates = table.schedule([(node, node.node_id) for node in templates])
    all_slots = [
        (node.node_id, p, set(node.positions[p].vector))
        for node in sorted(hierarchy.templates(), key=lambda n: n.node_id)
        for p in node.slot_positions()
    ]
    seen = {hypothesis.items for hypothesis in existing}

    candidates: Dict[Tuple[str, ...], Hypothesis] = {}
    for node in templates:
        for p in node.slot_positions():
            vector = set(node.positions[p].vector)
            injected: Set[str] = set()
            for other_id, other_p, other_vector in all_slots:
                if (other_id, other_p) == (node.node_id, p) or not vector & other_vector:
                    continue
                injected.update(other_vector - vector)

            for item in sorted(injected):
                items = tuple(
                    item if q == p
                    else _most_frequent(position.vector) if isinstance(position, Slot)
                    else position.item
                    for q, position in enumerate(node.positions)
                )
                if items in seen or items in candidates or find_node(hierarchy, items) is not None:
                    continue

                score = math.sqrt(table.score(node.node_id) * _candidate_relevancy(table, item))
                candidates[items] = Hypothesis(
                    hypothesis_id=hypothesis_id_of(node.node_id, items),
                    template_id=node.node_id,
                    items=items,
                    injected_positions=frozenset({p}),
                    born_window=current_window,
                    score=score
                )

    ranked = sorted(candidates.values(), key=lambda h: (-h.score, h.template_id, h.items))[:config.budget]
    logger.info(f"[PROCESS] Synthesized {len(ranked)} hypotheses out of {len(candidates)} candidates")
    return ranked


def _admit_items(hierarchy: Hierarchy, hypothesis: Hypothesis) -> bool:
    template = hierarchy.nodes.get(hypothesis.template_id)
    if template is None or template.arity != hypothesis.arity:
        return False

    for position in sorted(hypothesis.injected_positions):
        if isinstance(template.positions[position], Slot):
            admit(hierarchy, template.node_id, position, hypothesis.items[position])
    return True


def check(
    hypotheses: Sequence[Hypothesis],
    instances: Iterable[StructureInstance],
    hierarchy: Optional[Hierarchy] = None,
    config: Optional[HypothesisConfig] = None
) -> Sequence[Hypothesis]:
    """
    Compares incoming structures with the live hypotheses

    An exact match confirms the hypothesis and admits its injected items into the template's slots,
    a near miss (0 < distance <= threshold) is appended to the distance history. Instances of another
    arity or older than the hypothesis are ignored

    Parameters
    ----------
    hypotheses : Sequence[Hypothesis]
        Updated in place

    instances : Iterable[StructureInstance]
        Incoming structures, consumed in timestamp order

    hierarchy : Hierarchy, optional
        Receives the admitted knowledge of confirmed hypotheses

    config : HypothesisConfig, optional
        Defaults are used If None
    """
    config = config or HypothesisConfig()
    logger = get_logger(__name__, "PROD", False)

    for instance in sorted(instances, key=instance_order):
        for hypothesis in hypotheses:
            if not hypothesis.is_live or hypothesis.arity != instance.arity or instance.timestamp < hypothesis.born_window:
                continue

            positions = mismatches(hypothesis.items, instance.items)
            if not positions:
                transition(hypothesis, CONFIRMED)
                if hierarchy is not None and not _admit_items(hierarchy, hypothesis):
                    logger.warning(f"[WARNING] Template {hypothesis.template_id} of confirmed hypothesis {hypothesis.hypothesis_id} is not in the hierarchy, knowledge was not admitted")
                logger.info(f"[PROCESS] Hypothesis {hypothesis.hypothesis_id} confirmed at window {instance.timestamp}")
            elif len(positions) <= config.threshold:
                observed = tuple((position, instance.items[position]) for position in positions)
                hypothesis.history.append((instance.timestamp, len(positions), observed))

    return hypotheses


def correct(
    hypothesis: Hypothesis,
    config: Optional[HypothesisConfig] = None,
    hierarchy: Optional[Hierarchy] = None,
    current_window: Optional[int] = None
) -> Hypothesis:
    """
    Creates a corrected successor from consistent near misses

    Only mismatches at slot positions of the template are considered. The majority position (ties to the
    smallest) needs at least config.quorum near misses, its majority observed item (ties to the smallest)
    replaces the item of the hypothesis

    Returns
    -------
    Hypothesis
        The successor, Proposed with an empty history, the predecessor becomes Superseded

    Raises
    ------
    NoQuorum
        No slot position gathered config.quorum near misses
    KnownStatement
        The corrected statement is a leaf of the hierarchy, the predecessor stays Proposed
    """
    config = config or HypothesisConfig()
    logger = get_logger(__name__, "PROD", False)

    if not hypothesis.is_live:
        error_msg = f"Only Proposed hypotheses can be corrected, {hypothesis.hypothesis_id} is {hypothesis.state}"
        logger.error(error_msg)
        raise HypothesisError(error_msg)

    template: Optional[TemplateNode] = hierarchy.nodes.get(hypothesis.template_id) if hierarchy is not None else None
    slot_positions = set(template.slot_positions()) if template is not None else set(range(hypothesis.arity))

    position_votes: Counter = Counter()
    for _, _, observed in hypothesis.history:
        position_votes.update({position for position, _ in observed if position in slot_positions})

    if not position_votes:
        error_msg = f"Hypothesis {hypothesis.hypothesis_id} has no near miss at a slot position"
        logger.error(error_msg)
        raise NoQuorum(error_msg)

    majority_position = min(position_votes, key=lambda position: (-position_votes[position], position))
    if position_votes[majority_position] < config.quorum:
        error_msg = f"Position {majority_position} of hypothesis {hypothesis.hypothesis_id} has {position_votes[majority_position]} near misses, the quorum is {config.quorum}"
        logger.error(error_msg)
        raise NoQuorum(error_msg)

    value_votes: Counter = Counter(
        item for _, _, observed in hypothesis.history for position, item in observed if position == majority_position
    )
    majority_value = min(value_votes, key=lambda item: (-value_votes[item], item))

    items = tuple(majority_value if q == majority_position else item for q, item in enumerate(hypothesis.items))
    if hierarchy is not None and find_node(hierarchy, items) is not None:
        error_msg = f"The correction {items} of hypothesis {hypothesis.hypothesis_id} was already observed, it is no hypothesis"
        logger.error(error_msg)
        raise KnownStatement(error_msg)

    if template is not None:
        injected = frozenset(
            q for q in template.slot_positions() if items[q] not in template.positions[q].vector
        )
    else:
        injected = frozenset(hypothesis.injected_positions)

    born = current_window if current_window is not None else max(entry[0] for entry in hypothesis.history)
    successor = Hypothesis(
        hypothesis_id=hypothesis_id_of(hypothesis.template_id, items),
        template_id=hypothesis.template_id,
        items=items,
        injected_positions=injected,
        born_window=born,
        score=hypothesis.score
    )

    transition(hypothesis, SUPERSEDED)
    hypothesis.successor_id = successor.hypothesis_id
    logger.info(f"[PROCESS] Hypothesis {hypothesis.hypothesis_id} superseded by {successor.hypothesis_id}")
    return successor


def correct_all(
    hypotheses: List[Hypothesis],
    config: Optional[HypothesisConfig] = None,
    hierarchy: Optional[Hierarchy] = None,
    current_window: Optional[int] = None
) -> List[Hypothesis]:
    """
    Corrects every live hypothesis that reached the quorum and returns the new successors
    """
    known = {hypothesis.items: hypothesis.hypothesis_id for hypothesis in hypotheses}
    successors = []
    for hypothesis in list(hypotheses):
        if not hypothesis.is_live:
            continue
        try:
            successor = correct(hypothesis, config, hierarchy, current_window)
        except (NoQuorum, KnownStatement):
            continue
        if successor.items not in known:
            known[successor.items] = successor.hypothesis_id
            successors.append(successor)
        else:
            # an equal statement already exists and plays the successor role
            hypothesis.successor_id = known[successor.items]

    hypotheses.extend(successors)
    return successors


def lifecycle_scan(
    hypotheses: Sequence[Hypothesis],
    current_window: int,
    config: Optional[HypothesisConfig] = None
) -> Sequence[Hypothesis]:
    """
    Rejects fluctuating and timed out hypotheses

    * Fluctuation: the last fluctuation_window distances never go strictly below the minimum reached before them
    * Timeout: no near miss at all and more than ttl windows since the hypothesis was born
    """
    config = config or HypothesisConfig()
    logger = get_logger(__name__, "PROD", False)
    w = config.fluctuation_window

    for hypothesis in hypotheses:
        if not hypothesis.is_live:
            continue

        distances = [distance for _, distance, _ in hypothesis.history]
        if len(distances) >= w and min(distances[len(distances) - w + 1:]) >= min(distances[:len(distances) - w + 1]):
            transition(hypothesis, REJECTED)
            logger.info(f"[PROCESS] Hypothesis {hypothesis.hypothesis_id} rejected, distances fluctuate around {min(distances)}")
        elif not distances and current_window - hypothesis.born_window > config.ttl:
            transition(hypothesis, REJECTED)
            logger.info(f"[PROCESS] Hypothesis {hypothesis.hypothesis_id} rejected, no observation within {config.ttl} windows")

    return hypotheses


def readmit(hierarchy: Hierarchy, hypotheses: Iterable[Hypothesis]) -> int:
    """
    Admits the items of confirmed hypotheses into a rebuilt hierarchy, returns how many were admitted
    """
    return sum(_admit_items(hierarchy, hypothesis) for hypothesis in hypotheses if hypothesis.state == CONFIRMED)


def advance(
    hypotheses: List[Hypothesis],
    instances: Iterable[StructureInstance],
    hierarchy: Hierarchy,
    table: RelevancyTable,
    config: Optional[HypothesisConfig] = None,
    current_window: int = 0,
    focus: Optional[Set[str]] = None,
    knowledge: Optional[Hierarchy] = None
) -> List[Hypothesis]:
    """
    Runs one hypothesis cycle over the instances that arrived since the previous cycle

    The hypotheses of earlier cycles are checked, corrected where a quorum exists and scanned for
    rejection. New ones are synthesized last, so a hypothesis never meets the data it was made from

    Parameters
    ----------
    hypotheses : list[Hypothesis]
        Every hypothesis so far, extended in place with successors and new hypotheses

    instances : Iterable[StructureInstance]
        Only the instances not seen by an earlier cycle

    hierarchy : Hierarchy
        Receives admitted knowledge and decides which corrections are already observed

    table : RelevancyTable
        Schedules the templates of the synthesis

    knowledge : Hierarchy, optional
        Hierarchy to synthesize from, hierarchy is used If None

    Returns
    -------
    list[Hypothesis]
        Hypotheses confirmed by this cycle
    """
    config = config or HypothesisConfig()
    logger = get_logger(__name__, "PROD", False)
    confirmed_before = {hypothesis.hypothesis_id for hypothesis in hypotheses if hypothesis.state == CONFIRMED}

    check(hypotheses, instances, hierarchy, config)
    correct_all(hypotheses, config, hierarchy, current_window)
    lifecycle_scan(hypotheses, current_window, config)

    try:
        source = knowledge if knowledge is not None else hierarchy
        hypotheses.extend(synthesize(source, table, config, hypotheses, current_window, focus))
    except NoTemplates:
        logger.warning("[WARNING] No template to synthesize from, only the existing hypotheses were checked")

    return [
        hypothesis for hypothesis in hypotheses
        if hypothesis.state == CONFIRMED and hypothesis.hypothesis_id not in confirmed_before
    ]


def admissions_of(hypotheses: Iterable[Hypothesis]) -> List[Tuple[str, int, str]]:
    """
    (template_id, position, item) of every injected item of confirmed hypotheses
    """
    return [
        (hypothesis.template_id, position, hypothesis.items[position])
        for hypothesis in hypotheses if hypothesis.state == CONFIRMED
        for position in sorted(hypothesis.injected_positions)
    ]


def _render_history(history: Sequence[HistoryEntry]) -> str:
    if not history:
        return "-"
    return "|".join(
        f"{window}:{distance}:" + ";".join(f"{position}={item}" for position, item in observed)
        for window, distance, observed in history
    )


def _parse_history(text: str) -> List[HistoryEntry]:
    if text == "-":
        return []
    history = []
    for entry in text.split("|"):
        window, distance, observed = entry.split(":", 2)
        pairs = tuple(
            (int(position), item)
            for position, item in (pair.split("=", 1) for pair in observed.split(";") if pair)
        )
        history.append((int(window), int(distance), pairs))
    return history


def log_line(hypothesis: Hypothesis) -> str:
    """
    id, template, items ('*' marks injected items), state, born_window, history, score, successor_id
    """
    items = ",".join(
        f"*{item}" if position in hypothesis.injected_positions else item
        for position, item in enumerate(hypothesis.items)
    )
    return tsv_line(
        hypothesis.hypothesis_id,
        hypothesis.template_id,
        items,
        hypothesis.state,
        hypothesis.born_window,
        _render_history(hypothesis.history),
        format_score(hypothesis.score),
        hypothesis.successor_id or "-"
    )


def export_log(hypotheses: Iterable[Hypothesis]) -> List[str]:
    return [log_line(hypothesis) for hypothesis in hypotheses]


def parse_log_line(line: str) -> Hypothesis:
    fields = line.split("\t")
    if len(fields) != 8:
        error_msg = f"Corrupt hypothesis log line, expected 8 fields, got {len(fields)}: {line!r}"
        get_logger(__name__, "PROD", False).error(error_msg)
        raise HypothesisError(error_msg)

    hypothesis_id, template_id, raw_items, state, born_window, history, score, successor_id = fields
    raw = raw_items.split(",")
    return Hypothesis(
        hypothesis_id=hypothesis_id,
        template_id=template_id,
        items=tuple(item.lstrip("*") for item in raw),
        injected_positions=frozenset(p for p, item in enumerate(raw) if item.startswith("*")),
        born_window=int(born_window),
        score=float(score),
        state=state,
        history=_parse_history(history),
        successor_id=None if successor_id == "-" else successor_id
    )


def load_log(path: str) -> List[Hypothesis]:
    """
    Replays an append-only log, the last line of every hypothesis_id is its current state
    """
    latest: Dict[str, Hypothesis] = {}
    for line in read_lines(path):
        hypothesis = parse_log_line(line)
        latest[hypothesis.hypothesis_id] = hypothesis

    return list(latest.values())
