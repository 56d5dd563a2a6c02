import random
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, replace
from functools import reduce
from typing import Any, Deque, Dict, FrozenSet, List, Optional, Sequence, Set, Tuple
import numpy as np
from tqdm import tqdm
from cognistream.config import MESSAGE_KINDS
from cognistream.exceptions import CognistreamError, DpuError, OwnershipConflict
from cognistream.logger import get_logger
from cognistream.stream_store import StreamStore
from cognistream.structures import StructureGroup, StructureInstance, StructureKey, merge_groups
from cognistream._miner import Pattern
from cognistream._generalizer import Hierarchy, Slot, admit, build_hierarchy
from cognistream._relevancy import RelevancyTable
from cognistream._hypotheses import Hypothesis, advance, admissions_of, readmit
from cognistream._query_planner import plan, run_queries
from cognistream.pipeline import RunConfig, CognitionState, run_cognition, subject_window_counts
from cognistream.dpu.topology import Topology

# flooded through the topology, every other kind goes straight to its target
FLOOD_KINDS = frozenset({"MineRequest", "DictSync", "TemplateSync", "Query", "ConfirmSync"})

# (global segment_id, global offset, items)
ResultRow = Tuple[int, int, Tuple[str, ...]]


@dataclass(frozen=True)
class UnitMessage:
    """
    A message between processing units

    Parameters
    ----------
    message_id : str
        Seed-determined id, forwarded copies keep it

    kind : str
        One of Ingest, MineRequest, DictSync, TemplateSync, Query, QueryResult, ConfirmSync

    payload : dict
        Kind specific content

    ttl : int
        Remaining hops, strictly decreasing on every forward

    visited : frozenset[int]
        Units that already received or sent the message, never forwarded to again

    origin : int
        Unit that created the message

    sender : int
        Unit the copy came from
    """
    message_id: str
    kind: str
    payload: Dict[str, Any]
    ttl: int
    visited: FrozenSet[int]
    origin: int
    sender: int


def route(message: UnitMessage, from_unit: int, topology: Topology) -> List[Tuple[int, UnitMessage]]:
    """
    Forwards a flooded message to the unvisited neighbors of from_unit

    Returns
    -------
    list[tuple]
        (recipient, copy) pairs with ttl - 1 and visited extended by the sender and all recipients,
        empty when the ttl is exhausted or every neighbor was visited
    """
    if message.ttl <= 0:
        return []

    recipients = [unit for unit in topology.neighbors(from_unit) if unit not in message.visited]
    if not recipients:
        return []

    visited = message.visited | {from_unit} | set(recipients)
    copy = replace(message, ttl=message.ttl - 1, visited=frozenset(visited), sender=from_unit)
    return [(recipient, copy) for recipient in recipients]


def reach(topology: Topology, origin: int, ttl: Optional[int] = None) -> Set[int]:
    """
    Units a flooded message from origin is delivered to, the origin itself excluded
    """
    ttl = topology.default_ttl if ttl is None else ttl
    start = UnitMessage("reach", "Query", {}, ttl, frozenset({origin}), origin, origin)

    delivered: Set[int] = set()
    handled = {origin}
    frontier = route(start, origin, topology)
    while frontier:
        next_frontier = []
        for recipient, message in frontier:
            delivered.add(recipient)
            if recipient not in handled:
                handled.add(recipient)
                next_frontier.extend(route(message, recipient, topology))
        frontier = next_frontier

    return delivered


def sync_dictionaries(a: Dict[str, Pattern], b: Dict[str, Pattern]) -> Dict[str, Pattern]:
    """
    Union of two dictionaries by pattern_id, counts add, first_seen takes the min and last_seen the max

    Commutative and associative with the empty dictionary as identity
    """
    merged = dict(a)
    for pattern_id, pattern in b.items():
        if pattern_id in merged:
            mine = merged[pattern_id]
            merged[pattern_id] = Pattern(
                pattern_id,
                mine.data,
                mine.count + pattern.count,
                min(mine.first_seen, pattern.first_seen),
                max(mine.last_seen, pattern.last_seen)
            )
        else:
            merged[pattern_id] = pattern

    return {pattern_id: merged[pattern_id] for pattern_id in sorted(merged)}


class Unit:
    """
    A processing unit owning a disjoint part of the stream

    The unit runs the cognition pass and the hypothesis cycle on its own segments only. Knowledge
    received from peers is kept apart in remote_dictionaries / remote_groups / remote_admissions and
    never mixed into the owned structures. Peer leaf groups only widen the hierarchy hypotheses are
    synthesized from

    Parameters
    ----------
    unit_id : int
        Position of the unit in the topology

    owned_segments : set[int]
        Global segment ids this unit is the single writer of

    config : RunConfig, optional
        Pipeline configuration, defaults are used If None
    """
    def __init__(self, unit_id: int, owned_segments: Set[int], config: Optional[RunConfig] = None):
        self.unit_id = unit_id
        self.owned_segments = set(owned_segments)
        self.config = config or RunConfig()

        self.store = StreamStore()
        self.global_ids: List[int] = []
        self.global_bases: Dict[int, int] = {}
        self.state: Optional[CognitionState] = None
        self.table = RelevancyTable(self.config.relevancy)

        self.remote_dictionaries: Dict[int, Dict[str, Pattern]] = {}
        self.remote_groups: Dict[int, Dict[StructureKey, StructureGroup]] = {}
        self.remote_admissions: List[Tuple[str, int, str]] = []
        self.query_results: Dict[str, Set[ResultRow]] = defaultdict(set)

        self.hypotheses: List[Hypothesis] = []
        self.checked_offset = 0

        self.mailbox: Deque[UnitMessage] = deque()
        self.seen: Set[str] = set()

    def __repr__(self):
        return f"Unit(unit_id={self.unit_id}, owned={sorted(self.owned_segments)}, stored={len(self.store)})"

    @property
    def dictionary(self) -> Dict[str, Pattern]:
        return self.state.dictionary if self.state is not None else {}

    @property
    def groups(self) -> Dict[StructureKey, StructureGroup]:
        """
        Own deduped structures with instance origins in global stream coordinates
        """
        if self.state is None:
            return {}
        return {
            key: StructureGroup(group.count, [self.globalize(instance) for instance in group.instances])
            for key, group in self.state.groups.items()
        }

    @property
    def hierarchy(self) -> Hierarchy:
        return self.state.hierarchy if self.state is not None else Hierarchy()

    def merged_dictionary(self) -> Dict[str, Pattern]:
        """
        Own dictionary synced with every peer dictionary received so far, in unit order
        """
        dictionaries = [self.dictionary] + [self.remote_dictionaries[unit] for unit in sorted(self.remote_dictionaries)]
        return reduce(sync_dictionaries, dictionaries, {})

    def globalize(self, instance: StructureInstance) -> StructureInstance:
        local_segment, local_offset = instance.origin
        local_base = sum(len(segment.data) for segment in self.store.segments()[:local_segment])
        global_id = self.global_ids[local_segment]
        return replace(instance, origin=(global_id, self.global_bases[global_id] + local_offset - local_base))

    def ingest(self, segment_id: int, data: bytes, timestamp: int, source_tag: str, offset: int) -> bool:
        """
        Appends a segment this unit owns, returns False for a segment of another owner
        """
        if segment_id not in self.owned_segments:
            return False

        self.store.append(data, timestamp, source_tag)
        self.global_ids.append(segment_id)
        self.global_bases[segment_id] = offset
        self.state = None
        return True

    def mine(self) -> CognitionState:
        """
        Reruns the cognition pass, then re-admits own and received confirmations into the new hierarchy
        """
        self.state = run_cognition(self.store.segments(), self.config)
        counts = subject_window_counts(self.state)
        for window in range(self.table.processed_window + 1, self.state.last_window + 1):
            self.table.update_window(window, counts.get(window, {}))

        readmit(self.state.hierarchy, self.hypotheses)
        self.admit_all(self.remote_admissions)
        return self.state

    def knowledge(self) -> Hierarchy:
        """
        Own hierarchy when no peer structures arrived yet, else a hierarchy over own and peer leaf groups
        """
        if not self.remote_groups:
            return self.hierarchy
        peers = [self.remote_groups[unit] for unit in sorted(self.remote_groups)]
        return build_hierarchy(merge_groups(self.groups, *peers))

    def hypothesize(self) -> List[Tuple[str, int, str]]:
        """
        Runs the hypothesis cycle on the own structures appended since the previous cycle

        Returns
        -------
        list[tuple]
            (template_id, position, item) admissions of the hypotheses this cycle confirmed
        """
        if self.state is None:
            return []

        unchecked = [instance for instance in self.state.instances if instance.origin[1] >= self.checked_offset]
        confirmed = advance(
            self.hypotheses,
            unchecked,
            self.hierarchy,
            self.table,
            self.config.hypothesis,
            max(self.state.last_window, 0),
            knowledge=self.knowledge()
        )
        self.checked_offset = self.state.total_bytes
        return admissions_of(confirmed)

    def answer(self, query_id: str, keywords: Sequence[bytes], broaden: bool = False) -> List[ResultRow]:
        """
        Answers a query on the owned part of the stream, keywords resolve against the merged dictionary
        """
        if self.state is None:
            return []

        query = plan(query_id, keywords, self.merged_dictionary(), self.hierarchy, max(self.state.last_window, 0), broaden)
        results = run_queries([query], self.hierarchy, self.table)[query_id]
        if results:
            self.table.register(sorted(query.resolved))
            for pattern_id in sorted(query.resolved):
                self.table.query_boost(pattern_id)

        rows = []
        for instance in results:
            instance = self.globalize(instance)
            rows.append((instance.origin[0], instance.origin[1], instance.items))
        return rows

    def receive_admissions(self, admissions: Sequence[Tuple[str, int, str]]) -> int:
        """
        Keeps peer confirmations for later hierarchy rebuilds and admits them into the current one
        """
        self.remote_admissions.extend(tuple(admission) for admission in admissions)
        return self.admit_all(admissions)

    def admit_all(self, admissions: Sequence[Tuple[str, int, str]]) -> int:
        """
        Admits confirmed items into the own hierarchy where the template and its slot exist
        """
        admitted = 0
        for template_id, position, item in admissions:
            node = self.hierarchy.nodes.get(template_id)
            if node is not None and 0 <= position < node.arity and isinstance(node.positions[position], Slot):
                admit(self.hierarchy, template_id, position, item)
                admitted += 1
        return admitted


class World:
    """
    Deterministic round-based simulation of the unit matrix

    Messages produced in a round are delivered at the start of the next one. Units are processed
    in unit_id order, each draining its mailbox first in first out. A flooded message is handled
    and forwarded at most once per unit

    Parameters
    ----------
    units : list[Unit]
        Units indexed by unit_id

    topology : Topology
        Wiring, the unit count has to match

    seed : int, (default=0)
        Seed of the message id generator

    logging_to_file: bool, (default=False)
        If True, the logs will be saved to /logs/cognistream_logs.log as well
    """
    def __init__(self, units: List[Unit], topology: Topology, seed: int = 0, logging_to_file: bool = False):
        self.__logger = get_logger(__name__, "PROD", logging_to_file)
        if len(units) != topology.units:
            error_msg = f"The topology wires {topology.units} units but {len(units)} were given"
            self.__logger.error(error_msg)
            raise DpuError(error_msg)

        self.units = units
        self.topology = topology
        self.seed = seed
        self.round = 0
        self.pending: List[Tuple[int, UnitMessage]] = []
        self.transcript: List[str] = []
        self.deliveries: Counter = Counter()
        self._rng = random.Random(seed)

    def __repr__(self):
        return f"World(units={len(self.units)}, shape={self.topology.shape}, round={self.round}, pending={len(self.pending)})"

    @property
    def idle(self) -> bool:
        return not self.pending

    def __record(self, unit_id: int, event: str, detail: str):
        self.transcript.append(f"{self.round}\tu{unit_id}\t{event}\t{detail}")

    def __new_id(self) -> str:
        return f"{self._rng.getrandbits(32):08x}"

    def inject(
        self,
        kind: str,
        payload: Dict[str, Any],
        origin: int,
        target: Optional[int] = None,
        ttl: Optional[int] = None
    ) -> UnitMessage:
        """
        Queues a new message for delivery at the start of the next round

        Parameters
        ----------
        kind : str
            Message kind

        payload : dict
            Kind specific content

        origin : int
            Creating unit, flooded kinds are delivered to it first

        target : int, optional
            Recipient of a direct message, the origin If None

        ttl : int, optional
            Hop budget, topology.default_ttl If None
        """
        if kind not in MESSAGE_KINDS:
            error_msg = f"{kind} is not a valid message kind, expected one of the following: {MESSAGE_KINDS}"
            self.__logger.error(error_msg)
            raise DpuError(error_msg)

        ttl = self.topology.default_ttl if ttl is None else ttl
        message = UnitMessage(self.__new_id(), kind, payload, ttl, frozenset({origin}), origin, origin)
        self.pending.append((origin if target is None else target, message))
        return message

    def step(self) -> "World":
        """
        Runs one round, an idle world stays unchanged
        """
        if self.idle:
            return self

        self.round += 1
        deliveries, self.pending = self.pending, []
        for target, message in deliveries:
            self.units[target].mailbox.append(message)
            self.deliveries[message.kind] += 1

        for unit in sorted(self.units, key=lambda u: u.unit_id):
            while unit.mailbox:
                self.__handle(unit, unit.mailbox.popleft())

        return self

    def run(self, rounds: int, progress: bool = False) -> "World":
        """
        Runs up to rounds rounds, stops early once no message is in flight
        """
        with tqdm(total=rounds, desc="INFO | DPU Rounds", bar_format="{desc}:  | {bar} | {percentage:.0f}%", disable=not progress) as pbar:
            for _ in range(rounds):
                if self.idle:
                    break
                self.step()
                pbar.update(1)

        self.__logger.info(f"[PROCESS] Simulation stopped at round {self.round} with {len(self.pending)} messages in flight")
        return self

    def __handle(self, unit: Unit, message: UnitMessage):
        if message.kind in FLOOD_KINDS:
            if message.message_id in unit.seen:
                self.__record(unit.unit_id, "duplicate", f"msg={message.message_id} kind={message.kind}")
                return
            unit.seen.add(message.message_id)

        try:
            getattr(self, f"_World__on_{message.kind}")(unit, message)
        except CognistreamError as e:
            self.__record(unit.unit_id, "error", f"msg={message.message_id} {e.describe()}")

        if message.kind in FLOOD_KINDS:
            forwarded = route(message, unit.unit_id, self.topology)
            if forwarded:
                recipients = ",".join(f"u{recipient}" for recipient, _ in forwarded)
                self.__record(unit.unit_id, "forward", f"msg={message.message_id} kind={message.kind} ttl={message.ttl - 1} to={recipients}")
                self.pending.extend(forwarded)
            else:
                reason = "ttl" if message.ttl <= 0 else "visited"
                self.__record(unit.unit_id, "drop", f"msg={message.message_id} kind={message.kind} reason={reason}")

    def __reply(self, kind: str, payload: Dict[str, Any], sender: int, target: int):
        message = UnitMessage(self.__new_id(), kind, payload, 0, frozenset({sender}), sender, sender)
        self.pending.append((target, message))

    def __flood(self, kind: str, payload: Dict[str, Any], origin: int):
        message = UnitMessage(self.__new_id(), kind, payload, self.topology.default_ttl, frozenset({origin}), origin, origin)
        self.pending.extend(route(message, origin, self.topology))

    def __on_Ingest(self, unit: Unit, message: UnitMessage):
        payload = message.payload
        if not unit.ingest(payload["segment_id"], payload["data"], payload["timestamp"], payload.get("source_tag", ""), payload["offset"]):
            self.__record(unit.unit_id, "ownership-violation", f"msg={message.message_id} segment={payload['segment_id']}")
            return
        self.__record(unit.unit_id, "ingest", f"msg={message.message_id} segment={payload['segment_id']} bytes={len(payload['data'])}")

    def __on_MineRequest(self, unit: Unit, message: UnitMessage):
        state = unit.mine()
        self.__record(
            unit.unit_id, "mine",
            f"msg={message.message_id} patterns={len(state.dictionary)} leaves={len(state.hierarchy.leaves())} templates={len(state.hierarchy.templates())}"
        )
        self.__flood("DictSync", {"dictionary": dict(state.dictionary)}, unit.unit_id)
        self.__flood("TemplateSync", {"groups": unit.groups}, unit.unit_id)

        admissions = unit.hypothesize()
        if admissions:
            self.__record(unit.unit_id, "confirm", f"msg={message.message_id} admissions={len(admissions)}")
            self.__flood("ConfirmSync", {"admissions": admissions}, unit.unit_id)

    def __on_DictSync(self, unit: Unit, message: UnitMessage):
        if message.origin == unit.unit_id:
            return
        unit.remote_dictionaries[message.origin] = message.payload["dictionary"]
        self.__record(unit.unit_id, "dict-sync", f"msg={message.message_id} from=u{message.origin} patterns={len(message.payload['dictionary'])}")

    def __on_TemplateSync(self, unit: Unit, message: UnitMessage):
        if message.origin == unit.unit_id:
            return
        unit.remote_groups[message.origin] = message.payload["groups"]
        self.__record(unit.unit_id, "template-sync", f"msg={message.message_id} from=u{message.origin} leaves={len(message.payload['groups'])}")

    def __on_Query(self, unit: Unit, message: UnitMessage):
        payload = message.payload
        rows = unit.answer(payload["query_id"], payload["keywords"], payload.get("broaden", False))
        self.__record(unit.unit_id, "query", f"msg={message.message_id} query={payload['query_id']} results={len(rows)}")
        self.__reply("QueryResult", {"query_id": payload["query_id"], "results": rows}, unit.unit_id, message.origin)

    def __on_QueryResult(self, unit: Unit, message: UnitMessage):
        payload = message.payload
        unit.query_results[payload["query_id"]].update(payload["results"])
        self.__record(unit.unit_id, "query-result", f"msg={message.message_id} query={payload['query_id']} from=u{message.origin} results={len(payload['results'])}")

    def __on_ConfirmSync(self, unit: Unit, message: UnitMessage):
        admitted = unit.receive_admissions(message.payload["admissions"])
        self.__record(unit.unit_id, "confirm-sync", f"msg={message.message_id} from=u{message.origin} admitted={admitted}")

    def results(self, query_id: str, origin: int = 0) -> List[ResultRow]:
        """
        Results collected at the origin of a query, ordered by segment and offset
        """
        return sorted(self.units[origin].query_results.get(query_id, set()))

    def transcript_lines(self) -> List[str]:
        return list(self.transcript)


def contiguous_partition(segment_count: int, units: int) -> List[Set[int]]:
    return [set(int(i) for i in chunk) for chunk in np.array_split(np.arange(segment_count), units)]


def build_world(
    store: StreamStore,
    topology: Topology,
    partition: Optional[Sequence[Set[int]]] = None,
    config: Optional[RunConfig] = None,
    seed: Optional[int] = None,
    logging_to_file: bool = False
) -> World:
    """
    Builds a world whose units own disjoint parts of the store and queues one Ingest per segment to its owner

    Parameters
    ----------
    store : StreamStore
        Stream to distribute

    topology : Topology
        Wiring of the units

    partition : Sequence[set[int]], optional
        Owned segment ids per unit, contiguous blocks of segments If None

    config : RunConfig, optional
        Pipeline configuration of every unit

    seed : int, optional
        Message id seed, config.dpu_seed If None
    """
    logger = get_logger(__name__, "PROD", logging_to_file)
    config = config or RunConfig()
    segments = store.segments()
    partition = [set(block) for block in partition] if partition is not None else contiguous_partition(len(segments), topology.units)

    if len(partition) != topology.units:
        error_msg = f"The partition has {len(partition)} blocks for {topology.units} units"
        logger.error(error_msg)
        raise OwnershipConflict(error_msg)

    owners: Dict[int, int] = {}
    for unit_id, block in enumerate(partition):
        for segment_id in sorted(block):
            if segment_id in owners:
                error_msg = f"Segment {segment_id} is owned by both u{owners[segment_id]} and u{unit_id}, ownership must be disjoint"
                logger.error(error_msg)
                raise OwnershipConflict(error_msg)
            owners[segment_id] = unit_id

    if set(owners) != {segment.segment_id for segment in segments}:
        error_msg = f"The partition must cover exactly the {len(segments)} stored segments, got {sorted(owners)}"
        logger.error(error_msg)
        raise OwnershipConflict(error_msg)

    units = [Unit(unit_id, block, config) for unit_id, block in enumerate(partition)]
    world = World(units, topology, config.dpu_seed if seed is None else seed, logging_to_file)

    offset = 0
    for segment in segments:
        owner = owners[segment.segment_id]
        world.inject("Ingest", {
            "segment_id": segment.segment_id,
            "data": segment.data,
            "timestamp": segment.timestamp,
            "source_tag": segment.source_tag,
            "offset": offset
        }, origin=owner)
        offset += len(segment.data)

    logger.info(f"[PROCESS] Built a {topology.shape} world of {topology.units} units over {len(segments)} segments")
    return world


def global_view(world: World) -> Tuple[Dict[str, Pattern], Hierarchy]:
    """
    Folds the unit dictionaries in unit order and generalizes the union of all leaf structures
    """
    units = sorted(world.units, key=lambda unit: unit.unit_id)
    dictionary = reduce(sync_dictionaries, (unit.dictionary for unit in units), {})
    groups = merge_groups(*(unit.groups for unit in units))
    return dictionary, build_hierarchy(groups)
