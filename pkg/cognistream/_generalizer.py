import copy
import heapq
import itertools
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union
from cognistream.exceptions import ArityMismatch, NotMergeable, UnknownNode, BadPosition
from cognistream.helpers import content_hash, tsv_line
from cognistream.logger import get_logger
from cognistream.structures import StructureGroup, StructureInstance, StructureKey, instance_order


@dataclass(frozen=True)
class Literal:
    item: str


@dataclass
class Slot:
    """
    A generalized position, the keyword vector maps every admitted item to its count
    """
    vector: Dict[str, int] = field(default_factory=dict)

    def members(self) -> List[str]:
        return sorted(self.vector)

    def add(self, item: str, count: int = 1):
        self.vector[item] = self.vector.get(item, 0) + count


Position = Union[Literal, Slot]


@dataclass
class TemplateNode:
    """
    A node of the generalization hierarchy

    Level 0 nodes are the concrete structures (leaves) and keep their instance lists,
    every other node is a template where some positions became slots

    Parameters
    ----------
    node_id : str
        Content hash of the shape (literal items and sorted slot member sets), set at construction

    positions : list
        Literal or Slot per position

    support : int
        Total leaf instances matched by the node
    """
    node_id: str
    positions: List[Position]
    support: int
    children: List[str] = field(default_factory=list)
    parents: List[str] = field(default_factory=list)
    instances: List[StructureInstance] = field(default_factory=list)

    @property
    def arity(self) -> int:
        return len(self.positions)

    @property
    def level(self) -> int:
        return sum(isinstance(position, Slot) for position in self.positions)

    @property
    def is_leaf(self) -> bool:
        return self.level == 0

    @property
    def items(self) -> StructureKey:
        """
        Item tuple of a leaf
        """
        return tuple(position.item for position in self.positions)

    def slot_positions(self) -> List[int]:
        return [p for p, position in enumerate(self.positions) if isinstance(position, Slot)]

    def members(self) -> Set[str]:
        found = set()
        for position in self.positions:
            if isinstance(position, Slot):
                found.update(position.vector)
            else:
                found.add(position.item)
        return found

    def shape_key(self) -> Tuple[str, ...]:
        return tuple(_render_position(position, with_counts=False) for position in self.positions)


@dataclass
class Hierarchy:
    """
    The multi-level hierarchy of notions, a DAG of TemplateNode keyed by node_id
    """
    nodes: Dict[str, TemplateNode] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, node_id: str) -> bool:
        return node_id in self.nodes

    @property
    def roots(self) -> List[str]:
        return sorted(
            (node.node_id for node in self.nodes.values() if not node.parents),
            key=lambda node_id: (self.nodes[node_id].arity, node_id)
        )

    def get(self, node_id: str) -> TemplateNode:
        if node_id not in self.nodes:
            error_msg = f"Node {node_id} is not part of the hierarchy"
            get_logger(__name__, "PROD", False).error(error_msg)
            raise UnknownNode(error_msg)

        return self.nodes[node_id]

    def leaves(self) -> List[TemplateNode]:
        return [node for node in self.nodes.values() if node.is_leaf]

    def templates(self) -> List[TemplateNode]:
        return [node for node in self.nodes.values() if not node.is_leaf]

    def copy(self) -> "Hierarchy":
        return copy.deepcopy(self)


def _render_position(position: Position, with_counts: bool = True) -> str:
    if isinstance(position, Literal):
        return f"lit:{position.item}"
    if with_counts:
        return "slot:{" + ",".join(f"{item}:{position.vector[item]}" for item in position.members()) + "}"
    return "slot:{" + ",".join(position.members()) + "}"


def shape_id(positions: Sequence[Position]) -> str:
    return content_hash("|".join(_render_position(p, with_counts=False) for p in positions).encode("utf-8"))


def leaf_node(key: StructureKey, group: StructureGroup) -> TemplateNode:
    positions = [Literal(item) for item in key]
    return TemplateNode(
        node_id=shape_id(positions),
        positions=positions,
        support=group.count,
        instances=list(group.instances)
    )


def _check_arity(size_a: int, size_b: int):
    if size_a != size_b:
        error_msg = f"Cannot compare arity {size_a} with arity {size_b}"
        get_logger(__name__, "PROD", False).error(error_msg)
        raise ArityMismatch(error_msg)


def merge(u: TemplateNode, v: TemplateNode) -> TemplateNode:
    """
    Generalizes two equal-arity nodes into one template

    Mergeable iff at most one position holds two unequal literals. That position becomes a slot holding
    both literals with their supports. A literal facing a slot joins the slot's vector and two slots
    union their vectors with count addition

    Parameters
    ----------
    u : TemplateNode
        First node

    v : TemplateNode
        Second node, same arity as u

    Returns
    -------
    TemplateNode
        A new node with u and v as its children and no parents
    """
    _check_arity(u.arity, v.arity)

    disagreements = [
        p for p, (a, b) in enumerate(zip(u.positions, v.positions))
        if isinstance(a, Literal) and isinstance(b, Literal) and a.item != b.item
    ]
    if len(disagreements) > 1:
        error_msg = f"Nodes {u.node_id} and {v.node_id} disagree on {len(disagreements)} literal positions {disagreements}"
        raise NotMergeable(error_msg)

    positions: List[Position] = []
    for a, b in zip(u.positions, v.positions):
        if isinstance(a, Literal) and isinstance(b, Literal):
            if a.item == b.item:
                positions.append(a)
            else:
                positions.append(Slot({a.item: u.support, b.item: v.support}))
            continue

        slot = Slot()
        for side, node in ((a, u), (b, v)):
            if isinstance(side, Slot):
                for item, count in side.vector.items():
                    slot.add(item, count)
            else:
                slot.add(side.item, node.support)
        positions.append(slot)

    return TemplateNode(
        node_id=shape_id(positions),
        positions=positions,
        support=u.support + v.support,
        children=[u.node_id, v.node_id]
    )


def strict_match(node: TemplateNode, items: Sequence[str]) -> bool:
    """
    True iff every literal position equals the item and every slot vector contains it
    """
    _check_arity(node.arity, len(items))

    for position, item in zip(node.positions, items):
        if isinstance(position, Literal):
            if position.item != item:
                return False
        elif item not in position.vector:
            return False

    return True


def _link(hierarchy: Hierarchy, parent_id: str, child_id: str):
    parent, child = hierarchy.nodes[parent_id], hierarchy.nodes[child_id]
    if child_id not in parent.children:
        parent.children.append(child_id)
    if parent_id not in child.parents:
        child.parents.append(parent_id)


def _absorb(hierarchy: Hierarchy, target: TemplateNode, source: TemplateNode):
    """
    Moves the children of an outdated template to its generalized version and drops it
    """
    for child_id in source.children:
        child = hierarchy.nodes[child_id]
        child.parents = [parent for parent in child.parents if parent != source.node_id]
        _link(hierarchy, target.node_id, child_id)

    for parent_id in source.parents:
        parent = hierarchy.nodes[parent_id]
        parent.children = [child for child in parent.children if child != source.node_id]
        _link(hierarchy, parent_id, target.node_id)

    del hierarchy.nodes[source.node_id]


def _unify_vectors(target: TemplateNode, other: TemplateNode):
    for mine, theirs in zip(target.positions, other.positions):
        if isinstance(mine, Slot) and isinstance(theirs, Slot):
            for item, count in theirs.vector.items():
                mine.add(item, count)


def _insert_merge(hierarchy: Hierarchy, u: TemplateNode, v: TemplateNode, result: TemplateNode) -> TemplateNode:
    """
    Places a merge result into the hierarchy and returns the node that now stands for it

    An input with the result's level is an outdated version of the result and is replaced,
    a result whose shape already exists unifies with the existing node
    """
    inputs = [u, v]
    result.children = []

    existing = hierarchy.nodes.get(result.node_id)
    if existing is not None and result.node_id not in (u.node_id, v.node_id):
        _unify_vectors(existing, result)
        result = existing
    else:
        for node in inputs:
            if node.node_id == result.node_id:
                del hierarchy.nodes[node.node_id]
                node_children = list(node.children)
                for child_id in node_children:
                    hierarchy.nodes[child_id].parents.remove(node.node_id)
                node.children = []
                result.children.extend(child for child in node_children if child not in result.children)
        hierarchy.nodes[result.node_id] = result
        for child_id in result.children:
            hierarchy.nodes[child_id].parents.append(result.node_id)

    for node in inputs:
        if node.node_id == result.node_id:
            continue
        if node.level == result.level:
            _absorb(hierarchy, result, node)
        else:
            _link(hierarchy, result.node_id, node.node_id)

    return result


def _frontier_order(node: TemplateNode):
    return (-node.support, node.shape_key())


def _mergeable(u: TemplateNode, v: TemplateNode) -> bool:
    disagreements = 0
    for a, b in zip(u.positions, v.positions):
        if isinstance(a, Literal) and isinstance(b, Literal) and a.item != b.item:
            disagreements += 1
            if disagreements > 1:
                return False
    return True


class _LeafIndex:
    """
    Finds the first mergeable leaf of a frontier node without comparing it to every leaf

    A leaf is mergeable with a node iff it agrees with the node's literals on all but at most one position,
    so leaves are bucketed by their items with one compared position masked. Buckets keep the frontier
    order and are built the first time a set of compared positions is asked for
    """
    def __init__(self, leaves: List[TemplateNode]):
        self.ordered = sorted(leaves, key=_frontier_order)
        self.buckets: Dict[Tuple[Tuple[int, ...], int], Dict[Tuple[str, ...], List[TemplateNode]]] = {}
        self.cursors: Dict[tuple, int] = {}

    def _bucket(self, compared: Tuple[int, ...], masked: int) -> Dict[Tuple[str, ...], List[TemplateNode]]:
        if (compared, masked) not in self.buckets:
            table = defaultdict(list)
            for leaf in self.ordered:
                table[_masked_items(leaf, compared, masked)].append(leaf)
            self.buckets[(compared, masked)] = table
        return self.buckets[(compared, masked)]

    def _first_alive(self, cursor_key: tuple, entries: List[TemplateNode], alive: Dict[str, TemplateNode], exclude: TemplateNode) -> Optional[TemplateNode]:
        # leaves never come back to the frontier, so the cursor only moves forward
        start = self.cursors.get(cursor_key, 0)
        while start < len(entries) and entries[start].node_id not in alive:
            start += 1
        self.cursors[cursor_key] = start

        for leaf in entries[start:]:
            if leaf is not exclude and leaf.node_id in alive:
                return leaf
        return None

    def first_partners(self, node: TemplateNode, alive: Dict[str, TemplateNode]) -> List[TemplateNode]:
        compared = tuple(p for p, position in enumerate(node.positions) if isinstance(position, Literal))
        if len(compared) <= 1:
            found = [self._first_alive(("all",), self.ordered, alive, node)]
        else:
            found = []
            for masked in compared:
                items = _masked_items(node, compared, masked)
                entries = self._bucket(compared, masked).get(items, [])
                found.append(self._first_alive((compared, masked, items), entries, alive, node))
        return [leaf for leaf in found if leaf is not None]


def _masked_items(node: TemplateNode, compared: Tuple[int, ...], masked: int) -> Tuple[str, ...]:
    return tuple(node.positions[p].item for p in compared if p != masked)


def _generalize_arity(hierarchy: Hierarchy, frontier: List[TemplateNode]):
    """
    Merges the first mergeable pair of the canonically ordered frontier until a fixpoint is reached

    Pairs are ranked by the frontier order of their earlier node, then of their later node. The heap
    keeps one entry per frontier node, pairing it with its earliest mergeable partner. An entry whose
    partner has left the frontier is recomputed when it surfaces, and a node placed later carries the
    pairs it forms with older nodes in its own entry

    Every merge removes two frontier nodes and adds at most one, so the loop terminates
    """
    alive: Dict[str, TemplateNode] = {node.node_id: node for node in frontier}
    templates: Dict[str, TemplateNode] = {node.node_id: node for node in frontier if not node.is_leaf}
    leaves = _LeafIndex([node for node in frontier if node.is_leaf])
    heap: list = []
    tiebreak = itertools.count()

    def push_first_pair(node: TemplateNode):
        partners = leaves.first_partners(node, alive)
        partners.extend(other for other in templates.values() if other is not node and _mergeable(node, other))
        if not partners:
            return
        partner = min(partners, key=_frontier_order)
        first, second = sorted((node, partner), key=_frontier_order)
        heapq.heappush(heap, (_frontier_order(first), _frontier_order(second), next(tiebreak), node, partner))

    for node in frontier:
        push_first_pair(node)

    while heap:
        *_, owner, partner = heapq.heappop(heap)
        if alive.get(owner.node_id) is not owner:
            continue
        if alive.get(partner.node_id) is not partner:
            push_first_pair(owner)
            continue

        u, v = sorted((owner, partner), key=_frontier_order)
        result = merge(u, v)
        for node in (u, v):
            del alive[node.node_id]
            templates.pop(node.node_id, None)

        placed = _insert_merge(hierarchy, u, v, result)
        if not placed.parents and placed.node_id not in alive:
            alive[placed.node_id] = placed
            templates[placed.node_id] = placed
            push_first_pair(placed)

    frontier[:] = sorted(alive.values(), key=_frontier_order)


def _finalize(hierarchy: Hierarchy):
    """
    Links every template to each leaf it matches but does not reach yet, then rebuilds
    slot vectors and support from the matched leaves
    """
    leaves_by_arity: Dict[int, List[TemplateNode]] = defaultdict(list)
    for leaf in hierarchy.leaves():
        leaves_by_arity[leaf.arity].append(leaf)

    for node in sorted(hierarchy.templates(), key=lambda n: n.node_id):
        reached = {leaf.node_id for leaf in _leaf_nodes_under(hierarchy, node.node_id)}
        matched = [leaf for leaf in leaves_by_arity[node.arity] if strict_match(node, leaf.items)]

        for leaf in matched:
            if leaf.node_id not in reached:
                _link(hierarchy, node.node_id, leaf.node_id)

        for p in node.slot_positions():
            vector: Counter = Counter()
            for leaf in matched:
                vector[leaf.items[p]] += leaf.support
            node.positions[p] = Slot(dict(vector))
        node.support = sum(leaf.support for leaf in matched)

    for node in hierarchy.nodes.values():
        node.children.sort()
        node.parents.sort()


def build_hierarchy(groups: Dict[StructureKey, StructureGroup], logging_to_file: bool = False) -> Hierarchy:
    """
    Builds the multi-level hierarchy of notions from deduped structures

    Each arity class is generalized independently: the worklist is ordered by support
    descending then by shape, and the first mergeable pair is merged until no pair is left

    Parameters
    ----------
    groups : dict
        StructureKey -> StructureGroup, as returned by structures.dedupe()

    logging_to_file: bool, (default=False)
        If True, the logs will be saved to /logs/cognistream_logs.log as well

    Returns
    -------
    Hierarchy
        Leaves keep their instance lists, roots are the parentless nodes
    """
    logger = get_logger(__name__, "PROD", logging_to_file)
    hierarchy = Hierarchy()
    frontiers: Dict[int, List[TemplateNode]] = defaultdict(list)

    for key, group in groups.items():
        leaf = leaf_node(key, group)
        hierarchy.nodes[leaf.node_id] = leaf
        frontiers[leaf.arity].append(leaf)

    for arity in sorted(frontiers):
        _generalize_arity(hierarchy, frontiers[arity])

    _finalize(hierarchy)

    logger.info(f"[PROCESS] Built a hierarchy of {len(hierarchy)} nodes ({len(hierarchy.leaves())} leaves, {len(hierarchy.roots)} roots)")
    return hierarchy


def _leaf_nodes_under(hierarchy: Hierarchy, node_id: str) -> List[TemplateNode]:
    seen, stack, leaves = set(), [node_id], []
    while stack:
        current = stack.pop()
        if current in seen:
            continue
        seen.add(current)
        node = hierarchy.nodes[current]
        if node.is_leaf:
            leaves.append(node)
        stack.extend(node.children)

    return sorted(leaves, key=lambda leaf: leaf.node_id)


def leaves_under(hierarchy: Hierarchy, node_id: str) -> List[TemplateNode]:
    """
    Leaf nodes reachable from node_id, the node itself when it is a leaf
    """
    hierarchy.get(node_id)
    return _leaf_nodes_under(hierarchy, node_id)


def ancestors(hierarchy: Hierarchy, node_id: str) -> Set[str]:
    hierarchy.get(node_id)
    found, stack = set(), list(hierarchy.nodes[node_id].parents)
    while stack:
        current = stack.pop()
        if current not in found:
            found.add(current)
            stack.extend(hierarchy.nodes[current].parents)

    return found


def _check_position(node: TemplateNode, position: int):
    if not isinstance(position, int) or not 0 <= position < node.arity:
        error_msg = f"Position {position} is outside the arity {node.arity} of node {node.node_id}"
        get_logger(__name__, "PROD", False).error(error_msg)
        raise BadPosition(error_msg)


def relation_select(hierarchy: Hierarchy, node_id: str, position: int, value: str) -> List[StructureInstance]:
    """
    Treats the leaves under a node as the rows of a table and selects those whose column equals value

    Returns
    -------
    list[StructureInstance]
        Matching leaf instances in timestamp order
    """
    node = hierarchy.get(node_id)
    _check_position(node, position)

    selected = []
    for leaf in _leaf_nodes_under(hierarchy, node_id):
        if leaf.items[position] == value:
            selected.extend(leaf.instances)

    return sorted(selected, key=instance_order)


def relation_union(hierarchy: Hierarchy, node_ids: Iterable[str]) -> List[StructureInstance]:
    """
    Deduplicated union of the leaf instances under the given nodes, timestamp ordered
    """
    leaves: Dict[str, TemplateNode] = {}
    for node_id in node_ids:
        hierarchy.get(node_id)
        for leaf in _leaf_nodes_under(hierarchy, node_id):
            leaves[leaf.node_id] = leaf

    return sorted((instance for leaf in leaves.values() for instance in leaf.instances), key=instance_order)


def admit(hierarchy: Hierarchy, node_id: str, position: int, item: str, count: int = 1) -> TemplateNode:
    """
    Adds a member to the slot vector at position, the node keeps its node_id

    Parameters
    ----------
    hierarchy : Hierarchy
        Hierarchy holding the node, modified in place

    node_id : str
        Template whose slot is extended

    position : int
        Index of a slot position

    item : str
        Item reference to admit

    count : int, (default=1)
        Count added to the member
    """
    node = hierarchy.get(node_id)
    _check_position(node, position)

    slot = node.positions[position]
    if not isinstance(slot, Slot):
        error_msg = f"Position {position} of node {node_id} is a literal, only slots admit new members"
        get_logger(__name__, "PROD", False).error(error_msg)
        raise BadPosition(error_msg)

    slot.add(item, count)
    return node


def window_counts(hierarchy: Hierarchy) -> Dict[int, Counter]:
    """
    Number of leaf instances per window matched by every node, leaves count their own instances
    """
    counts: Dict[int, Counter] = defaultdict(Counter)
    for node_id in hierarchy.nodes:
        for leaf in _leaf_nodes_under(hierarchy, node_id):
            for instance in leaf.instances:
                counts[instance.timestamp][node_id] += 1

    return dict(counts)


def find_node(hierarchy: Hierarchy, items: Sequence[str]) -> Optional[TemplateNode]:
    """
    The leaf whose items equal the given ones, None when the structure was never observed
    """
    return hierarchy.nodes.get(shape_id([Literal(item) for item in items]))


def export_hierarchy(hierarchy: Hierarchy) -> List[str]:
    """
    Canonical hierarchy lines sorted by (arity, level, node_id)

    node_id, level, '|'-joined positions ('lit:<id>' or 'slot:{id:count,...}'), comma-joined children ('-' if none)
    """
    ordered = sorted(hierarchy.nodes.values(), key=lambda node: (node.arity, node.level, node.node_id))
    return [
        tsv_line(
            node.node_id,
            node.level,
            "|".join(_render_position(position) for position in node.positions),
            ",".join(sorted(node.children)) or "-"
        )
        for node in ordered
    ]
