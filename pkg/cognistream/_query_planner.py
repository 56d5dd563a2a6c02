from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple
from cognistream.exceptions import NoKeywords
from cognistream.helpers import tsv_line
from cognistream.logger import get_logger
from cognistream.structures import StructureInstance, instance_order
from cognistream._generalizer import Hierarchy, Slot, leaves_under
from cognistream._miner import Pattern
from cognistream._relevancy import RelevancyTable


@dataclass
class Query:
    """
    A keyword request of an end user

    Parameters
    ----------
    query_id : str
        Caller chosen id, e.g. 'q0'

    keywords : tuple[bytes]
        Raw keyword bytes as given

    resolved : frozenset[str]
        pattern_ids of the keywords found in the dictionary

    unresolved : tuple[bytes]
        Keywords with no pattern in the dictionary

    synonyms : dict
        resolved id -> ids accepted in its place, only the id itself unless the query was broadened

    candidates : tuple[str]
        Maximal nodes containing a resolved id or one of its synonyms
    """
    query_id: str
    keywords: Tuple[bytes, ...]
    resolved: FrozenSet[str] = frozenset()
    unresolved: Tuple[bytes, ...] = ()
    received_window: int = 0
    synonyms: Dict[str, FrozenSet[str]] = field(default_factory=dict)
    candidates: Tuple[str, ...] = ()

    def accepts(self, items: Sequence[str]) -> bool:
        """
        Conjunctive containment: every resolved keyword (or an accepted synonym) occurs in the items
        """
        if not self.resolved:
            return False
        present = set(items)
        return all(present & self.synonyms.get(pattern_id, frozenset({pattern_id})) for pattern_id in self.resolved)


@dataclass
class GeneralizedRequest:
    """
    One template fetch that serves every member query, priority is the member count
    """
    template_id: str
    member_queries: List[str] = field(default_factory=list)

    @property
    def priority(self) -> int:
        return len(self.member_queries)


def synonyms_of(hierarchy: Hierarchy, pattern_id: str) -> FrozenSet[str]:
    """
    The id itself and every co-member of a slot that contains it
    """
    found = {pattern_id}
    for node in hierarchy.templates():
        for position in node.positions:
            if isinstance(position, Slot) and pattern_id in position.vector:
                found.update(position.vector)
    return frozenset(found)


def _maximal(hierarchy: Hierarchy, node_ids: Set[str]) -> Tuple[str, ...]:
    return tuple(sorted(
        node_id for node_id in node_ids
        if not any(parent in node_ids for parent in hierarchy.nodes[node_id].parents)
    ))


def plan(
    query_id: str,
    keywords: Iterable[bytes],
    dictionary: Mapping[str, Pattern],
    hierarchy: Hierarchy,
    received_window: int = 0,
    broaden: bool = False
) -> Query:
    """
    Resolves the keywords of a query and picks the templates able to answer it

    Parameters
    ----------
    query_id : str
        Id of the query

    keywords : Iterable[bytes]
        At least one keyword

    dictionary : Mapping[str, Pattern]
        pattern_id -> Pattern, keywords resolve by exact bytes

    hierarchy : Hierarchy
        Hierarchy of notions to search

    received_window : int, (default=0)
        Window the query arrived in

    broaden : bool, (default=False)
        If True, co-members of the slots holding a keyword are accepted in its place

    Returns
    -------
    Query
        Unresolved keywords are kept aside, a query with nothing resolved has no candidates
    """
    logger = get_logger(__name__, "PROD", False)
    keywords = tuple(bytes(keyword) for keyword in keywords)
    if not keywords:
        error_msg = f"Query {query_id} has no keywords"
        logger.error(error_msg)
        raise NoKeywords(error_msg)

    by_bytes = {pattern.data: pattern.pattern_id for pattern in dictionary.values()}
    resolved = frozenset(by_bytes[keyword] for keyword in keywords if keyword in by_bytes)
    unresolved = tuple(keyword for keyword in keywords if keyword not in by_bytes)
    if unresolved:
        logger.warning(f"[WARNING] Query {query_id} has unresolved keywords: {[keyword.decode('utf-8', 'replace') for keyword in unresolved]}")

    synonyms = {
        pattern_id: synonyms_of(hierarchy, pattern_id) if broaden else frozenset({pattern_id})
        for pattern_id in resolved
    }
    accepted = set().union(*synonyms.values()) if synonyms else set()
    containing = {node.node_id for node in hierarchy.nodes.values() if node.members() & accepted}

    return Query(
        query_id=query_id,
        keywords=keywords,
        resolved=resolved,
        unresolved=unresolved,
        received_window=received_window,
        synonyms=synonyms,
        candidates=_maximal(hierarchy, containing)
    )


def _relevancy_sum(queries: Sequence[Query], table: Optional[RelevancyTable]) -> float:
    if table is None:
        return 0.0
    return sum(table.score(pattern_id) for query in queries for pattern_id in query.resolved)


def merge_requests(queries: Sequence[Query], table: Optional[RelevancyTable] = None) -> List[GeneralizedRequest]:
    """
    Groups queries by shared candidate template

    Returns
    -------
    list[GeneralizedRequest]
        Sorted by priority descending, then summed relevancy of the member keywords descending, then template_id
    """
    grouped: Dict[str, List[Query]] = defaultdict(list)
    for query in queries:
        for template_id in query.candidates:
            if all(member.query_id != query.query_id for member in grouped[template_id]):
                grouped[template_id].append(query)

    requests = [
        (GeneralizedRequest(template_id, [query.query_id for query in members]), _relevancy_sum(members, table))
        for template_id, members in grouped.items()
    ]
    requests.sort(key=lambda pair: (-pair[0].priority, -pair[1], pair[0].template_id))
    return [request for request, _ in requests]


def execute(
    request: GeneralizedRequest,
    hierarchy: Hierarchy,
    queries: Mapping[str, Query]
) -> Dict[str, List[StructureInstance]]:
    """
    Fetches the leaves under the template once and post-filters them for every member query

    Returns
    -------
    dict
        query_id -> timestamp ordered instances of the leaves accepted by that query
    """
    leaves = leaves_under(hierarchy, request.template_id)
    results = {}
    for query_id in request.member_queries:
        query = queries[query_id]
        results[query_id] = sorted(
            (instance for leaf in leaves if query.accepts(leaf.items) for instance in leaf.instances),
            key=instance_order
        )
    return results


def run_queries(
    queries: Sequence[Query],
    hierarchy: Hierarchy,
    table: Optional[RelevancyTable] = None,
    narrow: bool = False
) -> Dict[str, List[StructureInstance]]:
    """
    Executes every generalized request in priority order and unites the per-query results

    Parameters
    ----------
    narrow : bool, (default=False)
        If True, a query is answered only by the first request it belongs to
    """
    by_id = {query.query_id: query for query in queries}
    answered: Dict[str, Set[StructureInstance]] = {query.query_id: set() for query in queries}
    served: Set[str] = set()

    for request in merge_requests(queries, table):
        results = execute(request, hierarchy, by_id)
        for query_id, instances in results.items():
            if narrow and query_id in served:
                continue
            answered[query_id].update(instances)
            served.add(query_id)

    return {query_id: sorted(instances, key=instance_order) for query_id, instances in answered.items()}


def direct_scan(query: Query, hierarchy: Hierarchy) -> List[StructureInstance]:
    """
    Answers a query by scanning every leaf of the hierarchy
    """
    return sorted(
        (instance for leaf in hierarchy.leaves() if query.accepts(leaf.items) for instance in leaf.instances),
        key=instance_order
    )


def export_results(results: Mapping[str, List[StructureInstance]]) -> List[str]:
    """
    query_id, segment_id, offset and comma-joined items per result
    """
    return [
        tsv_line(query_id, instance.origin[0], instance.origin[1], ",".join(instance.items))
        for query_id in results
        for instance in results[query_id]
    ]
