from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union
from cognistream.exceptions import BadArity, UnknownDelimiter, ArityMismatch
from cognistream.helpers import structure_mode_checker, tsv_line
from cognistream.logger import get_logger

StructureKey = Tuple[str, ...]


@dataclass(frozen=True)
class StructureInstance:
    """
    An ordered, fixed-arity sequence of item references found in the token stream

    Parameters
    ----------
    items : tuple[str]
        Pattern ids or 'lit:xx' gap items in stream order, at least 2 of them

    timestamp : int
        Window index of the first token

    origin : tuple[int, int]
        (segment_id, byte offset in the stream) of the first token
    """
    items: StructureKey
    timestamp: int
    origin: Tuple[int, int]

    @property
    def arity(self) -> int:
        return len(self.items)

    @property
    def key(self) -> StructureKey:
        return self.items


@dataclass
class StructureGroup:
    """
    All instances sharing one StructureKey, kept timestamp-ordered
    """
    count: int
    instances: List[StructureInstance] = field(default_factory=list)


def instance_order(instance: StructureInstance):
    return (instance.timestamp, instance.origin, instance.items)


def _split_by_segment(tokens: Sequence) -> List[List]:
    runs = []
    for token in tokens:
        if not runs or runs[-1][-1].segment_id != token.segment_id:
            runs.append([])
        runs[-1].append(token)

    return runs


def _instance_of(run: Sequence) -> StructureInstance:
    first = run[0]
    return StructureInstance(
        items=tuple(token.item for token in run),
        timestamp=first.window_index,
        origin=(first.segment_id, first.offset)
    )


def extract(
    tokens: Sequence,
    mode: str = "window",
    k: int = 3,
    delimiter: Optional[str] = None,
    dictionary: Optional[Dict] = None
) -> List[StructureInstance]:
    """
    Groups tokens into ordered structures

    Both modes restart at segment boundaries, so no structure spans two segments

    Parameters
    ----------
    tokens : Sequence[Token]
        Windowed tokens that tile the stream

    mode : str, (default='window')
        * 'window': every run of k consecutive non-gap tokens (stride 1) is an instance, gaps are skipped
        * 'delimiter': maximal token runs between delimiter occurrences are instances, gaps are kept as literal items

    k : int, (default=3)
        Window length for the 'window' mode, at least 2

    delimiter : str, optional
        pattern_id of the delimiter for the 'delimiter' mode

    dictionary : dict, optional
        The pattern dictionary the delimiter has to belong to

    Returns
    -------
    list[StructureInstance]
        Instances in stream order
    """
    logger = get_logger(__name__, "PROD", False)
    mode = mode.lower() if isinstance(mode, str) else mode
    instances = []

    if mode == "delimiter":
        if delimiter is None or dictionary is None or delimiter not in dictionary:
            error_msg = f"Delimiter {delimiter} is not a pattern of the dictionary"
            logger.error(error_msg)
            raise UnknownDelimiter(error_msg)

        for run in _split_by_segment(tokens):
            record = []
            for token in run + [None]:
                if token is None or token.pattern_id == delimiter:
                    # a record needs at least two items to be a structure
                    if len(record) >= 2:
                        instances.append(_instance_of(record))
                    record = []
                else:
                    record.append(token)

        return instances

    structure_mode_checker(mode, k)
    if k < 2:
        error_msg = f"Window structures need k >= 2, got {k}"
        logger.error(error_msg)
        raise BadArity(error_msg)

    for run in _split_by_segment(tokens):
        kept = [token for token in run if not token.is_gap]
        for start in range(len(kept) - k + 1):
            instances.append(_instance_of(kept[start:start + k]))

    return instances


def _items_of(value: Union[StructureInstance, Sequence[str]]) -> Sequence[str]:
    return value.items if isinstance(value, StructureInstance) else value


def mismatches(a: Union[StructureInstance, Sequence[str]], b: Union[StructureInstance, Sequence[str]]) -> List[int]:
    """
    Positions where two equal-arity item lists differ
    """
    items_a, items_b = _items_of(a), _items_of(b)
    if len(items_a) != len(items_b):
        error_msg = f"Distance is undefined across arities, got {len(items_a)} and {len(items_b)}"
        get_logger(__name__, "PROD", False).error(error_msg)
        raise ArityMismatch(error_msg)

    return [position for position, (x, y) in enumerate(zip(items_a, items_b)) if x != y]


def distance(a: Union[StructureInstance, Sequence[str]], b: Union[StructureInstance, Sequence[str]]) -> int:
    """
    Positional (Hamming) mismatch count of two equal-arity structures
    """
    return len(mismatches(a, b))


def dedupe(instances: Sequence[StructureInstance]) -> Dict[StructureKey, StructureGroup]:
    """
    Groups instances by StructureKey

    Returns
    -------
    dict
        StructureKey -> StructureGroup(count, timestamp-ordered instances), keys in sorted order
    """
    grouped: Dict[StructureKey, List[StructureInstance]] = defaultdict(list)
    for instance in instances:
        grouped[instance.key].append(instance)

    return {
        key: StructureGroup(count=len(grouped[key]), instances=sorted(grouped[key], key=instance_order))
        for key in sorted(grouped)
    }


def merge_groups(*group_maps: Dict[StructureKey, StructureGroup]) -> Dict[StructureKey, StructureGroup]:
    """
    Unions several deduped maps, counts add and instance lists are merged in timestamp order
    """
    merged: Dict[StructureKey, List[StructureInstance]] = defaultdict(list)
    counts: Dict[StructureKey, int] = defaultdict(int)
    for groups in group_maps:
        for key, group in groups.items():
            counts[key] += group.count
            merged[key].extend(group.instances)

    return {
        key: StructureGroup(count=counts[key], instances=sorted(merged[key], key=instance_order))
        for key in sorted(merged)
    }


def export_structures(groups: Dict[StructureKey, StructureGroup]) -> List[str]:
    """
    Canonical structure lines: arity, comma-joined items, count, sorted lexicographically
    """
    return sorted(tsv_line(len(key), ",".join(key), group.count) for key, group in groups.items())
