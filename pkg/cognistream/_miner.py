import heapq
from bisect import bisect_right
from collections import Counter, defaultdict
from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple
from cognistream.config import MINER_DEFAULTS
from cognistream.helpers import miner_config_checker, content_hash, literal_item, tsv_line, read_lines
from cognistream.logger import get_logger
from cognistream.stream_store import Segment, StreamWindow

TOKEN_PATTERN = "pattern-occurrence"
TOKEN_GAP = "literal-gap"


@dataclass(frozen=True)
class MinerConfig:
    """
    Thresholds of the pattern miner

    Parameters
    ----------
    min_len : int, (default=2)
        Shortest pattern length in bytes

    max_len : int, (default=16)
        Longest pattern length in bytes, bounds the candidate space

    min_support : int, (default=2)
        Minimum non-overlapping occurrence count of a retained pattern

    window_size : int, (default=1024)
        Tokens per stream window
    """
    min_len: int = MINER_DEFAULTS["min_len"]
    max_len: int = MINER_DEFAULTS["max_len"]
    min_support: int = MINER_DEFAULTS["min_support"]
    window_size: int = MINER_DEFAULTS["window_size"]

    def __post_init__(self):
        miner_config_checker(self.min_len, self.max_len, self.min_support, self.window_size)


@dataclass(frozen=True)
class Pattern:
    """
    A repeatable byte substring discovered in the stream (a keyword)

    pattern_id is a pure function of the bytes so two units mining the same bytes agree on it
    """
    pattern_id: str
    data: bytes
    count: int
    first_seen: int = 0
    last_seen: int = 0


@dataclass(frozen=True)
class Token:
    """
    One tile of the tokenized stream: a dictionary pattern occurrence or a single literal gap byte
    """
    kind: str
    offset: int
    length: int
    segment_id: int
    pattern_id: Optional[str] = None
    byte: Optional[int] = None
    window_index: int = -1

    @property
    def item(self) -> str:
        """
        Item reference used by structures, the pattern_id or 'lit:xx' for gaps
        """
        return self.pattern_id if self.kind == TOKEN_PATTERN else literal_item(self.byte)

    @property
    def is_gap(self) -> bool:
        return self.kind == TOKEN_GAP


def pattern_id_of(data: bytes) -> str:
    return content_hash(data)


def _segment_regions(segments: Sequence[Segment]) -> Tuple[bytes, List[Tuple[int, int]]]:
    """
    Concatenates the segments and returns the [start, end) byte range of each one
    """
    regions = []
    offset = 0
    for segment in segments:
        regions.append((offset, offset + len(segment.data)))
        offset += len(segment.data)

    return b"".join(segment.data for segment in segments), regions


class _CandidateIndex:
    """
    Occurrence lists of every candidate substring, pruned lazily as regions get covered
    """
    def __init__(self, data: bytes, regions: List[Tuple[int, int]], min_len: int, max_len: int):
        self.covered = bytearray(len(data))
        self.positions: Dict[bytes, List[int]] = defaultdict(list)

        # starts are visited in ascending order, so every position list is sorted
        for start_region, end_region in regions:
            for start in range(start_region, end_region):
                longest = min(max_len, end_region - start)
                for length in range(min_len, longest + 1):
                    self.positions[data[start:start + length]].append(start)

    def greedy_occurrences(self, candidate: bytes) -> List[int]:
        """
        Leftmost-greedy non-overlapping occurrences that lie fully inside uncovered bytes

        Dead positions are dropped from the index while scanning
        """
        length = len(candidate)
        alive = [p for p in self.positions[candidate] if self.covered.find(1, p, p + length) == -1]
        self.positions[candidate] = alive

        chosen = []
        next_free = -1
        for position in alive:
            if position >= next_free:
                chosen.append(position)
                next_free = position + length

        return chosen

    def cover(self, positions: Iterable[int], length: int):
        for position in positions:
            self.covered[position:position + length] = b"\x01" * length


def mine_patterns(segments: Sequence[Segment], config: Optional[MinerConfig] = None) -> Dict[str, Pattern]:
    """
    Discovers repeatable patterns without any schema by greedy coverage selection

    Repeatedly picks, over the still uncovered regions, the candidate with the maximal
    score = count x length, where count is the leftmost-greedy non-overlapping occurrence
    count and must reach min_support. Ties go to the longer candidate, then to the
    lexicographically smaller bytes. The occurrences of the pick are marked covered and
    the selection repeats until no candidate is left. Occurrences never cross segment boundaries

    Parameters
    ----------
    segments : Sequence[Segment]
        Ordered segments of the stream

    config : MinerConfig, optional
        Mining thresholds, defaults are used If None

    Returns
    -------
    dict
        pattern_id -> Pattern, with first_seen / last_seen set to the windows of the first and last credited occurrence
    """
    logger = get_logger(__name__, "PROD", False)
    config = config or MinerConfig()
    data, regions = _segment_regions(segments)

    if not data:
        return {}

    index = _CandidateIndex(data, regions, config.min_len, config.max_len)

    # Counts only shrink as bytes get covered, so a stale heap key is an upper bound of the true score
    heap = []
    for candidate in list(index.positions):
        count = len(index.greedy_occurrences(candidate))
        if count >= config.min_support:
            heap.append((-count * len(candidate), -len(candidate), candidate))
    heapq.heapify(heap)

    selected: Dict[bytes, List[int]] = {}
    while heap:
        neg_score, neg_length, candidate = heapq.heappop(heap)
        occurrences = index.greedy_occurrences(candidate)
        count = len(occurrences)

        if count * len(candidate) != -neg_score:
            if count >= config.min_support:
                heapq.heappush(heap, (-count * len(candidate), neg_length, candidate))
            continue

        selected[candidate] = occurrences
        index.cover(occurrences, len(candidate))

    logger.info(f"[PROCESS] Mined {len(selected)} patterns from {len(segments)} segments ({len(data)} bytes)")

    dictionary = {
        pattern_id_of(candidate): Pattern(pattern_id_of(candidate), candidate, len(occurrences))
        for candidate, occurrences in selected.items()
    }

    return _annotate_windows(dictionary, selected, segments, config)


def _annotate_windows(
    dictionary: Dict[str, Pattern],
    selected: Dict[bytes, List[int]],
    segments: Sequence[Segment],
    config: MinerConfig
) -> Dict[str, Pattern]:
    """
    Sets first_seen / last_seen from the window of the token that covers each credited occurrence
    """
    tokens, _ = assign_windows(tokenize(segments, dictionary), config)
    token_offsets = [token.offset for token in tokens]

    def window_at(offset: int) -> int:
        return tokens[bisect_right(token_offsets, offset) - 1].window_index

    annotated = {}
    for candidate, occurrences in selected.items():
        pattern = dictionary[pattern_id_of(candidate)]
        annotated[pattern.pattern_id] = replace(
            pattern,
            first_seen=window_at(occurrences[0]),
            last_seen=window_at(occurrences[-1])
        )

    return annotated


def tokenize(segments: Sequence[Segment], dictionary: Dict[str, Pattern]) -> List[Token]:
    """
    Re-expresses the stream as tokens by a left-to-right longest match

    At every offset the longest dictionary pattern that matches is emitted, otherwise a single
    literal gap byte. Matching restarts at each segment, and the token spans tile the stream exactly

    Parameters
    ----------
    segments : Sequence[Segment]
        Ordered segments of the stream

    dictionary : dict
        pattern_id -> Pattern, from mine_patterns() or a dpu sync

    Returns
    -------
    list[Token]
        Tokens in stream order with window_index unset (-1)
    """
    by_length: Dict[int, Dict[bytes, str]] = defaultdict(dict)
    for pattern in dictionary.values():
        by_length[len(pattern.data)][pattern.data] = pattern.pattern_id
    lengths = sorted(by_length, reverse=True)

    tokens = []
    base = 0
    for segment in segments:
        data = segment.data
        i = 0
        while i < len(data):
            for length in lengths:
                pattern_id = by_length[length].get(data[i:i + length]) if i + length <= len(data) else None
                if pattern_id is not None:
                    tokens.append(Token(TOKEN_PATTERN, base + i, length, segment.segment_id, pattern_id=pattern_id))
                    i += length
                    break
            else:
                tokens.append(Token(TOKEN_GAP, base + i, 1, segment.segment_id, byte=data[i]))
                i += 1
        base += len(data)

    return tokens


def assign_windows(tokens: Sequence[Token], config: Optional[MinerConfig] = None) -> Tuple[List[Token], List[StreamWindow]]:
    """
    Groups consecutive runs of window_size tokens into windows, the final window may be partial

    Returns
    -------
    tuple
        (tokens with window_index set, list of StreamWindow)
    """
    config = config or MinerConfig()
    windowed = [replace(token, window_index=i // config.window_size) for i, token in enumerate(tokens)]

    windows = []
    for start in range(0, len(windowed), config.window_size):
        chunk = windowed[start:start + config.window_size]
        windows.append(StreamWindow(
            window_index=start // config.window_size,
            segment_range=(chunk[0].segment_id, chunk[-1].segment_id),
            token_count=len(chunk)
        ))

    return windowed, windows


def reconstruct(tokens: Sequence[Token], dictionary: Dict[str, Pattern]) -> bytes:
    """
    Concatenates pattern bytes and gap bytes back into the raw stream
    """
    return b"".join(
        dictionary[token.pattern_id].data if token.kind == TOKEN_PATTERN else bytes([token.byte])
        for token in tokens
    )


def window_counts(tokens: Sequence[Token]) -> Dict[int, Counter]:
    """
    Occurrence count of every pattern per window, gaps are not counted
    """
    counts: Dict[int, Counter] = defaultdict(Counter)
    for token in tokens:
        if token.kind == TOKEN_PATTERN:
            counts[token.window_index][token.pattern_id] += 1

    return dict(counts)


def export_dictionary(dictionary: Dict[str, Pattern]) -> List[str]:
    """
    Canonical dictionary lines: pattern_id, hex(bytes), count, first_seen, last_seen sorted by pattern_id
    """
    return [
        tsv_line(pattern.pattern_id, pattern.data.hex(), pattern.count, pattern.first_seen, pattern.last_seen)
        for pattern in sorted(dictionary.values(), key=lambda p: p.pattern_id)
    ]


def load_dictionary(path: str) -> Dict[str, Pattern]:
    dictionary = {}
    for line in read_lines(path):
        pattern_id, hex_data, count, first_seen, last_seen = line.split("\t")
        dictionary[pattern_id] = Pattern(pattern_id, bytes.fromhex(hex_data), int(count), int(first_seen), int(last_seen))

    return dictionary
