import heapq
import os
import tempfile
import unittest
from collections import defaultdict
import numpy as np
from hypothesis import given, settings, strategies as st
from parameterized import parameterized
from cognistream.stream_store import Segment, StreamWindow
from cognistream._miner import (
    MinerConfig, Pattern, TOKEN_GAP, TOKEN_PATTERN,
    mine_patterns, tokenize, assign_windows, reconstruct, window_counts,
    export_dictionary, load_dictionary, pattern_id_of
)
from cognistream.exceptions import ConfigError
from cognistream.helpers import write_lines
from cognistream.logger import get_logger


def segments_of(*chunks):
    return [Segment(i, chunk, i, "") for i, chunk in enumerate(chunks)]


def dictionary_of(*patterns):
    return {pattern_id_of(data): Pattern(pattern_id_of(data), data, 2) for data in patterns}


def naive_mine(data: bytes, min_len: int = 2, max_len: int = 16, min_support: int = 2):
    """
    Cubic reference miner: rescans every substring of the uncovered stream after each pick
    """
    covered = bytearray(len(data))

    def occurrences(candidate):
        found, start, next_free = [], data.find(candidate), -1
        while start != -1:
            if start >= next_free and not any(covered[start:start + len(candidate)]):
                found.append(start)
                next_free = start + len(candidate)
            start = data.find(candidate, start + 1)
        return found

    selected = {}
    while True:
        best, best_key, best_occurrences = None, None, None
        candidates = {data[s:s + n] for n in range(min_len, max_len + 1) for s in range(len(data) - n + 1)}
        for candidate in candidates:
            found = occurrences(candidate)
            if len(found) < min_support:
                continue
            key = (len(found) * len(candidate), len(candidate))
            if best is None or key > best_key or (key == best_key and candidate < best):
                best, best_key, best_occurrences = candidate, key, found

        if best is None:
            return selected

        selected[best] = len(best_occurrences)
        for start in best_occurrences:
            covered[start:start + len(best)] = b"\x01" * len(best)


def coverage_mine(data: bytes, min_len: int = 2, max_len: int = 16, min_support: int = 2):
    """
    Same selection rule as naive_mine, but after each pick only the candidates with an occurrence
    over newly covered bytes are recounted. Counts never grow, so stale heap entries are skipped
    """
    positions = defaultdict(list)
    for n in range(min_len, max_len + 1):
        for s in range(len(data) - n + 1):
            positions[data[s:s + n]].append(s)

    covered = bytearray(len(data))

    def occurrences(candidate):
        found, next_free = [], -1
        for start in positions[candidate]:
            if start >= next_free and not any(covered[start:start + len(candidate)]):
                found.append(start)
                next_free = start + len(candidate)
        return found

    counts = {candidate: len(occurrences(candidate)) for candidate in positions}
    heap = [(-count * len(candidate), -len(candidate), candidate) for candidate, count in counts.items() if count >= min_support]
    heapq.heapify(heap)

    selected = {}
    while heap:
        neg_score, _, best = heapq.heappop(heap)
        if counts[best] * len(best) != -neg_score:
            continue

        best_occurrences = occurrences(best)
        selected[best] = len(best_occurrences)
        touched = set()
        for start in best_occurrences:
            for byte in range(start, start + len(best)):
                covered[byte] = 1
                for n in range(min_len, max_len + 1):
                    for s in range(max(0, byte - n + 1), min(byte, len(data) - n) + 1):
                        touched.add(data[s:s + n])

        for candidate in touched:
            count = len(occurrences(candidate))
            if count != counts[candidate]:
                counts[candidate] = count
                if count >= min_support:
                    heapq.heappush(heap, (-count * len(candidate), -len(candidate), candidate))

    return selected


def random_stream(rng: np.random.RandomState, symbols: bytes, min_size: int, max_size: int) -> bytes:
    size = int(round(np.exp(rng.uniform(np.log(min_size), np.log(max_size)))))
    return bytes(rng.choice(list(symbols), size).astype(np.uint8))


class TestMining(unittest.TestCase):
    """
    Test cases for the greedy coverage pattern miner
    """
    np.random.seed(42)
    six_symbol_stream = bytes(np.random.choice(list(b"abcdef"), 300).astype(np.uint8))

    logger = get_logger(__name__, "TEST")

    def test_repeated_word(self):
        dictionary = mine_patterns(segments_of(b"abcabcabc"))
        self.assertEqual({p.data: p.count for p in dictionary.values()}, {b"abc": 3})

    def test_no_repetition(self):
        self.assertEqual(mine_patterns(segments_of(b"abcdef")), {})

    def test_empty_input(self):
        self.assertEqual(mine_patterns([]), {})

    def test_pigeonhole(self):
        """
        A 257 byte stream must repeat some byte, so single byte patterns always exist
        """
        rng = np.random.RandomState(7)
        for stream in range(50):
            data = bytes(rng.randint(0, 256, 257).astype(np.uint8))
            with self.subTest(stream=stream):
                dictionary = mine_patterns(segments_of(data), MinerConfig(min_len=1))
                self.assertTrue(dictionary)
                self.assertTrue(all(pattern.count >= 2 for pattern in dictionary.values()))

    def test_pattern_id_is_content_hash(self):
        dictionary = mine_patterns(segments_of(b"abcabcabc"))
        self.assertEqual(list(dictionary), [pattern_id_of(b"abc")])
        self.assertEqual(pattern_id_of(b"abc"), pattern_id_of(bytes(b"abc")), "ids must depend on the bytes only")

    def test_occurrences_never_cross_segments(self):
        self.assertEqual(mine_patterns(segments_of(b"a", b"ba", b"b")), {})
        self.assertEqual(
            {p.data: p.count for p in mine_patterns(segments_of(b"abab")).values()},
            {b"ab": 2}
        )

    def test_matches_reference_on_seeded_stream(self):
        dictionary = mine_patterns(segments_of(self.six_symbol_stream))
        self.assertEqual({p.data: p.count for p in dictionary.values()}, naive_mine(self.six_symbol_stream))

    @settings(max_examples=30, deadline=None)
    @given(st.binary(max_size=120).map(lambda raw: bytes(b"abcdef"[x % 6] for x in raw)))
    def test_matches_reference(self, data):
        dictionary = mine_patterns(segments_of(data) if data else [])
        expected = naive_mine(data)
        self.assertEqual(coverage_mine(data), expected)
        self.assertEqual({p.data: p.count for p in dictionary.values()}, expected)

    def test_matches_reference_on_random_streams(self):
        """
        200 seeded streams over six symbols, sizes spread log-uniformly from 64 to 4096 bytes
        """
        rng = np.random.RandomState(2024)
        streams = [random_stream(rng, b"abcdef", 64, 4096) for _ in range(198)]
        streams += [bytes(rng.choice(list(b"abcdef"), size).astype(np.uint8)) for size in (64, 4096)]

        for i, data in enumerate(streams):
            with self.subTest(stream=i, size=len(data)):
                dictionary = mine_patterns(segments_of(data))
                self.assertEqual({p.data: p.count for p in dictionary.values()}, coverage_mine(data))

    @settings(max_examples=30, deadline=None)
    @given(st.binary(max_size=200), st.integers(min_value=1, max_value=4), st.integers(min_value=2, max_value=4))
    def test_support_and_length_bounds(self, data, min_len, min_support):
        config = MinerConfig(min_len=min_len, max_len=min_len + 3, min_support=min_support)
        for pattern in mine_patterns(segments_of(data) if data else [], config).values():
            self.assertGreaterEqual(pattern.count, min_support)
            self.assertTrue(min_len <= len(pattern.data) <= min_len + 3)

    def test_deterministic(self):
        segments = segments_of(self.six_symbol_stream[:150], self.six_symbol_stream[150:])
        first = export_dictionary(mine_patterns(segments))
        second = export_dictionary(mine_patterns(segments))
        self.assertEqual(first, second)

    def test_seen_windows(self):
        dictionary = mine_patterns(segments_of(b"abcabcabc"), MinerConfig(window_size=1))
        self.assertEqual(export_dictionary(dictionary), [f"{pattern_id_of(b'abc')}\t616263\t3\t0\t2"])

    def test_export_is_sorted_and_loadable(self):
        dictionary = mine_patterns(segments_of(self.six_symbol_stream))
        lines = export_dictionary(dictionary)
        self.assertEqual(lines, sorted(lines))

        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "dictionary.tsv")
            write_lines(path, lines)
            self.assertEqual(load_dictionary(path), dictionary)

    @parameterized.expand([
        ("min_len_zero", dict(min_len=0)),
        ("max_below_min", dict(min_len=4, max_len=3)),
        ("support_one", dict(min_support=1)),
        ("window_zero", dict(window_size=0)),
        ("float_len", dict(min_len=2.5))
    ])
    def test_invalid_config(self, _, params):
        with self.assertRaises(ConfigError):
            MinerConfig(**params)


class TestTokenize(unittest.TestCase):
    """
    Test cases for longest-match tokenization and windowing
    """
    logger = get_logger(__name__, "TEST")

    def test_longest_match_trace(self):
        tokens = tokenize(segments_of(b"xxabcy"), dictionary_of(b"abc"))
        self.assertEqual(
            [(t.kind, t.offset, t.item) for t in tokens],
            [
                (TOKEN_GAP, 0, "lit:78"),
                (TOKEN_GAP, 1, "lit:78"),
                (TOKEN_PATTERN, 2, pattern_id_of(b"abc")),
                (TOKEN_GAP, 5, "lit:79")
            ]
        )

    def test_empty_dictionary(self):
        tokens = tokenize(segments_of(b"ab"), {})
        self.assertEqual([t.byte for t in tokens], [ord("a"), ord("b")])
        self.assertTrue(all(t.is_gap for t in tokens))

    def test_longest_pattern_wins(self):
        tokens = tokenize(segments_of(b"abc"), dictionary_of(b"ab", b"abc"))
        self.assertEqual([(t.pattern_id, t.offset) for t in tokens], [(pattern_id_of(b"abc"), 0)])

    def test_offsets_continue_across_segments(self):
        tokens = tokenize(segments_of(b"ab", b"xab"), dictionary_of(b"ab"))
        self.assertEqual([(t.segment_id, t.offset, t.length) for t in tokens], [(0, 0, 2), (1, 2, 1), (1, 3, 2)])

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.binary(min_size=1, max_size=80), max_size=4))
    def test_tokens_tile_and_reconstruct(self, chunks):
        segments = segments_of(*chunks)
        dictionary = mine_patterns(segments, MinerConfig(min_len=1, max_len=4))
        tokens = tokenize(segments, dictionary)

        self.assertEqual(reconstruct(tokens, dictionary), b"".join(chunks))
        expected_offset = 0
        for token in tokens:
            self.assertEqual(token.offset, expected_offset, "tokens must be contiguous")
            expected_offset += token.length

    @parameterized.expand([
        ("two_full", 2048, [1024, 1024]),
        ("one_spill", 1025, [1024, 1]),
        ("empty", 0, [])
    ])
    def test_assign_windows(self, _, n_tokens, expected_sizes):
        tokens = tokenize(segments_of(b"q" * n_tokens) if n_tokens else [], {})
        windowed, windows = assign_windows(tokens, MinerConfig())

        self.assertEqual([w.token_count for w in windows], expected_sizes)
        self.assertEqual([w.window_index for w in windows], list(range(len(expected_sizes))))
        self.assertEqual([t.window_index for t in windowed], [i // 1024 for i in range(n_tokens)])

    def test_window_segment_range(self):
        tokens = tokenize(segments_of(b"aa", b"bb", b"cc"), {})
        _, windows = assign_windows(tokens, MinerConfig(window_size=3))
        self.assertEqual(windows, [StreamWindow(0, (0, 1), 3), StreamWindow(1, (1, 2), 3)])

    def test_window_counts_skip_gaps(self):
        dictionary = dictionary_of(b"ab")
        tokens, _ = assign_windows(tokenize(segments_of(b"abxab"), dictionary), MinerConfig(window_size=2))
        self.assertEqual(window_counts(tokens), {0: {pattern_id_of(b"ab"): 1}, 1: {pattern_id_of(b"ab"): 1}})
