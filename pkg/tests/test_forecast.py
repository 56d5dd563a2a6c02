import unittest
from hypothesis import given, settings, strategies as st
from parameterized import parameterized
from cognistream.structures import StructureGroup, StructureInstance
from cognistream._generalizer import build_hierarchy, shape_id, Literal
from cognistream._forecaster import ClassSequence, classify, markov_predict, trend_predict, predict, export_forecast
from cognistream.exceptions import NotASlot, TooShort, UnknownNode, ConfigError
from cognistream.logger import get_logger


def sequence_of(labels):
    return ClassSequence("t", 1, list(labels))


def windows_of(*distributions):
    return ClassSequence("t", 1, [], {window: dict(d) for window, d in enumerate(distributions)})


label_lists = st.lists(st.sampled_from("abc"), min_size=2, max_size=40)


class TestClassify(unittest.TestCase):
    """
    Test cases for labeling leaf instances by a slot position
    """
    logger = get_logger(__name__, "TEST")

    def setUp(self):
        abc, adc = ("A", "B", "C"), ("A", "D", "C")
        self.hierarchy = build_hierarchy({
            abc: StructureGroup(2, [StructureInstance(abc, 0, (0, 0)), StructureInstance(abc, 0, (0, 3))]),
            adc: StructureGroup(1, [StructureInstance(adc, 1, (0, 6))])
        })
        self.template_id = self.hierarchy.roots[0]

    def test_labels_and_windows(self):
        sequence = classify(self.hierarchy, self.template_id, 1)
        self.assertEqual(sequence.labels, ["B", "B", "D"])
        self.assertEqual(sequence.window_distributions, {0: {"B": 1.0}, 1: {"D": 1.0}})

    def test_labels_belong_to_the_slot(self):
        sequence = classify(self.hierarchy, self.template_id, 1)
        vector = self.hierarchy.get(self.template_id).positions[1].vector
        self.assertTrue(set(sequence.labels) <= set(vector))

    @parameterized.expand([
        ("literal", 0),
        ("out_of_range", 5)
    ])
    def test_not_a_slot(self, _, position):
        with self.assertRaises(NotASlot):
            classify(self.hierarchy, self.template_id, position)

    def test_leaf_has_no_slot(self):
        with self.assertRaises(NotASlot):
            classify(self.hierarchy, shape_id([Literal("A"), Literal("B"), Literal("C")]), 1)

    def test_unknown_template(self):
        with self.assertRaises(UnknownNode):
            classify(self.hierarchy, "missing", 1)


class TestForecast(unittest.TestCase):
    """
    Test cases for the Markov and trend forecasters
    """
    logger = get_logger(__name__, "TEST")

    @parameterized.expand([
        ("smoothed", "BBDB", 1.0, {"B": 0.5, "D": 0.5}),
        ("alternation", "XYXYX", 0.0, {"Y": 1.0}),
        ("single_transition", "XX", 0.0, {"X": 1.0})
    ])
    def test_markov(self, _, labels, alpha, expected):
        forecast = markov_predict(sequence_of(labels), alpha)
        self.assertEqual(forecast.horizon, "next-step")
        self.assertEqual(forecast.distribution.keys(), expected.keys())
        for label, probability in expected.items():
            self.assertAlmostEqual(forecast.distribution[label], probability)

    def test_markov_too_short(self):
        with self.assertRaises(TooShort):
            markov_predict(sequence_of("X"))

    def test_markov_negative_alpha(self):
        with self.assertRaises(ConfigError):
            markov_predict(sequence_of("XY"), alpha=-1)

    def test_trend_two_point_line(self):
        forecast = trend_predict(windows_of({"X": 1.0}, {"X": 0.5, "Y": 0.5}))
        self.assertEqual(forecast.horizon, "next-window")
        self.assertEqual(list(forecast.distribution), ["Y"])
        self.assertAlmostEqual(forecast.distribution["Y"], 1.0)

    def test_trend_flat(self):
        forecast = trend_predict(windows_of(*[{"X": 0.7, "Y": 0.3}] * 3))
        self.assertAlmostEqual(forecast.distribution["X"], 0.7)
        self.assertAlmostEqual(forecast.distribution["Y"], 0.3)

    def test_trend_clips_vanishing_labels(self):
        """
        X falls below 0 on the next window and is dropped before renormalizing
        """
        forecast = trend_predict(windows_of({"X": 1.0}, {"X": 1.0, "Y": 0.0}, {"Y": 1.0}))
        self.assertEqual(list(forecast.distribution), ["Y"])
        self.assertAlmostEqual(forecast.distribution["Y"], 1.0)

    def test_trend_too_short(self):
        with self.assertRaises(TooShort):
            trend_predict(windows_of({"X": 1.0}))

    def test_predict_dispatch(self):
        self.assertEqual(predict(sequence_of("XYXY")).method, "markov")
        self.assertEqual(predict(windows_of({"X": 1.0}, {"X": 1.0}), "trend").method, "trend")
        with self.assertRaises(ConfigError):
            predict(sequence_of("XY"), "arima")

    def test_export(self):
        forecast = markov_predict(sequence_of("BBDBB"), 0.0)
        self.assertEqual(export_forecast(forecast), ["B\t0.666667", "D\t0.333333"])

    @parameterized.expand([(length,) for length in (4, 5, 9)])
    def test_period_two(self, length):
        labels = ["P", "Q"] * length
        labels = labels[:length]
        expected = "Q" if labels[-1] == "P" else "P"
        self.assertEqual(markov_predict(sequence_of(labels), 0.0).distribution, {expected: 1.0})

    @settings(max_examples=60, deadline=None)
    @given(label_lists, st.floats(min_value=0, max_value=5))
    def test_markov_normalized(self, labels, alpha):
        distribution = markov_predict(sequence_of(labels), alpha).distribution
        self.assertAlmostEqual(sum(distribution.values()), 1.0, delta=1e-9)
        self.assertTrue(all(p >= 0 for p in distribution.values()))

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.dictionaries(st.sampled_from("xyz"), st.integers(min_value=1, max_value=9), min_size=1), min_size=2, max_size=8))
    def test_trend_normalized(self, counts):
        distributions = [{label: n / sum(window.values()) for label, n in window.items()} for window in counts]
        distribution = trend_predict(windows_of(*distributions)).distribution
        self.assertAlmostEqual(sum(distribution.values()), 1.0, delta=1e-9)
        self.assertTrue(all(p >= 0 for p in distribution.values()))

    @settings(max_examples=60, deadline=None)
    @given(label_lists, st.floats(min_value=0, max_value=5))
    def test_relabeling_permutes_probabilities(self, labels, alpha):
        rename = {"a": "z", "b": "x", "c": "y"}
        original = markov_predict(sequence_of(labels), alpha).distribution
        renamed = markov_predict(sequence_of([rename[label] for label in labels]), alpha).distribution

        self.assertEqual(set(renamed), {rename[label] for label in original})
        for label, probability in original.items():
            self.assertAlmostEqual(renamed[rename[label]], probability)
