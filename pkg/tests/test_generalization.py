import random
import unittest
from collections import defaultdict
from hypothesis import given, settings, strategies as st
from parameterized import parameterized
from cognistream.structures import StructureGroup, StructureInstance
from cognistream._generalizer import (
    Literal, Slot, TemplateNode, Hierarchy,
    merge, strict_match, build_hierarchy, leaf_node, shape_id,
    leaves_under, ancestors, relation_select, relation_union, admit,
    find_node, window_counts, export_hierarchy, _finalize, _insert_merge
)
from cognistream.exceptions import ArityMismatch, NotMergeable, UnknownNode, BadPosition
from cognistream.logger import get_logger


def groups_of(counts, timestamps=None):
    """
    Builds deduped groups from {items: count}, every instance gets its own origin
    """
    groups, offset = {}, 0
    for key, count in counts.items():
        instances = []
        for i in range(count):
            timestamp = timestamps[key][i] if timestamps else 0
            instances.append(StructureInstance(tuple(key), timestamp, (0, offset)))
            offset += 1
        groups[tuple(key)] = StructureGroup(count, instances)
    return groups


def leaf_id(*items):
    return shape_id([Literal(item) for item in items])


def leaf(items, count=1):
    return leaf_node(tuple(items), groups_of({tuple(items): count})[tuple(items)])


leaf_counts = st.dictionaries(
    keys=st.lists(st.sampled_from("ABCD"), min_size=2, max_size=3).map(tuple),
    values=st.integers(min_value=1, max_value=4),
    max_size=50
)


class TestMerge(unittest.TestCase):
    """
    Test cases for merging two nodes into a template
    """
    logger = get_logger(__name__, "TEST")

    def test_one_disagreement_becomes_a_slot(self):
        result = merge(leaf("ABC", 2), leaf("ADC", 1))
        self.assertEqual(result.positions, [Literal("A"), Slot({"B": 2, "D": 1}), Literal("C")])
        self.assertEqual(result.level, 1)
        self.assertEqual(result.support, 3)
        self.assertEqual(result.children, [leaf_id("A", "B", "C"), leaf_id("A", "D", "C")])

    def test_identity_merge(self):
        result = merge(leaf("ABC"), leaf("ABC"))
        self.assertEqual(result.level, 0)
        self.assertEqual(result.node_id, leaf_id("A", "B", "C"), "No new slot, so the shape is unchanged")

    def test_two_disagreements(self):
        with self.assertRaises(NotMergeable):
            merge(leaf("ABC"), leaf("DEC"))

    def test_arity_mismatch(self):
        with self.assertRaises(ArityMismatch):
            merge(leaf("AB"), leaf("ABC"))

    def test_literal_joins_slot(self):
        template = merge(leaf("ABC"), leaf("ADC"))
        result = merge(template, leaf("EBC"))
        self.assertEqual(result.positions[0], Slot({"A": 2, "E": 1}))
        self.assertEqual(result.positions[1], Slot({"B": 2, "D": 1}))
        self.assertEqual(result.positions[2], Literal("C"))

    def test_level_never_drops(self):
        template = merge(leaf("ABC"), leaf("ADC"))
        for other in (leaf("ABC"), leaf("AEC"), leaf("FBC")):
            with self.subTest(other=other.items):
                self.assertGreaterEqual(merge(template, other).level, template.level)

    def test_shape_id_ignores_counts(self):
        self.assertEqual(
            shape_id([Literal("A"), Slot({"B": 1, "D": 5})]),
            shape_id([Literal("A"), Slot({"D": 2, "B": 2})])
        )

    @parameterized.expand([
        ("member", ("A", "D", "C"), True),
        ("non_member", ("A", "E", "C"), False),
        ("wrong_literal", ("X", "B", "C"), False)
    ])
    def test_strict_match(self, _, items, expected):
        template = merge(leaf("ABC"), leaf("ADC"))
        self.assertEqual(strict_match(template, items), expected)

    def test_leaf_matches_itself(self):
        node = leaf("ABC")
        self.assertTrue(strict_match(node, node.items))
        with self.assertRaises(ArityMismatch):
            strict_match(node, ("A", "B"))


class TestHierarchy(unittest.TestCase):
    """
    Test cases for building and querying the hierarchy of notions
    """
    logger = get_logger(__name__, "TEST")

    def setUp(self):
        self.hierarchy = build_hierarchy(groups_of(
            {("A", "B", "C"): 2, ("A", "D", "C"): 1},
            timestamps={("A", "B", "C"): [0, 2], ("A", "D", "C"): [1]}
        ))
        self.root_id = self.hierarchy.roots[0]

    def test_two_leaves(self):
        self.assertEqual(len(self.hierarchy), 3)
        self.assertEqual(len(self.hierarchy.roots), 1)

        root = self.hierarchy.get(self.root_id)
        self.assertEqual(root.positions, [Literal("A"), Slot({"B": 2, "D": 1}), Literal("C")])
        self.assertEqual(root.support, 3)
        self.assertEqual(len(self.hierarchy.leaves()), 2)

    def test_leaves_keep_instances(self):
        node = find_node(self.hierarchy, ("A", "B", "C"))
        self.assertEqual([i.timestamp for i in node.instances], [0, 2])
        self.assertIsNone(find_node(self.hierarchy, ("Z", "Z", "Z")))

    def test_single_leaf(self):
        hierarchy = build_hierarchy(groups_of({("A", "B"): 3}))
        self.assertEqual(list(hierarchy.nodes), [leaf_id("A", "B")])
        self.assertEqual(hierarchy.roots, [leaf_id("A", "B")])
        self.assertTrue(hierarchy.get(leaf_id("A", "B")).is_leaf)

    def test_empty(self):
        self.assertEqual(len(build_hierarchy({})), 0)

    def test_three_leaves(self):
        hierarchy = build_hierarchy(groups_of({("A", "B", "C"): 1, ("A", "D", "C"): 1, ("E", "B", "C"): 1}))
        self.assertEqual(len(hierarchy.roots), 1)

        root = hierarchy.get(hierarchy.roots[0])
        self.assertEqual(root.positions, [Slot({"A": 2, "E": 1}), Slot({"B": 2, "D": 1}), Literal("C")])

        middle = [node for node in hierarchy.templates() if node.level == 1]
        self.assertEqual(len(middle), 1)
        self.assertEqual(middle[0].positions, [Literal("A"), Slot({"B": 1, "D": 1}), Literal("C")])

    def test_saturation(self):
        """
        Leaves chained by one-position differences generalize to an all-slot root
        """
        hierarchy = build_hierarchy(groups_of({
            ("A", "B", "C"): 1, ("D", "B", "C"): 1, ("D", "E", "C"): 1, ("D", "E", "F"): 1
        }))
        self.assertEqual(len(hierarchy.roots), 1)
        root = hierarchy.get(hierarchy.roots[0])
        self.assertEqual(root.level, root.arity)
        self.assertEqual(root.members(), set("ABCDEF"))

    def test_arity_classes_stay_apart(self):
        hierarchy = build_hierarchy(groups_of({("A", "B"): 1, ("A", "C"): 1, ("A", "B", "C"): 1}))
        self.assertEqual([hierarchy.get(root).arity for root in hierarchy.roots], [2, 3])

    def test_export(self):
        abc, adc = leaf_id("A", "B", "C"), leaf_id("A", "D", "C")
        leaf_lines = sorted([f"{abc}\t0\tlit:A|lit:B|lit:C\t-", f"{adc}\t0\tlit:A|lit:D|lit:C\t-"])
        root_line = f"{self.root_id}\t1\tlit:A|slot:{{B:2,D:1}}|lit:C\t{','.join(sorted([abc, adc]))}"
        self.assertEqual(export_hierarchy(self.hierarchy), leaf_lines + [root_line])

    def test_select_column(self):
        selected = relation_select(self.hierarchy, self.root_id, 1, "B")
        self.assertEqual([i.items for i in selected], [("A", "B", "C"), ("A", "B", "C")])
        self.assertEqual(relation_select(self.hierarchy, self.root_id, 1, "Q"), [])

    def test_select_partitions_leaves(self):
        root = self.hierarchy.get(self.root_id)
        parts = [i for member in root.positions[1].members() for i in relation_select(self.hierarchy, self.root_id, 1, member)]
        self.assertCountEqual(parts, relation_union(self.hierarchy, [self.root_id]))

    def test_select_errors(self):
        with self.assertRaises(UnknownNode):
            relation_select(self.hierarchy, "missing", 0, "A")
        with self.assertRaises(BadPosition):
            relation_select(self.hierarchy, self.root_id, 3, "A")

    def test_union(self):
        abc, adc = leaf_id("A", "B", "C"), leaf_id("A", "D", "C")
        self.assertEqual(relation_union(self.hierarchy, [abc, abc]), relation_union(self.hierarchy, [abc]))
        self.assertEqual(len(relation_union(self.hierarchy, [abc, adc])), 3)
        self.assertEqual(relation_union(self.hierarchy, [self.root_id, abc]), relation_union(self.hierarchy, [self.root_id]))
        self.assertEqual([i.timestamp for i in relation_union(self.hierarchy, [self.root_id])], [0, 1, 2])

    def test_admit(self):
        node = admit(self.hierarchy, self.root_id, 1, "E")
        self.assertEqual(node.node_id, self.root_id, "Admission keeps the node id")
        self.assertTrue(strict_match(node, ("A", "E", "C")))

        with self.assertRaises(BadPosition):
            admit(self.hierarchy, self.root_id, 0, "E")

    def test_window_counts(self):
        counts = window_counts(self.hierarchy)
        self.assertEqual(counts[0][self.root_id], 1)
        self.assertEqual(counts[1][leaf_id("A", "D", "C")], 1)
        self.assertEqual(sum(counts[w][self.root_id] for w in counts), 3)

    def test_leaves_under_and_ancestors(self):
        abc = leaf_id("A", "B", "C")
        self.assertEqual([node.node_id for node in leaves_under(self.hierarchy, abc)], [abc])
        self.assertEqual(ancestors(self.hierarchy, abc), {self.root_id})
        self.assertEqual(ancestors(self.hierarchy, self.root_id), set())

    def test_copy_is_independent(self):
        duplicate = self.hierarchy.copy()
        admit(duplicate, self.root_id, 1, "E")
        self.assertNotIn("E", self.hierarchy.get(self.root_id).positions[1].vector)

    @settings(max_examples=60, deadline=None)
    @given(leaf_counts)
    def test_ancestors_are_exactly_the_matching_templates(self, counts):
        hierarchy = build_hierarchy(groups_of(counts))
        for leaf_node_ in hierarchy.leaves():
            above = ancestors(hierarchy, leaf_node_.node_id)
            for node in hierarchy.templates():
                matches = node.arity == leaf_node_.arity and strict_match(node, leaf_node_.items)
                self.assertEqual(node.node_id in above, matches, f"{node.node_id} vs leaf {leaf_node_.items}")

    @settings(max_examples=60, deadline=None)
    @given(leaf_counts)
    def test_structure_invariants(self, counts):
        hierarchy = build_hierarchy(groups_of(counts))
        self.assertEqual(len(hierarchy.leaves()), len(counts))

        for node in hierarchy.nodes.values():
            for child_id in node.children:
                self.assertLess(hierarchy.get(child_id).level, node.level, "children sit strictly lower")
                self.assertIn(node.node_id, hierarchy.get(child_id).parents)
            matched = [leaf.support for leaf in hierarchy.leaves() if leaf.arity == node.arity and strict_match(node, leaf.items)]
            self.assertEqual(node.support, sum(matched))

    @settings(max_examples=40, deadline=None)
    @given(leaf_counts)
    def test_deterministic(self, counts):
        forward = build_hierarchy(groups_of(counts))
        backward = build_hierarchy(groups_of(dict(reversed(list(counts.items())))))
        self.assertEqual(export_hierarchy(forward), export_hierarchy(backward))


def first_pair_scan(groups):
    """
    Builds the hierarchy by rescanning the sorted frontier for its first mergeable pair after every merge
    """
    hierarchy, frontiers = Hierarchy(), defaultdict(list)
    for key, group in groups.items():
        node = leaf_node(key, group)
        hierarchy.nodes[node.node_id] = node
        frontiers[node.arity].append(node)

    for arity in sorted(frontiers):
        frontier = frontiers[arity]
        while True:
            frontier.sort(key=lambda node: (-node.support, node.shape_key()))
            pair = None
            for i, u in enumerate(frontier):
                for v in frontier[i + 1:]:
                    try:
                        pair = (u, v, merge(u, v))
                        break
                    except NotMergeable:
                        continue
                if pair is not None:
                    break
            if pair is None:
                break

            u, v, result = pair
            frontier[:] = [node for node in frontier if node.node_id not in (u.node_id, v.node_id)]
            placed = _insert_merge(hierarchy, u, v, result)
            if not placed.parents and all(node.node_id != placed.node_id for node in frontier):
                frontier.append(placed)

    _finalize(hierarchy)
    return hierarchy


def random_counts(seed, size, alphabet, arities):
    rng = random.Random(seed)
    counts = {}
    while len(counts) < size:
        key = tuple(rng.choice(alphabet) for _ in range(rng.choice(arities)))
        counts[key] = rng.randint(1, 5)
    return counts


class TestFrontierIndex(unittest.TestCase):
    """
    Test cases for finding the first mergeable pair of the frontier through the leaf index
    """
    logger = get_logger(__name__, "TEST")

    @settings(max_examples=80, deadline=None)
    @given(st.dictionaries(
        keys=st.lists(st.sampled_from("ABCDEF"), min_size=1, max_size=4).map(tuple),
        values=st.integers(min_value=1, max_value=6),
        max_size=40
    ))
    def test_same_hierarchy_as_rescanning(self, counts):
        self.assertEqual(export_hierarchy(build_hierarchy(groups_of(counts))), export_hierarchy(first_pair_scan(groups_of(counts))))

    @parameterized.expand([
        ("dense_pairs", 1, 30, "ABCDEF", (2,)),
        ("triples", 2, 80, "ABCDE", (3,)),
        ("mixed_arity", 3, 80, "ABCDEFG", (2, 3, 4)),
    ])
    def test_seeded_streams_match_rescanning(self, _, seed, size, alphabet, arities):
        counts = random_counts(seed, size, alphabet, arities)
        self.assertEqual(export_hierarchy(build_hierarchy(groups_of(counts))), export_hierarchy(first_pair_scan(groups_of(counts))))

    def test_thousands_of_leaves(self):
        counts = random_counts(11, 2000, "ABCDEFGHIJKLMNOPQRST", (3,))
        hierarchy = build_hierarchy(groups_of(counts))

        self.assertEqual(len(hierarchy.leaves()), 2000)
        for node in hierarchy.nodes.values():
            for child_id in node.children:
                self.assertLess(hierarchy.get(child_id).level, node.level)
        for root_id in hierarchy.roots:
            root = hierarchy.get(root_id)
            under = leaves_under(hierarchy, root_id)
            self.assertEqual(root.support, sum(leaf.support for leaf in under))
