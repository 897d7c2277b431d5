import numpy as np
import pytest

from rmna.application.sampling import corrupt_batch, sample_negatives
from rmna.domain.errors import NegativeSamplingExhausted
from rmna.domain.graph import Triple

FULL = [("a", "r", "a"), ("a", "r", "b"), ("b", "r", "a"), ("b", "r", "b")]


def test_negatives_corrupt_exactly_one_side(t2_graph):
    kg = t2_graph
    t = Triple(kg.vocab.entity_id("a"), kg.relation_id("r1"), kg.vocab.entity_id("b"))
    negs = sample_negatives(kg, t, 50, seed=0)
    assert len(negs) == 50
    for n in negs:
        assert n not in kg
        assert n.rel == t.rel
        assert (n.head == t.head) != (n.tail == t.tail)


def test_negatives_are_seeded(t2_graph):
    t = (0, 0, 1)
    assert sample_negatives(t2_graph, t, 10, seed=5) == sample_negatives(t2_graph, t, 10, seed=5)


def test_zero_negatives(t2_graph):
    assert sample_negatives(t2_graph, (0, 0, 1), 0, seed=0) == []


def test_saturated_graph_exhausts(make_kg):
    kg = make_kg(FULL)
    with pytest.raises(NegativeSamplingExhausted):
        sample_negatives(kg, (0, 0, 0), 1, seed=0)


def test_corrupt_batch_aligns_positives(t2_graph):
    kg = t2_graph
    rng = np.random.default_rng(1)
    pos, neg = corrupt_batch(kg, kg.triples, 3, rng)
    assert pos.shape == neg.shape == (3 * len(kg), 3)
    np.testing.assert_array_equal(pos[:3], np.repeat(kg.triples[:1], 3, axis=0))
    assert not kg.contains_codes(kg.encode(neg[:, 0], neg[:, 1], neg[:, 2])).any()
    changed = (pos != neg).sum(axis=1)
    assert set(changed.tolist()) == {1}
    np.testing.assert_array_equal(pos[:, 1], neg[:, 1])


def test_corrupt_batch_is_reproducible(t2_graph):
    a = corrupt_batch(t2_graph, t2_graph.triples, 2, np.random.default_rng(9))
    b = corrupt_batch(t2_graph, t2_graph.triples, 2, np.random.default_rng(9))
    np.testing.assert_array_equal(a[1], b[1])


def test_corrupt_batch_exhausts_on_saturated_graph(make_kg):
    kg = make_kg(FULL)
    with pytest.raises(NegativeSamplingExhausted):
        corrupt_batch(kg, kg.triples[:1], 1, np.random.default_rng(0), max_rounds=5)


def test_replacement_avoids_both_ends(make_kg):
    kg = make_kg([("a", "r", "b")], extra_entities=["c"])
    a, b, c = (kg.vocab.entity_id(x) for x in "abc")
    negs = set(sample_negatives(kg, Triple(a, 0, b), 200, seed=0))
    assert negs == {Triple(c, 0, b), Triple(a, 0, c)}


def test_corrupt_batch_replacement_avoids_both_ends(make_kg):
    kg = make_kg([("a", "r", "b")], extra_entities=["c"])
    a, b, c = (kg.vocab.entity_id(x) for x in "abc")
    _, neg = corrupt_batch(kg, kg.triples, 200, np.random.default_rng(0))
    assert {tuple(int(x) for x in row) for row in neg} == {(c, 0, b), (a, 0, c)}


def test_two_entity_graph_has_no_legal_corruption(make_kg):
    kg = make_kg([("a", "r", "b")])
    with pytest.raises(NegativeSamplingExhausted):
        sample_negatives(kg, (0, 0, 1), 1, seed=0)
    with pytest.raises(NegativeSamplingExhausted):
        corrupt_batch(kg, kg.triples, 1, np.random.default_rng(0), max_rounds=5)
