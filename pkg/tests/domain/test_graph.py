import numpy as np
import pytest

from rmna.domain.errors import GraphStateError, UnknownSymbolError
from rmna.domain.graph import KnowledgeGraph, Triple, Vocabulary, add_inverse_relations, original_triples


def test_vocabulary_interns_in_first_appearance_order():
    vocab = Vocabulary()
    assert vocab.intern_entity("b") == 0
    assert vocab.intern_entity("a") == 1
    assert vocab.intern_entity("b") == 0
    assert vocab.entities == ("b", "a")
    assert vocab.entity_id("a") == 1
    with pytest.raises(UnknownSymbolError) as exc:
        vocab.relation_id("missing", line_no=7)
    assert exc.value.line_no == 7
    assert "missing" in str(exc.value)


def test_vocabulary_fingerprint_changes_with_any_label():
    a = Vocabulary(["x", "y"], ["r"])
    b = Vocabulary(["x", "y"], ["r"])
    c = Vocabulary(["x", "z"], ["r"])
    assert a.fingerprint() == b.fingerprint()
    assert a.fingerprint() != c.fingerprint()


def test_duplicates_are_dropped(make_kg):
    kg = make_kg([("a", "r", "b"), ("a", "r", "b"), ("a", "s", "c")])
    assert kg.entity_count == 3
    assert kg.relation_count == 2
    assert len(kg) == 2


def test_triple_outside_vocabulary_is_rejected():
    vocab = Vocabulary(["a"], ["r"])
    with pytest.raises(IndexError):
        KnowledgeGraph(vocab, [(0, 0, 3)])


def test_inverse_augmentation_single_triple(make_kg):
    kg = add_inverse_relations(make_kg([("a", "r", "b")]))
    assert kg.relation_count == 2
    assert set(kg.triple_set) == {Triple(0, 0, 1), Triple(1, 1, 0)}
    assert kg.relation_label(1) == "inv_r"
    assert kg.relation_id("inv_r") == 1
    assert kg.inverse_of(0) == 1 and kg.inverse_of(1) == 0


def test_inverse_augmentation_symmetric_pair(make_kg):
    kg = add_inverse_relations(make_kg([("a", "r", "b"), ("b", "r", "a")]))
    assert len(kg) == 4


def test_inverse_augmentation_of_empty_graph():
    kg = add_inverse_relations(KnowledgeGraph(Vocabulary(), np.zeros((0, 3), dtype=np.int64)))
    assert len(kg) == 0
    assert kg.relation_count == 0


def test_double_augmentation_is_an_error(make_kg):
    kg = add_inverse_relations(make_kg([("a", "r", "b")]))
    with pytest.raises(GraphStateError):
        add_inverse_relations(kg)


def test_original_triples_drops_inverses(make_kg):
    base = make_kg([("a", "r", "b"), ("b", "s", "c")])
    kg = add_inverse_relations(base)
    np.testing.assert_array_equal(original_triples(kg), base.triples)


def test_one_hop_neighbors_put_self_loop_first(make_kg):
    kg = make_kg([("a", "r", "b")], extra_entities=["c"])
    a, b, c = 0, 1, 2
    assert kg.one_hop_neighbors(a) == [(kg.self_loop_relation, a), (0, b)]
    assert kg.one_hop_neighbors(c) == [(kg.self_loop_relation, c)]
    assert kg.relation_label(kg.self_loop_relation) == "self_loop"


def test_one_hop_neighbors_rejects_unknown_entity(make_kg):
    kg = make_kg([("a", "r", "b")])
    with pytest.raises(IndexError):
        kg.one_hop_neighbors(5)


def test_shakespeare_has_masterpiece_neighbor(shakespeare_graph):
    kg = shakespeare_graph
    ws = kg.vocab.entity_id("William_Shakespeare")
    pair = (kg.relation_id("masterpiece"), kg.vocab.entity_id("Hamlet"))
    assert pair in kg.one_hop_neighbors(ws)


def test_walks_on_a_chain(make_kg):
    kg = make_kg([("a", "r1", "b"), ("b", "r2", "c")])
    walks = set(kg.walks_up_to(0, 2))
    assert walks == {((0,), 1), ((0, 1), 2)}


def test_walks_of_isolated_entity_are_empty(make_kg):
    kg = make_kg([("a", "r", "b")], extra_entities=["c"])
    assert list(kg.walks_up_to(2, 3)) == []


def test_walks_skip_immediate_inverse_backtracking(make_kg):
    kg = add_inverse_relations(make_kg([("a", "r", "b")]))
    walks = set(kg.walks_up_to(0, 3))
    # a -r-> b -inv_r-> a is a backtrack, so nothing longer than one step survives
    assert walks == {((0,), 1)}


def test_walks_keep_longer_cycles(make_kg):
    kg = make_kg([("a", "r", "b"), ("b", "s", "c"), ("c", "t", "a")])
    assert ((0, 1, 2), 0) in set(kg.walks_up_to(0, 3))


def test_shakespeare_two_step_walk(shakespeare_graph):
    kg = shakespeare_graph
    ws = kg.vocab.entity_id("William_Shakespeare")
    path = (kg.relation_id("masterpiece"), kg.relation_id("theme"))
    assert (path, kg.vocab.entity_id("drama")) in set(kg.walks_up_to(ws, 2))


def test_walks_need_positive_length(make_kg):
    kg = make_kg([("a", "r", "b")])
    with pytest.raises(ValueError):
        list(kg.walks_up_to(0, 0))


def test_contains_codes_matches_membership(make_kg):
    kg = make_kg([("a", "r", "b"), ("b", "r", "c")])
    codes = kg.encode(np.array([0, 1, 0]), np.array([0, 0, 0]), np.array([1, 2, 2]))
    assert kg.contains_codes(codes).tolist() == [True, True, False]
    assert (0, 0, 1) in kg
    assert (0, 0, 2) not in kg
