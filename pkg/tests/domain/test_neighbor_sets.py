import numpy as np
import pytest
from pydantic import ValidationError

from rmna.domain.errors import ConsistencyError
from rmna.domain.neighbors import NeighborSets
from rmna.domain.report import RankingReport
from rmna.domain.rules import HornRule, RuleMetrics, TransformedNeighbor


def _tn(rel, entity, hc=0.9, conf=0.8, l_norm=2 / 3, s=0.5):
    return TransformedNeighbor(rel=rel, entity=entity, hc=hc, conf=conf, l_norm=l_norm, s=s)


def test_from_graph_packs_original_neighbors(make_kg):
    kg = make_kg([("a", "r", "b"), ("a", "s", "c")])
    ns = NeighborSets.from_graph(kg)
    loop = kg.self_loop_relation
    assert ns.entity_count == 3
    assert ns.original(0) == [(loop, 0), (0, 1), (1, 2)]
    assert ns.orig_ptr.tolist() == [0, 3, 4, 5]
    assert ns.orig_rel[:3].tolist() == [loop, 0, 1]
    assert ns.transformed_count == 0
    assert ns.trans_meta.shape == (0, 4)


def test_transformed_metadata_is_packed_in_order(make_kg):
    kg = make_kg([("a", "r", "b")], extra_entities=["c"])
    transformed = [[_tn(0, 2, hc=0.75)], [], []]
    ns = NeighborSets.from_graph(kg, transformed)
    assert ns.trans_ptr.tolist() == [0, 1, 1, 1]
    np.testing.assert_allclose(ns.trans_meta[0], [0.75, 0.8, 2 / 3, 0.5], rtol=1e-6)


def test_pair_cannot_be_both_original_and_transformed(make_kg):
    kg = make_kg([("a", "r", "b")])
    with pytest.raises(ConsistencyError):
        NeighborSets.from_graph(kg, [[_tn(0, 1)], []])


def test_transformed_lists_must_cover_every_entity(make_kg):
    kg = make_kg([("a", "r", "b")])
    with pytest.raises(ConsistencyError):
        NeighborSets.from_graph(kg, [[]])


def test_with_original_order_permutes_one_entity(make_kg):
    kg = make_kg([("a", "r", "b"), ("a", "s", "c")])
    ns = NeighborSets.from_graph(kg).with_original_order(0, [2, 0, 1])
    assert ns.original(0) == [(1, 2), (kg.self_loop_relation, 0), (0, 1)]
    with pytest.raises(ValueError):
        ns.with_original_order(0, [0, 0, 1])


def test_horn_rule_needs_a_body():
    with pytest.raises(ValidationError):
        HornRule(body=(), head=0)
    rule = HornRule(body=(1, 2), head=0)
    assert rule.length == 2
    assert rule.sort_key() == (0, 2, (1, 2))


def test_rule_metrics_are_ratios():
    with pytest.raises(ValidationError):
        RuleMetrics(support=1, head_coverage=1.5, confidence=0.5)


def test_transformed_neighbor_l_norm_range():
    with pytest.raises(ValidationError):
        _tn(0, 1, l_norm=0.0)
    assert _tn(0, 1).metadata() == (0.9, 0.8, 2 / 3, 0.5)


def test_report_rejects_non_monotone_hits():
    with pytest.raises(ValidationError):
        RankingReport(mode="raw", mrr=0.5, hits_at={1: 0.6, 3: 0.5, 10: 0.9}, per_triple_ranks=[(1, 2)])


def test_report_metrics_and_rank_count():
    report = RankingReport(mode="filtered", mrr=0.75, hits_at={1: 0.5, 3: 1.0, 10: 1.0}, per_triple_ranks=[(1, 2)])
    assert report.rank_count == 2
    assert report.metrics() == {"mrr": 0.75, "hits@1": 0.5, "hits@3": 1.0, "hits@10": 1.0}
