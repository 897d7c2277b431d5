import bisect
import math

import numpy as np
import pytest

from rmna.application.evaluator import KnownTriples, evaluate, rank_triple, report_from_ranks
from rmna.domain.embeddings import EmbeddingTable


class TableScorer:
    """Energies looked up from a dense (entities, relations, entities) table."""

    def __init__(self, table: np.ndarray):
        self.table = table

    def energies(self, heads, rels, tails):
        return self.table[heads, rels, tails]


def _scorer_for_tail(h, tail_energies):
    n = len(tail_energies)
    table = np.full((n, 1, n), 100.0)
    table[h, 0, :] = tail_energies
    return TableScorer(table)


def test_lowest_energy_ranks_first():
    scorer = _scorer_for_tail(0, [5.0, 0.1, 3.0])
    _, tail_rank = rank_triple(scorer, (0, 0, 1), 3, None, "raw")
    assert tail_rank == 1


def test_rank_counts_strictly_lower_energies():
    scorer = _scorer_for_tail(0, [1.0, 2.0, 3.0, 3.0, 4.0])
    _, tail_rank = rank_triple(scorer, (0, 0, 1), 5, None, "raw")
    assert tail_rank == 2


def test_filtering_removes_known_competitors():
    scorer = _scorer_for_tail(0, [1.0, 2.0, 3.0, 3.0, 4.0])
    known = KnownTriples.from_triples([(0, 0, 0), (0, 0, 1)], 5, 1)
    _, tail_rank = rank_triple(scorer, (0, 0, 1), 5, known, "filtered")
    assert tail_rank == 1


def test_ties_count_half_rounded_up():
    scorer = _scorer_for_tail(0, [2.0, 2.0, 2.0, 2.0])
    _, tail_rank = rank_triple(scorer, (0, 0, 1), 4, None, "raw")
    # three ties -> 1 + ceil(3 / 2)
    assert tail_rank == 3


def test_filtered_mode_needs_known_triples():
    with pytest.raises(ValueError):
        rank_triple(_scorer_for_tail(0, [1.0, 2.0]), (0, 0, 1), 2, None, "filtered")


def test_report_from_known_ranks():
    report = report_from_ranks([(1, 2), (4, 1), (1, 1)], "raw")
    assert report.rank_count == 6
    flat = [1, 2, 4, 1, 1, 1]
    assert report.mrr == pytest.approx(sum(1 / r for r in flat) / 6)
    assert report.hits_at[1] == pytest.approx(4 / 6)


def test_report_three_ranks():
    # ranks {1, 2, 4}, each seen on both sides
    report = report_from_ranks([(1, 1), (2, 2), (4, 4)], "filtered")
    assert report.mrr == pytest.approx((1 + 0.5 + 0.25) / 3)
    assert report.hits_at == {1: pytest.approx(1 / 3), 3: pytest.approx(2 / 3), 10: 1.0}


def test_all_first_ranks():
    report = report_from_ranks([(1, 1), (1, 1)], "raw")
    assert report.mrr == 1.0
    assert all(v == 1.0 for v in report.hits_at.values())


def test_empty_inputs_are_rejected():
    with pytest.raises(ValueError):
        report_from_ranks([], "raw")
    with pytest.raises(ValueError):
        evaluate(TableScorer(np.zeros((2, 1, 2))), np.zeros((0, 3)), None, "raw", entity_count=2)


def _oracle_rank(energies, target, excluded):
    others = sorted(e for i, e in enumerate(energies) if i != target and i not in excluded)
    own = energies[target]
    lower = bisect.bisect_left(others, own)
    ties = bisect.bisect_right(others, own) - lower
    return 1 + lower + math.ceil(ties / 2)


def test_ranking_matches_sort_and_count_oracle():
    rng = np.random.default_rng(12)
    for _ in range(1000):
        n = int(rng.integers(2, 21))
        # small integer energies make ties common
        table = rng.integers(0, 5, size=(n, 1, n)).astype(np.float64)
        h, t = (int(x) for x in rng.integers(n, size=2))
        known_tails = {int(x) for x in rng.integers(n, size=int(rng.integers(0, n)))} | {t}
        known_heads = {int(x) for x in rng.integers(n, size=int(rng.integers(0, n)))} | {h}
        known = KnownTriples.from_triples(
            [(h, 0, x) for x in known_tails] + [(x, 0, t) for x in known_heads], n, 1
        )
        scorer = TableScorer(table)

        raw = rank_triple(scorer, (h, 0, t), n, None, "raw")
        filtered = rank_triple(scorer, (h, 0, t), n, known, "filtered")

        assert raw == (_oracle_rank(table[:, 0, t], h, set()), _oracle_rank(table[h, 0, :], t, set()))
        assert filtered == (
            _oracle_rank(table[:, 0, t], h, known_heads - {h}),
            _oracle_rank(table[h, 0, :], t, known_tails - {t}),
        )
        assert filtered[0] <= raw[0] and filtered[1] <= raw[1]


def test_monotone_transform_keeps_ranks():
    rng = np.random.default_rng(3)
    table = rng.normal(size=(8, 2, 8))
    test = np.array([[0, 0, 1], [2, 1, 3], [4, 0, 5]])
    a = evaluate(TableScorer(table), test, None, "raw", entity_count=8)
    b = evaluate(TableScorer(np.exp(3.0 * table) + 7.0), test, None, "raw", entity_count=8)
    assert a.per_triple_ranks == b.per_triple_ranks


def test_known_triples_span_splits(make_kg):
    train = make_kg([("a", "r", "b"), ("b", "r", "c")])
    known = KnownTriples([train, None])
    assert len(known) == 2
    assert known.contains(np.array([0, 0]), np.array([0, 0]), np.array([1, 2])).tolist() == [True, False]
    with pytest.raises(ValueError):
        KnownTriples([None])


def test_evaluate_transe_table_filtered_not_worse(chain_graph):
    kg = chain_graph
    rng = np.random.default_rng(0)
    table = EmbeddingTable(rng.normal(size=(kg.entity_count, 4)), rng.normal(size=(kg.relation_count + 1, 4)))
    known = KnownTriples([kg])
    raw = evaluate(table, kg, None, "raw", chunk_size=3, progress=False)
    filtered = evaluate(table, kg, known, "filtered", chunk_size=3, progress=False)
    assert filtered.mrr >= raw.mrr
    assert raw.rank_count == 2 * len(kg)
