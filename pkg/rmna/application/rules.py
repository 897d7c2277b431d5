"""
Path-rule mining and matching.

Rule statistics are computed on relation adjacency matrices: the body
``r1, ..., rn`` is the boolean product ``A[r1] @ ... @ A[rn]`` whose non-zero
cells are exactly the (e1, e2) pairs some body walk connects. Pairs, not
walks, are counted.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from functools import reduce
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from tqdm import tqdm

from rmna.config import MiningConfig
from rmna.domain.embeddings import EmbeddingTable
from rmna.domain.errors import UndefinedMetricError
from rmna.domain.graph import KnowledgeGraph
from rmna.domain.rules import HornRule, RuleMetrics, TransformedNeighbor

logger = logging.getLogger(__name__)

MinedRule = Tuple[HornRule, RuleMetrics]


class RelationMatrices:
    """Per-relation 0/1 CSR adjacency plus a pair -> relations incidence for support counting."""

    def __init__(self, kg: KnowledgeGraph):
        self.entity_count = n = kg.entity_count
        self.relation_count = n_rel = kg.relation_count
        tr = kg.triples
        self._mats: List[sparse.csr_matrix] = []
        for r in range(n_rel):
            sel = tr[tr[:, 1] == r]
            self._mats.append(
                sparse.csr_matrix(
                    (np.ones(sel.shape[0], dtype=np.int32), (sel[:, 0], sel[:, 2])),
                    shape=(n, n),
                )
            )
        codes = tr[:, 0] * n + tr[:, 2]
        self.pair_codes, inverse = np.unique(codes, return_inverse=True)
        self.pair_rel = sparse.csr_matrix(
            (np.ones(tr.shape[0], dtype=np.int64), (inverse.ravel(), tr[:, 1])),
            shape=(self.pair_codes.shape[0], n_rel),
        )
        self.head_counts = np.bincount(tr[:, 1], minlength=n_rel).astype(np.int64)

    def __getitem__(self, rel: int) -> sparse.csr_matrix:
        return self._mats[rel]

    def compose(self, left: sparse.csr_matrix, rel: int) -> sparse.csr_matrix:
        out = (left @ self._mats[rel]).tocsr()
        out.data[:] = 1
        return out

    def body_matrix(self, body: Sequence[int]) -> sparse.csr_matrix:
        for r in body:
            if not 0 <= r < self.relation_count:
                raise IndexError(f"relation id {r} out of range")
        return reduce(self.compose, body[1:], self._mats[body[0]])

    def support_by_head(self, body: sparse.csr_matrix) -> np.ndarray:
        """Joint-satisfaction pair count of ``body`` for every head relation at once."""
        out = np.zeros(self.relation_count, dtype=np.int64)
        if body.nnz == 0 or self.pair_codes.size == 0:
            return out
        coo = body.tocoo()
        codes = coo.row.astype(np.int64) * self.entity_count + coo.col
        pos = np.minimum(np.searchsorted(self.pair_codes, codes), self.pair_codes.size - 1)
        hit = pos[self.pair_codes[pos] == codes]
        if hit.size:
            out += np.asarray(self.pair_rel[hit].sum(axis=0), dtype=np.int64).ravel()
        return out


def _matrices(kg: KnowledgeGraph, matrices: Optional[RelationMatrices]) -> RelationMatrices:
    return matrices if matrices is not None else RelationMatrices(kg)


def rule_support(kg: KnowledgeGraph, rule: HornRule, *, matrices: Optional[RelationMatrices] = None) -> int:
    rm = _matrices(kg, matrices)
    body = rm.body_matrix(rule.body)
    if not 0 <= rule.head < rm.relation_count:
        raise IndexError(f"relation id {rule.head} out of range")
    return int(body.multiply(rm[rule.head]).count_nonzero())


def head_coverage(kg: KnowledgeGraph, rule: HornRule, *, matrices: Optional[RelationMatrices] = None) -> float:
    rm = _matrices(kg, matrices)
    support = rule_support(kg, rule, matrices=rm)
    heads = int(rm.head_counts[rule.head])
    if heads == 0:
        raise UndefinedMetricError(f"head relation {rule.head} has no instances")
    return support / heads


def rule_confidence(kg: KnowledgeGraph, rule: HornRule, *, matrices: Optional[RelationMatrices] = None) -> float:
    rm = _matrices(kg, matrices)
    body = rm.body_matrix(rule.body)
    if body.nnz == 0:
        raise UndefinedMetricError(f"body {rule.body} connects no entity pair")
    return int(body.multiply(rm[rule.head]).count_nonzero()) / body.nnz


def mine_path_rules(
    kg: KnowledgeGraph,
    config: MiningConfig,
    *,
    workers: int = 1,
    progress: Optional[bool] = None,
    matrices: Optional[RelationMatrices] = None,
) -> List[MinedRule]:
    """
    Every path rule with body length 1..l_max and support >= min_support.

    Bodies are explored depth-first; a prefix whose product is empty cannot
    be extended into a non-empty body, so the subtree is pruned. Results are
    sorted by (head, body length, body).
    """
    if len(kg) == 0:
        return []
    rm = _matrices(kg, matrices)
    l_max = config.l_max

    def grow(body: Tuple[int, ...], mat: sparse.csr_matrix, out: List[MinedRule]) -> None:
        if mat.nnz == 0:
            return
        supports = rm.support_by_head(mat)
        body_pairs = int(mat.nnz)
        for head in np.flatnonzero(supports >= config.min_support):
            head = int(head)
            if body == (head,):
                continue
            sup = int(supports[head])
            out.append(
                (
                    HornRule(body=body, head=head),
                    RuleMetrics(
                        support=sup,
                        head_coverage=sup / int(rm.head_counts[head]),
                        confidence=sup / body_pairs,
                    ),
                )
            )
        if len(body) < l_max:
            for r in range(rm.relation_count):
                grow(body + (r,), rm.compose(mat, r), out)

    def mine_from(first: int) -> List[MinedRule]:
        out: List[MinedRule] = []
        grow((first,), rm[first], out)
        return out

    firsts = range(rm.relation_count)
    disable = None if progress is None else not progress
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        chunks = list(
            tqdm(pool.map(mine_from, firsts), total=len(firsts), desc="mine", disable=disable)
        )
    rules = [item for chunk in chunks for item in chunk]
    rules.sort(key=lambda item: item[0].sort_key())
    logger.info("[rules] mined %d path rules (l_max=%d)", len(rules), l_max)
    return rules


def filter_rules(rules: Sequence[MinedRule], hc_min: float, conf_min: float) -> List[MinedRule]:
    """Keep rules strictly above both thresholds, in input order."""
    for name, v in (("hc_min", hc_min), ("conf_min", conf_min)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {v}")
    kept = [
        (rule, m)
        for rule, m in rules
        if m.head_coverage > hc_min and m.confidence > conf_min
    ]
    logger.info("[rules] kept %d of %d rules (hc > %s, conf > %s)", len(kept), len(rules), hc_min, conf_min)
    return kept


class _TrieNode:
    __slots__ = ("children", "rules")

    def __init__(self):
        self.children: Dict[int, "_TrieNode"] = {}
        # (head, hc, conf) of rules whose body ends here
        self.rules: List[Tuple[int, float, float]] = []


def _build_trie(rules: Sequence[MinedRule]) -> _TrieNode:
    root = _TrieNode()
    for rule, m in rules:
        node = root
        for r in rule.body:
            node = node.children.setdefault(r, _TrieNode())
        node.rules.append((rule.head, m.head_coverage, m.confidence))
    return root


# (rank key, hc, conf, body); the smaller rank key wins
_Candidate = Tuple[Tuple[float, float, int, Tuple[int, ...]], float, float, Tuple[int, ...]]


def _match_entity(kg: KnowledgeGraph, root: _TrieNode, e: int) -> Dict[Tuple[int, int], _Candidate]:
    ptr, rels, ents = kg.adjacency_ptr, kg.adjacency_rel, kg.adjacency_ent
    original = set(kg.out_adj(e))
    best: Dict[Tuple[int, int], _Candidate] = {}

    stack: List[Tuple[int, _TrieNode, Tuple[int, ...], int, int]] = [(e, root, (), -1, -1)]
    while stack:
        node_ent, node, path, prev_ent, prev_rel = stack.pop()
        lo, hi = int(ptr[node_ent]), int(ptr[node_ent + 1])
        for i in range(lo, hi):
            r = int(rels[i])
            child = node.children.get(r)
            if child is None:
                continue
            t = int(ents[i])
            if prev_rel >= 0 and t == prev_ent and kg.inverse_of(prev_rel) == r:
                continue
            body = path + (r,)
            for head, hc, conf in child.rules:
                if (head, t) in original:
                    continue
                key = (-conf, -hc, len(body), body)
                cur = best.get((head, t))
                if cur is None or key < cur[0]:
                    best[(head, t)] = (key, hc, conf, body)
            if child.children:
                stack.append((t, child, body, node_ent, r))
    return best


def match_rules(
    kg: KnowledgeGraph,
    selected_rules: Sequence[MinedRule],
    base_embeddings: EmbeddingTable,
    l_max: int,
    *,
    workers: int = 1,
    progress: Optional[bool] = None,
) -> List[List[TransformedNeighbor]]:
    """
    Transformed one-hop neighbors for every entity.

    Each selected rule whose body is walked from ``e`` (no immediate inverse
    backtracking) yields ``(head, end)`` unless that pair is already an
    original neighbor. Duplicates keep the highest confidence, then the
    higher head coverage, then the shorter body, then the smaller body.
    The TransE score ``s`` is min-max normalized over all emitted neighbors.
    """
    base_embeddings.check_covers(kg)
    for rule, _ in selected_rules:
        if rule.length > l_max:
            raise ValueError(f"rule body {rule.body} is longer than l_max={l_max}")
    n = kg.entity_count
    if not selected_rules or n == 0:
        return [[] for _ in range(n)]

    root = _build_trie(selected_rules)
    disable = None if progress is None else not progress
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        per_entity = list(
            tqdm(
                pool.map(lambda e: _match_entity(kg, root, e), range(n)),
                total=n,
                desc="match",
                disable=disable,
            )
        )

    src, rel, dst = [], [], []
    for e, best in enumerate(per_entity):
        for head, t in best:
            src.append(e)
            rel.append(head)
            dst.append(t)
    raw = base_embeddings.energies(
        np.asarray(src, dtype=np.int64), np.asarray(rel, dtype=np.int64), np.asarray(dst, dtype=np.int64)
    ).astype(np.float64)
    if raw.size and raw.max() > raw.min():
        scores = (raw - raw.min()) / (raw.max() - raw.min())
    else:
        scores = np.zeros_like(raw)

    out: List[List[TransformedNeighbor]] = [[] for _ in range(n)]
    k = 0
    for e, best in enumerate(per_entity):
        for (head, t), (_, hc, conf, body) in best.items():
            out[e].append(
                TransformedNeighbor.model_construct(
                    rel=head,
                    entity=t,
                    hc=hc,
                    conf=conf,
                    l_norm=len(body) / l_max,
                    s=float(scores[k]),
                    body=body,
                )
            )
            k += 1
        out[e].sort(key=lambda tn: (tn.rel, tn.entity))
    logger.info("[rules] matched %d transformed neighbors over %d entities", k, n)
    return out
