import hashlib
from functools import cached_property
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from rmna.domain.errors import GraphStateError, UnknownSymbolError

INVERSE_PREFIX = "inv_"
SELF_LOOP_LABEL = "self_loop"


def is_reserved_relation_label(label: str) -> bool:
    """Labels the graph generates itself; dataset relations may not use them."""
    return label == SELF_LOOP_LABEL or label.startswith(INVERSE_PREFIX)


class Triple(NamedTuple):
    head: int
    rel: int
    tail: int


class Vocabulary:
    """Interning tables: dense ids from 0 in first-appearance order, both directions."""

    def __init__(
        self,
        entities: Sequence[str] | None = None,
        relations: Sequence[str] | None = None,
    ):
        self._entities: List[str] = []
        self._relations: List[str] = []
        self._entity_index: Dict[str, int] = {}
        self._relation_index: Dict[str, int] = {}
        for label in entities or ():
            self.intern_entity(label)
        for label in relations or ():
            self.intern_relation(label)

    @property
    def entities(self) -> Tuple[str, ...]:
        return tuple(self._entities)

    @property
    def relations(self) -> Tuple[str, ...]:
        return tuple(self._relations)

    @property
    def entity_count(self) -> int:
        return len(self._entities)

    @property
    def relation_count(self) -> int:
        return len(self._relations)

    def intern_entity(self, label: str) -> int:
        idx = self._entity_index.get(label)
        if idx is None:
            idx = len(self._entities)
            self._entities.append(label)
            self._entity_index[label] = idx
        return idx

    def intern_relation(self, label: str) -> int:
        idx = self._relation_index.get(label)
        if idx is None:
            idx = len(self._relations)
            self._relations.append(label)
            self._relation_index[label] = idx
        return idx

    def entity_id(self, label: str, *, line_no: int | None = None) -> int:
        try:
            return self._entity_index[label]
        except KeyError:
            raise UnknownSymbolError("entity", label, line_no=line_no) from None

    def relation_id(self, label: str, *, line_no: int | None = None) -> int:
        try:
            return self._relation_index[label]
        except KeyError:
            raise UnknownSymbolError("relation", label, line_no=line_no) from None

    def entity_label(self, idx: int) -> str:
        return self._entities[idx]

    def copy(self) -> "Vocabulary":
        return Vocabulary(self._entities, self._relations)

    def fingerprint(self) -> str:
        """sha256 over both label tables; checkpoints use it to detect re-interned graphs."""
        h = hashlib.sha256()
        h.update(f"E{len(self._entities)}\n".encode("utf-8"))
        for label in self._entities:
            h.update(label.encode("utf-8") + b"\n")
        h.update(f"R{len(self._relations)}\n".encode("utf-8"))
        for label in self._relations:
            h.update(label.encode("utf-8") + b"\n")
        return h.hexdigest()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self._entities == other._entities and self._relations == other._relations

    def __repr__(self) -> str:
        return f"Vocabulary(entities={self.entity_count}, relations={self.relation_count})"


class KnowledgeGraph:
    """
    Immutable triple store with an outgoing adjacency index.

    Triples are kept as a sorted, duplicate-free (N, 3) int64 array; the
    adjacency is CSR over heads with (relation, tail) pairs sorted within
    each head. Relation ids >= original_relation_count are inverses when the
    graph is inverse augmented; id == relation_count is the self-loop.
    """

    def __init__(
        self,
        vocab: Vocabulary,
        triples: np.ndarray | Sequence[Tuple[int, int, int]],
        *,
        inverse_augmented: bool = False,
    ):
        self.vocab = vocab
        self.inverse_augmented = inverse_augmented
        self.entity_count = vocab.entity_count
        self.original_relation_count = vocab.relation_count
        self.relation_count = self.original_relation_count * (2 if inverse_augmented else 1)

        arr = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        if arr.size:
            if arr[:, [0, 2]].min() < 0 or arr[:, [0, 2]].max() >= self.entity_count:
                raise IndexError("triple references an entity outside the vocabulary")
            if arr[:, 1].min() < 0 or arr[:, 1].max() >= self.relation_count:
                raise IndexError("triple references a relation outside the vocabulary")
            arr = np.unique(arr, axis=0)
        arr.setflags(write=False)
        self._triples = arr

        if arr.size:
            counts = np.bincount(arr[:, 0], minlength=self.entity_count)
        else:
            counts = np.zeros(self.entity_count, dtype=np.int64)
        ptr = np.zeros(self.entity_count + 1, dtype=np.int64)
        np.cumsum(counts, out=ptr[1:])
        # np.unique sorts rows lexicographically, so rows are already grouped by head
        # and ordered by (relation, tail) inside each group
        self._adj_ptr = ptr
        self._adj_rel = arr[:, 1].copy()
        self._adj_ent = arr[:, 2].copy()
        for a in (self._adj_ptr, self._adj_rel, self._adj_ent):
            a.setflags(write=False)

    # basic views

    @property
    def triples(self) -> np.ndarray:
        return self._triples

    @cached_property
    def triple_set(self) -> frozenset:
        return frozenset(Triple(int(h), int(r), int(t)) for h, r, t in self._triples)

    @cached_property
    def triple_codes(self) -> np.ndarray:
        """Sorted int64 keys ((h * R + r) * E + t) for vectorized membership tests."""
        codes = self.encode(self._triples[:, 0], self._triples[:, 1], self._triples[:, 2])
        codes.sort()
        codes.setflags(write=False)
        return codes

    def encode(self, heads: np.ndarray, rels: np.ndarray, tails: np.ndarray) -> np.ndarray:
        n_rel = self.relation_count + 1
        return (np.asarray(heads, np.int64) * n_rel + np.asarray(rels, np.int64)) * max(
            self.entity_count, 1
        ) + np.asarray(tails, np.int64)

    def contains_codes(self, codes: np.ndarray) -> np.ndarray:
        known = self.triple_codes
        if known.size == 0:
            return np.zeros(np.shape(codes), dtype=bool)
        pos = np.searchsorted(known, codes)
        pos = np.minimum(pos, known.size - 1)
        return known[pos] == codes

    def __len__(self) -> int:
        return int(self._triples.shape[0])

    def __contains__(self, triple: object) -> bool:
        if not isinstance(triple, tuple) or len(triple) != 3:
            return False
        return Triple(*map(int, triple)) in self.triple_set

    @property
    def adjacency_ptr(self) -> np.ndarray:
        return self._adj_ptr

    @property
    def adjacency_rel(self) -> np.ndarray:
        return self._adj_rel

    @property
    def adjacency_ent(self) -> np.ndarray:
        return self._adj_ent

    @property
    def self_loop_relation(self) -> int:
        return self.relation_count

    def inverse_of(self, rel: int) -> Optional[int]:
        if not self.inverse_augmented:
            return None
        n = self.original_relation_count
        if 0 <= rel < n:
            return rel + n
        if n <= rel < 2 * n:
            return rel - n
        return None

    def relation_label(self, rel: int) -> str:
        if rel == self.self_loop_relation:
            return SELF_LOOP_LABEL
        n = self.original_relation_count
        if 0 <= rel < n:
            return self.vocab.relations[rel]
        if self.inverse_augmented and n <= rel < 2 * n:
            return INVERSE_PREFIX + self.vocab.relations[rel - n]
        raise IndexError(f"relation id {rel} out of range")

    def relation_id(self, label: str) -> int:
        if label == SELF_LOOP_LABEL:
            return self.self_loop_relation
        if self.inverse_augmented and label.startswith(INVERSE_PREFIX):
            base = label[len(INVERSE_PREFIX):]
            try:
                return self.vocab.relation_id(base) + self.original_relation_count
            except UnknownSymbolError:
                pass
        return self.vocab.relation_id(label)

    def _check_entity(self, e: int) -> None:
        if not 0 <= e < self.entity_count:
            raise IndexError(f"entity id {e} out of range [0, {self.entity_count})")

    # queries

    def out_adj(self, e: int) -> List[Tuple[int, int]]:
        self._check_entity(e)
        lo, hi = self._adj_ptr[e], self._adj_ptr[e + 1]
        return [(int(r), int(t)) for r, t in zip(self._adj_rel[lo:hi], self._adj_ent[lo:hi])]

    def tails(self, e: int, rel: int) -> np.ndarray:
        lo, hi = int(self._adj_ptr[e]), int(self._adj_ptr[e + 1])
        rels = self._adj_rel[lo:hi]
        a, b = np.searchsorted(rels, [rel, rel + 1])
        return self._adj_ent[lo + a : lo + b]

    def one_hop_neighbors(self, e: int) -> List[Tuple[int, int]]:
        """Self-loop pair first, then the real (relation, entity) pairs by (relation, entity)."""
        return [(self.self_loop_relation, e)] + self.out_adj(e)

    def walks_up_to(self, e: int, max_len: int) -> Iterator[Tuple[Tuple[int, ...], int]]:
        """
        Yield (relation path, end entity) for every walk of length 1..max_len from e.

        A step that immediately undoes the previous one through its inverse
        relation (a -r-> b -inv(r)-> a) is skipped; longer cycles are kept.
        """
        self._check_entity(e)
        if max_len < 1:
            raise ValueError("max_len must be >= 1")

        def rec(node: int, path: Tuple[int, ...], prev: Optional[Tuple[int, int]]):
            lo, hi = int(self._adj_ptr[node]), int(self._adj_ptr[node + 1])
            for i in range(lo, hi):
                r, t = int(self._adj_rel[i]), int(self._adj_ent[i])
                if prev is not None and t == prev[0] and self.inverse_of(prev[1]) == r:
                    continue
                step = path + (r,)
                yield step, t
                if len(step) < max_len:
                    yield from rec(t, step, (node, r))

        yield from rec(e, (), None)

    def __repr__(self) -> str:
        return (
            f"KnowledgeGraph(entities={self.entity_count}, relations={self.relation_count}, "
            f"triples={len(self)}, inverse_augmented={self.inverse_augmented})"
        )


def add_inverse_relations(kg: KnowledgeGraph) -> KnowledgeGraph:
    """Return a graph where every (h, r, t) also appears as (t, r + R, h)."""
    if kg.inverse_augmented:
        raise GraphStateError("graph is already inverse augmented")
    base = kg.triples
    inv = np.stack([base[:, 2], base[:, 1] + kg.original_relation_count, base[:, 0]], axis=1)
    return KnowledgeGraph(kg.vocab, np.concatenate([base, inv]), inverse_augmented=True)


def original_triples(kg: KnowledgeGraph) -> np.ndarray:
    """Triples whose relation is not an inverse."""
    arr = kg.triples
    return arr[arr[:, 1] < kg.original_relation_count]
