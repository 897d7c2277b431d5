from typing import List, Sequence, Tuple

import numpy as np

from rmna.domain.errors import ConsistencyError
from rmna.domain.graph import KnowledgeGraph
from rmna.domain.rules import TransformedNeighbor

METADATA_FIELDS = ("hc", "conf", "l_norm", "s")


class NeighborSets:
    """
    N_o(e) and N_t(e) for every entity, plus packed CSR arrays for the aggregator.

    Packed layout: ``orig_ptr[e]:orig_ptr[e+1]`` indexes ``orig_rel``/``orig_ent``;
    same for the ``trans_*`` arrays, with ``trans_meta`` holding (hc, conf, l_norm, s).
    """

    def __init__(
        self,
        original: Sequence[Sequence[Tuple[int, int]]],
        transformed: Sequence[Sequence[TransformedNeighbor]] | None = None,
    ):
        n = len(original)
        transformed = transformed if transformed is not None else [[] for _ in range(n)]
        if len(transformed) != n:
            raise ConsistencyError(
                f"transformed neighbor lists cover {len(transformed)} entities, expected {n}"
            )
        self._original: List[List[Tuple[int, int]]] = [list(x) for x in original]
        self._transformed: List[List[TransformedNeighbor]] = [list(x) for x in transformed]

        for e in range(n):
            if not self._transformed[e]:
                continue
            orig = set(self._original[e])
            for tn in self._transformed[e]:
                if (tn.rel, tn.entity) in orig:
                    raise ConsistencyError(
                        f"entity {e}: ({tn.rel}, {tn.entity}) is both original and transformed"
                    )

        self.orig_ptr, (self.orig_rel, self.orig_ent) = _pack(
            [[(r, t) for r, t in lst] for lst in self._original], width=2
        )
        self.trans_ptr, (self.trans_rel, self.trans_ent) = _pack(
            [[(tn.rel, tn.entity) for tn in lst] for lst in self._transformed], width=2
        )
        meta = [tn.metadata() for lst in self._transformed for tn in lst]
        self.trans_meta = np.asarray(meta, dtype=np.float32).reshape(-1, len(METADATA_FIELDS))

    @classmethod
    def from_graph(
        cls,
        kg: KnowledgeGraph,
        transformed: Sequence[Sequence[TransformedNeighbor]] | None = None,
    ) -> "NeighborSets":
        return cls([kg.one_hop_neighbors(e) for e in range(kg.entity_count)], transformed)

    @property
    def entity_count(self) -> int:
        return len(self._original)

    def original(self, e: int) -> List[Tuple[int, int]]:
        return list(self._original[e])

    def transformed(self, e: int) -> List[TransformedNeighbor]:
        return list(self._transformed[e])

    @property
    def transformed_count(self) -> int:
        return int(self.trans_rel.shape[0])

    @property
    def original_count(self) -> int:
        return int(self.orig_rel.shape[0])

    def with_original_order(self, e: int, order: Sequence[int]) -> "NeighborSets":
        """Copy with entity e's original neighbors stored in a different order."""
        original = [list(x) for x in self._original]
        current = original[e]
        if sorted(order) != list(range(len(current))):
            raise ValueError("order must be a permutation of the neighbor positions")
        original[e] = [current[i] for i in order]
        return NeighborSets(original, self._transformed)

    def without_transformed(self) -> "NeighborSets":
        return NeighborSets(self._original, None)


def _pack(lists: Sequence[Sequence[Tuple[int, ...]]], *, width: int):
    counts = np.fromiter((len(x) for x in lists), dtype=np.int64, count=len(lists))
    ptr = np.zeros(len(lists) + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    flat = np.asarray([item for lst in lists for item in lst], dtype=np.int64).reshape(-1, width)
    return ptr, tuple(flat[:, i].copy() for i in range(width))
