from dataclasses import dataclass

import numpy as np

from rmna.domain.errors import ConsistencyError
from rmna.domain.graph import KnowledgeGraph


@dataclass(frozen=True)
class EmbeddingTable:
    """
    Base embeddings: one row per entity, one row per relation id plus the
    trailing self-loop row (index ``relation_count``).
    """

    entity_emb: np.ndarray
    relation_emb: np.ndarray
    norm: str = "L1"

    def __post_init__(self):
        if self.entity_emb.ndim != 2 or self.relation_emb.ndim != 2:
            raise ConsistencyError("embedding tables must be 2-D")
        if self.entity_emb.shape[1] != self.relation_emb.shape[1]:
            raise ConsistencyError(
                f"entity dim {self.entity_emb.shape[1]} != relation dim {self.relation_emb.shape[1]}"
            )

    @property
    def dim(self) -> int:
        return int(self.entity_emb.shape[1])

    def check_covers(self, kg: KnowledgeGraph) -> None:
        if self.entity_emb.shape[0] < kg.entity_count:
            raise ConsistencyError(
                f"entity embeddings cover {self.entity_emb.shape[0]} of {kg.entity_count} entities"
            )
        if self.relation_emb.shape[0] < kg.relation_count + 1:
            raise ConsistencyError(
                f"relation embeddings cover {self.relation_emb.shape[0]} of "
                f"{kg.relation_count + 1} relations (self-loop included)"
            )

    def energies(self, heads: np.ndarray, rels: np.ndarray, tails: np.ndarray) -> np.ndarray:
        """TransE energy ||h + r - t|| per row."""
        diff = self.entity_emb[heads] + self.relation_emb[rels] - self.entity_emb[tails]
        if self.norm == "L1":
            return np.sum(np.abs(diff), axis=-1)
        return np.sqrt(np.sum(np.square(diff), axis=-1))

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.entity_emb.copy(), self.relation_emb.copy(), self.norm)
