import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from pyee.base import EventEmitter
from tqdm import tqdm

from rmna import numerics as nx
from rmna.application.aggregator import NeighborEmbeddings
from rmna.application.events import notify
from rmna.application.sampling import corrupt_batch
from rmna.config import DecoderConfig
from rmna.domain.errors import ConsistencyError, NumericError, ShapeError
from rmna.domain.graph import KnowledgeGraph

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DecoderParams:
    """
    ConvKB weights plus the entity and relation tables it fine-tunes.

    ``kernels`` is (num_kernels, 3), one 1x3 filter per row; ``w_rl`` is
    (num_kernels * dim, 1).
    """

    entity_emb: np.ndarray
    relation_emb: np.ndarray
    kernels: np.ndarray
    w_rl: np.ndarray
    l2_reg: float = 0.001

    def __post_init__(self):
        dim = self.entity_emb.shape[1]
        if self.relation_emb.shape[1] != dim:
            raise ShapeError(f"entity dim {dim} != relation dim {self.relation_emb.shape[1]}")
        if self.kernels.ndim != 2 or self.kernels.shape[1] != 3 or self.kernels.shape[0] < 1:
            raise ShapeError(f"kernels must be (num_kernels >= 1, 3), got {self.kernels.shape}")
        if self.w_rl.shape != (self.kernels.shape[0] * dim, 1):
            raise ShapeError(f"W_RL must be ({self.kernels.shape[0] * dim}, 1), got {self.w_rl.shape}")

    @property
    def dim(self) -> int:
        return int(self.entity_emb.shape[1])

    @property
    def num_kernels(self) -> int:
        return int(self.kernels.shape[0])

    def as_dict(self) -> Dict[str, np.ndarray]:
        return {"entity": self.entity_emb, "relation": self.relation_emb, "kernels": self.kernels, "w_rl": self.w_rl}

    @classmethod
    def from_dict(cls, params: Dict[str, np.ndarray], l2_reg: float) -> "DecoderParams":
        return cls(params["entity"], params["relation"], params["kernels"], params["w_rl"], l2_reg)

    def check_covers(self, kg: KnowledgeGraph) -> None:
        if self.entity_emb.shape[0] < kg.entity_count or self.relation_emb.shape[0] < kg.relation_count + 1:
            raise ConsistencyError(
                f"decoder tables ({self.entity_emb.shape[0]}, {self.relation_emb.shape[0]}) do not cover "
                f"{kg.entity_count} entities and {kg.relation_count + 1} relations"
            )

    def energies(self, heads: np.ndarray, rels: np.ndarray, tails: np.ndarray) -> np.ndarray:
        return convkb_energy(self.entity_emb[heads], self.relation_emb[rels], self.entity_emb[tails], self)


def _feature_maps(stacked: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    # stacked (B, d, 3) -> pre-activation maps (B, num_kernels, d)
    return np.einsum("bid,kd->bki", stacked, kernels)


def convkb_energy(h_vec, r_vec, t_vec, params: DecoderParams):
    """
    w_rl . concat_k ReLU(kernel_k * [h, r, t]); lower is better.

    Takes single vectors (returns a float) or stacked rows (returns an array).
    """
    h_vec, r_vec, t_vec = np.asarray(h_vec), np.asarray(r_vec), np.asarray(t_vec)
    if not (h_vec.shape == r_vec.shape == t_vec.shape) or h_vec.shape[-1] != params.dim:
        raise ShapeError(f"dimension mismatch: {h_vec.shape}, {r_vec.shape}, {t_vec.shape} for d={params.dim}")
    single = h_vec.ndim == 1
    stacked = np.stack([np.atleast_2d(h_vec), np.atleast_2d(r_vec), np.atleast_2d(t_vec)], axis=-1)
    feats = nx.relu(_feature_maps(stacked, params.kernels)).reshape(stacked.shape[0], -1)
    energy = (feats @ params.w_rl)[:, 0]
    return float(energy[0]) if single else energy


def convkb_loss(energies, labels, w_rl: np.ndarray, l2_reg: float) -> float:
    """sum softplus(E * y) + l2_reg / 2 * ||W_RL||^2 with y = +1 for true triples, -1 for corrupted ones."""
    energies = np.asarray(energies, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    return float(np.sum(nx.softplus(energies * labels)) + 0.5 * l2_reg * np.sum(np.square(w_rl, dtype=np.float64)))


def decoder_loss_and_grads(
    params: Dict[str, np.ndarray],
    pos: np.ndarray,
    neg: np.ndarray,
    l2_reg: float,
    *,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
    dropout: float = 0.0,
) -> Tuple[float, Dict[str, np.ndarray]]:
    ent, rel, kernels, w_rl = params["entity"], params["relation"], params["kernels"], params["w_rl"]
    batch = np.concatenate([pos, neg])
    labels = np.concatenate([np.ones(len(pos)), -np.ones(len(neg))]).astype(ent.dtype)
    stacked = np.stack([ent[batch[:, 0]], rel[batch[:, 1]], ent[batch[:, 2]]], axis=-1)

    pre = _feature_maps(stacked, kernels)
    feats = nx.relu(pre).reshape(len(batch), -1)
    drop = nx.dropout_mask(feats.shape, dropout, nx.as_rng(rng), feats.dtype) if train and dropout > 0.0 else None
    feats_d = feats * drop if drop is not None else feats
    energy = (feats_d @ w_rl)[:, 0]
    loss = convkb_loss(energy, labels, w_rl, l2_reg)

    d_energy = nx.sigmoid(energy * labels) * labels
    grads: Dict[str, np.ndarray] = {}
    grads["w_rl"] = feats_d.T @ d_energy[:, None] + l2_reg * w_rl
    d_feats = d_energy[:, None] * w_rl[:, 0][None, :]
    if drop is not None:
        d_feats = d_feats * drop
    d_pre = d_feats.reshape(pre.shape) * nx.relu_grad(pre)
    grads["kernels"] = np.einsum("bki,bid->kd", d_pre, stacked)
    d_stacked = np.einsum("bki,kd->bid", d_pre, kernels)

    d_ent = np.zeros_like(ent)
    d_rel = np.zeros_like(rel)
    np.add.at(d_ent, batch[:, 0], d_stacked[:, :, 0])
    np.add.at(d_rel, batch[:, 1], d_stacked[:, :, 1])
    np.add.at(d_ent, batch[:, 2], d_stacked[:, :, 2])
    grads["entity"] = d_ent
    grads["relation"] = d_rel
    return loss, grads


def init_decoder(
    embeddings: NeighborEmbeddings,
    num_kernels: int,
    seed: int,
    l2_reg: float = 0.001,
) -> DecoderParams:
    """Entity rows start at e_nei, relation rows at W_r(2) r; kernels and W_RL are Glorot."""
    dtype = embeddings.entity.dtype
    rng = np.random.default_rng([seed, 5])
    dim = embeddings.entity.shape[1]
    return DecoderParams(
        entity_emb=embeddings.entity.copy(),
        relation_emb=embeddings.relation.copy(),
        kernels=nx.glorot_init((num_kernels, 3), rng, dtype),
        w_rl=nx.glorot_init((num_kernels * dim, 1), rng, dtype),
        l2_reg=l2_reg,
    )


def train_decoder(
    kg: KnowledgeGraph,
    initial: DecoderParams,
    config: DecoderConfig,
    *,
    seed: int = 42,
    bus: Optional[EventEmitter] = None,
    progress: Optional[bool] = None,
) -> DecoderParams:
    initial.check_covers(kg)
    if config.epochs == 0 or len(kg) == 0:
        return initial

    params = {k: v.copy() for k, v in initial.as_dict().items()}
    state = nx.AdamState.zeros(params, learning_rate=config.learning_rate)
    rng = np.random.default_rng([seed, 6])
    triples = kg.triples
    n = triples.shape[0]

    disable = None if progress is None else not progress
    for epoch in tqdm(range(1, config.epochs + 1), desc="dec", disable=disable):
        perm = rng.permutation(n)
        total = 0.0
        for b, lo in enumerate(range(0, n, config.batch_size)):
            batch = triples[perm[lo : lo + config.batch_size]]
            pos, neg = corrupt_batch(kg, batch, config.negatives, rng)
            # one copy of each positive per negative keeps the classes balanced
            loss, grads = decoder_loss_and_grads(
                params, pos, neg, config.l2_reg, train=True, rng=rng, dropout=config.dropout
            )
            if not math.isfinite(loss):
                raise NumericError("non-finite loss", stage="dec", epoch=epoch, batch=b)
            try:
                params, state = nx.adam_step(params, grads, state)
            except NumericError as e:
                raise NumericError(str(e), stage="dec", epoch=epoch, batch=b) from e
            total += loss
        notify(bus, "dec.epoch", epoch=epoch, epochs=config.epochs, loss=total / (2 * n * config.negatives))

    return DecoderParams.from_dict(params, config.l2_reg)
