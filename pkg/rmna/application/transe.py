import logging
import math
from typing import Dict, Optional, Tuple

import numpy as np
from pyee.base import EventEmitter
from tqdm import tqdm

from rmna import numerics as nx
from rmna.application.evaluator import evaluate
from rmna.application.events import notify
from rmna.application.sampling import corrupt_batch
from rmna.config import PretrainConfig
from rmna.domain.embeddings import EmbeddingTable
from rmna.domain.errors import NumericError, ShapeError
from rmna.domain.graph import KnowledgeGraph

logger = logging.getLogger(__name__)


def transe_energy(h_vec: np.ndarray, r_vec: np.ndarray, t_vec: np.ndarray, norm: str = "L1"):
    """||h + r - t||; works row-wise on stacked vectors."""
    h_vec, r_vec, t_vec = np.asarray(h_vec), np.asarray(r_vec), np.asarray(t_vec)
    if not (h_vec.shape == r_vec.shape == t_vec.shape):
        raise ShapeError(f"dimension mismatch: {h_vec.shape}, {r_vec.shape}, {t_vec.shape}")
    return nx.norm(h_vec + r_vec - t_vec, norm)


def margin_loss(pos_energy, neg_energy, margin: float) -> float:
    """Sum of max(0, margin + E_pos - E_neg)."""
    if margin <= 0:
        raise ValueError("margin must be positive")
    return float(np.sum(np.maximum(0.0, margin + np.asarray(pos_energy) - np.asarray(neg_energy))))


def init_embeddings(kg: KnowledgeGraph, dim: int, seed: int, norm: str = "L1", dtype=nx.DTYPE) -> EmbeddingTable:
    """Uniform on +-6/sqrt(d); relation rows (self-loop included) normalized once."""
    rng = np.random.default_rng(seed)
    bound = 6.0 / math.sqrt(dim)
    ent = nx.uniform_init((kg.entity_count, dim), bound, rng, dtype=dtype)
    rel = nx.normalize_rows(nx.uniform_init((kg.relation_count + 1, dim), bound, rng, dtype=dtype))
    return EmbeddingTable(ent, rel, norm)


def transe_loss_and_grads(
    params: Dict[str, np.ndarray],
    pos: np.ndarray,
    neg: np.ndarray,
    margin: float,
    norm: str,
) -> Tuple[float, Dict[str, np.ndarray]]:
    """Summed margin loss over aligned (pos, neg) rows and its gradient w.r.t. both tables."""
    ent, rel = params["entity"], params["relation"]
    diff_p = ent[pos[:, 0]] + rel[pos[:, 1]] - ent[pos[:, 2]]
    diff_n = ent[neg[:, 0]] + rel[neg[:, 1]] - ent[neg[:, 2]]
    e_pos = nx.norm(diff_p, norm)
    e_neg = nx.norm(diff_n, norm)
    hinge = margin + e_pos - e_neg
    active = (hinge > 0).astype(ent.dtype)[:, None]
    loss = float(np.sum(np.maximum(hinge, 0.0)))

    g_pos = nx.norm_grad(diff_p, norm) * active
    g_neg = -nx.norm_grad(diff_n, norm) * active
    d_ent = np.zeros_like(ent)
    d_rel = np.zeros_like(rel)
    for rows, g in ((pos, g_pos), (neg, g_neg)):
        np.add.at(d_ent, rows[:, 0], g)
        np.add.at(d_ent, rows[:, 2], -g)
        np.add.at(d_rel, rows[:, 1], g)
    return loss, {"entity": d_ent, "relation": d_rel}


def _validation_mrr(table: EmbeddingTable, sample: np.ndarray, entity_count: int) -> float:
    return evaluate(table, sample, None, "raw", entity_count=entity_count, progress=False).mrr


def pretrain(
    kg: KnowledgeGraph,
    config: PretrainConfig,
    *,
    seed: int = 42,
    valid: Optional[KnowledgeGraph] = None,
    bus: Optional[EventEmitter] = None,
    progress: Optional[bool] = None,
) -> EmbeddingTable:
    """
    TransE pre-training of the base embeddings with Adam on the margin loss.

    Entity rows are renormalized to unit L2 length at the start of each epoch.
    With a validation graph, raw MRR on a fixed sample is measured every
    ``validate_every`` epochs; after ``patience`` epochs without improvement
    training stops and the best table is returned.
    """
    table = init_embeddings(kg, config.dim, seed, config.norm)
    if config.epochs == 0 or len(kg) == 0:
        return table

    rng = np.random.default_rng([seed, 1])
    params = {"entity": table.entity_emb, "relation": table.relation_emb}
    state = nx.AdamState.zeros(params, learning_rate=config.learning_rate)
    triples = kg.triples
    n = triples.shape[0]

    sample = None
    if valid is not None and len(valid) and config.validate_every > 0 and config.patience > 0:
        vrng = np.random.default_rng([seed, 2])
        take = min(config.validation_sample, len(valid))
        sample = valid.triples[np.sort(vrng.choice(len(valid), size=take, replace=False))]
    best_mrr, best_epoch, best_params = -1.0, 0, None

    disable = None if progress is None else not progress
    for epoch in tqdm(range(1, config.epochs + 1), desc="transe", disable=disable):
        params["entity"] = nx.normalize_rows(params["entity"])
        perm = rng.permutation(n)
        total = 0.0
        for b, lo in enumerate(range(0, n, config.batch_size)):
            batch = triples[perm[lo : lo + config.batch_size]]
            pos, neg = corrupt_batch(kg, batch, config.negatives, rng)
            loss, grads = transe_loss_and_grads(params, pos, neg, config.margin, config.norm)
            if not math.isfinite(loss):
                raise NumericError("non-finite loss", stage="transe", epoch=epoch, batch=b)
            try:
                params, state = nx.adam_step(params, grads, state)
            except NumericError as e:
                raise NumericError(str(e), stage="transe", epoch=epoch, batch=b) from e
            total += loss
        notify(bus, "transe.epoch", epoch=epoch, epochs=config.epochs, loss=total / (n * config.negatives))

        if sample is not None and epoch % config.validate_every == 0:
            current = EmbeddingTable(params["entity"], params["relation"], config.norm)
            mrr = _validation_mrr(current, sample, kg.entity_count)
            if mrr > best_mrr:
                best_mrr, best_epoch = mrr, epoch
                best_params = {k: v.copy() for k, v in params.items()}
            notify(bus, "transe.validation", epoch=epoch, mrr=mrr, best=best_mrr)
            if epoch - best_epoch >= config.patience:
                notify(bus, "transe.early_stop", epoch=epoch, best_epoch=best_epoch, best=best_mrr)
                break

    if best_params is not None:
        params = best_params
    return EmbeddingTable(params["entity"], params["relation"], config.norm)
