"""
Two-layer neighbor aggregation.

Each layer builds one input per (entity, neighbor) pair, attends over the
original and the transformed neighbors separately with K_m heads, fuses the
2*K_m hidden vectors with K_s self-attention heads and a dense layer. Layer 2
repeats this on the layer-1 outputs. Gradients are written out by hand; all
functions keep the dtype of the parameters they receive.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Literal, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pyee.base import EventEmitter
from scipy import sparse
from tqdm import tqdm

from rmna import numerics as nx
from rmna.application.events import notify
from rmna.application.sampling import corrupt_batch
from rmna.config import AggregatorConfig, FeatureMask
from rmna.domain.embeddings import EmbeddingTable
from rmna.domain.errors import ConsistencyError, NumericError, ShapeError
from rmna.domain.graph import KnowledgeGraph
from rmna.domain.neighbors import METADATA_FIELDS, NeighborSets

logger = logging.getLogger(__name__)

NeighborKind = Literal["original", "transformed"]
LAYER_WEIGHTS = ("Wco", "Wct", "Wbo", "Wbt", "WQ", "WK", "WV", "Wf", "bf", "Wr")


@dataclass(frozen=True)
class LayerDims:
    d_in: int
    d_out: int
    query: int
    value: int


@dataclass(frozen=True)
class AggregatorDims:
    base_dim: int
    num_attention_heads: int
    num_self_attention_heads: int
    layers: Tuple[LayerDims, LayerDims]
    mask: FeatureMask

    @classmethod
    def from_config(cls, base_dim: int, config: AggregatorConfig) -> "AggregatorDims":
        return cls(
            base_dim=base_dim,
            num_attention_heads=config.num_attention_heads,
            num_self_attention_heads=config.num_self_attention_heads,
            layers=(
                LayerDims(base_dim, config.dim1, config.query_dim1, config.value_dim1),
                LayerDims(config.dim1, config.dim2, config.query_dim2, config.value_dim2),
            ),
            mask=config.mask,
        )

    def layer(self, layer: int) -> LayerDims:
        if layer not in (1, 2):
            raise ValueError(f"layer must be 1 or 2, got {layer}")
        return self.layers[layer - 1]

    @property
    def out_dim(self) -> int:
        return self.layers[1].d_out

    def fused_width(self, layer: int) -> int:
        ld = self.layer(layer)
        return 2 * self.num_attention_heads * ld.value * self.num_self_attention_heads

    def transformed_width(self, layer: int) -> int:
        return 3 * self.layer(layer).d_in + self.mask.width

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        km, ks = self.num_attention_heads, self.num_self_attention_heads
        out: Dict[str, Tuple[int, ...]] = {}
        for layer, ld in enumerate(self.layers, start=1):
            p = f"l{layer}."
            out[p + "Wco"] = (ld.d_out, 3 * ld.d_in)
            out[p + "Wct"] = (ld.d_out, self.transformed_width(layer))
            out[p + "Wbo"] = (km, ld.d_out)
            out[p + "Wbt"] = (km, ld.d_out)
            out[p + "WQ"] = (ks, ld.d_out, ld.query)
            out[p + "WK"] = (ks, ld.d_out, ld.query)
            out[p + "WV"] = (ks, ld.d_out, ld.value)
            out[p + "Wf"] = (ld.d_out, self.fused_width(layer))
            out[p + "bf"] = (ld.d_out,)
            out[p + "Wr"] = (ld.d_out, self.base_dim)
        return out


class AggregatorModel:
    """Aggregator weights plus the dimensions they were built for."""

    def __init__(self, dims: AggregatorDims, weights: Dict[str, np.ndarray], norm: str = "L1"):
        expected = dims.shapes()
        if set(weights) != set(expected):
            raise ShapeError(f"aggregator weights {sorted(weights)} do not match {sorted(expected)}")
        for name, shape in expected.items():
            if weights[name].shape != shape:
                raise ShapeError(f"{name}: expected {shape}, got {weights[name].shape}")
        self.dims = dims
        self.weights = weights
        self.norm = norm

    @classmethod
    def initialize(
        cls,
        base_dim: int,
        config: AggregatorConfig,
        seed: int,
        dtype=nx.DTYPE,
    ) -> "AggregatorModel":
        dims = AggregatorDims.from_config(base_dim, config)
        rng = np.random.default_rng([seed, 3])
        weights = {}
        for name, shape in dims.shapes().items():
            weights[name] = np.zeros(shape, dtype=dtype) if name.endswith(".bf") else nx.glorot_init(shape, rng, dtype)
        return cls(dims, weights, config.norm)

    def layer_weights(self, layer: int, params: Optional[Dict[str, np.ndarray]] = None) -> Dict[str, np.ndarray]:
        src = params if params is not None else self.weights
        return {name: src[f"l{layer}.{name}"] for name in LAYER_WEIGHTS}

    def with_weights(self, weights: Dict[str, np.ndarray]) -> "AggregatorModel":
        return AggregatorModel(self.dims, {k: weights[k] for k in self.weights}, self.norm)


# single-item operations


def build_input(
    model: AggregatorModel,
    layer: int,
    e_vec: np.ndarray,
    r_vec: np.ndarray,
    t_vec: np.ndarray,
    kind: NeighborKind = "original",
    meta: Optional[Sequence[float]] = None,
    *,
    train: bool = False,
    dropout: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """W_c [e, r, t] for an original neighbor, W_c [e, r, t, metadata] for a transformed one."""
    w = model.layer_weights(layer)
    parts = [np.asarray(e_vec), np.asarray(r_vec), np.asarray(t_vec)]
    if kind == "transformed":
        if meta is None or len(meta) != len(METADATA_FIELDS):
            raise ConsistencyError("transformed neighbor needs (hc, conf, l_norm, s) metadata")
        cols = list(model.dims.mask.columns)
        parts.append(np.asarray(meta, dtype=parts[0].dtype)[cols])
        weight = w["Wct"]
    else:
        weight = w["Wco"]
    c = nx.matmul(weight, nx.concat(parts))
    if train and dropout > 0.0:
        c = c * nx.dropout_mask(c.shape, dropout, nx.as_rng(rng), c.dtype)
    return c


def neighbor_attention(
    model: AggregatorModel,
    layer: int,
    inputs: np.ndarray,
    head: int,
    kind: NeighborKind,
) -> np.ndarray:
    """softmax over the neighbor set of LeakyReLU(W_b c) for one head."""
    inputs = np.asarray(inputs)
    if inputs.shape[0] == 0:
        raise ValueError("attention over an empty neighbor set")
    w = model.layer_weights(layer)["Wbo" if kind == "original" else "Wbt"]
    return nx.softmax(nx.leaky_relu(inputs @ w[head]))


def aggregate_head(inputs: np.ndarray, weights: np.ndarray, dim: Optional[int] = None) -> np.ndarray:
    """ELU of the attention-weighted sum; an empty neighbor set gives the zero vector."""
    inputs = np.asarray(inputs)
    if inputs.shape[0] == 0:
        if dim is None:
            dim = inputs.shape[1] if inputs.ndim == 2 else 0
        return np.zeros(dim, dtype=inputs.dtype)
    return nx.elu(np.asarray(weights) @ inputs)


def self_attention_fuse(model: AggregatorModel, layer: int, hidden: np.ndarray) -> np.ndarray:
    """Fuse the stacked (2*K_m, d) hidden vectors into e(layer), eval mode."""
    hidden = np.asarray(hidden)
    expected = (2 * model.dims.num_attention_heads, model.dims.layer(layer).d_out)
    if hidden.shape != expected:
        raise ShapeError(f"hidden vectors must be {expected}, got {hidden.shape}")
    out, _ = _fuse_forward(hidden[None], model.layer_weights(layer), model.dims.layer(layer), False, None, 0.0)
    return out[0]


# batched engine


class Neighborhood(NamedTuple):
    """Flattened neighbor lists of ``size`` centers; ``*_ent`` and ``center_rows`` index the feature table."""

    size: int
    center_rows: np.ndarray
    o_seg: np.ndarray
    o_rel: np.ndarray
    o_ent: np.ndarray
    t_seg: np.ndarray
    t_rel: np.ndarray
    t_ent: np.ndarray
    t_meta: np.ndarray

    def remap(self, table_ids: np.ndarray) -> "Neighborhood":
        """Re-point entity indices at rows of a feature table holding ``table_ids`` (sorted)."""
        find = lambda ids: np.searchsorted(table_ids, ids)  # noqa: E731
        return self._replace(center_rows=find(self.center_rows), o_ent=find(self.o_ent), t_ent=find(self.t_ent))


def _gather(
    ptr: np.ndarray,
    centers: np.ndarray,
    cap: Optional[int],
    cap_key: Optional[Tuple[int, int]],
    kind: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """(segment id, flat index) for every neighbor of ``centers``; capped sets are sampled per (key, entity)."""
    starts = ptr[centers]
    counts = ptr[centers + 1] - starts
    if cap is not None and cap_key is not None and np.any(counts > cap):
        segs, idxs = [], []
        for i, (c, s, n) in enumerate(zip(centers, starts, counts)):
            if n > cap:
                rng = np.random.default_rng([cap_key[0], cap_key[1], int(c), kind])
                pick = s + np.sort(rng.choice(int(n), size=cap, replace=False))
            else:
                pick = np.arange(s, s + n)
            idxs.append(pick)
            segs.append(np.full(pick.size, i, dtype=np.int64))
        if not idxs:
            return np.zeros(0, np.int64), np.zeros(0, np.int64)
        return np.concatenate(segs), np.concatenate(idxs).astype(np.int64)
    seg = np.repeat(np.arange(centers.size, dtype=np.int64), counts)
    first = np.cumsum(counts) - counts
    idx = np.arange(seg.size, dtype=np.int64) - np.repeat(first, counts) + np.repeat(starts, counts)
    return seg, idx


def neighborhood(
    neighbors: NeighborSets,
    centers: np.ndarray,
    mask: FeatureMask,
    *,
    cap: Optional[int] = None,
    cap_key: Optional[Tuple[int, int]] = None,
    dtype=nx.DTYPE,
) -> Neighborhood:
    centers = np.asarray(centers, dtype=np.int64)
    o_seg, o_idx = _gather(neighbors.orig_ptr, centers, cap, cap_key, 0)
    t_seg, t_idx = _gather(neighbors.trans_ptr, centers, cap, cap_key, 1)
    meta = neighbors.trans_meta[t_idx][:, list(mask.columns)].astype(dtype)
    return Neighborhood(
        size=int(centers.size),
        center_rows=centers,
        o_seg=o_seg,
        o_rel=neighbors.orig_rel[o_idx],
        o_ent=neighbors.orig_ent[o_idx],
        t_seg=t_seg,
        t_rel=neighbors.trans_rel[t_idx],
        t_ent=neighbors.trans_ent[t_idx],
        t_meta=meta,
    )


def _segment_softmax(logits: np.ndarray, seg: np.ndarray, size: int) -> np.ndarray:
    top = np.full((size, logits.shape[1]), -np.inf, dtype=logits.dtype)
    np.maximum.at(top, seg, logits)
    ex = np.exp(logits - top[seg])
    den = np.zeros((size, logits.shape[1]), dtype=logits.dtype)
    np.add.at(den, seg, ex)
    return ex / den[seg]


def _segment_weighted_sum(alpha: np.ndarray, values: np.ndarray, seg: np.ndarray, size: int) -> np.ndarray:
    """out[s, k] = sum over rows i of segment s of alpha[i, k] * values[i]."""
    cols = np.arange(seg.size)
    heads = [
        sparse.csr_matrix((alpha[:, k], (seg, cols)), shape=(size, seg.size)) @ values
        for k in range(alpha.shape[1])
    ]
    return np.stack([np.asarray(h) for h in heads], axis=1)


def _branch_forward(X, Wc, Wb, seg, size, train, rng, p):
    C = X @ Wc.T
    drop = nx.dropout_mask(C.shape, p, rng, C.dtype) if train and p > 0.0 else None
    Cp = C * drop if drop is not None else C
    L = Cp @ Wb.T
    alpha = _segment_softmax(nx.leaky_relu(L), seg, size)
    S = _segment_weighted_sum(alpha, Cp, seg, size)
    return S, {"X": X, "drop": drop, "Cp": Cp, "L": L, "alpha": alpha, "seg": seg}


def _branch_backward(cache, dS, Wc, Wb):
    seg, alpha, Cp = cache["seg"], cache["alpha"], cache["Cp"]
    dS_rows = dS[seg]
    dalpha = np.einsum("pkd,pd->pk", dS_rows, Cp)
    dCp = np.einsum("pk,pkd->pd", alpha, dS_rows)
    weighted = alpha * dalpha
    totals = np.zeros((dS.shape[0], alpha.shape[1]), dtype=alpha.dtype)
    np.add.at(totals, seg, weighted)
    dL = (weighted - alpha * totals[seg]) * nx.leaky_relu_grad(cache["L"])
    dWb = dL.T @ Cp
    dCp = dCp + dL @ Wb
    dC = dCp * cache["drop"] if cache["drop"] is not None else dCp
    return dC.T @ cache["X"], dWb, dC @ Wc


def _fuse_forward(X, w, ld: LayerDims, train, rng, p):
    scale = 1.0 / math.sqrt(ld.query)
    Q = np.einsum("mjd,kdq->mkjq", X, w["WQ"])
    K = np.einsum("mjd,kdq->mkjq", X, w["WK"])
    V = np.einsum("mjd,kdv->mkjv", X, w["WV"])
    A = nx.softmax(np.einsum("mkiq,mkjq->mkij", Q, K) * scale, axis=-1)
    Z = np.einsum("mkij,mkjv->mkiv", A, V)
    # heads side by side per row, rows flattened in order
    z = Z.transpose(0, 2, 1, 3).reshape(X.shape[0], -1)
    drop = nx.dropout_mask(z.shape, p, rng, z.dtype) if train and p > 0.0 else None
    zp = z * drop if drop is not None else z
    P = zp @ w["Wf"].T + w["bf"]
    return nx.elu(P), {"X": X, "Q": Q, "K": K, "V": V, "A": A, "drop": drop, "zp": zp, "P": P, "scale": scale}


def _fuse_backward(cache, dout, w):
    X, Q, K, V, A = cache["X"], cache["Q"], cache["K"], cache["V"], cache["A"]
    g: Dict[str, np.ndarray] = {}
    dP = dout * nx.elu_grad(cache["P"])
    g["Wf"] = dP.T @ cache["zp"]
    g["bf"] = dP.sum(axis=0)
    dz = dP @ w["Wf"]
    if cache["drop"] is not None:
        dz = dz * cache["drop"]
    m, rows = X.shape[0], X.shape[1]
    heads, dv = V.shape[1], V.shape[3]
    dZ = dz.reshape(m, rows, heads, dv).transpose(0, 2, 1, 3)
    dA = np.einsum("mkiv,mkjv->mkij", dZ, V)
    dV = np.einsum("mkij,mkiv->mkjv", A, dZ)
    dS = nx.softmax_backward(A, dA, axis=-1) * cache["scale"]
    dQ = np.einsum("mkij,mkjq->mkiq", dS, K)
    dK = np.einsum("mkij,mkiq->mkjq", dS, Q)
    g["WQ"] = np.einsum("mjd,mkjq->kdq", X, dQ)
    g["WK"] = np.einsum("mjd,mkjq->kdq", X, dK)
    g["WV"] = np.einsum("mjd,mkjv->kdv", X, dV)
    dX = (
        np.einsum("mkjq,kdq->mjd", dQ, w["WQ"])
        + np.einsum("mkjq,kdq->mjd", dK, w["WK"])
        + np.einsum("mkjv,kdv->mjd", dV, w["WV"])
    )
    return g, dX


def layer_forward(
    w: Dict[str, np.ndarray],
    ld: LayerDims,
    num_heads: int,
    ent_feat: np.ndarray,
    rel_feat: np.ndarray,
    nb: Neighborhood,
    *,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
    dropout: float = 0.0,
):
    """One aggregation layer for ``nb.size`` centers; returns (outputs, cache)."""
    size = nb.size
    Xo = np.concatenate([ent_feat[nb.center_rows[nb.o_seg]], rel_feat[nb.o_rel], ent_feat[nb.o_ent]], axis=1)
    So, co = _branch_forward(Xo, w["Wco"], w["Wbo"], nb.o_seg, size, train, rng, dropout)
    if nb.t_seg.size:
        Xt = np.concatenate(
            [
                ent_feat[nb.center_rows[nb.t_seg]],
                rel_feat[nb.t_rel],
                ent_feat[nb.t_ent],
                nb.t_meta.astype(ent_feat.dtype),
            ],
            axis=1,
        )
        St, ct = _branch_forward(Xt, w["Wct"], w["Wbt"], nb.t_seg, size, train, rng, dropout)
    else:
        St, ct = np.zeros((size, num_heads, ld.d_out), dtype=ent_feat.dtype), None
    hidden = np.concatenate([nx.elu(So), nx.elu(St)], axis=1)
    out, cf = _fuse_forward(hidden, w, ld, train, rng, dropout)
    cache = {"nb": nb, "So": So, "St": St, "co": co, "ct": ct, "cf": cf, "d_in": ld.d_in}
    return out, cache


def layer_backward(cache, dout, w, ent_shape, rel_shape):
    """Gradients of the layer weights, the entity feature table and the relation feature table."""
    nb: Neighborhood = cache["nb"]
    d_in = cache["d_in"]
    g, dH = _fuse_backward(cache["cf"], dout, w)
    km = cache["So"].shape[1]
    dSo = dH[:, :km] * nx.elu_grad(cache["So"])
    dSt = dH[:, km:] * nx.elu_grad(cache["St"])
    d_ent = np.zeros(ent_shape, dtype=dout.dtype)
    d_rel = np.zeros(rel_shape, dtype=dout.dtype)

    g["Wco"], g["Wbo"], dXo = _branch_backward(cache["co"], dSo, w["Wco"], w["Wbo"])
    np.add.at(d_ent, nb.center_rows[nb.o_seg], dXo[:, :d_in])
    np.add.at(d_rel, nb.o_rel, dXo[:, d_in : 2 * d_in])
    np.add.at(d_ent, nb.o_ent, dXo[:, 2 * d_in : 3 * d_in])
    if cache["ct"] is not None:
        g["Wct"], g["Wbt"], dXt = _branch_backward(cache["ct"], dSt, w["Wct"], w["Wbt"])
        np.add.at(d_ent, nb.center_rows[nb.t_seg], dXt[:, :d_in])
        np.add.at(d_rel, nb.t_rel, dXt[:, d_in : 2 * d_in])
        np.add.at(d_ent, nb.t_ent, dXt[:, 2 * d_in : 3 * d_in])
    else:
        g["Wct"] = np.zeros_like(w["Wct"])
        g["Wbt"] = np.zeros_like(w["Wbt"])
    return g, d_ent, d_rel


def forward_entities(
    model: AggregatorModel,
    params: Dict[str, np.ndarray],
    neighbors: NeighborSets,
    entities: np.ndarray,
    *,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
    dropout: float = 0.0,
    cap: Optional[int] = None,
    cap_key: Optional[Tuple[int, int]] = None,
):
    """
    e(2) for the sorted unique ``entities``; layer 1 runs on them and every
    entity their (possibly capped) neighbor sets mention.
    """
    dims = model.dims
    ent_tab, rel_tab = params["entity"], params["relation"]
    entities = np.unique(np.asarray(entities, dtype=np.int64))
    nb2 = neighborhood(neighbors, entities, dims.mask, cap=cap, cap_key=cap_key, dtype=ent_tab.dtype)
    layer1_ids = np.unique(np.concatenate([entities, nb2.o_ent, nb2.t_ent]))
    nb1 = neighborhood(neighbors, layer1_ids, dims.mask, cap=cap, cap_key=cap_key, dtype=ent_tab.dtype)

    w1 = model.layer_weights(1, params)
    w2 = model.layer_weights(2, params)
    e1, c1 = layer_forward(
        w1, dims.layers[0], dims.num_attention_heads, ent_tab, rel_tab, nb1, train=train, rng=rng, dropout=dropout
    )
    rel1 = rel_tab @ w1["Wr"].T
    e2, c2 = layer_forward(
        w2, dims.layers[1], dims.num_attention_heads, e1, rel1, nb2.remap(layer1_ids),
        train=train, rng=rng, dropout=dropout,
    )
    cache = {"c1": c1, "c2": c2, "e1_shape": e1.shape, "rel1_shape": rel1.shape}
    return entities, e2, cache


def backward_entities(
    model: AggregatorModel,
    params: Dict[str, np.ndarray],
    cache,
    d_e2: np.ndarray,
) -> Dict[str, np.ndarray]:
    w1 = model.layer_weights(1, params)
    w2 = model.layer_weights(2, params)
    rel_tab = params["relation"]
    g2, d_e1, d_rel1 = layer_backward(cache["c2"], d_e2, w2, cache["e1_shape"], cache["rel1_shape"])
    g1, d_ent, d_rel = layer_backward(cache["c1"], d_e1, w1, params["entity"].shape, rel_tab.shape)
    g1["Wr"] = d_rel1.T @ rel_tab
    d_rel = d_rel + d_rel1 @ w1["Wr"]
    grads = {f"l1.{k}": v for k, v in g1.items()}
    grads.update({f"l2.{k}": v for k, v in g2.items()})
    grads["entity"] = d_ent
    grads["relation"] = d_rel
    return grads


def model_params(model: AggregatorModel, base: EmbeddingTable) -> Dict[str, np.ndarray]:
    params = dict(model.weights)
    params["entity"] = base.entity_emb
    params["relation"] = base.relation_emb
    return params


def na_energy(
    h_nei: np.ndarray,
    r_nei: np.ndarray,
    t_nei: np.ndarray,
    norm: str = "L1",
):
    """||h_nei + r_nei - t_nei||, row-wise."""
    h_nei, r_nei, t_nei = np.asarray(h_nei), np.asarray(r_nei), np.asarray(t_nei)
    if not (h_nei.shape == r_nei.shape == t_nei.shape):
        raise ShapeError(f"dimension mismatch: {h_nei.shape}, {r_nei.shape}, {t_nei.shape}")
    return nx.norm(h_nei + r_nei - t_nei, norm)


def na_loss_and_grads(
    model: AggregatorModel,
    params: Dict[str, np.ndarray],
    neighbors: NeighborSets,
    pos: np.ndarray,
    neg: np.ndarray,
    margin: float,
    *,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
    dropout: float = 0.0,
    cap: Optional[int] = None,
    cap_key: Optional[Tuple[int, int]] = None,
) -> Tuple[float, Dict[str, np.ndarray]]:
    """Summed margin loss of the neighbor-based energy and its gradient for every parameter."""
    rows = np.concatenate([pos[:, 0], pos[:, 2], neg[:, 0], neg[:, 2]])
    ents, e2, cache = forward_entities(
        model, params, neighbors, rows, train=train, rng=rng, dropout=dropout, cap=cap, cap_key=cap_key
    )
    rel_tab, wr2 = params["relation"], params["l2.Wr"]

    def diff(batch):
        hi = np.searchsorted(ents, batch[:, 0])
        ti = np.searchsorted(ents, batch[:, 2])
        r_nei = rel_tab[batch[:, 1]] @ wr2.T
        return hi, ti, e2[hi] + r_nei - e2[ti]

    hp, tp, dp = diff(pos)
    hn, tn, dn = diff(neg)
    hinge = margin + nx.norm(dp, model.norm) - nx.norm(dn, model.norm)
    loss = float(np.sum(np.maximum(hinge, 0.0)))
    active = (hinge > 0).astype(e2.dtype)[:, None]
    gp = nx.norm_grad(dp, model.norm) * active
    gn = -nx.norm_grad(dn, model.norm) * active

    d_e2 = np.zeros_like(e2)
    d_rnei = np.concatenate([gp, gn])
    for h_idx, t_idx, g in ((hp, tp, gp), (hn, tn, gn)):
        np.add.at(d_e2, h_idx, g)
        np.add.at(d_e2, t_idx, -g)
    grads = backward_entities(model, params, cache, d_e2)
    rels = np.concatenate([pos[:, 1], neg[:, 1]])
    grads["l2.Wr"] = d_rnei.T @ rel_tab[rels]
    np.add.at(grads["relation"], rels, d_rnei @ wr2)
    return loss, grads


class NeighborEmbeddings(NamedTuple):
    """Eval-mode outputs for every entity: e(1), e_nei = e(2), and r_nei = W_r(2) r per relation row."""

    layer1: np.ndarray
    entity: np.ndarray
    relation: np.ndarray
    norm: str

    def energies(self, heads: np.ndarray, rels: np.ndarray, tails: np.ndarray) -> np.ndarray:
        return na_energy(self.entity[heads], self.relation[rels], self.entity[tails], self.norm)


def materialize(
    model: AggregatorModel,
    neighbors: NeighborSets,
    base: EmbeddingTable,
    *,
    chunk_size: int = 1024,
    progress: Optional[bool] = None,
) -> NeighborEmbeddings:
    """Eval-mode neighbor-based embeddings of all entities, layer by layer over all neighbors."""
    dims = model.dims
    n = neighbors.entity_count
    w1, w2 = model.layer_weights(1), model.layer_weights(2)
    disable = None if progress is None else not progress

    def run(layer: int, w, ent_feat, rel_feat) -> np.ndarray:
        outs: List[np.ndarray] = []
        for lo in tqdm(range(0, n, chunk_size), desc=f"embed[l{layer}]", disable=disable):
            centers = np.arange(lo, min(lo + chunk_size, n), dtype=np.int64)
            nb = neighborhood(neighbors, centers, dims.mask, dtype=ent_feat.dtype)
            out, _ = layer_forward(w, dims.layer(layer), dims.num_attention_heads, ent_feat, rel_feat, nb)
            outs.append(out)
        return np.concatenate(outs) if outs else np.zeros((0, dims.layer(layer).d_out), dtype=ent_feat.dtype)

    e1 = run(1, w1, base.entity_emb, base.relation_emb)
    e2 = run(2, w2, e1, base.relation_emb @ w1["Wr"].T)
    return NeighborEmbeddings(e1, e2, base.relation_emb @ w2["Wr"].T, model.norm)


def forward(
    e: int,
    model: AggregatorModel,
    neighbors: NeighborSets,
    base: EmbeddingTable,
) -> np.ndarray:
    """Eval-mode e_nei of one entity."""
    if not 0 <= e < neighbors.entity_count:
        raise IndexError(f"entity id {e} out of range")
    _, e2, _ = forward_entities(model, model_params(model, base), neighbors, np.asarray([e]))
    return e2[0]


def attention_weights(
    model: AggregatorModel,
    neighbors: NeighborSets,
    base: EmbeddingTable,
    layer: int,
    kind: NeighborKind,
) -> Tuple[np.ndarray, np.ndarray]:
    """(segment ids, weights (P, K_m)) of every entity's neighbors in eval mode."""
    emb = materialize(model, neighbors, base, progress=False)
    centers = np.arange(neighbors.entity_count, dtype=np.int64)
    nb = neighborhood(neighbors, centers, model.dims.mask, dtype=base.entity_emb.dtype)
    if layer == 1:
        ent_feat, rel_feat = base.entity_emb, base.relation_emb
    else:
        ent_feat, rel_feat = emb.layer1, base.relation_emb @ model.weights["l1.Wr"].T
    _, cache = layer_forward(
        model.layer_weights(layer), model.dims.layer(layer), model.dims.num_attention_heads, ent_feat, rel_feat, nb
    )
    branch = cache["co"] if kind == "original" else cache["ct"]
    if branch is None:
        return np.zeros(0, np.int64), np.zeros((0, model.dims.num_attention_heads), dtype=ent_feat.dtype)
    return branch["seg"], branch["alpha"]


def train_aggregator(
    kg: KnowledgeGraph,
    neighbors: NeighborSets,
    base: EmbeddingTable,
    config: AggregatorConfig,
    *,
    seed: int = 42,
    bus: Optional[EventEmitter] = None,
    progress: Optional[bool] = None,
) -> Tuple[AggregatorModel, EmbeddingTable]:
    """
    Adam on the margin loss of the neighbor-based energy.

    Base embeddings are trained alongside the aggregator weights unless
    ``freeze_base``. Each epoch re-samples the capped neighbor sets.
    """
    base.check_covers(kg)
    if not config.use_transformed:
        neighbors = neighbors.without_transformed()
    model = AggregatorModel.initialize(base.dim, config, seed, dtype=base.entity_emb.dtype)
    if config.epochs == 0 or len(kg) == 0:
        return model, base.copy()

    params = model_params(model, base.copy())
    state = nx.AdamState.zeros(params, learning_rate=config.learning_rate)
    rng = np.random.default_rng([seed, 4])
    triples = kg.triples
    n = triples.shape[0]

    disable = None if progress is None else not progress
    for epoch in tqdm(range(1, config.epochs + 1), desc="agg", disable=disable):
        perm = rng.permutation(n)
        total = 0.0
        for b, lo in enumerate(range(0, n, config.batch_size)):
            batch = triples[perm[lo : lo + config.batch_size]]
            pos, neg = corrupt_batch(kg, batch, config.negatives, rng)
            loss, grads = na_loss_and_grads(
                model,
                params,
                neighbors,
                pos,
                neg,
                config.margin,
                train=True,
                rng=rng,
                dropout=config.dropout,
                cap=config.neighbor_cap,
                cap_key=(seed, epoch),
            )
            if not math.isfinite(loss):
                raise NumericError("non-finite loss", stage="agg", epoch=epoch, batch=b)
            if config.freeze_base:
                grads.pop("entity")
                grads.pop("relation")
            try:
                params, state = nx.adam_step(params, grads, state)
            except NumericError as e:
                raise NumericError(str(e), stage="agg", epoch=epoch, batch=b) from e
            total += loss
        notify(bus, "agg.epoch", epoch=epoch, epochs=config.epochs, loss=total / (n * config.negatives))

    trained = model.with_weights(params)
    return trained, EmbeddingTable(params["entity"], params["relation"], base.norm)
