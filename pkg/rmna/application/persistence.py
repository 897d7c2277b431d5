import os
from typing import Tuple

from rmna.application.aggregator import AggregatorDims, AggregatorModel, LayerDims, NeighborEmbeddings
from rmna.application.decoder import DecoderParams
from rmna.config import FeatureMask
from rmna.domain.embeddings import EmbeddingTable
from rmna.domain.errors import CheckpointFormatError
from rmna.domain.graph import Vocabulary
from rmna.infra.checkpoints import load_checkpoint, save_checkpoint


def _meta(ckpt, key: str) -> str:
    try:
        return ckpt.metadata[key]
    except KeyError:
        raise CheckpointFormatError(f"{ckpt.kind} checkpoint lacks metadata {key!r}") from None


def _tensor(ckpt, name: str):
    try:
        return ckpt.tensors[name]
    except KeyError:
        raise CheckpointFormatError(f"{ckpt.kind} checkpoint lacks tensor {name!r}") from None


def save_embedding_table(path: str | os.PathLike, table: EmbeddingTable, vocab: Vocabulary):
    return save_checkpoint(
        path,
        "transe",
        {"entity": table.entity_emb, "relation": table.relation_emb},
        vocab=vocab,
        metadata={"norm": table.norm, "dim": str(table.dim)},
    )


def load_embedding_table(path: str | os.PathLike, vocab: Vocabulary | None = None) -> EmbeddingTable:
    ckpt = load_checkpoint(path, "transe", vocab=vocab)
    return EmbeddingTable(_tensor(ckpt, "entity"), _tensor(ckpt, "relation"), _meta(ckpt, "norm"))


def _encode_dims(dims: AggregatorDims) -> str:
    l1, l2 = dims.layers
    values = (
        dims.base_dim,
        dims.num_attention_heads,
        dims.num_self_attention_heads,
        l1.d_out,
        l1.query,
        l1.value,
        l2.d_out,
        l2.query,
        l2.value,
    )
    return ",".join(str(v) for v in values)


def _decode_dims(raw: str, mask_raw: str) -> AggregatorDims:
    try:
        base, km, ks, d1, q1, v1, d2, q2, v2 = (int(x) for x in raw.split(","))
        flags = [x == "1" for x in mask_raw.split(",")]
        mask = FeatureMask(use_hc=flags[0], use_conf=flags[1], use_lnorm=flags[2], use_s=flags[3])
    except (ValueError, IndexError):
        raise CheckpointFormatError(f"invalid aggregator dimensions {raw!r} / mask {mask_raw!r}") from None
    return AggregatorDims(
        base_dim=base,
        num_attention_heads=km,
        num_self_attention_heads=ks,
        layers=(LayerDims(base, d1, q1, v1), LayerDims(d1, d2, q2, v2)),
        mask=mask,
    )


def save_aggregator(path: str | os.PathLike, model: AggregatorModel, base: EmbeddingTable, vocab: Vocabulary):
    """Aggregator weights together with the base embeddings they were trained with."""
    m = model.dims.mask
    tensors = dict(model.weights)
    tensors["entity"] = base.entity_emb
    tensors["relation"] = base.relation_emb
    return save_checkpoint(
        path,
        "aggregator",
        tensors,
        vocab=vocab,
        metadata={
            "dims": _encode_dims(model.dims),
            "mask": ",".join("1" if f else "0" for f in (m.use_hc, m.use_conf, m.use_lnorm, m.use_s)),
            "norm": model.norm,
            "base_norm": base.norm,
        },
    )


def load_aggregator(
    path: str | os.PathLike, vocab: Vocabulary | None = None
) -> Tuple[AggregatorModel, EmbeddingTable]:
    ckpt = load_checkpoint(path, "aggregator", vocab=vocab)
    dims = _decode_dims(_meta(ckpt, "dims"), _meta(ckpt, "mask"))
    weights = {k: v for k, v in ckpt.tensors.items() if k not in ("entity", "relation")}
    model = AggregatorModel(dims, weights, _meta(ckpt, "norm"))
    base = EmbeddingTable(_tensor(ckpt, "entity"), _tensor(ckpt, "relation"), _meta(ckpt, "base_norm"))
    return model, base


def save_neighbor_embeddings(path: str | os.PathLike, emb: NeighborEmbeddings, vocab: Vocabulary):
    return save_checkpoint(
        path,
        "neighbor",
        {"layer1": emb.layer1, "entity": emb.entity, "relation": emb.relation},
        vocab=vocab,
        metadata={"norm": emb.norm, "dim": str(emb.entity.shape[1])},
    )


def load_neighbor_embeddings(path: str | os.PathLike, vocab: Vocabulary | None = None) -> NeighborEmbeddings:
    ckpt = load_checkpoint(path, "neighbor", vocab=vocab)
    return NeighborEmbeddings(
        _tensor(ckpt, "layer1"), _tensor(ckpt, "entity"), _tensor(ckpt, "relation"), _meta(ckpt, "norm")
    )


def save_decoder(path: str | os.PathLike, params: DecoderParams, vocab: Vocabulary):
    return save_checkpoint(
        path,
        "decoder",
        params.as_dict(),
        vocab=vocab,
        metadata={"l2_reg": repr(float(params.l2_reg)), "num_kernels": str(params.num_kernels)},
    )


def load_decoder(path: str | os.PathLike, vocab: Vocabulary | None = None) -> DecoderParams:
    ckpt = load_checkpoint(path, "decoder", vocab=vocab)
    for name in ("entity", "relation", "kernels", "w_rl"):
        _tensor(ckpt, name)
    try:
        l2_reg = float(_meta(ckpt, "l2_reg"))
    except ValueError:
        raise CheckpointFormatError("invalid l2_reg metadata") from None
    return DecoderParams.from_dict(ckpt.tensors, l2_reg)
