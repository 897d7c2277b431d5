"""
Versioned line-oriented checkpoints.

Layout::

    RMNA-CKPT v1
    kind=<kind>
    vocab=<sha256 of the vocabulary>
    <key>=<value>            (more metadata)
    tensors=<count>
    <name> <rows> <cols>
    <row of space-separated decimals>
    ...

Tensors that are not 2-D are stored flattened to (-1, last axis) with a
``shape.<name>`` metadata entry. Floats are written in the shortest form that
reads back to the same value.
"""

import logging
import os
from pathlib import Path
from typing import Dict, Iterator, NamedTuple, Optional, Tuple

import numpy as np

from rmna.domain.errors import CheckpointFormatError, CheckpointIncompatibleError, CheckpointKindError
from rmna.domain.graph import Vocabulary

logger = logging.getLogger(__name__)

MAGIC = "RMNA-CKPT"
VERSION = "v1"
KINDS = ("transe", "aggregator", "neighbor", "decoder")
_DTYPES = {"float32": np.float32, "float64": np.float64}


class Checkpoint(NamedTuple):
    kind: str
    metadata: Dict[str, str]
    tensors: Dict[str, np.ndarray]


def _format_row(row: np.ndarray) -> str:
    return " ".join(np.format_float_positional(v, unique=True, trim="-") for v in row)


def save_checkpoint(
    path: str | os.PathLike,
    kind: str,
    tensors: Dict[str, np.ndarray],
    *,
    vocab: Optional[Vocabulary] = None,
    metadata: Optional[Dict[str, str]] = None,
) -> Path:
    if kind not in KINDS:
        raise CheckpointKindError(f"unknown checkpoint kind {kind!r}")
    dtypes = {t.dtype.name for t in tensors.values()}
    if len(dtypes) > 1 or not dtypes <= set(_DTYPES):
        raise CheckpointFormatError(f"tensors must share one float dtype, got {sorted(dtypes)}")
    meta: Dict[str, str] = {"kind": kind, "vocab": vocab.fingerprint() if vocab is not None else "none"}
    meta["dtype"] = dtypes.pop() if dtypes else "float32"
    for key, value in (metadata or {}).items():
        if "=" in key or "\n" in key or "\n" in str(value) or " " in key:
            raise CheckpointFormatError(f"invalid metadata entry {key!r}")
        meta[key] = str(value)
    for name, t in tensors.items():
        if not name or any(c.isspace() for c in name):
            raise CheckpointFormatError(f"invalid tensor name {name!r}")
        if t.ndim != 2:
            meta[f"shape.{name}"] = ",".join(str(s) for s in t.shape)

    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    tmp = p.with_name(p.name + ".tmp")
    with tmp.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{MAGIC} {VERSION}\n")
        for key, value in meta.items():
            fh.write(f"{key}={value}\n")
        fh.write(f"tensors={len(tensors)}\n")
        for name, t in tensors.items():
            flat = t.reshape(1, -1) if t.ndim < 2 else t.reshape(-1, t.shape[-1])
            fh.write(f"{name} {flat.shape[0]} {flat.shape[1]}\n")
            for row in flat:
                fh.write(_format_row(row) + "\n")
    os.replace(tmp, p)
    logger.info("[ckpt] saved %s checkpoint with %d tensors to %s", kind, len(tensors), p)
    return p


def _next(lines: Iterator[Tuple[int, str]], what: str) -> Tuple[int, str]:
    try:
        return next(lines)
    except StopIteration:
        raise CheckpointFormatError(f"truncated checkpoint: expected {what}") from None


def load_checkpoint(
    path: str | os.PathLike,
    kind: str,
    *,
    vocab: Optional[Vocabulary] = None,
) -> Checkpoint:
    """Read a checkpoint, insisting on ``kind`` and, when given, on the vocabulary fingerprint."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise CheckpointFormatError(f"checkpoint not found: {p}") from None
    lines = iter(enumerate(text.split("\n"), start=1))

    _, header = _next(lines, "header")
    parts = header.split()
    if len(parts) != 2 or parts[0] != MAGIC:
        raise CheckpointFormatError(f"{p}: not a checkpoint (header {header[:40]!r})")
    if parts[1] != VERSION:
        raise CheckpointFormatError(f"{p}: unsupported checkpoint version {parts[1]!r}")

    meta: Dict[str, str] = {}
    while True:
        line_no, line = _next(lines, "metadata")
        if "=" not in line:
            raise CheckpointFormatError(f"{p}:{line_no}: expected key=value, got {line[:40]!r}")
        key, value = line.split("=", 1)
        if key == "tensors":
            break
        meta[key] = value
    try:
        count = int(value)
    except ValueError:
        raise CheckpointFormatError(f"{p}:{line_no}: invalid tensor count {value!r}") from None

    found = meta.get("kind")
    if found != kind:
        raise CheckpointKindError(f"{p}: checkpoint holds {found!r}, expected {kind!r}")
    if vocab is not None and meta.get("vocab") != vocab.fingerprint():
        raise CheckpointIncompatibleError(f"{p}: checkpoint was written for a different vocabulary")
    dtype = _DTYPES.get(meta.get("dtype", "float32"))
    if dtype is None:
        raise CheckpointFormatError(f"{p}: unsupported dtype {meta.get('dtype')!r}")

    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        line_no, line = _next(lines, "tensor header")
        head = line.split()
        if len(head) != 3:
            raise CheckpointFormatError(f"{p}:{line_no}: expected 'name rows cols', got {line[:40]!r}")
        name = head[0]
        try:
            rows, cols = int(head[1]), int(head[2])
        except ValueError:
            raise CheckpointFormatError(f"{p}:{line_no}: invalid tensor dimensions") from None
        data = np.empty((rows, cols), dtype=dtype)
        for i in range(rows):
            line_no, line = _next(lines, f"row {i + 1} of {name}")
            values = line.split()
            if len(values) != cols:
                raise CheckpointFormatError(f"{p}:{line_no}: {name} row has {len(values)} values, expected {cols}")
            try:
                data[i] = np.asarray(values, dtype=np.float64)
            except ValueError:
                raise CheckpointFormatError(f"{p}:{line_no}: non-numeric value in {name}") from None
        shape = meta.get(f"shape.{name}")
        if shape is not None:
            dims = tuple(int(s) for s in shape.split(",")) if shape else ()
            data = data.reshape(dims)
        tensors[name] = data

    for line_no, line in lines:
        if line.strip():
            raise CheckpointFormatError(f"{p}:{line_no}: unexpected content after the last tensor")
    logger.debug("[ckpt] loaded %s checkpoint from %s", kind, p)
    return Checkpoint(kind=kind, metadata=meta, tensors=tensors)
