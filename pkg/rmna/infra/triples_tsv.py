import logging
import os
from pathlib import Path
from typing import Literal, NamedTuple, Optional

import numpy as np

from rmna.domain.errors import ParseError
from rmna.domain.graph import KnowledgeGraph, Vocabulary, is_reserved_relation_label, original_triples

logger = logging.getLogger(__name__)

VocabMode = Literal["build", "reuse"]


class Dataset(NamedTuple):
    train: KnowledgeGraph
    valid: Optional[KnowledgeGraph]
    test: Optional[KnowledgeGraph]

    @property
    def vocab(self) -> Vocabulary:
        return self.train.vocab


def _read_rows(path: Path):
    try:
        fh = path.open("r", encoding="utf-8", newline="")
    except FileNotFoundError:
        raise ParseError("file not found", path=str(path)) from None
    with fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(
                    f"expected 3 tab-separated fields, got {len(parts)}",
                    path=str(path),
                    line_no=line_no,
                )
            yield line_no, parts


def load_triples(
    path: str | os.PathLike,
    vocab: Vocabulary | None = None,
    mode: VocabMode = "build",
) -> KnowledgeGraph:
    """
    Read a ``head<TAB>relation<TAB>tail`` file.

    ``build`` interns unseen labels (into ``vocab`` when given, else a fresh
    one) in first-appearance order; ``reuse`` requires every label to exist.
    """
    p = Path(path)
    if mode not in ("build", "reuse"):
        raise ValueError(f"unknown vocab mode {mode!r}")
    if mode == "reuse" and vocab is None:
        raise ValueError("reuse mode needs an existing vocabulary")
    vocab = vocab if vocab is not None else Vocabulary()

    rows = []
    for line_no, (h, r, t) in _read_rows(p):
        if is_reserved_relation_label(r):
            raise ParseError(
                f"relation label {r!r} is reserved for generated relations", path=str(p), line_no=line_no
            )
        if mode == "build":
            hid = vocab.intern_entity(h)
            rid = vocab.intern_relation(r)
            tid = vocab.intern_entity(t)
        else:
            hid = vocab.entity_id(h, line_no=line_no)
            rid = vocab.relation_id(r, line_no=line_no)
            tid = vocab.entity_id(t, line_no=line_no)
        rows.append((hid, rid, tid))

    kg = KnowledgeGraph(vocab, np.asarray(rows, dtype=np.int64).reshape(-1, 3))
    logger.debug("[kg] loaded %s: %d lines, %d distinct triples", p, len(rows), len(kg))
    return kg


def load_dataset(
    train: str | os.PathLike,
    valid: str | os.PathLike | None = None,
    test: str | os.PathLike | None = None,
) -> Dataset:
    """
    Load up to three splits over one shared vocabulary.

    Labels are interned across train, then valid, then test so that entities
    seen only in evaluation splits still get ids; every graph is then rebuilt
    against the final vocabulary so entity counts agree.
    """
    vocab = Vocabulary()
    parsed = [
        load_triples(p, vocab, "build") if p is not None else None for p in (train, valid, test)
    ]
    # graphs built early captured a smaller entity count
    ds = Dataset(*(KnowledgeGraph(vocab, g.triples) if g is not None else None for g in parsed))
    logger.info(
        "[kg] dataset: entities=%d relations=%d train=%d valid=%s test=%s",
        vocab.entity_count,
        vocab.relation_count,
        len(ds.train),
        len(ds.valid) if ds.valid is not None else "-",
        len(ds.test) if ds.test is not None else "-",
    )
    return ds


def write_triples(kg: KnowledgeGraph, path: str | os.PathLike) -> int:
    """Write the original (non-inverse) triples with labels; returns the row count."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    rows = original_triples(kg)
    ents = kg.vocab.entities
    rels = kg.vocab.relations
    with p.open("w", encoding="utf-8", newline="\n") as fh:
        for h, r, t in rows:
            fh.write(f"{ents[h]}\t{rels[r]}\t{ents[t]}\n")
    return int(rows.shape[0])
