import logging
import os
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from rmna.domain.graph import KnowledgeGraph
from rmna.domain.report import RankingReport

logger = logging.getLogger(__name__)


def format_report(
    report: RankingReport,
    *,
    title: str = "",
    reference: Optional[Dict[str, Dict[str, float]]] = None,
) -> str:
    """
    Aligned plain-text table, metrics as percentages.

    ``reference`` maps a row label (e.g. ``published``, ``published nh``) to
    published percentages keyed like ``RankingReport.metrics()``.
    """
    metrics = report.metrics()
    cols = list(metrics)
    rows: List[Tuple[str, List[str]]] = [("measured", [f"{100.0 * metrics[c]:.2f}" for c in cols])]
    for label, values in (reference or {}).items():
        rows.append((label, [f"{values[c]:.1f}" if c in values else "-" for c in cols]))

    header = ["", *cols]
    width = [max(len(header[0]), *(len(r[0]) for r in rows))]
    for i, c in enumerate(cols):
        width.append(max(len(c), *(len(r[1][i]) for r in rows)))

    def line(cells: Sequence[str]) -> str:
        first = cells[0].ljust(width[0])
        rest = [cell.rjust(w) for cell, w in zip(cells[1:], width[1:])]
        return "  ".join([first, *rest]).rstrip()

    out = []
    if title:
        out.append(title)
    out.append(f"mode: {report.mode}, ranks: {report.rank_count}")
    out.append(line(header))
    out.append(line(["-" * w for w in width]))
    for label, cells in rows:
        out.append(line([label, *cells]))
    return "\n".join(out) + "\n"


def write_report_tsv(report: RankingReport, path: str | os.PathLike) -> Path:
    """``metric<TAB>value`` lines; values are ratios in [0, 1]."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"mode\t{report.mode}\n")
        for metric, value in report.metrics().items():
            fh.write(f"{metric}\t{value!r}\n")
        fh.write(f"ranks\t{report.rank_count}\n")
    return p


def read_report_tsv(path: str | os.PathLike) -> Dict[str, str]:
    out: Dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            key, _, value = line.partition("\t")
            out[key] = value
    return out


def write_rank_dump(
    report: RankingReport,
    test: KnowledgeGraph | np.ndarray,
    kg: KnowledgeGraph,
    path: str | os.PathLike,
) -> Path:
    """One ``head<TAB>relation<TAB>tail<TAB>head_rank<TAB>tail_rank`` line per test triple."""
    triples = test.triples if isinstance(test, KnowledgeGraph) else np.asarray(test).reshape(-1, 3)
    if len(triples) != len(report.per_triple_ranks):
        raise ValueError(f"{len(triples)} test triples but {len(report.per_triple_ranks)} rank pairs")
    ents = kg.vocab.entities
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", encoding="utf-8", newline="\n") as fh:
        for (h, r, t), (hr, tr) in zip(triples, report.per_triple_ranks):
            fh.write(f"{ents[h]}\t{kg.relation_label(int(r))}\t{ents[t]}\t{hr}\t{tr}\n")
    logger.debug("[eval] wrote %d rank rows to %s", len(triples), p)
    return p


def write_loss_history(records: Sequence[Tuple[int, float]], path: str | os.PathLike) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch\tloss\n")
        for epoch, loss in records:
            fh.write(f"{epoch}\t{loss!r}\n")
    return p
