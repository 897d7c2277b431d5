import logging
import os
from pathlib import Path
from typing import List, Sequence, Tuple

from rmna.domain.errors import ParseError, UnknownSymbolError
from rmna.domain.graph import KnowledgeGraph
from rmna.domain.rules import HornRule, RuleMetrics, TransformedNeighbor

logger = logging.getLogger(__name__)

MinedRule = Tuple[HornRule, RuleMetrics]

ARROW = "=>"


def _fmt(x: float) -> str:
    # repr of a Python float is the shortest string that round-trips
    return repr(float(x))


def _lines(path: Path):
    try:
        fh = path.open("r", encoding="utf-8", newline="")
    except FileNotFoundError:
        raise ParseError("file not found", path=str(path)) from None
    with fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            yield line_no, line.split("\t")


def _rel(kg: KnowledgeGraph, label: str, path: Path, line_no: int) -> int:
    try:
        return kg.relation_id(label)
    except UnknownSymbolError as e:
        raise ParseError(str(e), path=str(path), line_no=line_no) from None


def write_rules(rules: Sequence[MinedRule], kg: KnowledgeGraph, path: str | os.PathLike) -> None:
    """``r1,r2,...<TAB>=><TAB>head<TAB>support<TAB>hc<TAB>conf`` with relation labels."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", encoding="utf-8", newline="\n") as fh:
        for rule, m in rules:
            body = ",".join(kg.relation_label(r) for r in rule.body)
            fh.write(
                f"{body}\t{ARROW}\t{kg.relation_label(rule.head)}\t{m.support}\t"
                f"{_fmt(m.head_coverage)}\t{_fmt(m.confidence)}\n"
            )
    logger.debug("[rules] wrote %d rules to %s", len(rules), p)


def read_rules(path: str | os.PathLike, kg: KnowledgeGraph) -> List[MinedRule]:
    p = Path(path)
    out: List[MinedRule] = []
    for line_no, parts in _lines(p):
        if len(parts) != 6 or parts[1] != ARROW:
            raise ParseError(
                "expected 'body<TAB>=><TAB>head<TAB>support<TAB>hc<TAB>conf'", path=str(p), line_no=line_no
            )
        body = tuple(_rel(kg, label, p, line_no) for label in parts[0].split(","))
        head = _rel(kg, parts[2], p, line_no)
        try:
            metrics = RuleMetrics(
                support=int(parts[3]),
                head_coverage=float(parts[4]),
                confidence=float(parts[5]),
            )
            rule = HornRule(body=body, head=head)
        except ValueError as e:
            raise ParseError(f"invalid rule: {e}", path=str(p), line_no=line_no) from None
        out.append((rule, metrics))
    return out


def write_transformed(
    transformed: Sequence[Sequence[TransformedNeighbor]],
    kg: KnowledgeGraph,
    path: str | os.PathLike,
) -> int:
    """One row per transformed neighbor: source, relation, entity, hc, conf, l_norm, s, rule body."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    ents = kg.vocab.entities
    rows = 0
    with p.open("w", encoding="utf-8", newline="\n") as fh:
        for e, items in enumerate(transformed):
            for tn in items:
                body = ",".join(kg.relation_label(r) for r in tn.body)
                fh.write(
                    f"{ents[e]}\t{kg.relation_label(tn.rel)}\t{ents[tn.entity]}\t"
                    f"{_fmt(tn.hc)}\t{_fmt(tn.conf)}\t{_fmt(tn.l_norm)}\t{_fmt(tn.s)}\t{body}\n"
                )
                rows += 1
    return rows


def read_transformed(path: str | os.PathLike, kg: KnowledgeGraph) -> List[List[TransformedNeighbor]]:
    p = Path(path)
    out: List[List[TransformedNeighbor]] = [[] for _ in range(kg.entity_count)]
    for line_no, parts in _lines(p):
        if len(parts) != 8:
            raise ParseError(f"expected 8 tab-separated fields, got {len(parts)}", path=str(p), line_no=line_no)
        try:
            src = kg.vocab.entity_id(parts[0], line_no=line_no)
            dst = kg.vocab.entity_id(parts[2], line_no=line_no)
        except UnknownSymbolError as e:
            raise ParseError(str(e), path=str(p), line_no=line_no) from None
        body = tuple(_rel(kg, label, p, line_no) for label in parts[7].split(",") if label)
        try:
            tn = TransformedNeighbor(
                rel=_rel(kg, parts[1], p, line_no),
                entity=dst,
                hc=float(parts[3]),
                conf=float(parts[4]),
                l_norm=float(parts[5]),
                s=float(parts[6]),
                body=body,
            )
        except ValueError as e:
            raise ParseError(f"invalid transformed neighbor: {e}", path=str(p), line_no=line_no) from None
        out[src].append(tn)
    return out
