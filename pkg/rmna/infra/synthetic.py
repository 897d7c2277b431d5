"""
Planted-rule datasets.

Every entity gets one ``r1`` edge and one ``r2`` edge, so ``r1 . r2`` links
each entity to exactly one other. ``r3(a, c)`` is then asserted for a fixed
share of those body pairs, plus a few ``r3`` edges between unrelated pairs
and random ``r4`` distractor edges. Part of the planted ``r3`` edges can be
held out into valid/test.
"""

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Set, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

logger = logging.getLogger(__name__)

LabelTriple = Tuple[str, str, str]


class PlantedSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    entities: int = Field(200, ge=4)
    rate: float = Field(0.9, gt=0.0, le=1.0)
    # extra r3 edges off the body pairs, as a share of the planted ones
    noise: float = Field(0.1, ge=0.0, le=1.0)
    distractors: int = Field(1, ge=0)
    holdout: float = Field(0.0, ge=0.0, lt=1.0)
    seed: int = 0


@dataclass
class PlantedKG:
    train: List[LabelTriple]
    valid: List[LabelTriple]
    test: List[LabelTriple]
    body_pairs: Set[Tuple[str, str]] = field(default_factory=set)
    planted: Set[Tuple[str, str]] = field(default_factory=set)

    def splits(self) -> Dict[str, List[LabelTriple]]:
        return {"train": self.train, "valid": self.valid, "test": self.test}


def _name(i: int) -> str:
    return f"e{i}"


def generate_planted(spec: PlantedSpec) -> PlantedKG:
    rng = np.random.default_rng(spec.seed)
    n = spec.entities
    r1 = rng.integers(n, size=n)
    r2 = rng.integers(n, size=n)
    body = {(a, int(r2[r1[a]])) for a in range(n)}
    ordered = sorted(body)

    k = int(round(spec.rate * len(ordered)))
    chosen = rng.choice(len(ordered), size=k, replace=False)
    planted = sorted(ordered[i] for i in chosen)

    noise: Set[Tuple[int, int]] = set()
    want = int(round(spec.noise * k))
    while len(noise) < want:
        a, c = (int(x) for x in rng.integers(n, size=2))
        if (a, c) not in body:
            noise.add((a, c))

    triples: Set[Tuple[int, str, int]] = set()
    triples.update((a, "r1", int(r1[a])) for a in range(n))
    triples.update((b, "r2", int(r2[b])) for b in range(n))
    for _ in range(spec.distractors):
        heads, tails = rng.integers(n, size=n), rng.integers(n, size=n)
        triples.update((int(h), "r4", int(t)) for h, t in zip(heads, tails))
    triples.update((a, "r3", c) for a, c in noise)

    held = int(round(spec.holdout * len(planted)))
    order = rng.permutation(len(planted))
    held_out = [planted[i] for i in order[:held]]
    kept = [planted[i] for i in order[held:]]
    triples.update((a, "r3", c) for a, c in kept)

    def label(rows) -> List[LabelTriple]:
        return [(_name(h), r, _name(t)) for h, r, t in rows]

    train = label(sorted(triples, key=lambda x: (x[1], x[0], x[2])))
    half = len(held_out) // 2
    valid = label(sorted((a, "r3", c) for a, c in held_out[:half]))
    test = label(sorted((a, "r3", c) for a, c in held_out[half:]))
    logger.info(
        "[synth] %d entities, %d body pairs, %d planted r3 edges (%d held out), %d train triples",
        n,
        len(body),
        len(planted),
        held,
        len(train),
    )
    return PlantedKG(
        train=train,
        valid=valid,
        test=test,
        body_pairs={(_name(a), _name(c)) for a, c in body},
        planted={(_name(a), _name(c)) for a, c in planted},
    )


def write_planted(kg: PlantedKG, directory: str | os.PathLike) -> Dict[str, Path]:
    """Write ``train.txt``, ``valid.txt`` and ``test.txt`` as head<TAB>relation<TAB>tail."""
    out_dir = Path(directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: Dict[str, Path] = {}
    for split, rows in kg.splits().items():
        p = out_dir / f"{split}.txt"
        with p.open("w", encoding="utf-8", newline="\n") as fh:
            for h, r, t in rows:
                fh.write(f"{h}\t{r}\t{t}\n")
        paths[split] = p
    return paths
