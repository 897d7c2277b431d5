from typing import List, Tuple

import numpy as np

from rmna.domain.errors import NegativeSamplingExhausted
from rmna.domain.graph import KnowledgeGraph, Triple

ATTEMPTS_PER_SAMPLE = 100


def sample_negatives(kg: KnowledgeGraph, t: Triple | Tuple[int, int, int], n: int, seed: int) -> List[Triple]:
    """
    Corrupt the head or the tail of ``t`` (fair coin per sample) with a uniform
    entity other than ``t``'s head and tail, rejecting anything already in ``kg``.
    Gives up after 100 * n draws.
    """
    h, r, tail = map(int, t)
    if n <= 0:
        return []
    rng = np.random.default_rng(seed)
    out: List[Triple] = []
    budget = ATTEMPTS_PER_SAMPLE * n
    while len(out) < n:
        if budget <= 0:
            raise NegativeSamplingExhausted(
                f"no legal corruption of {(h, r, tail)} found after {ATTEMPTS_PER_SAMPLE * n} draws"
            )
        budget -= 1
        e = int(rng.integers(kg.entity_count))
        cand = Triple(e, r, tail) if rng.random() < 0.5 else Triple(h, r, e)
        if e != h and e != tail and cand not in kg:
            out.append(cand)
    return out


def corrupt_batch(
    kg: KnowledgeGraph,
    batch: np.ndarray,
    negatives: int,
    rng: np.random.Generator,
    *,
    max_rounds: int = ATTEMPTS_PER_SAMPLE,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorized corruption for training loops.

    Returns ``(positives, negatives)`` as aligned (B * negatives, 3) arrays,
    each positive repeated once per negative. The replacement entity is never
    the positive's head or tail. Rows still colliding with a known triple
    after ``max_rounds`` redraws raise NegativeSamplingExhausted.
    """
    pos = np.repeat(np.asarray(batch, dtype=np.int64).reshape(-1, 3), negatives, axis=0)
    neg = pos.copy()
    if pos.shape[0] == 0:
        return pos, neg
    todo = np.arange(pos.shape[0])
    for _ in range(max_rounds):
        k = todo.shape[0]
        ents = rng.integers(kg.entity_count, size=k)
        head_side = rng.random(k) < 0.5
        neg[todo] = pos[todo]
        neg[todo[head_side], 0] = ents[head_side]
        neg[todo[~head_side], 2] = ents[~head_side]
        retry = kg.contains_codes(kg.encode(neg[todo, 0], neg[todo, 1], neg[todo, 2]))
        # the replacement must differ from both ends of the positive
        retry |= (ents == pos[todo, 0]) | (ents == pos[todo, 2])
        todo = todo[retry]
        if todo.size == 0:
            return pos, neg
    raise NegativeSamplingExhausted(
        f"{todo.size} positives had no legal corruption after {max_rounds} rounds"
    )
