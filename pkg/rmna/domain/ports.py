from typing import Protocol

import numpy as np


class Scorer(Protocol):
    """Energy of (h, r, t) triples; lower means more plausible."""

    def energies(self, heads: np.ndarray, rels: np.ndarray, tails: np.ndarray) -> np.ndarray: ...
