from typing import Dict, List, Literal, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

RankingMode = Literal["raw", "filtered"]
HITS_AT = (1, 3, 10)


class RankingReport(BaseModel):
    """Link-prediction metrics over head and tail ranks of a test set."""

    model_config = ConfigDict(frozen=True)

    mode: RankingMode
    mrr: float = Field(ge=0.0, le=1.0)
    hits_at: Dict[int, float]
    per_triple_ranks: List[Tuple[int, int]]

    @model_validator(mode="after")
    def _check(self) -> "RankingReport":
        values = [self.hits_at[n] for n in sorted(self.hits_at)]
        if any(v < 0.0 or v > 1.0 for v in values):
            raise ValueError("hits ratios must lie in [0, 1]")
        if any(a > b for a, b in zip(values, values[1:])):
            raise ValueError("hits_at must be non-decreasing in n")
        if any(h < 1 or t < 1 for h, t in self.per_triple_ranks):
            raise ValueError("ranks start at 1")
        return self

    @property
    def rank_count(self) -> int:
        return 2 * len(self.per_triple_ranks)

    def metrics(self) -> Dict[str, float]:
        out = {"mrr": self.mrr}
        for n in sorted(self.hits_at):
            out[f"hits@{n}"] = self.hits_at[n]
        return out
