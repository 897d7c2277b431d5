from typing import Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator


class HornRule(BaseModel):
    """Path-shaped closed rule r1(e,e1) ^ ... ^ rn(e_{n-1},e') -> head(e,e')."""

    model_config = ConfigDict(frozen=True)

    body: Tuple[int, ...]
    head: int

    @field_validator("body")
    @classmethod
    def _non_empty(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        if len(v) < 1:
            raise ValueError("rule body must contain at least one atom")
        return v

    @property
    def length(self) -> int:
        return len(self.body)

    def sort_key(self) -> Tuple[int, int, Tuple[int, ...]]:
        return (self.head, len(self.body), self.body)


class RuleMetrics(BaseModel):
    model_config = ConfigDict(frozen=True)

    support: int = Field(ge=0)
    head_coverage: float = Field(ge=0.0, le=1.0)
    confidence: float = Field(ge=0.0, le=1.0)


class TransformedNeighbor(BaseModel):
    """One-hop neighbor synthesized from a multi-hop neighbor by a selected rule."""

    model_config = ConfigDict(frozen=True)

    rel: int
    entity: int
    hc: float
    conf: float
    l_norm: float = Field(gt=0.0, le=1.0)
    s: float = Field(ge=0.0)
    # body of the rule that produced this neighbor
    body: Tuple[int, ...] = ()

    def metadata(self) -> Tuple[float, float, float, float]:
        return (self.hc, self.conf, self.l_norm, self.s)
