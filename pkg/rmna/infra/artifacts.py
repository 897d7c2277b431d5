import os
from pathlib import Path

from rmna.domain.errors import DependencyError

# file name -> subcommand that writes it
PRODUCERS = {
    "transe.ckpt": "pretrain",
    "rules_mined.tsv": "mine",
    "rules_selected.tsv": "filter",
    "transformed.tsv": "match",
    "aggregator.ckpt": "train-agg",
    "neighbor.ckpt": "train-agg",
    "decoder.ckpt": "train-dec",
}


class RunDirectory:
    """Artifact locations of one run; every stage reads and writes here."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)

    def ensure(self) -> "RunDirectory":
        self.root.mkdir(parents=True, exist_ok=True)
        return self

    def path(self, name: str) -> Path:
        return self.root / name

    def require(self, name: str) -> Path:
        p = self.path(name)
        if not p.is_file():
            raise DependencyError(str(p), PRODUCERS.get(name, "pipeline"))
        return p

    @property
    def transe(self) -> Path:
        return self.path("transe.ckpt")

    @property
    def mined_rules(self) -> Path:
        return self.path("rules_mined.tsv")

    @property
    def selected_rules(self) -> Path:
        return self.path("rules_selected.tsv")

    @property
    def transformed(self) -> Path:
        return self.path("transformed.tsv")

    @property
    def aggregator(self) -> Path:
        return self.path("aggregator.ckpt")

    @property
    def neighbor(self) -> Path:
        return self.path("neighbor.ckpt")

    @property
    def decoder(self) -> Path:
        return self.path("decoder.ckpt")

    @property
    def resolved_config(self) -> Path:
        return self.path("config.resolved")

    def report_text(self, mode: str) -> Path:
        return self.path(f"report_{mode}.txt")

    def report_tsv(self, mode: str) -> Path:
        return self.path(f"report_{mode}.tsv")

    def rank_dump(self, mode: str) -> Path:
        return self.path(f"ranks_{mode}.tsv")

    def loss_history(self, stage: str) -> Path:
        return self.path(f"{stage}_loss.tsv")
