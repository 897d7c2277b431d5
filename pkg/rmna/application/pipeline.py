import logging
from contextlib import contextmanager
from functools import cached_property
from typing import Any, Dict, Iterator, List, Optional

from pyee.base import EventEmitter

from rmna.application import aggregator as agg
from rmna.application.decoder import DecoderParams, init_decoder, train_decoder
from rmna.application.evaluator import REFERENCE_RESULTS, KnownTriples, evaluate
from rmna.application.events import LossHistory, create_bus, notify, wire_events
from rmna.application.persistence import (
    load_decoder,
    load_embedding_table,
    load_neighbor_embeddings,
    save_aggregator,
    save_decoder,
    save_embedding_table,
    save_neighbor_embeddings,
)
from rmna.application.rules import MinedRule, filter_rules, match_rules, mine_path_rules
from rmna.application.transe import pretrain
from rmna.config import PipelineConfig, describe
from rmna.domain.embeddings import EmbeddingTable
from rmna.domain.errors import ConfigError
from rmna.domain.graph import KnowledgeGraph, add_inverse_relations
from rmna.domain.neighbors import NeighborSets
from rmna.domain.ports import Scorer
from rmna.domain.report import RankingMode, RankingReport
from rmna.infra.artifacts import RunDirectory
from rmna.infra.reports import format_report, write_loss_history, write_rank_dump, write_report_tsv
from rmna.infra.rules_tsv import read_rules, read_transformed, write_rules, write_transformed
from rmna.infra.triples_tsv import Dataset, load_dataset

logger = logging.getLogger(__name__)

STAGES = ("pretrain", "mine", "filter", "match", "train-agg", "train-dec", "eval")


class Pipeline:
    """
    Runs the stages over one dataset and one run directory.

    Each stage reads its inputs from the artifacts earlier stages wrote, so
    any stage can be resumed on its own.
    """

    def __init__(
        self,
        config: PipelineConfig,
        *,
        bus: Optional[EventEmitter] = None,
        progress: Optional[bool] = None,
    ):
        self.config = config
        self.run = RunDirectory(config.work_dir).ensure()
        self.bus = bus if bus is not None else create_bus()
        self.history: LossHistory = wire_events(self.bus)
        self.progress = progress

    # inputs

    @cached_property
    def dataset(self) -> Dataset:
        data = self.config.data
        if data.train is None:
            raise ConfigError("data.train is not set")
        return load_dataset(data.train, data.valid, data.test)

    @cached_property
    def graph(self) -> KnowledgeGraph:
        """Training graph, inverse augmented when configured."""
        train = self.dataset.train
        return add_inverse_relations(train) if self.config.inverse_relations else train

    @property
    def vocab(self):
        return self.dataset.vocab

    @contextmanager
    def _stage(self, name: str) -> Iterator[Dict[str, Any]]:
        summary: Dict[str, Any] = {}
        notify(self.bus, "stage.start", stage=name)
        yield summary
        notify(self.bus, "stage.done", stage=name, **summary)

    def _write_history(self, tag: str) -> None:
        records = self.history.get(tag)
        if records:
            write_loss_history(records, self.run.loss_history(tag))

    def write_resolved_config(self) -> None:
        lines = describe(self.config)
        self.run.resolved_config.write_text("\n".join(lines) + "\n", encoding="utf-8")

    # stages

    def pretrain(self) -> EmbeddingTable:
        with self._stage("pretrain") as summary:
            table = pretrain(
                self.graph,
                self.config.pretrain,
                seed=self.config.seed,
                valid=self.dataset.valid,
                bus=self.bus,
                progress=self.progress,
            )
            save_embedding_table(self.run.transe, table, self.vocab)
            self._write_history("transe")
            summary["dim"] = table.dim
        return table

    def mine(self) -> List[MinedRule]:
        with self._stage("mine") as summary:
            rules = mine_path_rules(
                self.graph, self.config.rules, workers=self.config.workers, progress=self.progress
            )
            write_rules(rules, self.graph, self.run.mined_rules)
            summary["rules"] = len(rules)
        return rules

    def filter(self) -> List[MinedRule]:
        with self._stage("filter") as summary:
            mined = read_rules(self.run.require("rules_mined.tsv"), self.graph)
            kept = filter_rules(mined, self.config.rules.hc_min, self.config.rules.conf_min)
            write_rules(kept, self.graph, self.run.selected_rules)
            summary["rules"] = len(kept)
        return kept

    def match(self):
        with self._stage("match") as summary:
            selected = read_rules(self.run.require("rules_selected.tsv"), self.graph)
            base = load_embedding_table(self.run.require("transe.ckpt"), self.vocab)
            transformed = match_rules(
                self.graph,
                selected,
                base,
                self.config.rules.l_max,
                workers=self.config.workers,
                progress=self.progress,
            )
            summary["neighbors"] = write_transformed(transformed, self.graph, self.run.transformed)
        return transformed

    def train_aggregator(self):
        with self._stage("train-agg") as summary:
            base = load_embedding_table(self.run.require("transe.ckpt"), self.vocab)
            transformed = read_transformed(self.run.require("transformed.tsv"), self.graph)
            neighbors = NeighborSets.from_graph(self.graph, transformed)
            cfg = self.config.aggregator
            model, updated = agg.train_aggregator(
                self.graph, neighbors, base, cfg, seed=self.config.seed, bus=self.bus, progress=self.progress
            )
            if not cfg.use_transformed:
                neighbors = neighbors.without_transformed()
            embeddings = agg.materialize(model, neighbors, updated, progress=self.progress)
            save_aggregator(self.run.aggregator, model, updated, self.vocab)
            save_neighbor_embeddings(self.run.neighbor, embeddings, self.vocab)
            self._write_history("agg")
            summary["transformed"] = neighbors.transformed_count
        return model, embeddings

    def train_decoder(self) -> DecoderParams:
        with self._stage("train-dec") as summary:
            embeddings = load_neighbor_embeddings(self.run.require("neighbor.ckpt"), self.vocab)
            cfg = self.config.decoder
            initial = init_decoder(embeddings, cfg.num_kernels, self.config.seed, cfg.l2_reg)
            params = train_decoder(
                self.graph, initial, cfg, seed=self.config.seed, bus=self.bus, progress=self.progress
            )
            save_decoder(self.run.decoder, params, self.vocab)
            self._write_history("dec")
            summary["kernels"] = params.num_kernels
        return params

    def scorer(self, name: Optional[str] = None) -> Scorer:
        name = name or self.config.evaluation.scorer
        if name == "decoder":
            return load_decoder(self.run.require("decoder.ckpt"), self.vocab)
        if name == "na":
            return load_neighbor_embeddings(self.run.require("neighbor.ckpt"), self.vocab)
        if name == "transe":
            return load_embedding_table(self.run.require("transe.ckpt"), self.vocab)
        raise ConfigError(f"unknown scorer {name!r}")

    def evaluate(self, mode: Optional[RankingMode] = None) -> RankingReport:
        cfg = self.config.evaluation
        mode = mode or cfg.mode
        with self._stage("eval") as summary:
            test = self.dataset.test
            if test is None:
                raise ConfigError("data.test is not set")
            scorer = self.scorer()
            known = KnownTriples([self.dataset.train, self.dataset.valid, test]) if mode == "filtered" else None
            report = evaluate(
                scorer,
                test,
                known,
                mode,
                entity_count=self.vocab.entity_count,
                chunk_size=cfg.chunk_size,
                progress=self.progress,
            )
            reference = None
            if cfg.reference != "none":
                published = REFERENCE_RESULTS[cfg.reference]
                ablation = self.config.aggregator.ablation
                reference = {"published": published["none"]}
                if ablation != "none":
                    reference[f"published {ablation}"] = published[ablation]
            text = format_report(report, title=f"{self.config.data.name} [{cfg.scorer}]", reference=reference)
            self.run.report_text(mode).write_text(text, encoding="utf-8")
            write_report_tsv(report, self.run.report_tsv(mode))
            if cfg.rank_dump:
                write_rank_dump(report, test, test, self.run.rank_dump(mode))
            for line in text.rstrip().splitlines():
                logger.info("[eval] %s", line)
            summary["mrr"] = round(report.mrr, 6)
        return report

    def run_stage(self, stage: str, **kwargs):
        handlers = {
            "pretrain": self.pretrain,
            "mine": self.mine,
            "filter": self.filter,
            "match": self.match,
            "train-agg": self.train_aggregator,
            "train-dec": self.train_decoder,
            "eval": self.evaluate,
        }
        if stage not in handlers:
            raise ValueError(f"unknown stage {stage!r}")
        return handlers[stage](**kwargs)

    def run_all(self) -> RankingReport:
        """Every stage in order; returns the evaluation report."""
        self.write_resolved_config()
        report = None
        for stage in STAGES:
            report = self.run_stage(stage)
        return report
