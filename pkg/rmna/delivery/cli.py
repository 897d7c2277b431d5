import argparse
import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from pydantic import ValidationError

from rmna.application.pipeline import STAGES, Pipeline
from rmna.config import PipelineConfig, describe, load_config, progress_from_env
from rmna.domain.errors import ConfigError, RMNAError
from rmna.infra.synthetic import PlantedSpec, generate_planted, write_planted
from rmna.infra.triples_tsv import load_dataset

logger = logging.getLogger(__name__)


def _add_config_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", "-c", type=Path, help="key = value config file")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config key (repeatable), e.g. --set aggregator.epochs=10",
    )
    p.add_argument("--work-dir", type=Path, help="shortcut for --set work_dir=...")


def create_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rmna",
        description="Rule mining, neighbor aggregation, ConvKB decoding and link-prediction evaluation.",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    for stage in STAGES:
        if stage == "eval":
            continue
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        _add_config_options(p)

    p = sub.add_parser("eval", help="rank the test split and write the report")
    _add_config_options(p)
    p.add_argument("--mode", choices=("raw", "filtered", "both"), help="ranking protocol (default from config)")
    p.add_argument("--scorer", choices=("decoder", "na", "transe"), help="energy used for ranking")

    p = sub.add_parser("pipeline", help="run every stage in order")
    _add_config_options(p)

    p = sub.add_parser("stats", help="entity, relation and triple counts of a dataset")
    _add_config_options(p)

    p = sub.add_parser("synth", help="write a planted-rule dataset")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--entities", type=int, default=300)
    p.add_argument("--rate", type=float, default=0.9, help="share of body pairs that get the head edge")
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--distractors", type=int, default=1)
    p.add_argument("--holdout", type=float, default=0.1, help="share of planted edges moved to valid/test")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _config(args: argparse.Namespace) -> PipelineConfig:
    overrides: List[str] = list(args.overrides)
    if args.work_dir is not None:
        overrides.append(f"work_dir={args.work_dir}")
    if getattr(args, "scorer", None):
        overrides.append(f"evaluation.scorer={args.scorer}")
    config = load_config(args.config, overrides)
    logger.info("[cli] resolved config (seed=%d):", config.seed)
    for line in describe(config):
        logger.info("[cli]   %s", line)
    return config


def _cmd_stage(args: argparse.Namespace) -> int:
    pipeline = Pipeline(_config(args), progress=progress_from_env())
    pipeline.write_resolved_config()
    pipeline.run_stage(args.command)
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    pipeline = Pipeline(_config(args), progress=progress_from_env())
    mode = args.mode or pipeline.config.evaluation.mode
    modes = ("raw", "filtered") if mode == "both" else (mode,)
    for m in modes:
        report = pipeline.evaluate(m)
        print(f"{m}\tmrr={report.mrr:.4f}\thits@1={report.hits_at[1]:.4f}\t"
              f"hits@3={report.hits_at[3]:.4f}\thits@10={report.hits_at[10]:.4f}")
    return 0


def _cmd_pipeline(args: argparse.Namespace) -> int:
    pipeline = Pipeline(_config(args), progress=progress_from_env())
    report = pipeline.run_all()
    print(f"{report.mode}\tmrr={report.mrr:.4f}\thits@10={report.hits_at[10]:.4f}")
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    config = _config(args)
    data = config.data
    if data.train is None:
        raise ConfigError("data.train is not set")
    ds = load_dataset(data.train, data.valid, data.test)
    print(f"dataset\t{data.name}")
    print(f"entities\t{ds.vocab.entity_count}")
    print(f"relations\t{ds.vocab.relation_count}")
    for split, kg in zip(("train", "valid", "test"), ds):
        print(f"{split}\t{len(kg) if kg is not None else '-'}")
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    try:
        spec = PlantedSpec(
            entities=args.entities,
            rate=args.rate,
            noise=args.noise,
            distractors=args.distractors,
            holdout=args.holdout,
            seed=args.seed,
        )
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(f"invalid --{first['loc'][0]}: {first['msg']}") from e
    paths = write_planted(generate_planted(spec), args.out)
    for split, p in paths.items():
        print(f"{split}\t{p}")
    return 0


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    **{stage: _cmd_stage for stage in STAGES if stage != "eval"},
    "eval": _cmd_eval,
    "pipeline": _cmd_pipeline,
    "stats": _cmd_stats,
    "synth": _cmd_synth,
}


def dispatch(args: argparse.Namespace) -> int:
    """Run one parsed command; 0 on success, 2 on a known error, 1 on anything else."""
    try:
        return COMMANDS[args.command](args)
    except RMNAError as e:
        logger.error("[cli] %s failed: %s", args.command, e)
        return 2
    except Exception:
        logger.exception("[cli] %s failed unexpectedly", args.command)
        return 1


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    return create_parser().parse_args(argv)
