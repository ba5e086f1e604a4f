"""Command-line entry point: ``artcontext <subcommand> --config cfg.yaml``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

from .config import load_config
from .errors import ArtContextError, MissingArtifactError
from .pipeline import SPACES, Pipeline
from .report import report

logger = logging.getLogger("artcontext")

SUBCOMMANDS = ("ingest", "embed", "pca", "distances", "project2d", "train-year", "eval-year", "keywords",
               "trends", "century-prompts", "experiment", "noise-probe", "report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="artcontext", description="Formal/contextual latent analysis of paintings.")
    sub = parser.add_subparsers(dest="command", metavar="subcommand")
    sub.required = True
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="pipeline YAML config")
        if name == "embed":
            p.add_argument("--space", required=True, choices=["a", "c"])
        elif name in ("pca", "distances", "project2d", "train-year", "eval-year"):
            p.add_argument("--space", default="both", choices=["a", "c", "both"])
        elif name == "report":
            p.add_argument("--no-charts", action="store_true")
    return parser


def _spaces(arg: str):
    return SPACES if arg == "both" else (arg.upper(),)


def _run(args, pipe: Pipeline) -> dict:
    cmd = args.command
    if cmd == "ingest":
        return pipe.ingest()
    if cmd == "embed":
        return pipe.embed(args.space)
    if cmd == "pca":
        return {s: pipe.pca(s) for s in _spaces(args.space)}
    if cmd == "distances":
        return pipe.distances(_spaces(args.space))
    if cmd == "project2d":
        return {s: pipe.project2d(s) for s in _spaces(args.space)}
    if cmd == "train-year":
        return {s: pipe.train_year(s) for s in _spaces(args.space)}
    if cmd == "eval-year":
        return {s: pipe.eval_year(s) for s in _spaces(args.space)}
    if cmd == "keywords":
        return pipe.keywords()
    if cmd == "trends":
        return pipe.trends()
    if cmd == "century-prompts":
        return pipe.century_prompts()
    if cmd == "experiment":
        return pipe.experiment()
    if cmd == "noise-probe":
        return pipe.noise_probe()
    if cmd == "report":
        return {"series": sorted(report(pipe.ws.root, charts=not args.no_charts))}
    raise AssertionError(cmd)


def dispatch(argv=None) -> int:
    """Run one subcommand; 0 on success, 1 on operational failure, 2 on usage error."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2

    try:
        cfg = load_config(args.config)
    except ArtContextError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    log_dir = cfg.workspace / "logs"
    log_dir.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(log_dir / f"{args.command}.log", mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger()
    root.addHandler(handler)
    root.setLevel(logging.INFO)
    try:
        logger.info("command %s config %s digest %s", args.command, args.config, cfg.digest())
        t0 = time.perf_counter()
        pipe = Pipeline(cfg)
        result = _run(args, pipe)
        logger.info("stage %s finished in %.3f s: %s", args.command, time.perf_counter() - t0,
                    json.dumps(result, default=str, sort_keys=True))
        print(json.dumps(result, default=str, sort_keys=True))
        return 0
    except MissingArtifactError as exc:
        logger.error("missing artifact: %s", exc.path)
        print(f"error: missing artifact {exc.path}; run the producing stage first", file=sys.stderr)
        return 1
    except (ArtContextError, OSError) as exc:
        logger.exception("stage %s failed", args.command)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any crash is an operational failure
        logger.exception("stage %s crashed", args.command)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    finally:
        root.removeHandler(handler)
        handler.close()


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
