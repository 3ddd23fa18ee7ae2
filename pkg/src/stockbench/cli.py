"""Command-line client of the benchmark service.

The CLI is a thin client: each verb builds the same request model the HTTP
API accepts and dispatches it - in-process by default, or to a running
service with --server. Logs go to stderr, artifacts to the configured output
directory.

Exit codes: 0 success, 2 configuration/validation failure, 3 pipeline stage
failure, 1 anything else.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional

import httpx
from pydantic import BaseModel, ValidationError

from .config import ConfigError, load_run_config
from .panel import PanelError
from .pipeline import StageError
from .service import app as service_app
from .service.schemas import (
    BuildRequest,
    CharacterizeRequest,
    ReportRequest,
    RunRequest,
    SynthRequest,
)

logger = logging.getLogger("stockbench")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3
EXIT_OTHER = 1


def _dispatch(server: Optional[str], route: str, request: BaseModel, handler) -> dict:
    """Send a request to a remote service or run the same handler in-process."""
    if server:
        url = server.rstrip("/") + route
        response = httpx.post(url, json=request.model_dump(mode="json"), timeout=600.0)
        if response.status_code >= 400:
            detail = response.json().get("detail", response.text)
            raise StageError("remote", f"{url} -> {response.status_code}: {detail}")
        return response.json()
    return handler(request).model_dump(mode="json")


def _load_config(path: str):
    if not path:
        raise ConfigError("--config is required for this command")
    return load_run_config(path)


def _apply_overrides(cfg, args: argparse.Namespace):
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.output_dir = args.out
    return cfg


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(_load_config(args.config), args)
    if cfg.data.synth is None:
        raise ConfigError("synth command needs a data.synth section in the config")
    request = SynthRequest(
        out_dir=cfg.output_dir,
        seed=cfg.seed,
        cohort_size=cfg.data.synth.cohort_size,
        n_days=cfg.data.synth.n_days,
        regime_overrides=cfg.data.synth.regime_overrides,
    )
    result = _dispatch(args.server, "/synth", request, service_app.handle_synth)
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_build(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(_load_config(args.config), args)
    if cfg.data.csv_path is None:
        raise ConfigError("build command needs data.csv_path (run synth first)")
    request = BuildRequest(
        panel_csv=cfg.data.csv_path,
        out_dir=cfg.output_dir,
        format=cfg.data.format,
        segment_len=cfg.segment.segment_len,
        cohort_size=cfg.segment.cohort_size,
        z_threshold=cfg.segment.z_threshold,
    )
    result = _dispatch(args.server, "/build", request, service_app.handle_build)
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_characterize(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(_load_config(args.config), args)
    if cfg.data.csv_path is None:
        raise ConfigError("characterize command needs data.csv_path")
    request = CharacterizeRequest(
        panel_csv=cfg.data.csv_path,
        out_dir=cfg.output_dir,
        format=cfg.data.format,
        segment_len=cfg.segment.segment_len,
        cohort_size=cfg.segment.cohort_size,
        z_threshold=cfg.segment.z_threshold,
    )
    result = _dispatch(
        args.server, "/characterize", request, service_app.handle_characterize
    )
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(_load_config(args.config), args)
    request = RunRequest(config=cfg, jobs=args.jobs)
    result = _dispatch(args.server, "/run", request, service_app.handle_run)
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    if not args.out:
        raise ConfigError("report command needs --out DIR")
    request = ReportRequest(archives=args.archives, out_dir=args.out)
    result = _dispatch(args.server, "/report", request, service_app.handle_report)
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stockbench",
        description="Forecasting benchmark pipeline: synth, build, characterize, run, report.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="YAML run configuration file")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="override output directory")
        p.add_argument("--jobs", type=int, default=1, help="parallel predictor runs")
        p.add_argument("--server", default=None, help="dispatch to a running service URL")

    p = sub.add_parser("synth", help="generate a synthetic panel + ground truth")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build", help="segment, label and emit per-pattern datasets")
    common(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("characterize", help="per-pattern sequence-quality table")
    common(p)
    p.set_defaults(func=cmd_characterize)

    p = sub.add_parser("run", help="train, predict, backtest, score, archive")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="cross-model comparison from run archives")
    p.add_argument("archives", nargs="+", help="run archive directories")
    common(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, PanelError, ValidationError) as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except StageError as exc:
        logger.error("%s", exc)
        return EXIT_STAGE
    except Exception as exc:  # pragma: no cover - defensive
        logger.exception("unexpected failure: %s", exc)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
