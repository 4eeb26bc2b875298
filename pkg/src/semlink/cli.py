"""Command-line entry point: ``simulate run | sweep | corpus``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ScenarioConfig
from .corpus import CorpusSpec, generate_corpus, write_corpus
from .errors import ConfigError, OracleScriptGap
from .harness import run_scenario, summary_path, sweep
from .metrics import bandwidth_summary, success_rate

EXIT_OK, EXIT_CONFIG, EXIT_ORACLE = 0, 2, 3


def _run(args) -> int:
    cfg = ScenarioConfig.load(args.config)
    result = run_scenario(cfg)
    bw = bandwidth_summary(result.records)
    covs = [o.coverage for o in result.outcomes if o.coverage is not None]
    report = {
        "scenario": cfg.name,
        "outcomes": len(result.outcomes),
        "success_rate": success_rate(result.outcomes),
        "mean_coverage": sum(covs) / len(covs) if covs else None,
        "transmissions": len(result.ledger),
        "probes": sum(e.kind == "probe" for e in result.ledger),
        "mean_bytes": bw["mean_bytes"],
        "mean_symbols": bw["mean_symbols"],
        "chains": {c: {"mean_bytes": s["bytes"]["mean"], "mean_symbols": s["symbols"]["mean"],
                       "delivery_rate": s["delivery_rate"]} for c, s in bw["chains"].items()},
    }
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def _sweep(args) -> int:
    cfg = ScenarioConfig.load(args.config)
    sweep(cfg, args.out)
    print(f"wrote {args.out} and {summary_path(args.out)}")
    return EXIT_OK


def _corpus(args) -> int:
    try:
        doc = json.loads(Path(args.spec).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read corpus spec {args.spec}: {exc}") from None
    spec = CorpusSpec.from_dict(doc)
    write_corpus(generate_corpus(spec), args.out, spec)
    print(f"wrote {spec.count} {spec.kind} images to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simulate", description="Intention-aware uplink simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run one scenario and print a JSON summary")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_run)
    p = sub.add_parser("sweep", help="run the SNR x seed x n cross-product and write CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_sweep)
    p = sub.add_parser("corpus", help="render a synthetic corpus to PNG + annotations.jsonl")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_corpus)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OracleScriptGap as exc:
        print(f"oracle script gap: {exc}", file=sys.stderr)
        return EXIT_ORACLE


if __name__ == "__main__":
    sys.exit(main())
