"""Command-line entry point: ``swarmlink {run,sweep,baseline,validate}``.

Settings resolve as command-line flag, then config file, then built-in
default.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from .engine import SpawnError, run
from .harness import fault_matrix, nominal_matrix, optimal_baseline, run_sweep
from .model import ConfigError, ExperimentConfig

# flag dest -> ExperimentConfig field
OVERRIDES = {
    "n_robots": "n_robots",
    "links": "links_per_target",
    "failure_prob": "failure_probability",
    "max_steps": "max_steps",
    "sample_every": "sample_every",
    "n_seeds": "n_seeds",
    "out": "output_dir",
}


class UsageError(Exception):
    """Bad invocation: reported with the usage line and exit code 2."""


def _common(p: argparse.ArgumentParser, config_required: bool = False) -> None:
    p.add_argument("--config", metavar="PATH", required=config_required, help="JSON experiment config")
    p.add_argument("--n-robots", type=int, help="swarm size including the root")
    p.add_argument("--links", type=int, help="links required per target")
    p.add_argument("--failure-prob", type=float, help="per-robot failure probability")
    p.add_argument("--max-steps", type=int, help="step budget per run")
    p.add_argument("--sample-every", type=int, help="metric sampling period in steps")
    p.add_argument("--out", metavar="DIR", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swarmlink", description="Connectivity-maintenance swarm simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one seed and write its metrics")
    _common(p)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("sweep", help="run an experiment matrix over seeds 0..n_seeds-1")
    _common(p)
    p.add_argument("--matrix", choices=("nominal", "faults", "single"), default="nominal")
    p.add_argument("--n-seeds", type=int, help="seeds per configuration")
    p.add_argument("--workers", type=int, help="parallel processes (capped by SWARMLINK_THREADS)")

    p = sub.add_parser("baseline", help="print the perfect-world step count")
    _common(p)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("validate", help="check a config file and exit")
    _common(p, config_required=True)
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Built-in defaults, overlaid by the config file, overlaid by flags."""
    cfg = ExperimentConfig()
    if args.config is not None:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        cfg = ExperimentConfig.load(path)
    changes = {}
    for dest, name in OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None:
            changes[name] = value
    return cfg.replace(**changes).validate()


def _cmd_run(args: argparse.Namespace, cfg: ExperimentConfig) -> int:
    result = run(cfg, args.seed)
    csv_path, json_path = result.write(cfg.output_dir, f"{cfg.name}_seed{args.seed}")
    rep = result.report
    status = f"success at step {rep.completion_step}" if rep.success else f"failure after {rep.steps_run} steps"
    print(f"{cfg.name} seed {args.seed}: {status}")
    print(f"wrote {csv_path} and {json_path}")
    return 0


def _cmd_sweep(args: argparse.Namespace, cfg: ExperimentConfig) -> int:
    if args.matrix == "nominal":
        matrix = nominal_matrix(None, cfg)
    elif args.matrix == "faults":
        matrix = fault_matrix(cfg.n_robots, cfg.links_per_target, n_seeds=None, base=cfg)
    else:
        matrix = [cfg]
    summary = run_sweep(matrix, cfg.output_dir, args.workers)
    for row in summary.rows:
        r = row.row()
        median = r["median_steps"] if r["median_steps"] != "" else "-"
        print(f"{r['name']}: {r['successes']}/{r['n_seeds']} ok, median {median}, baseline {r['baseline_steps']}")
    print(f"wrote {Path(cfg.output_dir) / 'summary.csv'}")
    return 0


def _cmd_baseline(args: argparse.Namespace, cfg: ExperimentConfig) -> int:
    print(optimal_baseline(cfg, args.seed))
    return 0


def _cmd_validate(args: argparse.Namespace, cfg: ExperimentConfig) -> int:
    print(f"{args.config}: ok")
    return 0


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "baseline": _cmd_baseline, "validate": _cmd_validate}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    # argparse exits with code 2 on unknown flags and missing arguments
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"swarmlink: error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, SpawnError, ValueError, OSError) as exc:
        print(f"swarmlink: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
