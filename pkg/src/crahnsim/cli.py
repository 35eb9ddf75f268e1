"""Command-line front end: ``run``, ``sweep`` and ``train-detector``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import experiments
from .errors import ConfigInvalid, CrahnError

log = logging.getLogger("crahnsim")


def _common(p: argparse.ArgumentParser, out_default: str):
    p.add_argument("--config", metavar="PATH", help="JSON scenario file (defaults apply to absent fields)")
    p.add_argument("--seed", metavar="N", type=int, help="override master_seed")
    p.add_argument("--out-dir", metavar="PATH", default=out_default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crahnsim", description="Disaster-response CRAHN simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one full simulation run")
    _common(p, "out/run")

    p = sub.add_parser("sweep", help="independent seeded runs over a parameter's values")
    _common(p, "out/sweep")
    p.add_argument("--param", default="detection.n_inputs", help="dotted config field, e.g. detection.n_inputs")
    p.add_argument("--values", default="1,2,3,4,5", help="comma-separated values")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    p = sub.add_parser("train-detector", help="train the disaster detector offline")
    _common(p, "out/detector")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            result = experiments.run(args.config, args.seed, args.out_dir)
            for key in ("false_negative_rate", "mean_switch_time_s", "mean_discovery_latency_s",
                        "discovery_success_rate"):
                if key in result.report:
                    print(f"{key}={result.report[key]}")
            print(f"wrote {args.out_dir}")
        elif args.command == "sweep":
            if args.jobs < 1:
                raise ConfigInvalid("sweep.jobs", "must be >= 1")
            base = experiments.resolve_config(args.config, args.seed)
            spec = experiments.SweepSpec(args.param, experiments.parse_values(args.values), args.repeats, base)
            _, summary = experiments.sweep(spec, args.out_dir, args.jobs)
            print(f"{len(spec.values) * spec.repeats} runs, {len(summary.rows)} summary rows -> {args.out_dir}")
        else:
            cfg = experiments.resolve_config(args.config, args.seed)
            stats = experiments.train_detector_files(cfg, cfg.master_seed, args.out_dir)
            print(f"epochs={stats['epochs_used']} mse={stats['final_mse']:.6f} "
                  f"heldout_accuracy={stats['accuracy']:.4f} heldout_fnr={stats['false_negative_rate']:.4f}")
    except CrahnError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
