"""Command line: ``starris simulate | sweep | overhead``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from ..scene import ConfigurationError
from .config import PRESETS, get_preset, load_config
from .report import emit, emit_sweep
from .simulate import SWEEPABLE, monte_carlo, overhead_account, run_scenario, sweep

log = logging.getLogger("starris")


def _config(args):
    cfg = load_config(args.config) if args.config else get_preset(args.preset)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    if getattr(args, "periods", None) is not None:
        cfg = cfg.with_overrides(periods=args.periods)
    return cfg.validate()


def _values(text: str) -> list:
    out = []
    for v in text.split(","):
        v = v.strip()
        out.append(int(v) if v.lstrip("-").isdigit() else float(v))
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="starris", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="TOML scenario file")
        sp.add_argument("--preset", default="default", choices=sorted(PRESETS))
        sp.add_argument("--seed", type=int)
        sp.add_argument("--periods", type=int)

    s = sub.add_parser("simulate", help="run one scenario (or several trials) and write CSV")
    common(s)
    s.add_argument("--out", required=True)
    s.add_argument("--trials", type=int, default=1)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--figures", action="store_true", help="also render PNG figures")
    s.add_argument("--dump-intensity", action="store_true", help="write intensity_k.txt snapshots")

    w = sub.add_parser("sweep", help="Monte-Carlo sweep over one parameter")
    common(w)
    w.add_argument("--param", required=True, choices=sorted(SWEEPABLE))
    w.add_argument("--values", required=True, type=_values)
    w.add_argument("--trials", type=int, default=10)
    w.add_argument("--workers", type=int, default=1)
    w.add_argument("--out", default="sweep_out")
    w.add_argument("--figures", action="store_true")

    o = sub.add_parser("overhead", help="training sequences per period")
    common(o)
    o.add_argument("--tracked", action="store_true", help="reduced scan around predicted directions")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.command == "simulate":
            if args.trials == 1:
                dump = args.out if args.dump_intensity else None
                report = run_scenario(cfg, dump_dir=dump)
            else:
                report = monte_carlo(cfg, args.trials, args.workers)
            paths = emit(report, args.out, figures=args.figures)
            print(json.dumps({k: str(v) for k, v in paths.items()}, indent=2))
        elif args.command == "sweep":
            reports = sweep(cfg, args.param, args.values, args.trials, args.workers)
            paths = emit_sweep(args.param, reports, args.out, figures=args.figures)
            print(json.dumps({k: str(v) for k, v in paths.items()}, indent=2))
        elif args.command == "overhead":
            print(json.dumps(overhead_account(cfg, tracked=args.tracked), indent=2))
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
