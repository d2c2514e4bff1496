"""Command-line interface.

Subcommands: theory | simulate | analyze | oracle | cavity-check | pipeline.
Every subcommand accepts --config FILE (YAML); explicit flags win over the
file.  Exit codes: 0 ok, 1 check failure, 2 config error, 3 IO error.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .errors import ConfigError
from .harness import EXIT_CONFIG, run


def _common_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", help="YAML config file")
    sp.add_argument("--prior", help="prior name: rademacher | bernoulli(p)")
    sp.add_argument("--lambda", dest="lam", type=float, help="signal-to-noise ratio")
    sp.add_argument("--h", type=float, help="external channel strength")
    sp.add_argument("--t", type=float, help="cavity interpolation time")
    sp.add_argument("--N", type=int, nargs="+", help="system size(s)")
    sp.add_argument("--seed", type=int, help="global seed")
    sp.add_argument("--nodes", type=int, help="Gauss-Hermite node count")
    sp.add_argument("--tol", type=float, help="fixed-point tolerance")
    sp.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nishimc", description=__doc__)
    sub = ap.add_subparsers(dest="mode", required=True)

    sp = sub.add_parser("theory", help="solve the RS fixed point and covariance")
    _common_flags(sp)
    sp.add_argument("--n-check", type=int, dest="n_check",
                    help="cross-check covariance with the n-replica cavity system")

    sp = sub.add_parser("simulate", help="run MCMC over disorder instances")
    _common_flags(sp)
    sp.add_argument("--replicas", type=int)
    sp.add_argument("--instances", type=int)
    sp.add_argument("--sweeps-burnin", type=int, dest="burnin")
    sp.add_argument("--spacing", type=int)
    sp.add_argument("--samples", type=int)
    sp.add_argument("--init", choices=("planted", "prior"))
    sp.add_argument("--workers", type=int)

    sp = sub.add_parser("analyze", help="turn sample CSVs into report.json")
    _common_flags(sp)
    sp.add_argument("--in", dest="analyze_in", help="simulation output directory")
    sp.add_argument("--theory", dest="theory_path", help="theory.json path")
    sp.add_argument("--replicas", type=int)
    sp.add_argument("--plots", action="store_true", default=None)

    sp = sub.add_parser("oracle", help="exact small-N enumeration over instances")
    _common_flags(sp)
    sp.add_argument("--instances", type=int)

    sp = sub.add_parser("cavity-check", help="finite-difference check of the derivative rule")
    _common_flags(sp)
    sp.add_argument("--instances", type=int)
    sp.add_argument("--t0", type=float)
    sp.add_argument("--eps", type=float)
    sp.add_argument("--f", choices=("q12", "q1star"))
    sp.add_argument("--q-cav", type=float, dest="q_cav")

    sp = sub.add_parser("pipeline", help="theory -> simulate -> analyze -> summary")
    _common_flags(sp)
    sp.add_argument("--replicas", type=int)
    sp.add_argument("--instances", type=int)
    sp.add_argument("--sweeps-burnin", type=int, dest="burnin")
    sp.add_argument("--spacing", type=int)
    sp.add_argument("--samples", type=int)
    sp.add_argument("--init", choices=("planted", "prior"))
    sp.add_argument("--workers", type=int)
    sp.add_argument("--plots", action="store_true", default=None)
    return ap


_CHAIN_FLAGS = {"burnin", "spacing", "samples", "init"}
_CAVITY_FLAGS = {"t0", "eps", "f", "q_cav"}


def main(argv=None) -> int:
    args = vars(build_parser().parse_args(argv))
    config_path = args.pop("config", None)
    overrides: dict = {"mode": args.pop("mode")}
    chain = {k: v for k, v in args.items() if k in _CHAIN_FLAGS and v is not None}
    cavity = {k: v for k, v in args.items() if k in _CAVITY_FLAGS and v is not None}
    for k, v in args.items():
        if k in _CHAIN_FLAGS or k in _CAVITY_FLAGS or v is None:
            continue
        overrides[k] = v
    if chain:
        overrides["chain"] = chain
    if cavity:
        overrides["cavity"] = cavity
    if isinstance(overrides.get("N"), list) and len(overrides["N"]) == 1:
        overrides["N"] = overrides["N"][0]
    try:
        cfg = load_config(config_path, overrides)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
