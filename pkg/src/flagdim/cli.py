"""Command-line front end.

Exit codes: 0 success, 1 validation or configuration failure, 2 a
hypothesis gate refused (atomic fibers, entropy indistinguishable from
zero, unresolvable stable line).  Refusals and failures are also written
as a machine-readable record to <out>/error.csv.
"""

import argparse
import csv
import os
import sys

import numpy as np

from . import harness, infotheory
from .errors import FlagdimError
from .harness import GATE_ERRORS, emit_outputs, load_config
from .version import __version__

COMMANDS = ("validate", "spectrum", "entropy", "dimension", "verify",
            "oracle", "bench")


def _parser():
    p = argparse.ArgumentParser(
        prog="flagdim",
        description="stationary measures of random matrix products on "
                    "flag manifolds: spectrum, fiber entropy, dimension",
        epilog="every config key can also be set via environment "
               "variables with the FLAGDIM_ prefix (e.g. FLAGDIM_SEED); "
               "command-line flags win over both")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, doc in (
            ("validate", "check the configured ensemble"),
            ("spectrum", "Lyapunov spectrum and gaps"),
            ("entropy", "fiber entropy by both estimators, with gap bounds"),
            ("dimension", "local dimension against kappa over gap"),
            ("verify", "both theorem reports end to end, gates allowed"),
            ("oracle", "exact information-theory self-checks"),
            ("bench", "orbit-step throughput")):
        s = sub.add_parser(name, help=doc)
        s.add_argument("--config", metavar="PATH", default=None)
        s.add_argument("--seed", metavar="U64", type=int, default=None)
        s.add_argument("--out", metavar="DIR", default=None)
        s.add_argument("--threads", metavar="N", type=int, default=1)
        s.add_argument("--no-figures", action="store_true")
        s.add_argument("--ensemble", metavar="NAME", default=None)
        s.add_argument("--fiber", metavar="I", default=None)
    return p


def _config(args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = int(args.seed)
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.no_figures:
        overrides["emit_figures"] = False
    if args.ensemble is not None:
        overrides["ensemble"] = args.ensemble
    if args.fiber is not None:
        overrides["fiber_index"] = (args.fiber if args.fiber == "all"
                                    else int(args.fiber))
    return load_config(args.config, overrides)


def _record_error(out_dir, code, err):
    try:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "error.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["exit_code", "error_type", "message"])
            writer.writerow([code, type(err).__name__, str(err)])
    except OSError:
        pass


def _oracle(seed):
    """The exact finite-space checks, printed one line each."""
    rng = np.random.default_rng(seed)
    lines = []
    ok = True
    xor = infotheory.xor_joint()
    i_xy = infotheory.mutual_information(xor, "X", "Y")
    i_xyz = infotheory.conditional_mutual_information(xor, "X", "Y", "Z")
    lines.append(f"xor: I(X,Y) = {i_xy:.3e}, I(X,Y|Z) = {i_xyz:.12f}")
    ok &= abs(i_xy) < 1e-12 and abs(i_xyz - np.log(2)) < 1e-12
    markov = infotheory.markov_sum_joint()
    i_13_2 = infotheory.conditional_mutual_information(markov, "X1", "X3", "X2")
    i_13 = infotheory.mutual_information(markov, "X1", "X3")
    lines.append(f"markov: I(X1,X3|X2) = {i_13_2:.3e}, I(X1,X3) = {i_13:.6f}")
    ok &= abs(i_13_2) < 1e-12 and i_13 > 0
    worst_chain = 0.0
    worst_gyp = 0.0
    for _ in range(200):
        j = infotheory.random_joint(rng, (3, 3, 3, 3))
        worst_chain = max(worst_chain, abs(
            infotheory.chain_rule_check(j, "X", "Y", "Z", given="W")))
        pair = infotheory.random_joint(rng, (4, 4), names=("X", "Y"))
        worst_gyp = max(worst_gyp, abs(infotheory.gyp_check(pair, "X", "Y")))
    lines.append(f"chain-rule residual (200 joints): {worst_chain:.3e}")
    lines.append(f"gyp residual (200 joints): {worst_gyp:.3e}")
    ok &= worst_chain < 1e-12 and worst_gyp < 1e-12
    lines.append("oracle: pass" if ok else "oracle: FAIL")
    return lines, ok


def main(argv=None):
    args = _parser().parse_args(argv)
    out_dir = args.out or "out"
    try:
        cfg = _config(args)
        out_dir = cfg.out_dir
        if args.command == "validate":
            for line in harness.ensemble_report(cfg).lines():
                print(line)
            return 0
        if args.command == "oracle":
            lines, ok = _oracle(int(cfg.seed))
            for line in lines:
                print(line)
            return 0 if ok else 1
        if args.command == "bench":
            result = harness.bench(cfg)
            print(f"{result['steps']} steps in {result['seconds']:.2f} s "
                  f"({result['steps_per_second']:.0f} steps/s)")
            return 0
        runner = {"spectrum": harness.run_spectrum,
                  "entropy": harness.run_entropy,
                  "dimension": harness.run_dimension,
                  "verify": harness.run_verify}[args.command]
        bundle = runner(cfg, threads=max(1, int(args.threads)))
        emit_outputs(bundle, cfg.out_dir)
        for line in bundle.summary_lines():
            print(line)
        refused_all = (
            (args.command == "dimension" and not bundle.dimension_reports)
            or (args.command == "entropy" and not bundle.kappas))
        if refused_all:
            first = sorted(bundle.refusals.items())
            err = FlagdimError(first[0][1] if first else "refused")
            _record_error(cfg.out_dir, 2, err)
            return 2
        return 0
    except GATE_ERRORS as err:
        print(f"refused: {err}", file=sys.stderr)
        _record_error(out_dir, 2, err)
        return 2
    except FlagdimError as err:
        print(f"error: {err}", file=sys.stderr)
        _record_error(out_dir, 1, err)
        return 1


if __name__ == "__main__":
    sys.exit(main())
