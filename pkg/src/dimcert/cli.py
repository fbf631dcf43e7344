"""Command-line interface.

Subcommands: ``basis``, ``bound``, ``curve``, ``certify``, ``attack``,
``classical`` and ``simulate``.  Results go to stdout as JSON (CSV for
``curve``).  Exit codes: 0 ok, 2 usage, 3 infeasible ``t``, 4 data error,
5 solver failure.

Any long option may also come from an INI file given with ``--config``::

    [dimcert]
    d = 4
    basis = cache/d4.bin
    threads = 4

Keys are option names without the leading dashes (``-`` or ``_`` both
accepted).  Options given on the command line override the file.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .certifier import (
    DEFAULT_LIST,
    DEFAULT_POLICY,
    DEFAULT_TOL,
    MONOMIAL_LISTS,
    POLICIES,
    CertificationError,
    InfeasibleError,
    MomentBasis,
    build_moment_basis,
    certify,
)
from .ingest import CountsError, estimate_T, read_counts, write_counts
from .protocol_sim import ProtocolConfig, simulate_rounds
from .scenario import GenerationSet, ScenarioError, default_generation_set, make_qrac_scenario
from .strategy import classical_optimum, ideal_qrac_strategy, seesaw_attack

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_DATA, EXIT_SOLVER = 0, 2, 3, 4, 5

log = logging.getLogger("dimcert")


class UsageError(Exception):
    pass


def _xprime(s, args):
    if getattr(args, "xprime", None):
        try:
            pairs = []
            for item in args.xprime.split(";"):
                z, y = item.split(",")
                pairs.append((int(z), int(y)))
        except ValueError:
            raise UsageError(f"cannot parse --xprime {args.xprime!r}; expected 'z,y;z,y;...'") from None
        xp = GenerationSet(pairs)
        xp.flat(s)
        if args.K is not None and args.K != len(xp):
            raise UsageError("--K disagrees with the length of --xprime")
        return xp
    if args.K is None:
        raise UsageError("--K is required")
    return default_generation_set(s, args.K)


def _scenario(args):
    return make_qrac_scenario(args.d)


def _basis(s, args):
    if args.basis and os.path.exists(args.basis):
        b = MomentBasis.load(args.basis)
        b.check_scenario(s)
        return b
    b = build_moment_basis(s, seed=args.basis_seed, policy=args.policy, monomials=args.monomials)
    if args.basis:
        b.save(args.basis)
    return b


def strategy_to_json(st) -> dict:
    def mat(a):
        return [[[float(v.real), float(v.imag)] for v in row] for row in a]
    return {"dim": st.dim, "states": [mat(r) for r in st.states],
            "measurements": [[mat(e) for e in povm] for povm in st.measurements]}


def _emit(obj, args):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if getattr(args, "out", None):
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)


def _bound_json(res):
    d = res.to_dict()
    d["H_bits"] = float(f"{res.H_bits:.6f}")
    d["margins"] = {"solver_tol": res.margin}
    d["schema"] = "dimcert/bound/v1"
    return d


# ---------------------------------------------------------------------------
# commands


def cmd_basis(args):
    s = _scenario(args)
    b = build_moment_basis(s, seed=args.seed, policy=args.policy, monomials=args.monomials,
                           stall=args.stall, svd_tol=args.svd_tol)
    b.save(args.out)
    print(json.dumps({"path": args.out, "affine_dim": b.m, "samples": b.meta["samples"],
                      "monomials": b.n, "schema": "dimcert/basis/v1"}, sort_keys=True))
    return EXIT_OK


def cmd_bound(args):
    s = _scenario(args)
    if not 0.0 <= args.t <= 1.0:
        raise UsageError("--t must lie in [0, 1]")
    xp = _xprime(s, args)
    b = _basis(s, args)
    try:
        res = certify(s, b, args.t, xprime=xp, mode=args.mode, tol=args.tol, threads=args.threads,
                      geq=args.t_geq)
    except InfeasibleError as e:
        _emit({"schema": "dimcert/bound/v1", "status": "infeasible", "t": args.t, "K": len(xp),
               "mode": args.mode, "message": str(e)}, args)
        return EXIT_INFEASIBLE
    _emit(_bound_json(res), args)
    return EXIT_OK


def cmd_curve(args):
    s = _scenario(args)
    ks = [int(k) for k in args.K_list.split(",") if k.strip()] if args.K_list else []
    if not ks:
        raise UsageError("--K-list must name at least one K")
    if args.steps < 1:
        raise UsageError("--steps must be positive")
    b = _basis(s, args)
    grid = np.linspace(args.t_from, args.t_to, args.steps)
    lines = ["t,K,H_bits,p_star,status"]
    for K in ks:
        for t in grid:
            try:
                r = certify(s, b, float(t), K=K, mode=args.mode, tol=args.tol, threads=args.threads,
                            strict=False)
                lines.append(f"{t:.6f},{K},{r.H_bits:.6f},{r.p_star:.9f},{r.status}")
            except InfeasibleError:
                lines.append(f"{t:.6f},{K},,,infeasible")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_certify(args):
    try:
        table = read_counts(args.counts, args.d)
    except OSError as e:
        raise CountsError(str(e)) from None
    s = table.scenario
    args.d = table.dim
    t_hat, se = estimate_T(table, s)
    t_use = t_hat - args.sigma * se
    xp = _xprime(s, args)
    b = _basis(s, args)
    try:
        res = certify(s, b, min(max(t_use, 0.0), 1.0), xprime=xp, mode=args.mode, tol=args.tol,
                      threads=args.threads)
    except InfeasibleError as e:
        _emit({"schema": "dimcert/certify/v1", "status": "infeasible", "t_hat": t_hat, "std_err": se,
               "message": str(e)}, args)
        return EXIT_INFEASIBLE
    _emit({"schema": "dimcert/certify/v1", "status": "ok", "t_hat": t_hat, "std_err": se,
           "t_used": t_use, "bound": _bound_json(res)}, args)
    return EXIT_OK


def cmd_attack(args):
    s = _scenario(args)
    xp = _xprime(s, args)
    r = seesaw_attack(s, xp, args.mode, args.t, seed=args.seed, restarts=args.restarts)
    out = {"schema": "dimcert/attack/v1", "t_target": args.t, "T": r.T, "p_guess": r.p_guess,
           "success": r.success, "K": len(xp), "mode": args.mode}
    if args.strategy_out:
        with open(args.strategy_out, "w") as fh:
            json.dump(strategy_to_json(r.strategy), fh)
    _emit(out, args)
    return EXIT_OK if r.success else EXIT_SOLVER


def cmd_classical(args):
    s = _scenario(args)
    value, cs = classical_optimum(s)
    _emit({"schema": "dimcert/classical/v1", "d": args.d, "value": value,
           "encoding": list(cs.encoding), "decodings": [list(x) for x in cs.decodings]}, args)
    return EXIT_OK


def cmd_simulate(args):
    s = _scenario(args)
    xp = _xprime(s, args)
    cfg = ProtocolConfig(args.rounds, xp, args.mean_group, args.v, args.seed)
    table, rounds = simulate_rounds(cfg, ideal_qrac_strategy(args.d), s)
    if args.counts_out:
        write_counts(args.counts_out, table)
    if args.log_out:
        rounds.write_csv(args.log_out)
    t_hat, se = estimate_T(table, s)
    print(json.dumps({"schema": "dimcert/simulate/v1", "rounds": args.rounds,
                      "estimation_rounds": int(table.counts.sum()), "t_hat": t_hat, "std_err": se,
                      "counts": args.counts_out}, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _common(p, basis=True, kx=True):
    p.add_argument("--d", type=int, default=4, help="dimension bound (default 4)")
    if kx:
        p.add_argument("--K", type=int, default=None, help="size of the generation set X'")
        p.add_argument("--xprime", default=None, help="explicit X' as 'z,y;z,y;...'")
        p.add_argument("--mode", choices=("binarized", "full"), default="binarized")
    if basis:
        p.add_argument("--basis", default=None, help="basis file; built and written when missing")
        p.add_argument("--basis-seed", type=int, default=0)
        p.add_argument("--monomials", choices=MONOMIAL_LISTS, default=DEFAULT_LIST)
        p.add_argument("--policy", choices=POLICIES, default=DEFAULT_POLICY)
        p.add_argument("--tol", type=float, default=DEFAULT_TOL)
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dimcert", description=__doc__.split("\n\n")[0], allow_abbrev=False)
    ap.add_argument("--version", action="version", version=f"dimcert {__version__}")
    ap.add_argument("--config", default=None, help="INI file with a [dimcert] section")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("basis", help="build and save a moment basis")
    _common(p, basis=False, kx=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--monomials", choices=MONOMIAL_LISTS, default=DEFAULT_LIST)
    p.add_argument("--policy", choices=POLICIES, default=DEFAULT_POLICY)
    p.add_argument("--stall", type=int, default=64)
    p.add_argument("--svd-tol", type=float, default=1e-7)
    p.set_defaults(func=cmd_basis)

    p = sub.add_parser("bound", help="certified min-entropy at one value of T")
    _common(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--t-geq", action="store_true", help="constrain T >= t instead of T = t")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("curve", help="min-entropy on a grid of T values")
    _common(p, kx=False)
    p.add_argument("--mode", choices=("binarized", "full"), default="binarized")
    p.add_argument("--t-from", type=float, default=0.70)
    p.add_argument("--t-to", type=float, default=0.75)
    p.add_argument("--steps", type=int, default=6)
    p.add_argument("--K-list", default="1,2,3,4")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("certify", help="certify a counts file")
    _common(p)
    p.set_defaults(d=None)
    p.add_argument("--counts", required=True)
    p.add_argument("--sigma", type=float, default=0.0, help="certify at t_hat - sigma * std_err")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("attack", help="see-saw adversary at a target T")
    _common(p, basis=False)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=4)
    p.add_argument("--strategy-out", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("classical", help="exact classical optimum of T")
    _common(p, basis=False, kx=False)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_classical)

    p = sub.add_parser("simulate", help="simulate protocol rounds and write counts")
    _common(p, basis=False, kx=False)
    p.add_argument("--K", type=int, default=1)
    p.add_argument("--xprime", default=None)
    p.add_argument("--v", type=float, default=1.0, help="visibility")
    p.add_argument("--rounds", type=int, default=100_000)
    p.add_argument("--mean-group", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--counts-out", default=None)
    p.add_argument("--log-out", default=None)
    p.set_defaults(func=cmd_simulate)
    return ap


def _apply_config(ap, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    cp = configparser.ConfigParser()
    if not cp.read(known.config):
        raise UsageError(f"cannot read config file {known.config!r}")
    if not cp.has_section("dimcert"):
        raise UsageError("config file needs a [dimcert] section")
    values = {k.replace("-", "_"): v for k, v in cp.items("dimcert")}
    for action in ap._subparsers._group_actions[0].choices.values():
        defaults = {}
        for act in action._actions:
            # configparser lowercases keys
            if act.dest.lower() in values:
                raw = values[act.dest.lower()]
                if act.nargs == 0:
                    defaults[act.dest] = raw.strip().lower() in ("1", "true", "yes", "on")
                else:
                    defaults[act.dest] = act.type(raw) if act.type else raw
                act.required = False
        action.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    ap = build_parser()
    try:
        _apply_config(ap, argv)
    except (UsageError, ValueError) as e:
        print(f"dimcert: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "d", None) is not None and args.d < 2:
            raise UsageError(f"invalid dimension --d {args.d}")
        return args.func(args)
    except (UsageError, ScenarioError) as e:
        print(f"dimcert: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except CountsError as e:
        print(f"dimcert: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except CertificationError as e:
        print(f"dimcert: solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as e:
        print(f"dimcert: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
