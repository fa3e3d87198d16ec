"""Command-line front end.

Exit codes: 0 success, 2 a meaningful negative result (infeasible / invalid /
lossy), 1 usage or I/O error.  Every run writes a manifest that ``replay`` can
re-execute and check byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .combiner import CombiningModule, Structure, build_structure, kron_lift
from .decentral import accounting, build_topology, run_training
from .errors import (IndeterminateError, InfeasibleError, RankError, SingularityError,
                     WaxError)
from .matrixio import format_matrix, load_dims_config, read_matrix
from .model import Channel, make_dims, random_channel
from .solver import mutual_info, solve_equivalent, solve_generic, validate_A
from .tradeoff import sweep, write_csv

EXIT_OK, EXIT_USAGE, EXIT_NEGATIVE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def default_seed() -> int:
    v = os.environ.get("WAXKIT_SEED")
    if v is None:
        return 0
    try:
        return int(v)
    except ValueError:
        raise UsageError(f"WAXKIT_SEED must be an integer, got {v!r}") from None


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _complex_list(text):
    try:
        vals = [complex(t.replace(" ", "")) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    return [int(v.real) if v.imag == 0 and v.real == int(v.real) else v for v in vals]


# --------------------------------------------------------------------------- run context

class Run:
    """Collects outputs of one subcommand for the manifest."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.outputs = {}
        self.seeds = []

    def emit(self, text: str, path=None):
        data = text.encode()
        if path:
            Path(path).write_bytes(data)
            self.outputs[str(path)] = hashlib.sha256(data).hexdigest()
        else:
            sys.stdout.write(text)
            sys.stdout.flush()
            self.outputs["-"] = hashlib.sha256(data).hexdigest()

    def manifest(self, code: int) -> dict:
        params = {k: v for k, v in vars(self.args).items() if k not in ("func", "manifest")}
        return {"subcommand": self.args.command, "argv": self.argv, "params": params,
                "seeds": self.seeds, "version": __version__, "exit_code": code,
                "outputs": self.outputs}

    def write_manifest(self, code: int):
        text = json.dumps(self.manifest(code), indent=2, sort_keys=True, default=str) + "\n"
        target = self.args.manifest
        if target is None:
            out = getattr(self.args, "out", None)
            target = f"{out}.manifest.json" if out else None
        if target:
            Path(target).write_text(text)
        else:
            sys.stderr.write(text)


def _report(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _module(args, dims) -> CombiningModule:
    if getattr(args, "a", None):
        A = read_matrix(args.a)
        if np.all(A.imag == 0) and np.all(A.real == np.round(A.real)):
            A = A.real.astype(np.int64)
        if A.shape != (dims.M_P, dims.T_P):
            raise UsageError(f"--a: module is {A.shape}, expected ({dims.M_P}, {dims.T_P})")
        return CombiningModule(A, Structure.CUSTOM, (), dims.L)
    return build_structure(dims, args.structure, args.alphas)


def _dims(args, strict=True):
    """Dims from --config or from --mp/--tp/--k/--l (or the shape of --h)."""
    N0, seed = args.n0, args.seed
    if getattr(args, "config", None):
        dims, N0, cfg_seed = load_dims_config(args.config)
        if args.seed_given is False:
            seed = cfg_seed
    else:
        missing = [f for f in ("mp", "tp", "k", "l") if getattr(args, f, None) is None]
        if getattr(args, "h", None) and args.l is not None and args.tp is not None:
            H = read_matrix(args.h)
            dims = make_dims(H.shape[0], H.shape[1], args.l, args.tp, strict=False)
            missing = []
        elif missing:
            raise UsageError("missing " + ", ".join("--" + f for f in missing) + " (or --config)")
        else:
            dims = make_dims(args.mp * args.l, args.k, args.l, args.tp, strict=False)
    if strict and not dims.regime_ok:
        make_dims(dims.M, dims.K, dims.L, dims.T_P, strict=True)
    return dims, N0, seed


def _channel(args, dims, N0, seed) -> Channel:
    if getattr(args, "h", None):
        H = read_matrix(args.h)
        if H.shape != (dims.M, dims.K):
            raise UsageError(f"--h: matrix is {H.shape}, expected ({dims.M}, {dims.K})")
        return Channel(H, dims.L, N0=N0, seed=None)
    return random_channel(dims, N0=N0, seed=seed)


# --------------------------------------------------------------------------- subcommands

def cmd_construct(run: Run) -> int:
    a = run.args
    dims = make_dims(a.mp * a.lift, None, a.lift, a.tp, strict=False)
    cm = build_structure(dims, a.structure, a.alphas)
    run.emit(format_matrix(kron_lift(cm)), a.out)
    return EXIT_OK


def cmd_tradeoff(run: Run) -> int:
    a = run.args
    seeds = list(range(a.seed, a.seed + a.seeds))
    run.seeds = seeds if a.confirm else []
    rows = sweep(a.m, a.k, a.structure, a.l, confirm=a.confirm, seeds=seeds)
    buf = io.StringIO()
    write_csv(rows, buf)
    run.emit(buf.getvalue(), a.out)
    return EXIT_OK


def _decompose(run: Run, best_effort: bool):
    a = run.args
    dims, N0, seed = _dims(a)
    run.seeds = [seed]
    cm = _module(a, dims)
    H = _channel(a, dims, N0, seed)
    rep = {"feasible": False, "residual": None, "block_ranks": [],
           "mi_raw": mutual_info(H, N0), "mi_processed": None, "seed": seed}
    try:
        if a.method == "generic":
            f = solve_generic(kron_lift(cm), H, seed=seed)
        else:
            f = solve_equivalent(cm, H, seed=seed, best_effort=best_effort)
    except (InfeasibleError, IndeterminateError) as e:
        rep["residual"] = e.residual
        rep["error"] = str(e)
        return rep, None, cm
    except RankError as e:
        rep["error"] = str(e)
        return rep, None, cm
    rep.update(feasible=bool(f.feasible), residual=f.residual, block_ranks=list(f.block_ranks))
    try:
        rep["mi_processed"] = mutual_info(H, N0, (f.W_blocks, kron_lift(cm, dims.L)))
    except SingularityError as e:
        rep["error"] = str(e)
    return rep, f, cm


def cmd_decompose(run: Run) -> int:
    rep, f, _ = _decompose(run, best_effort=False)
    run.emit(_report(rep), run.args.out)
    if f is not None and run.args.w_out:
        run.emit(format_matrix(f.W()), run.args.w_out)
    if f is not None and run.args.x_out:
        run.emit(format_matrix(f.X), run.args.x_out)
    return EXIT_OK if rep["feasible"] else EXIT_NEGATIVE


def cmd_losscheck(run: Run) -> int:
    rep, f, _ = _decompose(run, best_effort=True)
    gap = None
    if rep["mi_processed"] is not None:
        gap = rep["mi_raw"] - rep["mi_processed"]
    rep["mi_gap"] = gap
    rep["lossless"] = gap is not None and abs(gap) < run.args.gap_tol
    run.emit(_report(rep), run.args.out)
    return EXIT_OK if rep["lossless"] else EXIT_NEGATIVE


def cmd_validate(run: Run) -> int:
    a = run.args
    dims, N0, seed = _dims(a)
    seeds = list(range(seed, seed + a.seeds))
    run.seeds = seeds
    cm = _module(a, dims)
    target = kron_lift(cm, dims.L) if a.method == "generic" else cm
    v = validate_A(target, dims, seeds, N0=N0)
    rep = v.to_dict()
    rep.update(dims=dims.as_dict(), structure=cm.structure.value)
    run.emit(_report(rep), a.out)
    return EXIT_OK if v.valid else EXIT_NEGATIVE


def cmd_simulate(run: Run) -> int:
    a = run.args
    dims, N0, seed = _dims(a)
    run.seeds = [seed]
    cm = _module(a, dims)
    top = build_topology(cm, dims)
    H = _channel(a, dims, N0, seed)
    rep = {"structure": cm.structure.value, "dims": dims.as_dict(), "seed": seed,
           "topology": top.to_dict()}
    try:
        f, log = run_training(top, cm, H, seed=seed)
    except (InfeasibleError, IndeterminateError, RankError) as e:
        rep.update(feasible=False, residual=getattr(e, "residual", None),
                   failed_group=getattr(e, "group", None), error=str(e))
        run.emit(_report(rep), a.out)
        return EXIT_NEGATIVE
    rep.update(feasible=True, residual=f.residual, block_ranks=list(f.block_ranks),
               accounting=accounting(log, dims),
               groups=[{"processing": g.processing, "status": "ok"} for g in top.groups])
    run.emit(_report(rep), a.out)
    return EXIT_OK


def cmd_replay(run: Run) -> int:
    path = run.args.replay_manifest
    try:
        man = json.loads(Path(path).read_text())
    except (OSError, ValueError) as e:
        raise UsageError(f"cannot read manifest {path}: {e}") from None
    if man.get("subcommand") == "replay":
        raise UsageError("refusing to replay a replay manifest")
    recorded = man.get("outputs", {})
    if "-" in recorded:
        saved, sys.stdout = sys.stdout, io.StringIO()
        try:
            code = main(man["argv"], _write_manifest=False)
            text = sys.stdout.getvalue()
        finally:
            sys.stdout = saved
        got = {"-": hashlib.sha256(text.encode()).hexdigest()}
    else:
        code = main(man["argv"], _write_manifest=False)
        got = {p: hashlib.sha256(Path(p).read_bytes()).hexdigest() for p in recorded if Path(p).exists()}
    mismatched = sorted(p for p in recorded if got.get(p) != recorded[p])
    rep = {"manifest": str(path), "exit_code": code, "expected_exit_code": man.get("exit_code"),
           "identical": not mismatched and code == man.get("exit_code"), "mismatched": mismatched}
    run.emit(_report(rep), run.args.out)
    return EXIT_OK if rep["identical"] else EXIT_USAGE


# --------------------------------------------------------------------------- parser

STRUCTURES = ["prop3", "prop4", "prop5", "general", "identity", "sum"]


def _system_flags(p, need_tp=True):
    p.add_argument("--config", help="JSON dims file with keys M,K,L,T_P,N0,seed")
    p.add_argument("--mp", type=int, help="panel count M_P")
    p.add_argument("--tp", type=int, help="CPU-input panels T_P")
    p.add_argument("--k", type=int, help="user count K")
    p.add_argument("--l", type=int, help="antennas per panel L")
    p.add_argument("--n0", type=float, default=1.0)
    p.add_argument("--structure", default="general", choices=STRUCTURES + ["conjecture"])
    p.add_argument("--alphas", type=_complex_list)
    p.add_argument("--a", help="panel-level module matrix file (overrides --structure)")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="waxkit", description="Sparse combining modules and WAX decompositions.")
    p.add_argument("--version", action="version", version=f"waxkit {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None,
                        help="RNG seed (default: $WAXKIT_SEED or 0)")
        sp.add_argument("--manifest", help="where to write the run manifest")
        sp.add_argument("--out", help="output file (default: stdout)")

    c = sub.add_parser("construct", help="write a lifted combining module")
    c.add_argument("--mp", type=int, required=True)
    c.add_argument("--tp", type=int, required=True)
    c.add_argument("--structure", required=True, choices=STRUCTURES + ["conjecture"])
    c.add_argument("--alphas", type=_complex_list)
    c.add_argument("--lift", type=int, default=1)
    common(c)
    c.set_defaults(func=cmd_construct)

    t = sub.add_parser("tradeoff", help="trade-off sweep as CSV")
    t.add_argument("--m", type=int, required=True)
    t.add_argument("--k", type=int, required=True)
    t.add_argument("--structure", default="conjecture", choices=STRUCTURES + ["conjecture"])
    t.add_argument("--l", type=_int_list, help="comma-separated L grid (default: divisors of M up to K)")
    t.add_argument("--confirm", action="store_true", help="Monte-Carlo check of borderline points")
    t.add_argument("--seeds", type=int, default=3)
    common(t)
    t.set_defaults(func=cmd_tradeoff)

    for name, func, hlp in (("decompose", cmd_decompose, "decompose one channel"),
                            ("losscheck", cmd_losscheck, "compare raw and processed mutual information")):
        d = sub.add_parser(name, help=hlp)
        _system_flags(d)
        d.add_argument("--h", help="channel matrix file (default: random from --seed)")
        d.add_argument("--method", default="equivalent", choices=["equivalent", "generic"])
        common(d)
        if name == "decompose":
            d.add_argument("--w-out", dest="w_out")
            d.add_argument("--x-out", dest="x_out")
        else:
            d.add_argument("--gap-tol", dest="gap_tol", type=float, default=1e-6)
        d.set_defaults(func=func)

    v = sub.add_parser("validate", help="Monte-Carlo validity of a module")
    _system_flags(v)
    v.add_argument("--seeds", type=int, default=5, help="number of channel seeds (>= 3)")
    v.add_argument("--method", default="equivalent", choices=["equivalent", "generic"])
    common(v)
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("simulate", help="decentralized training over the panel tree")
    _system_flags(s)
    s.add_argument("--h", help="channel matrix file")
    common(s)
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("replay", help="re-run a manifest and compare output digests")
    r.add_argument("replay_manifest", metavar="MANIFEST")
    common(r)
    r.set_defaults(func=cmd_replay)
    return p


def main(argv=None, _write_manifest=True) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    run = Run(args, argv)
    try:
        args.seed_given = args.seed is not None
        if args.seed is None:
            args.seed = default_seed()
        if getattr(args, "seeds", 3) < 1 or (args.command == "validate" and args.seeds < 3):
            raise UsageError("--seeds must be >= 3 for validate and >= 1 otherwise")
        code = args.func(run)
    except UsageError as e:
        sys.stderr.write(f"waxkit {args.command}: {e}\n")
        code = EXIT_USAGE
    except (InfeasibleError, IndeterminateError, RankError) as e:
        sys.stderr.write(f"waxkit {args.command}: {e}\n")
        code = EXIT_NEGATIVE
    except (WaxError, ValueError, OSError) as e:
        sys.stderr.write(f"waxkit {args.command}: {type(e).__name__}: {e}\n")
        code = EXIT_USAGE
    if _write_manifest:
        try:
            run.write_manifest(code)
        except OSError as e:
            sys.stderr.write(f"waxkit: cannot write manifest: {e}\n")
            code = code or EXIT_USAGE
    return code


if __name__ == "__main__":
    sys.exit(main())
