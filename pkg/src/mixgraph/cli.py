"""Command-line front end: ``mixgraph {validate,spectrum,resolve,evolve,delay-compare}``."""

from __future__ import annotations

import argparse
from dataclasses import asdict, dataclass, field
import json
import logging
from pathlib import Path
import sys

import numpy as np

from . import boundary as bnd
from .delay import DelayedProblem, compare_bd_bdprime, convergence_study
from .errors import MixGraphError, ParseError
from .evolution import assemble, evolve, laplace_evolve
from .expr import parse, parse_complex
from .graph import EdgeFunction, l2_norm, trace, cotrace
from .io import ensure_dir, fmt, read_bc, read_edge_function, read_graph, write_csv, write_edge_function
from .resolvent import apply_resolvent, assemble_kernel, branch_k
from .spectral import SecularSystem, find_eigenvalues

log = logging.getLogger("mixgraph")

SUBCOMMANDS = ("validate", "spectrum", "resolve", "evolve", "delay-compare")


@dataclass
class RunConfig:
    subcommand: str
    out_dir: Path = Path(".")
    seed: int = 0
    tol: float = 1e-10
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ParseError("bad-subcommand", f"unknown subcommand {self.subcommand!r}")
        if not self.tol > 0:
            raise ParseError("bad-option", "--tol must be positive")
        for key in ("dt", "t_end", "n_per_edge", "tau", "n_quad"):
            v = self.options.get(key)
            if v is not None and not v > 0:
                raise ParseError("bad-option", f"--{key.replace('_', '-')} must be positive")


# --- argument helpers -------------------------------------------------------------

def _region(text: str) -> tuple[float, float, float, float]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ParseError("invalid-region", f"region {text!r} is not four numbers") from None
    if len(vals) != 4 or not (vals[0] < vals[1] and vals[2] < vals[3]):
        raise ParseError("invalid-region", "region must be re_min,re_max,im_min,im_max with min < max")
    return vals


def _preset_params(items) -> dict:
    out = {}
    for it in items or ():
        if "=" not in it:
            raise ParseError("parse-error", f"1:1: preset parameter {it!r} is not key=value")
        key, val = it.split("=", 1)
        parts = [parse_complex(p) for p in val.split(",")]
        parts = [p.real if p.imag == 0 else p for p in parts]
        out[key.strip()] = tuple(parts) if len(parts) > 1 else parts[0]
    return out


def _problem(opts):
    if opts.get("preset"):
        return bnd.presets(opts["preset"], **_preset_params(opts.get("param")))
    if not opts.get("graph") or not opts.get("bc"):
        raise ParseError("missing-input", "give --preset or both --graph and --bc")
    g = read_graph(opts["graph"])
    return g, read_bc(opts["bc"], (g.D, g.T))


def _initial(g, spec: str, n) -> EdgeFunction:
    """--u0: a CSV path, or expressions in x (one, or one per edge separated by ';')."""
    if Path(spec).is_file():
        return read_edge_function(spec, g)
    exprs = [parse(s) for s in spec.split(";")]
    if len(exprs) == 1:
        exprs = exprs * g.n_edges
    if len(exprs) != g.n_edges:
        raise ParseError("parse-error", f"1:1: expected 1 or {g.n_edges} expressions, got {len(exprs)}")
    return EdgeFunction.from_callables(g, n, [lambda x, f=f: np.asarray(f(x), dtype=complex) for f in exprs])


def _func(spec: str, var: str):
    if Path(spec).is_file():
        raw = np.loadtxt(spec, delimiter=",", ndmin=2)
        xs, ys = raw[:, 0], raw[:, 1]
        return lambda s: np.interp(s, xs, ys)
    f = parse(spec)
    return lambda s: np.real_if_close(np.broadcast_to(f(**{var: np.asarray(s, dtype=float)}), np.shape(s)))


def _meta(path, record: dict) -> None:
    Path(path).write_text(json.dumps(record, indent=2, sort_keys=True, default=str) + "\n")


# --- subcommands ----------------------------------------------------------------

def cmd_validate(cfg: RunConfig) -> int:
    g, bc = _problem(cfg.options)
    violations = bnd.validate(bc)
    if violations:
        for v in violations:
            print(f"{v.identity} (residual {v.residual:.3e})", file=sys.stderr)
        return 2
    rep = bnd.report(bc, g)
    for k, v in asdict(rep).items():
        print(f"{k} = {v}")
    _meta(ensure_dir(cfg.out_dir) / "validate.json", asdict(rep))
    return 0


def cmd_spectrum(cfg: RunConfig) -> int:
    g, bc = _problem(cfg.options)
    region = _region(cfg.options.get("region") or "-1,10,-1,1")
    sys_ = SecularSystem(g, bc)
    recs = find_eigenvalues(sys_, region)
    rows = [(r.lam.real, r.lam.imag, r.k.real, r.k.imag, r.geometric_multiplicity, r.abs_det) for r in recs]
    out = ensure_dir(cfg.out_dir) / "spectrum.csv"
    write_csv(out, ("re_lambda", "im_lambda", "re_k", "im_k", "multiplicity", "abs_det"), rows)
    for r in recs:
        print(f"lambda = {fmt(r.lam.real)} {'+' if r.lam.imag >= 0 else '-'} {fmt(abs(r.lam.imag))}i  (multiplicity {r.geometric_multiplicity})")
    return 0


def cmd_resolve(cfg: RunConfig) -> int:
    o = cfg.options
    g, bc = _problem(o)
    if (o.get("k") is None) == (o.get("lam") is None):
        raise ParseError("missing-input", "give exactly one of --k and --lambda")
    k = parse_complex(o["k"]) if o.get("k") is not None else branch_k(parse_complex(o["lam"]))
    sys_ = SecularSystem(g, bc)
    u = _initial(g, o.get("u0") or "1", o.get("n_per_edge") or 100)
    gk = assemble_kernel(sys_, k)
    w = apply_resolvent(gk, u)
    res = float(np.linalg.norm(bc.residual(trace(w).vector, cotrace(w).vector)))
    out = ensure_dir(cfg.out_dir)
    write_edge_function(out / "resolvent.csv", w)
    meta = {"k": [gk.k.real, gk.k.imag], "cond_Z": gk.cond, "boundary_residual": res, "l2": l2_norm(w)}
    _meta(out / "resolve.json", meta)
    print(json.dumps(meta, sort_keys=True))
    return 0


def cmd_evolve(cfg: RunConfig) -> int:
    o = cfg.options
    g, bc = _problem(o)
    n = o.get("n_per_edge") or 100
    u0 = _initial(g, o.get("u0") or "1", n)
    op = assemble(g, bc, u0.counts)
    t_end, dt = o.get("t_end") or 1.0, o.get("dt") or 1e-3
    snaps = o.get("snapshot_times") or []
    traj = evolve(op, u0, t_end, dt, scheme=o.get("scheme") or "be", snapshot_times=snaps, tol=cfg.tol)
    out = ensure_dir(cfg.out_dir)
    write_csv(out / "trajectory.csv", ("t", "l2", "max_imag"),
              [(float(t), float(nm), float(mi)) for t, nm, mi in zip(traj.times, traj.l2_norms, traj.max_imag)])
    steps = {int(round(t / dt)) for t in snaps} | {int(round(t_end / dt))}
    stored = [0] + sorted(steps)
    for m, u in zip(stored, traj.snapshots):
        if m in steps:
            write_edge_function(out / f"snapshot_t{fmt(m * dt)}.csv", u)
    summary = {"final_l2": float(traj.l2_norms[-1]), "max_imag": float(traj.max_imag.max()),
               "constraint_residual": traj.constraint_residual, "violations": len(traj.violations)}
    if o.get("laplace_check"):
        lap = laplace_evolve(SecularSystem(g, bc), u0, t_end)
        summary["laplace_l2_difference"] = l2_norm(lap - traj.final.map(lambda v: v.astype(complex)))
    _meta(out / "evolve.json", summary)
    print(json.dumps(summary, sort_keys=True))
    return 0 if not traj.violations else 1


def cmd_delay_compare(cfg: RunConfig) -> int:
    o = cfg.options
    zero = "0"
    prob = DelayedProblem(
        f1=_func(o.get("f1") or zero, "x"),
        f2=_func(o.get("f2") or zero, "x"),
        f_del=_func(o.get("history") or zero, "t"),
        tau=o.get("tau") or 1.0,
        variant=o.get("variant") or "derived",
    )
    flags = {k: v for k, v in prob.compatibility().items() if v > 1e-3}
    if flags:
        log.warning("incompatible data (allowed): %s", flags)
    t_end, dt, n = o.get("t_end") or 2.0, o.get("dt") or 1e-3, o.get("n_per_edge") or 100
    cmp_ = compare_bd_bdprime(prob, t_end, dt, n)
    out = ensure_dir(cfg.out_dir)
    write_csv(out / "delay_difference.csv", ("t", "l2_difference"),
              [(float(t), float(d)) for t, d in zip(cmp_.times, cmp_.difference)])
    summary = {"sup_difference": cmp_.sup_difference, "relative_difference": cmp_.relative,
               "solution_sup": cmp_.solution_sup, "h": cmp_.h, "dt": dt, "incompatible": flags}
    levels = o.get("levels") or 0
    if levels >= 2:
        base_n = max(4, n // 2 ** (levels - 1))
        rep = convergence_study(prob, t_end, dt * 2 ** (levels - 1), base_n, levels)
        write_csv(out / "delay_convergence.csv", ("n", "dt", "sup_difference", "relative_difference"),
                  [(m, float(d), float(e), float(r)) for m, d, e, r in zip(rep.n, rep.dt, rep.sup_difference, rep.relative)])
        summary["orders"] = rep.orders
    _meta(out / "delay_compare.json", summary)
    print(json.dumps(summary, sort_keys=True))
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "spectrum": cmd_spectrum,
    "resolve": cmd_resolve,
    "evolve": cmd_evolve,
    "delay-compare": cmd_delay_compare,
}


def run(cfg: RunConfig) -> int:
    np.random.seed(cfg.seed)
    return COMMANDS[cfg.subcommand](cfg)


# --- argparse -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default=".", help="directory for output files")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tol", type=float, default=1e-10)
    common.add_argument("-v", "--verbose", action="store_true")

    problem = argparse.ArgumentParser(add_help=False)
    problem.add_argument("--preset", choices=bnd.PRESET_NAMES)
    problem.add_argument("--param", action="append", metavar="KEY=VALUE", help="preset parameter, repeatable")
    problem.add_argument("--graph", help="graph file (TOML)")
    problem.add_argument("--bc", help="boundary-condition file (TOML)")

    p = argparse.ArgumentParser(prog="mixgraph", description=__doc__, parents=[common])
    sub = p.add_subparsers(dest="subcommand", required=True)
    sub.add_parser("validate", parents=[common, problem], help="check (P, L) and report dissipativity")
    sp_ = sub.add_parser("spectrum", parents=[common, problem], help="eigenvalues in a k-region")
    sp_.add_argument("--region", help="re_min,re_max,im_min,im_max in the k-plane")
    rs = sub.add_parser("resolve", parents=[common, problem], help="apply the resolvent")
    rs.add_argument("--k")
    rs.add_argument("--lambda", dest="lam")
    rs.add_argument("--u0", help="CSV file or expression(s) in x")
    rs.add_argument("--n-per-edge", type=int)
    ev = sub.add_parser("evolve", parents=[common, problem], help="time evolution")
    ev.add_argument("--u0", help="CSV file or expression(s) in x")
    ev.add_argument("--t-end", type=float)
    ev.add_argument("--dt", type=float)
    ev.add_argument("--n-per-edge", type=int)
    ev.add_argument("--scheme", choices=("be", "cn"), default="be")
    ev.add_argument("--snapshot-times", type=lambda s: [float(v) for v in s.split(",")])
    ev.add_argument("--laplace-check", action="store_true")
    dc = sub.add_parser("delay-compare", parents=[common], help="delayed system vs transport-edge graph")
    dc.add_argument("--tau", type=float)
    dc.add_argument("--history", help="expression in t on [-tau, 0] or CSV of t,value")
    dc.add_argument("--f1")
    dc.add_argument("--f2")
    dc.add_argument("--t-end", type=float)
    dc.add_argument("--dt", type=float)
    dc.add_argument("--n-per-edge", type=int)
    dc.add_argument("--variant", choices=("derived", "printed"), default="derived")
    dc.add_argument("--levels", type=int, default=0, help="refinement levels for an order estimate")
    return p


_VALUE_FLAGS = ("--region", "--k", "--lambda", "--u0", "--history", "--f1", "--f2", "--param")


def _glue_negative_values(argv: list[str]) -> list[str]:
    # "--region -1,15,-1,1" would otherwise be read as an option
    out = []
    i = 0
    while i < len(argv):
        a = argv[i]
        if a in _VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(_glue_negative_values(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    opts = {k: v for k, v in vars(args).items() if k not in ("subcommand", "out_dir", "seed", "tol", "verbose")}
    try:
        cfg = RunConfig(args.subcommand, Path(args.out_dir), args.seed, args.tol, opts)
        return run(cfg)
    except MixGraphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
