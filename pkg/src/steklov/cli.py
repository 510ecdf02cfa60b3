"""Command-line interface: ``steklov <subcommand> ...``.

Exit codes: 0 success, 1 a verification check failed, 2 bad input.
Every output starts with the resolved configuration (a ``config`` key in
JSON, ``# key=value`` lines in CSV).
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import DEFAULT_BUDGET, DEFAULT_R_GRID, DEFAULT_TOL, Tolerances
from .dtn import convergence_study, make_problem, steklov_generator, steklov_spectrum
from .errors import BudgetExceeded, SteklovError
from .io import dumps, instance_to_dict, load_dir, load_instance
from .isoperimetry import connectivity_spectra
from .kernels import ergodic_bound_check, problem_kernel, smooth_and_compare, steklov_kernel
from .markov import generator_spectrum
from .models import KINDS, gen_named
from .montecarlo import (
    DEFAULT_CHI,
    SimulationConfig,
    chi_acceleration,
    hitting_frequencies,
    hitting_law_exact,
    simulate_paths,
    trace_rates,
)
from .verify import Check, VerificationReport, check_many, corpus_report


class CheckFailed(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _tol_override(text: str) -> tuple[str, float]:
    if "=" not in text:
        raise argparse.ArgumentTypeError("tolerance overrides look like name=value")
    k, v = text.split("=", 1)
    try:
        return k.strip(), float(v)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad tolerance value {v!r}") from exc


def _chi(text: str) -> float:
    if text == "default":
        return DEFAULT_CHI
    try:
        return float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError("chi must be a number or 'default'") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="json",
                        help="json, csv, or a file path (format from the suffix)")
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--tol", type=_tol_override, action="append", default=[],
                        metavar="NAME=VALUE", help="override a numerical tolerance")
    common.add_argument("--budget", type=int, default=DEFAULT_BUDGET,
                        help="label assignments allowed for exact enumeration")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")

    p = argparse.ArgumentParser(prog="steklov", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a named instance")
    g.add_argument("kind", choices=KINDS)
    g.add_argument("--n", type=int)
    g.add_argument("--m", type=int)
    g.add_argument("--circ", type=int)
    g.add_argument("--layers", type=int)
    g.add_argument("--length", type=float)
    g.add_argument("--neck", type=float)
    g.add_argument("--rim", type=int)
    g.add_argument("--exponent", type=float)

    s = sub.add_parser("spectrum", parents=[common], help="spectra of -L and -S")
    s.add_argument("instance")
    s.add_argument("--boundary", type=_ints, help="override V (comma-separated indices)")
    s.add_argument("--allow-full", action="store_true", help="accept V = M (then S = L)")

    a = sub.add_parser("accelerate", parents=[common], help="spectra of accelerated generators")
    a.add_argument("instance")
    a.add_argument("--r-grid", type=_floats, default=list(DEFAULT_R_GRID))
    a.add_argument("--k", type=int, help="largest k reported (default |V|)")

    c = sub.add_parser("cheeger", parents=[common], help="connectivity and Cheeger sequences")
    c.add_argument("instance")
    c.add_argument("--k", type=int, default=3)
    c.add_argument("--mode", choices=("exact", "heuristic"), default="exact")

    v = sub.add_parser("verify", parents=[common], help="check inequalities on instances")
    v.add_argument("path", help="instance file or directory of *.json instances")
    v.add_argument("--k", type=int, default=3)
    v.add_argument("--r-grid", type=_floats, default=list(DEFAULT_R_GRID))

    m = sub.add_parser("simulate", parents=[common], help="Monte Carlo trace and hitting statistics")
    m.add_argument("instance")
    m.add_argument("--paths", type=int, default=100_000)
    m.add_argument("--horizon", type=int, default=64)
    m.add_argument("--x0", type=int, help="start state for the hitting law (default: first interior state)")
    m.add_argument("--chi", type=_chi, default=DEFAULT_CHI)
    m.add_argument("--tail-paths", type=int, default=20_000)

    k = sub.add_parser("kernels", parents=[common], help="discrete-time kernels and smoothing")
    k.add_argument("instance")
    k.add_argument("--eps", type=_floats, default=[0.2, 0.1, 0.05, 0.01])

    r = sub.add_parser("report", parents=[common], help="merge verify outputs into a corpus summary")
    r.add_argument("reports", nargs="+")
    return p


# --- output --------------------------------------------------------------------------

def _config(args, tol: Tolerances) -> dict:
    d = {key: val for key, val in vars(args).items() if key not in ("tol",)}
    d["tolerances"] = tol.as_dict()
    return d


def _csv_text(config: dict, header: Sequence[str], rows) -> str:
    buf = _io.StringIO()
    for key, val in config.items():
        buf.write(f"# {key}={json.dumps(val) if not isinstance(val, str) else val}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(x) for x in row])
    return buf.getvalue()


def _cell(x):
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "inf" if x == math.inf else repr(x)
    return x


def _emit(args, config: dict, payload: dict, header=None, rows=None) -> None:
    out = args.out
    fmt = "csv" if out == "csv" or out.endswith(".csv") else "json"
    if fmt == "csv":
        if header is None:
            raise SteklovError("this command has no CSV form; use --out json")
        text = _csv_text(config, header, rows)
    else:
        text = dumps({"config": config, **payload}, indent=1) + "\n"
    if out in ("json", "csv"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


# --- commands ------------------------------------------------------------------------

def _load(args, tol, allow_full=False):
    inst = load_instance(args.instance, allow_full=allow_full, tol=tol)
    boundary = getattr(args, "boundary", None)
    if boundary is not None:
        from .io import Instance
        inst = Instance(inst.name, make_problem(inst.generator, boundary, allow_full=allow_full),
                        inst.meta)
    return inst


def cmd_gen(args, tol):
    params = {k: getattr(args, k) for k in ("n", "m", "circ", "layers", "length", "neck", "rim",
                                            "exponent") if getattr(args, k) is not None}
    inst = gen_named(args.kind, params, seed=args.seed)
    d = instance_to_dict(inst)
    out = args.out
    text = dumps(d, indent=1) + "\n"
    if out == "json":
        sys.stdout.write(text)
    elif out == "csv" or out.endswith(".csv"):
        raise SteklovError("instances are written as JSON")
    else:
        Path(out).write_text(text)
    return 0


def cmd_spectrum(args, tol):
    inst = _load(args, tol, allow_full=args.allow_full)
    p = inst.problem
    lam = generator_spectrum(p.generator, tol)
    if p.interior:
        sig = steklov_spectrum(p, tol)
        S = steklov_generator(p, tol).matrix
    else:
        sig, S = lam, p.generator.matrix
    payload = {"instance": inst.name, "m": p.m, "boundary": list(p.boundary), "norm": p.generator.norm,
               "mu": p.generator.mu, "lambda": lam.tolist(), "sigma": sig.tolist(), "S": S}
    rows = [("lambda", k + 1, x) for k, x in enumerate(lam.tolist())]
    rows += [("sigma", k + 1, x) for k, x in enumerate(sig.tolist())]
    _emit(args, _config(args, tol), payload, ("quantity", "k", "value"), rows)
    return 0


def cmd_accelerate(args, tol):
    inst = _load(args, tol)
    study = convergence_study(inst.problem, args.r_grid, args.k, tol)
    rows = list(study.rows())
    payload = {
        "instance": inst.name,
        "rows": [dict(zip(("r", "k", "lambda_k", "sigma_k", "gap"), r)) for r in rows],
        "dirichlet_gap": study.dirichlet_gap,
        "final_gap": study.final_gap(),
        "upper_violations": study.upper_violations(),
        "growth": study.growth(),
    }
    _emit(args, _config(args, tol), payload, ("r", "k", "lambda_k", "sigma_k", "gap"), rows)
    return 0


def cmd_cheeger(args, tol):
    inst = _load(args, tol)
    try:
        prof = connectivity_spectra(inst.problem, args.k, args.mode, args.budget)
    except BudgetExceeded as exc:
        raise SteklovError(f"{exc} (suggestion: --mode {exc.suggestion})") from exc
    d = prof.to_dict()
    rows = [(q, k + 1, x) for q in ("h", "h_prime", "kappa", "iota", "Lambda")
            for k, x in enumerate(d[q])]
    _emit(args, _config(args, tol), {"instance": inst.name, **d}, ("quantity", "k", "value"), rows)
    return 0


def cmd_verify(args, tol):
    insts = load_dir(args.path, tol=tol)
    if not insts:
        raise SteklovError(f"no instances found under {args.path}")
    reports = check_many(insts, args.k, args.r_grid, budget=args.budget, tol=tol, jobs=args.jobs)
    summary = corpus_report(reports)
    payload = {"reports": [r.to_dict() for r in reports], "summary": summary.to_dict()}
    rows = [(r.instance, c.name, c.status, c.margin) for r in reports for c in r.checks]
    _emit(args, _config(args, tol), payload, ("instance", "check", "status", "margin"), rows)
    return 0 if summary.passed else 1


def cmd_simulate(args, tol):
    inst = _load(args, tol)
    p = inst.problem
    cfg = SimulationConfig(seed=args.seed, n_paths=args.paths, horizon=args.horizon, chi=args.chi)
    x0 = args.x0 if args.x0 is not None else p.interior[0]
    batch = simulate_paths(p, cfg, p.boundary[0])
    est = trace_rates(batch, p.boundary)
    S = steklov_generator(p, tol).matrix
    hb = simulate_paths(p, cfg, x0)
    freq, se, n = hitting_frequencies(hb, p.boundary)
    exact = hitting_law_exact(p, x0)
    tail_cfg = SimulationConfig(seed=args.seed, n_paths=args.tail_paths, horizon=args.horizon, chi=args.chi)
    chi = chi_acceleration(p, args.chi, simulate=tail_cfg, tol=tol)
    with np.errstate(divide="ignore", invalid="ignore"):
        z_trace = np.where(est.se > 0, (est.rates - S) / est.se, 0.0)
        z_hit = np.where(se > 0, (freq - exact) / se, 0.0)
    payload = {
        "instance": inst.name,
        "trace": {"estimate": est.rates, "se": est.se, "exact": S, "z": z_trace},
        "hitting": {"x0": x0, "empirical": freq, "se": se, "exact": exact, "z": z_hit,
                    "paths_used": n, "horizon_exceeded": int(hb.horizon_exceeded.sum())},
        "chi": {
            "chi": chi.chi, "s": chi.s, "alpha": chi.alpha, "phi": chi.phi,
            "mean_tau": chi.mean_tau, "mean_bound": chi.mean_bound, "mean_ok": chi.mean_ok,
            "gap": chi.gap, "gap_bound": chi.gap_bound, "gap_ok": chi.gap_ok,
            "tails": [t.__dict__ for t in chi.tails],
        },
    }
    rows = [("trace", f"{i},{j}", est.rates[i, j], S[i, j], est.se[i, j])
            for i in range(p.v) for j in range(p.v)]
    rows += [("hitting", z, freq[i], exact[i], se[i]) for i, z in enumerate(p.boundary)]
    _emit(args, _config(args, tol), payload, ("quantity", "entry", "empirical", "exact", "se"), rows)
    return 0


def cmd_kernels(args, tol):
    inst = _load(args, tol)
    P, V = problem_kernel(inst.problem)
    K = steklov_kernel(P, V, tol)
    rows = smooth_and_compare(P, V, args.eps, tol)
    erg = ergodic_bound_check(P, V, tol)
    payload = {
        "instance": inst.name,
        "K": K.P,
        "smoothing": [r.__dict__ for r in rows],
        "ergodic": {"lhs": erg.lhs, "rhs": erg.rhs, "rhs_squared": erg.rhs ** 2, "holds": erg.holds,
                    "holds_squared": erg.holds_squared, "gamma": erg.gamma, "mean": erg.mean,
                    "second": erg.second, "kac": erg.kac},
    }
    table = [(r.eps, r.norm_gap, r.dirichlet_gap, r.gap_floor) for r in rows]
    _emit(args, _config(args, tol), payload, ("eps", "norm_gap", "dirichlet_gap", "gap_floor"), table)
    return 0


def _report_from_dict(d: dict) -> VerificationReport:
    consts = {c: {int(k): float(v) for k, v in vals.items()}
              for c, vals in d.get("empirical_constants", {}).items()}
    checks = [Check(c["name"], c["status"], float(c["margin"]), c.get("reason", ""))
              for c in d.get("checks", [])]
    return VerificationReport(d.get("instance", ""), d.get("m", 0), d.get("v", 0), d.get("norm", 0.0),
                              0, d.get("sigma", []), d.get("lambda", []), [], None, checks, consts,
                              d.get("tight", []))


def cmd_report(args, tol):
    reports = []
    for path in args.reports:
        text = Path(path).read_text()
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SteklovError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}") from exc
        items = d.get("reports", [d]) if isinstance(d, dict) else d
        reports += [_report_from_dict(x) for x in items]
    summary = corpus_report(reports)
    rows = list(summary.rows())
    _emit(args, _config(args, tol), {"summary": summary.to_dict()},
          ("constant", "k", "min", "instance"), rows)
    return 0 if summary.passed else 1


COMMANDS = {
    "gen": cmd_gen,
    "spectrum": cmd_spectrum,
    "accelerate": cmd_accelerate,
    "cheeger": cmd_cheeger,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "kernels": cmd_kernels,
    "report": cmd_report,
}


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        tol = DEFAULT_TOL.with_overrides(**dict(args.tol))
    except KeyError as exc:
        print(f"error: unknown tolerance {exc.args[0]!r}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args, tol)
    except (SteklovError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
