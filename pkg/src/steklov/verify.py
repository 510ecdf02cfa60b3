"""Structural inequality checks and empirical constants per instance and per corpus.

Inequalities that hold with explicit constants are checked:

    (a) sigma_k <= kappa_k            (b) sigma_k <= h'_k
    (c) kappa_k >= iota_k / (8 ||L||) (d) sigma_1(A) >= rho(A) rho'(A) / (8 ||L||)
    (e) lambda_k^(r) <= sigma_k       (f) the gap sigma_k - lambda_k^(r) shrinks along r

(a) and (b) are checked although they can fail on graphs: two
disjoint parts joined by an edge interact in the Dirichlet form, so the
span of their ground states only yields ``sigma_k <= 2 kappa_k`` and
``sigma_k <= 2 h'_k``. Those weaker forms are checked as well.

Inequalities with a nonconstructive universal constant are only reported,
as the ratio that would have to exceed that constant.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .config import DEFAULT_BUDGET, DEFAULT_R_GRID, DEFAULT_TOL, Tolerances
from .dtn import BoundaryProblem, convergence_study, steklov_spectrum
from .errors import BudgetExceeded, EmptyCorpus
from .io import Instance
from .isoperimetry import IsoperimetricProfile, connectivity_spectra
from .markov import generator_spectrum

CHECKS = (
    "sigma_le_kappa",
    "sigma_le_h_prime",
    "kappa_ge_iota_over_8L",
    "pointwise_rho",
    "lambda_r_le_sigma",
    "gap_trend",
    "sandwich_lower",
    "divergence_rate",
    "sigma_le_2kappa",
    "sigma_le_2h_prime",
)
CONSTANTS = ("sigma_iota", "sigma_kappa", "sigma2k_iota", "lambda_Lambda")
CONSTANT_FORMULAS = {
    "sigma_iota": "sigma_k k^6 ||L|| / iota_k",
    "sigma_kappa": "sigma_k k^6 / kappa_k",
    "sigma2k_iota": "sigma_2k log^2(k+1) ||L|| / iota_k",
    "lambda_Lambda": "lambda_k k^6 / Lambda_k",
}


@dataclass(frozen=True)
class Check:
    name: str
    status: str          # pass | fail | skipped
    margin: float        # min of (rhs - lhs); negative means violated
    reason: str = ""

    def to_dict(self) -> dict:
        d = {"name": self.name, "status": self.status, "margin": self.margin}
        if self.reason:
            d["reason"] = self.reason
        return d


@dataclass
class VerificationReport:
    instance: str
    m: int
    v: int
    norm: float
    k_max: int
    sigma: list[float]
    lam: list[float]
    convergence: list[tuple[float, int, float, float, float]]
    profile: IsoperimetricProfile | None
    checks: list[Check]
    empirical_constants: dict[str, dict[int, float]]
    tight: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.status != "fail" for c in self.checks)

    def check(self, name: str) -> Check:
        return next(c for c in self.checks if c.name == name)

    def to_dict(self) -> dict:
        return {
            "instance": self.instance,
            "m": self.m,
            "v": self.v,
            "norm": self.norm,
            "sigma": self.sigma,
            "lambda": self.lam,
            "convergence": [list(r) for r in self.convergence],
            "profile": self.profile.to_dict() if self.profile is not None else None,
            "checks": [c.to_dict() for c in self.checks],
            "empirical_constants": {k: {str(kk): v for kk, v in d.items()}
                                    for k, d in self.empirical_constants.items()},
            "tight": self.tight,
            "passed": self.passed,
        }


def _status(margin: float, scale: float, tol: Tolerances) -> str:
    return "pass" if margin >= -tol.check * max(1.0, scale) else "fail"


def _ratio(num: float, den: float) -> float:
    if den == 0:
        return math.inf if num > 0 else math.nan
    if math.isinf(den):
        return 0.0
    return num / den


def check_instance(problem: BoundaryProblem, k_max: int = 3,
                   r_grid: Sequence[float] = DEFAULT_R_GRID, *, name: str = "",
                   budget: int = DEFAULT_BUDGET, tol: Tolerances = DEFAULT_TOL) -> VerificationReport:
    """Run every check on one instance; exact constants are skipped when over budget."""
    norm = problem.generator.norm
    sigma = steklov_spectrum(problem, tol)
    lam = generator_spectrum(problem.generator, tol)
    k_top = min(k_max, problem.m)
    checks: list[Check] = []
    tight: list[str] = []

    prof: IsoperimetricProfile | None
    try:
        prof = connectivity_spectra(problem, k_top, "exact", budget)
        skip = ""
    except BudgetExceeded as exc:
        prof, skip = None, f"BudgetExceeded: {exc}"

    def structural(cname, pairs):
        # pairs: (lhs, rhs) meaning lhs <= rhs
        if prof is None:
            checks.append(Check(cname, "skipped", math.nan, skip))
            return
        margins = [rhs - lhs for lhs, rhs in pairs if math.isfinite(lhs) or math.isfinite(rhs)]
        finite = [m for m in margins if not math.isnan(m)]
        margin = min(finite) if finite else math.inf
        scale = max((abs(r) for _, r in pairs if math.isfinite(r)), default=1.0)
        checks.append(Check(cname, _status(margin, scale, tol), margin))
        if abs(margin) <= tol.check * max(1.0, scale):
            tight.append(cname)

    kk = range(2, min(k_top, problem.v) + 1)  # k = 1 is 0 <= 0 everywhere
    if prof is not None:
        structural("sigma_le_kappa", [(sigma.kth(k), prof.value("kappa", k)) for k in kk])
        structural("sigma_le_h_prime", [(sigma.kth(k), prof.value("h_prime", k)) for k in kk])
        structural("kappa_ge_iota_over_8L",
                   [(prof.value("iota", k) / (8 * norm), prof.value("kappa", k)) for k in kk])
        t = prof.table
        sel = np.isfinite(t.sigma1[1:])
        lhs = (t.rho[1:] * t.rho_prime[1:])[sel] / (8 * norm)
        rhs = t.sigma1[1:][sel]
        structural("pointwise_rho", list(zip(lhs.tolist(), rhs.tolist())))

    study = convergence_study(problem, r_grid, tol=tol)
    up = study.upper_margin()
    checks.append(Check("lambda_r_le_sigma", "pass" if up >= 0 else "fail", up - tol.upper))
    gaps = study.gaps()
    trend = min((a - b for a, b in zip(gaps, gaps[1:])), default=math.inf)
    checks.append(Check("gap_trend", "pass" if study.gap_trend_ok() else "fail", trend))
    lo = study.lower_margin()
    checks.append(Check("sandwich_lower", _status(lo, 1.0, tol), lo))
    dv = study.divergence_margin()
    checks.append(Check("divergence_rate", _status(dv, 1.0, tol), dv))
    if prof is not None:
        structural("sigma_le_2kappa", [(sigma.kth(k), 2 * prof.value("kappa", k)) for k in kk])
        structural("sigma_le_2h_prime", [(sigma.kth(k), 2 * prof.value("h_prime", k)) for k in kk])
    else:
        for cname in CHECKS[:4] + CHECKS[-2:]:
            structural(cname, [])
    order = {c: i for i, c in enumerate(CHECKS)}
    checks.sort(key=lambda c: order[c.name])

    consts: dict[str, dict[int, float]] = {c: {} for c in CONSTANTS}
    if prof is not None:
        for k in range(2, k_top + 1):
            if k <= problem.v:
                s = sigma.kth(k)
                consts["sigma_iota"][k] = _ratio(s * k ** 6 * norm, prof.value("iota", k))
                consts["sigma_kappa"][k] = _ratio(s * k ** 6, prof.value("kappa", k))
            if 2 * k <= problem.v:
                consts["sigma2k_iota"][k] = _ratio(sigma.kth(2 * k) * math.log(k + 1) ** 2 * norm,
                                          prof.value("iota", k))
            consts["lambda_Lambda"][k] = _ratio(lam.kth(k) * k ** 6, prof.value("Lambda", k))

    return VerificationReport(
        instance=name, m=problem.m, v=problem.v, norm=norm, k_max=k_top,
        sigma=sigma.tolist(), lam=lam.tolist(), convergence=list(study.rows()),
        profile=prof, checks=checks, empirical_constants=consts, tight=tight)


def _check_one(args):
    inst, k_max, r_grid, budget, tol = args
    return check_instance(inst.problem, k_max, r_grid, name=inst.name, budget=budget, tol=tol)


def check_many(instances: Sequence[Instance], k_max: int = 3, r_grid=DEFAULT_R_GRID, *,
               budget: int = DEFAULT_BUDGET, tol: Tolerances = DEFAULT_TOL,
               jobs: int = 1) -> list[VerificationReport]:
    """Check a list of instances, optionally in a process pool; order is preserved."""
    args = [(inst, k_max, tuple(r_grid), budget, tol) for inst in instances]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_check_one, args))
    return [_check_one(a) for a in args]


@dataclass
class CorpusReport:
    count: int
    failures: dict[str, list[str]]
    minima: dict[str, dict[int, tuple[float, str]]]
    tight: dict[str, list[str]]

    @property
    def passed(self) -> bool:
        return not any(self.failures.values())

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "passed": self.passed,
            "failures": self.failures,
            "empirical_constants": {
                c: {"formula": CONSTANT_FORMULAS[c],
                    "min": {str(k): {"value": v, "instance": who} for k, (v, who) in d.items()}}
                for c, d in self.minima.items()},
            "tight": self.tight,
        }

    def rows(self):
        """``(constant, k, min value, instance)`` rows for tabular output."""
        for c, d in self.minima.items():
            for k, (v, who) in sorted(d.items()):
                yield c, k, v, who


def corpus_report(reports: Iterable[VerificationReport]) -> CorpusReport:
    """Minimum of each empirical constant over the corpus, plus failures and tight cases."""
    reports = sorted(reports, key=lambda r: r.instance)
    if not reports:
        raise EmptyCorpus("corpus is empty")
    failures = {c: [] for c in CHECKS}
    tight = {c: [] for c in CHECKS}
    minima: dict[str, dict[int, tuple[float, str]]] = {c: {} for c in CONSTANTS}
    for rep in reports:
        for chk in rep.checks:
            if chk.status == "fail":
                failures[chk.name].append(rep.instance)
        for t in rep.tight:
            tight[t].append(rep.instance)
        for c, d in rep.empirical_constants.items():
            for k, v in d.items():
                if math.isnan(v):
                    continue
                if k not in minima[c] or v < minima[c][k][0]:
                    minima[c][k] = (v, rep.instance)
    return CorpusReport(len(reports), failures, minima, tight)


__all__ = ["CHECKS", "CONSTANTS", "Check", "VerificationReport", "check_instance", "check_many",
           "CorpusReport", "corpus_report"]
