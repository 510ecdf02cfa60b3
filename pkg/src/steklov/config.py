"""Numerical tolerances shared by every module.

The mathematics is exact; every threshold below is an engineering choice.
Row-sum tolerance scales with the state count, the others are fixed.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace


@dataclass(frozen=True)
class Tolerances:
    row: float = 1e-12          # per-state factor: rows must sum to 0 within row * n
    rev: float = 1e-10          # relative detailed-balance defect
    prob: float = 1e-12         # probability vectors sum to 1
    null: float = 1e-9          # relative size of the 2nd singular value of a generator
    zero: float = 1e-9          # |lambda_1| / ||L|| for a Markov spectrum
    check: float = 1e-9         # slack for verified inequalities
    offdiag: float = 1e-12      # negative off-diagonal entries tolerated after a Schur solve
    series: float = 1e-12       # Neumann-series remainder certificate
    upper: float = 1e-8         # lambda_k^(r) <= sigma_k + upper

    def row_tol(self, n: int) -> float:
        return self.row * max(n, 1)

    def with_overrides(self, **overrides: float) -> "Tolerances":
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise KeyError(f"unknown tolerance(s): {sorted(unknown)}")
        return replace(self, **{k: float(v) for k, v in overrides.items()})

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


DEFAULT_TOL = Tolerances()

# Geometric grid for the acceleration study.
DEFAULT_R_GRID = (1.0, 10.0, 1e2, 1e3, 1e4, 1e6)

# Exhaustive-search limits.
DEFAULT_BUDGET = 10**8
PROFILE_BUDGET = 20
MAX_EXACT_STATES = 63
