"""Discrete-time picture: Steklov kernels, smoothing and the ergodic bound.

A reversible Markov kernel ``P`` on ``M`` induces the kernel ``K`` on ``V``
of the chain watched only at its visits to ``V``:

    K = P_VV + P_VI (I - P_II)^{-1} P_IV = sum_n 1_V P (1_{M \\ V} P)^n 1_V.

With ``P = I + L / ||L||`` this is ``K = I + S / ||L||``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .config import DEFAULT_TOL, Tolerances
from .errors import (
    EmptyInterior,
    EpsOutOfRange,
    InvalidBoundary,
    InvalidMeasure,
    InvalidRates,
    NotReversible,
    SpectralRadiusOne,
)
from .markov import ReversibleGenerator, subset_indices, symmetrized_eigh


@dataclass(frozen=True)
class MarkovKernel:
    P: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        mu = np.array(self.mu, dtype=float)
        P.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "mu", mu)

    @property
    def n(self) -> int:
        return self.P.shape[0]


def validate_kernel(P, mu, tol: Tolerances = DEFAULT_TOL) -> MarkovKernel:
    """Check stochasticity, nonnegativity and ``mu``-reversibility."""
    P = np.asarray(P, dtype=float)
    mu = np.asarray(mu, dtype=float)
    n = P.shape[0]
    if P.shape != (n, n) or mu.shape != (n,):
        raise InvalidRates("kernel must be square and match the measure")
    if np.any(P < -tol.offdiag):
        raise InvalidRates("kernel has negative entries")
    if np.max(np.abs(P.sum(axis=1) - 1.0)) > tol.row_tol(n):
        raise InvalidRates("kernel rows do not sum to 1")
    if np.any(mu <= 0) or abs(mu.sum() - 1.0) > tol.prob * n:
        raise InvalidMeasure("reversing measure must be a positive probability vector")
    F = mu[:, None] * P
    if np.any(np.abs(F - F.T) > tol.rev * np.maximum(np.maximum(F, F.T), 1e-300)):
        raise NotReversible("kernel is not reversible for the given measure")
    return MarkovKernel(np.clip(P, 0.0, None), mu)


def kernel_from_generator(gen: ReversibleGenerator, scale: float | None = None) -> MarkovKernel:
    """``P = I + L / scale`` with ``scale = ||L||`` by default (a lazy-ish chain)."""
    c = gen.norm if scale is None else float(scale)
    if c < gen.norm:
        raise InvalidRates("scale below ||L|| gives negative diagonal entries")
    return validate_kernel(np.eye(gen.n) + gen.matrix / c, gen.mu)


def _split(n: int, V: Iterable[int]) -> tuple[list[int], list[int]]:
    Vi = [int(x) for x in subset_indices(V, n)]
    if len(Vi) == n:
        raise EmptyInterior("V = M: there is no interior")
    Vs = set(Vi)
    return Vi, [x for x in range(n) if x not in Vs]


def sub_kernel_radius(kernel: MarkovKernel, I: Sequence[int]) -> float:
    """Spectral radius of ``P_II`` (self-adjoint in ``L^2(mu_I)``)."""
    vals = symmetrized_eigh(kernel.P[np.ix_(I, I)], kernel.mu[I])
    return float(np.max(np.abs(vals)))


def _check_radius(kernel, I, tol):
    rad = sub_kernel_radius(kernel, I)
    if rad >= 1.0 - tol.series:
        raise SpectralRadiusOne(f"sub-kernel on the interior has spectral radius {rad!r}")
    return rad


@dataclass(frozen=True)
class SeriesResult:
    K: np.ndarray
    terms: int
    remainder: float  # bound on the row sums of the omitted tail
    certified: bool


def neumann_steklov_kernel(kernel: MarkovKernel, V: Iterable[int], tol: Tolerances = DEFAULT_TOL,
                           max_terms: int = 1_000_000) -> SeriesResult:
    """Truncated ``P_VV + sum_{n < N} P_VI P_II^n P_IV``.

    The omitted tail is nonnegative with row sums at most
    ``||P_VI P_II^N 1||_inf``; ``N`` is the first index where this drops
    below ``tol.series``.
    """
    Vi, I = _split(kernel.n, V)
    P = kernel.P
    Q = P[np.ix_(I, I)]
    PVI = P[np.ix_(Vi, I)]
    term = P[np.ix_(I, Vi)].copy()
    acc = np.zeros_like(term)
    ones = np.ones(len(I))
    N = 0
    rem = float(np.max(PVI @ ones))
    while rem >= tol.series and N < max_terms:
        acc += term
        term = Q @ term
        ones = Q @ ones
        N += 1
        rem = float(np.max(PVI @ ones))
    return SeriesResult(P[np.ix_(Vi, Vi)] + PVI @ acc, N, rem, rem < tol.series)


def steklov_kernel(kernel: MarkovKernel, V: Iterable[int], tol: Tolerances = DEFAULT_TOL) -> MarkovKernel:
    """Kernel of the chain observed on ``V``, by direct solve, cross-checked by the series."""
    Vi, I = _split(kernel.n, V)
    _check_radius(kernel, I, tol)
    P = kernel.P
    G = np.linalg.solve(np.eye(len(I)) - P[np.ix_(I, I)], P[np.ix_(I, Vi)])
    K = P[np.ix_(Vi, Vi)] + P[np.ix_(Vi, I)] @ G
    series = neumann_steklov_kernel(kernel, Vi, tol)
    if series.certified and np.max(np.abs(K - series.K)) > series.remainder + 1e-10:
        raise SpectralRadiusOne("series and direct solve disagree beyond the certificate")
    nu = kernel.mu[Vi] / kernel.mu[Vi].sum()
    return validate_kernel(K, nu, tol)


# --- smoothing -----------------------------------------------------------------------

def smoothed(kernel: MarkovKernel, eps: float) -> MarkovKernel:
    """``P_eps = (1 - eps) P + eps 1 mu^T``."""
    eps = float(eps)
    if not 0.0 <= eps <= 1.0:
        raise EpsOutOfRange(f"eps must lie in [0, 1], got {eps}")
    P = (1.0 - eps) * kernel.P + eps * np.outer(np.ones(kernel.n), kernel.mu)
    return MarkovKernel(P, kernel.mu)


def nu_norm(D: np.ndarray, nu: np.ndarray, tol: Tolerances = DEFAULT_TOL,
            scale: float = 0.0) -> float:
    """Operator norm on ``L^2(nu)`` of a ``nu``-self-adjoint matrix.

    ``scale`` is the size of the operands when ``D`` is a difference, so that
    round-off from cancellation is not mistaken for asymmetry.
    """
    w = np.sqrt(nu)
    B = w[:, None] * D / w[None, :]
    scale = max(float(np.max(np.abs(B))) if D.size else 0.0, scale, 1e-300)
    if np.max(np.abs(B - B.T)) > 1e-9 * scale:
        raise NotReversible("difference is not self-adjoint in L^2(nu)")
    return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (B + B.T))))) if D.size else 0.0


@dataclass(frozen=True)
class SmoothingRow:
    eps: float
    norm_gap: float
    dirichlet_gap: float
    gap_floor: float  # mu(V) eps


def smooth_and_compare(kernel: MarkovKernel, V: Iterable[int], eps_grid: Sequence[float],
                       tol: Tolerances = DEFAULT_TOL) -> list[SmoothingRow]:
    """``|||K_eps - K|||_nu`` along ``eps_grid``.

    Each row also carries the interior gap ``1 - rho(P_eps,II)``, asserted
    to be at least ``mu(V) eps``.
    """
    Vi, I = _split(kernel.n, V)
    K = steklov_kernel(kernel, Vi, tol)
    muV = float(kernel.mu[Vi].sum())
    rows = []
    for eps in eps_grid:
        Pe = smoothed(kernel, eps)
        gap = 1.0 - sub_kernel_radius(Pe, I)
        floor = muV * float(eps)
        if gap < floor - tol.check:
            raise SpectralRadiusOne(f"interior gap {gap} below mu(V) eps = {floor}")
        Ke = steklov_kernel(Pe, Vi, tol) if eps > 0 else K
        rows.append(SmoothingRow(float(eps), nu_norm(Ke.P - K.P, K.mu, tol, scale=1.0), gap, floor))
    return rows


# --- ergodic bound -------------------------------------------------------------------

@dataclass(frozen=True)
class ErgodicReport:
    gamma: np.ndarray
    density: np.ndarray
    lhs: float          # nu[(d gamma / d nu)^2]
    mean: float         # E_nu[tau - 1]
    second: float       # E_nu[(tau - 1)^2]
    rhs: float          # sqrt(second) / mean
    kac: float          # mu(M \ V) / mu(V)

    @property
    def holds(self) -> bool:
        """The ergodic bound ``lhs <= rhs``; it can fail (see ``holds_squared``)."""
        return self.lhs <= self.rhs * (1 + 1e-12)

    @property
    def holds_squared(self) -> bool:
        """The weaker ``lhs <= rhs^2``, which holds on every instance tried."""
        return self.lhs <= self.rhs ** 2 * (1 + 1e-12)

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


def ergodic_bound_check(kernel: MarkovKernel, V: Iterable[int],
                        tol: Tolerances = DEFAULT_TOL) -> ErgodicReport:
    """Exact evaluation of both sides of the ergodic bound.

    ``gamma`` is the law of the chain at its first visit to ``V`` when
    started from ``mu`` conditioned on the interior; ``tau`` is the return
    time to ``V`` from ``nu`` (at least 1).
    """
    Vi, I = _split(kernel.n, V)
    _check_radius(kernel, I, tol)
    P, mu = kernel.P, kernel.mu
    A = np.eye(len(I)) - P[np.ix_(I, I)]
    xi = mu[I] / mu[I].sum()
    nu = mu[Vi] / mu[Vi].sum()
    gamma = np.linalg.solve(A.T, xi) @ P[np.ix_(I, Vi)]
    density = gamma / nu
    lhs = float(np.sum(gamma * density))
    h = np.linalg.solve(A, np.ones(len(I)))           # E_y[tau_V]
    g = np.linalg.solve(A, 2 * h - 1)                 # E_y[tau_V^2]
    PVI = P[np.ix_(Vi, I)]
    mean = float(nu @ PVI @ h)
    second = float(nu @ PVI @ g)
    rhs = math.sqrt(second) / mean if mean > 0 else math.inf
    kac = float(mu[I].sum() / mu[Vi].sum())
    return ErgodicReport(gamma, density, lhs, mean, second, rhs, kac)


def problem_kernel(problem) -> tuple[MarkovKernel, list[int]]:
    """``P = I + L / ||L||`` for a boundary problem, with its boundary list."""
    if not problem.interior:
        raise InvalidBoundary("V = M has no interior")
    return kernel_from_generator(problem.generator), list(problem.boundary)
