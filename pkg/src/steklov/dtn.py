"""Steklov (Dirichlet-to-Neumann) operators of a finite reversible generator.

Everything here is a dense linear-algebra transcription of the boundary
problem ``L F = 0`` off ``V``, ``F = f`` on ``V``:

* the Steklov generator ``S`` is the Schur complement of ``L`` onto ``V``;
* the Dirichlet-Steklov operator ``S_A`` is the same elimination performed
  inside ``A`` with ``F = 0`` on ``M \\ A``;
* the accelerated generator ``L^(r)`` speeds the interior up by ``r`` and
  converges spectrally to ``S`` as ``r`` grows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .config import DEFAULT_R_GRID, DEFAULT_TOL, Tolerances
from .errors import (
    EmptySubset,
    InvalidBoundary,
    InvalidParams,
    InvalidProfile,
    NotIrreducible,
    NotReversible,
    SingularInteriorBlock,
)
from .markov import (
    ReversibleGenerator,
    Spectrum,
    build_generator,
    is_irreducible,
    markov_spectrum,
    subset_indices,
    symmetrized_eigh,
)


@dataclass(frozen=True)
class BoundaryProblem:
    generator: ReversibleGenerator
    boundary: tuple[int, ...]
    interior: tuple[int, ...]
    nu: np.ndarray

    @property
    def v(self) -> int:
        return len(self.boundary)

    @property
    def m(self) -> int:
        return self.generator.n

    @property
    def mu_V(self) -> float:
        return float(self.generator.mu[list(self.boundary)].sum())

    @property
    def boundary_mask(self) -> int:
        mask = 0
        for x in self.boundary:
            mask |= 1 << x
        return mask


def make_problem(gen: ReversibleGenerator, boundary: Iterable[int], *,
                 allow_full: bool = False) -> BoundaryProblem:
    """Attach a boundary set ``V`` to a generator.

    ``V`` must be a nonempty proper subset unless ``allow_full`` is set, in
    which case there is no interior and ``S = L``.
    """
    try:
        V = tuple(int(x) for x in subset_indices(boundary, gen.n))
    except EmptySubset as exc:
        raise InvalidBoundary("boundary set is empty") from exc
    except ValueError as exc:
        raise InvalidBoundary(str(exc)) from exc
    if len(V) == gen.n and not allow_full:
        raise InvalidBoundary("boundary must be a proper subset (use allow_full to take S = L)")
    interior = tuple(x for x in range(gen.n) if x not in set(V))
    nu = gen.mu[list(V)] / gen.mu[list(V)].sum()
    nu.setflags(write=False)
    return BoundaryProblem(gen, V, interior, nu)


def _interior_solve(L_II: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        lu = scipy.linalg.lu_factor(L_II, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularInteriorBlock(str(exc)) from exc
    if np.any(np.diag(lu[0]) == 0):
        raise SingularInteriorBlock("interior block is singular")
    return scipy.linalg.lu_solve(lu, rhs)


def harmonic_extension(problem: BoundaryProblem, f) -> np.ndarray:
    """The unique ``F`` with ``F = f`` on ``V`` and ``L F = 0`` off ``V``."""
    f = np.asarray(f, dtype=float)
    if f.shape[0] != problem.v:
        raise InvalidParams(f"boundary data has length {f.shape[0]}, expected {problem.v}")
    L = problem.generator.matrix
    V, I = list(problem.boundary), list(problem.interior)
    F = np.zeros((problem.m,) + f.shape[1:])
    F[V] = f
    if I:
        F[I] = _interior_solve(L[np.ix_(I, I)], -L[np.ix_(I, V)] @ f)
    return F


def hitting_kernel(problem: BoundaryProblem) -> np.ndarray:
    """Matrix ``H`` with ``H[x, j] = P_x[X_tau = V[j]]`` (harmonic extensions of indicators)."""
    return harmonic_extension(problem, np.eye(problem.v))


def schur_complement(L: np.ndarray, keep: Sequence[int], elim: Sequence[int]) -> np.ndarray:
    keep, elim = list(keep), list(elim)
    S = L[np.ix_(keep, keep)].copy()
    if elim:
        S -= L[np.ix_(keep, elim)] @ _interior_solve(L[np.ix_(elim, elim)], L[np.ix_(elim, keep)])
    return S


@dataclass(frozen=True)
class SteklovOperator:
    matrix: np.ndarray
    nu: np.ndarray

    @property
    def v(self) -> int:
        return self.matrix.shape[0]


def steklov_generator(problem: BoundaryProblem, tol: Tolerances = DEFAULT_TOL) -> SteklovOperator:
    """``S = L_VV - L_VI L_II^{-1} L_IV`` with its invariant law ``nu``.

    The diagonal is recomputed from the off-diagonal entries so that rows
    sum to zero to machine precision; the discarded defect is checked first.
    """
    L = problem.generator.matrix
    S = schur_complement(L, problem.boundary, problem.interior)
    v = problem.v
    scale = max(problem.generator.norm, 1e-300)
    off = S - np.diag(np.diag(S))
    if np.any(off < -tol.offdiag * scale):
        raise NotReversible("Steklov generator has a negative off-diagonal entry")
    defect = np.abs(S.sum(axis=1)).max() if v else 0.0
    if defect > max(tol.row_tol(problem.m), 1e-9) * scale:
        raise SingularInteriorBlock(f"Steklov rows fail to sum to zero (defect {defect:.3e})")
    off = np.clip(off, 0.0, None)
    S = off - np.diag(off.sum(axis=1))
    nu = problem.nu
    F = nu[:, None] * off
    if np.any(np.abs(F - F.T) > tol.rev * np.maximum(np.maximum(F, F.T), 1e-300 * scale)):
        raise NotReversible("Steklov generator is not nu-reversible")
    if problem.generator.irreducible and v > 1:
        pos = [(i, j, 1.0) for i in range(v) for j in range(v) if i != j and off[i, j] > 0]
        if not is_irreducible(v, pos):
            raise NotIrreducible("Steklov generator of an irreducible chain is reducible")
    S.setflags(write=False)
    return SteklovOperator(S, nu)


def steklov_spectrum(problem: BoundaryProblem, tol: Tolerances = DEFAULT_TOL) -> Spectrum:
    """Eigenvalues ``0 = sigma_1 <= ... <= sigma_v`` of ``-S``."""
    op = steklov_generator(problem, tol)
    return markov_spectrum(-op.matrix, op.nu, tol)


# --- Dirichlet-Steklov operators ----------------------------------------------------

def dirichlet_steklov_operator(problem: BoundaryProblem, A: Iterable[int]) -> tuple[np.ndarray, list[int]]:
    """``S_A`` on ``A n V`` (subMarkovian), with the boundary indices it acts on."""
    idx = subset_indices(A, problem.m)
    Vset = set(problem.boundary)
    B = [int(x) for x in idx if x in Vset]
    IA = [int(x) for x in idx if x not in Vset]
    if not B:
        return np.zeros((0, 0)), B
    return schur_complement(problem.generator.matrix, B, IA), B


def dirichlet_steklov_sigma1(problem: BoundaryProblem, A: Iterable[int], *,
                             vectors: bool = False, tol: Tolerances = DEFAULT_TOL):
    """First Dirichlet-Steklov eigenvalue ``sigma_1(A)``; ``inf`` when ``A n V`` is empty.

    With ``vectors=True`` also returns the ground state on ``A n V`` (sign
    normalised to a nonnegative sum) and the boundary indices.
    """
    S_A, B = dirichlet_steklov_operator(problem, A)
    if not B:
        return (math.inf, None, B) if vectors else math.inf
    scale = max(problem.generator.norm, 1e-300)
    off = S_A - np.diag(np.diag(S_A))
    if np.any(off < -tol.offdiag * scale) or np.any(S_A.sum(axis=1) > tol.row_tol(problem.m) * scale):
        raise NotReversible("Dirichlet-Steklov operator is not subMarkovian")
    w = problem.generator.mu[B]
    if vectors:
        vals, vecs = symmetrized_eigh(-S_A, w, vectors=True)
        g = vecs[:, 0]
        if g.sum() < 0:
            g = -g
        return max(float(vals[0]), 0.0), g, B
    return max(float(symmetrized_eigh(-S_A, w)[0]), 0.0)


def dirichlet_steklov_vanishes(problem: BoundaryProblem, A: Iterable[int]) -> bool:
    """Graph criterion for ``sigma_1(A) = 0``.

    ``S_A`` loses mass at ``x`` exactly when some positive-rate path from
    ``x`` leaves ``A`` before coming back to ``A n V``. The ground energy is
    zero iff some closed class of ``S_A`` has no such leak.
    """
    idx = set(int(a) for a in subset_indices(A, problem.m))
    Vset = set(problem.boundary)
    B = sorted(idx & Vset)
    if not B:
        return False
    L = problem.generator.matrix

    def reach_from(x):
        # states of B reachable via A \ V only, and whether A^c is reachable that way
        seen, stack, hits, leaks = {x}, [x], set(), False
        while stack:
            y = stack.pop()
            for z in np.nonzero(L[y] > 0)[0]:
                z = int(z)
                if z == y:
                    continue
                if z not in idx:
                    leaks = True
                elif z in Vset:
                    hits.add(z)
                elif z not in seen:
                    seen.add(z)
                    stack.append(z)
        return hits, leaks

    succ, leak = {}, {}
    for x in B:
        succ[x], leak[x] = reach_from(x)
    for x in B:
        closure = _closure(succ, x)
        closed = all(x in _closure(succ, z) for z in closure)
        if closed and not any(leak[z] for z in closure):
            return True
    return False


def _closure(succ, x):
    seen, stack = {x}, [x]
    while stack:
        y = stack.pop()
        for z in succ[y]:
            if z not in seen:
                seen.add(z)
                stack.append(z)
    return seen


# --- accelerated generators ----------------------------------------------------------

@dataclass(frozen=True)
class AcceleratedGenerator:
    r: float
    phi: np.ndarray | None
    Lr: ReversibleGenerator
    mur: np.ndarray
    Zr: float


def accelerate(problem: BoundaryProblem, r: float, phi=None,
               tol: Tolerances = DEFAULT_TOL) -> AcceleratedGenerator:
    """``L^(r)(x, y) = H(x) L(x, y)`` with ``H = phi (1_V + r 1_{M \\ V})``.

    The invariant law is ``mu / H`` renormalised by ``Z_r = mu(1/H)``; it is
    passed as a hint and re-validated by :func:`build_generator`.
    """
    r = float(r)
    if not (r > 0 and math.isfinite(r)):
        raise InvalidParams(f"speed r must be positive and finite, got {r}")
    gen = problem.generator
    if phi is None:
        prof = np.ones(gen.n)
    else:
        prof = np.asarray(phi, dtype=float)
        if prof.shape != (gen.n,) or not np.all(np.isfinite(prof)):
            raise InvalidProfile(f"profile must be a finite vector of length {gen.n}")
        if np.any(prof < 1.0 - tol.check):
            raise InvalidProfile("profile must be >= 1")
        if np.any(np.abs(prof[list(problem.boundary)] - 1.0) > tol.check):
            raise InvalidProfile("profile must equal 1 on the boundary")
        prof = np.maximum(prof, 1.0)
        prof[list(problem.boundary)] = 1.0
    H = prof.copy()
    H[list(problem.interior)] *= r
    rates = [(i, j, H[i] * q) for i, j, q in gen.rates]
    w = gen.mu / H
    Zr = float(w.sum())
    mur = w / Zr
    Lr = build_generator(rates, gen.labels, mu_hint=mur, irreducible=gen.irreducible, tol=tol)
    return AcceleratedGenerator(r, None if phi is None else prof, Lr, Lr.mu, Zr)


def dirichlet_gap(problem: BoundaryProblem, L: ReversibleGenerator | None = None) -> float:
    """First Dirichlet eigenvalue of the interior ``M \\ V`` (``inf`` if there is none)."""
    gen = problem.generator if L is None else L
    I = list(problem.interior)
    if not I:
        return math.inf
    return float(symmetrized_eigh(-gen.matrix[np.ix_(I, I)], gen.mu[I])[0])


def phi_r(u: float, lam: float, r: float, norm: float) -> float:
    """Lower sandwich ``u / (1 + 4 ||L|| / (lam r) + 2 u / (lam r))``."""
    return u / (1.0 + 4.0 * norm / (lam * r) + 2.0 * u / (lam * r))


@dataclass(frozen=True)
class ConvergenceStudy:
    r_grid: tuple[float, ...]
    k_max: int
    v: int
    sigma: Spectrum
    spectra: tuple[Spectrum, ...]
    dirichlet_gap: float
    norm: float
    tol: Tolerances

    def rows(self):
        """``(r, k, lambda_k, sigma_k, gap)`` with ``gap = sigma_k - lambda_k``."""
        for r, spec in zip(self.r_grid, self.spectra):
            for k in range(1, self.k_max + 1):
                lam, sig = spec.kth(k), self.sigma.kth(k)
                yield r, k, lam, sig, (sig - lam) if math.isfinite(sig) else math.inf

    def upper_violations(self) -> list[tuple[float, int, float]]:
        """``(r, k, excess)`` where ``lambda_k^(r) > sigma_k + tol.upper``."""
        out = []
        for r, spec in zip(self.r_grid, self.spectra):
            for k in range(1, self.v + 1):
                ex = spec.kth(k) - self.sigma.kth(k)
                if ex > self.tol.upper:
                    out.append((r, k, ex))
        return out

    def upper_margin(self) -> float:
        return min(self.sigma.kth(k) + self.tol.upper - spec.kth(k)
                   for spec in self.spectra for k in range(1, self.v + 1))

    def lower_margin(self) -> float:
        """Smallest ``lambda_k^(r) - phi_r(sigma_k)`` over the grid, ``k <= v``."""
        lam = self.dirichlet_gap
        return min(spec.kth(k) - phi_r(self.sigma.kth(k), lam, r, self.norm)
                   for r, spec in zip(self.r_grid, self.spectra) for k in range(1, self.v + 1))

    def final_gap(self) -> float:
        """``max_{k <= v} |lambda_k^(r) - sigma_k|`` at the largest ``r``."""
        spec = self.spectra[-1]
        return max(abs(spec.kth(k) - self.sigma.kth(k)) for k in range(1, self.v + 1))

    def gaps(self) -> list[float]:
        return [max(abs(s.kth(k) - self.sigma.kth(k)) for k in range(1, self.v + 1))
                for s in self.spectra]

    def growth(self) -> list[float]:
        """``lambda_{v+1}^(r) / r`` per grid point (the divergent branch)."""
        return [s.kth(self.v + 1) / r for r, s in zip(self.r_grid, self.spectra)]

    def divergence_margin(self) -> float:
        """Smallest ``lambda_{v+1}^(r) - lam r / 2`` over the grid."""
        return min(s.kth(self.v + 1) - self.dirichlet_gap * r / 2
                   for r, s in zip(self.r_grid, self.spectra))

    def gap_trend_ok(self) -> bool:
        g = self.gaps()
        slack = self.tol.upper
        return all(b <= a + slack for a, b in zip(g, g[1:]))


def convergence_study(problem: BoundaryProblem, r_grid: Sequence[float] = DEFAULT_R_GRID,
                      k_max: int | None = None, tol: Tolerances = DEFAULT_TOL) -> ConvergenceStudy:
    """Spectra of ``-L^(r)`` along ``r_grid`` against the Steklov spectrum."""
    grid = tuple(float(r) for r in r_grid)
    if not grid:
        raise InvalidParams("r_grid must be nonempty")
    if any(r <= 0 for r in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidParams("r_grid must be increasing and positive")
    if not problem.interior:
        raise InvalidBoundary("the convergence study needs a nonempty interior")
    k_max = problem.v if k_max is None else int(k_max)
    if not 1 <= k_max <= problem.m:
        raise InvalidParams(f"k_max must lie in [1, {problem.m}]")
    sigma = steklov_spectrum(problem, tol)
    spectra = []
    for r in grid:
        acc = accelerate(problem, r, tol=tol)
        spectra.append(markov_spectrum(-acc.Lr.matrix, acc.mur, tol))
    return ConvergenceStudy(grid, k_max, problem.v, sigma, tuple(spectra),
                            dirichlet_gap(problem), problem.generator.norm, tol)
