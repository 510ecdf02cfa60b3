"""Finite reversible Markov generators.

A generator ``L`` on ``n`` states is stored as sparse off-diagonal rate
triplets; the diagonal is implied by ``L(x, x) = -sum_{y != x} L(x, y)``.
Dense matrices are only built when a solve needs them.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .config import DEFAULT_TOL, Tolerances
from .errors import (
    EigensolverFailure,
    EmptySubset,
    FullSet,
    InvalidMeasure,
    InvalidRates,
    NegativeRate,
    NotIrreducible,
    NotReversible,
    SingularSystem,
)


@dataclass(frozen=True)
class Spectrum:
    """Nondecreasing eigenvalues, repeated with multiplicity; may hold ``inf``."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.sort(np.asarray(self.values, dtype=float))
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]

    def __iter__(self):
        return iter(self.values)

    def kth(self, k: int) -> float:
        """1-based access; ``inf`` past the end (``inf of the empty set``)."""
        if k < 1:
            raise IndexError("spectra are indexed from 1")
        return float(self.values[k - 1]) if k <= len(self.values) else float("inf")

    def tolist(self) -> list[float]:
        return [float(v) for v in self.values]


@dataclass(frozen=True)
class ReversibleGenerator:
    n: int
    labels: tuple[str, ...]
    rates: tuple[tuple[int, int, float], ...]
    mu: np.ndarray = field(repr=False)

    @cached_property
    def matrix(self) -> np.ndarray:
        L = np.zeros((self.n, self.n))
        for i, j, r in self.rates:
            L[i, j] += r
        np.fill_diagonal(L, -L.sum(axis=1))
        L.setflags(write=False)
        return L

    @cached_property
    def norm(self) -> float:
        return sup_norm(self)

    @cached_property
    def irreducible(self) -> bool:
        return is_irreducible(self.n, self.rates)

    def scaled(self, c: float) -> "ReversibleGenerator":
        return build_generator([(i, j, c * r) for i, j, r in self.rates],
                               self.labels, mu_hint=self.mu,
                               irreducible=self.irreducible)


def _merge_triplets(triplets, n):
    merged: dict[tuple[int, int], float] = defaultdict(float)
    for t in triplets:
        if len(t) != 3:
            raise InvalidRates(f"rate entries must be (i, j, rate), got {t!r}")
        i, j, r = t
        if int(i) != i or int(j) != j:
            raise InvalidRates(f"non-integer index in {t!r}")
        i, j, r = int(i), int(j), float(r)
        if not (0 <= i < n and 0 <= j < n):
            raise InvalidRates(f"index out of range in {t!r} for {n} states")
        if i == j:
            raise InvalidRates(f"self-loop rate {t!r}; the diagonal is implicit")
        if not np.isfinite(r):
            raise InvalidRates(f"non-finite rate in {t!r}")
        if r < 0:
            raise NegativeRate(f"negative rate {r} on ({i}, {j})")
        merged[(i, j)] += r
    return tuple((i, j, r) for (i, j), r in sorted(merged.items()) if r > 0)


def _reachable(adj: list[list[int]], start: int) -> set[int]:
    seen = {start}
    queue = deque([start])
    while queue:
        x = queue.popleft()
        for y in adj[x]:
            if y not in seen:
                seen.add(y)
                queue.append(y)
    return seen


def is_irreducible(n: int, rates: Iterable[tuple[int, int, float]]) -> bool:
    """Strong connectivity of the positive-rate digraph (forward + backward search)."""
    fwd: list[list[int]] = [[] for _ in range(n)]
    bwd: list[list[int]] = [[] for _ in range(n)]
    for i, j, r in rates:
        if r > 0:
            fwd[i].append(j)
            bwd[j].append(i)
    return len(_reachable(fwd, 0)) == n and len(_reachable(bwd, 0)) == n


def build_generator(
    triplets: Iterable[Sequence[float]],
    labels: Sequence[str] | None = None,
    mu_hint: Sequence[float] | None = None,
    *,
    n: int | None = None,
    irreducible: bool = True,
    tol: Tolerances = DEFAULT_TOL,
) -> ReversibleGenerator:
    """Validate rate triplets and return an immutable reversible generator.

    ``n`` defaults to ``len(labels)`` (or the largest index + 1). With
    ``irreducible=False`` the strong-connectivity check is skipped, but then
    ``mu_hint`` is mandatory because the invariant measure is not unique.
    """
    triplets = list(triplets)
    if n is None:
        if labels is not None:
            n = len(labels)
        else:
            n = 1 + max((max(int(t[0]), int(t[1])) for t in triplets), default=-1)
    if n < 2:
        raise InvalidRates("a generator needs at least 2 states")
    if labels is None:
        labels = [str(i) for i in range(n)]
    if len(labels) != n:
        raise InvalidRates(f"{len(labels)} labels for {n} states")
    rates = _merge_triplets(triplets, n)

    if irreducible and not is_irreducible(n, rates):
        raise NotIrreducible("the positive-rate graph is not strongly connected")

    gen = ReversibleGenerator(n, tuple(str(s) for s in labels), rates, np.zeros(n))
    L = gen.matrix
    if np.max(np.abs(L.sum(axis=1))) > tol.row_tol(n) * max(1.0, np.max(np.abs(L))):
        raise InvalidRates("rows do not sum to zero")

    if mu_hint is None:
        if not irreducible:
            raise InvalidMeasure("a reducible generator needs an explicit measure")
        mu = invariant_measure(L, tol=tol)
    else:
        mu = _validate_measure(L, mu_hint, tol)
    _check_detailed_balance(L, mu, tol)
    mu = np.array(mu, dtype=float)
    mu.setflags(write=False)
    object.__setattr__(gen, "mu", mu)
    return gen


def _validate_measure(L: np.ndarray, mu_hint, tol: Tolerances) -> np.ndarray:
    mu = np.asarray(mu_hint, dtype=float)
    n = L.shape[0]
    if mu.shape != (n,):
        raise InvalidMeasure(f"measure has shape {mu.shape}, expected ({n},)")
    if np.any(~np.isfinite(mu)) or np.any(mu <= 0):
        raise InvalidMeasure("measure entries must be positive")
    if abs(mu.sum() - 1.0) > tol.prob * n:
        raise InvalidMeasure(f"measure sums to {mu.sum()!r}, not 1")
    flux = np.abs(mu[:, None] * L).sum(axis=0)
    resid = np.abs(mu @ L)
    if np.any(resid > tol.rev * np.maximum(flux, 1e-300)):
        raise InvalidMeasure("measure is not invariant for the generator")
    return mu


def _check_detailed_balance(L: np.ndarray, mu: np.ndarray, tol: Tolerances) -> None:
    F = mu[:, None] * L
    np.fill_diagonal(F, 0.0)
    defect = np.abs(F - F.T)
    scale = np.maximum(F, F.T)
    bad = defect > tol.rev * scale
    if np.any(bad):
        i, j = map(int, np.argwhere(bad)[0])
        raise NotReversible(
            f"detailed balance fails on ({i}, {j}): {F[i, j]!r} vs {F[j, i]!r}")


def invariant_measure(L, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Unique probability ``mu`` with ``mu L = 0``, from the null space of ``L^T``."""
    L = L.matrix if isinstance(L, ReversibleGenerator) else np.asarray(L, dtype=float)
    n = L.shape[0]
    try:
        _, s, vh = np.linalg.svd(L.T)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise SingularSystem(str(exc)) from exc
    scale = max(s[0], 1e-300)
    if s[-1] > tol.null * scale:
        raise SingularSystem("generator has no null vector")
    if n > 1 and s[-2] <= tol.null * scale:
        raise SingularSystem("null space of the generator is not one-dimensional")
    v = vh[-1]
    v = v / v.sum()
    if np.any(v <= 0):
        raise SingularSystem("null vector is not a positive measure")
    # one step of refinement: solve with the normalisation replacing one equation
    A = L.T.copy()
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        w = np.linalg.solve(A, b)
        if np.all(w > 0) and np.max(np.abs(w - v)) < 1e-6:
            v = w
    except np.linalg.LinAlgError:
        pass
    return v / v.sum()


def sup_norm(L) -> float:
    """Largest absolute diagonal entry of the generator."""
    M = L.matrix if isinstance(L, ReversibleGenerator) else np.asarray(L)
    return float(np.max(np.abs(np.diag(M))))


def symmetrized_eigh(neg_gen: np.ndarray, weights: np.ndarray, vectors: bool = False):
    """Eigen-decomposition of ``neg_gen`` self-adjoint in ``L^2(weights)``.

    Works on ``D^{1/2} A D^{-1/2}`` which is symmetric for a reversible
    matrix. Returned eigenvectors are mapped back to the original basis.
    """
    w = np.sqrt(np.asarray(weights, dtype=float))
    B = w[:, None] * np.asarray(neg_gen, dtype=float) / w[None, :]
    B = 0.5 * (B + B.T)
    try:
        if vectors:
            vals, vecs = np.linalg.eigh(B)
            return vals, vecs / w[:, None]
        return np.linalg.eigvalsh(B)
    except np.linalg.LinAlgError as exc:
        raise EigensolverFailure(str(exc)) from exc


def markov_spectrum(neg_gen: np.ndarray, weights: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> Spectrum:
    """Spectrum of ``-G`` for a reversible Markov generator ``G``; the bottom value is 0."""
    vals = symmetrized_eigh(neg_gen, weights)
    scale = max(float(np.max(np.abs(np.diag(neg_gen)))), 1e-300)
    if abs(vals[0]) > tol.zero * scale:
        raise EigensolverFailure(f"lowest eigenvalue {vals[0]!r} is not zero")
    vals = vals.copy()
    vals[0] = 0.0
    return Spectrum(vals)


def generator_spectrum(gen: ReversibleGenerator, tol: Tolerances = DEFAULT_TOL) -> Spectrum:
    """Eigenvalues of ``-L`` via the mu-symmetrisation."""
    return markov_spectrum(-gen.matrix, gen.mu, tol)


def subset_indices(A: Iterable[int], n: int) -> np.ndarray:
    idx = sorted({int(a) for a in A})
    if not idx:
        raise EmptySubset("subset is empty")
    if idx[0] < 0 or idx[-1] >= n:
        raise InvalidRates(f"subset index out of range for {n} states: {idx}")
    return np.array(idx, dtype=int)


def dirichlet_eigenvalue(gen: ReversibleGenerator, A: Iterable[int]) -> float:
    """Smallest eigenvalue of ``-L`` restricted to ``A x A`` (killed outside ``A``)."""
    idx = subset_indices(A, gen.n)
    if len(idx) == gen.n:
        raise FullSet("the Dirichlet eigenvalue needs a proper subset")
    return _restricted_ground(gen.matrix, gen.mu, idx)


def _restricted_ground(L: np.ndarray, mu: np.ndarray, idx: np.ndarray) -> float:
    sub = -L[np.ix_(idx, idx)]
    return float(symmetrized_eigh(sub, mu[idx])[0])


def carre_du_champ(gen: ReversibleGenerator, F) -> np.ndarray:
    """``Gamma[F] = L[F^2] - 2 F L[F]``, pointwise ``sum_y L(x, y) (F(y) - F(x))^2``."""
    F = np.asarray(F, dtype=float)
    L = gen.matrix
    return L @ (F * F) - 2.0 * F * (L @ F)


def dirichlet_form(matrix, weights, F, G=None) -> float:
    """``E(F, G) = -<F, L G>_w = 1/2 sum w(x) L(x, y) (F(y) - F(x)) (G(y) - G(x))``."""
    L = np.asarray(matrix, dtype=float)
    w = np.asarray(weights, dtype=float)
    F = np.asarray(F, dtype=float)
    G = F if G is None else np.asarray(G, dtype=float)
    off = L.copy()
    np.fill_diagonal(off, 0.0)
    dF = F[None, :] - F[:, None]
    dG = G[None, :] - G[:, None]
    return 0.5 * float(np.sum(w[:, None] * off * dF * dG))
