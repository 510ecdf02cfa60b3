"""Isoperimetric ratios and min-max connectivity sequences.

Subsets of the state space are bitmasks (bit ``x`` set means state ``x``
belongs to the subset), so exact computations are limited to 63 states and
in practice to a few dozen.

The five sequences share one shape,

    c_k = min over k disjoint nonempty A_1..A_k of max_l w(A_l),

for a per-subset weight ``w``: ``eta`` (h_k), ``eta'`` (h'_k),
``sigma_1`` (kappa_k), ``rho rho'`` (iota_k) and ``lambda_1`` (Lambda_k).
In exact mode these are solved by a dynamic program over subsets of ``M``
in ``O(k 3^m)`` rather than by listing label assignments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, NamedTuple

import numpy as np

from .config import DEFAULT_BUDGET, MAX_EXACT_STATES, PROFILE_BUDGET
from .dtn import BoundaryProblem, dirichlet_steklov_sigma1, harmonic_extension, steklov_generator
from .errors import BudgetExceeded, EmptySubset, InvalidParams
from .markov import _restricted_ground, subset_indices, symmetrized_eigh

QUANTITIES = ("h", "h_prime", "kappa", "iota", "Lambda")
INF = math.inf


@dataclass(frozen=True)
class SubsetTuple:
    """Disjoint nonempty parts, each sorted, ordered by least element."""

    parts: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        parts = tuple(sorted(tuple(sorted(int(x) for x in p)) for p in self.parts))
        seen: set[int] = set()
        for p in parts:
            if not p:
                raise EmptySubset("tuple parts must be nonempty")
            if seen.intersection(p):
                raise InvalidParams("tuple parts must be disjoint")
            seen.update(p)
        object.__setattr__(self, "parts", parts)

    @classmethod
    def from_masks(cls, masks: Iterable[int]) -> "SubsetTuple":
        return cls(tuple(mask_to_list(m) for m in masks))

    def tolist(self) -> list[list[int]]:
        return [list(p) for p in self.parts]

    def __len__(self) -> int:
        return len(self.parts)


def mask_of(A: Iterable[int]) -> int:
    mask = 0
    for x in A:
        mask |= 1 << int(x)
    return mask


def mask_to_list(mask: int) -> list[int]:
    out, x = [], 0
    while mask:
        if mask & 1:
            out.append(x)
        mask >>= 1
        x += 1
    return out


def _flux(problem: BoundaryProblem) -> np.ndarray:
    gen = problem.generator
    F = gen.mu[:, None] * gen.matrix
    np.fill_diagonal(F, 0.0)
    return F


def boundary_measure(problem: BoundaryProblem, A: Iterable[int]) -> float:
    """``sum_{x in A, y not in A} mu(x) L(x, y)``."""
    idx = subset_indices(A, problem.m)
    out = np.setdiff1d(np.arange(problem.m), idx)
    return float(_flux(problem)[np.ix_(idx, out)].sum())


def ratios(problem: BoundaryProblem, A: Iterable[int]) -> tuple[float, float]:
    """``(eta(A), eta'(A))``; ``eta'`` is ``inf`` when ``A`` misses ``V``."""
    idx = subset_indices(A, problem.m)
    b = boundary_measure(problem, idx)
    mu = problem.generator.mu
    muA = float(mu[idx].sum())
    muAV = float(sum(mu[x] for x in idx if x in set(problem.boundary)))
    return b / muA, (b / muAV if muAV > 0 else INF)


class SubsetProfile(NamedTuple):
    rho: float
    rho_prime: float
    rho_witness: tuple[int, ...]
    rho_prime_witness: tuple[int, ...]


def profile(problem: BoundaryProblem, A: Iterable[int], budget: int = PROFILE_BUDGET) -> SubsetProfile:
    """``rho(A) = min_{B <= A} eta(B)`` and ``rho'(A)`` by exhaustive search."""
    idx = [int(x) for x in subset_indices(A, problem.m)]
    if len(idx) > budget:
        raise BudgetExceeded(f"|A| = {len(idx)} exceeds the exhaustive budget {budget}")
    best = [INF, INF]
    wit: list[tuple[int, ...]] = [(), ()]
    for sub in range(1, 1 << len(idx)):
        B = tuple(idx[j] for j in range(len(idx)) if sub >> j & 1)
        e, ep = ratios(problem, B)
        if e < best[0]:
            best[0], wit[0] = e, B
        if ep < best[1] or (not wit[1] and ep == INF):
            best[1], wit[1] = ep, B
    return SubsetProfile(best[0], best[1], wit[0], wit[1])


# --- per-subset tables --------------------------------------------------------------

@dataclass
class SubsetTable:
    """Per-mask quantities for every nonempty subset (index = mask, entry 0 unused)."""

    m: int
    mu: np.ndarray
    mu_V: np.ndarray
    boundary: np.ndarray
    eta: np.ndarray
    eta_prime: np.ndarray
    rho: np.ndarray
    rho_prime: np.ndarray
    rho_arg: np.ndarray
    rho_prime_arg: np.ndarray
    sigma1: np.ndarray
    lambda1: np.ndarray

    def weight(self, name: str) -> np.ndarray:
        return {
            "h": self.eta,
            "h_prime": self.eta_prime,
            "kappa": self.sigma1,
            "iota": _product(self.rho, self.rho_prime),
            "Lambda": self.lambda1,
        }[name]


def _product(a, b):
    with np.errstate(invalid="ignore"):
        out = a * b
    # 0 * inf: rho = 0 only for A = M, where rho' is finite; guard anyway
    out[np.isnan(out)] = 0.0
    return out


def _bits(m: int) -> np.ndarray:
    masks = np.arange(1 << m, dtype=np.int64)
    return ((masks[:, None] >> np.arange(m)) & 1).astype(float)


def _subset_min(values: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Min over nonempty submasks, with the arg-submask."""
    best = values.copy()
    best[0] = INF
    arg = np.arange(1 << m, dtype=np.int64)
    masks = np.arange(1 << m, dtype=np.int64)
    for i in range(m):
        has = masks[(masks >> i) & 1 == 1]
        other = has ^ (1 << i)
        better = best[other] < best[has]
        tgt = has[better]
        best[tgt] = best[other[better]]
        arg[tgt] = arg[other[better]]
    return best, arg


def subset_table(problem: BoundaryProblem, *, spectral: bool = True) -> SubsetTable:
    m = problem.m
    gen = problem.generator
    bits = _bits(m)
    F = _flux(problem)
    mu = bits @ gen.mu
    inV = np.zeros(m)
    inV[list(problem.boundary)] = 1.0
    mu_V = bits @ (gen.mu * inV)
    bd = ((bits @ F) * (1.0 - bits)).sum(axis=1)
    bd[-1] = 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        eta = np.where(mu > 0, bd / np.where(mu > 0, mu, 1.0), INF)
        eta_p = np.where(mu_V > 0, bd / np.where(mu_V > 0, mu_V, 1.0), INF)
    eta[0] = eta_p[0] = INF
    rho, rho_arg = _subset_min(eta, m)
    rho_p, rho_p_arg = _subset_min(eta_p, m)
    sigma1 = np.full(1 << m, INF)
    lambda1 = np.full(1 << m, INF)
    if spectral:
        full = (1 << m) - 1
        L, w = gen.matrix, gen.mu
        for mask in range(1, 1 << m):
            idx = np.array(mask_to_list(mask))
            lambda1[mask] = 0.0 if mask == full else max(_restricted_ground(L, w, idx), 0.0)
            if mu_V[mask] > 0:
                sigma1[mask] = 0.0 if mask == full else dirichlet_steklov_sigma1(problem, idx)
    return SubsetTable(m, mu, mu_V, bd, eta, eta_p, rho, rho_p, rho_arg, rho_p_arg, sigma1, lambda1)


# --- min-max dynamic program --------------------------------------------------------

@lru_cache(maxsize=32)
def _low_submasks(m: int) -> tuple[np.ndarray, ...]:
    """For each mask ``U``, the submasks of ``U`` that contain its lowest bit."""
    out = [np.zeros(0, dtype=np.int64)]
    for U in range(1, 1 << m):
        low = U & -U
        rest = U ^ low
        pos = mask_to_list(rest)
        c = len(pos)
        combos = np.arange(1 << c, dtype=np.int64)
        sub = np.zeros(1 << c, dtype=np.int64)
        for j, p in enumerate(pos):
            sub |= ((combos >> j) & 1) << p
        out.append(sub | low)
    return tuple(out)


def minmax_partition(weights: np.ndarray, m: int, k_max: int):
    """``c_k`` for ``k = 1..k_max`` for each weight row, with witnesses.

    ``weights`` has shape ``(Q, 2^m)``. With ``g_k[U]`` the best value using
    parts inside ``U``, either the lowest state of ``U`` is unused or it lies
    in a part ``A``:

        g_k[U] = min(g_k[U - low], min_{low in A <= U} max(w[A], g_{k-1}[U - A])).

    Returns ``values`` of shape ``(Q, k_max)`` and ``witnesses[q][k-1]``, a
    list of masks.
    """
    W = np.atleast_2d(np.asarray(weights, dtype=float))
    Q = W.shape[0]
    n = 1 << m
    subs = _low_submasks(m)
    rows = np.arange(Q)
    g_prev = np.zeros((Q, n))
    tables = []
    for _k in range(k_max):
        g = np.full((Q, n), INF)
        choice = np.zeros((Q, n), dtype=np.int64)
        for U in range(1, n):
            S = subs[U]
            cand = np.maximum(W[:, S], g_prev[:, U ^ S])
            j = np.argmin(cand, axis=1)
            best = cand[rows, j]
            skip = g[:, U ^ (U & -U)]
            use = best < skip
            g[:, U] = np.where(use, best, skip)
            choice[:, U] = np.where(use, S[j], 0)
        tables.append(choice)
        g_prev = g
        values_k = g[:, n - 1]
        tables[-1] = (choice, values_k)
    values = np.stack([t[1] for t in tables], axis=1) if tables else np.zeros((Q, 0))
    witnesses = [[_trace(tables, q, k, n - 1) for k in range(1, k_max + 1)] for q in range(Q)]
    return values, witnesses


def _trace(tables, q, k, U):
    parts = []
    while k > 0 and U:
        A = int(tables[k - 1][0][q, U])
        if A == 0:
            U ^= U & -U
            continue
        parts.append(A)
        U ^= A
        k -= 1
    return parts if k == 0 else None


# --- connectivity spectra -----------------------------------------------------------

@dataclass
class IsoperimetricProfile:
    """Sequences ``h, h_prime, kappa, iota, Lambda`` for ``k = 1..k_max``.

    ``table`` holds the per-subset values in exact mode; in heuristic mode
    it is ``None`` and ``candidates`` maps the masks that were tried to
    their weights. Heuristic values are attained by explicit tuples, so
    they are upper bounds on the exact min-max values.
    """

    m: int
    k_max: int
    exact: bool
    sequences: dict[str, list[float]]
    witnesses: dict[str, list[SubsetTuple | None]]
    table: SubsetTable | None = None
    candidates: dict[int, dict[str, float]] = field(default_factory=dict)

    @property
    def h(self) -> list[float]:
        return self.sequences["h"]

    @property
    def h_prime(self) -> list[float]:
        return self.sequences["h_prime"]

    @property
    def kappa(self) -> list[float]:
        return self.sequences["kappa"]

    @property
    def iota(self) -> list[float]:
        return self.sequences["iota"]

    @property
    def Lambda(self) -> list[float]:
        return self.sequences["Lambda"]

    def value(self, name: str, k: int) -> float:
        return self.sequences[name][k - 1]

    def to_dict(self) -> dict:
        return {
            "exact": self.exact,
            "upper_bound": not self.exact,  # heuristic values are attained, hence upper bounds
            "k_max": self.k_max,
            **{name: list(vals) for name, vals in self.sequences.items()},
            "witnesses": {name: [w.tolist() if w is not None else None for w in ws]
                          for name, ws in self.witnesses.items()},
        }


def exact_cost(m: int, k_max: int) -> int:
    """Number of label assignments ``(k_max + 1)^m`` bounding the exact search."""
    return (k_max + 1) ** m


def connectivity_spectra(problem: BoundaryProblem, k_max: int, mode: str = "exact",
                         budget: int = DEFAULT_BUDGET) -> IsoperimetricProfile:
    """Min-max sequences for ``k = 1..k_max``.

    Exact mode needs ``(k_max + 1)^m <= budget`` and ``m <= 63``; otherwise
    :class:`BudgetExceeded` is raised with ``suggestion = "heuristic"``.
    """
    m = problem.m
    if not 1 <= k_max <= m:
        raise InvalidParams(f"k_max must lie in [1, {m}]")
    if mode == "heuristic":
        return _heuristic(problem, k_max)
    if mode != "exact":
        raise InvalidParams(f"unknown mode {mode!r}")
    if m > MAX_EXACT_STATES or exact_cost(m, k_max) > budget:
        raise BudgetExceeded(
            f"exact search over {m} states with k_max={k_max} needs {exact_cost(m, k_max):.3g} "
            f"label assignments (budget {budget:.3g}); try mode='heuristic'")
    table = subset_table(problem)
    W = np.stack([table.weight(q) for q in QUANTITIES])
    values, wits = minmax_partition(W, m, k_max)
    seq = {q: [float(v) for v in values[i]] for i, q in enumerate(QUANTITIES)}
    # an infinite value is attained by every tuple; report the first singletons
    witnesses = {q: [SubsetTuple.from_masks(w if w is not None else [1 << x for x in range(k)])
                     for k, w in enumerate(wits[i], start=1)]
                 for i, q in enumerate(QUANTITIES)}
    # kappa over all tuples equals kappa over tuples meeting V in every part
    restricted = np.where(table.mu_V > 0, table.sigma1, INF)
    kv, _ = minmax_partition(restricted[None, :], m, k_max)
    if not np.array_equal(kv[0], values[QUANTITIES.index("kappa")]):
        raise AssertionError("kappa over A_k differs from kappa over A_k(V)")
    return IsoperimetricProfile(m, k_max, True, seq, witnesses, table)


def _sweep_masks(vec: np.ndarray) -> set[int]:
    out = set()
    order = np.argsort(vec)
    acc = 0
    for x in order[:-1]:
        acc |= 1 << int(x)
        out.add(acc)
    acc = 0
    for x in order[::-1][:-1]:
        acc |= 1 << int(x)
        out.add(acc)
    return out


def candidate_masks(problem: BoundaryProblem, k_max: int) -> set[int]:
    """Sweep-cut level sets of low eigenvectors of ``L`` and of extended ``S`` modes."""
    m = problem.m
    gen = problem.generator
    full = (1 << m) - 1
    cands = {full} | {1 << x for x in range(m)}
    n_vec = min(m, k_max + 1)
    _, vecs = symmetrized_eigh(-gen.matrix, gen.mu, vectors=True)
    for j in range(1, n_vec):
        cands |= _sweep_masks(vecs[:, j])
    op = steklov_generator(problem)
    if problem.v > 1:
        _, svecs = symmetrized_eigh(-op.matrix, op.nu, vectors=True)
        F = harmonic_extension(problem, svecs)
        for j in range(1, min(problem.v, k_max + 1)):
            cands |= _sweep_masks(F[:, j])
    cands |= {full ^ c for c in list(cands) if c != full}
    cands.discard(0)
    return cands


def _heuristic(problem: BoundaryProblem, k_max: int) -> IsoperimetricProfile:
    m = problem.m
    full = (1 << m) - 1
    cands = sorted(candidate_masks(problem, k_max))
    Vmask = problem.boundary_mask
    gen = problem.generator
    w: dict[int, dict[str, float]] = {}
    for c in cands:
        idx = mask_to_list(c)
        eta, eta_p = ratios(problem, idx)
        sig = 0.0 if c == full else dirichlet_steklov_sigma1(problem, idx)
        lam = 0.0 if c == full else max(_restricted_ground(gen.matrix, gen.mu, np.array(idx)), 0.0)
        w[c] = {"h": eta, "h_prime": eta_p, "kappa": sig if c & Vmask else INF, "Lambda": lam,
                "_eta": eta, "_eta_p": eta_p}
    for c in cands:
        # rho over the candidate submasks: an overestimate of the true minimum
        if bin(c).count("1") <= 12:
            prof = profile(problem, mask_to_list(c))
            rho, rho_p = prof.rho, prof.rho_prime
        else:
            subs = [d for d in cands if d & c == d]
            rho = min(w[d]["_eta"] for d in subs)
            rho_p = min(w[d]["_eta_p"] for d in subs)
        w[c]["iota"] = rho * rho_p if not (rho == 0 and math.isinf(rho_p)) else 0.0
    seq: dict[str, list[float]] = {q: [] for q in QUANTITIES}
    wit: dict[str, list[SubsetTuple | None]] = {q: [] for q in QUANTITIES}
    for q in QUANTITIES:
        ranked = sorted(cands, key=lambda c: (w[c][q], bin(c).count("1")))
        for k in range(1, k_max + 1):
            best, best_parts = INF, None
            for seed in ranked:
                parts, used = [seed], seed
                for c in ranked:
                    if len(parts) == k:
                        break
                    if c & used == 0:
                        parts.append(c)
                        used |= c
                if len(parts) < k:
                    continue
                val = max(w[c][q] for c in parts)
                if val < best:
                    best, best_parts = val, parts
            if best_parts is None:
                best_parts = [1 << x for x in range(k)]
                best = max(w[c][q] for c in best_parts)
            seq[q].append(float(best))
            wit[q].append(SubsetTuple.from_masks(best_parts))
    for c in w:
        w[c].pop("_eta")
        w[c].pop("_eta_p")
    return IsoperimetricProfile(m, k_max, False, seq, wit, None, w)
