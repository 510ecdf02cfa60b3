"""Simulation of the jump process and exact hitting functionals.

Exact quantities (hitting laws, mean hitting times, Laplace transforms of
``tau``) come from linear solves and serve as oracles for the simulator.

Randomness is keyed by ``(seed, chunk)`` with a fixed chunk of 4096 paths,
so a given seed reproduces the same paths however chunks are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .config import DEFAULT_TOL, Tolerances
from .dtn import BoundaryProblem, accelerate, dirichlet_gap, hitting_kernel, make_problem
from .errors import ChiOutOfRange, InvalidParams
from .markov import ReversibleGenerator

DEFAULT_CHI = math.exp(-2.0 / math.log(2.0))
CHUNK = 4096


@dataclass(frozen=True)
class SimulationConfig:
    seed: int = 42
    n_paths: int = 100_000
    horizon: int = 64
    chi: float = DEFAULT_CHI

    def __post_init__(self):
        if not 0.0 < self.chi < 1.0:
            raise ChiOutOfRange(f"chi must lie in (0, 1), got {self.chi}")
        if self.n_paths < 1:
            raise InvalidParams("n_paths must be >= 1")
        if self.horizon < 1:
            raise InvalidParams("horizon must be >= 1")


@dataclass(frozen=True)
class PathSample:
    states: np.ndarray      # visited states, length jumps + 1
    holds: np.ndarray       # holding time at states[j], length jumps
    tau: float              # hitting time of V (inf if not reached)
    horizon_exceeded: bool

    @property
    def jump_times(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.holds)])


@dataclass
class PathBatch:
    """``n`` paths of ``horizon`` jumps each.

    ``states[:, j]`` is the state after ``j`` jumps and ``holds[:, j]`` the
    time spent there, so the observed window ends at the last jump.
    """

    states: np.ndarray
    holds: np.ndarray
    boundary: tuple[int, ...]
    tau: np.ndarray = field(init=False)
    hit_state: np.ndarray = field(init=False)
    hit_index: np.ndarray = field(init=False)
    horizon_exceeded: np.ndarray = field(init=False)

    def __post_init__(self):
        inV = np.isin(self.states, self.boundary)
        hit = inV.any(axis=1)
        first = np.where(hit, inV.argmax(axis=1), -1)
        times = np.concatenate([np.zeros((len(self.states), 1)), np.cumsum(self.holds, axis=1)], axis=1)
        rows = np.arange(len(self.states))
        self.hit_index = first
        self.tau = np.where(hit, times[rows, np.maximum(first, 0)], np.inf)
        self.hit_state = np.where(hit, self.states[rows, np.maximum(first, 0)], -1)
        self.horizon_exceeded = ~hit

    def __len__(self) -> int:
        return len(self.states)

    def __getitem__(self, i: int) -> PathSample:
        return PathSample(self.states[i], self.holds[i], float(self.tau[i]),
                          bool(self.horizon_exceeded[i]))


def _jump_tables(gen: ReversibleGenerator):
    L = gen.matrix
    q = -np.diag(L).copy()
    J = np.where(q[:, None] > 0, L / np.where(q > 0, q, 1.0)[:, None], 0.0)
    np.fill_diagonal(J, 0.0)
    cum = np.cumsum(J, axis=1)
    cum[:, -1] = 1.0
    return q, cum


def _simulate(gen: ReversibleGenerator, seed: int, n_paths: int, horizon: int, x0) -> tuple[np.ndarray, np.ndarray]:
    q, cum = _jump_tables(gen)
    states = np.empty((n_paths, horizon + 1), dtype=np.int64)
    holds = np.empty((n_paths, horizon))
    for c, start in enumerate(range(0, n_paths, CHUNK)):
        stop = min(start + CHUNK, n_paths)
        rng = np.random.default_rng([seed, c])
        size = stop - start
        if isinstance(x0, str):
            s = rng.choice(gen.n, size=size, p=gen.mu)
        else:
            s = np.full(size, int(x0), dtype=np.int64)
        states[start:stop, 0] = s
        for j in range(horizon):
            holds[start:stop, j] = rng.exponential(size=size) / q[s]
            u = rng.random(size)
            s = (u[:, None] >= cum[s]).sum(axis=1)
            states[start:stop, j + 1] = s
    return states, holds


def simulate_paths(problem: BoundaryProblem, config: SimulationConfig, x0=0,
                   generator: ReversibleGenerator | None = None) -> PathBatch:
    """Continuous-time jump paths from ``x0`` (a state or ``"mu"`` for stationary starts).

    Holding at ``x`` is exponential with rate ``|L(x, x)|``; jumps go to ``y``
    with probability ``L(x, y) / |L(x, x)|``.
    """
    gen = problem.generator if generator is None else generator
    if not isinstance(x0, str):
        if not 0 <= int(x0) < gen.n:
            raise InvalidParams(f"start state {x0} out of range")
    elif x0 != "mu":
        raise InvalidParams("x0 must be a state index or 'mu'")
    states, holds = _simulate(gen, config.seed, config.n_paths, config.horizon, x0)
    return PathBatch(states, holds, tuple(problem.boundary))


# --- trace process -------------------------------------------------------------------

@dataclass(frozen=True)
class TracePath:
    states: tuple[int, ...]
    durations: tuple[float, ...]


def trace_process(batch: PathBatch, V: Sequence[int]) -> list[TracePath]:
    """Erase the time spent off ``V``; consecutive sojourns at one state merge."""
    Vs = set(int(x) for x in V)
    out = []
    for states, holds in zip(batch.states, batch.holds):
        st: list[int] = []
        du: list[float] = []
        for x, t in zip(states[:-1], holds):
            x = int(x)
            if x not in Vs:
                continue
            if st and st[-1] == x:
                du[-1] += float(t)
            else:
                st.append(x)
                du.append(float(t))
        last = int(states[-1])
        if last in Vs and (not st or st[-1] != last):
            st.append(last)
            du.append(0.0)
        out.append(TracePath(tuple(st), tuple(du)))
    return out


@dataclass(frozen=True)
class RateEstimate:
    rates: np.ndarray   # estimated generator on V
    se: np.ndarray      # standard errors, same shape
    time: np.ndarray    # total trace time per boundary state
    counts: np.ndarray  # transition counts


def trace_rates(batch: PathBatch, V: Sequence[int]) -> RateEstimate:
    """Maximum-likelihood generator of the trace process, ``N_xz / T_x``.

    Standard errors are ``sqrt(N_xz) / T_x``; the diagonal uses the total
    count out of ``x``.
    """
    V = [int(x) for x in V]
    v = len(V)
    S, H = batch.states, batch.holds
    inV = np.isin(S, V)
    T = np.array([H[(S[:, :-1] == x)].sum() for x in V])
    idx = np.where(inV, np.arange(S.shape[1])[None, :], -1)
    last = np.maximum.accumulate(idx, axis=1)
    prev = np.concatenate([np.full((len(S), 1), -1), last[:, :-1]], axis=1)
    rows = np.arange(len(S))[:, None]
    prev_state = np.where(prev >= 0, S[rows, np.maximum(prev, 0)], -1)
    jump = inV & (prev_state >= 0) & (prev_state != S)
    N = np.zeros((v, v))
    lut = np.full(int(max(S.max(), max(V))) + 1, -1)
    lut[V] = np.arange(v)
    a, b = lut[prev_state[jump]], lut[S[jump]]
    np.add.at(N, (a, b), 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        R = N / T[:, None]
        se = np.sqrt(N) / T[:, None]
    out = N.sum(axis=1)
    np.fill_diagonal(R, 0.0)
    np.fill_diagonal(R, -R.sum(axis=1))
    np.fill_diagonal(se, np.sqrt(out) / T)
    return RateEstimate(R, se, T, N)


def occupation_times(batch: PathBatch, states: Sequence[int]) -> np.ndarray:
    """Total time spent at each listed state, over all paths."""
    return np.array([batch.holds[batch.states[:, :-1] == x].sum() for x in states])


# --- exact hitting functionals -------------------------------------------------------

def hitting_law_exact(problem: BoundaryProblem, x: int) -> np.ndarray:
    """``nu_x``: law of ``X_tau`` from ``x``, indexed like ``problem.boundary``."""
    if not 0 <= int(x) < problem.m:
        raise InvalidParams(f"state {x} out of range")
    return hitting_kernel(problem)[int(x)]


def hitting_frequencies(batch: PathBatch, V: Sequence[int]) -> tuple[np.ndarray, np.ndarray, int]:
    """Empirical law of the first boundary state, with binomial standard errors."""
    ok = ~batch.horizon_exceeded
    n = int(ok.sum())
    p = np.array([(batch.hit_state[ok] == z).sum() for z in V], dtype=float) / max(n, 1)
    return p, np.sqrt(p * (1 - p) / max(n, 1)), n


def mean_hitting_time(problem: BoundaryProblem, gen: ReversibleGenerator | None = None) -> np.ndarray:
    """``E_x[tau_V]`` for every state (0 on ``V``)."""
    gen = problem.generator if gen is None else gen
    I = list(problem.interior)
    m = np.zeros(gen.n)
    if I:
        m[I] = np.linalg.solve(gen.matrix[np.ix_(I, I)], -np.ones(len(I)))
    return m


def laplace_hitting(problem: BoundaryProblem, s: float) -> np.ndarray:
    """``E_x[exp(-s tau)]`` from ``(L_II - s) u_I = -L_IV 1``, ``u = 1`` on ``V``."""
    L = problem.generator.matrix
    V, I = list(problem.boundary), list(problem.interior)
    u = np.ones(problem.m)
    if I:
        u[I] = np.linalg.solve(L[np.ix_(I, I)] - s * np.eye(len(I)), -L[np.ix_(I, V)].sum(axis=1))
    return u


def exact_tail(problem: BoundaryProblem, gen: ReversibleGenerator, t: float) -> np.ndarray:
    """``P_x[tau_V > t]`` for every state, via the killed semigroup."""
    I = list(problem.interior)
    out = np.zeros(gen.n)
    if I:
        out[I] = scipy.linalg.expm(t * gen.matrix[np.ix_(I, I)]) @ np.ones(len(I))
    return out


def wilson_interval(k: int, n: int, z: float) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


@dataclass(frozen=True)
class TailCheck:
    x: int
    t: float
    bound: float
    exact: float
    empirical: float
    n: int
    status: str  # pass | warn | fail


@dataclass(frozen=True)
class ChiAcceleration:
    chi: float
    s: float
    alpha: float
    laplace: np.ndarray         # E_x[chi^tau]
    phi: np.ndarray
    mean_tau: np.ndarray        # E_x[tau^(1)] for the accelerated chain
    mean_bound: float           # 1 / ln(1 / chi)
    gap: float                  # Dirichlet gap of -L^(1) on M \ V
    gap_bound: float            # alpha / 2
    tails: tuple[TailCheck, ...] = ()

    @property
    def mean_ok(self) -> bool:
        return bool(np.all(self.mean_tau <= self.mean_bound + DEFAULT_TOL.check))

    @property
    def gap_ok(self) -> bool:
        return self.gap >= self.gap_bound - DEFAULT_TOL.check

    @property
    def tails_ok(self) -> bool:
        return all(t.status != "fail" for t in self.tails)


def chi_acceleration(problem: BoundaryProblem, chi: float = DEFAULT_CHI,
                     simulate: SimulationConfig | None = None,
                     tail_times: Sequence[float] = (1.0, 2.0, 4.0),
                     tol: Tolerances = DEFAULT_TOL) -> ChiAcceleration:
    """Profile ``phi = 1 / E_x[chi^tau]`` and the diagnostics of the accelerated chain.

    With ``alpha = ln 2 ln(1/chi) / 2``: ``E_x[tau^(1)] <= 1 / ln(1/chi)``,
    the interior Dirichlet gap of ``L^(1)`` is at least ``alpha / 2`` and
    ``P_x[tau^(1) >= t] <= 2 exp(-alpha t)``. The tail is checked exactly and,
    if ``simulate`` is given, by Monte Carlo with Wilson intervals
    (outside 3 sigma: warn, outside 4 sigma: fail).
    """
    chi = float(chi)
    if not 0.0 < chi < 1.0:
        raise ChiOutOfRange(f"chi must lie in (0, 1), got {chi}")
    if not problem.interior:
        raise InvalidParams("chi acceleration needs a nonempty interior")
    s = math.log(1.0 / chi)
    alpha = math.log(2.0) * s / 2.0
    u = laplace_hitting(problem, s)
    phi = 1.0 / u
    phi[list(problem.boundary)] = 1.0
    acc = accelerate(problem, 1.0, phi, tol=tol)
    mean_tau = mean_hitting_time(problem, acc.Lr)
    gap = dirichlet_gap(problem, acc.Lr)
    tails = []
    if simulate is not None:
        for x in problem.interior:
            batch = simulate_paths(problem, simulate, x, generator=acc.Lr)
            n = len(batch)
            for t in tail_times:
                k = int((batch.tau >= t).sum())
                bound = 2.0 * math.exp(-alpha * t)
                ex = float(exact_tail(problem, acc.Lr, t)[x])
                lo3, _ = wilson_interval(k, n, 3.0)
                lo4, _ = wilson_interval(k, n, 4.0)
                status = "pass" if lo3 <= bound else ("warn" if lo4 <= bound else "fail")
                tails.append(TailCheck(int(x), float(t), bound, ex, k / n, n, status))
    else:
        for x in problem.interior:
            for t in tail_times:
                bound = 2.0 * math.exp(-alpha * t)
                ex = float(exact_tail(problem, acc.Lr, t)[x])
                tails.append(TailCheck(int(x), float(t), bound, ex, math.nan, 0,
                                       "pass" if ex <= bound + tol.check else "fail"))
    return ChiAcceleration(chi, s, alpha, u, phi, mean_tau, 1.0 / s, gap, alpha / 2.0, tuple(tails))


# --- martingale identity -------------------------------------------------------------

def martingale_check(batch: PathBatch, problem: BoundaryProblem, G) -> tuple[float, float, float]:
    """Empirical ``E[G(X_tau) - G(x) - int_0^tau L G(X_s) ds]`` with its standard error.

    Only paths that reached ``V`` inside the horizon are used; returns
    ``(mean, se, fraction_used)``.
    """
    G = np.asarray(G, dtype=float)
    LG = problem.generator.matrix @ G
    ok = ~batch.horizon_exceeded
    S, H = batch.states[ok], batch.holds[ok]
    first = batch.hit_index[ok]
    before = np.arange(H.shape[1])[None, :] < first[:, None]
    integral = (LG[S[:, :-1]] * H * before).sum(axis=1)
    resid = G[batch.hit_state[ok]] - G[S[:, 0]] - integral
    n = len(resid)
    if n == 0:
        return math.nan, math.nan, 0.0
    return float(resid.mean()), float(resid.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf, n / len(batch)


def problem_with_boundary(problem: BoundaryProblem, V: Sequence[int]) -> BoundaryProblem:
    return make_problem(problem.generator, V, allow_full=True)


__all__ = [
    "DEFAULT_CHI", "SimulationConfig", "PathSample", "PathBatch", "TracePath", "RateEstimate",
    "simulate_paths", "trace_process", "trace_rates", "occupation_times", "hitting_law_exact",
    "hitting_frequencies", "mean_hitting_time", "laplace_hitting", "exact_tail", "wilson_interval",
    "TailCheck", "ChiAcceleration", "chi_acceleration", "martingale_check",
]
