import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from steklov import models, steklov_generator
from steklov.errors import ChiOutOfRange, InvalidParams
from steklov.montecarlo import (
    DEFAULT_CHI,
    SimulationConfig,
    chi_acceleration,
    exact_tail,
    hitting_frequencies,
    hitting_law_exact,
    laplace_hitting,
    martingale_check,
    mean_hitting_time,
    problem_with_boundary,
    simulate_paths,
    trace_process,
    trace_rates,
    wilson_interval,
)

from conftest import boundary_problems


def test_two_state_holding_mean(two_state):
    p = two_state(2.0, 1.0, (0,))
    batch = simulate_paths(p, SimulationConfig(seed=1, n_paths=100_000, horizon=1), 0)
    h = batch.holds[:, 0]
    assert abs(h.mean() - 1 / 2.0) < 3 * h.std(ddof=1) / math.sqrt(len(h))


def test_determinism(path3):
    cfg = SimulationConfig(seed=7, n_paths=5000, horizon=8)
    a = simulate_paths(path3.problem, cfg, 1)
    b = simulate_paths(path3.problem, cfg, 1)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.holds, b.holds)
    c = simulate_paths(path3.problem, SimulationConfig(seed=8, n_paths=5000, horizon=8), 1)
    assert not np.array_equal(a.states, c.states)


def test_config_validation(path3):
    with pytest.raises(ChiOutOfRange):
        SimulationConfig(chi=1.0)
    with pytest.raises(InvalidParams):
        SimulationConfig(n_paths=0)
    with pytest.raises(InvalidParams):
        simulate_paths(path3.problem, SimulationConfig(n_paths=10), 5)


def test_trace_of_full_set_is_the_path(path3):
    full = problem_with_boundary(path3.problem, [0, 1, 2])
    batch = simulate_paths(full, SimulationConfig(seed=3, n_paths=50, horizon=10), 0)
    for i, tp in enumerate(trace_process(batch, [0, 1, 2])):
        assert tp.states == tuple(int(x) for x in batch.states[i])
        assert np.allclose(tp.durations[:-1], batch.holds[i])


def test_trace_rates_path3(path3):
    p = path3.problem
    batch = simulate_paths(p, SimulationConfig(seed=42, n_paths=100_000, horizon=64), 0)
    est = trace_rates(batch, p.boundary)
    S = steklov_generator(p).matrix
    assert np.all(np.abs(est.rates - S) <= 3 * est.se)


def test_occupation_ratio_matches_nu(path3):
    p = path3.problem
    batch = simulate_paths(p, SimulationConfig(seed=5, n_paths=20_000, horizon=32), "mu")
    S, H = batch.states[:, :-1], batch.holds
    d = (H * (S == 0)).sum(axis=1) - (H * (S == 2)).sum(axis=1)
    assert abs(d.mean()) < 3 * d.std(ddof=1) / math.sqrt(len(d))


def test_hitting_laws_exact(path3):
    assert np.allclose(hitting_law_exact(path3.problem, 1), [0.5, 0.5])
    assert np.allclose(hitting_law_exact(path3.problem, 0), [1.0, 0.0])
    p4 = models.path(4).problem
    assert np.allclose(hitting_law_exact(p4, 1), [2 / 3, 1 / 3], atol=1e-15)


def test_hitting_frequencies_path3(path3):
    p = path3.problem
    batch = simulate_paths(p, SimulationConfig(seed=42, n_paths=100_000), 1)
    freq, se, n = hitting_frequencies(batch, p.boundary)
    assert n == 100_000
    assert np.all(np.abs(freq - 0.5) <= 3 * se)


def test_chi_acceleration_path3(path3):
    p = path3.problem
    s = sp.Symbol("s")
    s_val = 2 / sp.log(2)
    # one interior equation: (-2 - s) u + 2 = 0
    u = sp.solve(sp.Eq(-(2 + s) * sp.Symbol("u") + 2, 0), sp.Symbol("u"))[0]
    u_exact = float(u.subs(s, s_val))
    assert u_exact == pytest.approx(0.409384, abs=1e-6)
    res = chi_acceleration(p)
    assert res.s == pytest.approx(float(s_val), rel=1e-15)
    assert res.alpha == pytest.approx(1.0, rel=1e-15)
    assert res.laplace[1] == pytest.approx(u_exact, rel=1e-14)
    assert res.phi[1] == pytest.approx(1 / u_exact, rel=1e-14)
    assert res.phi[1] == pytest.approx(2.4427, abs=1e-4)
    assert res.phi[0] == res.phi[2] == 1.0
    assert mean_hitting_time(p)[1] == pytest.approx(0.5)
    assert res.mean_tau[1] == pytest.approx(1 / (2 * res.phi[1]), rel=1e-14)
    assert res.mean_tau[1] <= math.log(2) / 2
    assert res.mean_ok and res.gap_ok and res.tails_ok
    with pytest.raises(ChiOutOfRange):
        chi_acceleration(p, 1.5)


def test_chi_tails_by_simulation(path3):
    res = chi_acceleration(path3.problem, simulate=SimulationConfig(seed=42, n_paths=20_000))
    assert res.tails and res.tails_ok
    for t in res.tails:
        assert t.empirical == pytest.approx(t.exact, abs=4 * math.sqrt(t.exact * (1 - t.exact) / t.n) + 1e-3)


def test_wilson_interval():
    lo, hi = wilson_interval(50, 100, 1.96)
    assert lo < 0.5 < hi and hi - lo == pytest.approx(0.19, abs=0.01)
    assert wilson_interval(0, 100, 3)[0] == 0.0


def test_exact_tail_at_zero(path3):
    acc = chi_acceleration(path3.problem)
    assert exact_tail(path3.problem, path3.generator, 0.0)[1] == pytest.approx(1.0)
    assert exact_tail(path3.problem, path3.generator, 1.0)[1] == pytest.approx(math.exp(-2.0))
    assert acc.tails[0].exact <= acc.tails[0].bound


# --- properties ----------------------------------------------------------------------

@given(boundary_problems())
def test_chi_profile_and_bounds(p):
    res = chi_acceleration(p, DEFAULT_CHI)
    assert np.all(res.phi >= 1.0)
    assert np.all(res.phi[list(p.boundary)] == 1.0)
    assert res.mean_ok and res.gap_ok and res.tails_ok
    assert np.all((laplace_hitting(p, 1.0) > 0) & (laplace_hitting(p, 1.0) <= 1.0 + 1e-15))


@settings(max_examples=8)
@given(boundary_problems(max_states=5), st.integers(0, 1000))
def test_martingale_identity(p, seed):
    G = np.random.default_rng(seed).normal(size=p.m)
    x = p.interior[0]
    batch = simulate_paths(p, SimulationConfig(seed=seed, n_paths=4000, horizon=64), x)
    mean, se, frac = martingale_check(batch, p, G)
    assert frac > 0.9
    assert abs(mean) <= 4 * se + 1e-12
