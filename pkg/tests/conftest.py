from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
import sympy as sp
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from steklov import build_generator, make_problem, models
from steklov.config import DEFAULT_TOL

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def tol():
    return DEFAULT_TOL


@pytest.fixture(scope="session")
def path3():
    return models.path(3)


@pytest.fixture(scope="session")
def two_state():
    def make(p=1.0, q=1.0, boundary=(0,)):
        gen = build_generator([(0, 1, p), (1, 0, q)])
        return make_problem(gen, boundary, allow_full=True)
    return make


@pytest.fixture(scope="session")
def corpus():
    return models.random_corpus(100, seed=0)


# --- hypothesis strategies -------------------------------------------------------------

@st.composite
def reversible_triplets(draw, min_states=3, max_states=6):
    """Conductance networks on a random spanning tree plus extra edges."""
    n = draw(st.integers(min_states, max_states))
    w = draw(st.lists(st.floats(0.5, 2.0), min_size=n, max_size=n))
    edges = {(draw(st.integers(0, i - 1)), i) for i in range(1, n)}
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in edges and draw(st.booleans()):
                edges.add((i, j))
    trip = []
    for i, j in sorted(edges):
        c = draw(st.floats(0.2, 1.0))
        trip += [(i, j, c / w[i]), (j, i, c / w[j])]
    return n, trip, np.array(w) / sum(w)


@st.composite
def boundary_problems(draw, min_states=3, max_states=6):
    n, trip, _ = draw(reversible_triplets(min_states, max_states))
    gen = build_generator(trip, n=n)
    V = draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=n - 1, unique=True))
    return make_problem(gen, sorted(V))


# --- exact-arithmetic oracles ---------------------------------------------------------

def rational_generator(n, trip):
    """Sympy generator from triplets whose rates are rationals or ints."""
    L = sp.zeros(n, n)
    for i, j, r in trip:
        L[i, j] += sp.nsimplify(r)
    for i in range(n):
        L[i, i] = -sum(L[i, j] for j in range(n) if j != i)
    return L


def exact_schur(L, keep):
    elim = [x for x in range(L.shape[0]) if x not in keep]
    A = L.extract(keep, keep)
    if not elim:
        return A
    return A - L.extract(keep, elim) * L.extract(elim, elim).inv() * L.extract(elim, keep)


def exact_null_measure(L):
    ns = L.T.nullspace()
    assert len(ns) == 1
    v = ns[0]
    return v / sum(v)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
