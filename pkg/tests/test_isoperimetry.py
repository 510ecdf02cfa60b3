import itertools
import math

import pytest
from hypothesis import given

from steklov import boundary_measure, connectivity_spectra, models, profile, ratios
from steklov.dtn import dirichlet_steklov_sigma1
from steklov.errors import BudgetExceeded, EmptySubset, InvalidParams
from steklov.isoperimetry import QUANTITIES, SubsetTuple, subset_table
from steklov.markov import dirichlet_eigenvalue

from conftest import boundary_problems


def _subsets(m):
    for r in range(1, m + 1):
        yield from itertools.combinations(range(m), r)


def brute_force(problem, k):
    """Min-max over all k-tuples of disjoint nonempty subsets, listed directly."""
    gen = problem.generator
    V = set(problem.boundary)

    def weights(A):
        eta, eta_p = ratios(problem, A)
        prof = profile(problem, A)
        rho, rho_p = prof.rho, prof.rho_prime
        sig = dirichlet_steklov_sigma1(problem, A)
        lam = 0.0 if len(A) == problem.m else dirichlet_eigenvalue(gen, A)
        iota = 0.0 if rho == 0 else rho * rho_p
        return {"h": eta, "h_prime": eta_p, "kappa": sig, "iota": iota, "Lambda": lam}

    subs = list(_subsets(problem.m))
    w = {A: weights(A) for A in subs}
    best = {q: math.inf for q in QUANTITIES}
    for combo in itertools.combinations(subs, k):
        flat = [x for A in combo for x in A]
        if len(flat) != len(set(flat)):
            continue
        for q in QUANTITIES:
            if q == "h_prime" and any(not set(A) & V for A in combo):
                continue
            best[q] = min(best[q], max(w[A][q] for A in combo))
    return best


def test_boundary_measure_path3(path3):
    p = path3.problem
    assert boundary_measure(p, [0]) == pytest.approx(1 / 3, abs=1e-15)
    assert boundary_measure(p, [0, 1, 2]) == 0.0


def test_ratios_path3(path3):
    p = path3.problem
    assert ratios(p, [0]) == pytest.approx((1.0, 1.0), abs=1e-14)
    eta, eta_p = ratios(p, [1])
    assert eta == pytest.approx(2.0, abs=1e-14) and eta_p == math.inf
    assert ratios(p, [0, 1]) == pytest.approx((0.5, 1.0), abs=1e-14)
    with pytest.raises(EmptySubset):
        ratios(p, [])


def test_profile_path3(path3):
    p = path3.problem
    prof = profile(p, [0, 1])
    assert prof.rho == pytest.approx(0.5) and prof.rho_witness == (0, 1)
    assert prof.rho_prime == pytest.approx(1.0) and prof.rho_prime_witness in [(0,), (0, 1)]
    full = profile(p, [0, 1, 2])
    assert full.rho == 0.0 and full.rho_witness == (0, 1, 2)
    assert profile(p, [0]).rho == pytest.approx(1.0)


def test_connectivity_path3(path3):
    prof = connectivity_spectra(path3.problem, 2)
    for q in ("kappa", "iota", "h", "h_prime", "Lambda"):
        assert prof.sequences[q] == pytest.approx([0.0, 1.0], abs=1e-12), q
    assert prof.witnesses["kappa"][0].parts == ((0, 1, 2),)
    # brute force over all tuples is the oracle
    for k in (1, 2, 3):
        bf = brute_force(path3.problem, k)
        full = connectivity_spectra(path3.problem, 3)
        for q in QUANTITIES:
            assert full.value(q, k) == pytest.approx(bf[q], abs=1e-12), (q, k)


def test_kappa_one_is_zero_with_full_witness(corpus):
    for inst in corpus[:10]:
        prof = connectivity_spectra(inst.problem, 1)
        assert prof.kappa[0] == pytest.approx(0.0, abs=1e-12)
        assert prof.witnesses["kappa"][0].parts == (tuple(range(inst.problem.m)),)


def test_budget_and_params(path3):
    with pytest.raises(BudgetExceeded) as exc:
        connectivity_spectra(path3.problem, 2, budget=8)
    assert exc.value.suggestion == "heuristic"
    with pytest.raises(InvalidParams):
        connectivity_spectra(path3.problem, 4)
    with pytest.raises(InvalidParams):
        connectivity_spectra(path3.problem, 2, mode="magic")


def test_subset_tuple_canonical():
    t = SubsetTuple([(3, 1), (0, 2)])
    assert t.parts == ((0, 2), (1, 3))
    with pytest.raises(InvalidParams):
        SubsetTuple([(0, 1), (1, 2)])
    with pytest.raises(EmptySubset):
        SubsetTuple([(0,), ()])


def test_heuristic_upper_bounds_on_cylinder():
    big = models.cylinder(models.CylinderSpec(8, 5, 1.0))
    assert big.problem.m == 40
    heur = connectivity_spectra(big.problem, 2, mode="heuristic")
    assert not heur.exact and heur.to_dict()["upper_bound"]
    assert all(math.isfinite(heur.value(q, 2)) for q in QUANTITIES)
    with pytest.raises(BudgetExceeded):
        connectivity_spectra(big.problem, 2)
    for circ, layers in [(4, 3)]:
        small = models.cylinder(models.CylinderSpec(circ, layers, 1.0))
        assert small.problem.m <= 12
        ex = connectivity_spectra(small.problem, 2)
        he = connectivity_spectra(small.problem, 2, mode="heuristic")
        assert he.value("iota", 2) >= ex.value("iota", 2) - 1e-12


# --- properties ----------------------------------------------------------------------

@given(boundary_problems(max_states=5))
def test_dp_matches_brute_force(p):
    prof = connectivity_spectra(p, 2)
    bf = brute_force(p, 2)
    for q in QUANTITIES:
        assert prof.value(q, 2) == pytest.approx(bf[q], rel=1e-12, abs=1e-12), q


@given(boundary_problems(max_states=6))
def test_heuristic_dominates_exact(p):
    k = min(3, p.m)
    ex = connectivity_spectra(p, k)
    he = connectivity_spectra(p, k, mode="heuristic")
    for q in QUANTITIES:
        for kk in range(1, k + 1):
            assert he.value(q, kk) >= ex.value(q, kk) - 1e-12, (q, kk)


@given(boundary_problems())
def test_sequences_monotone_in_k(p):
    prof = connectivity_spectra(p, p.m)
    for q in QUANTITIES:
        seq = prof.sequences[q]
        assert all(b >= a - 1e-12 for a, b in zip(seq, seq[1:])), q


@given(boundary_problems())
def test_witnesses_attain_values(p):
    k = min(3, p.m)
    prof = connectivity_spectra(p, k)
    for kk in range(1, k + 1):
        wit = prof.witnesses["kappa"][kk - 1]
        val = prof.value("kappa", kk)
        if math.isfinite(val):
            assert len(wit.parts) == kk
            got = max(dirichlet_steklov_sigma1(p, A) for A in wit.parts)
            assert got == pytest.approx(val, abs=1e-12)


@given(boundary_problems())
def test_rho_properties_and_pointwise_bound(p):
    t = subset_table(p)
    norm = p.generator.norm
    full = (1 << p.m) - 1
    for mask in range(1, full + 1):
        assert t.rho[mask] <= t.eta[mask] + 1e-15
        # growing A can only lower the infimum
        for x in range(p.m):
            bigger = mask | (1 << x)
            assert t.rho[bigger] <= t.rho[mask] + 1e-15
        if math.isfinite(t.sigma1[mask]):
            rr = t.rho[mask] * t.rho_prime[mask] if t.rho[mask] > 0 else 0.0
            assert t.sigma1[mask] >= rr / (8 * norm) - 1e-9


@given(boundary_problems())
def test_iota_over_8L_below_kappa(p):
    prof = connectivity_spectra(p, min(3, p.m))
    for k in range(1, prof.k_max + 1):
        assert prof.value("kappa", k) >= prof.value("iota", k) / (8 * p.generator.norm) - 1e-9
