import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from steklov import connectivity_spectra, dirichlet_eigenvalue, generator_spectrum, models, steklov_spectrum
from steklov.errors import InsufficientLevels, InvalidParams, NonpositiveLength
from steklov.io import instance_from_dict, instance_to_dict
from steklov.models import CylinderSpec, cylinder_reference, refinement_study, unit_circle_eigs


def _markov_invariants(inst):
    gen = inst.generator
    assert np.all(gen.mu > 0) and gen.mu.sum() == pytest.approx(1.0)
    F = gen.mu[:, None] * gen.matrix
    assert np.allclose(F, F.T, atol=1e-12 * gen.norm)
    spec = generator_spectrum(gen)
    assert spec.kth(1) == 0.0 and all(x >= 0 for x in spec)
    assert 1 <= inst.problem.v < inst.problem.m


def test_path3_canonical(path3):
    assert path3.name == "path3"
    assert path3.problem.boundary == (0, 2)
    assert path3.generator.norm == 2.0
    assert np.allclose(path3.generator.mu, 1 / 3)


@pytest.mark.parametrize("kind,params", [
    ("path", {"n": 6}), ("cycle", {"n": 6}), ("dumbbell", {"neck": 0.3}),
    ("cylinder", {"circ": 6, "layers": 4, "length": 1.0}), ("birth_death", {"n": 12}),
    ("random", {"m": 6}),
])
def test_generated_instances_are_valid(kind, params):
    inst = models.gen_named(kind, params, seed=3)
    _markov_invariants(inst)
    again = instance_from_dict(instance_to_dict(inst))
    assert np.array_equal(again.generator.matrix, inst.generator.matrix)
    assert np.array_equal(again.generator.mu, inst.generator.mu)


def test_gen_named_errors():
    with pytest.raises(InvalidParams):
        models.gen_named("torus", {})
    with pytest.raises(InvalidParams):
        models.gen_named("path", {"n": "three"})
    with pytest.raises(NonpositiveLength):
        models.gen_named("cylinder", {"circ": 8, "length": -1.0})


def test_random_corpus_shape(corpus):
    assert len(corpus) == 100
    assert len({inst.name for inst in corpus}) == 100
    for inst in corpus:
        m, v = inst.problem.m, inst.problem.v
        assert 4 <= m <= 8 and 2 <= v <= m - 1
    again = models.random_corpus(3, seed=0)
    assert [instance_to_dict(a) for a in again] == [instance_to_dict(a) for a in corpus[:3]]


def test_birth_death_tail_gap_vanishes():
    vals = []
    for n in (20, 30, 40, 50):
        inst = models.birth_death(n)
        vals.append(dirichlet_eigenvalue(inst.generator, range(9, n)))
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_birth_death_truncations_have_positive_sigma2():
    inst = models.birth_death(20, boundary=(0, 5, 10))
    assert steklov_spectrum(inst.problem).kth(2) > 0


def test_dumbbell_family():
    necks = [1.0, 0.5, 0.1, 0.01, 0.001]
    h2, h3 = [], []
    for w in necks:
        prof = connectivity_spectra(models.dumbbell(w).problem, 3)
        h2.append(prof.value("h", 2))
        h3.append(prof.value("h", 3))
    # narrowing the neck can only lower h_2, which tends to 0
    assert all(b <= a for a, b in zip(h2, h2[1:]))
    assert h2[-1] < 1e-3
    assert min(h3) > 0.5


def test_cylinder_reference_values():
    ref = cylinder_reference(1.0)
    t, c = math.tanh(1.0), 1 / math.tanh(1.0)
    assert ref.tolist()[:6] == pytest.approx([0.0, t, t, 1.0, c, c], abs=1e-15)
    assert t == pytest.approx(0.761594, abs=1e-6) and c == pytest.approx(1.313035, abs=1e-6)
    with pytest.raises(NonpositiveLength):
        cylinder_reference(0.0)


def test_small_eigenvalue_limits():
    L = 2.0
    lam = 1e-12
    ref = cylinder_reference(L, [0.0, lam])
    s = math.sqrt(lam)
    assert s * math.tanh(s * L) == pytest.approx(0.0, abs=1e-11)
    assert s / math.tanh(s * L) == pytest.approx(1 / L, rel=1e-9)
    assert ref.tolist()[-1] == pytest.approx(1 / L, rel=1e-9)


@given(st.floats(0.1, 10.0), st.integers(3, 30))
def test_reference_sorted_with_single_zero(length, count):
    vals = cylinder_reference(length, unit_circle_eigs(count)).tolist()
    assert vals == sorted(vals)
    assert vals.count(0.0) == 1


def test_long_thin_cylinders_collapse():
    firsts = []
    for m in (1, 2, 4, 8, 16):
        ref = cylinder_reference(m ** 1.5, unit_circle_eigs(5, radius=m))
        firsts.append(ref.kth(3))
    assert all(b < a for a, b in zip(firsts, firsts[1:]))
    assert firsts[-1] < 0.1


def test_refinement_study():
    specs = [CylinderSpec.auto(c) for c in (8, 16, 32)]
    rows = refinement_study(specs)
    errs = [r.rel_error[0] for r in rows]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 0.1
    with pytest.raises(InsufficientLevels):
        refinement_study(specs[:1])
