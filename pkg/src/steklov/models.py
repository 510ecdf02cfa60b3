"""Instance generators and the closed-form cylinder reference.

Every generator returns an :class:`~steklov.io.Instance` whose generator has
already passed the validation in :func:`~steklov.markov.build_generator`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import DEFAULT_TOL
from .dtn import make_problem, steklov_spectrum
from .errors import InsufficientLevels, InvalidParams, NonpositiveLength, SteklovError
from .io import Instance
from .markov import Spectrum, build_generator


def _instance(name, rates, n, boundary, labels=None, meta=None, mu=None):
    gen = build_generator(rates, labels or [str(i) for i in range(n)], mu_hint=mu, n=n)
    return Instance(name, make_problem(gen, boundary), meta or {})


def _conductance_rates(edges, weights):
    """``L(x, y) = c_xy / w(x)``: reversible for ``mu`` proportional to ``w``."""
    rates = []
    for (x, y), c in edges.items():
        rates.append((x, y, c / weights[x]))
        rates.append((y, x, c / weights[y]))
    return rates


def path(n: int = 3) -> Instance:
    """Unit-rate path ``0 - 1 - ... - n-1`` with the two endpoints as boundary."""
    if n < 3:
        raise InvalidParams("path needs n >= 3")
    rates = [(i, i + 1, 1.0) for i in range(n - 1)] + [(i + 1, i, 1.0) for i in range(n - 1)]
    return _instance(f"path{n}", rates, n, [0, n - 1], meta={"kind": "path", "n": n})


def cycle(n: int = 6) -> Instance:
    """Unit-rate cycle with antipodal boundary ``{0, n // 2}``."""
    if n < 3:
        raise InvalidParams("cycle needs n >= 3")
    rates = [(i, (i + 1) % n, 1.0) for i in range(n)] + [((i + 1) % n, i, 1.0) for i in range(n)]
    return _instance(f"cycle{n}", rates, n, [0, n // 2], meta={"kind": "cycle", "n": n})


def dumbbell(neck: float = 0.1, rim: int = 4) -> Instance:
    """Two wheels joined hub - neck - hub; the neck edges carry conductance ``neck``.

    Random-walk normalisation ``L(x, y) = c_xy / deg(x)`` so that ``mu`` is
    proportional to the weighted degree. The boundary is the two rims.
    """
    if not neck > 0:
        raise InvalidParams("neck conductance must be positive")
    if rim < 3:
        raise InvalidParams("rim needs at least 3 nodes")
    edges: dict[tuple[int, int], float] = {}
    boundary = []
    for side in range(2):
        hub = side * (rim + 1)
        ring = [hub + 1 + j for j in range(rim)]
        boundary += ring
        for j, x in enumerate(ring):
            edges[(hub, x)] = 1.0
            edges[(x, ring[(j + 1) % rim])] = 1.0
    mid = 2 * (rim + 1)
    edges[(0, mid)] = neck
    edges[(rim + 1, mid)] = neck
    n = mid + 1
    deg = np.zeros(n)
    for (x, y), c in edges.items():
        deg[x] += c
        deg[y] += c
    labels = ([f"hub{0}"] + [f"a{j}" for j in range(rim)] + ["hub1"]
              + [f"b{j}" for j in range(rim)] + ["neck"])
    return _instance(f"dumbbell_w{neck:g}", _conductance_rates(edges, deg), n, boundary, labels,
                     meta={"kind": "dumbbell", "neck": neck, "rim": rim})


def metropolis_rates(mu: Sequence[float]) -> list[tuple[int, int, float]]:
    """Nearest-neighbour Metropolis rates ``L(x, y) = 1/2 (mu(y) / mu(x) ^ 1)``."""
    mu = np.asarray(mu, dtype=float)
    rates = []
    for x in range(len(mu) - 1):
        rates.append((x, x + 1, 0.5 * min(mu[x + 1] / mu[x], 1.0)))
        rates.append((x + 1, x, 0.5 * min(mu[x] / mu[x + 1], 1.0)))
    return rates


def birth_death(n: int = 50, exponent: float = 2.0, mu: Sequence[float] | None = None,
                boundary: Sequence[int] = (0,)) -> Instance:
    """Metropolis chain on ``{1, ..., n}`` for ``mu(x)`` proportional to ``x^-exponent``."""
    if n < 2:
        raise InvalidParams("birth_death needs n >= 2")
    if mu is None:
        w = np.arange(1, n + 1, dtype=float) ** (-exponent)
    else:
        w = np.asarray(mu, dtype=float)
        if w.shape != (n,) or np.any(w <= 0):
            raise InvalidParams("target measure must be positive of length n")
    w = w / w.sum()
    return _instance(f"bd{n}", metropolis_rates(w), n, list(boundary),
                     [str(x) for x in range(1, n + 1)], mu=w,
                     meta={"kind": "birth_death", "n": n, "exponent": exponent})


def random_reversible(m: int | None = None, seed=0, *, m_range=(4, 8),
                      extra_edge_prob: float = 0.3) -> Instance:
    """Random connected weighted graph, ``mu`` proportional to vertex weights.

    Vertex weights ``w ~ U(0.5, 2)`` and conductances ``c ~ U(0.2, 1)`` on a
    random spanning tree plus independent extra edges; ``L(x, y) = c_xy / w(x)``.
    The boundary has a uniform size in ``[2, m - 1]``.
    """
    rng = np.random.default_rng(seed)
    if m is None:
        m = int(rng.integers(m_range[0], m_range[1] + 1))
    if m < 3:
        raise InvalidParams("random instances need m >= 3")
    w = rng.uniform(0.5, 2.0, size=m)
    order = rng.permutation(m)
    edges: dict[tuple[int, int], float] = {}
    for k in range(1, m):
        a, b = int(order[k]), int(order[rng.integers(0, k)])
        edges[(min(a, b), max(a, b))] = float(rng.uniform(0.2, 1.0))
    for a in range(m):
        for b in range(a + 1, m):
            if (a, b) not in edges and rng.random() < extra_edge_prob:
                edges[(a, b)] = float(rng.uniform(0.2, 1.0))
    vsize = int(rng.integers(2, m))
    boundary = sorted(int(x) for x in rng.choice(m, size=vsize, replace=False))
    return _instance(f"random_m{m}_s{seed}", _conductance_rates(edges, w), m, boundary,
                     meta={"kind": "random", "m": m, "seed": _seed_meta(seed)})


def _seed_meta(seed):
    return list(seed) if isinstance(seed, (list, tuple)) else seed


def random_corpus(count: int = 100, seed: int = 0, m_range=(4, 8)) -> list[Instance]:
    """``count`` random instances keyed by ``(seed, index)``."""
    return [random_reversible(None, [seed, i], m_range=m_range) for i in range(count)]


# --- cylinders -----------------------------------------------------------------------

@dataclass(frozen=True)
class CylinderSpec:
    """Graph cylinder ``C_circ x [-length, length]`` on a circle of radius ``radius``.

    The axial extent is ``2 * length`` so that the reference spectrum for
    half-length ``length`` applies directly. ``end_weight`` scales the
    tangential conductances on the two end circles (0.5 is the
    finite-volume value, 1.0 gives plain unit conductances on a square mesh).
    """

    m_circ: int
    layers: int
    length: float
    radius: float = 1.0
    end_weight: float = 0.5

    def __post_init__(self):
        if self.m_circ < 3:
            raise InvalidParams("m_circ must be >= 3")
        if self.layers < 2:
            raise InvalidParams("layers must be >= 2")
        if not self.length > 0:
            raise NonpositiveLength("cylinder length must be positive")
        if not self.end_weight > 0:
            raise InvalidParams("end_weight must be positive")

    @property
    def spacing(self) -> float:
        """Tangential mesh width ``h``."""
        return 2 * math.pi * self.radius / self.m_circ

    @property
    def axial_spacing(self) -> float:
        return 2 * self.length / (self.layers - 1)

    @classmethod
    def auto(cls, m_circ: int, length: float = 1.0, radius: float = 1.0,
             axial_ratio: int = 2, end_weight: float = 0.5) -> "CylinderSpec":
        """Layer count giving an axial step of at most ``h / axial_ratio``."""
        if length <= 0:
            raise NonpositiveLength("cylinder length must be positive")
        h = 2 * math.pi * radius / m_circ
        cells = axial_ratio * math.ceil(2 * length / h - 1e-12)
        return cls(m_circ, cells + 1, length, radius, end_weight)


def cylinder(spec: CylinderSpec) -> Instance:
    """Finite-volume graph of the cylinder; boundary = first and last circles.

    Conductances are ``h_z / h`` around circles and ``h / h_z`` along the
    axis (both 1 on a square mesh); the end circles get ``end_weight`` times
    the tangential value because their cells are half as tall.
    """
    c, nl = spec.m_circ, spec.layers
    h, hz = spec.spacing, spec.axial_spacing
    edges: dict[tuple[int, int], float] = {}
    idx = lambda layer, j: layer * c + j  # noqa: E731
    for layer in range(nl):
        ct = hz / h * (spec.end_weight if layer in (0, nl - 1) else 1.0)
        for j in range(c):
            a, b = idx(layer, j), idx(layer, (j + 1) % c)
            key = (min(a, b), max(a, b))
            edges[key] = edges.get(key, 0.0) + ct
            if layer + 1 < nl:
                edges[(a, idx(layer + 1, j))] = h / hz
    n = c * nl
    boundary = list(range(c)) + list(range((nl - 1) * c, nl * c))
    labels = [f"z{layer}_t{j}" for layer in range(nl) for j in range(c)]
    return _instance(f"cylinder_c{c}_l{nl}", _conductance_rates(edges, np.ones(n)), n, boundary,
                     labels, meta={"kind": "cylinder", "m_circ": c, "layers": nl,
                                   "length": spec.length, "radius": spec.radius,
                                   "end_weight": spec.end_weight})


def unit_circle_eigs(count: int, radius: float = 1.0) -> list[float]:
    """Laplace eigenvalues of a circle of given radius: 0, then ``(j / radius)^2`` twice."""
    out = [0.0]
    j = 1
    while len(out) < count:
        out += [(j / radius) ** 2] * 2
        j += 1
    return out[:count]


def cylinder_reference(length: float, circle_eigs: Sequence[float] | None = None,
                       count: int = 21) -> Spectrum:
    """Closed-form Steklov spectrum of ``N x (-length, length)``.

    ``{0, 1/length}`` together with ``sqrt(l) tanh(sqrt(l) length)`` and
    ``sqrt(l) coth(sqrt(l) length)`` for every positive cross-section
    eigenvalue ``l``, with multiplicity.
    """
    if not length > 0:
        raise NonpositiveLength("length must be positive")
    eigs = unit_circle_eigs(count) if circle_eigs is None else list(circle_eigs)
    if any(l < 0 for l in eigs):
        raise InvalidParams("cross-section eigenvalues must be nonnegative")
    vals = [0.0, 1.0 / length]
    for lam in eigs:
        if lam > 0:
            s = math.sqrt(lam)
            t = math.tanh(s * length)
            vals += [s * t, s / t]
    return Spectrum(np.array(vals))


@dataclass(frozen=True)
class RefinementRow:
    m_circ: int
    layers: int
    h: float
    sigma: tuple[float, ...]
    reference: tuple[float, ...]
    rel_error: tuple[float, ...]


def graph_cylinder_spectrum(spec: CylinderSpec) -> Spectrum:
    """Graph Steklov spectrum rescaled by ``1 / h``."""
    inst = cylinder(spec)
    return Spectrum(steklov_spectrum(inst.problem, DEFAULT_TOL).values / spec.spacing)


def refinement_study(specs: Sequence[CylinderSpec], k_check: int = 2,
                     circle_eigs: Sequence[float] | None = None) -> list[RefinementRow]:
    """Relative errors of ``sigma_2 .. sigma_{k_check}`` against the reference, per level."""
    specs = list(specs)
    if len(specs) < 3:
        raise InsufficientLevels("a refinement study needs at least 3 levels")
    rows = []
    for spec in specs:
        ref = cylinder_reference(spec.length, circle_eigs, count=max(2 * k_check, 5))
        sig = graph_cylinder_spectrum(spec)
        ks = range(2, k_check + 1)
        s = tuple(sig.kth(k) for k in ks)
        r = tuple(ref.kth(k) for k in ks)
        err = tuple(abs(a - b) / abs(b) for a, b in zip(s, r))
        rows.append(RefinementRow(spec.m_circ, spec.layers, spec.spacing, s, r, err))
    return rows


def errors_decreasing(rows: Sequence[RefinementRow], k: int = 2) -> bool:
    e = [row.rel_error[k - 2] for row in rows]
    return all(b < a for a, b in zip(e, e[1:]))


# --- dispatch ------------------------------------------------------------------------

KINDS = ("path", "cycle", "dumbbell", "cylinder", "birth_death", "random")


def gen_named(kind: str, params: dict | None = None, seed=0) -> Instance:
    """Build a named instance family member from a parameter dict."""
    p = dict(params or {})
    try:
        if kind == "path":
            return path(int(p.get("n", 3)))
        if kind == "cycle":
            return cycle(int(p.get("n", 6)))
        if kind == "dumbbell":
            return dumbbell(float(p.get("neck", 0.1)), int(p.get("rim", 4)))
        if kind == "cylinder":
            circ = int(p.get("circ", 16))
            length = float(p.get("length", 1.0))
            if p.get("layers") is None:
                return cylinder(CylinderSpec.auto(circ, length))
            return cylinder(CylinderSpec(circ, int(p["layers"]), length))
        if kind == "birth_death":
            return birth_death(int(p.get("n", 50)), float(p.get("exponent", 2.0)))
        if kind == "random":
            m = p.get("m")
            return random_reversible(None if m is None else int(m), seed,
                                     extra_edge_prob=float(p.get("extra_edge_prob", 0.3)))
    except SteklovError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise InvalidParams(f"bad parameters for {kind}: {exc}") from exc
    raise InvalidParams(f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}")
