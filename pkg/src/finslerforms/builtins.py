"""Built-in metric families, forms, vector fields and seeded generators.

Everything the CLI and the verification suites refer to by id lives here.
The catalog is deterministic: ids are sorted and generators take explicit
seeds, so identical scenarios reproduce identical reports.
"""

from __future__ import annotations

import math
from itertools import combinations, product

import numpy as np

from .connection import TensorField, nested_build
from .errors import ConfigError
from .forms import HorizontalForm
from .jets import gcos, gsin
from .metric import ChartSpec, FinslerStructure
from .quadrature import QuadratureGrid

SPHERE_BAND_MARGIN = 0.15  # keeps the near-pole fiber ellipses resolvable


def _sphere_metric(xs):
    s = gsin(xs[0])
    return [[1.0, 0.0], [0.0, s * s]]


def _riemannian_torus_metric(xs):
    c1 = gcos(xs[0])
    s2 = gsin(xs[1])
    off = 0.1 * gsin(xs[0] + xs[1])
    return [[1.3 + 0.3 * c1, off], [off, 1.1 + 0.2 * s2]]


def _quartic_f2(xs, ys):
    # perturbed quadratic norm, 2-homogeneous and strongly convex for eps = 0.05
    q = ys[0] * ys[0]
    r = (ys[0] * ys[0]) * (ys[0] * ys[0])
    for k in range(1, len(ys)):
        q = q + ys[k] * ys[k]
        r = r + (ys[k] * ys[k]) * (ys[k] * ys[k])
    return q + 0.05 * (r / q)


def _make_metric(name):
    if name == "euclidean":
        return FinslerStructure.euclidean(2)
    if name == "euclidean-3d":
        return FinslerStructure.euclidean(3)
    if name == "randers-torus":
        return FinslerStructure.randers(
            a=[[1.0, 0.0], [0.0, 1.0]], b=[0.5, 0.0], label="randers-torus"
        )
    if name == "randers-torus-3d":
        return FinslerStructure.randers(
            a=np.eye(3).tolist(), b=[0.3, 0.0, 0.0], label="randers-torus-3d"
        )
    if name == "riemannian-torus":
        return FinslerStructure.riemannian(
            _riemannian_torus_metric, dim=2, label="riemannian-torus"
        )
    if name == "riemannian-sphere":
        chart = ChartSpec(
            bounds=((0.0, math.pi), (0.0, 2.0 * math.pi)),
            periodic=(False, True),
            excluded_margin=(SPHERE_BAND_MARGIN, 0.0),
        )
        return FinslerStructure.riemannian(
            _sphere_metric, dim=2, chart=chart, label="riemannian-sphere"
        )
    if name == "quartic-torus":
        return FinslerStructure.custom(_quartic_f2, dim=2, label="quartic-torus")
    raise ConfigError(f"unknown metric id {name!r}")


METRIC_IDS = (
    "euclidean",
    "euclidean-3d",
    "quartic-torus",
    "randers-torus",
    "randers-torus-3d",
    "riemannian-sphere",
    "riemannian-torus",
)

_metric_cache = {}


def get_metric(name) -> FinslerStructure:
    if name not in _metric_cache:
        _metric_cache[name] = _make_metric(name)
    return _metric_cache[name]


# -- named forms -----------------------------------------------------------------


def _basis_one_form(n, axis):
    return lambda xs, ys: [1.0 if i == axis else 0.0 for i in range(n)]


def _area_form(n, f):
    def coeffs(xs, ys):
        v = f(xs)
        out = [[0.0] * n for _ in range(n)]
        out[0][1] = v
        out[1][0] = -v
        return out

    return coeffs


FORM_IDS = (
    "area",
    "cos-x1-dx1",
    "dx1",
    "dx2",
    "one",
    "sin-x1",
    "sin-x1-area",
    "sin-x1-dx1",
    "sin-x1-dx2",
)


def get_form(name, s) -> HorizontalForm:
    n = s.dim
    if name == "one":
        return HorizontalForm(0, lambda xs, ys: 1.0, label=name)
    if name == "sin-x1":
        return HorizontalForm(0, lambda xs, ys: gsin(xs[0]), label=name)
    if name == "dx1":
        return HorizontalForm(1, _basis_one_form(n, 0), label=name)
    if name == "dx2":
        if n < 2:
            raise ConfigError("dx2 needs dim >= 2")
        return HorizontalForm(1, _basis_one_form(n, 1), label=name)
    if name == "sin-x1-dx1":
        return HorizontalForm(
            1, lambda xs, ys: [gsin(xs[0]) if i == 0 else 0.0 for i in range(n)], label=name
        )
    if name == "sin-x1-dx2":
        if n < 2:
            raise ConfigError("sin-x1-dx2 needs dim >= 2")
        return HorizontalForm(
            1, lambda xs, ys: [gsin(xs[0]) if i == 1 else 0.0 for i in range(n)], label=name
        )
    if name == "cos-x1-dx1":
        return HorizontalForm(
            1, lambda xs, ys: [gcos(xs[0]) if i == 0 else 0.0 for i in range(n)], label=name
        )
    if name == "area":
        if n < 2:
            raise ConfigError("area form needs dim >= 2")
        return HorizontalForm(2, _area_form(n, lambda xs: 1.0), label=name)
    if name == "sin-x1-area":
        if n < 2:
            raise ConfigError("area form needs dim >= 2")
        return HorizontalForm(2, _area_form(n, lambda xs: gsin(xs[0])), label=name)
    raise ConfigError(f"unknown form id {name!r}")


FIELD_IDS = ("d-phi", "d1", "d2", "sin-x1-d1", "sin-x1-d2")


def get_field(name, s) -> TensorField:
    n = s.dim
    if name == "d1":
        return TensorField.from_vector(lambda xs: [1.0 if i == 0 else 0.0 for i in range(n)], label=name)
    if name in ("d2", "d-phi"):
        if n < 2:
            raise ConfigError(f"{name} needs dim >= 2")
        return TensorField.from_vector(lambda xs: [1.0 if i == 1 else 0.0 for i in range(n)], label=name)
    if name == "sin-x1-d1":
        return TensorField.from_vector(
            lambda xs: [gsin(xs[0]) if i == 0 else 0.0 for i in range(n)], label=name
        )
    if name == "sin-x1-d2":
        if n < 2:
            raise ConfigError("sin-x1-d2 needs dim >= 2")
        return TensorField.from_vector(
            lambda xs: [gsin(xs[0]) if i == 1 else 0.0 for i in range(n)], label=name
        )
    raise ConfigError(f"unknown vector field id {name!r}")


# -- seeded trigonometric generators ----------------------------------------------


def _frequencies(dim, degree):
    out = []
    for k in product(range(-degree, degree + 1), repeat=dim):
        if not any(k) or sum(abs(v) for v in k) > degree:
            continue
        first = next(v for v in k if v != 0)
        if first < 0:
            continue  # one representative per +-k pair
        out.append(k)
    return out


def random_trig_scalar(rng, dim, degree=2, amplitude=1.0):
    """Seeded random trigonometric polynomial on the base manifold."""
    freqs = _frequencies(dim, degree)
    scale = amplitude / math.sqrt(2 * len(freqs) + 1)
    a0 = float(rng.normal()) * scale
    coeffs = [(k, float(rng.normal()) * scale, float(rng.normal()) * scale) for k in freqs]

    def f(xs):
        acc = a0
        for k, ca, cb in coeffs:
            phase = None
            for ki, xi in zip(k, xs):
                if ki == 0:
                    continue
                term = float(ki) * xi
                phase = term if phase is None else phase + term
            acc = acc + ca * gcos(phase) + cb * gsin(phase)
        return acc

    return f


def random_trig_form(rng, s, degree_p, trig_degree=2) -> HorizontalForm:
    """Seeded degree-p form with trigonometric coefficient functions."""
    n = s.dim
    if degree_p == 0:
        f = random_trig_scalar(rng, n, trig_degree)
        return HorizontalForm(0, lambda xs, ys: f(xs), label="trig-random")
    combos = list(combinations(range(n), degree_p))
    fns = {c: random_trig_scalar(rng, n, trig_degree) for c in combos}

    def coeffs(xs, ys):
        vals = {c: fns[c](xs) for c in combos}

        def entry(idx):
            if len(set(idx)) < len(idx):
                return 0.0
            order = tuple(sorted(idx))
            sign = _permutation_sign(idx)
            v = vals[order]
            return v if sign > 0 else -v

        return nested_build(n, degree_p, entry)

    return HorizontalForm(degree_p, coeffs, label="trig-random")


def random_trig_vector(rng, s, trig_degree=2) -> TensorField:
    """Seeded vector field with trigonometric component functions."""
    fns = [random_trig_scalar(rng, s.dim, trig_degree) for _ in range(s.dim)]
    return TensorField.from_vector(lambda xs: [f(xs) for f in fns], label="trig-random")


def _permutation_sign(idx):
    sign = 1
    idx = list(idx)
    for i in range(len(idx)):
        for j in range(i + 1, len(idx)):
            if idx[i] > idx[j]:
                sign = -sign
    return sign


def random_chart_points(rng, s, count):
    """Interior chart points paired with unit tangent directions."""
    pts = []
    for _ in range(count):
        x = []
        for a in range(s.dim):
            lo, hi = s.chart.interior(a)
            pad = 0.0 if s.chart.periodic[a] else 0.1 * (hi - lo)
            x.append(float(rng.uniform(lo + pad, hi - pad)))
        u = rng.normal(size=s.dim)
        u = u / np.linalg.norm(u)
        z = s.normalize_to_indicatrix(x, u)
        pts.append(z)
    return pts


def default_grid(s, tolerance=1e-4) -> QuadratureGrid:
    return QuadratureGrid.for_structure(s, tolerance=tolerance)


def list_builtins() -> dict:
    """Stable catalog of ids the CLI accepts."""
    return {
        "metrics": list(METRIC_IDS),
        "forms": list(FORM_IDS),
        "vector_fields": list(FIELD_IDS),
        "default_grids": {
            "dim2": {"base": [32, 32], "fiber": [64]},
            "dim3": {"base": [16, 16, 16], "fiber": [32, 16]},
        },
    }
