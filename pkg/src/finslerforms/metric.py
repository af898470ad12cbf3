"""Finsler structures and the zeroth layer of the tensor tower.

A :class:`FinslerStructure` evaluates F(x, y) and, through the jet engine,
the fundamental tensor, Cartan tensor, Cartan trace and Hilbert form at any
point of the slit tangent bundle.  All component helpers are generic: they
accept floats, batched numpy arrays or jets, so higher layers can
differentiate straight through them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import jets
from .errors import (
    ConfigError,
    DomainError,
    NotPositiveDefinite,
    OutOfChart,
    SingularMetric,
    ZeroVector,
)
from .jets import grad_wrt, grad_x, grad_y, gsqrt

TWO_PI = 2.0 * math.pi

INDICATRIX_TOL = 1e-10
RENORMALIZE_TOL = 1e-6
CHOLESKY_PIVOT = 1e-12


@dataclass(frozen=True)
class ChartSpec:
    """Single-chart domain: per-axis bounds, periodicity and excluded margins."""

    bounds: tuple
    periodic: tuple
    excluded_margin: tuple = None

    def __post_init__(self):
        bounds = tuple((float(a), float(b)) for a, b in self.bounds)
        periodic = tuple(bool(p) for p in self.periodic)
        margin = self.excluded_margin
        if margin is None:
            margin = tuple(0.0 for _ in bounds)
        margin = tuple(float(m) for m in margin)
        if not (len(bounds) == len(periodic) == len(margin)):
            raise ConfigError("chart axis lists have inconsistent lengths")
        for (lo, hi), m in zip(bounds, margin):
            if not hi > lo:
                raise ConfigError(f"empty chart interval [{lo}, {hi}]")
            if m < 0.0 or 2.0 * m >= hi - lo:
                raise ConfigError("excluded_margin must be nonnegative and strictly inside bounds")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "periodic", periodic)
        object.__setattr__(self, "excluded_margin", margin)

    @property
    def dim(self):
        return len(self.bounds)

    def interior(self, axis):
        """Usable interval on one axis, margins removed."""
        lo, hi = self.bounds[axis]
        m = self.excluded_margin[axis]
        return lo + m, hi - m

    def contains(self, x):
        x = np.asarray(x, float)
        for a in range(self.dim):
            if self.periodic[a]:
                continue
            lo, hi = self.interior(a)
            if x[a] < lo - 1e-12 or x[a] > hi + 1e-12:
                return False
        return True

    @classmethod
    def torus(cls, dim):
        return cls(
            bounds=tuple((0.0, TWO_PI) for _ in range(dim)),
            periodic=tuple(True for _ in range(dim)),
        )


def default_chart(dim):
    return ChartSpec.torus(dim)


@dataclass(frozen=True, eq=False)
class SpherePoint:
    """A point z = (x, y) of the sphere bundle, F(x, y) = 1."""

    x: np.ndarray
    y: np.ndarray

    def __iter__(self):
        return iter((self.x, self.y))


@dataclass(frozen=True, eq=False)
class TensorValue:
    """Component array at a point with an explicit variance signature.

    ``variance`` is a string over {'u', 'l'}, one character per slot, in the
    order of the data axes.  Derivative slots appended by covariant
    derivatives sit last.
    """

    data: np.ndarray
    variance: str
    point: object

    @property
    def rank(self):
        return len(self.variance)


# -- generic component helpers -----------------------------------------------


def metric_components(s, xs, ys):
    """Fundamental tensor g_ij = half the y-Hessian of F^2 (generic)."""
    n = s.dim
    rows = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            t1 = jets._new_tag()
            t2 = jets._new_tag()
            seeded = list(ys)
            seeded[i] = jets.Jet([seeded[i], 1.0], t1)
            seeded[j] = (
                jets.Jet([seeded[j], 1.0], t2)
                if j != i
                else jets.Jet([seeded[i], 1.0], t2)
            )
            val = s.f2(xs, seeded)
            val = jets._taylor_coeff(val, t2, 1)
            val = jets._taylor_coeff(val, t1, 1)
            gij = 0.5 * val if not isinstance(val, jets.Jet) else val * 0.5
            rows[i][j] = gij
            rows[j][i] = gij
    return rows


def inverse_components(g, n):
    """Matrix inverse by adjugate (n <= 3) or unpivoted elimination.

    The adjugate form stays valid for jet-valued entries; elimination
    without pivoting is safe because g is positive-definite.
    """
    if n == 1:
        return [[1.0 / g[0][0] if not isinstance(g[0][0], jets.Jet) else g[0][0].reciprocal()]]
    if n == 2:
        det = g[0][0] * g[1][1] - g[0][1] * g[1][0]
        inv = jets._reciprocal(det)
        return [
            [g[1][1] * inv, (-g[0][1]) * inv],
            [(-g[1][0]) * inv, g[0][0] * inv],
        ]
    if n == 3:
        c00 = g[1][1] * g[2][2] - g[1][2] * g[2][1]
        c01 = g[1][2] * g[2][0] - g[1][0] * g[2][2]
        c02 = g[1][0] * g[2][1] - g[1][1] * g[2][0]
        det = g[0][0] * c00 + g[0][1] * c01 + g[0][2] * c02
        inv = jets._reciprocal(det)
        adj = [
            [c00, g[0][2] * g[2][1] - g[0][1] * g[2][2], g[0][1] * g[1][2] - g[0][2] * g[1][1]],
            [c01, g[0][0] * g[2][2] - g[0][2] * g[2][0], g[0][2] * g[1][0] - g[0][0] * g[1][2]],
            [c02, g[0][1] * g[2][0] - g[0][0] * g[2][1], g[0][0] * g[1][1] - g[0][1] * g[1][0]],
        ]
        return [[adj[i][j] * inv for j in range(3)] for i in range(3)]
    # general fallback, SPD so no pivoting
    a = [list(row) for row in g]
    inv = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    for col in range(n):
        piv = jets._reciprocal(a[col][col])
        a[col] = [v * piv for v in a[col]]
        inv[col] = [v * piv for v in inv[col]]
        for r in range(n):
            if r == col:
                continue
            f = a[r][col]
            a[r] = [v - f * w for v, w in zip(a[r], a[col])]
            inv[r] = [v - f * w for v, w in zip(inv[r], inv[col])]
    return inv


def cartan_components(s, xs, ys):
    """Totally symmetric Cartan tensor C_kij = half of the y-derivative of g."""
    n = s.dim
    dg = grad_y(lambda xs, ys: metric_components(s, xs, ys), xs, ys)
    C = [[[None] * n for _ in range(n)] for _ in range(n)]
    for k in range(n):
        for i in range(n):
            for j in range(n):
                C[k][i][j] = 0.5 * dg[k][i][j] if not isinstance(dg[k][i][j], jets.Jet) else dg[k][i][j] * 0.5
    return C


def cartan_trace_components(s, xs, ys, g_inv=None, C=None):
    n = s.dim
    if g_inv is None:
        g_inv = inverse_components(metric_components(s, xs, ys), n)
    if C is None:
        C = cartan_components(s, xs, ys)
    out = []
    for j in range(n):
        acc = 0.0
        for i in range(n):
            for k in range(n):
                acc = acc + g_inv[i][k] * C[i][k][j]
        out.append(acc)
    return out


def hilbert_components(s, xs, ys):
    """Hilbert form ell_i = dF/dy^i, computed from the gradient of F^2."""
    f2 = s.f2(xs, ys)
    dyf2 = grad_y(s.f2, xs, ys)
    inv2f = jets._reciprocal(2.0 * gsqrt(f2)) if isinstance(f2, jets.Jet) else 1.0 / (2.0 * gsqrt(f2))
    return [d * inv2f for d in dyf2]


# -- the structure itself -----------------------------------------------------


class FinslerStructure:
    """A Finsler metric family on a single chart.

    Construction validates positivity and strong convexity by sampling: the
    fundamental tensor must pass a Cholesky check at a lattice of chart
    points and directions.
    """

    def __init__(self, dim, chart, family, f2_generic, label="", base_independent=False, params=None):
        self.dim = int(dim)
        self.chart = chart if chart is not None else default_chart(dim)
        if self.chart.dim != self.dim:
            raise ConfigError("chart dimension does not match metric dimension")
        self.family = family
        self._f2 = f2_generic
        self.label = label or family
        self.base_independent = bool(base_independent)
        self.params = dict(params or {})
        self._validate()

    # generic scalar evaluation, the root of the whole tower
    def f2(self, xs, ys):
        return self._f2(xs, ys)

    def __repr__(self):
        return f"FinslerStructure({self.label!r}, dim={self.dim})"

    # -- constructors --------------------------------------------------------

    @classmethod
    def euclidean(cls, dim=2, chart=None):
        def f2(xs, ys):
            acc = ys[0] * ys[0]
            for k in range(1, len(ys)):
                acc = acc + ys[k] * ys[k]
            return acc

        return cls(dim, chart, "euclidean", f2, label="euclidean", base_independent=True)

    @classmethod
    def riemannian(cls, a, dim=None, chart=None, label="riemannian"):
        """Riemannian structure F = sqrt(a_ij y^i y^j).

        ``a`` is a constant symmetric matrix or a callable ``a(xs)`` returning
        nested lists of generic scalars.
        """
        a_field, const, dim = _matrix_field(a, dim)

        def f2(xs, ys):
            aij = a_field(xs)
            acc = 0.0
            for i in range(dim):
                for j in range(dim):
                    acc = acc + aij[i][j] * (ys[i] * ys[j])
            return acc

        return cls(dim, chart, "riemannian", f2, label=label,
                   base_independent=const, params={"a": a})

    @classmethod
    def randers(cls, a, b, dim=None, chart=None, label="randers"):
        """Randers structure F = sqrt(a_ij y^i y^j) + b_i y^i."""
        a_field, a_const, dim = _matrix_field(a, dim)
        b_field, b_const = _vector_field(b, dim)

        def f2(xs, ys):
            aij = a_field(xs)
            bi = b_field(xs)
            quad = 0.0
            lin = 0.0
            for i in range(dim):
                lin = lin + bi[i] * ys[i]
                for j in range(dim):
                    quad = quad + aij[i][j] * (ys[i] * ys[j])
            F = gsqrt(quad) + lin
            return F * F

        s = cls(dim, chart, "randers", f2, label=label,
                base_independent=a_const and b_const, params={"a": a, "b": b})
        s._check_randers(a_field, b_field)
        return s

    @classmethod
    def custom(cls, f2_generic, dim, chart=None, label="custom"):
        return cls(dim, chart, "custom", f2_generic, label=label)

    # -- validation ------------------------------------------------------------

    def _sample_points(self, nx=3, ndir=6, rng=None):
        axes = []
        for a in range(self.dim):
            lo, hi = self.chart.interior(a)
            pad = 0.15 * (hi - lo)
            axes.append(np.linspace(lo + pad, hi - pad, nx))
        mesh = np.meshgrid(*axes, indexing="ij")
        xs = np.stack([m.ravel() for m in mesh], axis=-1)
        rng = rng or np.random.default_rng(20240601)
        dirs = rng.normal(size=(ndir, self.dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        return xs, dirs

    def _validate(self):
        xs, dirs = self._sample_points()
        for x in xs:
            for u in dirs:
                f2 = self.f2(list(x), list(u))
                if not np.isfinite(f2) or f2 <= 0.0:
                    raise NotPositiveDefinite(
                        f"{self.label}: F^2 not positive at x={x.tolist()}, y={u.tolist()}"
                    )
                g = np.array(metric_components(self, list(x), list(u)), float)
                _cholesky_check(g, where=f"x={x.tolist()}, y={u.tolist()}", label=self.label)

    def _check_randers(self, a_field, b_field):
        xs, _ = self._sample_points()
        for x in xs:
            a = np.array(a_field(list(x)), float)
            b = np.array(b_field(list(x)), float)
            norm = float(np.sqrt(b @ np.linalg.solve(a, b)))
            if norm >= 1.0:
                raise ConfigError(
                    f"randers drift one-form too large: the a-norm of b is {norm:.6f} >= 1 "
                    f"at x={x.tolist()}; positivity of F fails"
                )

    # -- chart and point plumbing ----------------------------------------------

    def _check_chart(self, x):
        if not self.chart.contains(x):
            raise OutOfChart(f"x={np.asarray(x).tolist()} outside chart domain")

    def _check_nonzero(self, y):
        y = np.asarray(y, float)
        if float(np.max(np.abs(y))) == 0.0:
            raise ZeroVector("tangent vector is zero")

    def F(self, x, y):
        """Evaluate the Finsler norm at a chart point and nonzero tangent."""
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        self._check_nonzero(y)
        self._check_chart(x)
        return float(gsqrt(self.f2(list(x), list(y))))

    def sphere_point(self, x, y):
        """Construct a validated point of SM, renormalizing tiny drift."""
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        self._check_nonzero(y)
        self._check_chart(x)
        f = self.F(x, y)
        if abs(f - 1.0) > RENORMALIZE_TOL:
            raise DomainError(
                f"F(x,y)={f:.3e} is not within {RENORMALIZE_TOL:.0e} of 1; "
                "normalize with normalize_to_indicatrix first"
            )
        return SpherePoint(x=x, y=y / f)

    def normalize_to_indicatrix(self, x, u):
        """Radial projection of a nonzero tangent onto the unit sphere of F."""
        x = np.asarray(x, float)
        u = np.asarray(u, float)
        self._check_nonzero(u)
        self._check_chart(x)
        f = float(gsqrt(self.f2(list(x), list(u))))
        return SpherePoint(x=x, y=u / f)

    # -- pointwise tensor operations --------------------------------------------

    def _coords(self, z, y=None):
        if y is not None:
            x, yv = z, y
        else:
            x, yv = z
        x = np.asarray(x, float)
        yv = np.asarray(yv, float)
        self._check_nonzero(yv)
        self._check_chart(x)
        return x, yv

    def fundamental_tensor(self, z, y=None):
        x, yv = self._coords(z, y)
        g = np.array(metric_components(self, list(x), list(yv)), float)
        _cholesky_check(g, where=f"x={x.tolist()}, y={yv.tolist()}", label=self.label)
        return TensorValue(g, "ll", (x, yv))

    def inverse_metric(self, z, y=None):
        x, yv = self._coords(z, y)
        g = metric_components(self, list(x), list(yv))
        gi = np.array(inverse_components(g, self.dim), float)
        if not np.all(np.isfinite(gi)):
            raise SingularMetric("inverse metric is not finite")
        return TensorValue(gi, "uu", (x, yv))

    def cartan_tensor(self, z, y=None):
        x, yv = self._coords(z, y)
        C = np.array(cartan_components(self, list(x), list(yv)), float)
        return TensorValue(C, "lll", (x, yv))

    def cartan_trace(self, z, y=None):
        x, yv = self._coords(z, y)
        T = np.array(cartan_trace_components(self, list(x), list(yv)), float)
        return TensorValue(T, "l", (x, yv))

    def hilbert_form(self, z, y=None):
        x, yv = self._coords(z, y)
        ell = np.array(hilbert_components(self, list(x), list(yv)), float)
        return TensorValue(ell, "l", (x, yv))


def _cholesky_check(g, where, label):
    try:
        L = np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(f"{label}: fundamental tensor not positive-definite at {where}")
    scale = max(1.0, float(np.max(np.abs(np.diag(g)))))
    if float(np.min(np.diag(L))) <= CHOLESKY_PIVOT * scale:
        raise NotPositiveDefinite(f"{label}: Cholesky pivot below threshold at {where}")


def _matrix_field(a, dim):
    if callable(a):
        if dim is None:
            raise ConfigError("dim is required for a callable coefficient field")
        return a, False, int(dim)
    arr = np.asarray(a, float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ConfigError("coefficient matrix must be square")
    if not np.allclose(arr, arr.T, atol=1e-12):
        raise ConfigError("coefficient matrix must be symmetric")
    dim = arr.shape[0] if dim is None else int(dim)
    if dim != arr.shape[0]:
        raise ConfigError("dim does not match coefficient matrix size")
    rows = [[float(v) for v in row] for row in arr]
    return (lambda xs: rows), True, dim


def _vector_field(b, dim):
    if callable(b):
        return b, False
    vec = [float(v) for v in np.asarray(b, float)]
    if len(vec) != dim:
        raise ConfigError("drift vector length does not match dim")
    return (lambda xs: vec), True
