"""Spray, nonlinear connection, Cartan coefficients and covariant derivatives.

The central object is :class:`LocalTower`, a lazily evaluated cache of the
whole connection tower at one evaluation point.  The point coordinates may
be floats (pointwise use), batched numpy arrays (whole quadrature grids at
once) or jets (which is how the curvature layer differentiates the tower:
it simply rebuilds it at jet-valued coordinates).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from . import jets
from .errors import DomainError
from .jets import grad_x, grad_y, grad_wrt
from .metric import (
    FinslerStructure,
    TensorValue,
    cartan_components,
    cartan_trace_components,
    hilbert_components,
    inverse_components,
    metric_components,
)

# how tensor-field derivatives were obtained, for the CLI diagnostics view
DERIVATIVE_PATHS = {"jets": 0, "fd": 0}


def tget(nested, idx):
    for i in idx:
        nested = nested[i]
    return nested


def nested_build(n, rank, fn, prefix=()):
    if rank == 0:
        return fn(prefix)
    return [nested_build(n, rank - 1, fn, prefix + (i,)) for i in range(n)]


def pack(nested, rank):
    """Nested lists of scalars -> ndarray with component axes first."""
    if rank == 0:
        return np.asarray(nested, float)
    children = [pack(c, rank - 1) for c in nested]
    shape = np.broadcast_shapes(*[c.shape for c in children])
    children = [np.broadcast_to(c, shape) for c in children]
    return np.stack(children, axis=0)


class LocalTower:
    """Connection tower at one point, computed lazily and memoized.

    Attribute index conventions (all nested lists, component order as in the
    attribute name): ``Gamma[i][j][k]`` is the horizontal coefficient with
    upper index i, ``N[i][j]`` the nonlinear connection, ``flag[i][j][k]``
    the curvature of the nonlinear connection, equal to the y-contraction of
    the hh-curvature.  Derivative prefixes: ``dX_x[c]`` is the plain x
    partial along axis c, ``dX_y[m]`` the fiber partial.
    """

    def __init__(self, s: FinslerStructure, xs, ys):
        self.s = s
        self.xs = list(xs)
        self.ys = list(ys)
        self.n = s.dim

    # -- zeroth layer --------------------------------------------------------

    @cached_property
    def f2(self):
        return self.s.f2(self.xs, self.ys)

    @cached_property
    def F(self):
        return jets.gsqrt(self.f2)

    @cached_property
    def g(self):
        return metric_components(self.s, self.xs, self.ys)

    @cached_property
    def gi(self):
        return inverse_components(self.g, self.n)

    @cached_property
    def C(self):
        return cartan_components(self.s, self.xs, self.ys)

    @cached_property
    def Cmix(self):
        n = self.n
        return [
            [
                [
                    sum_terms(self.gi[i][l] * self.C[l][j][k] for l in range(n))
                    for k in range(n)
                ]
                for j in range(n)
            ]
            for i in range(n)
        ]

    @cached_property
    def Tt(self):
        return cartan_trace_components(self.s, self.xs, self.ys, g_inv=self.gi, C=self.C)

    @cached_property
    def ell(self):
        return hilbert_components(self.s, self.xs, self.ys)

    @cached_property
    def y_lower(self):
        n = self.n
        return [sum_terms(self.g[i][j] * self.ys[j] for j in range(n)) for i in range(n)]

    # -- spray and nonlinear connection ---------------------------------------

    @cached_property
    def dxf2(self):
        return grad_x(self.s.f2, self.xs, self.ys)

    @cached_property
    def G(self):
        n = self.n
        dxdy = grad_x(lambda a, b: grad_y(self.s.f2, a, b), self.xs, self.ys)
        # dxdy[c][h] is the x_c partial of the y_h partial of F^2
        rhs = [
            sum_terms(dxdy[j][h] * self.ys[j] for j in range(n)) - self.dxf2[h]
            for h in range(n)
        ]
        return [
            0.25 * sum_terms(self.gi[i][h] * rhs[h] for h in range(n))
            for i in range(n)
        ]

    @cached_property
    def N(self):
        n = self.n
        dG = grad_y(lambda a, b: LocalTower(self.s, a, b).G, self.xs, self.ys)
        return [[dG[j][i] for j in range(n)] for i in range(n)]

    # -- Cartan horizontal coefficients ----------------------------------------

    @cached_property
    def dgx(self):
        return grad_x(lambda a, b: metric_components(self.s, a, b), self.xs, self.ys)

    @cached_property
    def deltag(self):
        """deltag[c][i][j]: horizontal basis derivative of g_ij along axis c."""
        n = self.n
        return [
            [
                [
                    self.dgx[c][i][j]
                    - sum_terms(self.N[m][c] * (2.0 * self.C[m][i][j]) for m in range(n))
                    for j in range(n)
                ]
                for i in range(n)
            ]
            for c in range(n)
        ]

    @cached_property
    def Gamma(self):
        n = self.n
        dg = self.deltag
        out = [[[None] * n for _ in range(n)] for _ in range(n)]
        for i in range(n):
            for j in range(n):
                for k in range(j, n):
                    acc = sum_terms(
                        self.gi[i][l] * (dg[j][l][k] + dg[k][j][l] - dg[l][j][k])
                        for l in range(n)
                    )
                    val = 0.5 * acc
                    out[i][j][k] = val
                    out[i][k][j] = val
        return out

    # -- Cartan trace derivatives ------------------------------------------------

    @cached_property
    def dT_x(self):
        return grad_x(lambda a, b: cartan_trace_components(self.s, a, b), self.xs, self.ys)

    @cached_property
    def dT_y(self):
        return grad_y(lambda a, b: cartan_trace_components(self.s, a, b), self.xs, self.ys)

    @cached_property
    def nabla_h_T(self):
        """nabla_h_T[h][j]: horizontal covariant derivative of the Cartan trace."""
        n = self.n
        return [
            [
                self.dT_x[h][j]
                - sum_terms(self.N[m][h] * self.dT_y[m][j] for m in range(n))
                - sum_terms(self.Gamma[p][j][h] * self.Tt[p] for p in range(n))
                for j in range(n)
            ]
            for h in range(n)
        ]

    @cached_property
    def nabla0T(self):
        n = self.n
        return [
            sum_terms(self.ys[h] * self.nabla_h_T[h][j] for h in range(n))
            for j in range(n)
        ]

    # -- first derivatives of the tower (feed curvature and second covariants) ----

    @cached_property
    def dN_x(self):
        return grad_x(lambda a, b: LocalTower(self.s, a, b).N, self.xs, self.ys)

    @cached_property
    def dN_y(self):
        return grad_y(lambda a, b: LocalTower(self.s, a, b).N, self.xs, self.ys)

    @cached_property
    def dGamma_x(self):
        return grad_x(lambda a, b: LocalTower(self.s, a, b).Gamma, self.xs, self.ys)

    @cached_property
    def dGamma_y(self):
        return grad_y(lambda a, b: LocalTower(self.s, a, b).Gamma, self.xs, self.ys)

    @cached_property
    def deltaGamma(self):
        """deltaGamma[c][h][j][k]: horizontal derivative of Gamma along axis c."""
        n = self.n
        return [
            nested_build(
                n,
                3,
                lambda idx, c=c: self.dGamma_x[c][idx[0]][idx[1]][idx[2]]
                - sum_terms(
                    self.N[m][c] * self.dGamma_y[m][idx[0]][idx[1]][idx[2]]
                    for m in range(n)
                ),
            )
            for c in range(n)
        ]

    @cached_property
    def deltaN(self):
        """deltaN[c][i][k]: horizontal derivative of N^i_k along axis c."""
        n = self.n
        return [
            [
                [
                    self.dN_x[c][i][k]
                    - sum_terms(self.N[m][c] * self.dN_y[m][i][k] for m in range(n))
                    for k in range(n)
                ]
                for i in range(n)
            ]
            for c in range(n)
        ]

    @cached_property
    def flag(self):
        """Curvature of the nonlinear connection; equals y^m R^i_mjk."""
        n = self.n
        return [
            [
                [self.deltaN[j][i][k] - self.deltaN[k][i][j] for k in range(n)]
                for j in range(n)
            ]
            for i in range(n)
        ]

    @cached_property
    def dCmix_x(self):
        return grad_x(lambda a, b: LocalTower(self.s, a, b).Cmix, self.xs, self.ys)

    @cached_property
    def dCmix_y(self):
        return grad_y(lambda a, b: LocalTower(self.s, a, b).Cmix, self.xs, self.ys)

    @cached_property
    def d_nabla0T_x(self):
        return grad_x(lambda a, b: LocalTower(self.s, a, b).nabla0T, self.xs, self.ys)

    @cached_property
    def d_nabla0T_y(self):
        return grad_y(lambda a, b: LocalTower(self.s, a, b).nabla0T, self.xs, self.ys)

    @cached_property
    def nabla_nabla0T(self):
        """nabla_nabla0T[i][r]: horizontal covariant derivative of the 1-form nabla0T."""
        n = self.n
        return [
            [
                self.d_nabla0T_x[i][r]
                - sum_terms(self.N[m][i] * self.d_nabla0T_y[m][r] for m in range(n))
                - sum_terms(self.Gamma[p][r][i] * self.nabla0T[p] for p in range(n))
                for r in range(n)
            ]
            for i in range(n)
        ]


def sum_terms(it):
    acc = None
    for t in it:
        acc = t if acc is None else acc + t
    return 0.0 if acc is None else acc


# -- covariant derivatives of tensor fields ------------------------------------


def cov_h(tower, val, dx, dy, variance):
    """Horizontal covariant derivative; returns nested [h][components].

    ``val`` is the nested component pytree, ``dx[c]`` and ``dy[m]`` its plain
    coordinate partials.  Sign rule: minus Gamma terms on lower slots, plus
    on upper slots.
    """
    n = tower.n
    rank = len(variance)
    N, Gamma = tower.N, tower.Gamma

    def entry(h, idx):
        acc = tget(dx[h], idx)
        for m in range(n):
            acc = acc - N[m][h] * tget(dy[m], idx)
        for t, var in enumerate(variance):
            it = idx[t]
            for p in range(n):
                jdx = idx[:t] + (p,) + idx[t + 1 :]
                if var == "l":
                    acc = acc - tget(val, jdx) * Gamma[p][it][h]
                else:
                    acc = acc + tget(val, jdx) * Gamma[it][p][h]
        return acc

    return [nested_build(n, rank, lambda idx, h=h: entry(h, idx)) for h in range(n)]


def cov_v(tower, val, dy, variance):
    """Vertical covariant derivative; returns nested [h][components]."""
    n = tower.n
    rank = len(variance)
    Cmix = tower.Cmix

    def entry(h, idx):
        acc = tget(dy[h], idx)
        for t, var in enumerate(variance):
            it = idx[t]
            for p in range(n):
                jdx = idx[:t] + (p,) + idx[t + 1 :]
                if var == "l":
                    acc = acc - tget(val, jdx) * Cmix[p][it][h]
                else:
                    acc = acc + tget(val, jdx) * Cmix[it][p][h]
        return acc

    return [nested_build(n, rank, lambda idx, h=h: entry(h, idx)) for h in range(n)]


def cov_hh(tower, p2, variance):
    """Second horizontal covariant derivative from second-order partials.

    ``p2`` is the 6-tuple (val, dx, dy, dxx, dxy, dyy) of a tensor field,
    with ``dxy[c][m]`` the x_c partial of the y_m partial.  Returns nested
    ``out[a][b][components]`` holding nabla_a nabla_b T.
    """
    n = tower.n
    rank = len(variance)
    val, dx, dy, dxx, dxy, dyy = p2
    N, Gamma = tower.N, tower.Gamma
    dN_x, dN_y = tower.dN_x, tower.dN_y
    dG_x, dG_y = tower.dGamma_x, tower.dGamma_y

    W = cov_h(tower, val, dx, dy, variance)

    def dW_entry(kind, c, b, idx):
        # plain partial (x if kind == 0 else y, axis c) of (nabla_b T)_idx
        if kind == 0:
            acc = tget(dxx[c][b], idx)
            dN, dG, dT1 = dN_x, dG_x, dx
            for m in range(n):
                acc = acc - dN[c][m][b] * tget(dy[m], idx) - N[m][b] * tget(dxy[c][m], idx)
        else:
            acc = tget(dxy[b][c], idx)
            dN, dG, dT1 = dN_y, dG_y, dy
            for m in range(n):
                acc = acc - dN[c][m][b] * tget(dy[m], idx) - N[m][b] * tget(dyy[c][m], idx)
        for t, var in enumerate(variance):
            it = idx[t]
            for p in range(n):
                jdx = idx[:t] + (p,) + idx[t + 1 :]
                if var == "l":
                    acc = acc - tget(val, jdx) * dG[c][p][it][b] - tget(dT1[c], jdx) * Gamma[p][it][b]
                else:
                    acc = acc + tget(val, jdx) * dG[c][it][p][b] + tget(dT1[c], jdx) * Gamma[it][p][b]
        return acc

    dWx = [
        [nested_build(n, rank, lambda idx, c=c, b=b: dW_entry(0, c, b, idx)) for b in range(n)]
        for c in range(n)
    ]
    dWy = [
        [nested_build(n, rank, lambda idx, c=c, b=b: dW_entry(1, c, b, idx)) for b in range(n)]
        for c in range(n)
    ]
    return cov_h(tower, W, dWx, dWy, "l" + variance)


# -- tensor fields ---------------------------------------------------------------


class TensorField:
    """A tensor field on the slit tangent bundle.

    The evaluator must accept arbitrary nonzero y near the indicatrix; fields
    that are only defined on the sphere bundle should be wrapped with
    :meth:`from_sphere_evaluator`, which extends them by the declared
    homogeneity degree.  A ``generic`` evaluator takes lists of scalars and
    may be fed jets; a ``pointwise`` evaluator only sees float arrays and is
    differentiated by finite differences instead.
    """

    def __init__(self, fn, variance, homogeneity_degree=0, mode="generic", label=""):
        self.fn = fn
        self.variance = variance
        self.homogeneity_degree = int(homogeneity_degree)
        if mode not in ("generic", "pointwise"):
            raise ValueError("mode must be 'generic' or 'pointwise'")
        self.mode = mode
        self.label = label

    @property
    def rank(self):
        return len(self.variance)

    @classmethod
    def from_vector(cls, vfn, label=""):
        """Vector field on the base manifold, components independent of y."""
        return cls(lambda xs, ys: vfn(xs), "u", label=label)

    @classmethod
    def from_sphere_evaluator(cls, s, fn, variance, homogeneity_degree=0, label=""):
        """Extend an SM-only evaluator to TM0 by positive homogeneity in y."""

        def extended(xs, ys, _fn=fn, _d=homogeneity_degree, _s=s):
            F = jets.gsqrt(_s.f2(xs, ys))
            invF = jets._reciprocal(F) if isinstance(F, jets.Jet) else 1.0 / F
            unit = [y * invF for y in ys]
            comps = _fn(xs, unit)
            if _d == 0:
                return comps
            scale = F ** _d if _d >= 0 else invF ** (-_d)
            return jets.tree_map(lambda c: c * scale, comps)

        return cls(extended, variance, homogeneity_degree, label=label)

    def components(self, xs, ys):
        if self.mode == "generic":
            return self.fn(xs, ys)
        x = np.asarray([float(v) for v in xs])
        y = np.asarray([float(v) for v in ys])
        return self.fn(x, y).tolist()

    def partials(self, xs, ys):
        """(value, dx, dy) with dx[c] and dy[m] pytrees of plain partials."""
        if self.mode == "generic":
            DERIVATIVE_PATHS["jets"] += 1
            return (
                self.fn(xs, ys),
                grad_x(self.fn, xs, ys),
                grad_y(self.fn, xs, ys),
            )
        DERIVATIVE_PATHS["fd"] += 1
        n = len(xs)
        val = self.components(xs, ys)
        dx = [self._fd_dir(xs, ys, 0, c) for c in range(n)]
        dy = [self._fd_dir(xs, ys, 1, m) for m in range(n)]
        return val, dx, dy

    def partials2(self, xs, ys):
        """(val, dx, dy, dxx, dxy, dyy); second partials of every component."""
        if self.mode != "generic":
            raise DomainError("second derivatives require a jet-capable evaluator")
        fn = self.fn
        return (
            fn(xs, ys),
            grad_x(fn, xs, ys),
            grad_y(fn, xs, ys),
            grad_x(lambda a, b: grad_x(fn, a, b), xs, ys),
            grad_x(lambda a, b: grad_y(fn, a, b), xs, ys),
            grad_y(lambda a, b: grad_y(fn, a, b), xs, ys),
        )

    def _fd_dir(self, xs, ys, which, axis, step=1e-4):
        coord = (xs, ys)[which][axis]
        h = step * (1.0 + abs(float(coord)))

        def shifted(d):
            sx, sy = list(xs), list(ys)
            (sx if which == 0 else sy)[axis] = coord + d
            return np.asarray(self.components(sx, sy), float)

        v = (
            -shifted(2 * h) + 8.0 * shifted(h) - 8.0 * shifted(-h) + shifted(-2 * h)
        ) / (12.0 * h)
        return v.tolist()


# -- public pointwise operations --------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConnectionAtPoint:
    """Spray, nonlinear connection and Cartan coefficients at one point."""

    G: np.ndarray
    N: np.ndarray
    Gamma: np.ndarray
    Cv: np.ndarray
    point: object
    n_gamma_defect: float  # |N - Gamma.y|, reported rather than enforced


def _point_tower(s, z, y=None):
    x, yv = s._coords(z, y)
    return LocalTower(s, [float(v) for v in x], [float(v) for v in yv]), (x, yv)


def spray(s, z, y=None):
    tower, pt = _point_tower(s, z, y)
    return TensorValue(pack(tower.G, 1), "u", pt)


def nonlinear_connection(s, z, y=None):
    tower, pt = _point_tower(s, z, y)
    return TensorValue(pack(tower.N, 2), "ul", pt)


def delta_derivative(s, f, z, axis, y=None):
    """Horizontal basis derivative of a generic scalar field along one axis."""
    tower, _ = _point_tower(s, z, y)
    dxf = grad_x(f, tower.xs, tower.ys)
    dyf = grad_y(f, tower.xs, tower.ys)
    val = dxf[axis] - sum_terms(tower.N[m][axis] * dyf[m] for m in range(tower.n))
    return float(jets.primal(val))


def cartan_coefficients(s, z, y=None):
    tower, pt = _point_tower(s, z, y)
    G = pack(tower.G, 1)
    N = pack(tower.N, 2)
    Gamma = pack(tower.Gamma, 3)
    Cv = pack(tower.Cmix, 3)
    yv = np.asarray(pt[1], float)
    defect = float(np.max(np.abs(N - np.einsum("ijk,k->ij", Gamma, yv))))
    return ConnectionAtPoint(G=G, N=N, Gamma=Gamma, Cv=Cv, point=pt, n_gamma_defect=defect)


def h_covariant_derivative(s, T: TensorField, z, y=None):
    """Horizontal covariant derivative; the new lower slot is the last axis."""
    tower, pt = _point_tower(s, z, y)
    val, dx, dy = T.partials(tower.xs, tower.ys)
    nab = cov_h(tower, val, dx, dy, T.variance)
    data = np.moveaxis(pack(nab, T.rank + 1), 0, -1)
    return TensorValue(data, T.variance + "l", pt)


def v_covariant_derivative(s, T: TensorField, z, y=None):
    """Vertical covariant derivative; the new lower slot is the last axis."""
    tower, pt = _point_tower(s, z, y)
    val, _, dy = T.partials(tower.xs, tower.ys)
    nab = cov_v(tower, val, dy, T.variance)
    data = np.moveaxis(pack(nab, T.rank + 1), 0, -1)
    return TensorValue(data, T.variance + "l", pt)


def nabla_0(s, T: TensorField, z, y=None):
    """Covariant derivative along the tautological direction y."""
    tower, pt = _point_tower(s, z, y)
    val, dx, dy = T.partials(tower.xs, tower.ys)
    nab = cov_h(tower, val, dx, dy, T.variance)
    n = tower.n
    acc = nested_build(
        n,
        T.rank,
        lambda idx: sum_terms(tower.ys[h] * tget(nab[h], idx) for h in range(n)),
    )
    return TensorValue(pack(acc, T.rank), T.variance, pt)
