"""Horizontal p-forms on the sphere bundle and their differential operators.

Forms are represented extensionally: a :class:`HorizontalForm` carries a
coefficient evaluator over the slit tangent bundle, and every operator
returns a new form whose evaluator composes the machinery at whatever point
(or batch of points, or jet) it is asked for.  Grids enter only through the
quadrature module.

Conventions.  A degree-p form is stored as its full antisymmetric
coefficient array; the horizontal differential is the plain (p+1)-term
alternation of the covariant derivative with no factorial prefactor, and
the pointwise inner product carries 1/p!.  Under these choices the
differential and co-differential are numerically adjoint with respect to
the sphere-bundle inner product, which is the invariant the test suite
pins down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Callable

import numpy as np

from . import jets
from .connection import (
    LocalTower,
    TensorField,
    _point_tower,
    cov_h,
    cov_hh,
    cov_v,
    nested_build,
    pack,
    sum_terms,
    tget,
)
from .errors import (
    DegreeMismatch,
    DegreeOverflow,
    DegreeUnderflow,
    DomainError,
)
from .jets import grad_x, grad_y
from .metric import TensorValue


@dataclass(frozen=True, eq=False)
class HorizontalForm:
    """Antisymmetric coefficient field phi_{i1..ip}(x, y) of a horizontal form.

    ``coeffs(xs, ys)`` returns nested lists over p component axes (a bare
    scalar for p = 0) and must accept jets, so operators can differentiate
    through it.
    """

    degree: int
    coeffs: Callable
    label: str = ""

    def at(self, s, z, y=None):
        """Packed coefficient array at a single validated point."""
        x, yv = s._coords(z, y)
        val = self.coeffs([float(v) for v in x], [float(v) for v in yv])
        return TensorValue(pack(val, self.degree), "l" * self.degree, (x, yv))


def zero_form(n, degree, label="0"):
    def coeffs(xs, ys):
        return nested_build(n, degree, lambda idx: 0.0)

    return HorizontalForm(degree, coeffs, label=label)


def form_partials(phi: HorizontalForm, xs, ys):
    val = phi.coeffs(xs, ys)
    dx = grad_x(phi.coeffs, xs, ys)
    dy = grad_y(phi.coeffs, xs, ys)
    return val, dx, dy


# -- operator kernels (work at any tower: pointwise, batched or jet-valued) ----


def dH_coeffs(tower: LocalTower, phi: HorizontalForm):
    """Alternated horizontal covariant derivative, degree p -> p + 1."""
    n = tower.n
    p = phi.degree
    val, dx, dy = form_partials(phi, tower.xs, tower.ys)
    nab = cov_h(tower, val, dx, dy, "l" * p)  # nab[h][I]

    def entry(idx):
        acc = None
        for k in range(p + 1):
            rest = idx[:k] + idx[k + 1 :]
            term = tget(nab[idx[k]], rest)
            if k % 2:
                term = -term
            acc = term if acc is None else acc + term
        return acc

    return nested_build(n, p + 1, entry)


def deltaH_coeffs(tower: LocalTower, psi: HorizontalForm):
    """Horizontal co-differential, degree q -> q - 1."""
    n = tower.n
    q = psi.degree
    val, dx, dy = form_partials(psi, tower.xs, tower.ys)
    nab = cov_h(tower, val, dx, dy, "l" * q)
    gi = tower.gi
    nT = tower.nabla0T

    def entry(idx):
        acc = None
        for i in range(n):
            for j in range(n):
                term = gi[i][j] * (tget(nab[i], (j,) + idx) - tget(val, (j,) + idx) * nT[i])
                acc = term if acc is None else acc + term
        return -acc

    return nested_build(n, q - 1, entry)


def laplacian_expansion_coeffs(tower: LocalTower, phi: HorizontalForm):
    """Expanded horizontal Laplacian: second covariant derivatives, trace
    corrections from the Cartan trace, and its covariant derivative."""
    n = tower.n
    p = phi.degree
    p2 = phi_partials2(phi, tower.xs, tower.ys)
    val = p2[0]
    nab = cov_h(tower, val, p2[1], p2[2], "l" * p)
    D = cov_hh(tower, p2, "l" * p)  # D[a][b][I] = nabla_a nabla_b phi_I
    gi = tower.gi
    nT = tower.nabla0T
    nnT = tower.nabla_nabla0T  # nnT[i][r] = nabla_i (nabla_0 T)_r

    def entry(idx):
        acc = None
        for r in range(n):
            for s_ in range(n):
                t = gi[r][s_] * (tget(D[r][s_], idx) - tget(nab[s_], idx) * nT[r])
                acc = t if acc is None else acc + t
        out = -acc if acc is not None else 0.0
        for k in range(p):
            ik = idx[k]
            for r in range(n):
                for s_ in range(n):
                    sub = idx[:k] + (s_,) + idx[k + 1 :]
                    out = out + gi[r][s_] * (tget(D[r][ik], sub) - tget(D[ik][r], sub))
                    out = out + gi[r][s_] * tget(val, sub) * nnT[ik][r]
        return out

    return nested_build(n, p, entry)


def phi_partials2(phi: HorizontalForm, xs, ys):
    fn = phi.coeffs
    return (
        fn(xs, ys),
        grad_x(fn, xs, ys),
        grad_y(fn, xs, ys),
        grad_x(lambda a, b: grad_x(fn, a, b), xs, ys),
        grad_x(lambda a, b: grad_y(fn, a, b), xs, ys),
        grad_y(lambda a, b: grad_y(fn, a, b), xs, ys),
    )


def inner_coeffs(tower: LocalTower, a, b, degree):
    """Pointwise inner product of same-degree coefficient pytrees, 1/p! weight."""
    n = tower.n
    if degree == 0:
        return a * b
    gi = tower.gi
    raised = a
    for slot in range(degree):
        raised = nested_build(
            n,
            degree,
            lambda idx, _r=raised, _s=slot: sum_terms(
                gi[idx[_s]][m] * tget(_r, idx[:_s] + (m,) + idx[_s + 1 :]) for m in range(n)
            ),
        )
    acc = None
    for idx in product(range(n), repeat=degree):
        t = tget(raised, idx) * tget(b, idx)
        acc = t if acc is None else acc + t
    return acc * (1.0 / math.factorial(degree))


# -- public operators ---------------------------------------------------------


def horizontal_differential(s, phi: HorizontalForm) -> HorizontalForm:
    if phi.degree >= s.dim:
        raise DegreeOverflow(f"cannot raise degree {phi.degree} in dimension {s.dim}")

    def coeffs(xs, ys):
        return dH_coeffs(LocalTower(s, xs, ys), phi)

    return HorizontalForm(phi.degree + 1, coeffs, label=f"dH({phi.label})")


def horizontal_codifferential(s, psi: HorizontalForm) -> HorizontalForm:
    if psi.degree < 1:
        raise DegreeUnderflow("co-differential needs degree >= 1")

    def coeffs(xs, ys):
        return deltaH_coeffs(LocalTower(s, xs, ys), psi)

    return HorizontalForm(psi.degree - 1, coeffs, label=f"deltaH({psi.label})")


def horizontal_laplacian(s, omega: HorizontalForm, verify_p1_tol=None) -> HorizontalForm:
    """Laplacian as the anticommutator of differential and co-differential.

    With ``verify_p1_tol`` set and degree 1, every evaluation also runs the
    expanded formula and raises if the two disagree beyond the tolerance.
    """
    p = omega.degree
    parts = []
    if p < s.dim:
        parts.append(horizontal_codifferential(s, horizontal_differential(s, omega)))
    if p >= 1:
        parts.append(horizontal_differential(s, horizontal_codifferential(s, omega)))

    def coeffs(xs, ys):
        vals = [part.coeffs(xs, ys) for part in parts]
        out = vals[0]
        for v in vals[1:]:
            out = _tree_add(out, v)
        if verify_p1_tol is not None and p == 1:
            alt = laplacian_expansion_coeffs(LocalTower(s, xs, ys), omega)
            diff = pack(jets.tree_map(jets.primal, _tree_sub(out, alt)), p)
            if float(np.max(np.abs(diff))) > verify_p1_tol:
                raise DomainError("expanded and composed Laplacians disagree")
        return out

    return HorizontalForm(p, coeffs, label=f"laplacian({omega.label})")


def _tree_add(a, b):
    if isinstance(a, list):
        return [_tree_add(x, y) for x, y in zip(a, b)]
    return a + b


def _tree_sub(a, b):
    if isinstance(a, list):
        return [_tree_sub(x, y) for x, y in zip(a, b)]
    return a - b


def laplacian_expansion(s, phi: HorizontalForm) -> HorizontalForm:
    """The expanded Laplacian as an independent evaluator; must agree with
    the composed operator, which the test suite verifies degree by degree."""

    def coeffs(xs, ys):
        return laplacian_expansion_coeffs(LocalTower(s, xs, ys), phi)

    return HorizontalForm(phi.degree, coeffs, label=f"laplacian_exp({phi.label})")


def pointwise_inner(s, phi: HorizontalForm, psi: HorizontalForm, z, y=None):
    if phi.degree != psi.degree:
        raise DegreeMismatch(f"degrees {phi.degree} and {psi.degree} differ")
    tower, _ = _point_tower(s, z, y)
    a = phi.coeffs(tower.xs, tower.ys)
    b = psi.coeffs(tower.xs, tower.ys)
    return float(jets.primal(inner_coeffs(tower, a, b, phi.degree)))


# -- vector fields and their associated forms ----------------------------------


@dataclass(frozen=True, eq=False)
class AssociatedForm:
    """Horizontal and vertical parts of the 1-form associated to a vector field."""

    horizontal: HorizontalForm
    vertical: Callable  # (xs, ys) -> list of lowered vertical components
    source: TensorField


def lowered_field(s, X: TensorField):
    """g-lowered components of a vector field as a generic evaluator."""

    def comps(xs, ys):
        tw = LocalTower(s, xs, ys)
        Xv = X.components(xs, ys)
        return [
            sum_terms(tw.g[i][j] * Xv[j] for j in range(s.dim)) for i in range(s.dim)
        ]

    return comps


def associate_one_form(s, X: TensorField) -> AssociatedForm:
    if X.variance != "u":
        raise DomainError("associated form needs a vector field (variance 'u')")
    low = lowered_field(s, X)
    horizontal = HorizontalForm(1, low, label=f"assoc({X.label})")

    def vertical(xs, ys):
        tw = LocalTower(s, xs, ys)
        n = s.dim
        lowfield = TensorField(low, "l")
        val, dx, dy = lowfield.partials(xs, ys)
        nab = cov_h(tw, val, dx, dy, "l")
        nab0X = [sum_terms(tw.ys[h] * nab[h][i] for h in range(n)) for i in range(n)]

        def w_scalar(a, b):
            t2 = LocalTower(s, a, b)
            Xv = X.components(a, b)
            return sum_terms(
                t2.g[i][j] * b[i] * Xv[j] for i in range(n) for j in range(n)
            )

        dxw = grad_x(w_scalar, xs, ys)
        dyw = grad_y(w_scalar, xs, ys)
        nab0w = sum_terms(
            tw.ys[h] * (dxw[h] - sum_terms(tw.N[m][h] * dyw[m] for m in range(n)))
            for h in range(n)
        )
        invF = jets._reciprocal(tw.F) if isinstance(tw.F, jets.Jet) else 1.0 / tw.F
        invF2 = invF * invF
        return [
            (nab0X[i] - tw.y_lower[i] * nab0w * invF2) * invF for i in range(n)
        ]

    return AssociatedForm(horizontal=horizontal, vertical=vertical, source=X)


def weitzenbock_residual(s, X: TensorField, z, y=None):
    """Second-order identity satisfied by the associated horizontal form.

    Returns the lower-index residual whose components equal minus the
    horizontal Laplacian of the associated form; agreement is enforced by
    the test suite rather than assumed here.
    """
    from .curvature import hh_components, ricci_components

    tower, pt = _point_tower(s, z, y)
    n = tower.n
    low = TensorField(lowered_field(s, X), "l")
    p2 = low.partials2(tower.xs, tower.ys)
    val = p2[0]
    nab = cov_h(tower, val, p2[1], p2[2], "l")
    D = cov_hh(tower, p2, "l")
    gi = tower.gi
    nT = tower.nabla0T
    nnT = tower.nabla_nabla0T
    ricci = ricci_components(tower)
    flag = tower.flag

    raised = TensorField(
        lambda a, b: _raise_index(LocalTower(s, a, b), low.fn(a, b)), "u"
    )
    rval, _, rdy = raised.partials(tower.xs, tower.ys)
    vt = cov_v(tower, rval, rdy, "u")  # vt[t][r] = vertical derivative of X^r

    out = []
    for i in range(n):
        acc = sum_terms(
            gi[r][s_] * (D[r][s_][i] - nab[s_][i] * nT[r])
            for r in range(n)
            for s_ in range(n)
        )
        acc = acc - sum_terms(rval[t] * ricci[t][i] for t in range(n))
        acc = acc + sum_terms(vt[t][r] * flag[t][r][i] for t in range(n) for r in range(n))
        acc = acc - sum_terms(rval[r] * nnT[i][r] for r in range(n))
        out.append(acc)
    return TensorValue(pack(out, 1), "l", pt)


def _raise_index(tower, lowered):
    n = tower.n
    return [
        sum_terms(tower.gi[r][m] * lowered[m] for m in range(n)) for r in range(n)
    ]


def bochner_scalar(s, X: TensorField, z, y=None):
    """Curvature quadratic form classifying harmonic vector fields."""
    tower, _ = _point_tower(s, z, y)
    return float(jets.primal(bochner_scalar_at(tower, X)))


def bochner_scalar_at(tower: LocalTower, X: TensorField):
    from .curvature import ricci_components

    n = tower.n
    val, dx, dy = X.partials(tower.xs, tower.ys)
    nabU = cov_h(tower, val, dx, dy, "u")  # nabU[k][j] = nabla_k X^j
    vt = cov_v(tower, val, dy, "u")
    ricci = ricci_components(tower)
    flag = tower.flag
    nT = tower.nabla0T
    acc = sum_terms(val[k] * val[t] * ricci[t][k] for k in range(n) for t in range(n))
    acc = acc - sum_terms(
        val[k] * vt[r][j] * flag[r][j][k]
        for k in range(n)
        for r in range(n)
        for j in range(n)
    )
    acc = acc - sum_terms(
        val[k] * nabU[k][j] * nT[j] for k in range(n) for j in range(n)
    )
    return acc


def gradient_norm_squared_at(tower: LocalTower, X: TensorField):
    """Squared norm of the horizontal covariant derivative of the lowered field."""
    n = tower.n
    val, dx, dy = X.partials(tower.xs, tower.ys)
    nabU = cov_h(tower, val, dx, dy, "u")
    nabL = [
        [sum_terms(tower.g[j][k] * nabU[i][k] for k in range(n)) for j in range(n)]
        for i in range(n)
    ]
    acc = None
    for i in range(n):
        for j in range(n):
            up = sum_terms(
                tower.gi[i][a] * tower.gi[j][b] * nabL[a][b]
                for a in range(n)
                for b in range(n)
            )
            t = nabL[i][j] * up
            acc = t if acc is None else acc + t
    return acc


def transport_forms(s, X: TensorField):
    """The 1-forms Y = X^k nabla_k X_i dx^i and Z = X_i nabla_j X^j dx^i."""
    n = s.dim
    low = lowered_field(s, X)

    def Y_coeffs(a, b):
        tw = LocalTower(s, a, b)
        Xv = X.components(a, b)
        lf = TensorField(low, "l")
        lval, ldx, ldy = lf.partials(a, b)
        nabL = cov_h(tw, lval, ldx, ldy, "l")
        return [sum_terms(Xv[k] * nabL[k][i] for k in range(n)) for i in range(n)]

    def Z_coeffs(a, b):
        tw = LocalTower(s, a, b)
        Xv = X.components(a, b)
        uval, udx, udy = X.partials(a, b)
        nabU = cov_h(tw, uval, udx, udy, "u")
        div = sum_terms(nabU[j][j] for j in range(n))
        lval = low(a, b)
        return [lval[i] * div for i in range(n)]

    return (
        HorizontalForm(1, Y_coeffs, label=f"Y({X.label})"),
        HorizontalForm(1, Z_coeffs, label=f"Z({X.label})"),
    )


def energy_identity_residuals(s, X: TensorField, z, y=None):
    """Residuals of the two pointwise identities behind the Bochner argument.

    The first compares the co-differentials of the transport forms with
    their expansion; the second checks the quarter-norm identity relating
    the alternated derivative to the full gradient.  Both are zero
    analytically; the returned values measure end-to-end numerical
    consistency of the covariant derivative stack.
    """
    tower, _ = _point_tower(s, z, y)
    n = tower.n
    low = lowered_field(s, X)
    Yf, Zf = transport_forms(s, X)
    Xf = HorizontalForm(1, low, label="X")
    dY = jets.primal(deltaH_coeffs(tower, Yf))
    dZ = jets.primal(deltaH_coeffs(tower, Zf))
    dX = jets.primal(deltaH_coeffs(tower, Xf))

    uval, udx, udy = X.partials(tower.xs, tower.ys)
    nabU = cov_h(tower, uval, udx, udy, "u")
    p2u = X.partials2(tower.xs, tower.ys)
    D2U = cov_hh(tower, p2u, "u")  # D2U[a][b][j] = nabla_a nabla_b X^j
    divX = sum_terms(nabU[j][j] for j in range(n))
    comm = sum_terms(
        uval[k] * (D2U[j][k][j] - D2U[k][j][j]) for k in range(n) for j in range(n)
    )
    cross = sum_terms(nabU[j][k] * nabU[k][j] for j in range(n) for k in range(n))
    tterm = sum_terms(
        uval[k] * nabU[k][j] * tower.nabla0T[j] for k in range(n) for j in range(n)
    )
    r1 = dZ - dY - jets.primal(divX * dX + comm + cross - tterm)

    # quarter-norm identity for the alternated derivative
    nabL = [
        [sum_terms(tower.g[j][m] * nabU[i][m] for m in range(n)) for j in range(n)]
        for i in range(n)
    ]
    gradsq = gradient_norm_squared_at(tower, X)
    quarter = None
    for i in range(n):
        for j in range(n):
            anti = nabL[i][j] - nabL[j][i]
            up = sum_terms(
                tower.gi[i][a] * tower.gi[j][b] * (nabL[a][b] - nabL[b][a])
                for a in range(n)
                for b in range(n)
            )
            t = anti * up
            quarter = t if quarter is None else quarter + t
    dH_norm2 = 0.25 * quarter
    r2 = jets.primal(cross - gradsq + 2.0 * dH_norm2)
    return float(r1), float(r2)


def is_h_harmonic(s, phi: HorizontalForm, grid, tol=1e-8):
    """Grid verdict on harmonicity with the closed/co-closed cross-check."""
    from . import quadrature

    lap = laplacian_expansion(s, phi)
    lap_norm = quadrature.form_grid_norm(s, lap, grid)
    phi_norm = quadrature.form_grid_norm(s, phi, grid)
    if phi.degree < s.dim:
        dH_norm = quadrature.form_grid_norm(s, horizontal_differential(s, phi), grid)
    else:
        dH_norm = 0.0
    if phi.degree >= 1:
        deltaH_norm = quadrature.form_grid_norm(s, horizontal_codifferential(s, phi), grid)
    else:
        deltaH_norm = 0.0
    harmonic = lap_norm <= tol
    tol_derived = math.sqrt(tol * max(1.0, phi_norm)) + grid.tolerance * (1.0 + phi_norm**2)
    both_closed = dH_norm <= tol_derived and deltaH_norm <= tol_derived
    return {
        "laplacian_norm": lap_norm,
        "dH_norm": dH_norm,
        "deltaH_norm": deltaH_norm,
        "form_norm": phi_norm,
        "tol": tol,
        "tol_derived": tol_derived,
        "verdict": "harmonic" if harmonic else "not harmonic",
        "equivalence_consistent": harmonic == both_closed,
    }
