"""Curvature blocks of the Cartan connection and the Ricci identity check.

The hh-curvature is assembled from horizontal derivatives of the Cartan
coefficients; the curvature of the nonlinear connection (the ``flag``
tensor) is defined with the sign that makes it equal the y-contraction of
the hh-curvature, which is also the sign under which the Ricci identity
holds.  The hv-block is reported in two variants because its textbook
component formula is frequently misprinted; both vanish on Riemannian
inputs, which is the property the rest of the engine relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .connection import (
    LocalTower,
    TensorField,
    _point_tower,
    cov_hh,
    cov_v,
    nested_build,
    pack,
    sum_terms,
    tget,
)
from .errors import DomainError
from .metric import TensorValue

FLAG_CROSS_CHECK_TOL = 1e-6


def hh_components(tower: LocalTower):
    """hh[h][k][i][j]: curvature with upper index h, argument k, plane (i, j)."""
    n = tower.n
    dG = tower.deltaGamma
    Gamma = tower.Gamma
    flag = tower.flag
    Cmix = tower.Cmix

    def entry(idx):
        h, k, i, j = idx
        acc = dG[i][h][j][k] - dG[j][h][i][k]
        for l in range(n):
            acc = acc + Gamma[l][j][k] * Gamma[h][i][l] - Gamma[l][i][k] * Gamma[h][j][l]
            acc = acc + flag[l][i][j] * Cmix[h][l][k]
        return acc

    return nested_build(n, 4, entry)


def hv_components(tower: LocalTower, printed=False):
    """hv-curvature; ``printed=True`` evaluates the common misprinted variant
    literally (repeated indices read as labels, not sums)."""
    n = tower.n
    dGy = tower.dGamma_y
    dNy = tower.dN_y
    Gamma, Cmix = tower.Gamma, tower.Cmix
    dCx = tower.dCmix_x
    dCy = tower.dCmix_y
    N = tower.N

    def delta_C(c, h, k, j):
        return dCx[c][h][k][j] - sum_terms(N[m][c] * dCy[m][h][k][j] for m in range(n))

    def entry(idx):
        h, k, i, j = idx
        if printed:
            acc = dGy[k][h][k][i] - delta_C(i, h, k, j)
            for r in range(n):
                acc = acc + Gamma[r][k][i] * Cmix[h][r][j] - Cmix[r][k][j] * Gamma[h][r][j]
                acc = acc + dNy[j][r][i] * Cmix[h][k][r]
            return acc
        acc = dGy[j][h][k][i] - delta_C(i, h, k, j)
        for r in range(n):
            acc = acc + Gamma[r][k][i] * Cmix[h][r][j] - Cmix[r][k][j] * Gamma[h][r][i]
            acc = acc + dNy[j][r][i] * Cmix[h][k][r]
        return acc

    return nested_build(n, 4, entry)


def vv_components(tower: LocalTower):
    """vv[h][k][i][j] = C^h_rj C^r_ki - C^h_ri C^r_kj; antisymmetric in (i, j)."""
    n = tower.n
    C = tower.Cmix

    def entry(idx):
        h, k, i, j = idx
        return sum_terms(C[h][r][j] * C[r][k][i] - C[h][r][i] * C[r][k][j] for r in range(n))

    return nested_build(n, 4, entry)


def ricci_components(tower: LocalTower, hh=None):
    n = tower.n
    hh = hh if hh is not None else hh_components(tower)
    return [[sum_terms(hh[l][i][l][j] for l in range(n)) for j in range(n)] for i in range(n)]


@dataclass(frozen=True, eq=False)
class CurvatureAtPoint:
    """All curvature blocks at one point of the sphere bundle."""

    R_hh: np.ndarray
    P_hv: np.ndarray
    P_hv_printed: np.ndarray
    Q_vv: np.ndarray
    R_flag: np.ndarray
    Ricci: np.ndarray
    point: object


def hh_curvature(s, z, y=None):
    tower, pt = _point_tower(s, z, y)
    return TensorValue(pack(hh_components(tower), 4), "ulll", pt)


def flag_curvature_tensor(s, z, y=None, cross_check=True):
    """Curvature of the nonlinear connection R^i_jk.

    With ``cross_check`` the y-contraction of the hh-curvature is compared
    against the direct form; disagreement signals an engine defect.
    """
    tower, pt = _point_tower(s, z, y)
    flag = pack(tower.flag, 3)
    if cross_check:
        hh = pack(hh_components(tower), 4)
        yv = np.asarray(pt[1], float)
        alt = np.einsum("m,imjk->ijk", yv, hh)
        defect = float(np.max(np.abs(flag - alt)))
        scale = 1.0 + float(np.max(np.abs(flag)))
        if defect / scale > FLAG_CROSS_CHECK_TOL:
            raise DomainError(
                f"flag curvature cross-check failed: |direct - y.hh| = {defect:.3e}"
            )
    return TensorValue(flag, "ull", pt)


def hv_curvature(s, z, y=None, printed=False):
    tower, pt = _point_tower(s, z, y)
    return TensorValue(pack(hv_components(tower, printed=printed), 4), "ulll", pt)


def vv_curvature(s, z, y=None):
    tower, pt = _point_tower(s, z, y)
    return TensorValue(pack(vv_components(tower), 4), "ulll", pt)


def ricci_trace(s, z, y=None):
    tower, pt = _point_tower(s, z, y)
    return TensorValue(pack(ricci_components(tower), 2), "ll", pt)


def curvature_at_point(s, z, y=None):
    tower, pt = _point_tower(s, z, y)
    hh = hh_components(tower)
    return CurvatureAtPoint(
        R_hh=pack(hh, 4),
        P_hv=pack(hv_components(tower), 4),
        P_hv_printed=pack(hv_components(tower, printed=True), 4),
        Q_vv=pack(vv_components(tower), 4),
        R_flag=pack(tower.flag, 3),
        Ricci=pack(ricci_components(tower, hh=hh), 2),
        point=pt,
    )


def ricci_identity_residual(s, X: TensorField, z, y=None):
    """Commutator of horizontal covariant derivatives minus its curvature value.

    The residual res[i][k][h] should vanish for any smooth vector field; it
    is the whole-stack consistency check of connection plus curvature.
    """
    if X.variance != "u":
        raise DomainError("ricci identity residual expects a vector field (variance 'u')")
    tower, pt = _point_tower(s, z, y)
    n = tower.n
    p2 = X.partials2(tower.xs, tower.ys)
    D = cov_hh(tower, p2, "u")  # D[a][b][i] = nabla_a nabla_b X^i
    val = p2[0]
    vt = cov_v(tower, val, p2[2], "u")  # vt[r][i] = vertical derivative
    hh = hh_components(tower)
    flag = tower.flag

    def entry(idx):
        i, k, h = idx
        acc = D[k][h][i] - D[h][k][i]
        for r in range(n):
            acc = acc - val[r] * hh[i][r][k][h]
            acc = acc + vt[r][i] * flag[r][k][h]
        return acc

    return TensorValue(pack(nested_build(n, 3, entry), 3), "ull", pt)
