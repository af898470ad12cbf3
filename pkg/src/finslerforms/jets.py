"""Nested forward-mode differentiation with truncated Taylor jets.

Every quantity in the engine is built from derivatives of smooth scalar
fields of the slit tangent bundle coordinates (x, y).  A "scalar" here is a
Python float, a numpy array (batched evaluation over many points at once)
or a :class:`Jet`.  Jets are univariate truncated Taylor polynomials whose
coefficients are again scalars, so nesting jets inside jets yields exact
mixed partials of any modest order.  Each jet carries a level tag so that
independent differentiation contexts never mix their perturbations.

Fields are callables ``f(xs, ys) -> scalar`` where ``xs`` and ``ys`` are
plain lists of scalars.  The finite-difference routines exist only as an
independent oracle for tests.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, OrderTooHigh

MAX_PARTIAL_ORDER = 4

_TAGS = itertools.count(1)


def _new_tag() -> int:
    return next(_TAGS)


class Jet:
    """Truncated univariate Taylor polynomial c0 + c1 t + ... + cm t^m.

    Coefficients are stored in the normalized form c_k = f^(k)(0)/k!.
    Binary operations between jets of different tags treat the jet with the
    smaller tag as a constant, which is exactly the algebra of nested
    perturbations.
    """

    __slots__ = ("coeffs", "tag")
    __array_ufunc__ = None  # force ndarray ops to defer to the reflected methods

    def __init__(self, coeffs, tag):
        self.coeffs = coeffs if isinstance(coeffs, list) else list(coeffs)
        self.tag = tag

    @property
    def order(self):
        return len(self.coeffs) - 1

    def _aligned(self, other):
        a, b = self.coeffs, other.coeffs
        la, lb = len(a), len(b)
        if la < lb:
            a = a + [0.0] * (lb - la)
        elif lb < la:
            b = b + [0.0] * (la - lb)
        return a, b

    # -- ring operations ---------------------------------------------------

    def __add__(self, o):
        if isinstance(o, Jet):
            if o.tag == self.tag:
                a, b = self._aligned(o)
                return Jet([x + y for x, y in zip(a, b)], self.tag)
            if o.tag > self.tag:
                return Jet([o.coeffs[0] + self] + o.coeffs[1:], o.tag)
        return Jet([self.coeffs[0] + o] + self.coeffs[1:], self.tag)

    __radd__ = __add__

    def __neg__(self):
        return Jet([-c for c in self.coeffs], self.tag)

    def __sub__(self, o):
        if isinstance(o, Jet):
            if o.tag == self.tag:
                a, b = self._aligned(o)
                return Jet([x - y for x, y in zip(a, b)], self.tag)
            if o.tag > self.tag:
                return Jet([self - o.coeffs[0]] + [-c for c in o.coeffs[1:]], o.tag)
        return Jet([self.coeffs[0] - o] + self.coeffs[1:], self.tag)

    def __rsub__(self, o):
        return Jet([o - self.coeffs[0]] + [-c for c in self.coeffs[1:]], self.tag)

    def __mul__(self, o):
        if isinstance(o, Jet):
            if o.tag == self.tag:
                a, b = self._aligned(o)
                out = []
                for k in range(len(a)):
                    s = a[0] * b[k]
                    for j in range(1, k + 1):
                        s = s + a[j] * b[k - j]
                    out.append(s)
                return Jet(out, self.tag)
            if o.tag > self.tag:
                return Jet([self * c for c in o.coeffs], o.tag)
        return Jet([c * o for c in self.coeffs], self.tag)

    __rmul__ = __mul__

    def reciprocal(self):
        c = self.coeffs
        inv0 = _reciprocal(c[0])
        out = [inv0]
        for k in range(1, len(c)):
            s = c[k] * out[0]
            for j in range(1, k):
                s = s + c[j] * out[k - j]
            out.append((-s) * inv0)
        return Jet(out, self.tag)

    def __truediv__(self, o):
        if isinstance(o, Jet):
            if o.tag == self.tag:
                a, b = self._aligned(o)
                inv0 = _reciprocal(b[0])
                q = [a[0] * inv0]
                for k in range(1, len(a)):
                    s = a[k]
                    for j in range(1, k + 1):
                        s = s - b[j] * q[k - j]
                    q.append(s * inv0)
                return Jet(q, self.tag)
            if o.tag > self.tag:
                return self * o.reciprocal()
        return Jet([c / o for c in self.coeffs], self.tag)

    def __rtruediv__(self, o):
        return self.reciprocal() * o

    def __pow__(self, n):
        if not isinstance(n, int):
            raise TypeError("jets support integer powers only; use sqrt()")
        if n < 0:
            return self.reciprocal() ** (-n)
        out = Jet([1.0], self.tag)
        for _ in range(n):
            out = out * self
        return out

    # -- elementary functions ----------------------------------------------

    def sqrt(self):
        c = self.coeffs
        s0 = gsqrt(c[0])
        out = [s0]
        inv = _reciprocal(s0 + s0)
        for k in range(1, len(c)):
            acc = c[k]
            for j in range(1, k):
                acc = acc - out[j] * out[k - j]
            out.append(acc * inv)
        return Jet(out, self.tag)

    def sincos(self):
        u = self.coeffs
        s = [gsin(u[0])]
        c = [gcos(u[0])]
        for k in range(1, len(u)):
            ds = 0.0
            dc = 0.0
            for j in range(1, k + 1):
                du = u[j] * float(j)
                ds = ds + du * c[k - j]
                dc = dc - du * s[k - j]
            s.append(ds * (1.0 / k))
            c.append(dc * (1.0 / k))
        return Jet(s, self.tag), Jet(c, self.tag)

    def __repr__(self):
        return f"Jet(tag={self.tag}, coeffs={self.coeffs!r})"


def _reciprocal(x):
    if isinstance(x, Jet):
        return x.reciprocal()
    return 1.0 / x


def gsqrt(x):
    if isinstance(x, Jet):
        return x.sqrt()
    if isinstance(x, (float, int)):
        if x <= 0.0:
            raise DomainError("sqrt of a non-positive scalar")
        return math.sqrt(x)
    return np.sqrt(x)


def gsin(x):
    if isinstance(x, Jet):
        return x.sincos()[0]
    if isinstance(x, (float, int)):
        return math.sin(x)
    return np.sin(x)


def gcos(x):
    if isinstance(x, Jet):
        return x.sincos()[1]
    if isinstance(x, (float, int)):
        return math.cos(x)
    return np.cos(x)


def primal(x):
    """Strip all jet levels, returning the underlying numeric value."""
    while isinstance(x, Jet):
        x = x.coeffs[0]
    return x


# -- pytree helpers ---------------------------------------------------------


def tree_map(f, tree):
    if isinstance(tree, (list, tuple)):
        return [tree_map(f, c) for c in tree]
    return f(tree)


def _taylor_coeff(value, tag, k):
    """k-th Taylor coefficient of ``value`` at jet level ``tag``."""
    if isinstance(value, Jet) and value.tag == tag:
        return value.coeffs[k] if k < len(value.coeffs) else 0.0
    return value if k == 0 else 0.0


# -- derivative drivers ------------------------------------------------------


def grad_wrt(fn, lists, which):
    """First derivatives of ``fn(*lists)`` along every coordinate of one list.

    ``lists`` is a tuple of scalar lists; ``which`` selects the differentiated
    list.  Returns ``out[m]`` = pytree of d(fn)/d(lists[which][m]).
    """
    out = []
    for m in range(len(lists[which])):
        tag = _new_tag()
        seeded = [list(l) for l in lists]
        v = seeded[which][m]
        seeded[which][m] = Jet([v, 1.0], tag)
        res = fn(*seeded)
        out.append(tree_map(lambda s: _taylor_coeff(s, tag, 1), res))
    return out


def grad_x(fn, xs, ys):
    return grad_wrt(fn, (xs, ys), 0)


def grad_y(fn, xs, ys):
    return grad_wrt(fn, (xs, ys), 1)


@dataclass
class JetRequest:
    """A single mixed-partial request against a scalar field on TM0."""

    target: Callable
    point: tuple
    multi_index: tuple  # (x_orders, y_orders)


def partial(req: JetRequest) -> float:
    """Exact mixed partial via simultaneously seeded nested jets."""
    x_orders, y_orders = req.multi_index
    xs, ys = [list(map(float, v)) for v in req.point]
    total = int(sum(x_orders) + sum(y_orders))
    if total > MAX_PARTIAL_ORDER:
        raise OrderTooHigh(f"total order {total} exceeds {MAX_PARTIAL_ORDER}")
    tags = []
    for vec, orders in ((xs, x_orders), (ys, y_orders)):
        for axis, o in enumerate(orders):
            if o == 0:
                continue
            tag = _new_tag()
            vec[axis] = Jet([vec[axis], 1.0] + [0.0] * (o - 1), tag)
            tags.append((tag, int(o)))
    val = req.target(xs, ys)
    for tag, o in sorted(tags, reverse=True):
        val = _taylor_coeff(val, tag, o) * math.factorial(o)
    return float(primal(val))


# nested differencing amplifies roundoff like eps / h^order, so the default
# step grows with the total order requested
_FD_DEFAULT_STEPS = {1: 1e-4, 2: 8e-4, 3: 3e-3, 4: 6e-3}


def fd_partial(req: JetRequest, step: float | None = None) -> float:
    """Central finite differences; the independent oracle used by tests.

    Every level of the recursion applies the 4th-order five-point stencil;
    a 2nd-order recursion cannot clear the roundoff floor of third-order
    requests at any usable step size.
    """
    x_orders, y_orders = req.multi_index
    xs, ys = [list(map(float, v)) for v in req.point]
    total = int(sum(x_orders) + sum(y_orders))
    base_step = step if step is not None else _FD_DEFAULT_STEPS.get(total, 6e-3)

    def _eval(f, xs, ys, orders_x, orders_y):
        for which, orders in ((0, orders_x), (1, orders_y)):
            for axis, o in enumerate(orders):
                if o == 0:
                    continue
                coord = (xs, ys)[which][axis]
                h = base_step * (1.0 + abs(coord)) if step is None else step
                rest_x = list(orders_x)
                rest_y = list(orders_y)
                (rest_x if which == 0 else rest_y)[axis] -= 1

                def shifted(d, which=which, axis=axis):
                    sx, sy = list(xs), list(ys)
                    (sx if which == 0 else sy)[axis] = coord + d
                    return _eval(f, sx, sy, rest_x, rest_y)

                return (
                    -shifted(2 * h)
                    + 8.0 * shifted(h)
                    - 8.0 * shifted(-h)
                    + shifted(-2 * h)
                ) / (12.0 * h)
        return f(xs, ys)

    return float(_eval(req.target, xs, ys, list(x_orders), list(y_orders)))
