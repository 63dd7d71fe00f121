"""Forward-mode exact differentiation and ray-Jacobian factorization.

The backstepping cascade needs exact partial derivatives of recursively
defined virtual-control laws with respect to states and estimates. Input
dimension is tiny (at most n + q + 1), so forward mode with a vector of
partials wins over reverse mode. Nested levels give exact higher-order
mixed partials, which the cascade needs from order 3 on (the i-th virtual
law embeds partials of the (i-1)-th).

Ray-Jacobian integration implements the numerical side of the smooth
factorization g(z) = M(z) z for maps with g(0) = 0, via Gauss-Legendre
quadrature of M(z) = integral_0^1 J_g(s z) ds.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DomainError, FactorizationError

_LEVELS = itertools.count(1)

Number = float  # leaves are python floats; Dual trees sit on top of them


class Dual:
    """A number carrying a tuple of partial derivatives.

    ``lvl`` tags which seeding pass a dual belongs to. When duals from
    different passes meet, the one created later (higher level) treats the
    earlier one as a constant coefficient; that is what makes nesting give
    correct mixed partials.
    """

    __slots__ = ("v", "d", "lvl")

    def __init__(self, v, d, lvl):
        self.v = v
        self.d = d
        self.lvl = lvl

    def __repr__(self):
        return f"Dual(v={self.v!r}, d={self.d!r}, lvl={self.lvl})"

    # arithmetic -------------------------------------------------------

    def __add__(self, o):
        if isinstance(o, Dual) and o.lvl >= self.lvl:
            if o.lvl == self.lvl:
                return Dual(self.v + o.v,
                            tuple(a + b for a, b in zip(self.d, o.d)),
                            self.lvl)
            return Dual(self + o.v, o.d, o.lvl)
        return Dual(self.v + o, self.d, self.lvl)

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.v, tuple(-a for a in self.d), self.lvl)

    def __sub__(self, o):
        return self.__add__(-o if isinstance(o, Dual) else -o)

    def __rsub__(self, o):
        return (-self).__add__(o)

    def __mul__(self, o):
        if isinstance(o, Dual) and o.lvl >= self.lvl:
            if o.lvl == self.lvl:
                sv, ov = self.v, o.v
                return Dual(sv * ov,
                            tuple(a * ov + sv * b for a, b in zip(self.d, o.d)),
                            self.lvl)
            return Dual(self * o.v, tuple(self * b for b in o.d), o.lvl)
        return Dual(self.v * o, tuple(a * o for a in self.d), self.lvl)

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, Dual) and o.lvl >= self.lvl:
            if o.lvl == self.lvl:
                inv = _reciprocal(o.v)
                val = self.v * inv
                return Dual(val,
                            tuple((a - val * b) * inv
                                  for a, b in zip(self.d, o.d)),
                            self.lvl)
            return o.__rtruediv__(self)
        inv = _reciprocal(o)
        return Dual(self.v * inv, tuple(a * inv for a in self.d), self.lvl)

    def __rtruediv__(self, o):
        # o / self with o a constant relative to self's level
        inv = _reciprocal(self.v)
        val = o * inv
        return Dual(val, tuple(-val * inv * b for b in self.d), self.lvl)

    def __pow__(self, k):
        if not isinstance(k, (int, float)):
            raise TypeError("dual powers support numeric exponents only")
        val = self.v ** k
        coef = k * self.v ** (k - 1)
        return Dual(val, tuple(coef * a for a in self.d), self.lvl)


def _reciprocal(x):
    if isinstance(x, Dual):
        inv = _reciprocal(x.v)
        return Dual(inv, tuple(-inv * inv * b for b in x.d), x.lvl)
    if x == 0.0:
        raise DomainError("division", "division by zero")
    return 1.0 / x


# elementary functions ----------------------------------------------------

def dsin(x):
    if isinstance(x, Dual):
        c = dcos(x.v)
        return Dual(dsin(x.v), tuple(c * a for a in x.d), x.lvl)
    return math.sin(x)


def dcos(x):
    if isinstance(x, Dual):
        s = dsin(x.v)
        return Dual(dcos(x.v), tuple(-s * a for a in x.d), x.lvl)
    return math.cos(x)


def dexp(x):
    if isinstance(x, Dual):
        e = dexp(x.v)
        return Dual(e, tuple(e * a for a in x.d), x.lvl)
    return math.exp(x)


def dsqrt(x):
    if isinstance(x, Dual):
        r = dsqrt(x.v)
        half = 0.5 * _reciprocal(r)
        return Dual(r, tuple(half * a for a in x.d), x.lvl)
    if x < 0.0:
        raise DomainError("sqrt", f"negative operand {x!r}")
    if x == 0.0:
        # derivative is unbounded here; the value itself is fine
        return 0.0
    return math.sqrt(x)


# seeding and extraction --------------------------------------------------

def value(x) -> float:
    """Strip all dual layers, returning the primal float."""
    while isinstance(x, Dual):
        x = x.v
    return float(x)


def seed(values: Sequence):
    """Wrap ``values`` as duals with identity seeds at a fresh level."""
    lvl = next(_LEVELS)
    m = len(values)
    out = []
    for i, v in enumerate(values):
        out.append(Dual(v, tuple(1.0 if j == i else 0.0 for j in range(m)), lvl))
    return out, lvl


def jet(f: Callable, p: Sequence):
    """Evaluate ``f`` and its gradient at ``p`` in one forward pass.

    ``f`` takes a sequence of scalars (floats or duals) and returns a
    scalar. Inputs may already be duals from an enclosing pass; the result
    components are then duals of the enclosing level, which is exactly what
    nested differentiation requires.
    """
    duals, lvl = seed(list(p))
    out = f(duals)
    if isinstance(out, Dual) and out.lvl == lvl:
        return out.v, out.d
    # f turned out to be (locally) independent of every input
    return out, tuple(0.0 for _ in p)


def grad(f: Callable, p: Sequence) -> np.ndarray:
    """Gradient of a scalar map at a float point, exact to rounding."""
    _, d = jet(f, [float(x) for x in p])
    return np.array([value(c) for c in d], dtype=float)


def jacobian(g: Callable, p: Sequence):
    """Jacobian rows of a vector map ``g`` at ``p`` (one forward pass)."""
    duals, lvl = seed(list(p))
    outs = g(duals)
    m = len(p)
    rows = []
    for o in outs:
        if isinstance(o, Dual) and o.lvl == lvl:
            rows.append(o.d)
        else:
            rows.append(tuple(0.0 for _ in range(m)))
    return rows


def ray_jacobian_integral(g: Callable, z: Sequence, nodes: int = 16) -> np.ndarray:
    """Compute M(z) = integral_0^1 J_g(s z) ds so that g(z) = M(z) z.

    Requires g(0) = 0 (checked to 1e-10). Gauss-Legendre nodes mapped to
    [0, 1]; the integrands arising here are polynomial in s of modest
    degree, so order 16 is exact in practice. The factorization identity is
    verified with a relative residual tolerance of 1e-8.
    """
    if nodes < 8:
        raise ConfigError(f"quadrature order {nodes} < 8")
    z = [float(c) for c in z]
    m = len(z)
    g0 = [value(c) for c in g([0.0] * m)]
    r = len(g0)
    n0 = math.sqrt(sum(c * c for c in g0))
    if n0 > 1e-10:
        raise FactorizationError(
            f"g(0) = {g0} is not zero (|g(0)| = {n0:.3e})", residual=n0)
    xs, ws = np.polynomial.legendre.leggauss(nodes)
    M = np.zeros((r, m))
    for xq, wq in zip(xs, ws):
        s = 0.5 * (xq + 1.0)
        w = 0.5 * wq
        rows = jacobian(g, [s * c for c in z])
        for i in range(r):
            for j in range(m):
                M[i, j] += w * value(rows[i][j])
    gz = np.array([value(c) for c in g(z)])
    resid = float(np.linalg.norm(gz - M @ np.asarray(z)))
    tol = 1e-8 * (1.0 + float(np.linalg.norm(gz)))
    if resid > tol:
        raise FactorizationError(
            f"ray factorization residual {resid:.3e} exceeds {tol:.3e}",
            residual=resid)
    return M
