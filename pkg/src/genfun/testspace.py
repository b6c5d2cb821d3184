"""Compactly supported test functions with exact derivatives.

Two families are provided: polynomial bumps ``prod (1 - u_j^2)^p`` (finite
smoothness, every derivative a closed-form polynomial) and mollifiers
``prod exp(-1 / (1 - u_j^2))`` (infinitely smooth, derivatives from a
polynomial recursion).  Products, derivatives and linear combinations of
test functions are again test functions.  A lattice partition of unity
built from normalised mollifiers localises integrals in ``y``.

Points are passed as arrays of shape ``(N, k)``; for ``k == 1`` a flat
array of length ``N`` (or a scalar) is accepted too.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterator, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .errors import InvalidArgument, UnsupportedOrder

__all__ = [
    "TestFunction",
    "PartitionOfUnity",
    "make_poly_bump",
    "make_mollifier",
    "derivative",
    "mixed_partial",
    "tensor_product",
    "linear_combination",
    "make_partition_of_unity",
]

# 1 - u^2 below this is treated as the boundary of a mollifier: exp(-1/t)
# has underflowed to 0 long before.
_MOLLIFIER_EDGE = 1e-3


def as_points(x, dim: int):
    """Return ``(points, out_shape)`` with points of shape ``(N, dim)``."""
    x = np.asarray(x, dtype=float)
    if dim == 1:
        if x.ndim == 0:
            return x.reshape(1, 1), ()
        if x.ndim == 2 and x.shape[1] == 1:
            return x, (x.shape[0],)
        return x.reshape(-1, 1), x.shape
    if x.ndim == 1:
        if x.shape[0] != dim:
            raise InvalidArgument(f"expected a point of length {dim}, got {x.shape}")
        return x.reshape(1, dim), ()
    if x.shape[-1] != dim:
        raise InvalidArgument(f"expected trailing dimension {dim}, got {x.shape}")
    return x.reshape(-1, dim), x.shape[:-1]


def _shape_out(values: np.ndarray, out_shape):
    if out_shape == ():
        return float(values[0])
    return values.reshape(out_shape)


# ---------------------------------------------------------------------------
# one-dimensional building blocks


class _Factor1D:
    """A 1-d function on ``[center - radius, center + radius]``."""

    center: float
    radius: float
    max_order: int
    poly_degree: int | None

    @property
    def lo(self) -> float:
        return self.center - self.radius

    @property
    def hi(self) -> float:
        return self.center + self.radius

    def deriv(self, order: int, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class _PolyBump1D(_Factor1D):
    def __init__(self, center: float, radius: float, p: int):
        self.center = float(center)
        self.radius = float(radius)
        self.p = int(p)
        self.max_order = self.p - 1
        self.poly_degree = 2 * self.p
        base = Polynomial([1.0, 0.0, -1.0]) ** self.p
        self._polys = [base]

    def _poly(self, order: int) -> Polynomial:
        while len(self._polys) <= order:
            self._polys.append(self._polys[-1].deriv())
        return self._polys[order]

    def deriv(self, order, t):
        u = (np.asarray(t, dtype=float) - self.center) / self.radius
        inside = np.abs(u) < 1.0
        out = np.zeros_like(u)
        out[inside] = self._poly(order)(u[inside]) / self.radius**order
        return out


@lru_cache(maxsize=None)
def _mollifier_poly(order: int) -> Polynomial:
    """P_n with d^n/du^n exp(-1/(1-u^2)) = P_n(u) (1-u^2)^(-2n) exp(-1/(1-u^2))."""
    if order == 0:
        return Polynomial([1.0])
    prev = _mollifier_poly(order - 1)
    n = order - 1
    t = Polynomial([1.0, 0.0, -1.0])
    u = Polynomial([0.0, 1.0])
    return prev.deriv() * t**2 + 4 * n * u * prev * t - 2 * u * prev


def _mollifier_deriv(order: int, u: np.ndarray) -> np.ndarray:
    t = 1.0 - u * u
    inside = t > _MOLLIFIER_EDGE
    out = np.zeros_like(u)
    ti = t[inside]
    out[inside] = _mollifier_poly(order)(u[inside]) * ti ** (-2.0 * order) * np.exp(-1.0 / ti)
    return out


class _Mollifier1D(_Factor1D):
    def __init__(self, center: float, radius: float, max_order: int):
        self.center = float(center)
        self.radius = float(radius)
        self.max_order = int(max_order)
        self.poly_degree = None

    def deriv(self, order, t):
        u = (np.asarray(t, dtype=float) - self.center) / self.radius
        return _mollifier_deriv(order, u) / self.radius**order


class _PartitionMember1D(_Factor1D):
    """``b(u) / (b(u-1) + b(u) + b(u+1))`` with ``u = (t - center) / spacing``.

    ``b`` is the unit mollifier, so neighbouring lattice members overlap on
    exactly one spacing and the normalised members sum to one everywhere.
    """

    def __init__(self, center: float, spacing: float, max_order: int):
        self.center = float(center)
        self.radius = float(spacing)
        self.max_order = int(max_order)
        self.poly_degree = None

    def deriv(self, order, t):
        u = (np.asarray(t, dtype=float) - self.center) / self.radius
        inside = np.abs(u) < 1.0
        out = np.zeros_like(u)
        ui = u[inside]
        b = [_mollifier_deriv(j, ui) for j in range(order + 1)]
        s = [b[j] + _mollifier_deriv(j, ui - 1.0) + _mollifier_deriv(j, ui + 1.0)
             for j in range(order + 1)]
        q = []
        for m in range(order + 1):
            acc = b[m].copy()
            for j in range(m):
                acc -= math.comb(m, j) * q[j] * s[m - j]
            q.append(acc / s[0])
        out[inside] = q[order] / self.radius**order
        return out


# ---------------------------------------------------------------------------
# test functions


@dataclass(frozen=True, eq=False)
class TestFunction:
    """A compactly supported function on R^k with exact partial derivatives.

    ``support_lo``/``support_hi`` bound a closed box outside of which the
    function and every derivative vanish identically.  ``smoothness_order``
    is the largest total derivative order that is available and continuous.
    ``poly_degree`` gives, per axis, the polynomial degree of the function
    inside its support (``None`` when it is not piecewise polynomial); the
    quadrature routines use it to choose exact rules.
    """

    __test__ = False  # keep pytest from collecting this class

    support_lo: np.ndarray
    support_hi: np.ndarray
    smoothness_order: int
    _deriv: Callable[[tuple, np.ndarray], np.ndarray] = field(repr=False)
    id: str = "psi"
    poly_degree: tuple | None = None
    # (coefficient, part) pairs when built by linear_combination
    terms: tuple | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return len(self.support_lo)

    @property
    def support_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.support_lo, self.support_hi

    def __call__(self, x):
        return self.deriv((0,) * self.dim, x)

    def deriv(self, alpha, x):
        """Evaluate the partial derivative with multi-index ``alpha`` at ``x``."""
        alpha = _check_alpha(alpha, self.dim)
        if sum(alpha) > self.smoothness_order:
            raise UnsupportedOrder(
                f"derivative of order {sum(alpha)} requested from {self.id} "
                f"with smoothness {self.smoothness_order}")
        pts, out_shape = as_points(x, self.dim)
        return _shape_out(self._deriv(alpha, pts), out_shape)

    def contains(self, x) -> np.ndarray:
        pts, out_shape = as_points(x, self.dim)
        mask = np.all((pts >= self.support_lo) & (pts <= self.support_hi), axis=1)
        return mask if out_shape != () else bool(mask[0])


def _check_alpha(alpha, dim: int) -> tuple:
    if np.isscalar(alpha):
        alpha = (int(alpha),)
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != dim or any(a < 0 for a in alpha):
        raise InvalidArgument(f"multi-index {alpha} invalid for dimension {dim}")
    return alpha


def _from_factors(factors: Sequence[_Factor1D], ident: str) -> TestFunction:
    factors = tuple(factors)

    def evaluate(alpha, pts):
        out = np.ones(pts.shape[0])
        for j, (fac, a) in enumerate(zip(factors, alpha)):
            out *= fac.deriv(a, pts[:, j])
        return out

    degrees = tuple(f.poly_degree for f in factors)
    return TestFunction(
        support_lo=np.array([f.lo for f in factors]),
        support_hi=np.array([f.hi for f in factors]),
        smoothness_order=min(f.max_order for f in factors),
        _deriv=evaluate,
        id=ident,
        poly_degree=None if any(d is None for d in degrees) else degrees,
    )


def _broadcast_box(center, radius):
    center = np.atleast_1d(np.asarray(center, dtype=float))
    radius = np.atleast_1d(np.asarray(radius, dtype=float))
    if radius.size == 1 and center.size > 1:
        radius = np.full(center.size, radius[0])
    if center.size == 1 and radius.size > 1:
        center = np.full(radius.size, center[0])
    if center.shape != radius.shape:
        raise InvalidArgument("center and radius have incompatible shapes")
    if np.any(~(radius > 0)):
        raise InvalidArgument(f"radius must be positive, got {radius}")
    return center, radius


def _fmt(v) -> str:
    v = np.atleast_1d(v)
    return ",".join(f"{x:g}" for x in v)


def make_poly_bump(center, radius, p: int = 8) -> TestFunction:
    """Polynomial bump ``prod_j (1 - u_j^2)^p`` with ``u_j = (x_j - c_j) / r_j``.

    The bump has ``p - 1`` continuous derivatives; all of them are exact
    polynomials inside the support box.
    """
    if int(p) < 2:
        raise InvalidArgument(f"p must be >= 2, got {p}")
    center, radius = _broadcast_box(center, radius)
    factors = [_PolyBump1D(c, r, p) for c, r in zip(center, radius)]
    return _from_factors(factors, f"poly[c={_fmt(center)};r={_fmt(radius)};p={p}]")


def make_mollifier(center, radius, max_order: int = 8) -> TestFunction:
    """Mollifier ``prod_j exp(-1 / (1 - u_j^2))``; ``max_order`` caps the exposed derivatives."""
    center, radius = _broadcast_box(center, radius)
    factors = [_Mollifier1D(c, r, max_order) for c, r in zip(center, radius)]
    return _from_factors(factors, f"moll[c={_fmt(center)};r={_fmt(radius)}]")


def derivative(psi: TestFunction, alpha) -> TestFunction:
    """Exact partial derivative of ``psi`` as a new test function."""
    alpha = _check_alpha(alpha, psi.dim)
    order = sum(alpha)
    if order > psi.smoothness_order:
        raise UnsupportedOrder(
            f"derivative of order {order} exceeds smoothness {psi.smoothness_order} of {psi.id}")
    if order == 0:
        return psi
    base = psi._deriv

    def evaluate(beta, pts):
        return base(tuple(a + b for a, b in zip(alpha, beta)), pts)

    degree = None
    if psi.poly_degree is not None:
        degree = tuple(max(d - a, 0) for d, a in zip(psi.poly_degree, alpha))
    return TestFunction(
        support_lo=psi.support_lo,
        support_hi=psi.support_hi,
        smoothness_order=psi.smoothness_order - order,
        _deriv=evaluate,
        id=f"d{''.join(map(str, alpha))}({psi.id})",
        poly_degree=degree,
    )


def mixed_partial(psi: TestFunction, times: int = 1) -> TestFunction:
    """``(d^k / dx_1 ... dx_k)^times psi``: the mixed first partial in every coordinate."""
    return derivative(psi, (times,) * psi.dim)


def tensor_product(parts: Sequence[TestFunction]) -> TestFunction:
    """Product of test functions on disjoint coordinate blocks."""
    parts = list(parts)
    if not parts:
        raise InvalidArgument("tensor_product needs at least one factor")
    dims = [p.dim for p in parts]
    offsets = np.cumsum([0] + dims)

    def evaluate(alpha, pts):
        out = np.ones(pts.shape[0])
        for p, a, b in zip(parts, offsets[:-1], offsets[1:]):
            out *= p._deriv(tuple(alpha[a:b]), pts[:, a:b])
        return out

    degree = None
    if all(p.poly_degree is not None for p in parts):
        degree = tuple(itertools.chain.from_iterable(p.poly_degree for p in parts))
    return TestFunction(
        support_lo=np.concatenate([p.support_lo for p in parts]),
        support_hi=np.concatenate([p.support_hi for p in parts]),
        smoothness_order=min(p.smoothness_order for p in parts),
        _deriv=evaluate,
        id="x".join(p.id for p in parts),
        poly_degree=degree,
    )


def linear_combination(coeffs: Sequence[float], parts: Sequence[TestFunction]) -> TestFunction:
    """``sum_i coeffs[i] * parts[i]`` on the bounding box of the supports."""
    coeffs = [float(c) for c in coeffs]
    parts = list(parts)
    if not parts or len(coeffs) != len(parts):
        raise InvalidArgument("need matching, nonempty coefficient and function lists")
    dim = parts[0].dim
    if any(p.dim != dim for p in parts):
        raise InvalidArgument("all parts must share a dimension")

    def evaluate(alpha, pts):
        return sum(c * p._deriv(alpha, pts) for c, p in zip(coeffs, parts))

    # a sum of polynomials on different boxes is only piecewise polynomial
    same_box = all(np.array_equal(p.support_lo, parts[0].support_lo)
                   and np.array_equal(p.support_hi, parts[0].support_hi) for p in parts)
    degree = None
    if same_box and all(p.poly_degree is not None for p in parts):
        degree = tuple(np.max([p.poly_degree for p in parts], axis=0).tolist())
    return TestFunction(
        support_lo=np.min([p.support_lo for p in parts], axis=0),
        support_hi=np.max([p.support_hi for p in parts], axis=0),
        smoothness_order=min(p.smoothness_order for p in parts),
        _deriv=evaluate,
        id="+".join(f"{c:g}*{p.id}" for c, p in zip(coeffs, parts)),
        poly_degree=degree,
        terms=tuple(_flat_terms(coeffs, parts)),
    )


def _flat_terms(coeffs, parts):
    for c, p in zip(coeffs, parts):
        if p.terms is None:
            yield c, p
        else:
            yield from ((c * c2, p2) for c2, p2 in p.terms)


def breakpoints(psi: TestFunction) -> list[np.ndarray]:
    """Per-axis points where ``psi`` may fail to be smooth (its support edges)."""
    return [np.array([lo, hi]) for lo, hi in zip(psi.support_lo, psi.support_hi)]


# ---------------------------------------------------------------------------
# partition of unity


class PartitionOfUnity:
    """Normalised lattice mollifiers on R^d, indexed by integer vectors.

    Member ``v`` is centred at ``origin + v * spacing`` and supported on the
    cube of half-width ``spacing`` around it.  Members are built on demand,
    so the lattice is effectively infinite; ``region`` only fixes the
    ordering used for tail truncation (``blocks``).  Every point lies in
    the support of at most ``2**d`` members, and exactly one member equals
    1 at each lattice node.
    """

    def __init__(self, region_lo, region_hi, spacing: float, max_order: int = 6):
        self.region_lo = np.atleast_1d(np.asarray(region_lo, dtype=float))
        self.region_hi = np.atleast_1d(np.asarray(region_hi, dtype=float))
        if self.region_lo.shape != self.region_hi.shape or np.any(self.region_hi < self.region_lo):
            raise InvalidArgument("region must be a nonempty box")
        if not spacing > 0:
            raise InvalidArgument(f"spacing must be positive, got {spacing}")
        self.spacing = float(spacing)
        self.max_order = int(max_order)
        self.origin = self.region_lo.copy()
        self.dim = self.region_lo.size
        # lattice indices whose supports meet the region
        self._core_lo = np.floor((self.region_lo - self.origin) / self.spacing).astype(int)
        self._core_hi = np.ceil((self.region_hi - self.origin) / self.spacing).astype(int)
        self._cache: dict[tuple, TestFunction] = {}

    def member(self, v) -> TestFunction:
        v = tuple(int(i) for i in np.atleast_1d(v))
        if len(v) != self.dim:
            raise InvalidArgument(f"index {v} has wrong length for dimension {self.dim}")
        psi = self._cache.get(v)
        if psi is None:
            centres = self.origin + np.array(v) * self.spacing
            factors = [_PartitionMember1D(c, self.spacing, self.max_order) for c in centres]
            psi = _from_factors(factors, f"pou[{','.join(map(str, v))}]")
            self._cache[v] = psi
        return psi

    @property
    def members(self) -> list[TestFunction]:
        """Members whose supports meet the declared region."""
        return [self.member(v) for v in self.core_indices()]

    def core_indices(self) -> list[tuple]:
        ranges = [range(a, b + 1) for a, b in zip(self._core_lo, self._core_hi)]
        return [tuple(v) for v in itertools.product(*ranges)]

    def covering(self, y) -> list[tuple]:
        """Indices of the members whose (open) support contains ``y``."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        s = (y - self.origin) / self.spacing
        per_axis = []
        for sj in s:
            lo, hi = math.floor(sj), math.ceil(sj)
            per_axis.append(sorted({i for i in (lo, hi) if abs(sj - i) < 1.0}))
        return [tuple(v) for v in itertools.product(*per_axis)]

    def __call__(self, y) -> float:
        """``sum_v psi_v(y)``; equals 1 up to rounding."""
        pts, out_shape = as_points(y, self.dim)
        total = np.zeros(pts.shape[0])
        for i, p in enumerate(pts):
            total[i] = sum(float(self.member(v)(p[None, :])[0]) for v in self.covering(p))
        return _shape_out(total, out_shape)

    def blocks(self) -> Iterator[list[tuple]]:
        """Yield index blocks ordered by lattice distance from the region.

        Block 0 holds the members meeting the region; block ``j`` is the
        shell at Chebyshev distance ``j`` from that index box.
        """
        yield self.core_indices()
        j = 1
        while True:
            lo = self._core_lo - j
            hi = self._core_hi + j
            ranges = [range(a, b + 1) for a, b in zip(lo, hi)]
            shell = [tuple(v) for v in itertools.product(*ranges)
                     if np.any(np.array(v) == lo) or np.any(np.array(v) == hi)]
            yield shell
            j += 1


def make_partition_of_unity(region_lo, region_hi=None, spacing: float = 0.5,
                            max_order: int = 6) -> PartitionOfUnity:
    """Partition of unity on the box ``[region_lo, region_hi]`` with lattice ``spacing``.

    ``region_lo`` may also be a ``(lo, hi)`` pair when ``region_hi`` is omitted.
    """
    if region_hi is None:
        region_lo, region_hi = region_lo
    return PartitionOfUnity(region_lo, region_hi, spacing, max_order)
