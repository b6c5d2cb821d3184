"""Bounded, compactly supported kernels of a declared order and their antiderivatives.

Every kernel lives on ``[-1, 1]^k``.  Univariate kernels are polynomials on
their support, so moments and antiderivatives are exact; multivariate
kernels are products of a univariate base.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from .errors import InvalidArgument, OrderViolation
from .testspace import as_points

__all__ = [
    "Kernel",
    "Bandwidth",
    "MomentReport",
    "epanechnikov",
    "higher_order_kernel",
    "product_kernel",
    "indicator_kernel",
    "verify_order",
    "kernel_by_name",
]


@dataclass(frozen=True, eq=False)
class Kernel:
    """Product kernel ``K(w) = prod_j base(w_j)`` supported on ``[-1, 1]^dim``.

    ``indicator`` kernels carry only an antiderivative, the step ``1[w > 0]``
    (the empirical-cdf limit of a smoothed cdf).
    """

    dim: int
    order: int
    name: str
    base: Polynomial | None = field(repr=False, default=None)
    indicator: bool = False

    def __post_init__(self):
        if self.base is not None:
            object.__setattr__(self, "_anti", self.base.integ(lbnd=-1.0))

    @property
    def poly_degree(self) -> int | None:
        return None if self.base is None else self.base.degree()

    def _base_eval(self, w: np.ndarray) -> np.ndarray:
        out = np.zeros_like(w)
        inside = np.abs(w) <= 1.0
        out[inside] = self.base(w[inside])
        return out

    def _anti_eval(self, w: np.ndarray) -> np.ndarray:
        if self.indicator:
            return (w > 0).astype(float)
        out = np.where(w > 1.0, 1.0, 0.0)
        inside = np.abs(w) <= 1.0
        out[inside] = self._anti(w[inside])
        return out

    def __call__(self, w):
        if self.indicator:
            raise InvalidArgument("indicator kernels have no density part")
        pts, shape = as_points(w, self.dim)
        vals = np.prod(self._base_eval(pts), axis=1)
        return float(vals[0]) if shape == () else vals.reshape(shape)

    def antiderivative(self, w):
        """k-fold antiderivative ``K_bar``: 0 below the support, 1 above it."""
        pts, shape = as_points(w, self.dim)
        vals = np.prod(self._anti_eval(pts), axis=1)
        return float(vals[0]) if shape == () else vals.reshape(shape)

    def moment(self, multi_index) -> float:
        """Exact ``int w^m K(w) dw`` for a multi-index ``m``."""
        if self.indicator:
            raise InvalidArgument("indicator kernels have no moments")
        m = np.atleast_1d(multi_index).astype(int)
        out = 1.0
        for mj in m:
            p = (Polynomial.basis(mj) * self.base).integ()
            out *= p(1.0) - p(-1.0)
        return float(out)


@dataclass(frozen=True)
class Bandwidth:
    """Bandwidth law ``h(n) = c * n**(-alpha)`` times per-axis multipliers."""

    c: float
    alpha: float
    components: tuple = (1.0,)

    def __post_init__(self):
        if not self.c > 0:
            raise InvalidArgument(f"bandwidth constant must be positive, got {self.c}")
        if not 0 < self.alpha < 1:
            raise InvalidArgument(f"alpha must lie in (0, 1), got {self.alpha}")
        if any(not m > 0 for m in self.components):
            raise InvalidArgument("bandwidth multipliers must be positive")

    def __call__(self, n: int) -> np.ndarray:
        return self.c * float(n) ** (-self.alpha) * np.asarray(self.components, dtype=float)

    def hbar(self, n: int) -> float:
        return float(np.max(self(n)))


@dataclass
class MomentReport:
    passed: bool
    order: int
    lower_moments: dict
    order_moments: dict
    skipped: bool = False
    flag: str = ""
    offending: tuple | None = None


def epanechnikov() -> Kernel:
    """``K(w) = 0.75 (1 - w^2)`` on ``[-1, 1]``; second order."""
    return Kernel(dim=1, order=2, name="epanechnikov", base=Polynomial([0.75, 0.0, -0.75]))


def higher_order_kernel(order: int) -> Kernel:
    """Even polynomial kernel ``(1 - w^2) sum_j a_j w^(2j)`` of the given even order.

    The ``a_j`` solve the Hankel system that sets the even moments
    ``2, 4, ..., order - 2`` to zero with unit mass; odd moments vanish by
    symmetry.  ``order=2`` gives the Epanechnikov kernel.
    """
    order = int(order)
    if order < 2 or order % 2:
        raise InvalidArgument(f"kernel order must be an even integer >= 2, got {order}")
    m = order // 2

    def mom(k):  # int_{-1}^{1} (1 - w^2) w^k dw, k even
        return 2.0 / (k + 1) - 2.0 / (k + 3)

    hankel = np.array([[mom(2 * i + 2 * j) for j in range(m)] for i in range(m)])
    rhs = np.zeros(m)
    rhs[0] = 1.0
    assert np.linalg.cond(hankel) < 1e12, "moment system is singular"
    a = np.linalg.solve(hankel, rhs)
    even = np.zeros(2 * m - 1)
    even[::2] = a
    poly = Polynomial([1.0, 0.0, -1.0]) * Polynomial(even)
    name = "epanechnikov" if order == 2 else f"poly{order}"
    return Kernel(dim=1, order=order, name=name, base=poly)


def product_kernel(base: Kernel, dim: int) -> Kernel:
    if dim < 1:
        raise InvalidArgument("dimension must be >= 1")
    if base.dim != 1:
        raise InvalidArgument("product kernels need a univariate base")
    return Kernel(dim=dim, order=base.order, name=f"{base.name}^{dim}",
                  base=base.base, indicator=base.indicator)


def indicator_kernel(dim: int = 1) -> Kernel:
    """Antiderivative-only kernel with ``K_bar(w) = 1[w > 0]``."""
    return Kernel(dim=dim, order=0, name="indicator", indicator=True)


def kernel_by_name(name: str, order: int = 2, dim: int = 1) -> Kernel:
    if name == "indicator":
        return indicator_kernel(dim)
    if name == "epanechnikov":
        base = epanechnikov() if order == 2 else None
        if base is None:
            raise InvalidArgument("epanechnikov is a second-order kernel; use 'poly'")
    elif name == "poly":
        base = higher_order_kernel(order)
    else:
        raise InvalidArgument(f"unknown kernel {name!r}")
    return base if dim == 1 else product_kernel(base, dim)


def verify_order(kernel: Kernel, order: int, tol: float = 1e-9,
                 raise_on_fail: bool = True) -> MomentReport:
    """Check that every mixed moment of total order ``1 .. order-1`` vanishes.

    Returns the report with the order-``order`` moments.  Raises
    ``OrderViolation`` naming the first offending multi-index unless
    ``raise_on_fail`` is false.
    """
    if kernel.indicator:
        return MomentReport(passed=True, order=order, lower_moments={}, order_moments={},
                            skipped=True, flag="indicator")
    lower, top = {}, {}
    offending = None
    total_mass = kernel.moment((0,) * kernel.dim)
    if abs(total_mass - 1.0) > tol:
        offending = (0,) * kernel.dim
    for total in range(1, order + 1):
        for mi in itertools.product(range(total + 1), repeat=kernel.dim):
            if sum(mi) != total:
                continue
            val = kernel.moment(mi)
            if total < order:
                lower[mi] = val
                if offending is None and abs(val) > tol:
                    offending = mi
            else:
                top[mi] = val
    report = MomentReport(passed=offending is None, order=order, lower_moments=lower,
                          order_moments=top, offending=offending)
    if offending is not None and raise_on_fail:
        value = total_mass if sum(offending) == 0 else lower[offending]
        raise OrderViolation(
            f"kernel {kernel.name} is not of order {order}: moment {offending} = {value:.3g}",
            multi_index=offending, value=value)
    return report
