"""Deterministic integration: tensor Gauss-Legendre on boxes, Stieltjes
integrals against model measures, and empirical-measure sums.

All rules are fixed-node, so repeated calls are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import IntegrandError, InvalidArgument

__all__ = [
    "QuadratureSpec",
    "QuadResult",
    "gauss_legendre",
    "composite_nodes",
    "tensor_rule",
    "integrate_box",
    "integrate_stieltjes",
    "integrate_empirical",
    "integrate_empirical_product",
]


@dataclass(frozen=True)
class QuadratureSpec:
    """Rule parameters.

    panel_order : Gauss-Legendre nodes per panel (exact to degree ``2*panel_order - 1``)
    panels_per_axis : panels per smooth segment on the coarse pass
    target_tol : tolerance the refinement difference is expected to meet
    max_dim : largest supported box dimension
    cantor_depth : depth of the self-similar Cantor rule (``2**depth`` leaves)
    """

    panel_order: int = 16
    panels_per_axis: int = 4
    target_tol: float = 1e-10
    max_dim: int = 3
    cantor_depth: int = 20


DEFAULT_SPEC = QuadratureSpec()


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float

    def __float__(self):
        return self.value


@lru_cache(maxsize=64)
def gauss_legendre(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on ``[-1, 1]``."""
    x, w = np.polynomial.legendre.leggauss(int(m))
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def composite_nodes(lo: float, hi: float, panels: int, order: int,
                    breakpoints=None) -> tuple[np.ndarray, np.ndarray]:
    """1-d composite Gauss-Legendre rule on ``[lo, hi]``.

    Each smooth segment between consecutive breakpoints receives ``panels``
    equal panels of ``order`` nodes.
    """
    edges = [lo, hi]
    if breakpoints is not None:
        bp = np.asarray(breakpoints, dtype=float).ravel()
        edges.extend(bp[(bp > lo) & (bp < hi)].tolist())
    edges = np.unique(edges)
    cuts = np.concatenate([np.linspace(a, b, panels + 1)[:-1] for a, b in zip(edges[:-1], edges[1:])]
                          + [edges[-1:]])
    x, w = gauss_legendre(order)
    half = 0.5 * np.diff(cuts)
    mid = 0.5 * (cuts[:-1] + cuts[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def tensor_rule(axes: list[tuple[np.ndarray, np.ndarray]]) -> tuple[np.ndarray, np.ndarray]:
    """Tensor product of 1-d rules -> ``(points (N, k), weights (N,))``."""
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wts = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return pts, wts


def _evaluate(g, pts: np.ndarray) -> np.ndarray:
    vals = np.asarray(g(pts), dtype=float).reshape(-1)
    if vals.shape[0] != pts.shape[0]:
        raise InvalidArgument("integrand must return one value per point")
    bad = ~np.isfinite(vals)
    if np.any(bad):
        idx = int(np.flatnonzero(bad)[0])
        raise IntegrandError(f"non-finite integrand value at {pts[idx]}", point=pts[idx])
    return vals


def _box_value(g, lo, hi, panels, order, breakpoints):
    axes = []
    for j in range(len(lo)):
        bp = None if breakpoints is None else breakpoints[j]
        axes.append(composite_nodes(lo[j], hi[j], panels, order, bp))
    pts, wts = tensor_rule(axes)
    return float(np.dot(_evaluate(g, pts), wts))


def integrate_box(g, lo, hi, spec: QuadratureSpec = DEFAULT_SPEC, breakpoints=None) -> QuadResult:
    """Integrate ``g`` over the box ``[lo, hi]``.

    ``g`` maps an ``(N, k)`` array of points to ``N`` values.  ``breakpoints``
    is an optional per-axis list of locations where ``g`` is not smooth; panels
    are aligned to them.  The error estimate is the difference between the
    coarse pass and a pass with twice as many panels.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if lo.shape != hi.shape:
        raise InvalidArgument("lo and hi must have the same shape")
    if lo.size > spec.max_dim:
        raise InvalidArgument(f"dimension {lo.size} exceeds max_dim={spec.max_dim}")
    if np.any(hi < lo) or not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise InvalidArgument("box must be finite with lo <= hi")
    if breakpoints is not None and len(breakpoints) != lo.size:
        raise InvalidArgument("need one breakpoint list per axis")
    coarse = _box_value(g, lo, hi, spec.panels_per_axis, spec.panel_order, breakpoints)
    fine = _box_value(g, lo, hi, 2 * spec.panels_per_axis, spec.panel_order, breakpoints)
    return QuadResult(fine, abs(fine - coarse))


def integrate_stieltjes(g, model, spec: QuadratureSpec = DEFAULT_SPEC, breakpoints=None) -> float:
    """``int g dF`` for a model measure ``F``.

    The model supplies a quadrature rule appropriate to its kind: weighted
    Gauss-Legendre for densities, exact point masses for atoms and the
    self-similar leaf rule for the Cantor measure.
    """
    pts, wts = model.measure_rule(spec, breakpoints=breakpoints)
    return float(np.dot(_evaluate(g, pts), wts))


def integrate_empirical(g, sample) -> float:
    """``int g dF_hat = mean_i g(x_i)`` for a sample (or an ``(n, k)`` array)."""
    pts = getattr(sample, "points", sample)
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] == 0:
        raise InvalidArgument("empty sample")
    return float(np.mean(_evaluate(g, pts)))


def integrate_empirical_product(g, sample) -> float:
    """Integral against the product of the marginal empirical measures.

    This is the point-mass sum ``n^-k sum_{i_1..i_k} g(x_{i_1,1}, .., x_{i_k,k})``,
    i.e. Stieltjes integration against ``prod_j dF_hat_j(x_j)``.
    """
    pts = np.asarray(getattr(sample, "points", sample), dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n, k = pts.shape
    if n == 0:
        raise InvalidArgument("empty sample")
    if n**k > 5_000_000:
        raise InvalidArgument("product-empirical sum too large; subsample first")
    grid = np.stack([c.ravel() for c in np.meshgrid(*[pts[:, j] for j in range(k)],
                                                     indexing="ij")], axis=1)
    return float(np.mean(_evaluate(g, grid)))


def cantor_leaves(depth: int) -> np.ndarray:
    """Midpoints of the ``2**depth`` level-``depth`` Cantor intervals, ascending."""
    left = np.zeros(1)
    for j in range(1, depth + 1):
        left = np.concatenate([left, left + 2.0 * 3.0**-j])
    return np.sort(left) + 0.5 * 3.0**-depth
