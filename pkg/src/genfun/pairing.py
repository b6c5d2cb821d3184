"""Values of generalized functions and of their kernel estimators on test functions.

Conventions used throughout:

* ``(f, psi)`` for a cdf ``F`` on R^k is ``(-1)^k int F d^{1..1} psi``.
* Conditional objects live in copula coordinates ``a = F_x(x)``; test
  functions indexing them are defined on ``(0, 1)^{d_x}``.
* Kernel-smoothed cdfs are oriented as cdfs: ``F_hat(x) = mean K_bar((x - x_i) / h)``,
  so an indicator ``K_bar`` reproduces the empirical cdf.
"""

from __future__ import annotations

import csv
import io
import json
import functools
import inspect
import itertools
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import (AssumptionViolation, DivergenceSuspected, InvalidArgument, NotInPhiC,
                     OrderViolation, UnsupportedCombination, UnsupportedOrder)
from .kernels import Bandwidth, Kernel, verify_order
from .quadrature import (DEFAULT_SPEC, QuadratureSpec, composite_nodes, gauss_legendre,
                         integrate_box, integrate_stieltjes, tensor_rule)
from .testspace import PartitionOfUnity, TestFunction, breakpoints, mixed_partial

__all__ = [
    "FunctionalReport",
    "pair_generalized_derivative",
    "pair_measure",
    "density_contributions",
    "pair_density_estimator",
    "pair_distribution_estimator",
    "bias_functional",
    "covariance_functional",
    "cov_functional",
    "covariance_matrix",
    "IllposedPair",
    "illposed_pair",
    "conddist_values",
    "conddist_pair_oracle",
    "conddist_estimator_pair",
    "conddens_pair_oracle",
    "lemma_transform",
    "lemma_inverse",
    "conddist_pair_on_x",
    "condmoment_pair_oracle",
    "condmoment_estimator_pair",
    "condmean_estimator_pair",
]

DEFAULT_TAIL_TOL = 1e-8
DEFAULT_MAX_BLOCKS = 400


@dataclass
class FunctionalReport:
    """One pairing value with its provenance."""

    value: float
    error_estimate: float
    psi_id: str
    model_id: str = ""
    n: int | None = None
    h: float | None = None
    seed: int | None = None
    method: str = "exact-oracle"
    extra: dict = field(default_factory=dict)

    FIELDS = ("value", "error_estimate", "psi_id", "model_id", "n", "h", "seed", "method")

    def __post_init__(self):
        self.value = float(self.value)
        self.error_estimate = abs(float(self.error_estimate))

    def __float__(self):
        return self.value

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def csv_header(cls) -> list[str]:
        return list(cls.FIELDS)

    def csv_row(self) -> list[str]:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return repr(v)
            return str(v)
        return [fmt(getattr(self, k)) for k in self.FIELDS]

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if header:
            writer.writerow(self.csv_header())
        writer.writerow(self.csv_row())
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, default=float)


# ---------------------------------------------------------------------------
# helpers


def _cdf_callable(F) -> Callable[[np.ndarray], np.ndarray]:
    cdf = getattr(F, "cdf", F)

    def g(pts):
        pts = np.asarray(pts, dtype=float)
        return np.asarray(cdf(pts if pts.shape[1] > 1 else pts[:, :1]), dtype=float).reshape(-1)
    return g


def _model_id(model) -> str:
    return getattr(model, "id", type(model).__name__)


def _merge_breakpoints(*lists):
    lists = [b for b in lists if b is not None]
    if not lists:
        return None
    dim = len(lists[0])
    return [np.unique(np.concatenate([np.atleast_1d(b[j]) for b in lists])) for j in range(dim)]


def _h_vector(h, dim: int, n: int | None = None) -> np.ndarray:
    if isinstance(h, Bandwidth):
        if n is None:
            raise InvalidArgument("a bandwidth law needs the sample size")
        h = h(n)
    h = np.atleast_1d(np.asarray(h, dtype=float))
    if h.size == 1 and dim > 1:
        h = np.full(dim, h[0])
    if h.size != dim or np.any(~(h > 0)):
        raise InvalidArgument(f"bandwidth must be positive with {dim} components, got {h}")
    return h


def _points(sample) -> np.ndarray:
    pts = np.asarray(getattr(sample, "points", sample), dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] < 1:
        raise InvalidArgument("empty sample")
    return pts


def _unit_interval_nodes(psi: TestFunction, order: int = 16, panels: int = 4, extra=None):
    """Gauss-Legendre rule on ``supp(psi) ∩ [0, 1]`` (1-d)."""
    lo = max(0.0, float(psi.support_lo[0]))
    hi = min(1.0, float(psi.support_hi[0]))
    if hi <= lo:
        return np.empty(0), np.empty(0)
    bp = None if extra is None or len(extra) == 0 else np.asarray(extra, dtype=float)
    return composite_nodes(lo, hi, panels, order, bp)


def _linear_in(*names):
    """Evaluate on linear combinations term by term, so linearity holds to rounding."""
    def wrap(fn):
        sig = inspect.signature(fn)

        @functools.wraps(fn)
        def inner(*args, **kwargs):
            bound = sig.bind(*args, **kwargs)
            for name in names:
                psi = bound.arguments.get(name)
                if isinstance(psi, TestFunction) and psi.terms is not None:
                    parts = []
                    for c, part in psi.terms:
                        bound.arguments[name] = part
                        parts.append((c, inner(*bound.args, **bound.kwargs)))
                    return _combine(parts, psi.id)
            return fn(*args, **kwargs)
        return inner
    return wrap


def _combine(parts, psi_id):
    first = parts[0][1]
    if not isinstance(first, FunctionalReport):
        return sum(c * np.asarray(r) for c, r in parts)
    extra = dict(first.extra)
    if "bias" in extra:
        extra["bias"] = sum(c * r.extra["bias"] for c, r in parts)
    if "tail" in extra:
        extra["tail"] = sum(abs(c) * r.extra["tail"] for c, r in parts)
    return replace(first, value=sum(c * r.value for c, r in parts),
                   error_estimate=sum(abs(c) * r.error_estimate for c, r in parts),
                   psi_id=psi_id, extra=extra)


# ---------------------------------------------------------------------------
# unconditional pairings


@_linear_in("psi")
def pair_generalized_derivative(F, psi: TestFunction, k: int | None = None,
                                spec: QuadratureSpec = DEFAULT_SPEC,
                                breakpoints_F=None) -> FunctionalReport:
    """``(f, psi) = (-1)^k int F(x) d^k psi / dx_1..dx_k dx`` for any cdf ``F``.

    ``F`` is a model (its ``cdf`` is used) or a callable on ``(N, k)`` points.
    ``breakpoints_F`` lists per-axis locations where ``F`` jumps or kinks.
    """
    k = psi.dim if k is None else int(k)
    if k != psi.dim:
        raise InvalidArgument(f"k={k} does not match the test function dimension {psi.dim}")
    dpsi = mixed_partial(psi)  # raises UnsupportedOrder when psi is not smooth enough
    cdf = _cdf_callable(F)
    if breakpoints_F is None and hasattr(F, "cdf_breakpoints"):
        breakpoints_F = F.cdf_breakpoints()
    bp = _merge_breakpoints(breakpoints(psi), breakpoints_F)
    res = integrate_box(lambda p: cdf(p) * dpsi(p), psi.support_lo, psi.support_hi, spec, bp)
    return FunctionalReport((-1) ** k * res.value, res.error, psi.id, _model_id(F),
                            method="exact-oracle")


@_linear_in("psi")
def pair_measure(model, psi: TestFunction, spec: QuadratureSpec = DEFAULT_SPEC) -> FunctionalReport:
    """``int psi dF`` by the model's own Stieltjes rule; equals ``(f, psi)``."""
    val = integrate_stieltjes(lambda p: psi(p), model, spec, breakpoints(psi))
    return FunctionalReport(val, 0.0, psi.id, _model_id(model), method="exact-oracle")


def _gl_order_for(psi: TestFunction, K: Kernel) -> tuple[int, int]:
    """(nodes, panels) per axis; exact when both factors are polynomials."""
    if psi.poly_degree is not None and K.poly_degree is not None:
        deg = max(psi.poly_degree) + K.poly_degree
        return deg // 2 + 1, 1
    return 16, 4


@_linear_in("psi")
def density_contributions(sample, K: Kernel, h, psi: TestFunction) -> np.ndarray:
    """Per-observation terms ``e_i = int K(w) psi(x_i - h w) dw``; their mean is ``(f_hat, psi)``."""
    pts = _points(sample)
    n, k = pts.shape
    if K.indicator:
        raise InvalidArgument("the density estimator needs a kernel with a density part")
    if K.dim != k or psi.dim != k:
        raise InvalidArgument("kernel, test function and sample dimensions differ")
    h = _h_vector(h, k, n)
    wlo = np.maximum(-1.0, (pts - psi.support_hi) / h)
    whi = np.minimum(1.0, (pts - psi.support_lo) / h)
    active = np.flatnonzero(np.all(whi > wlo, axis=1))
    out = np.zeros(n)
    if active.size == 0:
        return out
    order, panels = _gl_order_for(psi, K)
    t, tw = gauss_legendre(order)
    u = ((np.arange(panels)[:, None] + 0.5 * (t[None, :] + 1.0)) / panels).ravel()
    uw = np.tile(tw, panels) / (2.0 * panels)
    if k == 1:
        grid_u, grid_w = u[:, None], uw
    else:
        grid_u, grid_w = tensor_rule([(u, uw)] * k)
    q = grid_w.size
    chunk = max(1, 2_000_000 // q)
    for s in range(0, active.size, chunk):
        idx = active[s:s + chunk]
        lo, span = wlo[idx], whi[idx] - wlo[idx]
        w = lo[:, None, :] + span[:, None, :] * grid_u[None, :, :]          # (c, q, k)
        jac = np.prod(span, axis=1)                                         # (c,)
        x = pts[idx][:, None, :] - h[None, None, :] * w
        vals = K(w.reshape(-1, k)) * psi(x.reshape(-1, k))
        out[idx] = jac * (vals.reshape(idx.size, q) @ grid_w)
    return out


@_linear_in("psi")
def pair_density_estimator(sample, K: Kernel, h, psi: TestFunction) -> FunctionalReport:
    """``(f_hat, psi) = (1/n) sum_i int K(w) psi(x_i - h w) dw``.

    Each term is integrated over the part of ``[-1, 1]^k`` where ``psi`` is
    nonzero; for polynomial ``K`` and ``psi`` the rule is exact.  The error
    estimate is the sampling standard error of the mean of the terms.
    """
    pts = _points(sample)
    e = density_contributions(pts, K, h, psi)
    n = e.size
    se = float(np.std(e, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    hv = _h_vector(h, pts.shape[1], n)
    return FunctionalReport(float(np.mean(e)), se, psi.id, getattr(sample, "model_id", ""),
                            n=n, h=float(np.max(hv)), seed=getattr(sample, "seed", None),
                            method="estimator")


def _upper_mass(psi: TestFunction, t: np.ndarray, order: int = 16) -> np.ndarray:
    """``int_{x >= t} psi(x) dx`` for rows of ``t`` (box-restricted)."""
    n, k = t.shape
    lo = np.clip(t, psi.support_lo, psi.support_hi)
    hi = np.broadcast_to(psi.support_hi, lo.shape)
    span = hi - lo
    g, gw = gauss_legendre(order)
    u = 0.5 * (g + 1.0)
    uw = 0.5 * gw
    if k == 1:
        grid_u, grid_w = u[:, None], uw
    else:
        grid_u, grid_w = tensor_rule([(u, uw)] * k)
    out = np.empty(n)
    chunk = max(1, 1_000_000 // grid_w.size)
    for s in range(0, n, chunk):
        x = lo[s:s + chunk, None, :] + span[s:s + chunk, None, :] * grid_u[None]
        vals = psi(x.reshape(-1, k)).reshape(x.shape[0], -1)
        out[s:s + chunk] = np.prod(span[s:s + chunk], axis=1) * (vals @ grid_w)
    return out


@_linear_in("psi")
def pair_distribution_estimator(sample, K: Kernel, h, psi: TestFunction) -> FunctionalReport:
    """``int F_hat(x) psi(x) dx`` with ``F_hat(x) = mean_i K_bar((x - x_i)/h)``.

    Exchanging the order of integration gives
    ``int K(w) Psi(x_i + h w) dw`` with ``Psi(t) = int_{x >= t} psi``, which is
    what is computed.  For the indicator ``K_bar`` the term is ``Psi(x_i)``.
    """
    pts = _points(sample)
    n, k = pts.shape
    if psi.dim != k:
        raise InvalidArgument("test function and sample dimensions differ")
    order = 16
    if psi.poly_degree is not None:
        order = max(order, max(psi.poly_degree) // 2 + 2)
    if K.indicator:
        terms = _upper_mass(psi, pts, order)
        hmax = 0.0
    else:
        hv = _h_vector(h, k, n)
        hmax = float(np.max(hv))
        # Psi is piecewise polynomial in w with kinks where x_i + h w hits the support edges
        g, gw = gauss_legendre(order)
        terms = np.zeros(n)
        if k == 1:
            x = pts[:, 0]
            cuts = np.stack([np.full(n, -1.0),
                             np.clip((psi.support_lo[0] - x) / hv[0], -1, 1),
                             np.clip((psi.support_hi[0] - x) / hv[0], -1, 1),
                             np.full(n, 1.0)], axis=1)
            for a, b in zip(cuts[:, :-1].T, cuts[:, 1:].T):
                span = b - a
                w = a[:, None] + span[:, None] * 0.5 * (g[None, :] + 1.0)
                psi_up = _upper_mass(psi, (x[:, None] + hv[0] * w).reshape(-1, 1), order)
                terms += 0.5 * span * ((K(w.ravel()) * psi_up).reshape(n, -1) @ gw)
        else:
            grid_u, grid_w = tensor_rule([composite_nodes(-1.0, 1.0, 4, order)] * k)
            kw = K(grid_u) * grid_w
            for i in range(n):
                terms[i] = _upper_mass(psi, pts[i] + hv * grid_u, order) @ kw
    se = float(np.std(terms, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return FunctionalReport(float(np.mean(terms)), se, psi.id, getattr(sample, "model_id", ""),
                            n=n, h=hmax, seed=getattr(sample, "seed", None), method="estimator")


@_linear_in("psi")
def bias_functional(model, K: Kernel, h, psi: TestFunction,
                    spec: QuadratureSpec = DEFAULT_SPEC) -> FunctionalReport:
    """Leading bias term ``(B(h, K), psi)`` of the density estimator.

    ``(B, psi) = (-1)^(l+k) sum_{|m|=l} prod_i (h_i/hbar)^m_i / m_i!
    * mu_m * int F d^(m+1) psi``, where ``mu_m`` is the kernel moment and
    ``m+1`` adds one derivative in every coordinate.  The bias itself,
    ``hbar^l (B, psi)``, is returned in ``extra["bias"]``.
    """
    k = psi.dim
    l = int(K.order)
    if K.dim != k:
        raise InvalidArgument("kernel and test function dimensions differ")
    try:
        verify_order(K, l)
    except OrderViolation as exc:
        raise InvalidArgument(f"kernel does not have its declared order: {exc}") from exc
    if psi.smoothness_order < l + k:
        raise UnsupportedOrder(f"bias functional needs smoothness {l + k}, {psi.id} has "
                               f"{psi.smoothness_order}")
    hv = _h_vector(h, k)
    hbar = float(np.max(hv))
    cdf = _cdf_callable(model)
    bp = breakpoints(psi)
    total, err = 0.0, 0.0
    for m in itertools.product(range(l + 1), repeat=k):
        if sum(m) != l:
            continue
        mu = K.moment(m)
        if abs(mu) < 1e-14:
            continue
        coef = mu * np.prod([(hv[i] / hbar) ** m[i] / math.factorial(m[i]) for i in range(k)])
        alpha = tuple(mi + 1 for mi in m)
        res = integrate_box(lambda p, a=alpha: cdf(p) * psi.deriv(a, p),
                            psi.support_lo, psi.support_hi, spec, bp)
        total += coef * res.value
        err += abs(coef) * res.error
    value = (-1) ** (l + k) * total
    return FunctionalReport(value, err, psi.id, _model_id(model), h=hbar, method="exact-oracle",
                            extra={"bias": hbar**l * value, "order": l})


@_linear_in("psi1", "psi2")
def covariance_functional(model, psi1: TestFunction, psi2: TestFunction,
                          spec: QuadratureSpec = DEFAULT_SPEC) -> FunctionalReport:
    """``cov(psi1(x), psi2(x))`` under the model, by Stieltjes quadrature."""
    bp = _merge_breakpoints(breakpoints(psi1), breakpoints(psi2))
    pts, wts = model.measure_rule(spec, bp)
    a = np.asarray(psi1(pts), dtype=float).reshape(-1)
    b = np.asarray(psi2(pts), dtype=float).reshape(-1)
    ea, eb = a @ wts, b @ wts
    value = float(((a - ea) * (b - eb)) @ wts)
    return FunctionalReport(value, 0.0, f"{psi1.id}|{psi2.id}", _model_id(model))


def covariance_matrix(model, psis, spec: QuadratureSpec = DEFAULT_SPEC) -> np.ndarray:
    """Gram matrix of the covariance functional over a list of test functions."""
    bp = _merge_breakpoints(*[breakpoints(p) for p in psis])
    pts, wts = model.measure_rule(spec, bp)
    vals = np.stack([np.asarray(p(pts), dtype=float).reshape(-1) for p in psis])
    centred = vals - (vals @ wts)[:, None]
    cov = (centred * wts) @ centred.T
    return 0.5 * (cov + cov.T)


# the name used for the covariance functional when it must not be confused with a copula
cov_functional = covariance_functional


# ---------------------------------------------------------------------------
# ill-posedness pair


@dataclass(frozen=True)
class IllposedPair:
    """Two densities on [0, 1] with disjoint supports and uniformly close cdfs."""

    eps_bar: float
    eps: float
    rounded: bool
    L1_distance: float
    sup_distance: float

    @property
    def cells(self) -> int:
        return int(round(1.0 / self.eps))

    def f1(self, x):
        x = np.asarray(x, dtype=float)
        cell = np.floor(x / self.eps)
        return np.where((x >= 0) & (x < 1) & (cell % 2 == 0), 2.0, 0.0)

    def f2(self, x):
        x = np.asarray(x, dtype=float)
        cell = np.floor(x / self.eps)
        return np.where((x >= 0) & (x < 1) & (cell % 2 == 1), 2.0, 0.0)

    def _cdf(self, x, parity):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        cell = np.minimum(np.floor(x / self.eps), self.cells - 1)
        full = np.floor((cell + (1 - parity)) / 2.0)  # completed cells of this parity
        part = np.where(cell % 2 == parity, x - cell * self.eps, 0.0)
        return 2.0 * (full * self.eps + part)

    def F1(self, x):
        return self._cdf(x, 0)

    def F2(self, x):
        return self._cdf(x, 1)

    def pairing_gap(self, psi: TestFunction, order: int = 16) -> float:
        """``(f1 - f2, psi)``, integrated exactly between cell and support edges."""
        g, gw = gauss_legendre(order)
        edges = np.arange(self.cells + 1) * self.eps
        inside = [e for e in (psi.support_lo[0], psi.support_hi[0]) if 0.0 < e < 1.0]
        edges = np.unique(np.concatenate([edges, inside]))
        a, b = edges[:-1], edges[1:]
        x = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * g[None, :]
        piece = (psi(x.ravel()).reshape(x.shape) @ gw) * 0.5 * (b - a)
        cell = np.floor(0.5 * (a + b) / self.eps)
        sign = np.where(cell % 2 == 0, 2.0, -2.0)
        return float(sign @ piece)

    def gap_bound(self, psi: TestFunction, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
        """``sup|F1 - F2| * int |psi'|``."""
        dpsi = mixed_partial(psi)
        bp = [np.concatenate([psi.support_lo, psi.support_hi,
                              np.linspace(psi.support_lo[0], psi.support_hi[0], 65)])]
        res = integrate_box(lambda p: np.abs(dpsi(p)), psi.support_lo, psi.support_hi, spec, bp)
        return self.sup_distance * res.value


def illposed_pair(eps_bar: float) -> IllposedPair:
    """Alternating-indicator densities at distance 2 in L1 whose cdfs differ by at most ``eps_bar``.

    ``eps = eps_bar / 2`` is rounded down to ``1 / N`` with ``N`` even, so
    that both densities integrate to one on [0, 1].
    """
    if not 0.0 < eps_bar < 1.0:
        raise InvalidArgument(f"eps_bar must lie in (0, 1), got {eps_bar}")
    cells = int(math.ceil(2.0 / eps_bar - 1e-12))
    cells += cells % 2
    eps = 1.0 / cells
    rounded = not math.isclose(eps, eps_bar / 2.0, rel_tol=1e-12)
    # f1 - f2 = +-2 everywhere on [0, 1); the cdf gap peaks at 2 eps at the end of each f1 cell
    return IllposedPair(eps_bar=eps_bar, eps=eps, rounded=rounded, L1_distance=2.0,
                        sup_distance=2.0 * eps)


# ---------------------------------------------------------------------------
# conditional distribution and density


def _require_continuous_x(model):
    if not getattr(model, "continuous_marginal_x", False):
        raise AssumptionViolation(f"model {_model_id(model)} has a discontinuous x marginal")


@_linear_in("psi")
def conddist_values(model, psi: TestFunction, ys, order: int = 20, panels: int = 2) -> np.ndarray:
    """``(F_{y|x}, psi)`` at each ``y`` in ``ys`` for a joint model.

    With one conditioning variable the integral is taken in copula
    coordinates, ``-int_0^1 C(a, y) psi'(a) da``; with several, against the
    model's measure rule for ``x`` with ``(-1)^{d_x} d^{1..1} psi``.
    """
    _require_continuous_x(model)
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    d_x = model.d_x
    if psi.dim != d_x:
        raise InvalidArgument(f"test function must live on (0,1)^{d_x}")
    dpsi = mixed_partial(psi)
    if d_x == 1:
        kinks = [model.copula_kinks(y) for y in ys]
        if all(k.size == 0 for k in kinks):
            a, w = _unit_interval_nodes(psi, order, panels)
            if a.size == 0:
                return np.zeros(ys.size)
            C = np.asarray(model.copula_cdf(np.tile(a, ys.size), np.repeat(ys, a.size)),
                           dtype=float).reshape(ys.size, a.size)
            return -(C @ (w * dpsi(a)))
        out = np.zeros(ys.size)
        for r, (y, kk) in enumerate(zip(ys, kinks)):
            a, w = _unit_interval_nodes(psi, order, panels, kk)
            if a.size:
                out[r] = -float(np.asarray(model.copula_cdf(a, np.full(a.size, y))) @ (w * dpsi(a)))
        return out
    # general d_x: Stieltjes against the x law, psi evaluated at the marginal cdfs
    xp, xw = model.x_model.measure_rule(DEFAULT_SPEC)
    z = np.stack([np.asarray(model.x_model.marginal_cdf(j, xp[:, j]), dtype=float)
                  for j in range(d_x)], axis=1)
    g = dpsi(z) * xw
    keep = g != 0
    xp, g = xp[keep], g[keep]
    out = np.empty(ys.size)
    for r, y in enumerate(ys):
        out[r] = float(model.joint_cdf(xp, np.full(xp.shape[0], y)) @ g)
    return (-1) ** d_x * out


@_linear_in("psi")
def conddist_pair_oracle(model, psi: TestFunction, y: float) -> FunctionalReport:
    """``(F_{y|x}, psi) = (-1)^{d_x} int F_{x,y}(x, y) d^{d_x} psi(F_x(x)) dF_x(x)``."""
    val = float(conddist_values(model, psi, [y])[0])
    return FunctionalReport(val, 0.0, psi.id, _model_id(model), method="exact-oracle",
                            extra={"y": float(y)})


@_linear_in("psi_x", "psi_y")
def conddens_pair_oracle(model, psi_x: TestFunction, psi_y: TestFunction,
                         order: int = 16, panels: int = 8) -> FunctionalReport:
    """``(f_{y|x}, psi_x psi_y) = (-1)^{d_x+1} int int F_{x,y} d psi_x(F_x) psi_y'(y) dF_x dy``.

    Integrating in ``x`` first turns this into ``-int (F_{y|x}, psi_x)(y) psi_y'(y) dy``.
    """
    if psi_y.dim != 1:
        raise UnsupportedCombination("conditional density pairing implemented for d_y = 1")
    dpy = mixed_partial(psi_y)
    y, w = composite_nodes(psi_y.support_lo[0], psi_y.support_hi[0], panels, order)
    D = conddist_values(model, psi_x, y)
    val = -float(D @ (w * dpy(y)))
    return FunctionalReport(val, 0.0, f"{psi_x.id}x{psi_y.id}", _model_id(model))


def _phi_c_check(model, x_nodes: np.ndarray):
    if not getattr(model, "has_density", False):
        raise NotInPhiC(f"model {_model_id(model)} has no density")
    dens = np.asarray(model.density(x_nodes), dtype=float)
    if dens.size and not np.min(dens) > 0:
        raise NotInPhiC(f"density of {_model_id(model)} vanishes on the test-function region "
                        f"(min {np.min(dens):.3g})")


def lemma_transform(psi: TestFunction, x_model) -> TestFunction:
    """``psi_tilde(x) = f_x(x) psi(F_x(x))`` as a continuous test function on R."""
    if psi.dim != 1 or x_model.dim != 1:
        raise UnsupportedCombination("the change of variables is implemented for d_x = 1")
    a_lo = max(0.0, float(psi.support_lo[0]))
    a_hi = min(1.0, float(psi.support_hi[0]))
    lo, hi = float(x_model.ppf(a_lo)), float(x_model.ppf(a_hi))
    nodes, _ = composite_nodes(lo, hi, 8, 8)
    _phi_c_check(x_model, np.concatenate([[lo, hi], nodes]))

    def evaluate(alpha, pts):
        if sum(alpha) != 0:
            raise UnsupportedOrder("the transformed test function is only continuous")
        x = pts[:, 0]
        inside = (x >= lo) & (x <= hi)
        out = np.zeros(x.size)
        xi = x[inside]
        out[inside] = np.asarray(x_model.density(xi)) * psi(np.asarray(x_model.cdf(xi)))
        return out

    return TestFunction(np.array([lo]), np.array([hi]), 0, evaluate, id=f"lemma({psi.id})")


def lemma_inverse(psi_tilde: TestFunction, x_model) -> TestFunction:
    """``psi(a) = psi_tilde(F^-1(a)) / f_x(F^-1(a))``, the inverse of ``lemma_transform``."""
    lo = float(x_model.cdf(psi_tilde.support_lo[0]))
    hi = float(x_model.cdf(psi_tilde.support_hi[0]))
    nodes, _ = composite_nodes(float(psi_tilde.support_lo[0]), float(psi_tilde.support_hi[0]), 8, 8)
    _phi_c_check(x_model, nodes)

    def evaluate(alpha, pts):
        if sum(alpha) != 0:
            raise UnsupportedOrder("the recovered test function is only continuous")
        a = pts[:, 0]
        inside = (a >= lo) & (a <= hi)
        out = np.zeros(a.size)
        x = np.asarray(x_model.ppf(a[inside]), dtype=float)
        dens = np.asarray(x_model.density(x), dtype=float)
        val = psi_tilde(x)
        safe = dens > 0
        out_in = np.zeros(x.size)
        out_in[safe] = val[safe] / dens[safe]
        out[inside] = out_in
        return out

    return TestFunction(np.array([lo]), np.array([hi]), 0, evaluate,
                        id=f"lemma_inv({psi_tilde.id})")


@_linear_in("psi_tilde")
def conddist_pair_on_x(model, psi_tilde: TestFunction, y: float,
                       order: int = 24, panels: int = 8) -> FunctionalReport:
    """``int F_{y|x}(x, y) psi_tilde(x) dx`` using the model's pointwise conditional cdf."""
    if model.d_x != 1:
        raise UnsupportedCombination("implemented for d_x = 1")
    x, w = composite_nodes(psi_tilde.support_lo[0], psi_tilde.support_hi[0], panels, order)
    cond = np.asarray(model.cond_cdf(x, np.full(x.size, float(y))), dtype=float)
    val = float((cond * psi_tilde(x)) @ w)
    return FunctionalReport(val, 0.0, psi_tilde.id, _model_id(model), extra={"y": float(y)})


# ---------------------------------------------------------------------------
# conditional moments: oracle


def _moment_fn(g):
    """Normalise ``g`` to ``(g, g')``; accepts a numpy Polynomial or a pair of callables."""
    if g is None:
        g = np.polynomial.Polynomial([0.0, 1.0])
    if isinstance(g, np.polynomial.Polynomial):
        return g, g.deriv()
    if isinstance(g, tuple) and len(g) == 2:
        return g
    raise InvalidArgument("g must be a numpy Polynomial or a (g, g') pair")


def _sum_blocks(partition: PartitionOfUnity, term: Callable[[tuple], float], tail_tol: float,
                max_blocks: int, order=None):
    """Accumulate per-member terms block by block until two consecutive blocks are negligible."""
    total, quiet, used = 0.0, 0, 0
    per_member: dict[tuple, float] = {}
    for b, block in enumerate(partition.blocks()):
        if b >= max_blocks:
            raise DivergenceSuspected(
                f"partition tail did not fall below {tail_tol:g} within {max_blocks} blocks")
        members = list(block) if order is None else order(list(block))
        contrib = 0.0
        for v in members:
            t = term(v)
            per_member[v] = t
            contrib += t
        total += contrib
        used += len(members)
        quiet = quiet + 1 if abs(contrib) < tail_tol else 0
        if quiet >= 2:
            return total, b + 1, used, abs(contrib), per_member
    raise AssertionError("unreachable")  # blocks() is infinite


@_linear_in("psi")
def condmoment_pair_oracle(model, psi: TestFunction, partition: PartitionOfUnity, g=None,
                           tail_tol: float = DEFAULT_TAIL_TOL, max_blocks: int = DEFAULT_MAX_BLOCKS,
                           order: int = 16, panels_per_cell: int = 16,
                           member_order=None) -> FunctionalReport:
    """``(m, psi)`` for ``m(x) = E[g(y) | x]`` as a sum over partition members.

    Each member contributes ``(-1)^{d_x+1} int int F_{x,y} d psi(F_x)
    (g psi_v)'(y) dF_x dy``, evaluated as ``-int (F_{y|x}, psi)(y) (g psi_v)'(y) dy``.
    The per-member integrals are summed; the summed integrand is never formed.

    The ``y`` nodes are aligned to the lattice cells of the partition, so
    ``(F_{y|x}, psi)(y)`` is computed once per cell and shared by the two
    members overlapping it.  The mollifier-type members need many nodes:
    the quadrature error of ``int (y psi_v)'`` must sit well below ``tail_tol``.
    """
    if partition.dim != 1:
        raise UnsupportedCombination("conditional moments implemented for d_y = 1")
    gf, dg = _moment_fn(g)
    s = partition.spacing
    origin = float(partition.origin[0])
    cells: dict[int, tuple] = {}

    def cell(c):
        if c not in cells:
            y, w = composite_nodes(origin + c * s, origin + (c + 1) * s, panels_per_cell, order)
            cells[c] = (y, w, conddist_values(model, psi, y))
        return cells[c]

    def term(v):
        mem = partition.member(v)
        dmem = mixed_partial(mem)
        total = 0.0
        for c in (v[0] - 1, v[0]):
            y, w, D = cell(c)
            deriv = dg(y) * mem(y) + gf(y) * dmem(y)
            total -= float(D @ (w * deriv))
        return total

    total, blocks, used, last, _ = _sum_blocks(partition, term, tail_tol, max_blocks, member_order)
    return FunctionalReport(total, last, psi.id, _model_id(model), method="exact-oracle",
                            extra={"blocks": blocks, "members": used, "tail": last})


# ---------------------------------------------------------------------------
# conditional estimators


def _check_conditional_bandwidth(h, n):
    if isinstance(h, Bandwidth):
        if not h.alpha < 0.25:
            raise InvalidArgument(
                f"conditional estimators need h = c n^-alpha with alpha < 1/4, got {h.alpha}")
        return float(h.hbar(n))
    return None if h is None else float(h)


class _SmoothedX:
    """Kernel-smoothed ``F_x``, ``f_x`` and weighted smoothed cdfs on a quadrature grid.

    The grid spans the union of the kernel windows; each grid node only sees
    the observations within ``h`` of it, handled as sparse blocks.
    """

    _MAX_ENTRIES = 2_000_000

    def __init__(self, x: np.ndarray, K: Kernel, h: float, panels: int = 2048, order: int = 4):
        self.order_idx = np.argsort(x, kind="stable")
        self.xs = x[self.order_idx]
        self.n = x.size
        self.K = K
        self.h = float(h)
        lo, hi = self.xs[0] - self.h, self.xs[-1] + self.h
        self.grid, self.gw = composite_nodes(lo, hi, panels, order)
        self.lo_idx = np.searchsorted(self.xs, self.grid - self.h, side="right")
        self.hi_idx = np.searchsorted(self.xs, self.grid + self.h, side="left")
        counts = self.hi_idx - self.lo_idx
        cum = np.cumsum(counts)
        self.chunks = []
        start = 0
        while start < self.grid.size:
            base = cum[start - 1] if start else 0
            stop = int(np.searchsorted(cum, base + self._MAX_ENTRIES, side="right"))
            stop = max(stop, start + 1)
            self.chunks.append((start, min(stop, self.grid.size)))
            start = stop
        ones = np.ones((self.n, 1))
        self.F = self._pass(ones, K.antiderivative, full_below=True)[:, 0]
        self.f = self._pass(ones, lambda u: K(u) / self.h, full_below=False)[:, 0]

    def _pass(self, W_sorted: np.ndarray, fn, full_below: bool) -> np.ndarray:
        from scipy import sparse
        out = np.zeros((self.grid.size, W_sorted.shape[1]))
        if full_below:
            prefix = np.vstack([np.zeros((1, W_sorted.shape[1])), np.cumsum(W_sorted, axis=0)])
            out += prefix[self.lo_idx]
        for a, b in self.chunks:
            lo, hi = self.lo_idx[a:b], self.hi_idx[a:b]
            counts = hi - lo
            rows = np.repeat(np.arange(b - a), counts)
            offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
            cols = np.arange(rows.size) + np.repeat(lo - offsets, counts)
            vals = fn((self.grid[a + rows] - self.xs[cols]) / self.h)
            mat = sparse.csr_matrix((vals, (rows, cols)), shape=(b - a, self.n))
            out[a:b] += mat @ W_sorted
        return out / self.n

    def pair(self, dpsi: TestFunction, W: np.ndarray) -> np.ndarray:
        """``int psi'(F(x)) [weighted smoothed cdf](x) f(x) dx`` per column of ``W``."""
        Wc = self._pass(W[self.order_idx], self.K.antiderivative, full_below=True)
        return (dpsi(self.F) * self.f * self.gw) @ Wc


def _empirical_x_pair(x: np.ndarray, dpsi: TestFunction, W: np.ndarray) -> np.ndarray:
    """``(1/n) sum_i psi'(i/n) (1/n) sum_{j <= i} W_j`` over x-ranks, per column of ``W``."""
    n = x.size
    idx = np.argsort(x, kind="stable")
    a = np.arange(1, n + 1) / n
    dp = dpsi(a)
    # suffix sums of psi' turn the double sum into one pass over the sorted weights
    suffix = np.cumsum(dp[::-1])[::-1]
    return (suffix @ W[idx]) / n**2


def _y_weights_cdf(y: np.ndarray, y0: float, G: Kernel | None, h_y: float | None) -> np.ndarray:
    if G is None or G.indicator:
        return (y <= y0).astype(float)
    return G.antiderivative((y0 - y) / h_y)


@_linear_in("psi")
def conddist_estimator_pair(sample, psi: TestFunction, y: float, K: Kernel | None = None,
                            h=None, G: Kernel | None = None, h_y: float | None = None,
                            d_x: int | None = None) -> FunctionalReport:
    """Plug-in ``(F_hat_{y|x}, psi)``: the oracle formula with estimated cdfs.

    Without ``K`` the x-cdfs are empirical, otherwise smoothed with
    ``K_bar((x - x_i)/h)``.  Without ``G`` the y-part is the indicator
    ``1[y_i <= y]``, otherwise ``G_bar((y - y_i)/h_y)``.
    """
    pts = _points(sample)
    n = pts.shape[0]
    d_x = pts.shape[1] - 1 if d_x is None else int(d_x)
    if psi.dim != d_x:
        raise InvalidArgument("test function dimension must equal d_x")
    hval = _check_conditional_bandwidth(h, n)
    dpsi = mixed_partial(psi)
    x, yv = pts[:, :d_x], pts[:, d_x]
    if G is not None and not G.indicator and not (h_y and h_y > 0):
        raise InvalidArgument("a smooth G needs a positive h_y")
    W = _y_weights_cdf(yv, float(y), G, h_y)[:, None]
    if d_x == 1:
        if K is None or K.indicator:
            val = -float(_empirical_x_pair(x[:, 0], dpsi, W)[0])
        else:
            if hval is None:
                raise InvalidArgument("a smooth K needs a bandwidth")
            val = -float(_SmoothedX(x[:, 0], K, hval).pair(dpsi, W)[0])
    else:
        if K is not None and not K.indicator:
            raise UnsupportedCombination("smoothed x-cdfs implemented for d_x = 1")
        ranks = np.stack([np.argsort(np.argsort(x[:, j], kind="stable"), kind="stable") + 1
                          for j in range(d_x)], axis=1) / n
        counts = np.zeros(n)
        chunk = max(1, 4_000_000 // n)
        for s in range(0, n, chunk):
            below = np.all(x[None, :, :] <= x[s:s + chunk, None, :], axis=2)
            counts[s:s + chunk] = below @ W[:, 0]
        val = (-1) ** d_x * float(np.mean(counts / n * dpsi(ranks)))
    return FunctionalReport(val, 0.0, psi.id, getattr(sample, "model_id", ""), n=n, h=hval,
                            seed=getattr(sample, "seed", None), method="estimator",
                            extra={"y": float(y)})


@_linear_in("psi")
def condmoment_estimator_pair(sample, psi: TestFunction, partition: PartitionOfUnity, g=None,
                              tail_tol: float = DEFAULT_TAIL_TOL,
                              max_blocks: int = DEFAULT_MAX_BLOCKS, K: Kernel | None = None,
                              h=None, G: Kernel | None = None, h_y: float | None = None,
                              member_order=None) -> FunctionalReport:
    """Plug-in ``(m_hat, psi)`` for ``m(x) = E[g(y) | x]`` with one conditioning variable.

    Member ``v`` contributes ``int int F_hat_{x,y} psi'(F_hat_x) (g psi_v)'(y)
    dF_hat_x dy``; the ``y`` integral is exact:
    ``int 1[y_j <= y] (g psi_v)'(y) dy = -g(y_j) psi_v(y_j)``, and for a
    smooth ``G`` it becomes ``-int G(w) (g psi_v)(y_j + h_y w) dw``.
    """
    pts = _points(sample)
    n = pts.shape[0]
    if pts.shape[1] != 2 or psi.dim != 1 or partition.dim != 1:
        raise UnsupportedCombination("conditional moment estimator needs d_x = d_y = 1")
    hval = _check_conditional_bandwidth(h, n)
    gf, _ = _moment_fn(g)
    dpsi = mixed_partial(psi)
    x, yv = pts[:, 0], pts[:, 1]
    smooth_y = G is not None and not G.indicator
    if smooth_y and not (h_y and h_y > 0):
        raise InvalidArgument("a smooth G needs a positive h_y")
    if K is not None and not K.indicator:
        if hval is None:
            raise InvalidArgument("a smooth K needs a bandwidth")
        sx = _SmoothedX(x, K, hval)
        pair = lambda W: float(sx.pair(dpsi, W[:, None])[0])  # noqa: E731
    else:
        idx = np.argsort(x, kind="stable")
        suffix = np.cumsum(dpsi(np.arange(1, n + 1) / n)[::-1])[::-1]
        ys_sorted = yv[idx]
        pair = None
    gw_nodes = None
    if smooth_y:
        t, tw = gauss_legendre(16)
        gw_nodes = (t, tw * G(t))

    def term(v):
        mem = partition.member(v)
        if smooth_y:
            t, tw = gw_nodes
            lo, hi = mem.support_lo[0] - h_y, mem.support_hi[0] + h_y
            sel = (yv > lo) & (yv < hi)
            W = np.zeros(n)
            if np.any(sel):
                yy = yv[sel][:, None] + h_y * t[None, :]
                W[sel] = -((gf(yy) * mem(yy.ravel()).reshape(yy.shape)) @ tw)
        else:
            W = None
        if pair is not None:
            if W is None:
                W = -gf(yv) * mem(yv)
            return pair(W)
        if W is None:
            sel = (ys_sorted > mem.support_lo[0]) & (ys_sorted < mem.support_hi[0])
            if not np.any(sel):
                return 0.0
            w_sorted = np.zeros(n)
            w_sorted[sel] = -gf(ys_sorted[sel]) * mem(ys_sorted[sel])
        else:
            w_sorted = W[idx]
        return float(suffix @ w_sorted) / n**2

    total, blocks, used, last, _ = _sum_blocks(partition, term, tail_tol, max_blocks, member_order)
    return FunctionalReport(total, 0.0, psi.id, getattr(sample, "model_id", ""), n=n, h=hval,
                            seed=getattr(sample, "seed", None), method="estimator",
                            extra={"blocks": blocks, "members": used, "tail": last})


@_linear_in("psi")
def condmean_estimator_pair(sample, psi: TestFunction, partition: PartitionOfUnity,
                            tail_tol: float = DEFAULT_TAIL_TOL, **kwargs) -> FunctionalReport:
    """``(m_hat, psi)`` for the conditional mean, ``g(y) = y``."""
    return condmoment_estimator_pair(sample, psi, partition, None, tail_tol, **kwargs)
