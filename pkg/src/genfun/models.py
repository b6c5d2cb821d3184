"""Ground-truth distributions: exact cdfs, seeded samplers, quadrature rules
for their measures, and (for joint models) conditional structure.

Samplers draw from a Philox stream keyed by ``(seed, *stream)``, so a
sample is a pure function of ``(n, seed, stream)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize, stats

from .errors import AssumptionViolation, InvalidArgument
from .quadrature import (DEFAULT_SPEC, QuadratureSpec, cantor_leaves, composite_nodes,
                         gauss_legendre, tensor_rule)
from .testspace import as_points

__all__ = [
    "Sample",
    "DistributionModel",
    "RegressionModel",
    "ProductModel",
    "rng_for",
    "uniform_model",
    "beta_model",
    "normal_model",
    "atom_mixture_model",
    "cantor_model",
    "regression_model",
    "independent_product_model",
    "sample_to_csv",
    "sample_from_csv",
]

# tail mass ignored when an unbounded density is integrated on a finite box
_TAIL = 1e-15
# ternary digits drawn per Cantor variate; 3**-34 is below double resolution
_CANTOR_DIGITS = 34
_CDF_DEPTH = 52


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for the stream ``hash(seed, *stream)``."""
    seq = np.random.SeedSequence([int(seed), *[int(s) for s in stream]])
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True, eq=False)
class Sample:
    points: np.ndarray
    seed: int
    model_id: str

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[0] < 1:
            raise InvalidArgument("a sample needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise InvalidArgument("sample points must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def sample_to_csv(sample: Sample, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j + 1}" for j in range(sample.dim)])
        for row in sample.points:
            writer.writerow([repr(float(v)) for v in row])


def sample_from_csv(path, seed: int = 0, model_id: str = "csv") -> Sample:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise InvalidArgument(f"{path}: no data rows")
    return Sample(np.array(rows[1:], dtype=float), seed=seed, model_id=model_id)


# ---------------------------------------------------------------------------


class DistributionModel:
    """Base class.  Subclasses implement ``cdf``, ``_draw`` and ``measure_rule``."""

    dim: int = 1
    kind: str = "absolutely-continuous"
    id: str = "model"
    has_density: bool = False
    continuous: bool = True  # cdf continuous (no atoms)
    support_lo: np.ndarray
    support_hi: np.ndarray

    def cdf(self, x):
        raise NotImplementedError

    def density(self, x):
        raise AssumptionViolation(f"model {self.id} has no density")

    def ppf(self, p):
        raise NotImplementedError(f"model {self.id} has no quantile function")

    def cdf_breakpoints(self):
        """Per-axis points where the cdf jumps or is not smooth (``None`` if smooth)."""
        return None

    def marginal_cdf(self, j: int, t):
        if self.dim == 1 and j == 0:
            return self.cdf(t)
        raise NotImplementedError

    def _draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def sample(self, n: int, seed: int, stream=()) -> Sample:
        if int(n) < 1:
            raise InvalidArgument("n must be >= 1")
        pts = self._draw(rng_for(seed, *stream), int(n))
        return Sample(pts.reshape(int(n), -1), seed=int(seed), model_id=self.id)

    def measure_rule(self, spec: QuadratureSpec = DEFAULT_SPEC, breakpoints=None):
        """Quadrature rule ``(points (N, dim), weights (N,))`` for ``dF``."""
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self.id}>"


class _BoxDensityModel(DistributionModel):
    """Absolutely continuous model on a (possibly truncated) box."""

    has_density = True

    def measure_rule(self, spec=DEFAULT_SPEC, breakpoints=None):
        axes = []
        for j in range(self.dim):
            bp = None if breakpoints is None else breakpoints[j]
            axes.append(composite_nodes(self.support_lo[j], self.support_hi[j],
                                        spec.panels_per_axis, spec.panel_order, bp))
        pts, wts = tensor_rule(axes)
        return pts, wts * self.density(pts)


class UniformModel(_BoxDensityModel):
    def __init__(self, k: int = 1):
        self.dim = int(k)
        self.id = f"uniform{self.dim}"
        self.support_lo = np.zeros(self.dim)
        self.support_hi = np.ones(self.dim)

    def cdf(self, x):
        pts, shape = as_points(x, self.dim)
        vals = np.prod(np.clip(pts, 0.0, 1.0), axis=1)
        return float(vals[0]) if shape == () else vals.reshape(shape)

    def marginal_cdf(self, j, t):
        return np.clip(np.asarray(t, dtype=float), 0.0, 1.0)

    def density(self, x):
        pts, shape = as_points(x, self.dim)
        vals = np.all((pts >= 0) & (pts <= 1), axis=1).astype(float)
        return float(vals[0]) if shape == () else vals.reshape(shape)

    def ppf(self, p):
        return np.clip(np.asarray(p, dtype=float), 0.0, 1.0)

    def _draw(self, rng, n):
        return rng.random((n, self.dim))


class ScipyModel(_BoxDensityModel):
    """Univariate model backed by a frozen ``scipy.stats`` continuous distribution."""

    def __init__(self, dist, ident: str):
        self.dist = dist
        self.id = ident
        self.dim = 1
        lo, hi = dist.support()
        lo = dist.ppf(_TAIL) if not np.isfinite(lo) else lo
        hi = dist.ppf(1 - _TAIL) if not np.isfinite(hi) else hi
        self.support_lo = np.array([float(lo)])
        self.support_hi = np.array([float(hi)])

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return self.dist.cdf(x[..., 0] if x.ndim == 2 else x)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return self.dist.pdf(x[..., 0] if x.ndim == 2 else x)

    def ppf(self, p):
        return self.dist.ppf(p)

    def _draw(self, rng, n):
        return np.asarray(self.dist.rvs(size=n, random_state=rng), dtype=float)


class AtomMixtureModel(DistributionModel):
    kind = "atomic-mixture"
    continuous = False

    def __init__(self, atoms, weights, continuous_part: DistributionModel, mix: float):
        self.atoms = np.atleast_1d(np.asarray(atoms, dtype=float))
        self.weights = np.atleast_1d(np.asarray(weights, dtype=float))
        if continuous_part.dim != 1:
            raise InvalidArgument("atom mixtures are univariate")
        if self.atoms.shape != self.weights.shape or self.atoms.size == 0:
            raise InvalidArgument("atoms and weights must be nonempty and of equal length")
        if np.any(self.weights <= 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise InvalidArgument("atom weights must be positive and sum to 1")
        if not 0.0 <= mix <= 1.0:
            raise InvalidArgument("mix must lie in [0, 1]")
        self.cont = continuous_part
        self.mix = float(mix)
        self.dim = 1
        self.continuous = self.mix == 0.0
        atoms_id = ",".join(f"{a:g}:{w:g}" for a, w in zip(self.atoms, self.weights))
        self.id = f"atoms[{atoms_id}]x{self.mix:g}+{continuous_part.id}"
        self.support_lo = np.minimum(continuous_part.support_lo, self.atoms.min())
        self.support_hi = np.maximum(continuous_part.support_hi, self.atoms.max())

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        x1 = x[..., 0] if x.ndim == 2 else x
        jumps = (x1[..., None] >= self.atoms).astype(float) @ self.weights
        return self.mix * jumps + (1.0 - self.mix) * self.cont.cdf(x1)

    def cdf_breakpoints(self):
        return [self.atoms.copy()]

    def _draw(self, rng, n):
        which = rng.random(n) < self.mix
        pick = rng.choice(self.atoms.size, size=n, p=self.weights)
        cont = self.cont._draw(rng, n).reshape(n)
        return np.where(which, self.atoms[pick], cont)

    def measure_rule(self, spec=DEFAULT_SPEC, breakpoints=None):
        cp, cw = self.cont.measure_rule(spec, breakpoints)
        pts = np.concatenate([self.atoms[:, None], cp])
        wts = np.concatenate([self.mix * self.weights, (1.0 - self.mix) * cw])
        return pts, wts


class CantorModel(DistributionModel):
    """Uniform measure on the middle-thirds Cantor set."""

    kind = "cantor"
    dimension = np.log(2.0) / np.log(3.0)

    def __init__(self):
        self.dim = 1
        self.id = "cantor"
        self.support_lo = np.zeros(1)
        self.support_hi = np.ones(1)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        x1 = x[..., 0] if x.ndim == 2 else x
        r = np.clip(x1, 0.0, 1.0).astype(float).copy()
        out = np.zeros_like(r)
        active = (r > 0) & (r < 1)
        scale = 0.5
        for _ in range(_CDF_DEPTH):
            r = r * 3.0
            d = np.floor(r)
            r -= d
            out += np.where(active & (d >= 1), scale, 0.0)
            active &= d != 1
            scale *= 0.5
        out = np.where(x1 >= 1.0, 1.0, out)
        return out if out.ndim else float(out)

    def ppf(self, p):
        """Left-continuous inverse: binary digits of ``p`` become ternary digits 0/2."""
        p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
        q = p * 2.0**_CANTOR_DIGITS
        k = np.floor(q)
        dyadic = (k == q) & (p > 0)
        k = np.where(dyadic, k - 1, k).astype(np.uint64)
        x = _ternary_from_bits(k, _CANTOR_DIGITS)
        x = x + np.where(dyadic, 3.0**-_CANTOR_DIGITS, 0.0)
        return np.where(p >= 1.0, 1.0, x)

    def cdf_breakpoints(self, depth: int = 10):
        """Endpoints of the level-``depth`` Cantor intervals; the cdf is flat between them."""
        left = cantor_leaves(depth) - 0.5 * 3.0**-depth
        return [np.concatenate([left, left + 3.0**-depth])]

    def _draw(self, rng, n):
        bits = rng.integers(0, 2**_CANTOR_DIGITS, size=n, dtype=np.uint64)
        return _ternary_from_bits(bits, _CANTOR_DIGITS)

    def measure_rule(self, spec=DEFAULT_SPEC, breakpoints=None):
        depth = spec.cantor_depth
        leaves = cantor_leaves(depth)
        return leaves[:, None], np.full(leaves.size, 2.0**-depth)


def _ternary_from_bits(bits: np.ndarray, digits: int) -> np.ndarray:
    """``sum_j 2 b_j 3^-j`` where ``b_1`` is the most significant of ``digits`` bits."""
    bits = np.asarray(bits, dtype=np.uint64)
    x = np.zeros(bits.shape)
    for j in range(digits):  # least significant first (Horner)
        b = ((bits >> np.uint64(j)) & np.uint64(1)).astype(float)
        x = (x + 2.0 * b) / 3.0
    return x


# ---------------------------------------------------------------------------
# joint models with conditional structure


class _JointModel(DistributionModel):
    """Model on ``R^{d_x} x R^{d_y}`` with the conditioning block first."""

    x_model: DistributionModel
    d_x: int
    d_y: int = 1

    @property
    def continuous_marginal_x(self) -> bool:
        return bool(self.x_model.continuous)

    def split(self, pts: np.ndarray):
        return pts[:, : self.d_x], pts[:, self.d_x:]

    def joint_cdf(self, x, y):
        raise NotImplementedError

    def cdf(self, z):
        pts, shape = as_points(z, self.dim)
        x, y = self.split(pts)
        vals = self.joint_cdf(x, y)
        return float(vals[0]) if shape == () else vals.reshape(shape)

    def x_cdf(self, x):
        """Joint cdf of the conditioning block."""
        pts, shape = as_points(x, self.d_x)
        return np.asarray(self.x_model.cdf(pts if self.d_x > 1 else pts[:, 0])).reshape(-1) \
            if shape != () else float(self.x_model.cdf(pts if self.d_x > 1 else pts[0, 0]))

    def copula_cdf(self, a, y):
        """``C(a, y) = F_xy(F_x^{-1}(a), y)`` for ``d_x == 1``."""
        if self.d_x != 1:
            raise NotImplementedError("copula coordinates are implemented for d_x = 1")
        a = np.asarray(a, dtype=float).reshape(-1)
        x = np.asarray(self.x_model.ppf(a), dtype=float).reshape(-1, 1)
        y = np.broadcast_to(np.asarray(y, dtype=float).reshape(-1, 1), (x.shape[0], 1))
        out = self.joint_cdf(x, y)
        out = np.where(a <= 0.0, 0.0, out)
        return np.where(a >= 1.0, self.y_cdf(y[:, 0]), out)

    def copula_kinks(self, y: float) -> np.ndarray:
        """Copula coordinates where ``C(., y)`` may fail to be smooth."""
        return np.empty(0)


class ProductModel(_JointModel):
    """Independent ``x`` and ``y``; conditional law of ``y`` given ``x`` is ``F_y``."""

    kind = "product"

    def __init__(self, x_model: DistributionModel, y_model: DistributionModel):
        self.x_model = x_model
        self.y_model = y_model
        self.d_x = x_model.dim
        self.d_y = y_model.dim
        self.dim = self.d_x + self.d_y
        self.id = f"product({x_model.id},{y_model.id})"
        self.has_density = x_model.has_density and y_model.has_density
        self.continuous = x_model.continuous and y_model.continuous
        self.support_lo = np.concatenate([x_model.support_lo, y_model.support_lo])
        self.support_hi = np.concatenate([x_model.support_hi, y_model.support_hi])

    def joint_cdf(self, x, y):
        x = np.asarray(x, dtype=float).reshape(-1, self.d_x)
        y = np.asarray(y, dtype=float).reshape(-1, self.d_y)
        fx = np.asarray(self.x_model.cdf(x if self.d_x > 1 else x[:, 0]), dtype=float)
        fy = np.asarray(self.y_model.cdf(y if self.d_y > 1 else y[:, 0]), dtype=float)
        return fx * fy

    def y_cdf(self, y):
        return self.y_model.cdf(y)

    def copula_cdf(self, a, y):
        a = np.clip(np.asarray(a, dtype=float).reshape(-1), 0.0, 1.0)
        fy = np.asarray(self.y_model.cdf(np.asarray(y, dtype=float).reshape(-1)), dtype=float)
        return a * fy

    def cond_cdf(self, x, y):
        """Pointwise ``F_{y|x}(x, y)``; independent of ``x``."""
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.y_model.cdf(y), np.broadcast(x.reshape(-1), y.reshape(-1)).shape)

    def density(self, z):
        pts, shape = as_points(z, self.dim)
        x, y = self.split(pts)
        vals = (np.asarray(self.x_model.density(x if self.d_x > 1 else x[:, 0]))
                * np.asarray(self.y_model.density(y[:, 0])))
        return float(vals[0]) if shape == () else vals.reshape(shape)

    def marginal_cdf(self, j, t):
        if j < self.d_x:
            return self.x_model.marginal_cdf(j, t)
        return self.y_model.marginal_cdf(j - self.d_x, t)

    def _draw(self, rng, n):
        x = self.x_model._draw(rng, n).reshape(n, -1)
        y = self.y_model._draw(rng, n).reshape(n, -1)
        return np.hstack([x, y])

    def measure_rule(self, spec=DEFAULT_SPEC, breakpoints=None):
        bx = by = None
        if breakpoints is not None:
            bx, by = breakpoints[: self.d_x], breakpoints[self.d_x:]
        small = QuadratureSpec(spec.panel_order, spec.panels_per_axis, spec.target_tol,
                               spec.max_dim, min(spec.cantor_depth, 12))
        xp, xw = self.x_model.measure_rule(small, bx)
        yp, yw = self.y_model.measure_rule(small, by)
        i, j = np.meshgrid(np.arange(xw.size), np.arange(yw.size), indexing="ij")
        pts = np.hstack([xp[i.ravel()], yp[j.ravel()]])
        return pts, xw[i.ravel()] * yw[j.ravel()]


class RegressionModel(_JointModel):
    """``y = m(x) + sigma * eps`` with standard normal ``eps`` independent of ``x``."""

    kind = "regression"

    def __init__(self, x_model: DistributionModel, mean_fn: Callable, noise_sd: float,
                 mean_id: str = "m"):
        if noise_sd < 0:
            raise InvalidArgument(f"noise_sd must be >= 0, got {noise_sd}")
        if not x_model.continuous:
            raise AssumptionViolation("regression models need a continuous x marginal")
        self.x_model = x_model
        self.mean_fn = mean_fn
        self.noise_sd = float(noise_sd)
        self.d_x = x_model.dim
        self.d_y = 1
        self.dim = self.d_x + 1
        self.id = f"regression({x_model.id},{mean_id},sd={self.noise_sd:g})"
        self.has_density = x_model.has_density and self.noise_sd > 0
        self.support_lo = np.concatenate([x_model.support_lo, [-np.inf]])
        self.support_hi = np.concatenate([x_model.support_hi, [np.inf]])

    def mean(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.asarray(self.mean_fn(x[:, 0] if x.ndim == 2 and self.d_x == 1 else x), dtype=float)

    def second_moment(self, x) -> np.ndarray:
        """``E[y^2 | x] = m(x)^2 + sigma^2``."""
        return self.mean(x) ** 2 + self.noise_sd**2

    def cond_cdf(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        m = self.mean(x.reshape(-1, self.d_x)).reshape(np.shape(y) if np.ndim(y) else -1)
        if self.noise_sd == 0:
            return (m <= y).astype(float)
        return stats.norm.cdf((y - m) / self.noise_sd)

    def y_cdf(self, y):
        y = np.asarray(y, dtype=float).reshape(-1)
        big = np.full((y.size, self.d_x), np.inf)
        return self.joint_cdf(big, y)

    def _draw(self, rng, n):
        x = self.x_model._draw(rng, n).reshape(n, self.d_x)
        eps = rng.standard_normal(n)
        y = self.mean(x) + self.noise_sd * eps
        return np.hstack([x, y[:, None]])

    def joint_cdf(self, x, y):
        """``F_xy(x, y) = int 1[t <= x] P(y' <= y | t) dF_x(t)``."""
        x = np.asarray(x, dtype=float).reshape(-1, self.d_x)
        y = np.asarray(y, dtype=float).reshape(-1)
        x, y = np.broadcast_arrays(x, y[:, None])
        y = y[:, 0]
        if self.noise_sd == 0:
            return self._joint_cdf_degenerate(x, y)
        if self.x_model.has_density:
            return self._joint_cdf_density(x, y)
        return self._joint_cdf_rule(x, y)

    def _joint_cdf_density(self, x, y, order: int = 24, panels: int = 2):
        lo = self.x_model.support_lo
        hi = self.x_model.support_hi
        top = np.clip(x, lo, hi)
        gx, gw = gauss_legendre(order)
        # composite rule on [lo, top] per point and axis
        u = (np.arange(panels)[:, None] + 0.5 * (gx[None, :] + 1.0)).ravel() / panels
        w = np.tile(gw, panels) / (2.0 * panels)
        out = np.empty(x.shape[0])
        chunk = max(1, 200_000 // (u.size ** self.d_x))
        for s in range(0, x.shape[0], chunk):
            xs, ys = top[s:s + chunk], y[s:s + chunk]
            span = xs - lo
            axes_t = [lo[j] + span[:, j, None] * u[None, :] for j in range(self.d_x)]
            axes_w = [span[:, j, None] * w[None, :] for j in range(self.d_x)]
            if self.d_x == 1:
                t = axes_t[0][..., None]
                wt = axes_w[0]
            else:
                t = np.stack(np.broadcast_arrays(axes_t[0][:, :, None], axes_t[1][:, None, :]), -1)
                t = t.reshape(t.shape[0], -1, 2)
                wt = (axes_w[0][:, :, None] * axes_w[1][:, None, :]).reshape(t.shape[0], -1)
            flat = t.reshape(-1, self.d_x)
            dens = np.asarray(self.x_model.density(flat if self.d_x > 1 else flat[:, 0]))
            m = self.mean(flat)
            p = stats.norm.cdf((np.repeat(ys, t.shape[1]) - m) / self.noise_sd)
            out[s:s + chunk] = np.sum((dens * p).reshape(wt.shape) * wt, axis=1)
        return out

    def _joint_cdf_rule(self, x, y):
        tp, tw = self.x_model.measure_rule(QuadratureSpec(cantor_depth=16))
        m = self.mean(tp)
        out = np.empty(x.shape[0])
        for i in range(x.shape[0]):
            below = np.all(tp <= x[i], axis=1)
            out[i] = np.dot(tw[below], stats.norm.cdf((y[i] - m[below]) / self.noise_sd))
        return out

    def _joint_cdf_degenerate(self, x, y):
        if self.d_x != 1:
            raise NotImplementedError("noise-free joint cdf needs d_x = 1")
        lo, hi = float(self.x_model.support_lo[0]), float(self.x_model.support_hi[0])
        grid = np.linspace(lo, hi, 1025)
        mgrid = self.mean(grid[:, None])
        out = np.empty(x.shape[0])
        cache: dict[float, list] = {}
        for i in range(x.shape[0]):
            yi = float(y[i])
            if yi not in cache:
                cache[yi] = self._sublevel_intervals(grid, mgrid, yi)
            xi = float(x[i, 0])
            total = 0.0
            for a, b in cache[yi]:
                if xi > a:
                    total += float(self.x_model.cdf(min(xi, b))) - float(self.x_model.cdf(a))
            out[i] = total
        return out

    def copula_kinks(self, y):
        if self.noise_sd > 0 or self.d_x != 1:
            return np.empty(0)
        lo, hi = float(self.x_model.support_lo[0]), float(self.x_model.support_hi[0])
        grid = np.linspace(lo, hi, 1025)
        edges = np.array(self._sublevel_intervals(grid, self.mean(grid[:, None]), float(y))).ravel()
        return np.unique(np.asarray(self.x_model.cdf(edges), dtype=float))

    def _sublevel_intervals(self, grid, mgrid, y):
        """Intervals of the x-support where ``m(t) <= y``."""
        below = mgrid <= y
        change = np.flatnonzero(below[1:] != below[:-1])
        roots = []
        for k in change:
            f = lambda t: float(self.mean(np.array([[t]]))[0]) - y  # noqa: E731
            roots.append(optimize.brentq(f, grid[k], grid[k + 1], xtol=1e-15))
        edges = [grid[0], *roots, grid[-1]]
        intervals = []
        state = bool(below[0])
        for a, b in zip(edges[:-1], edges[1:]):
            if state:
                intervals.append((a, b))
            state = not state
        if not intervals and np.all(below):
            intervals = [(grid[0], grid[-1])]
        return intervals

    def measure_rule(self, spec=DEFAULT_SPEC, breakpoints=None):
        bx = None if breakpoints is None else breakpoints[: self.d_x]
        xp, xw = self.x_model.measure_rule(spec, bx)
        m = self.mean(xp)
        if self.noise_sd == 0:
            return np.hstack([xp, m[:, None]]), xw
        z, wz = np.polynomial.hermite_e.hermegauss(40)
        wz = wz / np.sqrt(2 * np.pi)
        i, j = np.meshgrid(np.arange(xw.size), np.arange(z.size), indexing="ij")
        y = m[i.ravel()] + self.noise_sd * z[j.ravel()]
        return np.hstack([xp[i.ravel()], y[:, None]]), xw[i.ravel()] * wz[j.ravel()]


# ---------------------------------------------------------------------------
# constructors


def uniform_model(k: int = 1) -> DistributionModel:
    return UniformModel(k)


def beta_model(a: float = 2.0, b: float = 2.0) -> DistributionModel:
    return ScipyModel(stats.beta(a, b), f"beta({a:g},{b:g})")


def normal_model(mu: float = 0.0, sd: float = 1.0) -> DistributionModel:
    return ScipyModel(stats.norm(mu, sd), f"normal({mu:g},{sd:g})")


def atom_mixture_model(atoms, weights, continuous_part: DistributionModel,
                       mix: float) -> DistributionModel:
    """``mix * sum_a w_a 1[x >= a] + (1 - mix) * F_cont``."""
    return AtomMixtureModel(atoms, weights, continuous_part, mix)


def cantor_model() -> DistributionModel:
    return CantorModel()


def regression_model(x_model: DistributionModel, mean_fn: Callable, noise_sd: float,
                     mean_id: str = "m") -> RegressionModel:
    return RegressionModel(x_model, mean_fn, noise_sd, mean_id)


def independent_product_model(x_model: DistributionModel,
                              y_model: DistributionModel) -> ProductModel:
    return ProductModel(x_model, y_model)
