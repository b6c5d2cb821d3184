"""Gaussian limit processes: F-Brownian bridges and the functionals they drive.

Everything with one conditioning variable is computed in copula
coordinates ``a = F_x(x)`` on the uniform grid ``a_i = i / (G - 1)``.  In
these coordinates ``U_x`` is a standard Brownian bridge ``B`` and the
joint bridge is ``U(a, y)``, with ``U(a, +inf) = B(a)``.

Joint bridges are drawn exactly from independent Gaussian cell
increments: with ``Z_ik ~ N(0, p_ik)`` over the cells of the (a, y) grid,
``W`` = the 2-d cumulative sum and ``U = W - C * W_total`` has covariance
``C(s ^ t) - C(s) C(t)`` at the grid nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, NumericFailure, UnsupportedCombination
from .models import rng_for
from .pairing import DEFAULT_MAX_BLOCKS, DEFAULT_TAIL_TOL, _moment_fn, _sum_blocks
from .testspace import PartitionOfUnity, TestFunction, derivative

__all__ = [
    "BridgePath",
    "simulate_bridge",
    "bridge_draws",
    "JointBridgeGrid",
    "q_psi_conddist",
    "q_psi_condmean",
    "LimitDraws",
    "limit_law_sample",
    "refinement_pair",
]

DEFAULT_GRID = 256
_JITTER = 1e-12
# draws per batch when simulating many bridges at once
_BATCH = 256


@dataclass(frozen=True, eq=False)
class BridgePath:
    """Bridge values at grid points; ``levels`` holds ``F`` at the grid.

    ``values`` is ``(G,)`` for a single path or ``(R, G)`` / ``(R, G, K)``
    for a batch; joint bridges carry a second grid axis for ``y``.
    """

    grid: np.ndarray
    values: np.ndarray
    target_cdf_id: str
    seed: int | None
    levels: np.ndarray | None = None
    y_edges: np.ndarray | None = None

    def __mul__(self, c: float) -> "BridgePath":
        return BridgePath(self.grid, c * self.values, self.target_cdf_id, self.seed,
                          self.levels, self.y_edges)

    __rmul__ = __mul__

    def __add__(self, other: "BridgePath") -> "BridgePath":
        _check_same_grid(self, other)
        return BridgePath(self.grid, self.values + other.values, self.target_cdf_id, None,
                          self.levels, self.y_edges)


def _check_same_grid(u: BridgePath, v: BridgePath):
    if u.grid.shape != v.grid.shape or not np.allclose(u.grid, v.grid, rtol=0, atol=1e-14):
        raise InvalidArgument("bridges live on different grids")


def _cdf_of(model_or_cdf):
    return getattr(model_or_cdf, "cdf", model_or_cdf)


def _cholesky(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    try:
        return np.linalg.cholesky(cov + _JITTER * np.eye(cov.shape[0]))
    except np.linalg.LinAlgError:
        lam = float(np.linalg.eigvalsh(cov).min())
        raise NumericFailure(f"bridge covariance is not positive semidefinite "
                             f"(min eigenvalue {lam:.3g})", min_eigenvalue=lam) from None


def _bridge_setup(model_or_cdf, grid_size: int, grid):
    if grid is None:
        if int(grid_size) < 2:
            raise InvalidArgument("grid_size must be >= 2")
        ppf = getattr(model_or_cdf, "ppf", None)
        if ppf is None:
            raise InvalidArgument("a quantile grid needs a model with ppf; pass grid explicitly")
        a = np.linspace(0.0, 1.0, int(grid_size))
        grid = np.asarray(ppf(a), dtype=float)
    grid = np.sort(np.asarray(grid, dtype=float).ravel())
    if grid.size < 2:
        raise InvalidArgument("grid must have at least two points")
    levels = np.clip(np.asarray(_cdf_of(model_or_cdf)(grid), dtype=float).ravel(), 0.0, 1.0)
    return grid, levels


def _bridge_cov(levels: np.ndarray) -> np.ndarray:
    # F(z_i ^ z_j) = min(F_i, F_j) for a cdf on an ordered grid
    return np.minimum.outer(levels, levels) - np.outer(levels, levels)


def simulate_bridge(model_or_cdf, grid_size: int = DEFAULT_GRID, seed: int = 0, grid=None,
                    stream=()) -> BridgePath:
    """One exact F-Brownian bridge on the quantile grid of ``F`` (or on ``grid``).

    The covariance ``F(z_i ^ z_j) - F(z_i) F(z_j)`` restricted to points with
    ``0 < F < 1`` is Cholesky-factored; pinned points are exactly 0.
    """
    grid, levels = _bridge_setup(model_or_cdf, grid_size, grid)
    free = (levels > 0.0) & (levels < 1.0)
    values = np.zeros(grid.size)
    if np.any(free):
        L = _cholesky(_bridge_cov(levels[free]))
        values[free] = L @ rng_for(seed, *stream).standard_normal(int(free.sum()))
    return BridgePath(grid, values, getattr(model_or_cdf, "id", "cdf"), int(seed), levels)


def bridge_draws(model_or_cdf, reps: int, seed: int = 0, grid_size: int = DEFAULT_GRID,
                 grid=None, method: str = "cholesky") -> BridgePath:
    """``reps`` independent bridges on a shared grid, as one ``(reps, G)`` batch.

    ``method="increments"`` builds each path from independent normal
    increments with variances ``F_i - F_{i-1}``; it is exact as well and
    avoids the factorisation.
    """
    grid, levels = _bridge_setup(model_or_cdf, grid_size, grid)
    rng = rng_for(seed, 0xB1D)
    if method == "cholesky":
        free = (levels > 0.0) & (levels < 1.0)
        values = np.zeros((reps, grid.size))
        if np.any(free):
            L = _cholesky(_bridge_cov(levels[free]))
            values[:, free] = rng.standard_normal((reps, int(free.sum()))) @ L.T
    elif method == "increments":
        p = np.diff(np.concatenate([[0.0], levels, [1.0]]))
        if np.any(p < -_JITTER):
            raise NumericFailure("cdf levels are not monotone", min_eigenvalue=float(p.min()))
        z = rng.standard_normal((reps, p.size)) * np.sqrt(np.maximum(p, 0.0))
        w = np.cumsum(z, axis=1)
        values = w[:, :-1] - levels[None, :] * w[:, -1:]
        values[:, (levels <= 0.0) | (levels >= 1.0)] = 0.0
    else:
        raise InvalidArgument(f"unknown method {method!r}")
    return BridgePath(grid, values, getattr(model_or_cdf, "id", "cdf"), int(seed), levels)


# ---------------------------------------------------------------------------
# joint bridges in copula coordinates


class JointBridgeGrid:
    """Copula grid ``a_i`` x y-cells for a joint model with ``d_x = 1``.

    ``y_edges`` are the finite cell boundaries; the last cell extends to
    ``+inf``, so column ``K`` of every joint array is the ``y = +inf`` limit
    and equals the ``x`` bridge.
    """

    def __init__(self, model, y_edges, grid_size: int = DEFAULT_GRID):
        if getattr(model, "d_x", None) != 1:
            raise UnsupportedCombination("limit processes are implemented for d_x = 1")
        if not getattr(model, "continuous_marginal_x", False):
            raise InvalidArgument("limit processes need a continuous x marginal")
        if int(grid_size) < 3:
            raise InvalidArgument("grid_size must be >= 3")
        self.model = model
        self.a = np.linspace(0.0, 1.0, int(grid_size))
        self.y_edges = np.sort(np.atleast_1d(np.asarray(y_edges, dtype=float)))
        G, K = self.a.size, self.y_edges.size
        aa = np.repeat(self.a, K)
        yy = np.tile(self.y_edges, G)
        C = np.asarray(model.copula_cdf(aa, yy), dtype=float).reshape(G, K)
        self.C = np.hstack([C, self.a[:, None]])          # (G, K + 1); last column y = +inf
        self.C[0, :] = 0.0
        # cells[i, k] = P(a_{i} < A <= a_{i+1}, y_{k-1} < Y <= y_k)
        cells = np.diff(np.diff(np.pad(self.C, ((0, 0), (1, 0))), axis=1), axis=0)
        if np.min(cells) < -1e-10:
            raise NumericFailure("copula cell probabilities are negative",
                                 min_eigenvalue=float(np.min(cells)))
        self.p = np.maximum(cells, 0.0)                   # (G - 1, K + 1)
        self.id = getattr(model, "id", "model")

    @property
    def grid_size(self) -> int:
        return self.a.size

    def draw(self, reps: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """``(B, U)`` with shapes ``(reps, G)`` and ``(reps, G, K + 1)``."""
        z = rng.standard_normal((reps,) + self.p.shape) * np.sqrt(self.p)[None]
        return self.from_increments(z)

    def from_increments(self, z: np.ndarray):
        W = np.zeros((z.shape[0], self.a.size, z.shape[2]))
        W[:, 1:, :] = np.cumsum(np.cumsum(z, axis=1), axis=2)
        total = W[:, -1, -1]
        U = W - self.C[None] * total[:, None, None]
        U[:, 0, :] = 0.0
        U[:, -1, -1] = 0.0
        return U[:, :, -1].copy(), U

    def paths(self, reps: int, seed: int) -> tuple[BridgePath, BridgePath]:
        B, U = self.draw(reps, rng_for(seed, 0x10F))
        ux = BridgePath(self.a, B, f"{self.id}:x", seed, self.a)
        uxy = BridgePath(self.a, U, f"{self.id}:xy", seed, self.a, self.y_edges)
        return ux, uxy


def _trapezoid_weights(a: np.ndarray) -> np.ndarray:
    w = np.zeros(a.size)
    d = np.diff(a)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def _three_terms(B, Uy, Cy, a, psi: TestFunction):
    """``int C psi'' B da + int C psi' dB + int psi' U da`` along the last axis of ``Cy``.

    ``B``: (R, G); ``Uy``: (R, G, M); ``Cy``: (G, M).  Returns (R, M).  The
    ``dB`` integral is taken by summation by parts,
    ``sum_i g_i (B_i - B_{i-1}) -> -sum_i B_i (g_{i+1} - g_{i-1}) / 2``,
    which is exact for the trapezoidal pairing because ``B`` is pinned at both ends.
    """
    d1 = derivative(psi, 1)(a)
    d2 = derivative(psi, 2)(a)
    w = _trapezoid_weights(a)
    t1 = np.einsum("rg,gm->rm", B, (Cy * (d2 * w)[:, None]))
    gfun = Cy * d1[:, None]                          # (G, M)
    dg = np.zeros_like(gfun)
    dg[1:-1] = 0.5 * (gfun[2:] - gfun[:-2])
    t2 = -np.einsum("rg,gm->rm", B, dg)
    t3 = np.einsum("rgm,g->rm", Uy, d1 * w)
    return t1 + t2 + t3


def _unpack(U_x: BridgePath, U_xy: BridgePath):
    _check_same_grid(U_x, U_xy)
    B = np.atleast_2d(U_x.values)
    U = U_xy.values
    if U.ndim == 1:
        U = U[None, :, None]
    elif U.ndim == 2:
        U = U[:, :, None] if B.shape[0] == U.shape[0] and U.shape[1] == B.shape[1] else U[None]
    if U.shape[:2] != B.shape:
        raise InvalidArgument("bridge batches have incompatible shapes")
    return B, U


def q_psi_conddist(U_x: BridgePath, U_xy: BridgePath, model, psi: TestFunction,
                   y: float) -> np.ndarray:
    """``(Q_{y|x}, psi) = -[int C psi'' U_x da + int C psi' dU_x + int psi' U_xy da]``.

    ``U_xy`` holds the joint bridge at ``y`` (a single column) or on a grid of
    ``y_edges`` that contains ``y``.  Returns one value per path.
    """
    B, U = _unpack(U_x, U_xy)
    a = np.asarray(U_x.grid, dtype=float)
    if U.shape[2] == 1:
        Uy = U
    else:
        edges = U_xy.y_edges
        if edges is None or not np.any(np.isclose(edges, y, rtol=0, atol=1e-14)):
            raise InvalidArgument(f"y={y} is not a node of the joint bridge grid")
        Uy = U[:, :, [int(np.flatnonzero(np.isclose(edges, y, rtol=0, atol=1e-14))[0])]]
    Cy = np.asarray(model.copula_cdf(a, np.full(a.size, float(y))), dtype=float)[:, None]
    Cy[0] = 0.0
    out = -_three_terms(B, Uy, Cy, a, psi)[:, 0]
    return out if np.ndim(U_x.values) > 1 else out[:1]


def _cell_points(edges: np.ndarray) -> np.ndarray:
    """Representative ``y`` per cell: midpoints, with the outer edges for the two tails."""
    mids = 0.5 * (edges[1:] + edges[:-1])
    return np.concatenate([[edges[0]], mids, [edges[-1]]])


def q_psi_condmean(U_x: BridgePath, U_xy: BridgePath, model, psi: TestFunction,
                   partition: PartitionOfUnity, tail_tol: float = DEFAULT_TAIL_TOL,
                   g=None, max_blocks: int = DEFAULT_MAX_BLOCKS, C: np.ndarray | None = None):
    """``(Q_m, psi) = sum_v int T(y) (g psi_v)'(y) dy`` with ``T`` the three bridge integrals.

    In ``y`` the integral is taken against the cell increments of ``T``:
    ``int T (g psi_v)' dy = -int g psi_v dT ~ -sum_k g(r_k) psi_v(r_k) dT_k``.
    Per-member terms are summed block by block with the usual tail rule.
    Returns ``(values, info)``.
    """
    B, U = _unpack(U_x, U_xy)
    edges = U_xy.y_edges
    if edges is None or U.shape[2] != edges.size + 1:
        raise InvalidArgument("the joint bridge must carry its y-cell edges")
    a = np.asarray(U_x.grid, dtype=float)
    if C is None:
        G, K = a.size, edges.size
        C = np.asarray(model.copula_cdf(np.repeat(a, K), np.tile(edges, G)), dtype=float)
        C = np.hstack([C.reshape(G, K), a[:, None]])
        C[0] = 0.0
    dC = np.diff(np.pad(C, ((0, 0), (1, 0))), axis=1)          # (G, K + 1)
    dU = np.diff(np.pad(U, ((0, 0), (0, 0), (1, 0))), axis=2)  # (R, G, K + 1)
    dT = _three_terms(B, dU, dC, a, psi)                      # (R, K + 1)
    gf, _ = _moment_fn(g)
    r = _cell_points(edges)
    gr = gf(r)

    def term(v):
        return -dT @ (gr * partition.member(v)(r))

    acc = {"values": np.zeros(dT.shape[0])}

    def scalar_term(v):
        t = term(v)
        acc["values"] += t
        return float(np.max(np.abs(t))) if t.size else 0.0

    # the stopping rule looks at the largest per-path block contribution
    _, blocks, used, last, _ = _sum_blocks(partition, scalar_term, tail_tol, max_blocks)
    return acc["values"], {"blocks": blocks, "members": used, "tail": last}


# ---------------------------------------------------------------------------
# limit-law sampling


@dataclass
class LimitDraws:
    draws: np.ndarray          # (reps, len(psis))
    cov: np.ndarray
    which: str
    info: dict


def _y_range(model, tail: float = 1e-9) -> tuple[float, float]:
    pts = model.sample(4096, 0, (0x5EED,)).points[:, -1]
    lo, hi = float(pts.min()), float(pts.max())
    step = max(hi - lo, 1e-3)
    while float(model.y_cdf(lo)[0]) > tail:
        lo -= step
    while float(model.y_cdf(hi)[0]) < 1.0 - tail:
        hi += step
    return lo, hi


def condmean_y_edges(model, cells: int = 192, tail: float = 1e-9) -> np.ndarray:
    lo, hi = _y_range(model, tail)
    return np.linspace(lo, hi, int(cells) + 1)


def limit_law_sample(model, psis, which: str, reps: int, seed: int, y: float | None = None,
                     partition: PartitionOfUnity | None = None, grid_size: int = DEFAULT_GRID,
                     y_edges=None, g=None, tail_tol: float = DEFAULT_TAIL_TOL) -> LimitDraws:
    """Seeded draws of ``((Q, psi_1), ..., (Q, psi_m))`` and their sample covariance.

    ``which`` is ``"conddist"`` (needs ``y``) or ``"condmean"`` (needs a
    partition of unity on the ``y`` axis).
    """
    psis = list(psis)
    if which == "conddist":
        if y is None:
            raise InvalidArgument("conditional-distribution limit needs y")
        jg = JointBridgeGrid(model, [y], grid_size)
    elif which == "condmean":
        if partition is None:
            raise InvalidArgument("conditional-mean limit needs a partition of unity")
        edges = condmean_y_edges(model) if y_edges is None else np.asarray(y_edges, dtype=float)
        jg = JointBridgeGrid(model, edges, grid_size)
    else:
        raise InvalidArgument(f"unknown limit law {which!r}")
    out = np.empty((int(reps), len(psis)))
    info = {"blocks": 0, "members": 0, "tail": 0.0}
    for b, start in enumerate(range(0, int(reps), _BATCH)):
        m = min(_BATCH, int(reps) - start)
        Bm, Um = jg.draw(m, rng_for(seed, 0x11A, b))
        ux = BridgePath(jg.a, Bm, f"{jg.id}:x", seed, jg.a)
        uxy = BridgePath(jg.a, Um, f"{jg.id}:xy", seed, jg.a, jg.y_edges)
        for j, psi in enumerate(psis):
            if which == "conddist":
                out[start:start + m, j] = q_psi_conddist(ux, uxy, model, psi, y)
            else:
                vals, inf = q_psi_condmean(ux, uxy, model, psi, partition, tail_tol, g, C=jg.C)
                out[start:start + m, j] = vals
                info = {"blocks": max(info["blocks"], inf["blocks"]),
                        "members": max(info["members"], inf["members"]),
                        "tail": max(info["tail"], inf["tail"])}
    cov = np.atleast_2d(np.cov(out, rowvar=False))
    return LimitDraws(out, cov, which, info)


def refinement_pair(model, psi: TestFunction, which: str, reps: int, seed: int,
                    grid_size: int = DEFAULT_GRID, y: float | None = None,
                    partition: PartitionOfUnity | None = None, y_edges=None):
    """Q values on a grid and on its dyadic refinement, driven by the same white noise.

    The fine grid has ``2 (G - 1) + 1`` nodes; summing pairs of fine cell
    increments gives the coarse increments, so both bridges are one process.
    """
    if which == "conddist":
        edges = [y]
    else:
        edges = condmean_y_edges(model) if y_edges is None else y_edges
    coarse = JointBridgeGrid(model, edges, grid_size)
    fine = JointBridgeGrid(model, edges, 2 * (grid_size - 1) + 1)
    z = rng_for(seed, 0x2EF).standard_normal((reps,) + fine.p.shape) * np.sqrt(fine.p)[None]
    zc = z[:, 0::2, :] + z[:, 1::2, :]
    res = []
    for jg, inc in ((coarse, zc), (fine, z)):
        B, U = jg.from_increments(inc)
        ux = BridgePath(jg.a, B, jg.id, seed, jg.a)
        uxy = BridgePath(jg.a, U, jg.id, seed, jg.a, jg.y_edges)
        if which == "conddist":
            res.append(q_psi_conddist(ux, uxy, model, psi, y))
        else:
            res.append(q_psi_condmean(ux, uxy, model, psi, partition, C=jg.C)[0])
    return res[0], res[1]
