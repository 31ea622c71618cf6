"""Midpoint-rule quadrature, error norms and convergence reports.

All integrals use tensor-product midpoint grids with uniform weights. Sums are
taken with numpy's pairwise reduction over a contiguous flattened array, so
they depend only on the sampled values and never on how those values were
computed in parallel.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .density import Box, TargetDensity
from .errors import DivergenceError, InvalidArgumentError, NumericError, PreconditionError
from .gating import sharp_gates
from .partition import build_partition

SCHEMA_VERSION = "moeapprox.report/1"


def default_points_per_axis(total_dim: int) -> int:
    """512 per axis for 1-D or 2-D products (d = q = 1); 64 beyond that."""
    return 512 if total_dim <= 2 else 64


@dataclass(frozen=True)
class QuadratureGrid:
    box: Box
    points_per_axis: int

    def __post_init__(self):
        if int(self.points_per_axis) != self.points_per_axis or self.points_per_axis < 1:
            raise InvalidArgumentError("points_per_axis must be a positive integer")

    @property
    def dim(self) -> int:
        return self.box.dim

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def weight(self) -> float:
        return self.box.volume / self.size

    @property
    def spacing(self) -> np.ndarray:
        return (self.box.upper - self.box.lower) / self.points_per_axis

    def nodes(self) -> np.ndarray:
        return self.box.midpoints(self.points_per_axis)

    def refined(self, factor: int = 2) -> "QuadratureGrid":
        return QuadratureGrid(self.box, self.points_per_axis * factor)


def _psum(a) -> float:
    return float(np.add.reduce(np.ascontiguousarray(a, dtype=np.float64).ravel()))


def _sample(g, grid: QuadratureGrid) -> np.ndarray:
    if callable(g):
        vals = np.asarray(g(grid.nodes()), dtype=np.float64)
    else:
        vals = np.asarray(g, dtype=np.float64)
    vals = vals.reshape(-1)
    if vals.shape[0] != grid.size:
        raise InvalidArgumentError(f"{vals.shape[0]} samples for a grid of {grid.size} nodes")
    _require_finite(vals, lambda i: grid.nodes()[i])
    return vals


def _require_finite(vals, locate):
    bad = ~np.isfinite(vals)
    if np.any(bad):
        i = int(np.flatnonzero(bad.ravel())[0])
        node = locate(i)
        node = np.asarray(node).tolist()
        raise NumericError(f"non-finite sample {vals.ravel()[i]!r} at node {node}", node=node)


def _lp(vals, weight, p) -> float:
    if p == math.inf:
        return float(np.max(np.abs(vals))) if vals.size else 0.0
    if p == 1:
        return weight * _psum(np.abs(vals))
    if p == 2:
        return math.sqrt(weight * _psum(vals * vals))
    return (weight * _psum(np.abs(vals) ** p)) ** (1.0 / p)


def _check_p(p):
    if p in ("inf", "sup"):
        return math.inf
    p = float(p)
    if not p >= 1.0:
        raise InvalidArgumentError(f"p must be >= 1, got {p}")
    return p


def lp_norm(g, grid: QuadratureGrid, p=2) -> float:
    """``(sum_nodes w |g|^p)^(1/p)``; ``g`` is a callable on nodes or an array of samples."""
    return _lp(_sample(g, grid), grid.weight, _check_p(p))


def sup_norm(g, grid: QuadratureGrid) -> float:
    return _lp(_sample(g, grid), grid.weight, math.inf)


def exceedance_measure(g, grid: QuadratureGrid, eps: float) -> float:
    """Quadrature measure of ``{|g| > eps}``."""
    if not eps > 0:
        raise InvalidArgumentError("eps must be positive")
    vals = _sample(g, grid)
    return grid.weight * int(np.count_nonzero(np.abs(vals) > eps))


# ---------------------------------------------------------------------------
# Product grids on Z = X x Y
# ---------------------------------------------------------------------------


@dataclass
class _ZSamples:
    xs: np.ndarray
    ys: np.ndarray
    weight: float

    def node(self, flat_index):
        i, j = divmod(int(flat_index), self.ys.shape[0])
        return np.concatenate([self.xs[i], self.ys[j]])


def _zsamples(x_grid: QuadratureGrid, y_grid: QuadratureGrid) -> _ZSamples:
    return _ZSamples(x_grid.nodes(), y_grid.nodes(), x_grid.weight * y_grid.weight)


def integrated_kl(f: TargetDensity, m, x_grid: QuadratureGrid, y_grid: QuadratureGrid, workers=1) -> float:
    """``int_X int_Y f log(f / m) dy dx`` with ``0 log(0/.) = 0``."""
    z = _zsamples(x_grid, y_grid)
    F = f.density_grid(z.xs, z.ys)
    M = m.evaluate(z.xs, z.ys, workers)
    return _kl_from(F, M, z)


def _kl_from(F, M, z) -> float:
    _require_finite(M, z.node)
    pos = F > 0
    bad = pos & ~(M > 0)
    if np.any(bad):
        node = z.node(np.flatnonzero(bad.ravel())[0]).tolist()
        raise DivergenceError(f"model vanishes where the target is positive, at node {node}", node=node)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(pos, F * (np.log(np.where(pos, F, 1.0)) - np.log(np.where(pos, M, 1.0))), 0.0)
    return z.weight * _psum(terms)


@dataclass(frozen=True)
class KLBound:
    kl: float
    l2_sq: float
    kappa_sq_l2: float
    tolerance: float
    bound_holds: bool


def kl_l2_bound_check(f: TargetDensity, m, kappa: float, x_grid, y_grid, tol=None, workers=1) -> KLBound:
    """Compare the integrated KL divergence with ``kappa**2 * ||f - m||_2**2``.

    Requires ``f >= 1/kappa`` at every node. With ``tol=None`` the tolerance is
    the change in both sides when the grids are refined by a factor two.
    """
    if not kappa > 0:
        raise InvalidArgumentError("kappa must be positive")

    def sides(xg, yg):
        z = _zsamples(xg, yg)
        F = f.density_grid(z.xs, z.ys)
        low = F < 1.0 / kappa
        if np.any(low):
            i = int(np.flatnonzero(low.ravel())[0])
            node = z.node(i).tolist()
            raise PreconditionError(
                f"target value {F.ravel()[i]!r} < 1/kappa = {1.0 / kappa!r} at node {node}", node=node
            )
        M = m.evaluate(z.xs, z.ys, workers)
        return _kl_from(F, M, z), z.weight * _psum((F - M) ** 2)

    kl, l2_sq = sides(x_grid, y_grid)
    if tol is None:
        kl2, l2_sq2 = sides(x_grid.refined(), y_grid.refined())
        tol = abs(kl2 - kl) + kappa**2 * abs(l2_sq2 - l2_sq)
    bound = kappa**2 * l2_sq
    return KLBound(kl, l2_sq, bound, float(tol), bool(kl <= bound + tol))


def indicator_gate_error(n: int, l: float, p=1, grid: QuadratureGrid | int | None = None, printed_centers=False):
    """``||1_{cell k} - Gate_k||_p`` over [0, 1] for the 1-D sharp gates.

    Returns the per-cell errors (0-based cell order) and their maximum.
    """
    if grid is None:
        grid = QuadratureGrid(Box.unit(1), 2**13)
    elif isinstance(grid, (int, np.integer)):
        grid = QuadratureGrid(Box.unit(1), int(grid))
    if grid.dim != 1 or grid.box != Box.unit(1):
        raise InvalidArgumentError("indicator errors are computed on [0, 1]")
    p = _check_p(p)
    xs = grid.nodes()
    G = sharp_gates(n, l, printed_centers)(xs).reshape(-1, n)
    ind = build_partition(n, 1).indicator_matrix(xs)
    D = ind - G
    errs = np.array([_lp(np.ascontiguousarray(D[:, k]), grid.weight, p) for k in range(n)])
    return errs, float(errs.max())


def conditional_mass(model, xs, box: Box | None = None, points_per_axis: int | None = None, workers=1) -> np.ndarray:
    """``int m(y | x) dy`` over ``box`` for each ``x``.

    The default box is the model's mass box, which covers every expert out to
    its kernel's mass radius, so the result measures normalization on R^q.
    The default resolution puts 16 nodes per smallest expert scale.
    """
    if box is None:
        box = model.mass_box()
    if points_per_axis is None:
        smin = min(e.sigma for e in _experts_of(model))
        points_per_axis = int(math.ceil(float(np.max(box.upper - box.lower)) * 16.0 / smin))
        cap = 2**15 if box.dim == 1 else (1024 if box.dim == 2 else 96)
        points_per_axis = min(points_per_axis, cap)
    grid = QuadratureGrid(box, points_per_axis)
    vals = model.evaluate(xs, grid.nodes(), workers)
    return np.array([grid.weight * _psum(row) for row in vals])


def _experts_of(model):
    if hasattr(model, "experts"):
        return model.experts
    return [e for h in model.mixtures for e in h.experts]


# ---------------------------------------------------------------------------
# Convergence reports
# ---------------------------------------------------------------------------


@dataclass
class RungResult:
    n: int
    l: float
    m: int
    K_n: int
    s1: float
    s2: float
    s3: float
    total: float
    sup: float
    exceedance: dict
    kl: float | None
    kappa_sq_l2: float | None
    bound_holds: bool | None
    quad_tol: float

    def triangle_holds(self) -> bool:
        return self.total <= self.s1 + self.s2 + self.s3 + 2.0 * self.quad_tol


@dataclass
class ConvergenceReport:
    target: str
    target_params: dict
    kernel: str
    p: float
    eps: list
    kappa: float | None
    x_points: int
    y_points: int
    entries: list = field(default_factory=list)
    schema_version: str = SCHEMA_VERSION

    def columns(self) -> list[str]:
        return (
            ["n", "l", "m", "K_n", "s1", "s2", "s3", "total", "sup"]
            + [f"exceedance@{e!r}" for e in self.eps]
            + ["kl", "kappa_sq_l2", "bound_holds", "quad_tol"]
        )

    def rows(self) -> list[list]:
        out = []
        for r in self.entries:
            out.append(
                [r.n, r.l, r.m, r.K_n, r.s1, r.s2, r.s3, r.total, r.sup]
                + [r.exceedance[e] for e in self.eps]
                + [r.kl, r.kappa_sq_l2, r.bound_holds, r.quad_tol]
            )
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema={self.schema_version}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns())
        for row in self.rows():
            w.writerow([_csv_cell(v) for v in row])
        return buf.getvalue()

    def to_dict(self) -> dict:
        d = {
            "schema_version": self.schema_version,
            "target": self.target,
            "target_params": self.target_params,
            "kernel": self.kernel,
            "p": "inf" if self.p == math.inf else self.p,
            "eps": list(self.eps),
            "kappa": self.kappa,
            "x_points": self.x_points,
            "y_points": self.y_points,
            "columns": self.columns(),
            "entries": [],
        }
        for r in self.entries:
            e = asdict(r)
            e["exceedance"] = {repr(k): v for k, v in r.exceedance.items()}
            d["entries"].append(e)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def evaluate_rung(f: TargetDensity, c, p=2, x_points=None, y_points=None, eps=(0.05,), kappa=None,
                  check_doubling=True, workers=1) -> RungResult:
    """Stage errors and diagnostics for one constructed model ``c``."""
    p = _check_p(p)
    x_points = x_points or default_points_per_axis(f.d + f.q)
    y_points = y_points or default_points_per_axis(f.d + f.q)
    xg = QuadratureGrid(f.x_domain, x_points)
    yg = QuadratureGrid(f.y_domain, y_points)

    def fields(xg, yg):
        z = _zsamples(xg, yg)
        F = f.density_grid(z.xs, z.ys)
        U = c.upsilon.evaluate(z.xs, z.ys)
        E = c.eta.evaluate(z.xs, z.ys, workers)
        M = c.flat.evaluate(z.xs, z.ys, workers)
        for arr in (U, E, M):
            _require_finite(arr, z.node)
        return z, F, U, E, M

    z, F, U, E, M = fields(xg, yg)
    w = z.weight
    D = F - M
    total = _lp(D, w, p)
    quad_tol = 0.0
    if check_doubling:
        z2, F2, _, _, M2 = fields(xg.refined(), yg.refined())
        quad_tol = abs(_lp(F2 - M2, z2.weight, p) - total)
    kl = bound = holds = None
    kern = c.flat.experts[0].kernel
    if kern.full_support:
        kl = _kl_from(F, M, z)
        if kappa is not None:
            low = F < 1.0 / kappa
            if np.any(low):
                node = z.node(np.flatnonzero(low.ravel())[0]).tolist()
                raise PreconditionError(f"target below 1/kappa at node {node}", node=node)
            bound = kappa**2 * w * _psum(D * D)
            holds = bool(kl <= bound + 2.0 * quad_tol)
    s = c.schedule
    return RungResult(
        n=s.n,
        l=s.l,
        m=s.m,
        K_n=c.K,
        s1=_lp(F - U, w, p),
        s2=_lp(U - E, w, p),
        s3=_lp(E - M, w, p),
        total=total,
        sup=_lp(D, w, math.inf),
        exceedance={e: w * int(np.count_nonzero(np.abs(D) > e)) for e in eps},
        kl=kl,
        kappa_sq_l2=bound,
        bound_holds=holds,
        quad_tol=quad_tol,
    )


def run_convergence(f: TargetDensity, ladder, p=2, x_points=None, y_points=None, eps=(0.05,), kappa=None,
                    check_doubling=True, workers=1, on_rung=None) -> ConvergenceReport:
    """Construct and evaluate a model for every schedule in ``ladder``, in order."""
    from .constructor import Schedule, construct_approximant

    ladder = [s if isinstance(s, Schedule) else Schedule(**s) for s in ladder]
    if not ladder:
        raise InvalidArgumentError("ladder is empty")
    kernels_used = {s.kernel for s in ladder}
    if len(kernels_used) != 1:
        raise InvalidArgumentError("all rungs must use the same kernel")
    for prev, nxt in zip(ladder, ladder[1:]):
        if nxt.n < prev.n:
            raise InvalidArgumentError("ladder must be nondecreasing in n")
    pv = _check_p(p)
    report = ConvergenceReport(
        target=f.name,
        target_params=dict(f.params),
        kernel=ladder[0].kernel,
        p=pv,
        eps=[float(e) for e in eps],
        kappa=kappa,
        x_points=x_points or default_points_per_axis(f.d + f.q),
        y_points=y_points or default_points_per_axis(f.d + f.q),
    )
    for sched in ladder:
        c = construct_approximant(f, sched, workers)
        r = evaluate_rung(f, c, pv, report.x_points, report.y_points, report.eps, kappa, check_doubling, workers)
        report.entries.append(r)
        if on_rung is not None:
            on_rung(c, r)
    return report
