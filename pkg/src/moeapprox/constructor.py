"""Three-stage construction of a soft-max gated MoE approximating a target.

Stage 1 freezes the target at cell representatives (piecewise constant in x),
stage 2 replaces cell indicators by sharp soft-max gates, and stage 3 replaces
each frozen slice by a finite location-scale mixture. The hierarchical model
is then flattened into a single soft-max level.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .density import (
    Box,
    FiniteMixture,
    LocationScaleExpert,
    TargetDensity,
    expert_log_matrix,
    get_kernel,
)
from .errors import DegenerateWeightsError, InvalidArgumentError
from .gating import (
    SoftmaxGating,
    conditioned_scale,
    sharp_gates,
    softmax_to_gaussian,
)
from .partition import FinePartition, build_partition

# slice values are floored here so every mixture weight stays strictly positive
WEIGHT_FLOOR = 1e-300


def _grid_points(v, dim):
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(-1, 1) if dim == 1 else arr.reshape(1, -1)
    return arr


# ---------------------------------------------------------------------------
# Stage objects
# ---------------------------------------------------------------------------


class PiecewiseConditional:
    """``upsilon(y | x) = f(y | rep(cell(x)))``."""

    def __init__(self, target: TargetDensity, partition: FinePartition):
        self.target = target
        self.partition = partition

    @property
    def representatives(self):
        return self.partition.representatives

    def slice_matrix(self, ys) -> np.ndarray:
        """``f(y_j | x_k)`` for every representative ``k``: shape ``(n**d, len(ys))``."""
        return self.target.density_grid(self.representatives, _grid_points(ys, self.target.q))

    def slice(self, k: int) -> Callable[[np.ndarray], np.ndarray]:
        rep = self.representatives[k : k + 1]
        target = self.target
        return lambda ys: target.density_grid(rep, _grid_points(ys, target.q))[0]

    def evaluate(self, xs, ys, workers=1) -> np.ndarray:
        xs = _grid_points(xs, self.partition.d)
        cells = np.atleast_1d(self.partition.cell_of(xs))
        return self.slice_matrix(ys)[cells]

    def __call__(self, x, y):
        return float(self.evaluate(x, y)[0, 0])


class GatedBlend:
    """``eta(y | x) = sum_k Gate_k(x) f(y | x_k)``."""

    def __init__(self, gating: SoftmaxGating, upsilon: PiecewiseConditional):
        if gating.K != upsilon.partition.num_cells:
            raise InvalidArgumentError(
                f"gating has {gating.K} gates but the partition has {upsilon.partition.num_cells} cells"
            )
        if gating.d != upsilon.partition.d:
            raise InvalidArgumentError("gating and partition disagree on input dimension")
        self.gating = gating
        self.upsilon = upsilon

    def evaluate(self, xs, ys, workers=1) -> np.ndarray:
        xs = _grid_points(xs, self.gating.d)
        G = self.gating(xs, workers)
        return kernels.contract(G, self.upsilon.slice_matrix(ys).T, workers)

    def __call__(self, x, y):
        return float(self.evaluate(x, y)[0, 0])


class HierarchicalMoE:
    """Gates over cells, one finite mixture per cell."""

    def __init__(self, gating, mixtures):
        mixtures = tuple(mixtures)
        if gating.K != len(mixtures):
            raise InvalidArgumentError(f"{gating.K} gates but {len(mixtures)} mixtures")
        q = mixtures[0].q
        if any(h.q != q for h in mixtures):
            raise InvalidArgumentError("mixtures disagree on output dimension")
        self.gating = gating
        self.mixtures = mixtures

    @property
    def q(self) -> int:
        return self.mixtures[0].q

    @property
    def K(self) -> int:
        return sum(len(h) for h in self.mixtures)

    def evaluate(self, xs, ys, workers=1) -> np.ndarray:
        xs = _grid_points(xs, self.gating.d)
        ys = _grid_points(ys, self.q)
        G = self.gating(xs, workers)
        H = np.stack([h.density(ys) for h in self.mixtures], axis=1)
        return kernels.contract(G, H, workers)

    def __call__(self, x, y):
        return float(self.evaluate(x, y)[0, 0])

    def mass_box(self) -> Box:
        boxes = [h.mass_box() for h in self.mixtures]
        return Box(np.min([b.lower for b in boxes], axis=0), np.max([b.upper for b in boxes], axis=0))


class FlatMoE:
    """Single-level MoE: one gate per expert."""

    def __init__(self, gating, experts):
        experts = tuple(experts)
        if gating.K != len(experts):
            raise InvalidArgumentError(f"{gating.K} gates but {len(experts)} experts")
        self.gating = gating
        self.experts = experts
        self._mus = np.stack([e.mu for e in experts])
        self._sigmas = np.array([e.sigma for e in experts])

    @property
    def q(self) -> int:
        return self.experts[0].q

    @property
    def K(self) -> int:
        return len(self.experts)

    def expert_matrix(self, ys) -> np.ndarray:
        return np.exp(expert_log_matrix(self.experts, _grid_points(ys, self.q)))

    def evaluate(self, xs, ys, workers=1) -> np.ndarray:
        xs = _grid_points(xs, self.gating.d)
        G = self.gating(xs, workers)
        return kernels.contract(G, self.expert_matrix(ys), workers)

    def __call__(self, x, y):
        return float(self.evaluate(x, y)[0, 0])

    def mass_box(self) -> Box:
        reach = np.array([e.kernel.mass_radius * e.sigma for e in self.experts])
        return Box((self._mus - reach[:, None]).min(axis=0), (self._mus + reach[:, None]).max(axis=0))


MoEModel = HierarchicalMoE | FlatMoE


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def build_upsilon(f: TargetDensity, p: FinePartition) -> PiecewiseConditional:
    if f.d != p.d or f.x_domain != Box.unit(p.d):
        raise InvalidArgumentError("the target's input domain must be the unit cube of the partition's dimension")
    return PiecewiseConditional(f, p)


def build_eta(u: PiecewiseConditional, gating: SoftmaxGating) -> GatedBlend:
    return GatedBlend(gating, u)


def sharp_gates_nd(n: int, d: int, l: float) -> SoftmaxGating:
    """Tensor-product sharp gates on ``[0, 1]**d`` with ``n**d`` gates.

    The score of a cell is the sum of the 1-D sharp scores of its coordinates,
    so each gate equals the product of the per-axis 1-D gates. Gate order is
    the partition's flat (C-order) cell order.
    """
    if d == 1:
        return sharp_gates(n, l)
    base = sharp_gates(n, l)
    a = np.zeros(n**d)
    b = np.zeros((n**d, d))
    for flat, multi in enumerate(itertools.product(range(n), repeat=d)):
        for axis, k in enumerate(multi):
            a[flat] += base.a[k]
            b[flat, axis] = base.b[k, 0]
    return SoftmaxGating(a, b)


def approximate_slice(slice_fn, y_domain: Box, kernel, m: int, rho: float) -> FiniteMixture:
    """Finite mixture approximating one conditional slice on ``y_domain``.

    Means sit on the ``m**q`` cell midpoints of a uniform grid over the box, all
    experts share ``sigma = rho * spacing`` (largest spacing if the box is not
    a cube), and weights are the slice values at the means, normalized to sum
    to one.
    """
    kernel = get_kernel(kernel)
    if int(m) != m or m < 2:
        raise InvalidArgumentError(f"m must be an integer >= 2, got {m!r}")
    if not (rho > 0 and math.isfinite(rho)):
        raise InvalidArgumentError("rho must be positive")
    m = int(m)
    means = y_domain.midpoints(m)
    spacing = float(np.max((y_domain.upper - y_domain.lower) / m))
    raw = np.asarray(slice_fn(means), dtype=np.float64).reshape(-1)
    if raw.shape[0] != means.shape[0] or not np.all(np.isfinite(raw)) or np.any(raw < 0):
        raise InvalidArgumentError("slice must return finite nonnegative values at the grid means")
    if not np.any(raw > 0):
        raise DegenerateWeightsError("slice vanishes at every grid mean")
    w = np.maximum(raw, WEIGHT_FLOOR)
    w = w / w.sum()
    sigma = rho * spacing
    experts = tuple(LocationScaleExpert(kernel, mu, sigma) for mu in means)
    return FiniteMixture(w, experts)


def assemble_moe(gating, mixtures) -> HierarchicalMoE:
    return HierarchicalMoE(gating, mixtures)


def flatten_moe(h: HierarchicalMoE) -> FlatMoE:
    """Absorb mixture weights into gate intercepts: ``a'_(k,i) = a_k + log c_i^k``."""
    if not isinstance(h, HierarchicalMoE):
        raise InvalidArgumentError("flatten_moe needs a hierarchical model")
    if not isinstance(h.gating, SoftmaxGating):
        raise InvalidArgumentError("only soft-max gated models can be flattened")
    a, b, experts = [], [], []
    for k, mix in enumerate(h.mixtures):
        if np.any(mix.weights <= 0.0):
            raise InvalidArgumentError(f"cell {k} has a zero mixture weight")
        a.append(h.gating.a[k] + np.log(mix.weights))
        b.append(np.repeat(h.gating.b[k : k + 1], len(mix), axis=0))
        experts.extend(mix.experts)
    return FlatMoE(SoftmaxGating(np.concatenate(a), np.concatenate(b)), experts)


def to_gaussian_gated(m: FlatMoE, scale: float | None = None) -> FlatMoE:
    """Same model with Gaussian gates; ``scale=None`` picks a well-conditioned covariance scale."""
    if not isinstance(m, FlatMoE) or not isinstance(m.gating, SoftmaxGating):
        raise InvalidArgumentError("to_gaussian_gated needs a flat soft-max gated model")
    s = conditioned_scale(m.gating) if scale is None else scale
    return FlatMoE(softmax_to_gaussian(m.gating, s), m.experts)


@dataclass(frozen=True)
class Schedule:
    """One refinement rung. ``l`` and ``m`` default to ``250 n`` and ``16 n``."""

    n: int
    l: float | None = None
    m: int | None = None
    rho: float = 3.0
    kernel: str = "gaussian"

    def resolved(self) -> "Schedule":
        l = 250.0 * self.n if self.l is None else float(self.l)
        m = 16 * self.n if self.m is None else int(self.m)
        if self.n < 1 or l < 0 or m < 2 or not self.rho > 0:
            raise InvalidArgumentError(f"invalid schedule {self}")
        get_kernel(self.kernel)
        return Schedule(int(self.n), l, m, float(self.rho), self.kernel)


@dataclass
class Construction:
    schedule: Schedule
    partition: FinePartition
    gating: SoftmaxGating
    upsilon: PiecewiseConditional
    eta: GatedBlend
    hierarchical: HierarchicalMoE
    flat: FlatMoE

    @property
    def K(self) -> int:
        return self.flat.K


def construct_approximant(f: TargetDensity, schedule: Schedule, workers: int = 1) -> Construction:
    s = schedule.resolved()
    part = build_partition(s.n, f.d)
    gating = sharp_gates_nd(s.n, f.d, s.l)
    ups = build_upsilon(f, part)
    eta = build_eta(ups, gating)
    kern = get_kernel(s.kernel)

    def one(k):
        return approximate_slice(ups.slice(k), f.y_domain, kern, s.m, s.rho)

    cells = range(part.num_cells)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            mixtures = list(pool.map(one, cells))
    else:
        mixtures = [one(k) for k in cells]
    hier = assemble_moe(gating, mixtures)
    return Construction(s, part, gating, ups, eta, hier, flatten_moe(hier))


__all__ = [
    "Construction",
    "FlatMoE",
    "GatedBlend",
    "HierarchicalMoE",
    "MoEModel",
    "PiecewiseConditional",
    "Schedule",
    "approximate_slice",
    "assemble_moe",
    "build_eta",
    "build_upsilon",
    "construct_approximant",
    "flatten_moe",
    "sharp_gates_nd",
    "to_gaussian_gated",
]
