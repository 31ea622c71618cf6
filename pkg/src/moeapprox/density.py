"""Target conditional densities, location-scale experts and finite mixtures.

Everything is evaluated in log space and exponentiated once at the end. Arrays
of points carry the coordinate on the last axis, so ``y`` of shape ``(N, q)``
returns ``N`` densities.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp, ndtr

from .errors import DegenerateWeightsError, DomainError, InvalidArgumentError

_LOG_2PI = math.log(2.0 * math.pi)


def _as_points(y, dim, what="point"):
    """Coerce ``y`` to shape ``(N, dim)``; returns the array and whether it was a single point."""
    arr = np.asarray(y, dtype=np.float64)
    single = arr.ndim <= 1
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1) if arr.shape[0] == dim else arr.reshape(-1, 1)
        single = arr.shape[0] == 1
    if arr.shape[-1] != dim:
        raise InvalidArgumentError(f"{what} has dimension {arr.shape[-1]}, expected {dim}")
    return arr, single


# ---------------------------------------------------------------------------
# Box
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``prod_i [lower_i, upper_i]``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=np.float64)).copy()
        hi = np.atleast_1d(np.asarray(self.upper, dtype=np.float64)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise InvalidArgumentError("box bounds must be vectors of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InvalidArgumentError("box bounds must be finite")
        if np.any(lo >= hi):
            raise InvalidArgumentError("box requires lower < upper on every axis")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, dim: int) -> "Box":
        return cls(np.zeros(dim), np.ones(dim))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def contains(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=-1)

    def axis_midpoints(self, points_per_axis: int) -> list[np.ndarray]:
        h = (self.upper - self.lower) / points_per_axis
        base = np.arange(points_per_axis) + 0.5
        return [self.lower[i] + h[i] * base for i in range(self.dim)]

    def midpoints(self, points_per_axis: int) -> np.ndarray:
        """Tensor-product midpoint nodes, shape ``(points_per_axis**dim, dim)``, C order."""
        axes = self.axis_midpoints(points_per_axis)
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    def __eq__(self, other):
        if not isinstance(other, Box):
            return NotImplemented
        return np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)

    def __hash__(self):
        return hash((self.lower.tobytes(), self.upper.tobytes()))


# ---------------------------------------------------------------------------
# Kernel families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelFamily:
    """A continuous PDF on R^q given by its log density.

    ``log_density`` maps ``u`` of shape ``(..., q)`` to ``(...)``. ``mass_radius``
    is a radius (in standardized units, per axis) outside which the kernel
    carries negligible mass; it sizes the boxes used for normalization checks.
    """

    name: str
    log_density: Callable[[np.ndarray], np.ndarray]
    mass_radius: float
    full_support: bool = True

    def density(self, u) -> np.ndarray:
        return np.exp(self.log_density(np.asarray(u, dtype=np.float64)))


def _gaussian_log(u):
    q = u.shape[-1]
    return -0.5 * np.sum(u * u, axis=-1) - 0.5 * q * _LOG_2PI


def _laplace_log(u):
    q = u.shape[-1]
    return -np.sum(np.abs(u), axis=-1) - q * math.log(2.0)


_BUMP_LOGC = math.log(35.0 / 32.0)


def _bump_log(u):
    # triweight profile 35/32 (1 - u^2)^3 per axis, zero outside [-1, 1]
    inside = np.all(np.abs(u) < 1.0, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.sum(_BUMP_LOGC + 3.0 * np.log1p(-np.minimum(u * u, 1.0)), axis=-1)
    return np.where(inside, val, -np.inf)


GAUSSIAN = KernelFamily("gaussian", _gaussian_log, mass_radius=12.0)
LAPLACE = KernelFamily("laplace", _laplace_log, mass_radius=45.0)
BUMP = KernelFamily("bump", _bump_log, mass_radius=1.0, full_support=False)

KERNELS = {k.name: k for k in (GAUSSIAN, LAPLACE, BUMP)}


def get_kernel(name) -> KernelFamily:
    if isinstance(name, KernelFamily):
        return name
    try:
        return KERNELS[name]
    except KeyError:
        raise InvalidArgumentError(f"unknown kernel {name!r}; choose from {sorted(KERNELS)}") from None


# ---------------------------------------------------------------------------
# Experts and mixtures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LocationScaleExpert:
    kernel: KernelFamily
    mu: np.ndarray
    sigma: float

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64)).copy()
        if mu.ndim != 1 or not np.all(np.isfinite(mu)):
            raise InvalidArgumentError("expert location must be a finite vector")
        sigma = float(self.sigma)
        if not (sigma > 0.0 and math.isfinite(sigma)):
            raise InvalidArgumentError(f"expert scale must be positive and finite, got {self.sigma!r}")
        mu.flags.writeable = False
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "kernel", get_kernel(self.kernel))

    @property
    def q(self) -> int:
        return self.mu.shape[0]

    def log_density(self, y) -> np.ndarray:
        pts, single = _as_points(y, self.q)
        u = (pts - self.mu) / self.sigma
        out = self.kernel.log_density(u) - self.q * math.log(self.sigma)
        return out[0] if single else out

    def density(self, y):
        return np.exp(self.log_density(y))


def expert_density(e: LocationScaleExpert, y):
    """``sigma**-q * psi((y - mu) / sigma)``."""
    return e.density(y)


def expert_log_matrix(experts: Sequence[LocationScaleExpert], y: np.ndarray) -> np.ndarray:
    """Log densities of every expert at every point: shape ``(N, len(experts))``."""
    q = experts[0].q
    pts, _ = _as_points(y, q)
    out = np.empty((pts.shape[0], len(experts)))
    groups: dict[str, list[int]] = {}
    for j, e in enumerate(experts):
        if e.q != q:
            raise InvalidArgumentError("experts disagree on output dimension")
        groups.setdefault(e.kernel.name, []).append(j)
    for idx in groups.values():
        kern = experts[idx[0]].kernel
        mu = np.stack([experts[j].mu for j in idx])
        sig = np.array([experts[j].sigma for j in idx])
        u = (pts[:, None, :] - mu[None, :, :]) / sig[None, :, None]
        out[:, idx] = kern.log_density(u) - q * np.log(sig)[None, :]
    return out


@dataclass(frozen=True)
class FiniteMixture:
    """Convex combination of location-scale experts with strictly positive weights."""

    weights: np.ndarray
    experts: tuple

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64)).copy()
        experts = tuple(self.experts)
        if len(experts) == 0:
            raise InvalidArgumentError("a mixture needs at least one expert")
        if w.shape != (len(experts),):
            raise InvalidArgumentError("one weight per expert is required")
        if not np.all(np.isfinite(w)) or np.any(w <= 0.0):
            raise DegenerateWeightsError("mixture weights must be strictly positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError(f"mixture weights sum to {w.sum()!r}, not 1")
        q = experts[0].q
        if any(e.q != q for e in experts):
            raise InvalidArgumentError("experts disagree on output dimension")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "experts", experts)

    @property
    def q(self) -> int:
        return self.experts[0].q

    def __len__(self):
        return len(self.experts)

    def component_matrix(self, y) -> np.ndarray:
        """Expert densities at ``y``, shape ``(N, m)``."""
        return np.exp(expert_log_matrix(self.experts, y))

    def log_density(self, y):
        pts, single = _as_points(y, self.q)
        lm = expert_log_matrix(self.experts, pts) + np.log(self.weights)[None, :]
        out = logsumexp(lm, axis=1)
        return out[0] if single else out

    def density(self, y):
        return np.exp(self.log_density(y))

    def mass_box(self) -> Box:
        """A box holding all but a negligible fraction of the mixture's mass."""
        mus = np.stack([e.mu for e in self.experts])
        reach = np.array([e.kernel.mass_radius * e.sigma for e in self.experts])
        return Box((mus - reach[:, None]).min(axis=0), (mus + reach[:, None]).max(axis=0))


def mixture_density(h: FiniteMixture, y):
    if not isinstance(h, FiniteMixture) or len(h.experts) == 0:
        raise InvalidArgumentError("mixture_density needs a non-empty FiniteMixture")
    return h.density(y)


# ---------------------------------------------------------------------------
# Targets
# ---------------------------------------------------------------------------


def _default_norm_points(q):
    from .analysis import default_points_per_axis

    return default_points_per_axis(q)


@dataclass(eq=False)
class TargetDensity:
    """A conditional density ``f(y | x)`` on ``x_domain x y_domain``.

    ``log_raw(x, y)`` is an unnormalized log density broadcasting over leading
    axes. The per-``x`` normalizer is obtained by midpoint quadrature over
    ``y_domain`` and cached.
    """

    name: str
    x_domain: Box
    y_domain: Box
    log_raw: Callable[[np.ndarray, np.ndarray], np.ndarray]
    params: dict = field(default_factory=dict)
    norm_points: int | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        if self.norm_points is None:
            self.norm_points = _default_norm_points(self.q)
        self._norm_nodes = self.y_domain.midpoints(self.norm_points)
        self._norm_weight = self.y_domain.volume / self._norm_nodes.shape[0]

    @property
    def d(self) -> int:
        return self.x_domain.dim

    @property
    def q(self) -> int:
        return self.y_domain.dim

    def _check_x(self, xs):
        if not np.all(self.x_domain.contains(xs)):
            bad = xs[~self.x_domain.contains(xs)][0]
            raise DomainError(f"x={bad.tolist()} lies outside the input domain of {self.name!r}")

    def _check_y(self, ys):
        if not np.all(self.y_domain.contains(ys)):
            bad = ys[~self.y_domain.contains(ys)][0]
            raise DomainError(f"y={bad.tolist()} lies outside the output domain of {self.name!r}")

    def log_normalizer(self, xs) -> np.ndarray:
        """``log int_Y raw(x, y) dy`` for each row of ``xs``; computed once per distinct x."""
        xs, _ = _as_points(xs, self.d, "x")
        keys = [x.tobytes() for x in xs]
        missing = [i for i, k in enumerate(keys) if k not in self._cache]
        if missing:
            xm = xs[missing]
            lr = self.log_raw(xm[:, None, :], self._norm_nodes[None, :, :])
            vals = logsumexp(lr, axis=1) + math.log(self._norm_weight)
            # identical values are written by any racing thread, so the lock only guards the dict
            with self._lock:
                for i, v in zip(missing, vals):
                    self._cache[keys[i]] = float(v)
        return np.array([self._cache[k] for k in keys])

    def density_grid(self, xs, ys) -> np.ndarray:
        """``f(y_j | x_i)`` as an array of shape ``(len(xs), len(ys))``."""
        xs, _ = _as_points(xs, self.d, "x")
        ys, _ = _as_points(ys, self.q, "y")
        self._check_x(xs)
        self._check_y(ys)
        lz = self.log_normalizer(xs)
        lr = self.log_raw(xs[:, None, :], ys[None, :, :])
        return np.exp(lr - lz[:, None])

    def __call__(self, x, y):
        return target_eval(self, x, y)


def target_eval(f: TargetDensity, x, y) -> float:
    """``raw(x, y) / normalizer(x)`` at a single point."""
    xs, _ = _as_points(x, f.d, "x")
    ys, _ = _as_points(y, f.q, "y")
    if xs.shape[0] != 1 or ys.shape[0] != 1:
        raise InvalidArgumentError("target_eval takes a single (x, y); use density_grid for arrays")
    return float(f.density_grid(xs, ys)[0, 0])


def _trunc_log_mass(mean, scale, lo, hi):
    """log P(lo <= N(mean, scale^2) <= hi), elementwise."""
    a = (lo - mean) / scale
    b = (hi - mean) / scale
    return np.log(ndtr(b) - ndtr(a))


def _uniform(x_dim=1, y_dim=1, y_lower=0.0, y_upper=1.0):
    def log_raw(x, y):
        return np.zeros(np.broadcast_shapes(x.shape[:-1], y.shape[:-1]))

    return log_raw, Box(np.zeros(x_dim), np.ones(x_dim)), Box(np.full(y_dim, y_lower), np.full(y_dim, y_upper))


def _sine_mean(x_dim=1, y_dim=1, amplitude=0.8, scale=0.4, frequency=1.0, y_lower=-3.0, y_upper=3.0):
    if scale <= 0:
        raise InvalidArgumentError("scale must be positive")

    def log_raw(x, y):
        mean = amplitude * np.sin(2.0 * np.pi * frequency * np.mean(x, axis=-1))
        z = (y - mean[..., None]) / scale
        return -0.5 * np.sum(z * z, axis=-1)

    return log_raw, Box(np.zeros(x_dim), np.ones(x_dim)), Box(np.full(y_dim, y_lower), np.full(y_dim, y_upper))


def _bimodal(x_dim=1, y_dim=1, mean_a=-1.0, mean_b=1.0, scale=0.5, y_lower=-3.0, y_upper=3.0):
    if scale <= 0:
        raise InvalidArgumentError("scale must be positive")
    # each component is a truncated normal normalized on Y in closed form
    la = y_dim * (-0.5 * _LOG_2PI - math.log(scale)) - y_dim * float(_trunc_log_mass(mean_a, scale, y_lower, y_upper))
    lb = y_dim * (-0.5 * _LOG_2PI - math.log(scale)) - y_dim * float(_trunc_log_mass(mean_b, scale, y_lower, y_upper))

    def log_raw(x, y):
        lam = np.asarray(np.mean(x, axis=-1))[..., None]
        za = (y - mean_a) / scale
        zb = (y - mean_b) / scale
        with np.errstate(divide="ignore"):
            ca = np.log(lam)
            cb = np.log1p(-lam)
        ta = la - 0.5 * np.sum(za * za, axis=-1, keepdims=True) + ca
        tb = lb - 0.5 * np.sum(zb * zb, axis=-1, keepdims=True) + cb
        return np.logaddexp(ta, tb)[..., 0]

    return log_raw, Box(np.zeros(x_dim), np.ones(x_dim)), Box(np.full(y_dim, y_lower), np.full(y_dim, y_upper))


TARGETS = {"uniform": _uniform, "sine_mean": _sine_mean, "bimodal": _bimodal}


def make_target(name: str, params: dict | None = None, norm_points: int | None = None) -> TargetDensity:
    """Build a registered target by name.

    Registered names: ``uniform``, ``sine_mean`` (truncated normal whose mean is
    ``amplitude * sin(2 pi frequency * mean(x))``) and ``bimodal`` (weights ``x``
    and ``1 - x`` on two truncated normals).
    """
    params = dict(params or {})
    try:
        factory = TARGETS[name]
    except KeyError:
        raise InvalidArgumentError(f"unknown target {name!r}; choose from {sorted(TARGETS)}") from None
    try:
        log_raw, xdom, ydom = factory(**params)
    except TypeError as exc:
        raise InvalidArgumentError(f"bad parameters for target {name!r}: {exc}") from None
    return TargetDensity(name, xdom, ydom, log_raw, params=params, norm_points=norm_points)
