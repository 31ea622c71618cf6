"""Soft-max and Gaussian gating vectors, and the maps between them.

Gate values are always produced from log-scores through a max-subtracted
soft-max, which keeps very sharp gates (large slopes) finite.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import logsumexp

from . import kernels
from .errors import InvalidArgumentError

_LOG_2PI = math.log(2.0 * math.pi)


def _points(x, d):
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim <= 1
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1) if arr.shape[0] == d else arr.reshape(-1, 1)
        single = arr.shape[0] == 1
    if arr.shape[-1] != d:
        raise InvalidArgumentError(f"x has dimension {arr.shape[-1]}, gating expects {d}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("x must be finite")
    return arr, single


def _finish(scores, single, workers=1):
    g = kernels.softmax_rows(scores, workers)
    return g[0] if single else g


def _check_spd(S, what="covariance"):
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InvalidArgumentError(f"{what} must be a square matrix")
    if not np.all(np.isfinite(S)):
        raise InvalidArgumentError(f"{what} must be finite")
    if np.max(np.abs(S - S.T)) > 1e-12 * max(1.0, np.max(np.abs(S))):
        raise InvalidArgumentError(f"{what} is not symmetric")
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise InvalidArgumentError(f"{what} is not positive definite") from None
    return S, L


def _check_log_pi(log_pi):
    log_pi = np.atleast_1d(np.asarray(log_pi, dtype=np.float64))
    if log_pi.ndim != 1 or log_pi.size == 0:
        raise InvalidArgumentError("mixing weights must be a non-empty vector")
    if np.any(np.isnan(log_pi)) or np.any(log_pi == np.inf) or np.any(log_pi == -np.inf):
        raise InvalidArgumentError("mixing weights must be strictly positive")
    # log weights of magnitude M are only resolved to about M * eps
    slack = 1e-12 + 8.0 * np.finfo(float).eps * float(np.max(np.abs(log_pi)))
    if abs(math.expm1(logsumexp(log_pi))) > slack:
        raise InvalidArgumentError("mixing weights must sum to 1")
    return log_pi


def _log_pi_from(pi, log_pi):
    if (pi is None) == (log_pi is None):
        raise InvalidArgumentError("give exactly one of pi or log_pi")
    if log_pi is None:
        pi = np.atleast_1d(np.asarray(pi, dtype=np.float64))
        if np.any(~np.isfinite(pi)) or np.any(pi <= 0.0):
            raise InvalidArgumentError("mixing weights must be strictly positive")
        if abs(pi.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError(f"mixing weights sum to {pi.sum()!r}, not 1")
        log_pi = np.log(pi)
    return _check_log_pi(log_pi)


class SoftmaxGating:
    """``Gate_k(x) = exp(a_k + b_k.x) / sum_l exp(a_l + b_l.x)``.

    Parameters
    ----------
    a : array_like, shape (K,)
    b : array_like, shape (K, d)
    """

    def __init__(self, a, b):
        a = np.atleast_1d(np.asarray(a, dtype=np.float64)).copy()
        b = np.asarray(b, dtype=np.float64).copy()
        if a.ndim != 1 or a.size == 0:
            raise InvalidArgumentError("a must be a non-empty vector")
        if b.ndim == 1:
            b = b.reshape(-1, 1)
        if b.ndim != 2 or b.shape[0] != a.shape[0]:
            raise InvalidArgumentError("b must have shape (K, d) matching a")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise InvalidArgumentError("gating parameters must be finite")
        a.flags.writeable = False
        b.flags.writeable = False
        self.a = a
        self.b = b

    @property
    def K(self) -> int:
        return self.a.shape[0]

    @property
    def d(self) -> int:
        return self.b.shape[1]

    def log_scores(self, x) -> np.ndarray:
        pts, _ = _points(x, self.d)
        return self.a[None, :] + pts @ self.b.T

    def __call__(self, x, workers=1):
        pts, single = _points(x, self.d)
        return _finish(self.a[None, :] + pts @ self.b.T, single, workers)

    def __repr__(self):
        return f"SoftmaxGating(K={self.K}, d={self.d})"


class GaussianGating:
    """``Gate_k(x) ∝ pi_k phi(x; nu_k, Sigma_k)``.

    Mixing weights are held as ``log_pi`` so that very unequal weights (which
    underflow as plain probabilities) stay strictly positive.
    """

    def __init__(self, pi=None, nu=None, Sigma=None, *, log_pi=None):
        self.log_pi = _log_pi_from(pi, log_pi)
        K = self.log_pi.shape[0]
        nu = np.asarray(nu, dtype=np.float64)
        if nu.ndim == 1:
            nu = nu.reshape(-1, 1)
        if nu.shape[0] != K or not np.all(np.isfinite(nu)):
            raise InvalidArgumentError("nu must be a finite (K, d) array")
        Sigma = np.asarray(Sigma, dtype=np.float64)
        if Sigma.ndim == 1:
            Sigma = Sigma.reshape(-1, 1, 1)
        if Sigma.shape != (K, nu.shape[1], nu.shape[1]):
            raise InvalidArgumentError("Sigma must have shape (K, d, d)")
        chol = np.empty_like(Sigma)
        for k in range(K):
            _, chol[k] = _check_spd(Sigma[k], f"Sigma[{k}]")
        self.nu = nu
        self.Sigma = Sigma
        self.chol = chol
        self.logdet = 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)

    @property
    def pi(self) -> np.ndarray:
        return np.exp(self.log_pi)

    @property
    def K(self) -> int:
        return self.log_pi.shape[0]

    @property
    def d(self) -> int:
        return self.nu.shape[1]

    def log_scores(self, x) -> np.ndarray:
        pts, _ = _points(x, self.d)
        out = np.empty((pts.shape[0], self.K))
        for k in range(self.K):
            z = solve_triangular(self.chol[k], (pts - self.nu[k]).T, lower=True)
            out[:, k] = -0.5 * np.sum(z * z, axis=0)
        return out + (self.log_pi - 0.5 * self.logdet - 0.5 * self.d * _LOG_2PI)[None, :]

    def __call__(self, x, workers=1):
        pts, single = _points(x, self.d)
        return _finish(self.log_scores(pts), single, workers)

    def __repr__(self):
        return f"GaussianGating(K={self.K}, d={self.d})"


class EqualCovGaussianGating:
    """Gaussian gating whose components share one covariance matrix."""

    def __init__(self, pi=None, nu=None, Sigma=None, *, log_pi=None):
        self.log_pi = _log_pi_from(pi, log_pi)
        nu = np.asarray(nu, dtype=np.float64)
        if nu.ndim == 1:
            nu = nu.reshape(-1, 1)
        if nu.shape[0] != self.log_pi.shape[0] or not np.all(np.isfinite(nu)):
            raise InvalidArgumentError("nu must be a finite (K, d) array")
        Sigma = np.atleast_2d(np.asarray(Sigma, dtype=np.float64))
        if Sigma.shape != (nu.shape[1], nu.shape[1]):
            raise InvalidArgumentError("Sigma must be a (d, d) matrix")
        self.Sigma, self.chol = _check_spd(Sigma)
        self.nu = nu
        self.logdet = 2.0 * float(np.log(np.diag(self.chol)).sum())

    @property
    def pi(self) -> np.ndarray:
        return np.exp(self.log_pi)

    @property
    def K(self) -> int:
        return self.log_pi.shape[0]

    @property
    def d(self) -> int:
        return self.nu.shape[1]

    def log_scores(self, x) -> np.ndarray:
        pts, _ = _points(x, self.d)
        out = np.empty((pts.shape[0], self.K))
        for k in range(self.K):
            z = solve_triangular(self.chol, (pts - self.nu[k]).T, lower=True)
            out[:, k] = -0.5 * np.sum(z * z, axis=0)
        return out + (self.log_pi - 0.5 * self.logdet - 0.5 * self.d * _LOG_2PI)[None, :]

    def __call__(self, x, workers=1):
        pts, single = _points(x, self.d)
        return _finish(self.log_scores(pts), single, workers)

    def __repr__(self):
        return f"EqualCovGaussianGating(K={self.K}, d={self.d})"


def eval_softmax_gates(g: SoftmaxGating, x):
    return g(x)


def eval_gaussian_gates(g, x):
    return g(x)


def softmax_to_gaussian(g: SoftmaxGating, scale: float = 1.0) -> GaussianGating:
    """Rewrite a soft-max gating as an isotropic Gaussian gating with equal gates.

    With ``scale = s`` the components are ``nu_k = s b_k``, ``Sigma_k = s I`` and
    ``log pi_k = tau_k - logsumexp(tau)`` where ``tau_k = a_k + s |b_k|^2 / 2``.
    ``s = 1`` is the textbook map. A small ``s`` keeps ``tau`` of the order of
    ``|b|`` instead of ``|b|^2``, which avoids cancellation for very steep gates;
    see :func:`conditioned_scale`.
    """
    s = float(scale)
    if not (s > 0.0 and math.isfinite(s)):
        raise InvalidArgumentError("scale must be positive")
    tau = g.a + 0.5 * s * np.sum(g.b * g.b, axis=1)
    log_pi = tau - logsumexp(tau)
    Sigma = np.broadcast_to(s * np.eye(g.d), (g.K, g.d, g.d)).copy()
    return GaussianGating(nu=s * g.b, Sigma=Sigma, log_pi=log_pi)


def conditioned_scale(g: SoftmaxGating) -> float:
    """Covariance scale making the Gaussian rewrite of ``g`` well conditioned."""
    bmax = float(np.max(np.linalg.norm(g.b, axis=1))) if g.K else 0.0
    return 1.0 / max(1.0, bmax)


def equalcov_gaussian_to_softmax(g: EqualCovGaussianGating) -> SoftmaxGating:
    """``b_k = Sigma^{-1} nu_k`` and ``a_k = log pi_k - nu_k . b_k / 2``."""
    b = cho_solve((g.chol, True), g.nu.T).T
    a = g.log_pi - 0.5 * np.sum(g.nu * b, axis=1)
    return SoftmaxGating(a, b)


def sharp_centers(n: int, printed: bool = False) -> np.ndarray:
    """Centers ``c_k`` for the 1-D sharp gates, ``k = 1..n``.

    The default ``(k - 1) / (2 n)`` places the crossing of exponents ``k`` and
    ``k + 1`` at ``k / n``. ``printed=True`` gives ``(k - 1) / (2 k)``, whose
    crossings all sit at ``x = 1/2``.
    """
    k = np.arange(1, n + 1, dtype=np.float64)
    return (k - 1.0) / (2.0 * k) if printed else (k - 1.0) / (2.0 * n)


def sharp_gates(n: int, l: float, printed_centers: bool = False) -> SoftmaxGating:
    """Soft-max gates on [0, 1] with exponents ``l k (x - c_k)``.

    As ``l`` grows, gate ``k`` (0-based) tends to the indicator of the ``k``-th
    of ``n`` equal cells away from cell boundaries.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidArgumentError(f"n must be a positive integer, got {n!r}")
    l = float(l)
    if not (l >= 0.0 and math.isfinite(l)):
        raise InvalidArgumentError("sharpness l must be a finite nonnegative number")
    k = np.arange(1, n + 1, dtype=np.float64)
    c = sharp_centers(n, printed_centers)
    return SoftmaxGating(-l * k * c, (l * k).reshape(-1, 1))


def gate_argmax_cells(n: int, printed_centers: bool = False) -> list[tuple[int, int]]:
    """Pairs ``(cell, argmax_j e_j(midpoint))`` for every cell, 0-based.

    The score comparison does not depend on ``l > 0``, so slopes ``j`` are used.
    """
    if n < 1:
        raise InvalidArgumentError("n must be positive")
    k = np.arange(1, n + 1, dtype=np.float64)
    c = sharp_centers(n, printed_centers)
    mids = (np.arange(n) + 0.5) / n
    scores = k[None, :] * (mids[:, None] - c[None, :])
    return [(i, int(j)) for i, j in enumerate(np.argmax(scores, axis=1))]


# ---------------------------------------------------------------------------
# JSON documents
# ---------------------------------------------------------------------------


def _floats(arr):
    return np.asarray(arr, dtype=np.float64).tolist()


def gating_to_dict(g) -> dict:
    if isinstance(g, SoftmaxGating):
        return {"type": "softmax", "a": _floats(g.a), "b": _floats(g.b)}
    if isinstance(g, EqualCovGaussianGating):
        return {"type": "equalcov", "pi": _floats(g.pi), "log_pi": _floats(g.log_pi),
                "nu": _floats(g.nu), "sigma": _floats(g.Sigma)}
    if isinstance(g, GaussianGating):
        return {"type": "gaussian", "pi": _floats(g.pi), "log_pi": _floats(g.log_pi),
                "nu": _floats(g.nu), "sigma": _floats(g.Sigma)}
    raise InvalidArgumentError(f"not a gating: {g!r}")


def gating_from_dict(doc: dict):
    kind = doc.get("type")
    try:
        if kind == "softmax":
            return SoftmaxGating(doc["a"], doc["b"])
        weights = {"log_pi": doc["log_pi"]} if "log_pi" in doc else {"pi": doc["pi"]}
        if kind == "gaussian":
            return GaussianGating(nu=doc["nu"], Sigma=doc["sigma"], **weights)
        if kind == "equalcov":
            return EqualCovGaussianGating(nu=doc["nu"], Sigma=doc["sigma"], **weights)
    except KeyError as exc:
        raise InvalidArgumentError(f"gating document lacks field {exc}") from None
    raise InvalidArgumentError(f"unknown gating type {kind!r}")
