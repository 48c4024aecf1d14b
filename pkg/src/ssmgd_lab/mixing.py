"""Exact phi- and beta-mixing coefficients of finite chains.

For a stationary chain with transition matrix ``P`` and stationary law
``rho`` the coefficients at lag ``t`` are functionals of the rows of
``P^t - 1 rho^T``:

* ``phi_t`` is the largest total-variation distance between a row and
  ``rho`` over states of positive stationary mass;
* ``beta_t`` is the ``rho``-average of the same distances.

The deviation matrix is propagated directly (never as ``P^t`` minus
``rho``) so that tiny coefficients keep their relative accuracy.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import check_distribution, check_int, check_real
from .exceptions import DomainError, FitError

__all__ = [
    "MixingProfile",
    "ExponentialEnvelope",
    "PolynomialEnvelope",
    "tv_distance",
    "deviation_powers",
    "mixing_profile",
    "phi_coefficients",
    "beta_coefficients",
    "fit_exponential_envelope",
    "fit_polynomial_envelope",
    "geometric_tail_sum",
    "partial_sum",
]

ZERO_FLOOR = 1e-14


@dataclass(frozen=True, eq=False)
class MixingProfile:
    """``phi[t-1]`` and ``beta[t-1]`` hold the coefficients at lag ``t``."""

    phi: np.ndarray
    beta: np.ndarray

    @property
    def horizon(self):
        return len(self.phi)

    @property
    def t(self):
        return np.arange(1, self.horizon + 1)


@dataclass(frozen=True)
class ExponentialEnvelope:
    """Majorant ``D * r**t``.  ``D == 0`` marks an identically zero sequence."""

    D: float
    r: float

    @property
    def all_zero(self):
        return self.D == 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.all_zero:
            return np.zeros_like(t)
        return self.D * self.r**t

    def tail_sum(self):
        return geometric_tail_sum(self.D, self.r)


@dataclass(frozen=True)
class PolynomialEnvelope:
    """Majorant ``b * t**-k``.  ``b == 0`` marks an identically zero sequence."""

    b: float
    k: float

    @property
    def all_zero(self):
        return self.b == 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.all_zero:
            return np.zeros_like(t)
        return self.b * t ** (-self.k)


def tv_distance(mu, nu):
    """Total variation distance ``sup_B |mu(B) - nu(B)| = 0.5 * sum |mu - nu|``."""
    mu = check_distribution(mu, "mu")
    nu = check_distribution(nu, "nu")
    if mu.shape != nu.shape:
        raise DomainError(f"distributions have different lengths {mu.size} and {nu.size}")
    return float(min(1.0, 0.5 * np.abs(mu - nu).sum()))


def deviation_powers(chain, T):
    """Yield ``P^t - 1 rho^T`` for ``t = 1..T``.

    Each step multiplies by ``P`` and then removes the component along
    ``rho`` picked up through rounding, which keeps the rows summing to zero.
    The same array object is reused between iterations.
    """
    T = check_int(T, "T", low=1)
    P = chain.transition
    rho = chain.stationary
    delta = P - rho[None, :]
    for t in range(1, T + 1):
        if t > 1:
            delta = delta @ P
            delta -= delta.sum(axis=1, keepdims=True) * rho[None, :]
        yield delta


def mixing_profile(chain, T):
    """phi and beta sequences for lags ``1..T`` in a single pass over matrix powers."""
    T = check_int(T, "T", low=1)
    rho = chain.stationary
    support = chain.support
    weights = rho[support]
    phi = np.zeros(T)
    beta = np.zeros(T)
    for t, delta in enumerate(deviation_powers(chain, T)):
        tv = 0.5 * np.abs(delta[support]).sum(axis=1)
        np.minimum(tv, 1.0, out=tv)
        phi[t] = tv.max()
        beta[t] = weights @ tv
        # everything past here is an exact zero (or would underflow)
        if phi[t] < 1e-300:
            break
    phi.setflags(write=False)
    beta.setflags(write=False)
    return MixingProfile(phi, beta)


def phi_coefficients(chain, T):
    return mixing_profile(chain, T).phi


def beta_coefficients(chain, T):
    return mixing_profile(chain, T).beta


def _fit_envelope(seq, transform, name):
    seq = np.asarray(seq, dtype=float)
    if seq.ndim != 1 or seq.size == 0:
        raise FitError(f"{name} fit needs a non-empty 1-d sequence")
    if np.any(~np.isfinite(seq)) or np.any(seq < 0):
        raise FitError(f"{name} fit needs a finite nonnegative sequence")
    t = np.arange(1, seq.size + 1, dtype=float)
    pos = seq > ZERO_FLOOR
    if not pos.any():
        return None
    if pos.sum() < 2:
        raise FitError(f"{name} fit needs at least two entries above {ZERO_FLOOR}")
    x = transform(t[pos])
    y = np.log(seq[pos])
    slope, intercept = np.polyfit(x, y, 1)
    if not slope < 0:
        raise FitError(f"{name} fit: positive entries do not decay (slope {slope:.3g})")
    # smallest intercept that puts every point on or under the line
    intercept = max(intercept, float(np.max(y - slope * x)))
    return slope, intercept


def fit_exponential_envelope(seq):
    """Geometric majorant ``D r^t`` of a nonnegative sequence indexed from 1.

    The decay rate comes from least squares on ``log seq[t]`` against ``t``
    over entries above 1e-14; ``D`` is then raised just enough for the
    envelope to dominate every entry.

    Returns
    -------
    ExponentialEnvelope
        With ``D = 0`` (and ``r = 0``) if every entry is below 1e-14.

    Raises
    ------
    FitError
        If fewer than two entries are positive or they do not decay.
    """
    fit = _fit_envelope(seq, lambda t: t, "exponential")
    if fit is None:
        return ExponentialEnvelope(0.0, 0.0)
    slope, intercept = fit
    return ExponentialEnvelope(float(np.exp(intercept)), float(np.exp(slope)))


def fit_polynomial_envelope(seq):
    """Power-law majorant ``b t^-k``; same conventions as :func:`fit_exponential_envelope`."""
    fit = _fit_envelope(seq, np.log, "polynomial")
    if fit is None:
        return PolynomialEnvelope(0.0, 0.0)
    slope, intercept = fit
    return PolynomialEnvelope(float(np.exp(intercept)), float(-slope))


def geometric_tail_sum(D, r):
    """``sum_{t>=1} D r^t = D r / (1 - r)``."""
    D = check_real(D, "D", low=0.0)
    r = check_real(r, "r", low=0.0, high=1.0, high_open=True)
    return D * r / (1.0 - r)


def partial_sum(seq, t):
    """``seq[1] + ... + seq[t]`` with 1-based ``t``."""
    seq = np.asarray(seq, dtype=float)
    if isinstance(t, bool) or int(t) != t or not 1 <= t <= seq.size:
        raise IndexError(f"t={t} outside 1..{seq.size}")
    return float(seq[: int(t)].sum())
