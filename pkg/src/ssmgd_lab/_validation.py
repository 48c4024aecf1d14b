"""Input validation helpers.

Every public entry point funnels its arguments through these so that the
error types stay consistent across modules.
"""

import numbers

import numpy as np

from .exceptions import DomainError, NonStochastic

ROW_SUM_TOL = 1e-9
DIST_TOL = 1e-9


def check_real(value, name, *, low=None, high=None, low_open=False, high_open=False):
    """Return ``value`` as a float after checking it lies in the given interval."""
    if isinstance(value, bool) or not isinstance(value, (numbers.Real, np.floating, np.integer)):
        raise DomainError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise DomainError(f"{name} must be finite, got {value}")
    if low is not None and (value < low or (low_open and value == low)):
        bracket = "(" if low_open else "["
        raise DomainError(f"{name}={value} outside {bracket}{low}, ...")
    if high is not None and (value > high or (high_open and value == high)):
        bracket = ")" if high_open else "]"
        raise DomainError(f"{name}={value} outside ..., {high}{bracket}")
    return value


def check_int(value, name, *, low=None):
    if isinstance(value, bool) or not isinstance(value, (numbers.Integral, np.integer)):
        if isinstance(value, (float, np.floating)) and float(value).is_integer():
            value = int(value)
        else:
            raise DomainError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if low is not None and value < low:
        raise DomainError(f"{name} must be >= {low}, got {value}")
    return value


def check_open_probability(p, name):
    """Probability strictly inside (0, 1)."""
    return check_real(p, name, low=0.0, high=1.0, low_open=True, high_open=True)


def check_theta(theta, *, allow_one=True):
    """Step-size exponent: (1/2, 1], or (1/2, 1) when ``allow_one`` is False."""
    return check_real(theta, "theta", low=0.5, high=1.0, low_open=True, high_open=not allow_one)


def check_alpha(alpha, *, allow_zero=False):
    return check_real(alpha, "alpha", low=0.0, high=1.0, low_open=not allow_zero)


def check_delta(delta):
    return check_real(delta, "delta", low=0.0, high=1.0, low_open=True, high_open=True)


def check_distribution(rho, name="distribution", tol=DIST_TOL):
    """Return ``rho`` as a 1-d float array summing to one with entries in [0, 1]."""
    arr = np.asarray(rho, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DomainError(f"{name} must be a non-empty 1-d array")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries")
    if np.any(arr < 0) or np.any(arr > 1):
        raise DomainError(f"{name} entries must lie in [0, 1]")
    if abs(arr.sum() - 1.0) > tol:
        raise DomainError(f"{name} sums to {arr.sum()!r}, not 1")
    return arr


def check_stochastic_matrix(P, tol=ROW_SUM_TOL):
    """Return ``P`` as a square float array after checking it is row-stochastic."""
    arr = np.asarray(P, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise NonStochastic(f"transition matrix must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonStochastic("transition matrix has non-finite entries")
    if np.any(arr < 0):
        raise NonStochastic("transition matrix has negative entries")
    dev = np.abs(arr.sum(axis=1) - 1.0).max()
    if dev > tol:
        raise NonStochastic(f"row sums deviate from 1 by {dev:.3g}")
    return arr


def readonly(arr):
    """Return a read-only float copy of ``arr``."""
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out
