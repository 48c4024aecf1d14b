"""Closed-form error bounds and the auxiliary coefficient inequalities.

Two variants of the contraction estimate exist side by side:

``"paper"``
    ``prod_{k=i+1}^t (1 - alpha/k^theta) <= exp(2 alpha/(1-theta) ((i+1)^(1-theta) - (t+1)^(1-theta)))``
    as stated; it fails for some small arguments (e.g. ``alpha=0.1,
    theta=0.75, i=1, t=2``).
``"conservative"``
    The same with ``alpha`` in place of ``2 alpha``, which follows from
    ``1 - x <= exp(-x)`` and an integral comparison and always holds.

All ``samp_bound_*`` functions bound the *squared* sampling error and
accept scalar or array ``t``.
"""

from dataclasses import dataclass
import math

import numpy as np

from ._validation import check_alpha, check_delta, check_int, check_real, check_theta
from .exceptions import DomainError
from .mixing import ExponentialEnvelope, PolynomialEnvelope

__all__ = [
    "VARIANTS",
    "FORMULAS",
    "BoundParams",
    "BoundReport",
    "c_theta",
    "psi_exact",
    "psi_exact_sequence",
    "psi_bound",
    "product_exact",
    "product_bound",
    "weighted_sum_exact",
    "weighted_sum_sequence",
    "weighted_sum_bound",
    "init_bound",
    "samp_bound_exp_phi",
    "samp_bound_exp_beta",
    "samp_bound_theta1",
    "samp_bound_generic",
    "poly_rate_exponent",
    "bound_report",
]

VARIANTS = ("paper", "conservative")
_LOG_MAX = math.log(np.finfo(float).max)
FORMULAS = ("thm1-phi", "thm-beta", "prop-theta1", "generic-partial-sum", "poly-rate")


def _check_variant(variant):
    if variant not in VARIANTS:
        raise DomainError(f"variant must be one of {VARIANTS}, got {variant!r}")
    return variant


def _check_times(t, low=1):
    arr = np.asarray(t)
    if arr.size == 0 or not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)) or np.any(arr < low):
        raise DomainError(f"t must be integer(s) >= {low}")
    return arr.astype(float)


def _scalar_or_array(value, t):
    return float(value) if np.ndim(t) == 0 else value


def c_theta(theta):
    """``8 + 2/(2 theta - 1) * (theta / (e (2 - 2^theta)))^(theta/(1-theta))`` for theta in (1/2, 1).

    Evaluated in log form.  Diverges at both ends of the interval; returns
    ``inf`` once the value leaves the double range (theta above ~0.998).
    """
    theta = check_theta(theta, allow_one=False)
    expo = theta / (1.0 - theta)
    log_term = math.log(2.0 / (2.0 * theta - 1.0)) + expo * (math.log(theta) - 1.0 - math.log(2.0 - 2.0**theta))
    if log_term > _LOG_MAX:
        # true value exceeds the double range
        return math.inf
    return 8.0 + math.exp(log_term)


def psi_exact_sequence(T, alpha, theta):
    """``psi[t-1] = sum_{i=1}^t i^(-2 theta) prod_{k=i+1}^t (1 - alpha/k^theta)^2`` for ``t = 1..T``.

    Uses ``psi(t) = (1 - alpha/t^theta)^2 psi(t-1) + t^(-2 theta)``.
    """
    T = check_int(T, "T", low=1)
    alpha = check_alpha(alpha)
    theta = check_theta(theta)
    out = np.empty(T)
    acc = 0.0
    for t in range(1, T + 1):
        acc = (1.0 - alpha / t**theta) ** 2 * acc + t ** (-2.0 * theta)
        out[t - 1] = acc
    return out


def psi_exact(t, alpha, theta):
    """Exact coefficient sum; argument ``t`` means the sums run over ``i = 1..t``.

    In the usual notation this is ``psi_theta(t + 1, alpha)``; the shift keeps
    both :func:`psi_exact` and :func:`psi_bound` indexed by the same ``t``.
    """
    t = check_int(t, "t", low=1)
    return float(psi_exact_sequence(t, alpha, theta)[-1])


def psi_bound(t, alpha, theta):
    """Upper bound on :func:`psi_exact`.

    For theta in (1/2, 1): ``C_theta (1/alpha)^(theta/(1-theta)) (t+1)^-theta``.
    For theta = 1 the branch depends on alpha:

    ============  =====================================
    alpha < 1/2   ``4/(1 - 2 alpha) (t+1)^(-2 alpha)``
    alpha = 1/2   ``4 ln(t+1) / (t+1)``
    1/2 < alpha   ``6/(2 alpha - 1) / (t+1)``
    alpha = 1     ``6 / (t+1)``
    ============  =====================================
    """
    alpha = check_alpha(alpha)
    theta = check_theta(theta)
    s = _check_times(t) + 1.0
    if theta < 1.0:
        val = c_theta(theta) * (1.0 / alpha) ** (theta / (1.0 - theta)) * s ** (-theta)
    elif alpha < 0.5:
        val = 4.0 / (1.0 - 2.0 * alpha) * s ** (-2.0 * alpha)
    elif alpha == 0.5:
        val = 4.0 * np.log(s) / s
    elif alpha < 1.0:
        val = 6.0 / (2.0 * alpha - 1.0) / s
    else:
        val = 6.0 / s
    return _scalar_or_array(val, t)


def _check_pair(i, t):
    i = check_int(i, "i", low=0)
    t = check_int(t, "t", low=0)
    if i > t:
        raise DomainError(f"need i <= t, got i={i}, t={t}")
    return i, t


def product_exact(i, t, alpha, theta):
    """``prod_{k=i+1}^t (1 - alpha / k^theta)``; the empty product (``i = t``) is 1."""
    i, t = _check_pair(i, t)
    alpha = check_alpha(alpha, allow_zero=True)
    theta = check_real(theta, "theta", low=0.0, high=1.0, low_open=True)
    k = np.arange(i + 1, t + 1, dtype=float)
    return float(np.prod(1.0 - alpha / k**theta))


def product_bound(i, t, alpha, theta, variant="conservative"):
    """Closed-form bound on :func:`product_exact`.

    theta < 1: ``exp(c alpha/(1-theta) ((i+1)^(1-theta) - (t+1)^(1-theta)))``
    with ``c = 2`` for ``variant="paper"`` and ``c = 1`` for
    ``"conservative"``.  theta = 1: ``((i+1)/(t+1))^alpha`` for both.
    """
    i, t = _check_pair(i, t)
    alpha = check_alpha(alpha, allow_zero=True)
    theta = check_real(theta, "theta", low=0.0, high=1.0, low_open=True)
    _check_variant(variant)
    if theta == 1.0:
        return ((i + 1.0) / (t + 1.0)) ** alpha
    c = 2.0 if variant == "paper" else 1.0
    g = 1.0 - theta
    return math.exp(c * alpha / g * ((i + 1.0) ** g - (t + 1.0) ** g))


def weighted_sum_sequence(T, alpha):
    """``W[t-1] = sum_{i=1}^t i^-2 ((i+1)/(t+1))^alpha`` for ``t = 1..T``."""
    T = check_int(T, "T", low=1)
    alpha = check_alpha(alpha)
    i = np.arange(1, T + 1, dtype=float)
    return np.cumsum(i**-2.0 * (i + 1.0) ** alpha) * (i + 1.0) ** (-alpha)


def weighted_sum_exact(t, alpha):
    """``sum_{i=1}^t (1/i^2) ((i+1)/(t+1))^alpha`` by direct summation."""
    t = check_int(t, "t", low=1)
    alpha = check_alpha(alpha)
    i = np.arange(1, t + 1, dtype=float)
    return float(np.sum(i**-2.0 * ((i + 1.0) / (t + 1.0)) ** alpha))


def weighted_sum_bound(t, alpha):
    """``6/(1-alpha) (t+1)^-alpha`` for alpha < 1 and ``6 ln(t+1)/(t+1)`` at alpha = 1."""
    alpha = check_alpha(alpha)
    s = _check_times(t) + 1.0
    if alpha < 1.0:
        val = 6.0 / (1.0 - alpha) * s ** (-alpha)
    else:
        val = 6.0 * np.log(s) / s
    return _scalar_or_array(val, t)


def init_bound(t, theta, alpha, r1_norm, variant="conservative"):
    """Deterministic bound on the initial error ``||u_t||``.

    theta < 1: ``exp(c alpha/(1-theta) (1 - t^(1-theta))) ||w_1 - w*||`` with
    ``c`` as in :func:`product_bound`; theta = 1: ``t^-alpha ||w_1 - w*||``.
    """
    theta = check_theta(theta)
    alpha = check_alpha(alpha)
    r1_norm = check_real(r1_norm, "r1_norm", low=0.0)
    _check_variant(variant)
    tt = _check_times(t)
    if theta == 1.0:
        val = tt ** (-alpha) * r1_norm
    else:
        c = 2.0 if variant == "paper" else 1.0
        g = 1.0 - theta
        val = np.exp(c * alpha / g * (1.0 - tt**g)) * r1_norm
    return _scalar_or_array(val, t)


@dataclass(frozen=True)
class BoundParams:
    """Inputs shared by the sampling-error bounds.

    ``envelope`` is an :class:`ExponentialEnvelope` (``D, r`` or ``D1, r1``),
    a :class:`PolynomialEnvelope` (``b, k``), or an array of exact partial
    sums ``S[t-1] = phi_1 + ... + phi_t``.
    """

    theta: float
    alpha: float
    sigma2: float
    eta: float
    delta: float
    envelope: object = None

    def __post_init__(self):
        object.__setattr__(self, "theta", check_theta(self.theta))
        object.__setattr__(self, "alpha", check_alpha(self.alpha))
        object.__setattr__(self, "sigma2", check_real(self.sigma2, "sigma2", low=0.0))
        object.__setattr__(self, "eta", check_real(self.eta, "eta", low=0.0, low_open=True))
        object.__setattr__(self, "delta", check_delta(self.delta))

    @property
    def iid_scale(self):
        """``sigma^2 C_theta / (delta eta^2) (1/alpha)^(theta/(1-theta))``; requires theta < 1."""
        if self.theta == 1.0:
            raise DomainError("the theta-in-(1/2,1) bounds need theta < 1")
        expo = self.theta / (1.0 - self.theta)
        return self.sigma2 * c_theta(self.theta) / (self.delta * self.eta**2) * (1.0 / self.alpha) ** expo


def _exp_envelope(params):
    env = params.envelope
    if not isinstance(env, ExponentialEnvelope):
        raise DomainError("this bound needs an ExponentialEnvelope")
    return env


def samp_bound_exp_phi(t, params):
    """Probability-``1-delta`` bound on ``E_samp^2(t)`` under ``phi_t <= D r^t``::

        sigma^2 C_theta / (delta eta^2) (1/alpha)^(theta/(1-theta)) t^-theta (1 + 4 D r/(1-r))

    ``D = 0`` gives the independent-sample bound.
    """
    env = _exp_envelope(params)
    tt = _check_times(t)
    val = params.iid_scale * tt ** (-params.theta) * (1.0 + 4.0 * env.tail_sum())
    return _scalar_or_array(val, t)


def samp_bound_exp_beta(t, params):
    """As :func:`samp_bound_exp_phi` with the beta envelope ``D1 r1^t`` in ``params``."""
    return samp_bound_exp_phi(t, params)


def samp_bound_theta1(t, params):
    """theta = 1, alpha in (0, 1/2): ``4 sigma^2/(delta eta^2) / (1 - 2 alpha) t^-alpha (1 + 6 D r/(1-r))``."""
    if params.theta != 1.0:
        raise DomainError("samp_bound_theta1 needs theta = 1")
    if not params.alpha < 0.5:
        raise DomainError(f"samp_bound_theta1 needs alpha in (0, 1/2), got {params.alpha}")
    env = _exp_envelope(params)
    tt = _check_times(t)
    a = params.alpha
    val = 4.0 * params.sigma2 / (params.delta * params.eta**2) / (1.0 - 2.0 * a) * tt ** (-a)
    val = val * (1.0 + 6.0 * env.tail_sum())
    return _scalar_or_array(val, t)


def samp_bound_generic(t, theta, alpha, sigma2, eta, delta, S_t, variant="conservative"):
    """Bound driven by the partial sum ``S_t = phi_1 + ... + phi_t``.

    ``(sigma^2 C_theta/(delta eta^2)) (1/alpha)^(theta/(1-theta)) t^-theta (1 + c S_t)``
    with ``c = 4`` (conservative, matching the cross-term estimate) or
    ``c = 1`` (``variant="paper"``).  ``t`` and ``S_t`` broadcast together.
    """
    params = BoundParams(theta, alpha, sigma2, eta, delta)
    _check_variant(variant)
    tt = _check_times(t)
    S = np.asarray(S_t, dtype=float)
    if np.any(S < 0) or not np.all(np.isfinite(S)):
        raise DomainError("S_t must be finite and nonnegative")
    c = 4.0 if variant == "conservative" else 1.0
    val = params.iid_scale * tt ** (-theta) * (1.0 + c * S)
    return float(val) if np.ndim(val) == 0 else val


def poly_rate_exponent(theta, k):
    """Exponent ``s`` in ``||w_t - w*|| = O(t^s)`` under ``phi_t <= b t^-k``.

    Returns ``(s, log_factor)``; ``log_factor`` flags the extra
    ``(log t)^(1/2)`` at ``k = 1``.
    """
    theta = check_theta(theta, allow_one=False)
    k = check_real(k, "k", low=0.0, low_open=True)
    if k < 1.0:
        return (1.0 - k - theta) / 2.0, False
    if k == 1.0:
        return -theta / 2.0, True
    return -theta / 2.0, False


@dataclass(frozen=True, eq=False)
class BoundReport:
    checkpoints: np.ndarray
    init_bound: np.ndarray
    samp_bound_sq: np.ndarray
    variant: str
    formula: str


def bound_report(params, checkpoints, formula, variant="conservative", r1_norm=0.0):
    """Evaluate the initial and sampling bounds of ``formula`` at ``checkpoints``.

    ``formula`` is one of :data:`FORMULAS`.  For ``"generic-partial-sum"``
    ``params.envelope`` must hold the exact partial sums, indexed from
    ``t = 1``; for ``"poly-rate"`` it must be a :class:`PolynomialEnvelope`
    and ``S_t`` is replaced by ``b sum_{i<=t} i^-k``.
    """
    _check_variant(variant)
    cp = np.asarray(checkpoints, dtype=np.int64)
    t = cp.astype(float)
    init = init_bound(t, params.theta, params.alpha, r1_norm, variant)
    if formula in ("thm1-phi", "thm-beta"):
        samp = samp_bound_exp_phi(t, params)
    elif formula == "prop-theta1":
        samp = samp_bound_theta1(t, params)
    elif formula == "generic-partial-sum":
        S = np.asarray(params.envelope, dtype=float)
        if S.ndim != 1 or S.size < cp.max():
            raise DomainError("partial sums must cover every checkpoint")
        samp = samp_bound_generic(t, params.theta, params.alpha, params.sigma2, params.eta, params.delta, S[cp - 1], variant)
    elif formula == "poly-rate":
        env = params.envelope
        if not isinstance(env, PolynomialEnvelope):
            raise DomainError("poly-rate needs a PolynomialEnvelope")
        i = np.arange(1, cp.max() + 1, dtype=float)
        S = env.b * np.cumsum(i ** (-env.k)) if not env.all_zero else np.zeros(i.size)
        samp = samp_bound_generic(t, params.theta, params.alpha, params.sigma2, params.eta, params.delta, S[cp - 1], variant)
    else:
        raise DomainError(f"unknown formula {formula!r}; expected one of {FORMULAS}")
    return BoundReport(cp, np.asarray(init, dtype=float), np.asarray(samp, dtype=float), variant, formula)
