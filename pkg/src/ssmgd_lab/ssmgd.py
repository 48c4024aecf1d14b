"""The stationary Markov chain gradient descent recursion.

Starting from ``w_1`` the iterates follow

    w_{t+1} = w_t - gamma_t (A(z_t) w_t + B(z_t)),   gamma_t = 1 / (eta t^theta),

along a stationary path ``z_1, z_2, ...``.  Alongside ``w_t`` the engine
carries the two pieces of the residual ``w_t - w* = u_t + v_t``:

    u_{t+1} = (I - gamma_t A_t) u_t,                  u_1 = w_1 - w*
    v_{t+1} = (I - gamma_t A_t) v_t - gamma_t Y_t,    v_1 = 0,  Y_t = A_t w* + B_t

``||u_t||`` is the initial error and ``||v_t||`` the sampling error.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import check_int, check_real, check_theta
from .chains import iter_path_chunks
from .exceptions import DimensionMismatch, DomainError, NonFinite
from .oracle import minimizer

__all__ = [
    "Schedule",
    "Trajectory",
    "step_size",
    "default_checkpoints",
    "check_checkpoints",
    "simulate",
    "run",
    "run_decomposed",
    "run_batch",
]

FINITE_CHECK_EVERY = 1024
ROUNDING_ZERO = 64 * np.finfo(float).eps


def step_size(theta, eta, t):
    """``1 / (eta * t**theta)``."""
    theta = check_theta(theta)
    eta = check_real(eta, "eta", low=0.0, low_open=True)
    t = check_int(t, "t", low=1)
    return 1.0 / (eta * t**theta)


@dataclass(frozen=True)
class Schedule:
    """Polynomially decaying step sizes ``gamma_t = 1 / (eta t^theta)``, ``theta`` in (1/2, 1]."""

    theta: float
    eta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", check_theta(self.theta))
        object.__setattr__(self, "eta", check_real(self.eta, "eta", low=0.0, low_open=True))

    def step_size(self, t):
        return step_size(self.theta, self.eta, t)

    def steps(self, T):
        """Array of ``gamma_1 .. gamma_T``."""
        t = np.arange(1, check_int(T, "T", low=1) + 1, dtype=float)
        return 1.0 / (self.eta * t**self.theta)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Errors of one run at its checkpoints, in the family metric.

    ``residual`` is ``||(w_t - w*) - (u_t + v_t)||``.  ``w``, ``u`` and
    ``v`` hold the vectors at the last checkpoint.
    """

    checkpoints: np.ndarray
    total_err: np.ndarray
    init_err: np.ndarray
    samp_err: np.ndarray
    step_size: np.ndarray
    residual: np.ndarray
    w: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w_star: np.ndarray


def default_checkpoints(T):
    """1, the powers of two below ``T``, and ``T``."""
    T = check_int(T, "T", low=1)
    pts = {1, T}
    p = 2
    while p < T:
        pts.add(p)
        p *= 2
    return np.array(sorted(pts), dtype=np.int64)


def check_checkpoints(checkpoints, T):
    if checkpoints is None:
        return default_checkpoints(T)
    cp = np.asarray(checkpoints)
    if cp.ndim != 1 or cp.size == 0 or not np.all(cp == np.round(cp)):
        raise DomainError("checkpoints must be a non-empty list of integers")
    cp = cp.astype(np.int64)
    if np.any(np.diff(cp) <= 0):
        raise DomainError("checkpoints must be strictly increasing")
    if cp[0] < 1 or cp[-1] > T:
        raise DomainError(f"checkpoints must lie in [1, {T}]")
    return cp


def simulate(family, chunks, T, schedule, w1, checkpoints, w_star):
    """Run ``N`` recursions side by side.

    Parameters
    ----------
    family : QuadraticFamily or KernelFamily
    chunks : iterable of (N, L) integer arrays
        Consecutive blocks of the ``N`` paths; at least ``T - 1`` states
        are consumed.
    T : int
        Last time index; iterates ``w_1 .. w_T`` are produced.
    schedule : object with ``steps(T)``
    w1 : (d,) or (N, d) array
    checkpoints : sorted int array within [1, T]
    w_star : (d,) array

    Returns
    -------
    dict
        ``total_err``, ``init_err``, ``samp_err``, ``residual`` of shape
        ``(N, C)``, ``step_size`` of shape ``(C,)``, and ``final`` of shape
        ``(N, d, 3)`` with ``w, u, v`` stacked on the last axis.
    """
    A = family.operators
    B = family.offsets
    d = family.dimension
    w_star = np.asarray(w_star, dtype=float)
    Aw = np.einsum("zij,j->zi", A, w_star)
    Y = Aw + B
    # gradients at the optimum that cancel to rounding level are exact zeros
    scale = np.einsum("zij,j->zi", np.abs(A), np.abs(w_star)) + np.abs(B)
    Y[np.abs(Y) <= ROUNDING_ZERO * scale] = 0.0
    offsets = np.stack([B, np.zeros_like(B), Y], axis=-1)

    chunks = iter(chunks)
    first = next(chunks)
    N = first.shape[0]
    w1 = np.asarray(w1, dtype=float)
    if w1.shape not in ((d,), (N, d)):
        raise DimensionMismatch(f"w1 has shape {w1.shape}, expected ({d},) or ({N}, {d})")
    S = np.zeros((N, d, 3))
    S[:, :, 0] = w1
    S[:, :, 1] = w1 - w_star
    scalar = N == 1
    if scalar:
        S = S[0]

    gammas = np.asarray(schedule.steps(T), dtype=float)
    C = len(checkpoints)
    out = {key: np.zeros((N, C)) for key in ("total_err", "init_err", "samp_err", "residual")}
    cp_pos = {int(t): i for i, t in enumerate(checkpoints)}

    def record(t):
        i = cp_pos.get(t)
        if i is None:
            return
        W = S[..., 0] - w_star
        U = S[..., 1]
        V = S[..., 2]
        out["total_err"][:, i] = family.batch_norm(W)
        out["init_err"][:, i] = family.batch_norm(U)
        out["samp_err"][:, i] = family.batch_norm(V)
        out["residual"][:, i] = family.batch_norm(W - U - V)

    def check_finite(t):
        if not np.all(np.isfinite(S)):
            bad = np.flatnonzero(~np.isfinite(S.reshape(N, -1)).all(axis=1))
            raise NonFinite(f"non-finite iterate detected by step {t}", t=t, trial=int(bad[0]))

    t = 1
    record(1)
    block = first
    # overflow is reported through NonFinite rather than warnings
    with np.errstate(over="ignore", invalid="ignore"):
        while t < T:
            if block is None:
                try:
                    block = next(chunks)
                except StopIteration:
                    raise DimensionMismatch(f"paths shorter than the {T - 1} states required") from None
            if block.shape[0] != N:
                raise DimensionMismatch("path blocks changed their number of rows")
            zs = block[0].tolist() if scalar else block.astype(np.intp)
            for j in range(min(block.shape[1], T - t)):
                z = zs[j] if scalar else zs[:, j]
                S -= gammas[t - 1] * (A[z] @ S + offsets[z])
                t += 1
                if t in cp_pos:
                    record(t)
                if t % FINITE_CHECK_EVERY == 0:
                    check_finite(t)
            block = None
    check_finite(t)
    out["step_size"] = gammas[np.asarray(checkpoints) - 1]
    out["final"] = S[None] if scalar else S
    return out


def _validate_path(family, states):
    states = np.asarray(states)
    if states.size and (states.min() < 0 or states.max() >= family.n_states):
        raise DimensionMismatch(f"path visits states outside 0..{family.n_states - 1}")
    return states


def run_decomposed(family, path, schedule, w1, checkpoints=None, w_star=None):
    """Run the recursion along ``path`` tracking the initial/sampling split.

    Parameters
    ----------
    family : QuadraticFamily or KernelFamily
    path : PathSample or 1-d int array
        When a bare array is given ``w_star`` must be supplied.
    schedule : Schedule
    w1 : (d,) array
    checkpoints : increasing ints in ``[1, len(path)]``; default powers of two.
    w_star : optional minimizer; computed from the path's chain otherwise.
    """
    states = _validate_path(family, getattr(path, "states", path))
    T = len(states)
    if T < 1:
        raise DomainError("path is empty")
    cp = check_checkpoints(checkpoints, T)
    if w_star is None:
        if not hasattr(path, "chain"):
            raise DomainError("w_star is required when path is a bare array")
        w_star = minimizer(family, path.chain.stationary)
    w1 = np.asarray(w1, dtype=float)
    if w1.shape != (family.dimension,):
        raise DimensionMismatch(f"w1 has shape {w1.shape}, expected ({family.dimension},)")
    res = simulate(family, [states[None, :]], T, schedule, w1, cp, w_star)
    final = res["final"][0]
    return Trajectory(
        checkpoints=cp,
        total_err=res["total_err"][0],
        init_err=res["init_err"][0],
        samp_err=res["samp_err"][0],
        step_size=res["step_size"],
        residual=res["residual"][0],
        w=final[:, 0].copy(),
        u=final[:, 1].copy(),
        v=final[:, 2].copy(),
        w_star=np.asarray(w_star, dtype=float),
    )


def run(family, path, schedule, w1, checkpoints=None, w_star=None):
    """Iterate the recursion along ``path`` and record errors at the checkpoints.

    At ``t = 1`` the sampling error is zero and the total error equals
    ``||w_1 - w*||``.  The returned :class:`Trajectory` is the same as
    :func:`run_decomposed`; the decomposition costs one extra column in a
    batched product, so it is always tracked.
    """
    return run_decomposed(family, path, schedule, w1, checkpoints, w_star)


def run_batch(family, chain, T, seeds, schedule, w1, checkpoints, w_star=None):
    """Run one recursion per seed, with paths drawn by :func:`iter_path_chunks`."""
    if w_star is None:
        w_star = minimizer(family, chain.stationary)
    if chain.n_states != family.n_states:
        raise DimensionMismatch(f"chain has {chain.n_states} states, family has {family.n_states}")
    return simulate(family, iter_path_chunks(chain, T, list(seeds)), T, schedule, w1, checkpoints, w_star)
