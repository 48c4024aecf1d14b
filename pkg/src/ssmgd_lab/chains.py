"""Finite-state strictly stationary Markov chains.

A :class:`ChainModel` bundles a row-stochastic transition matrix with its
stationary distribution.  Paths are always started from the stationary
distribution, so every sampled path is a strictly stationary sequence.
"""

from bisect import bisect_right
from dataclasses import dataclass
import json

import numpy as np

from ._validation import (
    check_distribution,
    check_int,
    check_open_probability,
    check_real,
    check_stochastic_matrix,
    readonly,
)
from .exceptions import DomainError, NoUniqueStationary

__all__ = [
    "ChainModel",
    "PathSample",
    "stationary_distribution",
    "build_two_state",
    "build_cycle_walk",
    "build_renewal_tail",
    "build_iid",
    "random_stochastic",
    "sample_stationary_path",
    "sample_stationary_paths",
    "iter_path_chunks",
    "trial_seed",
    "chain_to_json",
    "chain_from_json",
    "build_chain",
]

ROW_TOL = 1e-12
RESIDUAL_TOL = 1e-10
DIRECT_SOLVE_MAX = 1000
_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class ChainModel:
    """Immutable finite-state chain with its stationary distribution.

    Use :meth:`from_transition` to build one from a bare matrix; the
    constructor itself only validates.
    """

    n_states: int
    transition: np.ndarray
    stationary: np.ndarray

    def __post_init__(self):
        P = readonly(self.transition)
        rho = readonly(self.stationary)
        n = int(self.n_states)
        if P.shape != (n, n) or rho.shape != (n,):
            raise DomainError(f"shapes {P.shape}, {rho.shape} inconsistent with n_states={n}")
        if np.any(P < 0) or np.any(P > 1):
            raise DomainError("transition entries must lie in [0, 1]")
        if np.abs(P.sum(axis=1) - 1.0).max() > ROW_TOL:
            raise DomainError("transition rows must sum to 1 within 1e-12")
        if np.any(rho < 0) or np.any(rho > 1) or abs(rho.sum() - 1.0) > ROW_TOL:
            raise DomainError("stationary must be a distribution (sum within 1e-12)")
        residual = np.abs(rho @ P - rho).sum()
        if residual > RESIDUAL_TOL:
            raise DomainError(f"stationary residual {residual:.3g} exceeds {RESIDUAL_TOL}")
        object.__setattr__(self, "n_states", n)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "stationary", rho)

    @classmethod
    def from_transition(cls, P):
        P = check_stochastic_matrix(P)
        P = P / P.sum(axis=1, keepdims=True)
        return cls(P.shape[0], P, stationary_distribution(P))

    @property
    def support(self):
        """Indices of states with positive stationary mass."""
        return np.flatnonzero(self.stationary > 0)

    def residual(self):
        return float(np.abs(self.stationary @ self.transition - self.stationary).sum())


@dataclass(frozen=True, eq=False)
class PathSample:
    states: np.ndarray
    seed: int
    chain: ChainModel

    def __len__(self):
        return len(self.states)


def stationary_distribution(P):
    """Stationary distribution of a row-stochastic matrix.

    Solves ``(P^T - I) rho = 0`` with a normalisation row appended.  For
    more than 1000 states a damped power iteration is used instead.

    Parameters
    ----------
    P : (n, n) array_like
        Row-stochastic matrix; rows must sum to 1 within 1e-9.

    Returns
    -------
    rho : (n,) ndarray
        Probability vector with ``||rho P - rho||_1 <= 1e-10``.

    Raises
    ------
    NonStochastic
        If ``P`` has negative entries or bad row sums.
    NoUniqueStationary
        If the fixed-point space is not one-dimensional (e.g. a reducible
        chain with two closed classes).
    """
    P = check_stochastic_matrix(P)
    n = P.shape[0]
    if n == 1:
        return np.ones(1)
    if n > DIRECT_SOLVE_MAX:
        rho = _power_stationary(P)
    else:
        M = P.T - np.eye(n)
        sv = np.linalg.svd(M, compute_uv=False)
        # one zero singular value is guaranteed; a second means non-uniqueness
        if sv[-2] <= 1e-12 * n:
            raise NoUniqueStationary(
                f"fixed-point space of P has dimension > 1 (second smallest singular value {sv[-2]:.3g})"
            )
        A = np.vstack([M, np.ones((1, n))])
        b = np.zeros(n + 1)
        b[-1] = 1.0
        rho = np.linalg.lstsq(A, b, rcond=None)[0]
    if rho.min() < -1e-10:
        raise NoUniqueStationary("solver returned a vector with negative mass")
    rho = np.clip(rho, 0.0, None)
    rho /= rho.sum()
    residual = np.abs(rho @ P - rho).sum()
    if residual > RESIDUAL_TOL:
        raise NoUniqueStationary(f"stationary residual {residual:.3g} exceeds {RESIDUAL_TOL}")
    return rho


def _power_stationary(P, max_iter=100_000, tol=1e-15):
    n = P.shape[0]
    lazy = 0.5 * (P + np.eye(n))
    rho = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = rho @ lazy
        nxt /= nxt.sum()
        if np.abs(nxt - rho).sum() < tol:
            return nxt
        rho = nxt
    raise NoUniqueStationary("power iteration did not converge")


def build_two_state(p, q):
    """Two-state chain ``[[1-p, p], [q, 1-q]]`` with stationary ``(q, p)/(p+q)``."""
    p = check_open_probability(p, "p")
    q = check_open_probability(q, "q")
    P = np.array([[1.0 - p, p], [q, 1.0 - q]])
    return ChainModel(2, P, np.array([q / (p + q), p / (p + q)]))


def build_cycle_walk(n, h):
    """Lazy random walk on an n-cycle: hold with ``h``, step to each neighbour with ``(1-h)/2``."""
    n = check_int(n, "n", low=3)
    h = check_open_probability(h, "h")
    P = np.zeros((n, n))
    idx = np.arange(n)
    P[idx, idx] = h
    P[idx, (idx + 1) % n] += (1.0 - h) / 2
    P[idx, (idx - 1) % n] += (1.0 - h) / 2
    return ChainModel(n, P, np.full(n, 1.0 / n))


def build_renewal_tail(k, M):
    """Truncated renewal chain with power-law jump distribution.

    From state 0 the chain jumps to ``j`` with probability proportional to
    ``(j + 1) ** -(k + 2)`` and then walks down deterministically.  The
    stationary mass of state ``j`` is proportional to the probability that
    a jump lands at ``j`` or above.
    """
    k = check_real(k, "k", low=0.0, low_open=True)
    M = check_int(M, "M", low=2)
    weights = (np.arange(M) + 1.0) ** -(k + 2.0)
    jump = weights / weights.sum()
    P = np.zeros((M, M))
    P[0] = jump
    P[np.arange(1, M), np.arange(M - 1)] = 1.0
    tail = np.cumsum(jump[::-1])[::-1]
    return ChainModel(M, P, tail / tail.sum())


def build_iid(rho):
    """Degenerate chain whose every row equals ``rho``."""
    rho = check_distribution(rho, "rho")
    P = np.tile(rho, (rho.size, 1))
    return ChainModel(rho.size, P, rho)


def random_stochastic(n, seed, concentration=1.0):
    """Chain with Dirichlet-distributed rows (dense, hence irreducible)."""
    n = check_int(n, "n", low=1)
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.full(n, float(concentration)), size=n)
    # Dirichlet draws can underflow to exact zeros for small concentration
    P = np.maximum(P, 1e-300)
    return ChainModel.from_transition(P / P.sum(axis=1, keepdims=True))


def trial_seed(base_seed, index):
    """64-bit seed for trial ``index`` derived by hashing ``(base_seed, index)``."""
    ss = np.random.SeedSequence([int(base_seed) % 2**64, int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def _generator(seed):
    return np.random.Generator(np.random.Philox(int(seed) % 2**64))


def _cumulative(rows):
    cum = np.cumsum(rows, axis=-1)
    # pin the cumulative mass at the last reachable state to exactly 1
    for row, c in zip(np.atleast_2d(rows), np.atleast_2d(cum)):
        c[np.flatnonzero(row > 0)[-1]:] = 1.0
    return cum


def _state_dtype(n):
    return np.min_scalar_type(max(n - 1, 0))


def iter_path_chunks(chain, T, seeds, chunk=_CHUNK):
    """Yield ``(N, L)`` blocks of stationary paths, one row per seed.

    The concatenation of the blocks does not depend on ``chunk``: each row
    consumes one uniform per step from its own Philox stream.
    """
    T = check_int(T, "T", low=1)
    gens = [_generator(s) for s in seeds]
    N = len(gens)
    cum_rho = _cumulative(chain.stationary)
    cum_P = _cumulative(chain.transition)
    dtype = _state_dtype(chain.n_states)
    scalar = N == 1
    if scalar:
        cum_rho_list = cum_rho.tolist()
        cum_P_list = cum_P.tolist()
    prev = None
    done = 0
    while done < T:
        L = min(chunk, T - done)
        U = np.stack([g.random(L) for g in gens])
        out = np.empty((N, L), dtype=dtype)
        if scalar:
            u = U[0].tolist()
            row = out[0]
            j0 = 0
            if prev is None:
                prev = bisect_right(cum_rho_list, u[0])
                row[0] = prev
                j0 = 1
            for j in range(j0, L):
                prev = bisect_right(cum_P_list[prev], u[j])
                row[j] = prev
        else:
            j0 = 0
            if prev is None:
                prev = np.searchsorted(cum_rho, U[:, 0], side="right")
                out[:, 0] = prev
                j0 = 1
            for j in range(j0, L):
                prev = (cum_P[prev] <= U[:, j, None]).sum(axis=1)
                out[:, j] = prev
        done += L
        yield out


def sample_stationary_paths(chain, T, seeds):
    """``(len(seeds), T)`` array of stationary paths."""
    return np.concatenate(list(iter_path_chunks(chain, T, list(seeds))), axis=1)


def sample_stationary_path(chain, T, seed):
    """Sample ``z_1, ..., z_T`` with ``z_1 ~ rho``; a pure function of its arguments."""
    states = sample_stationary_paths(chain, T, [seed])[0]
    states.setflags(write=False)
    return PathSample(states, int(seed), chain)


def chain_to_json(chain):
    return json.dumps(
        {
            "n_states": chain.n_states,
            "transition": chain.transition.tolist(),
            "stationary": chain.stationary.tolist(),
        }
    )


def chain_from_json(text):
    doc = json.loads(text) if isinstance(text, str) else text
    try:
        return ChainModel(doc["n_states"], np.array(doc["transition"]), np.array(doc["stationary"]))
    except KeyError as exc:
        raise DomainError(f"chain document missing key {exc}") from None


_BUILDERS = {
    "two_state": build_two_state,
    "cycle_walk": build_cycle_walk,
    "renewal_tail": build_renewal_tail,
    "iid": build_iid,
    "random": random_stochastic,
}


def build_chain(kind, params):
    """Build a chain from a constructor name and keyword parameters."""
    if kind == "matrix":
        return ChainModel.from_transition(params["transition"])
    try:
        builder = _BUILDERS[kind]
    except KeyError:
        raise DomainError(f"unknown chain kind {kind!r}; expected one of {sorted(_BUILDERS) + ['matrix']}") from None
    return builder(**params)
