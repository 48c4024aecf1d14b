"""Per-state affine gradient oracles ``grad V_z(w) = A(z) w + B(z)``.

Two families are provided.  :class:`QuadraticFamily` lives in Euclidean
``R^d`` with symmetric positive-definite ``A(z)``.  :class:`KernelFamily`
is regularised least squares in the RKHS of a Gaussian kernel restricted to
a finite grid; functions are represented by coefficient vectors ``c`` with
``f = sum_j c_j K(x_j, .)`` and the Hilbert inner product ``<c, d> = c^T G d``.
In that representation state ``z = (x_i, y_i)`` acts through

    A(z) c = (G c)_i e_i + lam c,      B(z) = -y_i e_i,

which is the coefficient form of ``f(x) K_x + lam f - y K_x``.
"""

from dataclasses import dataclass, field
from functools import cached_property
import json

import numpy as np

from ._validation import check_distribution, check_int, check_real, readonly
from .exceptions import DimensionMismatch, DomainError, NegativeQuadraticForm, SingularSystem

__all__ = [
    "QuadraticFamily",
    "KernelFamily",
    "AssumptionCertificate",
    "gradient",
    "minimizer",
    "certify",
    "norm",
    "build_random_quadratic",
    "build_kernel_family",
    "build_family",
    "family_to_json",
    "family_from_json",
]

COND_LIMIT = 1e12
NEG_FORM_TOL = 1e-10


class _AffineFamily:
    """Shared behaviour; subclasses provide ``operators``, ``offsets`` and ``metric``."""

    metric = None

    @property
    def n_states(self):
        return self.operators.shape[0]

    @property
    def dimension(self):
        return self.operators.shape[1]

    def _check_state(self, z):
        if not 0 <= int(z) < self.n_states:
            raise DimensionMismatch(f"state {z} outside 0..{self.n_states - 1}")
        return int(z)

    def _check_point(self, w):
        w = np.asarray(w, dtype=float)
        if w.shape != (self.dimension,):
            raise DimensionMismatch(f"expected a point of shape ({self.dimension},), got {w.shape}")
        return w

    def gradient(self, z, w):
        z = self._check_state(z)
        w = self._check_point(w)
        return self.operators[z] @ w + self.offsets[z]

    def inner(self, u, v):
        u = self._check_point(u)
        v = self._check_point(v)
        if self.metric is None:
            return float(u @ v)
        return float(u @ self.metric @ v)

    def norm(self, v):
        v = self._check_point(v)
        if self.metric is None:
            return float(np.sqrt(v @ v))
        q = float(v @ self.metric @ v)
        if q < -NEG_FORM_TOL:
            raise NegativeQuadraticForm(f"c^T G c = {q:.3g} < 0")
        return float(np.sqrt(max(q, 0.0)))

    def batch_norm(self, V):
        """Norms of the rows of ``V`` (shape ``(..., d)``) in the family metric."""
        if self.metric is None:
            return np.sqrt(np.einsum("...i,...i->...", V, V))
        q = np.einsum("...i,ij,...j->...", V, self.metric, V)
        return np.sqrt(np.maximum(q, 0.0))


@dataclass(frozen=True, eq=False)
class QuadraticFamily(_AffineFamily):
    """Symmetric positive-definite ``A(z)`` (shape ``(n, d, d)``) and offsets ``B(z)`` (``(n, d)``)."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        B = np.array(self.B, dtype=float)
        if A.ndim != 3 or A.shape[1] != A.shape[2] or B.shape != A.shape[:2]:
            raise DimensionMismatch(f"incompatible shapes A{A.shape}, B{B.shape}")
        if np.abs(A - A.transpose(0, 2, 1)).max() > 1e-12:
            raise DomainError("A(z) must be symmetric within 1e-12")
        if np.linalg.eigvalsh(A).min() <= 0:
            raise DomainError("A(z) must be positive definite")
        object.__setattr__(self, "A", readonly(A))
        object.__setattr__(self, "B", readonly(B))

    @property
    def operators(self):
        return self.A

    @property
    def offsets(self):
        return self.B

    def value(self, z, w):
        """``V_z(w) = 0.5 <A(z) w, w> + <B(z), w>`` (constant term fixed at 0)."""
        z = self._check_state(z)
        w = self._check_point(w)
        return float(0.5 * w @ self.A[z] @ w + self.B[z] @ w)

    def spectral_bounds(self):
        ev = np.linalg.eigvalsh(self.A)
        return float(ev.min()), float(ev.max())


@dataclass(frozen=True, eq=False)
class KernelFamily(_AffineFamily):
    """Gaussian-kernel regularised least squares on a finite grid.

    State ``i`` is the pair ``(grid[i], labels[i])``.
    """

    grid: np.ndarray
    bandwidth: float
    lam: float
    labels: np.ndarray
    gram: np.ndarray = field(default=None)

    def __post_init__(self):
        grid = readonly(self.grid)
        labels = readonly(self.labels)
        if grid.ndim != 1 or labels.shape != grid.shape:
            raise DimensionMismatch("grid and labels must be 1-d arrays of equal length")
        bw = check_real(self.bandwidth, "bandwidth", low=0.0, low_open=True)
        lam = check_real(self.lam, "lam", low=0.0, low_open=True)
        gram = gaussian_gram(grid, bw) if self.gram is None else np.array(self.gram, dtype=float)
        if gram.shape != (grid.size, grid.size):
            raise DimensionMismatch(f"gram shape {gram.shape} does not match grid of size {grid.size}")
        if np.abs(gram - gram.T).max() > 1e-10 or np.linalg.eigvalsh(gram).min() < -1e-10:
            raise DomainError("gram matrix must be symmetric positive semidefinite")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "bandwidth", bw)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "gram", readonly(gram))

    @property
    def metric(self):
        return self.gram

    @cached_property
    def operators(self):
        m = self.grid.size
        A = np.zeros((m, m, m))
        idx = np.arange(m)
        A[idx, idx, :] = self.gram
        A += self.lam * np.eye(m)
        A.setflags(write=False)
        return A

    @cached_property
    def offsets(self):
        B = -np.diag(self.labels)
        B.setflags(write=False)
        return B

    def gradient(self, z, w):
        # cheap form: (f(x_z) - y_z) e_z + lam c
        z = self._check_state(z)
        c = self._check_point(w)
        g = self.lam * c
        g[z] += self.gram[z] @ c - self.labels[z]
        return g

    def evaluate(self, c, x=None):
        """Values of ``f = sum_j c_j K(x_j, .)`` at ``x`` (default: the grid)."""
        c = self._check_point(c)
        if x is None:
            return self.gram @ c
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return _gaussian(x[:, None], self.grid[None, :], self.bandwidth) @ c

    def value(self, z, w):
        """``V_z(f) = 0.5 ((f(x_z) - y_z)^2 + lam ||f||_K^2)``."""
        z = self._check_state(z)
        c = self._check_point(w)
        resid = self.gram[z] @ c - self.labels[z]
        return float(0.5 * (resid**2 + self.lam * (c @ self.gram @ c)))


def _gaussian(x, y, bandwidth):
    return np.exp(-((x - y) ** 2) / (2.0 * bandwidth**2))


def gaussian_gram(grid, bandwidth):
    grid = np.asarray(grid, dtype=float)
    G = _gaussian(grid[:, None], grid[None, :], bandwidth)
    return 0.5 * (G + G.T)


@dataclass(frozen=True)
class AssumptionCertificate:
    """Measured noise level at the optimum and curvature bounds of a family."""

    sigma2: float
    kappa: float
    eta: float
    alpha: float
    mean_gradient_norm: float

    def to_dict(self):
        return {
            "sigma2": self.sigma2,
            "kappa": self.kappa,
            "eta": self.eta,
            "alpha": self.alpha,
            "mean_gradient_norm": self.mean_gradient_norm,
        }


def gradient(family, z, w):
    """``A(z) w + B(z)``; for a :class:`KernelFamily` in coefficient form."""
    return family.gradient(z, w)


def norm(family, v):
    """Euclidean norm, or the RKHS norm ``sqrt(c^T G c)`` for kernel families."""
    return family.norm(v)


def _weights(rho, n):
    if hasattr(rho, "stationary"):
        rho = rho.stationary
    rho = check_distribution(rho, "rho")
    if rho.size != n:
        raise DimensionMismatch(f"distribution has {rho.size} entries, family has {n} states")
    return rho


def averaged_system(family, rho):
    """``(A_hat, B_hat)``: the ``rho``-averages of ``A(z)`` and ``B(z)``."""
    rho = _weights(rho, family.n_states)
    A_hat = np.einsum("z,zij->ij", rho, family.operators)
    B_hat = rho @ family.offsets
    return A_hat, B_hat


def minimizer(family, rho):
    """Solve ``A_hat w + B_hat = 0``.

    ``rho`` may be a distribution or a :class:`~ssmgd_lab.chains.ChainModel`.

    Raises
    ------
    SingularSystem
        If the condition number of ``A_hat`` exceeds 1e12 or the solve is
        inaccurate.
    """
    A_hat, B_hat = averaged_system(family, rho)
    cond = np.linalg.cond(A_hat)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularSystem(f"averaged operator has condition number {cond:.3g}")
    w = np.linalg.solve(A_hat, -B_hat)
    resid = np.linalg.norm(A_hat @ w + B_hat)
    if resid > 1e-10 * max(1.0, np.linalg.norm(B_hat)):
        raise SingularSystem(f"minimizer residual {resid:.3g} too large")
    return w


def certify(family, rho):
    """Measure the constants of the noise and curvature assumptions.

    ``sigma2`` is the largest squared gradient norm at the minimizer over
    states of positive mass, in the family metric.  For a kernel family the
    spectrum of each ``A(z)`` is ``{lam, K(x,x) + lam}``, so ``kappa = lam``
    and ``eta = max K(x,x) + lam``.
    """
    rho = _weights(rho, family.n_states)
    w_star = minimizer(family, rho)
    grads = np.einsum("zij,j->zi", family.operators, w_star) + family.offsets
    sq = family.batch_norm(grads) ** 2
    sigma2 = float(sq[rho > 0].max())
    if isinstance(family, KernelFamily):
        kappa = family.lam
        eta = float(np.diag(family.gram).max()) + family.lam
    else:
        kappa, eta = family.spectral_bounds()
    mean_grad = float(family.batch_norm(rho @ grads))
    return AssumptionCertificate(sigma2, kappa, eta, kappa / eta, mean_grad)


def _random_orthogonal(rng, d):
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    return Q * np.sign(np.diag(R))


def build_random_quadratic(d, n_states, kappa_target, eta_target, noise_scale, seed):
    """Random family whose certificate has exactly the requested ``kappa`` and ``eta``.

    Each ``A(z) = Q^T diag(lambda) Q`` with a random orthogonal ``Q`` and
    eigenvalues uniform in ``[kappa, eta]``; state 0 carries ``kappa`` and
    the last state carries ``eta`` so both endpoints are attained.  Offsets
    are ``B(z) = -A(z) w_c + noise_scale * xi_z`` with Gaussian ``w_c`` and
    ``xi_z``, hence ``noise_scale = 0`` gives a noiseless optimum.
    """
    d = check_int(d, "d", low=1)
    n = check_int(n_states, "n_states", low=1)
    kappa = check_real(kappa_target, "kappa_target", low=0.0, low_open=True)
    eta = check_real(eta_target, "eta_target", low=kappa)
    noise_scale = check_real(noise_scale, "noise_scale", low=0.0)
    if d == 1 and n == 1 and kappa != eta:
        raise DomainError("a single one-dimensional state cannot attain distinct kappa and eta")
    rng = np.random.default_rng(seed)
    A = np.empty((n, d, d))
    for z in range(n):
        lam = np.sort(rng.uniform(kappa, eta, size=d))
        if z == 0:
            lam[0] = kappa
        if z == n - 1:
            lam[-1] = eta
        Q = _random_orthogonal(rng, d)
        Az = Q.T @ np.diag(lam) @ Q
        A[z] = 0.5 * (Az + Az.T)
    w_c = rng.standard_normal(d)
    xi = rng.standard_normal((n, d))
    B = -np.einsum("zij,j->zi", A, w_c) + noise_scale * xi
    return QuadraticFamily(A, B)


def _label_values(label_rule, grid, rng, noise):
    if callable(label_rule):
        return np.asarray(label_rule(grid, rng), dtype=float)
    if label_rule == "zero":
        return np.zeros_like(grid)
    if label_rule == "sine":
        eps = noise * rng.standard_normal(grid.size)
        return np.sin(2 * np.pi * grid) + (eps - eps.mean())
    raise DomainError(f"unknown label rule {label_rule!r}")


def build_kernel_family(m, bandwidth, lam, label_rule="sine", seed=0, noise=0.1):
    """Gaussian-kernel family on the uniform grid of ``m`` points in [0, 1].

    ``label_rule`` is ``"sine"`` (``sin(2 pi x)`` plus centred Gaussian
    noise of scale ``noise``), ``"zero"``, or a callable ``(grid, rng) -> y``.
    """
    m = check_int(m, "m", low=2)
    check_real(bandwidth, "bandwidth", low=0.0, low_open=True)
    check_real(lam, "lam", low=0.0, low_open=True)
    rng = np.random.default_rng(seed)
    grid = np.linspace(0.0, 1.0, m)
    labels = _label_values(label_rule, grid, rng, float(noise))
    return KernelFamily(grid, bandwidth, lam, labels)


def build_family(kind, params, n_states=None):
    """Build a family from a config entry; ``n_states`` defaults from the chain."""
    params = dict(params)
    if kind == "random_quadratic":
        params.setdefault("n_states", n_states)
        family = build_random_quadratic(**params)
    elif kind == "kernel":
        params.setdefault("m", n_states)
        family = build_kernel_family(**params)
    else:
        raise DomainError(f"unknown family kind {kind!r}")
    if n_states is not None and family.n_states != n_states:
        raise DimensionMismatch(f"family has {family.n_states} states but the chain has {n_states}")
    return family


def family_to_json(family):
    if isinstance(family, KernelFamily):
        doc = {
            "kind": "kernel",
            "grid": family.grid.tolist(),
            "bandwidth": family.bandwidth,
            "lam": family.lam,
            "labels": family.labels.tolist(),
            "gram": family.gram.tolist(),
        }
    else:
        doc = {"kind": "quadratic", "A": family.A.tolist(), "B": family.B.tolist()}
    return json.dumps(doc)


def family_from_json(text):
    doc = json.loads(text) if isinstance(text, str) else text
    kind = doc.get("kind")
    if kind == "kernel":
        return KernelFamily(
            np.array(doc["grid"]), doc["bandwidth"], doc["lam"], np.array(doc["labels"]), np.array(doc["gram"])
        )
    if kind == "quadratic":
        return QuadraticFamily(np.array(doc["A"]), np.array(doc["B"]))
    raise DomainError(f"unknown family kind {kind!r}")
