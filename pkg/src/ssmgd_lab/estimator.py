"""Online regularized least squares trained by the Markov chain gradient recursion."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from ._validation import check_real, check_theta

__all__ = ["SSMGDRegressor"]


class SSMGDRegressor(RegressorMixin, BaseEstimator):
    """Linear regression fitted in one pass along the sample order.

    Rows of ``X`` are consumed in order as a (possibly dependent) sample
    path.  Each row ``(x, y)`` contributes the loss
    ``0.5 ((w.x - y)^2 + lam |w|^2)`` whose gradient is ``A w + B`` with
    ``A = x x^T + lam I`` and ``B = -y x``, and the weights follow

        w_{t+1} = w_t - (A_t w_t + B_t) / (eta t^theta).

    Parameters
    ----------
    theta : float, default=0.75
        Step-size exponent in (1/2, 1].
    lam : float, default=0.1
        Ridge penalty; must be positive so each per-sample operator is
        strongly convex.
    eta : float or None, default=None
        Smoothness constant.  ``None`` uses ``max |x|^2 + lam`` over the
        first batch seen.
    n_passes : int, default=1
        Passes over the data in :meth:`fit`; the step counter keeps running.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    eta_ : float
    t_ : int
        Index of the next step.
    n_features_in_ : int
    """

    def __init__(self, theta=0.75, lam=0.1, eta=None, n_passes=1):
        self.theta = theta
        self.lam = lam
        self.eta = eta
        self.n_passes = n_passes

    def _check_params(self):
        check_theta(self.theta)
        check_real(self.lam, "lam", low=0.0, low_open=True)
        if self.eta is not None:
            check_real(self.eta, "eta", low=0.0, low_open=True)
        if int(self.n_passes) != self.n_passes or self.n_passes < 1:
            raise ValueError(f"n_passes must be a positive integer, got {self.n_passes!r}")

    def _steps(self, X, y):
        w = self.coef_
        t = self.t_
        lam = self.lam
        with np.errstate(over="ignore", invalid="ignore"):
            for x, target in zip(X, y):
                gamma = 1.0 / (self.eta_ * t**self.theta)
                w = w - gamma * (x * (x @ w - target) + lam * w)
                t += 1
        if not np.all(np.isfinite(w)):
            raise FloatingPointError("weights diverged; increase eta")
        self.coef_ = w
        self.t_ = t

    def _start(self, X):
        self.coef_ = np.zeros(X.shape[1])
        self.t_ = 1
        self.eta_ = float(self.eta) if self.eta is not None else float(np.max(np.einsum("ij,ij->i", X, X))) + self.lam

    def fit(self, X, y):
        self._check_params()
        X, y = validate_data(self, X, y, y_numeric=True, reset=True)
        self._start(X)
        for _ in range(int(self.n_passes)):
            self._steps(X, y)
        return self

    def partial_fit(self, X, y):
        """Continue the recursion from the current weights and step counter."""
        first = not hasattr(self, "coef_")
        if first:
            self._check_params()
        X, y = validate_data(self, X, y, y_numeric=True, reset=first)
        if first:
            self._start(X)
        self._steps(X, y)
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, reset=False)
        return X @ self.coef_
