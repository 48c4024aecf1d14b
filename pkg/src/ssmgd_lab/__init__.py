"""Strictly stationary Markov chain gradient descent on quadratic families.

Modules
-------
chains
    Finite chains, stationary laws and seeded stationary path sampling.
mixing
    Exact phi/beta mixing coefficients and envelope fits.
oracle
    Quadratic and kernel families, minimizers and assumption certificates.
ssmgd
    The recursion with its initial/sampling error decomposition.
bounds
    Closed-form error bounds and coefficient inequalities.
lab
    Monte Carlo harness, coverage, rate fits and lemma audits.
"""

from .bounds import BoundParams, bound_report, init_bound, samp_bound_exp_phi, samp_bound_generic, samp_bound_theta1
from .chains import (
    ChainModel,
    PathSample,
    build_chain,
    build_cycle_walk,
    build_iid,
    build_renewal_tail,
    build_two_state,
    random_stochastic,
    sample_stationary_path,
    stationary_distribution,
)
from .estimator import SSMGDRegressor
from .exceptions import (
    ConfigError,
    DimensionMismatch,
    DomainError,
    FitError,
    NegativeQuadraticForm,
    NonFinite,
    NonStochastic,
    NoUniqueStationary,
    SingularSystem,
    SSMGDError,
)
from .lab import ExperimentConfig, coverage, monte_carlo, rate_fit, run_experiment, verify_lemmas
from .mixing import fit_exponential_envelope, fit_polynomial_envelope, mixing_profile
from .oracle import KernelFamily, QuadraticFamily, build_kernel_family, build_random_quadratic, certify, minimizer
from .ssmgd import Schedule, run, run_decomposed

__version__ = "0.1.0"
