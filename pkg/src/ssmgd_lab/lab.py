"""Experiment harness: Monte Carlo trials, coverage, rate fits and lemma audits."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import json
import logging
import math
import os

import numpy as np

from . import bounds as bd
from ._validation import check_delta, check_int, check_theta
from .chains import build_chain, build_renewal_tail, trial_seed
from .exceptions import ConfigError, DimensionMismatch, DomainError, FitError, NonFinite, SSMGDError
from .mixing import fit_exponential_envelope, fit_polynomial_envelope, mixing_profile
from .oracle import build_family, certify, minimizer
from .ssmgd import Schedule, check_checkpoints, run_batch

__all__ = [
    "ExperimentConfig",
    "QuantileCurve",
    "RateFit",
    "CoverageReport",
    "MonteCarloResult",
    "LemmaAudit",
    "monte_carlo",
    "theoretical_bounds",
    "coverage",
    "rate_fit",
    "verify_lemmas",
    "sweep",
    "run_experiment",
    "thread_count",
]

log = logging.getLogger(__name__)

BATCH_SIZE = 250
DEFAULT_RATE_RANGE = (1e3, 1e5)
SLOPE_TOLERANCE = 0.15
LEMMA_SLACK = 1e-12


def thread_count():
    """Worker threads for trial batches; capped by ``SSMGD_THREADS``."""
    default = os.cpu_count() or 1
    raw = os.environ.get("SSMGD_THREADS")
    if raw is None:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"SSMGD_THREADS must be an integer, got {raw!r}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    chain: dict
    family: dict
    theta: float = 0.75
    horizon: int = 10_000
    trials: int = 100
    delta: float = 0.1
    seed: int = 0
    checkpoints: tuple = None
    variant: str = "conservative"
    formula: str = None
    w1: object = "zeros"
    mixing_horizon: int = 200
    rate_range: tuple = DEFAULT_RATE_RANGE
    output: str = None

    def __post_init__(self):
        for key in ("chain", "family"):
            spec = getattr(self, key)
            if not isinstance(spec, dict) or "kind" not in spec:
                raise ConfigError(f"{key} must be an object with a 'kind' key")
            if not isinstance(spec.get("params", {}), dict):
                raise ConfigError(f"{key}.params must be an object")
        try:
            theta = check_theta(self.theta)
            delta = check_delta(self.delta)
            horizon = check_int(self.horizon, "horizon", low=1)
            trials = check_int(self.trials, "trials", low=1)
            seed = check_int(self.seed, "seed")
            mixing_horizon = check_int(self.mixing_horizon, "mixing_horizon", low=2)
            cp = check_checkpoints(self.checkpoints, horizon)
        except DomainError as exc:
            raise ConfigError(str(exc)) from None
        if self.variant not in bd.VARIANTS:
            raise ConfigError(f"variant must be one of {bd.VARIANTS}")
        if self.formula is not None and self.formula not in bd.FORMULAS:
            raise ConfigError(f"formula must be one of {bd.FORMULAS}")
        if len(self.rate_range) != 2 or not 0 < self.rate_range[0] < self.rate_range[1]:
            raise ConfigError("rate_range must be [t_lo, t_hi] with 0 < t_lo < t_hi")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "horizon", horizon)
        object.__setattr__(self, "trials", trials)
        object.__setattr__(self, "seed", seed)
        object.__setattr__(self, "mixing_horizon", mixing_horizon)
        object.__setattr__(self, "checkpoints", tuple(int(t) for t in cp))
        object.__setattr__(self, "rate_range", tuple(float(x) for x in self.rate_range))

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("configuration must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        for key in ("chain", "family"):
            if key not in doc:
                raise ConfigError(f"configuration is missing '{key}'")
        doc = dict(doc)
        if doc.get("checkpoints") is not None:
            doc["checkpoints"] = tuple(doc["checkpoints"])
        if "rate_range" in doc:
            doc["rate_range"] = tuple(doc["rate_range"])
        return cls(**doc)

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(doc)

    def with_overrides(self, **kwargs):
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        if "horizon" in kwargs and "checkpoints" not in kwargs:
            kwargs["checkpoints"] = None
        return replace(self, **kwargs)

    def build(self):
        """Instantiate ``(chain, family)``; construction errors become :class:`ConfigError`."""
        try:
            chain = build_chain(self.chain["kind"], self.chain.get("params", {}))
            family = build_family(self.family["kind"], self.family.get("params", {}), chain.n_states)
        except (SSMGDError, TypeError) as exc:
            raise ConfigError(f"cannot build experiment: {exc}") from None
        return chain, family

    def initial_point(self, family, w_star):
        if isinstance(self.w1, str):
            if self.w1 == "zeros":
                return np.zeros(family.dimension)
            if self.w1 == "optimum":
                return np.array(w_star, dtype=float)
            raise ConfigError(f"w1 must be 'zeros', 'optimum' or a list, got {self.w1!r}")
        w1 = np.asarray(self.w1, dtype=float)
        if w1.shape != (family.dimension,):
            raise ConfigError(f"w1 must have length {family.dimension}")
        return w1


@dataclass(frozen=True, eq=False)
class QuantileCurve:
    """Per-checkpoint median, ``(1-delta)``-quantile and mean of each error series."""

    checkpoints: np.ndarray
    delta: float
    median: dict
    quantile: dict
    mean: dict


def quantile_curve(per_trial, checkpoints, delta):
    median, quant, mean = {}, {}, {}
    for name, values in per_trial.items():
        median[name] = np.median(values, axis=0)
        quant[name] = np.quantile(values, 1.0 - delta, axis=0)
        mean[name] = values.mean(axis=0)
    return QuantileCurve(np.asarray(checkpoints), delta, median, quant, mean)


@dataclass(frozen=True, eq=False)
class MonteCarloResult:
    config: ExperimentConfig
    checkpoints: np.ndarray
    curve: QuantileCurve
    per_trial: dict
    certificate: object
    w_star: np.ndarray
    w1: np.ndarray

    @property
    def samp2(self):
        return self.per_trial["samp_err2"]


def _run_trials(family, chain, config, schedule, w1, w_star, checkpoints, threads):
    seeds = [trial_seed(config.seed, i) for i in range(config.trials)]
    starts = list(range(0, config.trials, BATCH_SIZE))

    def work(start):
        try:
            return run_batch(family, chain, config.horizon, seeds[start : start + BATCH_SIZE], schedule, w1, checkpoints, w_star)
        except NonFinite as exc:
            trial = None if exc.trial is None else start + exc.trial
            raise NonFinite(f"trial {trial}: {exc}", t=exc.t, trial=trial) from None

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(s) for s in starts]
    # single-owner reduction, in trial order
    return {key: np.concatenate([p[key] for p in parts]) for key in ("total_err", "init_err", "samp_err", "residual")}


def monte_carlo(config, threads=None):
    """Run ``config.trials`` independent trials and aggregate them.

    Trial ``i`` samples its path from the seed ``trial_seed(config.seed, i)``,
    so the output does not depend on ``threads`` or on batching.

    Returns
    -------
    MonteCarloResult
        Quantile curves plus per-trial ``total_err``, ``init_err``,
        ``samp_err``, ``samp_err2`` and ``residual`` arrays of shape
        ``(trials, len(checkpoints))``.
    """
    chain, family = config.build()
    try:
        certificate = certify(family, chain)
    except SSMGDError as exc:
        raise ConfigError(f"cannot certify family: {exc}") from None
    w_star = minimizer(family, chain)
    w1 = config.initial_point(family, w_star)
    schedule = Schedule(config.theta, certificate.eta)
    cp = np.asarray(config.checkpoints, dtype=np.int64)
    per_trial = _run_trials(family, chain, config, schedule, w1, w_star, cp, threads or thread_count())
    per_trial["samp_err2"] = per_trial["samp_err"] ** 2
    stats = {k: per_trial[k] for k in ("total_err", "init_err", "samp_err", "samp_err2")}
    curve = quantile_curve(stats, cp, config.delta)
    return MonteCarloResult(config, cp, curve, per_trial, certificate, w_star, w1)


def default_formula(config):
    return "prop-theta1" if config.theta == 1.0 else "thm1-phi"


def theoretical_bounds(config, chain, certificate, r1_norm, formula=None):
    """Bound curves for ``config`` at its checkpoints.

    Returns ``(report, envelope)`` where ``envelope`` is whatever the formula
    consumed (fitted envelope or exact partial sums).
    """
    formula = formula or config.formula or default_formula(config)
    cp = np.asarray(config.checkpoints, dtype=np.int64)
    if formula == "generic-partial-sum":
        profile = mixing_profile(chain, int(cp.max()))
        envelope = np.cumsum(profile.phi)
    else:
        profile = mixing_profile(chain, config.mixing_horizon)
        if formula == "thm-beta":
            envelope = fit_exponential_envelope(profile.beta)
        elif formula == "poly-rate":
            envelope = fit_polynomial_envelope(profile.phi)
        else:
            envelope = fit_exponential_envelope(profile.phi)
    params = bd.BoundParams(config.theta, certificate.alpha, certificate.sigma2, certificate.eta, config.delta, envelope)
    report = bd.bound_report(params, cp, formula, config.variant, r1_norm)
    return report, envelope


@dataclass(frozen=True, eq=False)
class CoverageReport:
    checkpoints: np.ndarray
    fraction: np.ndarray
    delta: float
    variant: str = None
    formula: str = None

    @property
    def target(self):
        return 1.0 - self.delta

    @property
    def holds(self):
        return bool(np.all(self.fraction >= self.target))


def coverage(samp2, bound, delta, checkpoints=None, variant=None, formula=None):
    """Fraction of trials with ``samp_err^2 <= bound`` at each checkpoint."""
    samp2 = np.atleast_2d(np.asarray(samp2, dtype=float))
    bound = np.asarray(bound, dtype=float)
    if bound.ndim != 1 or samp2.shape[1] != bound.size:
        raise DimensionMismatch(f"{samp2.shape[1]} checkpoints of samples vs {bound.size} bound values")
    if checkpoints is not None and len(checkpoints) != bound.size:
        raise DimensionMismatch("checkpoints do not align with bound values")
    frac = (samp2 <= bound[None, :]).mean(axis=0)
    cp = np.arange(1, bound.size + 1) if checkpoints is None else np.asarray(checkpoints)
    return CoverageReport(cp, frac, float(delta), variant, formula)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    t_lo: float
    t_hi: float
    n_points: int


def rate_fit(values, t, t_range=DEFAULT_RATE_RANGE):
    """Least-squares slope of ``log(values)`` on ``log(t)`` over ``t_range``.

    Raises
    ------
    FitError
        With fewer than 3 points in range or a nonpositive value there.
    """
    values = np.asarray(values, dtype=float)
    t = np.asarray(t, dtype=float)
    if values.shape != t.shape:
        raise DimensionMismatch("values and t must have the same shape")
    lo, hi = t_range
    mask = (t >= lo) & (t <= hi)
    if mask.sum() < 3:
        raise FitError(f"need at least 3 checkpoints in [{lo:g}, {hi:g}], found {int(mask.sum())}")
    v = values[mask]
    if np.any(~(v > 0)) or not np.all(np.isfinite(v)):
        raise FitError("rate fit needs positive finite values")
    x = np.log(t[mask])
    y = np.log(v)
    slope, intercept = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot <= 1e-30 * max(1.0, float(np.sum(y**2))) else max(0.0, 1.0 - ss_res / ss_tot)
    return RateFit(float(slope), float(intercept), r2, float(t[mask][0]), float(t[mask][-1]), int(mask.sum()))


# --- lemma audits -------------------------------------------------------------

DEFAULT_THETAS = (0.55, 0.65, 0.75, 0.85, 0.95, 1.0)
DEFAULT_ALPHAS = (0.1, 0.2, 0.25, 0.3, 0.4, 0.5, 0.6, 0.7, 0.75, 0.8, 0.9, 1.0)
DEFAULT_T_GRID = (1, 2, 5, 10, 100, 1000, 10_000)


@dataclass(frozen=True)
class LemmaGrid:
    thetas: tuple = DEFAULT_THETAS
    alphas: tuple = DEFAULT_ALPHAS
    t_max: int = 10_000
    t_grid: tuple = DEFAULT_T_GRID


@dataclass
class LemmaSummary:
    lemma: str
    variant: str
    asserted: bool
    checked: int = 0
    violations: int = 0
    max_excess: float = 0.0
    worst: tuple = None

    def add(self, excess, where):
        self.checked += excess.size
        bad = excess > 0
        self.violations += int(bad.sum())
        if excess.size and excess.max() > self.max_excess:
            j = int(np.argmax(excess))
            self.max_excess = float(excess[j])
            self.worst = where(j)


@dataclass(frozen=True, eq=False)
class LemmaAudit:
    rows: list
    summaries: list = field(default_factory=list)

    @property
    def asserted_ok(self):
        return all(s.violations == 0 for s in self.summaries if s.asserted)

    def summary(self, lemma, variant):
        for s in self.summaries:
            if s.lemma == lemma and s.variant == variant:
                return s
        raise KeyError((lemma, variant))


def _excess(exact, bound):
    """How far ``exact`` exceeds ``bound`` beyond the absolute slack (<= 0 when it holds)."""
    return exact - bound - LEMMA_SLACK


def _row(lemma, variant, theta, alpha, i, t, exact, bound):
    return {
        "lemma": lemma,
        "variant": variant,
        "theta": theta,
        "alpha": alpha,
        "i": i,
        "t": t,
        "exact": float(exact),
        "bound": float(bound),
        "holds": bool(exact <= bound + LEMMA_SLACK),
    }


def _audit_psi(grid, rows, summary):
    for theta in grid.thetas:
        for alpha in grid.alphas:
            seq = bd.psi_exact_sequence(grid.t_max, alpha, theta)
            t = np.arange(1, grid.t_max + 1)
            bnd = bd.psi_bound(t, alpha, theta)
            summary.add(_excess(seq, bnd), lambda j: (theta, alpha, None, int(t[j])))
            for tt in grid.t_grid:
                if tt <= grid.t_max:
                    rows.append(_row("smale2", "paper", theta, alpha, None, tt, bd.psi_exact(tt, alpha, theta), bd.psi_bound(tt, alpha, theta)))


def _audit_weighted(grid, rows, summary):
    for alpha in grid.alphas:
        seq = bd.weighted_sum_sequence(grid.t_max, alpha)
        t = np.arange(1, grid.t_max + 1)
        bnd = bd.weighted_sum_bound(t, alpha)
        summary.add(_excess(seq, bnd), lambda j: (None, alpha, None, int(t[j])))
        for tt in grid.t_grid:
            if tt <= grid.t_max:
                rows.append(_row("myineq", "paper", None, alpha, None, tt, bd.weighted_sum_exact(tt, alpha), bd.weighted_sum_bound(tt, alpha)))


def _worst_product_pairs(t_max, alpha, theta, variant):
    """For each ``t`` in 1..t_max, the ``i < t`` maximising exact/bound for the product lemma.

    With ``Lt(i) = sum_{k=2}^i log(1 - alpha/k^theta)`` (and the k=1 factor
    folded into ``i = 0``) the log-ratio of exact to bound for the pair
    ``(i, t)`` is ``F(t) - F(i)`` with ``F(i) = Lt(i) + c G(i+1)``; the worst
    ``i`` is therefore the running argmin of ``F``.
    """
    k = np.arange(2, t_max + 1, dtype=float)
    with np.errstate(divide="ignore"):
        head = -math.log1p(-alpha) if alpha < 1 else math.inf
    Lt = np.concatenate([[head, 0.0], np.cumsum(np.log1p(-alpha / k**theta))])
    x = np.arange(1, t_max + 2, dtype=float)
    if theta == 1.0:
        c, G = alpha, np.log(x)
    else:
        c = (2.0 if variant == "paper" else 1.0) * alpha / (1.0 - theta)
        G = x ** (1.0 - theta)
    F = Lt + c * G
    run_min = np.minimum.accumulate(F)
    idx = np.where(F == run_min, np.arange(F.size), 0)
    run_arg = np.maximum.accumulate(idx)
    t = np.arange(1, t_max + 1)
    i_star = run_arg[t - 1]
    with np.errstate(invalid="ignore", over="ignore"):
        log_exact = Lt[t] - Lt[i_star]
        exact = np.where(np.isfinite(Lt[i_star]), np.exp(log_exact), 0.0)
        bound = np.exp(c * (G[i_star] - G[t]))
    return t, i_star, exact, bound


def _audit_product(grid, rows, summaries):
    for variant in bd.VARIANTS:
        summary = summaries[variant]
        for theta in grid.thetas:
            for alpha in grid.alphas:
                t, i_star, exact, bound = _worst_product_pairs(grid.t_max, alpha, theta, variant)
                excess = exact - bound - LEMMA_SLACK * (1.0 + bound)
                summary.add(excess, lambda j: (theta, alpha, int(i_star[j]), int(t[j])))
                pairs = []
                for tt in grid.t_grid:
                    if tt <= grid.t_max:
                        pairs += [(i, tt) for i in sorted({0, 1, tt // 2, tt - 1}) if i < tt]
                j = int(np.argmax(exact - bound))
                if (int(i_star[j]), int(t[j])) not in pairs:
                    pairs.append((int(i_star[j]), int(t[j])))
                for i, tt in pairs:
                    rows.append(
                        _row("smale1", variant, theta, alpha, i, tt, bd.product_exact(i, tt, alpha, theta), bd.product_bound(i, tt, alpha, theta, variant))
                    )


def verify_lemmas(grid=None):
    """Evaluate every coefficient inequality over a grid.

    The three audited inequalities are the product estimate (``"smale1"``,
    both variants, every pair ``0 <= i < t <= t_max`` via its worst ``i``),
    the ``psi`` bound (``"smale2"``) and the weighted-sum bound
    (``"myineq"``), each for every ``t <= t_max``.  Only the paper variant
    of the product estimate is reported without being asserted.

    Returns
    -------
    LemmaAudit
        ``rows`` hold directly evaluated ``(exact, bound)`` pairs on
        ``grid.t_grid`` plus the worst pair of each product audit;
        ``summaries`` count violations over the full range.
    """
    grid = grid or LemmaGrid()
    rows = []
    product = {v: LemmaSummary("smale1", v, asserted=v == "conservative") for v in bd.VARIANTS}
    psi = LemmaSummary("smale2", "paper", asserted=True)
    weighted = LemmaSummary("myineq", "paper", asserted=True)
    _audit_product(grid, rows, product)
    _audit_psi(grid, rows, psi)
    _audit_weighted(grid, rows, weighted)
    return LemmaAudit(rows, [product["paper"], product["conservative"], psi, weighted])


# --- experiments --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    monte_carlo: MonteCarloResult
    bounds: object
    envelope: object
    coverage: CoverageReport

    def csv_rows(self):
        mc = self.monte_carlo
        c = mc.curve
        for j, t in enumerate(mc.checkpoints):
            yield {
                "t": int(t),
                "median_err": c.median["total_err"][j],
                "q_err": c.quantile["total_err"][j],
                "mean_err": c.mean["total_err"][j],
                "median_samp2": c.median["samp_err2"][j],
                "q_samp2": c.quantile["samp_err2"][j],
                "init_bound": self.bounds.init_bound[j],
                "samp_bound": self.bounds.samp_bound_sq[j],
                "coverage": self.coverage.fraction[j],
            }


MONTE_CARLO_COLUMNS = ("t", "median_err", "q_err", "mean_err", "median_samp2", "q_samp2", "init_bound", "samp_bound", "coverage")


def run_experiment(config, threads=None, formula=None):
    """Monte Carlo trials plus the matching bound curve and its coverage."""
    mc = monte_carlo(config, threads)
    chain, family = config.build()
    r1 = family.norm(mc.w1 - mc.w_star)
    report, envelope = theoretical_bounds(config, chain, mc.certificate, r1, formula)
    cov = coverage(mc.samp2, report.samp_bound_sq, config.delta, mc.checkpoints, report.variant, report.formula)
    return ExperimentResult(mc, report, envelope, cov)


def sweep(config, thetas=(), ks=(), renewal_states=50, threads=None):
    """Fit empirical rates over a grid of step exponents and polynomial mixing orders.

    Each ``theta`` reruns ``config`` with that exponent.  Each ``k`` swaps in
    a renewal chain of order ``k`` (and a family with matching state count)
    and compares with the predicted polynomial-regime exponent.
    """
    rows = []
    for theta in thetas:
        cfg = config.with_overrides(theta=theta)
        mc = monte_carlo(cfg, threads)
        predicted = -mc.certificate.alpha / 2 if theta == 1.0 else -theta / 2
        rows.append(_sweep_row("theta", theta, None, predicted, False, mc, cfg))
    for k in ks:
        build_renewal_tail(k, renewal_states)
        family = dict(config.family)
        params = dict(family.get("params", {}))
        params.pop("n_states", None)
        params.pop("m", None)
        family["params"] = params
        cfg = replace(config, chain={"kind": "renewal_tail", "params": {"k": k, "M": renewal_states}}, family=family)
        mc = monte_carlo(cfg, threads)
        predicted, log_factor = bd.poly_rate_exponent(cfg.theta, k)
        rows.append(_sweep_row("k", cfg.theta, k, predicted, log_factor, mc, cfg))
    return rows


def _sweep_row(kind, theta, k, predicted, log_factor, mc, cfg):
    try:
        fit = rate_fit(mc.curve.median["total_err"], mc.checkpoints, cfg.rate_range)
        slope, intercept, r2 = fit.slope, fit.intercept, fit.r_squared
    except FitError as exc:
        log.warning("rate fit failed for %s=%s: %s", kind, theta if k is None else k, exc)
        slope = intercept = r2 = math.nan
    return {
        "sweep": kind,
        "theta": theta,
        "k": "" if k is None else k,
        "predicted_exponent": predicted,
        "log_factor": log_factor,
        "fitted_slope": slope,
        "intercept": intercept,
        "r_squared": r2,
    }
