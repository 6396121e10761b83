"""Monte-Carlo maximum-likelihood phase estimation from photon counts."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_count_records, check_finite_scalar, check_nonnegative
from .exceptions import ImpossibleOutcomeError
from .fisher import P_FLOOR, cfi
from .interferometer import InterferometerInput, OutputDistribution, blur_tables, output_distribution

__all__ = [
    "EstimationConfig",
    "EstimateReport",
    "PhaseLikelihood",
    "MaximumLikelihoodPhaseEstimator",
    "make_rng",
    "sample_counts",
    "ml_estimate",
    "run_trials",
]

#: one-sided default window; photon counting cannot tell theta from -theta for real inputs
DEFAULT_WINDOW = (0.0, math.pi / 4)
DEFAULT_POINTS = 512


def make_rng(seed) -> np.random.Generator:
    """Counter-based Philox generator from an int or a :class:`numpy.random.SeedSequence`."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class EstimationConfig:
    theta_true: float
    shots: int = 1000
    trials: int = 200
    theta_min: float = DEFAULT_WINDOW[0]
    theta_max: float = DEFAULT_WINDOW[1]
    points: int = DEFAULT_POINTS
    seed: int = 0
    sigma: float = 0.0

    def __post_init__(self):
        check_finite_scalar(self.theta_true, "theta_true")
        check_nonnegative(self.sigma, "sigma")
        if self.shots < 1 or self.trials < 1:
            raise ValueError("shots and trials must be positive")
        if self.points < 3:
            raise ValueError("the theta grid needs at least 3 points")
        if not self.theta_min < self.theta_max:
            raise ValueError("theta_min must be below theta_max")
        if not self.theta_min <= self.theta_true <= self.theta_max:
            raise ValueError("theta_true lies outside the estimation window")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def theta_grid(self) -> np.ndarray:
        return np.linspace(self.theta_min, self.theta_max, self.points)

    def to_dict(self):
        return {"theta_true": self.theta_true, "shots": self.shots, "trials": self.trials,
                "theta_grid": {"min": self.theta_min, "max": self.theta_max, "points": self.points},
                "seed": self.seed, "sigma": self.sigma}


@dataclass(frozen=True, eq=False)
class EstimateReport:
    config: EstimationConfig
    estimates: np.ndarray
    fisher_information: float
    extras: dict = field(default_factory=dict)

    @property
    def sample_variance(self) -> float:
        return float(np.var(self.estimates, ddof=1)) if self.estimates.size > 1 else 0.0

    @property
    def crlb_variance(self) -> float:
        if self.fisher_information <= 0:
            return math.inf
        return 1.0 / (self.config.shots * self.fisher_information)

    @property
    def ratio(self) -> float:
        return self.sample_variance / self.crlb_variance

    @property
    def mean(self) -> float:
        return float(np.mean(self.estimates))

    @property
    def bias(self) -> float:
        return self.mean - self.config.theta_true

    def to_dict(self, include_estimates: bool = True):
        out = {"config": self.config.to_dict(), "fisher_information": self.fisher_information,
               "sample_variance": self.sample_variance, "crlb_variance": self.crlb_variance,
               "ratio": self.ratio, "mean": self.mean, "bias": self.bias, **self.extras}
        if include_estimates:
            out["estimates"] = [float(x) for x in self.estimates]
        return out


def sample_counts(dist: OutputDistribution | np.ndarray, shots: int, seed) -> np.ndarray:
    """Draw ``shots`` outcomes ``(n, m)`` by inverse CDF over the flattened table."""
    probs = dist.probs if isinstance(dist, OutputDistribution) else np.asarray(dist, dtype=float)
    if probs.ndim != 2:
        raise ValueError("expected a 2-D probability table")
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError(f"distribution is not normalized (sum = {probs.sum():.12g})")
    if shots < 0:
        raise ValueError("shots must be >= 0")
    cdf = np.cumsum(probs.ravel())
    u = make_rng(seed).random(shots) * cdf[-1]
    flat = np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)
    return np.stack(np.unravel_index(flat, probs.shape), axis=1).astype(np.int64)


class PhaseLikelihood:
    """Log-probability tables ``log P(n, m | theta_k)`` on a fixed grid.

    Outcomes below ``p_floor`` get ``-inf``.  Building the table dominates the
    cost; each estimate afterwards is a gather and a sum.
    """

    def __init__(self, inp: InterferometerInput, thetas, sigma: float = 0.0,
                 p_floor: float = P_FLOOR):
        self.thetas = np.asarray(thetas, dtype=float)
        if self.thetas.ndim != 1 or self.thetas.size < 3:
            raise ValueError("the theta grid needs at least 3 points")
        self.sigma = check_nonnegative(sigma, "sigma")
        lam, vecs = inp.components
        probs = np.zeros((self.thetas.size, *inp.dims))
        for w, v in zip(lam, vecs):
            probs += w * (np.abs(inp.jy.rotate_many(v, self.thetas)) ** 2).reshape(-1, *inp.dims)
        if self.sigma > 0:
            probs = np.stack([blur_tables(p, None, self.sigma)[0] for p in probs])
        with np.errstate(divide="ignore"):
            self.log_probs = np.where(probs > p_floor, np.log(np.maximum(probs, p_floor)), -np.inf)
        self.shape = probs.shape[1:]

    def loglik(self, counts) -> np.ndarray:
        """Log-likelihood of the count records at every grid angle."""
        counts = check_count_records(counts)
        if counts.size == 0:
            return np.zeros(self.thetas.size)
        if np.any(counts[:, 0] >= self.shape[0]) or np.any(counts[:, 1] >= self.shape[1]):
            raise ImpossibleOutcomeError("count record outside the modeled photon-number range")
        outcomes, mult = np.unique(counts, axis=0, return_counts=True)
        logp = self.log_probs[:, outcomes[:, 0], outcomes[:, 1]]
        with np.errstate(invalid="ignore"):
            return np.where(np.isneginf(logp), -np.inf, logp * mult).sum(axis=1)

    def estimate(self, counts) -> float:
        ll = self.loglik(counts)
        if not np.any(np.isfinite(ll)):
            raise ImpossibleOutcomeError("the counts are impossible at every grid angle")
        best = ll.max()
        ties = np.flatnonzero(ll == best)
        mid = 0.5 * (self.thetas.size - 1)
        k = int(ties[np.argmin(np.abs(ties - mid))])
        if 0 < k < self.thetas.size - 1 and np.isfinite(ll[k - 1]) and np.isfinite(ll[k + 1]):
            curv = ll[k - 1] - 2.0 * ll[k] + ll[k + 1]
            if curv < 0:
                step = self.thetas[k + 1] - self.thetas[k]
                shift = 0.5 * (ll[k - 1] - ll[k + 1]) / curv
                return float(self.thetas[k] + np.clip(shift, -0.5, 0.5) * step)
        return float(self.thetas[k])


def ml_estimate(counts, theta_grid, inp: InterferometerInput, sigma: float = 0.0) -> float:
    """Maximum-likelihood angle on ``theta_grid`` with one parabolic refinement."""
    return PhaseLikelihood(inp, theta_grid, sigma).estimate(counts)


def run_trials(config: EstimationConfig, inp: InterferometerInput) -> EstimateReport:
    """Repeat sampling and estimation with one spawned Philox stream per trial."""
    like = PhaseLikelihood(inp, config.theta_grid, config.sigma)
    dist = output_distribution(inp, config.theta_true, config.sigma)
    streams = np.random.SeedSequence(config.seed).spawn(config.trials)
    estimates = np.array([like.estimate(sample_counts(dist, config.shots, s)) for s in streams])
    info = cfi(inp, config.theta_true, config.sigma)
    return EstimateReport(config, estimates, info)


class MaximumLikelihoodPhaseEstimator(BaseEstimator):
    """Scikit-learn style wrapper: ``fit`` on an ``(k, 2)`` array of count records.

    After fitting, ``theta_`` holds the estimate and ``loglik_`` the grid
    log-likelihood.
    """

    def __init__(self, interferometer=None, theta_min=DEFAULT_WINDOW[0],
                 theta_max=DEFAULT_WINDOW[1], points=DEFAULT_POINTS, sigma=0.0):
        self.interferometer = interferometer
        self.theta_min = theta_min
        self.theta_max = theta_max
        self.points = points
        self.sigma = sigma

    def _likelihood(self):
        key = (id(self.interferometer), self.theta_min, self.theta_max, self.points, self.sigma)
        if getattr(self, "_cache_key", None) != key:
            if not isinstance(self.interferometer, InterferometerInput):
                raise TypeError("interferometer must be an InterferometerInput")
            grid = np.linspace(self.theta_min, self.theta_max, self.points)
            self._cache = PhaseLikelihood(self.interferometer, grid, self.sigma)
            self._cache_key = key
        return self._cache

    def fit(self, X, y=None):
        like = self._likelihood()
        self.theta_ = like.estimate(X)
        self.loglik_ = like.loglik(X)
        self.n_records_ = len(check_count_records(X))
        return self

    def score(self, X, y=None) -> float:
        """Mean log-likelihood per record at the fitted angle."""
        check_is_fitted(self, "theta_")
        counts = check_count_records(X)
        dist = output_distribution(self.interferometer, self.theta_, self.sigma)
        if np.any(counts >= np.array(dist.probs.shape)):
            raise ImpossibleOutcomeError("count record outside the modeled photon-number range")
        p = dist.probs[counts[:, 0], counts[:, 1]]
        with np.errstate(divide="ignore"):
            return float(np.mean(np.log(p))) if counts.size else 0.0
