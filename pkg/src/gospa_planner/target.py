"""Bernoulli target over weighted Dirac hypotheses and its ELPF update."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from .errors import ConfigError, DegeneratePosteriorError
from .sensor import Action, MeasurementScan, SensorModel, in_fov_mask

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class BernoulliDiracPrior:
    """Existence probability ``r`` and hypotheses ``(weights[i], points[i])``.

    Hypothesis index ``i`` in the public functions runs over 0..n, where
    0 is "no target" and ``i >= 1`` refers to ``points[i - 1]``.
    """

    r: float
    weights: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        x = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if len(w) == 0:
            raise ConfigError("at least one hypothesis is required")
        if len(w) != len(x):
            raise ConfigError("weights and points differ in length")
        if not 0.0 <= self.r <= 1.0:
            raise ConfigError(f"existence probability must lie in [0, 1], got {self.r}")
        if np.any(w <= 0):
            raise ConfigError("hypothesis weights must be strictly positive")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ConfigError(f"hypothesis weights sum to {w.sum():.15g}, not 1")
        w.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "points", x)

    @classmethod
    def from_hypotheses(cls, r: float, hypotheses: Sequence[tuple[float, Sequence[float]]]):
        return cls(r, [h[0] for h in hypotheses], [h[1] for h in hypotheses])

    @classmethod
    def uniform(cls, r: float, points) -> "BernoulliDiracPrior":
        x = np.asarray(points, dtype=float).reshape(-1, 2)
        return cls(r, np.full(len(x), 1.0 / len(x)), x)

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def probabilities(self) -> np.ndarray:
        """Prior masses for i = 0..n."""
        return np.concatenate([[1.0 - self.r], self.r * self.weights])


@dataclass(frozen=True)
class PosteriorState:
    p_hyp: np.ndarray
    w_post: np.ndarray
    estimate_e: np.ndarray
    points: np.ndarray

    @property
    def p0(self) -> float:
        return float(self.p_hyp[0])

    @property
    def n(self) -> int:
        return len(self.w_post)


def prior_probability(prior: BernoulliDiracPrior, i: int) -> float:
    if not 0 <= i <= prior.n:
        raise IndexError(f"hypothesis index {i} outside 0..{prior.n}")
    if i == 0:
        return 1.0 - prior.r
    return prior.r * float(prior.weights[i - 1])


def elpf_loglik(scan: MeasurementScan, action: Action, sensor: SensorModel,
                prior: BernoulliDiracPrior) -> np.ndarray:
    """Log ELPF likelihood of ``scan`` for every hypothesis i = 0..n."""
    visible = np.concatenate([[False], in_fov_mask(prior.points, action, sensor)])
    out = np.zeros(prior.n + 1)
    if len(scan) == 0:
        with np.errstate(divide="ignore"):
            out[visible] = np.log1p(-sensor.p_d)
        return out
    with np.errstate(divide="ignore", invalid="ignore"):
        log_clutter = np.log(sensor.clutter_rate)
        out[:] = log_clutter
        idx = np.flatnonzero(visible[1:])
        if len(idx):
            # (n_visible, N) Gaussian log densities
            logn = np.stack([
                multivariate_normal.logpdf(scan.points, mean=prior.points[k],
                                           cov=sensor.meas_cov).reshape(-1)
                for k in idx
            ])
            terms = np.concatenate([
                np.full((len(idx), 1), log_clutter + np.log1p(-sensor.p_d)),
                np.log(sensor.p_d) + logn,
            ], axis=1)
            out[idx + 1] = logsumexp(terms, axis=1)
    return out


def elpf_likelihood(scan: MeasurementScan, i: int, action: Action, sensor: SensorModel,
                    prior: BernoulliDiracPrior) -> float:
    """Unnormalised ELPF likelihood of ``scan`` under hypothesis ``i``."""
    if not 0 <= i <= prior.n:
        raise IndexError(f"hypothesis index {i} outside 0..{prior.n}")
    visible = i > 0 and bool(in_fov_mask(prior.points[i - 1], action, sensor)[0])
    if len(scan) == 0:
        return 1.0 - sensor.p_d if visible else 1.0
    if not visible:
        return sensor.clutter_rate
    dens = multivariate_normal.pdf(scan.points, mean=prior.points[i - 1], cov=sensor.meas_cov)
    return sensor.clutter_rate * (1.0 - sensor.p_d) + sensor.p_d * float(np.sum(dens))


def history_loglik(prior: BernoulliDiracPrior, history: Sequence[tuple[Action, MeasurementScan]],
                   sensor: SensorModel) -> np.ndarray:
    """Summed log likelihoods over a history, one entry per hypothesis 0..n."""
    ll = np.zeros(prior.n + 1)
    for action, scan in history:
        ll += elpf_loglik(scan, action, sensor, prior)
    return ll


def posterior_from_loglik(prior: BernoulliDiracPrior, ll: np.ndarray) -> PosteriorState:
    with np.errstate(divide="ignore"):
        logp = np.log(prior.probabilities()) + ll
    top = np.max(logp)
    if not np.isfinite(top):
        raise DegeneratePosteriorError("every hypothesis has zero posterior mass")
    p = np.exp(logp - top)
    p /= p.sum()
    with np.errstate(divide="ignore"):
        logw = np.log(prior.weights) + ll[1:]
    top_w = np.max(logw)
    if np.isfinite(top_w):
        w = np.exp(logw - top_w)
        w /= w.sum()
    else:
        # no mass on any target state: the estimate is never used, keep the prior shape
        w = prior.weights.copy()
    return PosteriorState(p, w, w @ prior.points, prior.points)


def update_posterior(prior: BernoulliDiracPrior,
                     history: Sequence[tuple[Action, MeasurementScan]],
                     sensor: SensorModel) -> PosteriorState:
    """Posterior hypothesis probabilities and weights after ``history``."""
    return posterior_from_loglik(prior, history_loglik(prior, history, sensor))
