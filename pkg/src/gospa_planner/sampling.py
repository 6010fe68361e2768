"""Sample-based AMMS-GOSPA estimators.

Two routes are provided. The general route draws whole measurement
histories per hypothesis. The efficient route enumerates detection
sequences per hypothesis and only samples the measurement noise and
clutter within each sequence.

Noise for the efficient route comes from a bank keyed by
(seed, hypothesis, sample, time step). Every action and every detection
sequence reuses the same draws for a given key, so competing action
sequences are compared under common random numbers.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import _kernels as K
from .errors import ConfigError, DegeneratePosteriorError, HorizonError
from .metric import GospaParams, gospa
from .sensor import (Action, MeasurementScan, SensorModel, in_fov, in_fov_mask,
                     poisson_count, sample_scan, unit_disc)
from .target import (BernoulliDiracPrior, PosteriorState, history_loglik,
                     update_posterior)

MAX_EFFICIENT_STEPS = 4


@dataclass(frozen=True)
class SamplerConfig:
    """``n_h`` samples per (hypothesis, detection sequence) for the efficient
    route, ``m_general`` samples per hypothesis for the general route."""

    n_h: int = 1
    m_general: int = 1000
    seed: int = 0

    def __post_init__(self):
        if int(self.n_h) < 1:
            raise ConfigError(f"n_h must be >= 1, got {self.n_h}")
        if int(self.m_general) < 1:
            raise ConfigError(f"m_general must be >= 1, got {self.m_general}")


@dataclass(frozen=True)
class AmmsEstimate:
    value: float
    stderr: float
    n_branches: int
    mse: float = 0.0


@dataclass(frozen=True)
class NoiseBank:
    eps: np.ndarray       # (H, J, 2) standard normals
    count: np.ndarray     # (H, J) clutter counts
    clutter: np.ndarray   # (H, J, Kmax, 2) unit-disc clutter positions


@lru_cache(maxsize=64)
def noise_bank(seed: int, step: int, n_hyp: int, n_samples: int, mean_clutter: float) -> NoiseBank:
    """Draws for every (hypothesis, sample) cell at one time step."""
    eps = np.empty((n_hyp, n_samples, 2))
    u = np.empty((n_hyp, n_samples))
    discs = []
    for i in range(n_hyp):
        for j in range(n_samples):
            g = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i, j, step)))
            eps[i, j] = g.standard_normal(2)
            u[i, j] = g.random()
            k = int(poisson_count(u[i, j], mean_clutter))
            discs.append(unit_disc(g.random(k), g.random(k)))
    count = np.array([len(d) for d in discs], dtype=np.int64).reshape(n_hyp, n_samples)
    kmax = max(1, int(count.max()))
    clutter = np.zeros((n_hyp, n_samples, kmax, 2))
    for idx, d in enumerate(discs):
        i, j = divmod(idx, n_samples)
        clutter[i, j, :len(d)] = d
    for arr in (eps, count, clutter):
        arr.setflags(write=False)
    return NoiseBank(eps, count, clutter)


def _gauss_consts(sensor: SensorModel) -> tuple[np.ndarray, float]:
    inv = np.linalg.inv(sensor.meas_cov)
    log_norm = -np.log(2.0 * np.pi) - 0.5 * np.log(np.linalg.det(sensor.meas_cov))
    return inv, float(log_norm)


def infov_vector(points: np.ndarray, action: Action, sensor: SensorModel) -> np.ndarray:
    """FOV membership for hypotheses 0..n (index 0, no target, is never visible)."""
    return np.concatenate([[False], in_fov_mask(points, action, sensor)])


def likelihood_table(points: np.ndarray, action: Action, sensor: SensorModel,
                     bank: NoiseBank) -> np.ndarray:
    """Log-likelihood rows ``table[i, j, f, h]`` for one action and time step.

    The scan for cell (i, j, f) holds the target measurement when ``f == 1``
    plus the cell's clutter mapped into the action's field of view.
    """
    H, J = bank.count.shape
    table = np.zeros((H, J, 2, H))
    if not action.is_observe:
        return table
    infov = infov_vector(points, action, sensor)
    kmax = bank.clutter.shape[2]
    centre = np.asarray(action.center)
    clutter = centre + sensor.fov_radius * bank.clutter            # (H, J, Kmax, 2)
    zs = np.zeros((H, J, 2, kmax + 1, 2))
    nz = np.zeros((H, J, 2), dtype=np.int64)
    # clutter first, target measurement appended after the valid clutter rows
    zs[:, :, :, :kmax] = clutter[:, :, None]
    nz[:, :, 0] = bank.count
    nz[:, :, 1] = bank.count
    target = np.zeros((H, J, 2))
    target[1:] = points[:, None, :] + np.einsum("kl,ijl->ijk", sensor.cov_chol, bank.eps[1:])
    detectable = infov.copy()
    ii, jj = np.nonzero(np.broadcast_to(detectable[:, None], (H, J)))
    zs[ii, jj, 1, bank.count[ii, jj]] = target[ii, jj]
    nz[ii, jj, 1] += 1
    inv, log_norm = _gauss_consts(sensor)
    ll = K.scan_loglik(zs.reshape(H * J * 2, kmax + 1, 2), nz.reshape(-1), points, infov,
                       sensor.p_d, sensor.clutter_rate, inv, log_norm)
    table[:] = ll.reshape(H, J, 2, H)
    table[~detectable, :, 1, :] = 0.0
    return table


def _log(x: float) -> float:
    return float(np.log(x)) if x > 0 else -np.inf


class Engine:
    """Branch bookkeeping for one planning problem.

    Holds the start posterior (as a log state), the hypothesis points and the
    sampler settings. Tables are built lazily per (action, step) and cached.
    ``step_offset`` is the absolute time index of the first planned step, so
    replanning after a partial history keeps drawing fresh noise.
    """

    def __init__(self, points: np.ndarray, prior_w: np.ndarray, state0: np.ndarray,
                 log_r: float, log_1mr: float, sensor: SensorModel, params: GospaParams,
                 n_samples: int, seed: int, step_offset: int = 0):
        self.points = np.ascontiguousarray(points, dtype=float)
        self.prior_w = np.ascontiguousarray(prior_w, dtype=float)
        self.state0 = np.ascontiguousarray(state0, dtype=float)
        self.log_r = float(log_r)
        self.log_1mr = float(log_1mr)
        self.sensor = sensor
        self.params = params
        self.c2 = float(params.c**2)
        self.J = int(n_samples)
        self.seed = int(seed)
        self.step_offset = int(step_offset)
        self.H = len(self.points) + 1
        self.tw = K.posterior_probs(self.state0, self.log_r, self.log_1mr)
        if np.isnan(self.tw[0]):
            raise DegeneratePosteriorError("start posterior has no mass")
        self.mw = np.zeros(self.H)
        if self.tw[0] < 1.0:
            self.mw[1:] = self.tw[1:] / self.tw[1:].sum()
        self._tables: dict = {}
        self._infov: dict = {}
        self.n_tables = 0

    @classmethod
    def from_prior(cls, prior: BernoulliDiracPrior, sensor: SensorModel, params: GospaParams,
                   n_samples: int, seed: int, history: Sequence = ()) -> "Engine":
        ll = history_loglik(prior, history, sensor)
        with np.errstate(divide="ignore"):
            state = ll + np.concatenate([[0.0], np.log(prior.weights)])
        return cls(prior.points, prior.weights, state, _log(prior.r), _log(1.0 - prior.r),
                   sensor, params, n_samples, seed, len(history))

    @classmethod
    def from_posterior(cls, post: PosteriorState, sensor: SensorModel, params: GospaParams,
                       n_samples: int, seed: int, step_offset: int = 0) -> "Engine":
        with np.errstate(divide="ignore"):
            state = np.log(np.asarray(post.p_hyp, dtype=float))
        return cls(post.points, post.w_post, state, 0.0, 0.0, sensor, params,
                   n_samples, seed, step_offset)

    def bank(self, k: int) -> NoiseBank:
        return noise_bank(self.seed, self.step_offset + k, self.H, self.J, self.sensor.mean_clutter)

    def infov(self, action: Action) -> np.ndarray:
        v = self._infov.get(action)
        if v is None:
            v = infov_vector(self.points, action, self.sensor)
            self._infov[action] = v
        return v

    def table(self, action: Action, k: int) -> np.ndarray:
        key = (action, k)
        t = self._tables.get(key)
        if t is None:
            t = likelihood_table(self.points, action, self.sensor, self.bank(k))
            self._tables[key] = t
            self.n_tables += 1
        return t

    def stacked_tables(self, actions: Sequence[Action], k: int) -> np.ndarray:
        return np.ascontiguousarray(np.stack([self.table(a, k) for a in actions]))

    def root(self, state: np.ndarray | None = None, weights: np.ndarray | None = None):
        """One branch per (hypothesis, sample) with positive weight."""
        state = self.state0 if state is None else state
        weights = self.tw if weights is None else weights
        live = np.flatnonzero(weights > 0)
        bi = np.repeat(live, self.J).astype(np.int64)
        bj = np.tile(np.arange(self.J, dtype=np.int64), len(live))
        states = np.repeat(state[None, :], len(bi), axis=0)
        bp = np.full(len(bi), 1.0 / self.J)
        bs = np.zeros(len(bi), dtype=np.int64)
        return states, bi, bj, bp, bs

    def step(self, branches, action: Action, k: int):
        states, bi, bj, bp, bs = branches
        return K.expand(states, bi, bj, bp, bs, self.table(action, k), self.infov(action),
                        self.sensor.p_d)

    def score(self, branches, tw: np.ndarray | None = None, mw: np.ndarray | None = None):
        states, bi, bj, bp, _ = branches
        amms, mse = K.score(states, bi, bj, bp, self.tw if tw is None else tw,
                            self.mw if mw is None else mw, self.points, self.log_r,
                            self.log_1mr, self.prior_w, self.c2, self.J)
        if np.isnan(amms[0]):
            raise DegeneratePosteriorError("sampled branch has no posterior mass")
        return amms, mse

    def branch_costs(self, states: np.ndarray):
        return K.batch_mms(states, self.log_r, self.log_1mr, self.prior_w, self.points, self.c2)


def _stderr(per_sample: np.ndarray) -> float:
    J = len(per_sample)
    if J < 2:
        return 0.0
    return float(np.std(per_sample * J, ddof=1) / np.sqrt(J))


def amms_gospa_efficient(prior: BernoulliDiracPrior, actions: Sequence[Action],
                         sensor: SensorModel, params: GospaParams, cfg: SamplerConfig,
                         rng: np.random.Generator | None = None, history: Sequence = (),
                         detail: bool = False):
    """AMMS-GOSPA of ``actions`` by detection-sequence enumeration.

    ``history`` conditions the start posterior on past (action, scan) pairs.
    The noise bank is keyed by ``cfg.seed``, or by a seed drawn from ``rng``
    when one is given. With ``detail`` an :class:`AmmsEstimate` is returned
    (value, standard error over samples, branch count, truth-referenced
    existence-conditional squared error).
    """
    t = len(actions)
    if t < 1:
        raise ConfigError("at least one action is required")
    if t > MAX_EFFICIENT_STEPS:
        raise HorizonError(f"efficient enumeration supports at most {MAX_EFFICIENT_STEPS} steps, got {t}")
    seed = cfg.seed if rng is None else int(rng.integers(2**63))
    eng = Engine.from_prior(prior, sensor, params, cfg.n_h, seed, history)
    branches = eng.root()
    for k, a in enumerate(actions):
        branches = eng.step(branches, a, k)
    amms, mse = eng.score(branches)
    value = float(amms.sum())
    if not detail:
        return value
    return AmmsEstimate(value, _stderr(amms), len(branches[0]), float(mse.sum()))


def conditional_amms_gospa(post: PosteriorState, history: Sequence, next_action: Action,
                           sensor: SensorModel, params: GospaParams, cfg: SamplerConfig,
                           rng: np.random.Generator | None = None) -> float:
    """Expected MMS-GOSPA after one more scan, with hypotheses weighted by ``post``."""
    seed = cfg.seed if rng is None else int(rng.integers(2**63))
    eng = Engine.from_posterior(post, sensor, params, cfg.n_h, seed, len(history))
    amms, _ = eng.score(eng.step(eng.root(), next_action, 0))
    return float(amms.sum())


def _ms_gospa_brute(post: PosteriorState, estimate, params: GospaParams) -> float:
    """Posterior-weighted squared GOSPA of one candidate estimate set."""
    total = post.p0 * gospa([], estimate, params).total ** 2
    for h in np.flatnonzero(post.p_hyp[1:] > 0):
        total += post.p_hyp[h + 1] * gospa(post.points[h], estimate, params).total ** 2
    return total


def mms_gospa_brute(post: PosteriorState, params: GospaParams) -> float:
    """MMS-GOSPA from the metric definition, candidate by candidate."""
    phi = _ms_gospa_brute(post, [], params)
    est = _ms_gospa_brute(post, post.estimate_e, params)
    return phi if phi <= est else est


def _general_first_principles(prior, actions, sensor, params, m, rng):
    probs = prior.probabilities()
    per_hyp = np.zeros((len(probs), m))
    for i in np.flatnonzero(probs > 0):
        for l in range(m):
            history = []
            for a in actions:
                visible = i > 0 and in_fov(prior.points[i - 1], a, sensor)
                detected = int(visible and rng.random() < sensor.p_d)
                history.append((a, sample_scan(i, detected, a, sensor, prior, rng)))
            per_hyp[i, l] = mms_gospa_brute(update_posterior(prior, history, sensor), params)
    return probs, per_hyp


def _general_vectorised(prior, actions, sensor, params, m, rng):
    probs = prior.probabilities()
    H = prior.n + 1
    inv, log_norm = _gauss_consts(sensor)
    chol = sensor.cov_chol
    with np.errstate(divide="ignore"):
        base = np.concatenate([[0.0], np.log(prior.weights)])
    log_r, log_1mr = _log(prior.r), _log(1.0 - prior.r)
    per_hyp = np.zeros((H, m))
    for i in np.flatnonzero(probs > 0):
        states = np.repeat(base[None, :], m, axis=0)
        for a in actions:
            if not a.is_observe:
                continue
            infov = infov_vector(prior.points, a, sensor)
            detected = (rng.random(m) < sensor.p_d) if infov[i] else np.zeros(m, dtype=bool)
            eps = rng.standard_normal((m, 2))
            counts = poisson_count(rng.random(m), sensor.mean_clutter)
            kmax = int(counts.max()) if m else 0
            zs = np.zeros((m, kmax + 1, 2))
            for l in np.flatnonzero(counts):
                k = counts[l]
                zs[l, :k] = np.asarray(a.center) + sensor.fov_radius * unit_disc(rng.random(k), rng.random(k))
            if i > 0:
                target = prior.points[i - 1] + eps @ chol.T
                rows = np.flatnonzero(detected)
                zs[rows, counts[rows]] = target[rows]
            nz = counts + detected
            states += K.scan_loglik(zs, nz.astype(np.int64), prior.points, infov, sensor.p_d,
                                    sensor.clutter_rate, inv, log_norm)
        cost, *_ = K.batch_mms(states, log_r, log_1mr, prior.weights, prior.points, params.c**2)
        per_hyp[i] = cost
    return probs, per_hyp


def amms_gospa_general(prior: BernoulliDiracPrior, actions: Sequence[Action],
                       sensor: SensorModel, params: GospaParams, cfg: SamplerConfig,
                       rng: np.random.Generator, mode: str = "first_principles",
                       return_stderr: bool = False):
    """AMMS-GOSPA from ``cfg.m_general`` full measurement histories per hypothesis.

    ``mode="first_principles"`` updates the posterior and evaluates each
    candidate estimate through the GOSPA metric, one sample at a time.
    ``mode="vectorised"`` draws the same process in batches and uses the
    closed-form costs; it is meant for large ``m``.
    """
    if len(actions) < 1:
        raise ConfigError("at least one action is required")
    m = int(cfg.m_general)
    if mode == "first_principles":
        probs, per_hyp = _general_first_principles(prior, actions, sensor, params, m, rng)
    elif mode == "vectorised":
        probs, per_hyp = _general_vectorised(prior, actions, sensor, params, m, rng)
    else:
        raise ConfigError(f"unknown general-sampler mode {mode!r}")
    value = float(probs @ per_hyp.mean(axis=1))
    if not return_stderr:
        return value
    var = per_hyp.var(axis=1, ddof=1) if m > 1 else np.zeros(len(probs))
    return value, float(np.sqrt(np.sum(probs**2 * var) / m))
