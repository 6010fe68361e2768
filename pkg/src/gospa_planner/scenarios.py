"""Scenario construction, Monte Carlo policy evaluation and the demo map."""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .metric import GospaParams, gospa
from .msgospa import Chosen, mms_gospa
from .planners import PLANNERS, PlanningConfig, PlanResult, Policy, strictly_less
from .sampling import SamplerConfig, amms_gospa_efficient, amms_gospa_general
from .sensor import (NO_OBSERVATION, Action, SensorModel, in_fov, poisson_count,
                     scan_from_draws, unit_disc)
from .target import BernoulliDiracPrior, update_posterior

SCENARIO_NAMES = ("unimodal", "bimodal", "trimodal", "demo", "custom")
TRIMODAL_APEX = (100.0, 100.0 + math.sqrt(192.0))


def square_grid(center, spacing: float, half_width: int) -> list[Action]:
    """(2k+1)^2 spotlight centres on a square lattice, row by row."""
    cx, cy = center
    ks = range(-half_width, half_width + 1)
    return [Action.observe(cx + spacing * i, cy + spacing * j) for j in ks for i in ks]


def hex_grid(center, spacing: float, rings: int) -> list[Action]:
    """Hexagonal patch with ``rings`` rings around ``center`` (1 + 3r(r+1) points)."""
    cx, cy = center
    pts = []
    for q in range(-rings, rings + 1):
        for r in range(max(-rings, -q - rings), min(rings, -q + rings) + 1):
            x = spacing * (q + r / 2.0)
            y = spacing * (math.sqrt(3.0) / 2.0) * r
            pts.append((round(cx + x, 12), round(cy + y, 12)))
    pts.sort(key=lambda p: (p[1], p[0]))
    return [Action.observe(*p) for p in pts]


def triangle_grid(a, b, c, divisions: int) -> list[Action]:
    """Triangular lattice spanning the triangle abc with ``divisions`` steps per side."""
    a, b, c = (np.asarray(p, dtype=float) for p in (a, b, c))
    pts = []
    for i in range(divisions + 1):
        for j in range(divisions + 1 - i):
            k = divisions - i - j
            p = (i * a + j * b + k * c) / divisions
            pts.append((round(float(p[0]), 12), round(float(p[1]), 12)))
    pts.sort(key=lambda p: (p[1], p[0]))
    return [Action.observe(*p) for p in pts]


def default_grid(name: str) -> list[Action]:
    """Spotlight grid per scenario, NoObservation first."""
    if name == "unimodal":
        grid = square_grid((100.0, 100.0), 5.0, 2)
    elif name == "bimodal":
        grid = hex_grid((100.0, 100.0), 4.0, 2)
    elif name == "trimodal":
        grid = triangle_grid((92.0, 100.0), (108.0, 100.0), TRIMODAL_APEX, 6)
    else:
        raise ConfigError(f"no default grid for scenario {name!r}")
    return [NO_OBSERVATION] + grid


@dataclass(frozen=True)
class ScenarioSpec:
    """Hypothesis sampling distribution, sensor and candidate actions.

    ``mode_cov`` is in km^2; hypotheses are drawn ``hyp_per_mode`` times
    from N(mean, mode_cov) for each mode and weighted uniformly.
    """

    name: str
    mode_means: tuple[tuple[float, float], ...]
    mode_cov: np.ndarray
    hyp_per_mode: int
    existence_r: float
    sensor: SensorModel
    action_grid: tuple[Action, ...]
    seed: int = 0

    def __post_init__(self):
        if self.name not in SCENARIO_NAMES:
            raise ConfigError(f"unknown scenario {self.name!r}")
        if int(self.hyp_per_mode) < 1:
            raise ConfigError("hyp_per_mode must be >= 1")
        if not self.mode_means:
            raise ConfigError("at least one mode is required")
        if not 0.0 <= self.existence_r <= 1.0:
            raise ConfigError("existence_r must lie in [0, 1]")
        cov = np.asarray(self.mode_cov, dtype=float)
        if cov.shape != (2, 2) or np.any(np.linalg.eigvalsh(cov) < 0):
            raise ConfigError("mode_cov must be a 2x2 positive semi-definite matrix")
        object.__setattr__(self, "mode_cov", cov)
        object.__setattr__(self, "mode_means", tuple(tuple(map(float, m)) for m in self.mode_means))
        object.__setattr__(self, "action_grid", tuple(self.action_grid))
        if NO_OBSERVATION not in self.action_grid:
            raise ConfigError("action_grid must include NoObservation")

    @property
    def n_hypotheses(self) -> int:
        return len(self.mode_means) * self.hyp_per_mode


def measurement_sigma(lambda_fa: float) -> float:
    """Measurement standard deviation (km) used with each clutter level."""
    return 1e-5 if lambda_fa == 0 else 1e-2


def default_n_h(policy: Policy | str, lambda_fa: float) -> int:
    if lambda_fa == 0:
        return 1
    return 1 if Policy(policy) == Policy.OPTIMAL else 10


def reference_scenario(name: str, p_d: float, lambda_fa: float, seed: int = 0,
                   sigma: float | None = None, fov_radius: float = 10.0,
                   existence_r: float = 0.8) -> ScenarioSpec:
    """One of the three search scenarios with its default spotlight grid."""
    if name == "unimodal":
        means, cov, per = ((100.0, 100.0),), np.diag([100.0, 100.0]), 100
    elif name == "bimodal":
        means, cov, per = ((92.0, 100.0), (108.0, 100.0)), np.eye(2) * 2.5**2, 50
    elif name == "trimodal":
        means, cov, per = ((92.0, 100.0), (108.0, 100.0), TRIMODAL_APEX), np.eye(2) * 2.5**2, 33
    else:
        raise ConfigError(f"unknown scenario {name!r}")
    sigma = measurement_sigma(lambda_fa) if sigma is None else sigma
    sensor = SensorModel.isotropic(fov_radius, p_d, lambda_fa, sigma)
    return ScenarioSpec(name, means, cov, per, existence_r, sensor, tuple(default_grid(name)), seed)


def draw_hypotheses(spec: ScenarioSpec, rng: np.random.Generator) -> np.ndarray:
    vals, vecs = np.linalg.eigh(spec.mode_cov)
    root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    blocks = [np.asarray(m) + rng.standard_normal((spec.hyp_per_mode, 2)) @ root.T
              for m in spec.mode_means]
    return np.concatenate(blocks)


def build_scenario(spec: ScenarioSpec, rng: np.random.Generator | None = None):
    """Draw the hypotheses of ``spec``; returns (prior, sensor, actions)."""
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    prior = BernoulliDiracPrior.uniform(spec.existence_r, draw_hypotheses(spec, rng))
    return prior, spec.sensor, list(spec.action_grid)


# ---------------------------------------------------------------- evaluation

@dataclass(frozen=True)
class RunRecord:
    run: int
    seed: int
    policy: str
    T: int
    p_d: float
    lambda_fa: float
    truth: int
    actions: tuple[tuple[float, float] | None, ...]
    planned_actions: tuple[tuple[float, float] | None, ...]
    amms_pred: float
    rmse_pred: float
    rmse_stepsum_pred: float
    amms_per_step: tuple[float, ...]
    mse_per_step: tuple[float, ...]
    gospa2_per_step: tuple[float, ...]
    sq_err_per_step: tuple[float | None, ...]
    plan_time_s: float

    @property
    def realised_amms(self) -> float:
        return float(sum(self.gospa2_per_step))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["realised_amms"] = self.realised_amms
        return d


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if len(arr) == 0:
        return float("nan"), float("nan")
    std = float(np.std(arr, ddof=1)) if len(arr) > 1 else 0.0
    return float(np.mean(arr)), std


@dataclass(frozen=True)
class Aggregate:
    policy: str
    runs: int
    rmse_mean: float
    rmse_std: float
    rmse_stepsum_mean: float
    rmse_stepsum_std: float
    amms_mean: float
    amms_std: float
    amms_sqrt_mean: float
    realised_amms_mean: float
    realised_amms_std: float


def aggregate(records: Sequence[RunRecord], policy: str) -> Aggregate:
    rs = [r for r in records if r.policy == policy]
    rmse = _mean_std([r.rmse_pred for r in rs])
    step = _mean_std([r.rmse_stepsum_pred for r in rs])
    amms = _mean_std([r.amms_pred for r in rs])
    amms_sqrt = _mean_std([math.sqrt(max(r.amms_pred, 0.0)) for r in rs])
    real = _mean_std([r.realised_amms for r in rs])
    return Aggregate(policy, len(rs), *rmse, *step, *amms, amms_sqrt[0], *real)


@dataclass(frozen=True)
class RunReport:
    scenario: str
    p_d: float
    lambda_fa: float
    T: int
    seed: int
    policies: tuple[str, ...]
    records: tuple[RunRecord, ...]

    @property
    def aggregates(self) -> dict[str, Aggregate]:
        return {p: aggregate(self.records, p) for p in self.policies}


def _run_seeds(seed: int, run: int) -> tuple[np.random.Generator, int]:
    ss = np.random.SeedSequence(seed, spawn_key=(run,))
    rng = np.random.default_rng(ss)
    return rng, int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def _scan_draws(seed: int, run: int, step: int, mean_clutter: float):
    g = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(run, 1, step)))
    u_det = g.random()
    eps = g.standard_normal(2)
    k = int(poisson_count(g.random(), mean_clutter))
    return u_det, eps, unit_disc(g.random(k), g.random(k))


def planning_config(policy: Policy, actions, T: int, n_h: int, bank_seed: int,
                    discount: float = 1.0) -> PlanningConfig:
    horizon = 1 if policy == Policy.MYOPIC else T
    return PlanningConfig(horizon, discount, tuple(actions), SamplerConfig(n_h=n_h, seed=bank_seed))


def _simulate_run(spec: ScenarioSpec, policies: tuple[str, ...], T: int, run: int, seed: int,
                  params: GospaParams, n_h: dict, discount: float) -> list[RunRecord]:
    rng, bank_seed = _run_seeds(seed, run)
    prior, sensor, actions = build_scenario(spec, rng)
    truth = int(rng.choice(prior.n + 1, p=prior.probabilities()))
    truth_set = [] if truth == 0 else [prior.points[truth - 1]]
    draws = [_scan_draws(seed, run, k, sensor.mean_clutter) for k in range(T)]
    out = []
    for name in policies:
        policy = Policy(name)
        planner = PLANNERS[policy]
        cfg = planning_config(policy, actions, T, n_h[name], bank_seed, discount)
        t0 = time.perf_counter()
        first = planner(prior, sensor, params, cfg)
        plan_time = time.perf_counter() - t0
        history = []
        gospa2, sq_err, executed = [], [], []
        for k in range(T):
            if k == 0:
                plan = first
            else:
                remaining = cfg.horizon_T if policy == Policy.MYOPIC else T - k
                plan = planner(prior, sensor, params, replace(cfg, horizon_T=remaining),
                               history=history)
            a = plan.first_action
            u_det, eps, clutter = draws[k]
            detected = truth > 0 and in_fov(prior.points[truth - 1], a, sensor) and u_det < sensor.p_d
            target = prior.points[truth - 1] if detected else None
            history.append((a, scan_from_draws(target, a, sensor, eps, clutter)))
            post = update_posterior(prior, history, sensor)
            res = mms_gospa(post, params)
            est = [] if res.chosen == Chosen.PHI else [post.estimate_e]
            gospa2.append(float(gospa(truth_set, est, params).total ** 2))
            if truth > 0:
                d = post.estimate_e - prior.points[truth - 1]
                sq_err.append(float(d @ d))
            else:
                sq_err.append(None)
            executed.append(a.center)
        out.append(RunRecord(
            run=run, seed=seed, policy=name, T=T, p_d=sensor.p_d, lambda_fa=sensor.clutter_rate,
            truth=truth, actions=tuple(executed), planned_actions=tuple(a.center for a in first.actions),
            amms_pred=first.amms_total, rmse_pred=first.rmse, rmse_stepsum_pred=first.rmse_stepsum,
            amms_per_step=tuple(first.amms_per_step), mse_per_step=tuple(first.mse_per_step),
            gospa2_per_step=tuple(gospa2), sq_err_per_step=tuple(sq_err), plan_time_s=plan_time,
        ))
    return out


def _simulate_star(args):
    return _simulate_run(*args)


def evaluate_policies(spec: ScenarioSpec, policies: Sequence[str | Policy], T: int, runs: int,
                      seed: int = 0, params: GospaParams = GospaParams(),
                      n_h: dict | None = None, discount: float = 1.0,
                      workers: int | None = None) -> RunReport:
    """Monte Carlo comparison of planners on fresh hypothesis draws.

    Each run draws hypotheses and a ground truth, plans with every policy
    under a shared noise bank, then executes the plan step by step against
    measurement draws shared across policies, replanning on the remaining
    window after each scan. Predicted costs come from the first plan;
    realised squared GOSPA and squared localisation error are recorded per
    step. ``workers`` > 1 evaluates runs in separate processes; records are
    always assembled in run order.
    """
    if runs < 1:
        raise ConfigError("runs must be >= 1")
    names = tuple(Policy(p).value for p in policies)
    lam = spec.sensor.clutter_rate
    n_h = {p: (n_h or {}).get(p, default_n_h(p, lam)) for p in names}
    workers = workers or int(os.environ.get("GOSPA_PLANNER_WORKERS", "1"))
    jobs = [(spec, names, T, run, seed, params, n_h, discount) for run in range(runs)]
    if workers > 1 and runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_simulate_star, jobs))
    else:
        chunks = [_simulate_star(j) for j in jobs]
    records = tuple(r for chunk in chunks for r in chunk)
    return RunReport(spec.name, spec.sensor.p_d, lam, T, seed, names, records)


# ---------------------------------------------------------------- demo map

DEMO_R_GRID = np.round(np.linspace(0.0, 1.0, 101), 10)
DEMO_S_GRID = np.round(np.arange(1, 201) * 0.1, 10)


def demo_setup(r: float, p_d: float = 0.6, c: float = 10.0):
    """Single hypothesis at the origin observed by a spotlight centred on it."""
    prior = BernoulliDiracPrior(float(r), [1.0], [[0.0, 0.0]])
    sensor = SensorModel.isotropic(10.0, p_d, 0.0, 1e-10)
    return prior, sensor, GospaParams(c=c), [NO_OBSERVATION, Action.observe(0.0, 0.0)]


def oracle_amms(r: float, p_d: float, c: float) -> tuple[float, float]:
    """Closed-form AMMS-GOSPA of (NoObservation, Observe) for the demo setup."""
    half = c**2 / 2.0
    none = half * min(r, 1.0 - r)
    miss = 1.0 - r * p_d
    if miss <= 0.0:
        return none, 0.0
    r_post = r * (1.0 - p_d) / miss
    return none, miss * half * min(r_post, 1.0 - r_post)


def oracle_observe(r: float, s: float, p_d: float, c: float) -> bool:
    """Observe iff the expected reduction in MMS-GOSPA exceeds the sensing cost."""
    none, obs = oracle_amms(r, p_d, c)
    return bool(strictly_less(obs + s, none))


@dataclass(frozen=True)
class DecisionMap:
    r_grid: np.ndarray
    s_grid: np.ndarray
    observe: np.ndarray          # (len(r_grid), len(s_grid)) bool
    amms_none: np.ndarray
    amms_observe: np.ndarray
    ms_per_optimisation: float
    approach: str


def demo_decision_map(r_grid=DEMO_R_GRID, s_grid=DEMO_S_GRID, p_d: float = 0.6, c: float = 10.0,
                      approach: str = "efficient", m: int = 1000, n_h: int = 1, seed: int = 0,
                      mode: str = "first_principles") -> DecisionMap:
    """Myopic decision per (existence probability, sensing cost) cell.

    The AMMS-GOSPA of both actions is estimated once per ``r`` and reused
    for every sensing cost; the decision rule is the myopic planner's
    (NoObservation wins near-ties). ``ms_per_optimisation`` is the mean
    time to estimate both actions for one ``r``.
    """
    r_grid = np.asarray(r_grid, dtype=float)
    s_grid = np.asarray(s_grid, dtype=float)
    none = np.empty(len(r_grid))
    obs = np.empty(len(r_grid))
    elapsed = 0.0
    for k, r in enumerate(r_grid):
        prior, sensor, params, actions = demo_setup(r, p_d, c)
        t0 = time.perf_counter()
        if approach == "oracle":
            none[k], obs[k] = oracle_amms(r, p_d, c)
        elif approach == "efficient":
            cfg = SamplerConfig(n_h=n_h, seed=seed)
            none[k], obs[k] = (amms_gospa_efficient(prior, [a], sensor, params, cfg) for a in actions)
        elif approach == "general":
            cfg = SamplerConfig(m_general=m, seed=seed)
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))
            none[k], obs[k] = (amms_gospa_general(prior, [a], sensor, params, cfg, rng, mode=mode)
                               for a in actions)
        else:
            raise ConfigError(f"unknown demo approach {approach!r}")
        elapsed += time.perf_counter() - t0
    observe = np.array([[bool(strictly_less(o + s, n)) for s in s_grid] for n, o in zip(none, obs)])
    return DecisionMap(r_grid, s_grid, observe, none, obs, 1e3 * elapsed / len(r_grid), approach)


def oracle_map(r_grid=DEMO_R_GRID, s_grid=DEMO_S_GRID, p_d: float = 0.6, c: float = 10.0) -> np.ndarray:
    return np.array([[oracle_observe(r, s, p_d, c) for s in s_grid] for r in r_grid])
