"""Myopic, receding-horizon, Bellman and localisation-MSE planners."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from . import _kernels as K
from .errors import BudgetExceededError, ConfigError, DegeneratePosteriorError, HorizonError
from .metric import GospaParams
from .sampling import MAX_EFFICIENT_STEPS, Engine, SamplerConfig
from .sensor import NO_OBSERVATION, Action, SensorModel
from .target import BernoulliDiracPrior

strictly_less = K.strictly_less


class Policy(str, Enum):
    MYOPIC = "myopic"
    SUBOPTIMAL = "suboptimal"
    OPTIMAL = "optimal"
    BASELINE = "baseline"


@dataclass(frozen=True)
class PlanningConfig:
    """Horizon, discount, candidate actions and sampler settings.

    ``sensing_cost`` (km^2 per observation) is added for every Observe
    action. ``tuple_budget`` bounds the open-loop enumerations and
    ``leaf_budget`` the Bellman recursion.
    """

    horizon_T: int = 1
    discount: float = 1.0
    action_set: tuple[Action, ...] = (NO_OBSERVATION,)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    sensing_cost: float = 0.0
    tuple_budget: int = 1_000_000
    leaf_budget: float = 1e8
    max_optimal_T: int = 3
    special_case_sigma: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "action_set", tuple(self.action_set))
        if int(self.horizon_T) < 1:
            raise ConfigError(f"horizon_T must be >= 1, got {self.horizon_T}")
        if not 0.0 <= self.discount <= 1.0:
            raise ConfigError(f"discount must lie in [0, 1], got {self.discount}")
        if not self.action_set:
            raise ConfigError("action_set is empty")
        if NO_OBSERVATION not in self.action_set:
            raise ConfigError("action_set must include NoObservation")
        if len(set(self.action_set)) != len(self.action_set):
            raise ConfigError("action_set contains duplicates")
        if self.sensing_cost < 0:
            raise ConfigError("sensing_cost must be >= 0")


@dataclass(frozen=True)
class PlanResult:
    """Outcome of one planning call.

    ``cost`` is the minimised objective and equals the discounted sum of
    ``per_step_costs``. ``amms_per_step`` and ``mse_per_step`` are the
    predicted AMMS-GOSPA (km^2) and existence-conditional localisation MSE
    (km^2) per step of the selected plan; for the Bellman planner they are
    expectations under its conditional policy. ``actions`` is the selected
    tuple (Bellman: the most probable action per step).
    """

    first_action: Action
    cost: float
    per_step_costs: tuple[float, ...]
    policy: Policy
    actions: tuple[Action, ...]
    amms_per_step: tuple[float, ...]
    mse_per_step: tuple[float, ...]
    discount: float
    diagnostics: dict = field(default_factory=dict, compare=False)
    policy_tree: dict = field(default_factory=dict, compare=False)

    def _disc_sum(self, values) -> float:
        return float(sum(self.discount**t * v for t, v in enumerate(values)))

    @property
    def amms_total(self) -> float:
        return self._disc_sum(self.amms_per_step)

    @property
    def rmse(self) -> float:
        return math.sqrt(max(self._disc_sum(self.mse_per_step), 0.0))

    @property
    def rmse_stepsum(self) -> float:
        return float(sum(math.sqrt(max(v, 0.0)) for v in self.mse_per_step))


def _engine(prior, sensor, params, cfg: PlanningConfig, rng, history, n_samples=None) -> Engine:
    seed = cfg.sampler.seed if rng is None else int(rng.integers(2**63))
    return Engine.from_prior(prior, sensor, params, n_samples or cfg.sampler.n_h, seed, history)


def _stderr(per_sample: np.ndarray) -> float:
    J = len(per_sample)
    if J < 2:
        return 0.0
    return float(np.std(per_sample * J, ddof=1) / np.sqrt(J))


def _enumerate(eng: Engine, cfg: PlanningConfig, T: int, objective: str, sensing_cost: float):
    """Exhaustive search over action tuples in lexicographic order.

    Prefix branch sets are shared across tuples. Returns a dict describing
    the best tuple; equal objectives keep the earliest tuple.
    """
    A = cfg.action_set
    if T > MAX_EFFICIENT_STEPS:
        raise HorizonError(f"open-loop planning supports T <= {MAX_EFFICIENT_STEPS}, got {T}")
    n_tuples = len(A) ** T
    if n_tuples > cfg.tuple_budget:
        raise BudgetExceededError(f"{n_tuples} action tuples exceed the budget of {cfg.tuple_budget}")
    disc = [cfg.discount**k for k in range(T)]
    best: dict = {}
    counters = {"branches": 0, "nodes": 0}

    def rec(k, branches, prefix, acc_j, amms_steps, mse_steps, obj_steps):
        for a in A:
            child = eng.step(branches, a, k)
            amms_j, mse_j = eng.score(child)
            counters["branches"] += len(child[1])
            counters["nodes"] += 1
            am, ms = float(amms_j.sum()), float(mse_j.sum())
            sense = sensing_cost if a.is_observe else 0.0
            if objective == "amms":
                step_j = amms_j + sense / eng.J
                step = am + sense
            else:
                step_j = mse_j
                step = ms
            tot_j = acc_j + disc[k] * step_j
            path = prefix + (a,)
            if k + 1 == T:
                tot = float(tot_j.sum())
                if not best or strictly_less(tot, best["cost"]):
                    best.update(cost=tot, actions=path, amms=amms_steps + (am,),
                                mse=mse_steps + (ms,), steps=obj_steps + (step,),
                                stderr=_stderr(tot_j))
            else:
                rec(k + 1, child, path, tot_j, amms_steps + (am,), mse_steps + (ms,),
                    obj_steps + (step,))

    rec(0, eng.root(), (), np.zeros(eng.J), (), (), ())
    best["n_tuples"] = n_tuples
    best.update(counters)
    return best


def _open_loop(policy: Policy, prior, sensor, params, cfg, rng, history, T, objective, sensing_cost):
    t0 = time.perf_counter()
    eng = _engine(prior, sensor, params, cfg, rng, history)
    best = _enumerate(eng, cfg, T, objective, sensing_cost)
    diag = {
        "tuples": best["n_tuples"],
        "nodes": best["nodes"],
        "branches": best["branches"],
        "stderr": best["stderr"],
        "tables": eng.n_tables,
        "wall_time_s": time.perf_counter() - t0,
    }
    return PlanResult(best["actions"][0], best["cost"], best["steps"], policy, best["actions"],
                      best["amms"], best["mse"], cfg.discount, diag)


def plan_myopic(prior: BernoulliDiracPrior, sensor: SensorModel, params: GospaParams,
                cfg: PlanningConfig, rng: np.random.Generator | None = None,
                history: Sequence = ()) -> PlanResult:
    """One-step plan: the action with the smallest AMMS-GOSPA plus sensing cost."""
    return _open_loop(Policy.MYOPIC, prior, sensor, params, cfg, rng, history, 1, "amms",
                      cfg.sensing_cost)


def plan_suboptimal(prior: BernoulliDiracPrior, sensor: SensorModel, params: GospaParams,
                    cfg: PlanningConfig, rng: np.random.Generator | None = None,
                    history: Sequence = ()) -> PlanResult:
    """Open-loop minimisation of the discounted AMMS-GOSPA sum over the window."""
    return _open_loop(Policy.SUBOPTIMAL, prior, sensor, params, cfg, rng, history,
                      cfg.horizon_T, "amms", cfg.sensing_cost)


def plan_baseline_mse(prior: BernoulliDiracPrior, sensor: SensorModel, params: GospaParams,
                      cfg: PlanningConfig, rng: np.random.Generator | None = None,
                      history: Sequence = ()) -> PlanResult:
    """Open-loop minimisation of the discounted localisation MSE.

    Each branch is scored by the squared distance between its posterior
    mean and the hypothesis that generated it, over target hypotheses only.
    ``cost`` is the discounted MSE sum; :attr:`PlanResult.rmse` its root.
    """
    return _open_loop(Policy.BASELINE, prior, sensor, params, cfg, rng, history,
                      cfg.horizon_T, "mse", 0.0)


def is_special_case(sensor: SensorModel, cfg: PlanningConfig) -> bool:
    """No clutter and near-exact measurements: a detection pins the target down."""
    return sensor.clutter_rate == 0 and sensor.max_sigma <= cfg.special_case_sigma


class _Bellman:
    def __init__(self, eng: Engine, cfg: PlanningConfig, T: int):
        self.eng = eng
        self.cfg = cfg
        self.T = T
        self.A = cfg.action_set
        self.s = cfg.sensing_cost
        self.lam = cfg.discount
        self.observe = np.array([a.is_observe for a in self.A])
        self.infov = np.stack([eng.infov(a) for a in self.A])
        self.nodes = 0
        self._stacked: dict = {}
        with np.errstate(divide="ignore"):
            log_miss = np.log1p(-eng.sensor.p_d)
        self.miss_rows = np.where(self.infov, log_miss, 0.0)

    def stacked(self, k):
        t = self._stacked.get(k)
        if t is None:
            tables = self.eng.stacked_tables(self.A, k)
            t = (tables, K.scaled_tables(tables))
            self._stacked[k] = t
        return t

    def _leaf(self, parents, k):
        e = self.eng
        tables, scaled = self.stacked(k)
        return K.leaf_min(np.ascontiguousarray(parents), tables, scaled, self.infov, self.observe,
                          e.sensor.p_d, self.s, e.log_r, e.log_1mr, e.prior_w, e.points,
                          e.c2, e.J)

    def _check(self, value):
        if value != value:
            raise DegeneratePosteriorError("sampled branch has no posterior mass")

    def general(self, state, k):
        """Value, per-step MMS, per-step sensing, per-step spread and chosen action."""
        e = self.eng
        n_left = self.T - k
        if n_left == 1:
            v, act, c, sp = self._leaf(state[None, :], k)
            self._check(v[0])
            self.nodes += 1
            a = int(act[0])
            sense = self.s if self.observe[a] else 0.0
            return float(v[0]), [float(c[0])], [sense], [float(sp[0])], a, {}
        probs = K.posterior_probs(state, e.log_r, e.log_1mr)
        best = None
        for ai, a in enumerate(self.A):
            states, bi, bj, bp, bs = e.step(e.root(state, probs), a, k)
            w = probs[bi] * bp
            cost_b, _, _, spread_b = e.branch_costs(states)
            self._check(float(cost_b.sum()))
            self.nodes += 1
            sense = self.s if a.is_observe else 0.0
            costs = [float(w @ cost_b)]
            senses = [sense]
            spreads = [float(w @ spread_b)]
            if n_left == 2:
                v_b, act_b, c_b, sp_b = self._leaf(states, k + 1)
                self._check(float(v_b.sum()))
                self.nodes += len(states)
                future = float(w @ v_b)
                costs.append(float(w @ c_b))
                senses.append(float(w @ np.where(self.observe[act_b], self.s, 0.0)))
                spreads.append(float(w @ sp_b))
                next_mass = np.bincount(act_b, weights=w, minlength=len(self.A))
            else:
                future = 0.0
                sub_c = np.zeros(n_left - 1)
                sub_s = np.zeros(n_left - 1)
                sub_sp = np.zeros(n_left - 1)
                next_mass = np.zeros(len(self.A))
                for b in range(len(states)):
                    vb, cb, sb, spb, ab, _ = self.general(states[b], k + 1)
                    future += w[b] * vb
                    sub_c += w[b] * np.asarray(cb)
                    sub_s += w[b] * np.asarray(sb)
                    sub_sp += w[b] * np.asarray(spb)
                    next_mass[ab] += w[b]
                costs += list(sub_c)
                senses += list(sub_s)
                spreads += list(sub_sp)
            val = sense + costs[0] + self.lam * future
            if best is None or strictly_less(val, best[0]):
                best = (val, costs, senses, spreads, ai, {"next_action_mass": next_mass})
        return best

    def special(self, state, k):
        """Recursion where detections end the search with zero further cost."""
        e = self.eng
        probs = K.posterior_probs(state, e.log_r, e.log_1mr)
        n_left = self.T - k
        best = None
        for ai, a in enumerate(self.A):
            self.nodes += 1
            if a.is_observe:
                nd_w = float(probs @ np.where(self.infov[ai], 1.0 - e.sensor.p_d, 1.0))
                nd_state = state + self.miss_rows[ai]
            else:
                nd_w = 1.0
                nd_state = state
            sense = self.s if a.is_observe else 0.0
            costs = [0.0] * n_left
            senses = [sense] + [0.0] * (n_left - 1)
            spreads = [0.0] * n_left
            chain: tuple = ()
            future = 0.0
            if nd_w > 0.0:
                cp, ce, _, _, _, sp = K.branch_mms(nd_state, e.log_r, e.log_1mr, e.prior_w,
                                                   e.points, e.c2)
                self._check(cp)
                costs[0] = nd_w * min(cp, ce)
                spreads[0] = nd_w * sp
                if n_left > 1:
                    vb, cb, sb, spb, chain = self.special(nd_state, k + 1)
                    future = nd_w * vb
                    for t in range(n_left - 1):
                        costs[t + 1] = nd_w * cb[t]
                        senses[t + 1] = nd_w * sb[t]
                        spreads[t + 1] = nd_w * spb[t]
            elif n_left > 1:
                chain = (NO_OBSERVATION,) * (n_left - 1)
            val = sense + costs[0] + self.lam * future
            if best is None or strictly_less(val, best[0]):
                best = (val, costs, senses, spreads, (a,) + chain)
        return best


def optimal_leaf_estimate(prior_n: int, n_actions: int, n_samples: int, T: int, special: bool) -> float:
    """Upper estimate of the number of leaf posteriors the recursion evaluates."""
    if special:
        return float(n_actions) ** T
    return float(n_actions * (2 * prior_n + 1) * n_samples) ** T


def plan_optimal(prior: BernoulliDiracPrior, sensor: SensorModel, params: GospaParams,
                 cfg: PlanningConfig, rng: np.random.Generator | None = None,
                 history: Sequence = ()) -> PlanResult:
    """Closed-loop Bellman plan over sampled measurement branches.

    Each later action is chosen conditionally on the branch's posterior.
    Without clutter and with ``sigma <= cfg.special_case_sigma`` a detection
    is taken to end the search (zero further cost), so only the
    all-missed branch is expanded.
    """
    T = int(cfg.horizon_T)
    if T > cfg.max_optimal_T:
        raise HorizonError(f"optimal planning supports T <= {cfg.max_optimal_T}, got {T}")
    special = is_special_case(sensor, cfg)
    leaves = optimal_leaf_estimate(prior.n, len(cfg.action_set), cfg.sampler.n_h, T, special)
    if leaves > cfg.leaf_budget:
        raise BudgetExceededError(
            f"optimal recursion needs about {leaves:.3g} leaf evaluations, "
            f"budget is {cfg.leaf_budget:.3g}"
        )
    t0 = time.perf_counter()
    eng = _engine(prior, sensor, params, cfg, rng, history)
    solver = _Bellman(eng, cfg, T)
    tree: dict = {}
    if special:
        val, costs, senses, spreads, chain = solver.special(eng.state0, 0)
        actions = chain
        tree = {"kind": "no_detection_chain", "actions": [a.to_dict() for a in chain]}
    else:
        val, costs, senses, spreads, ai, info = solver.general(eng.state0, 0)
        actions = (cfg.action_set[ai],)
        if T >= 2:
            mass = info["next_action_mass"]
            order = sorted(np.flatnonzero(mass > 0), key=lambda j: (-mass[j], j))
            actions += (cfg.action_set[order[0]],)
            tree = {"kind": "conditional",
                    "second_step": [{"action": cfg.action_set[j].to_dict(),
                                     "probability": float(mass[j])} for j in order]}
    exists = 1.0 - float(eng.tw[0])
    mse = tuple(float(v / exists) if exists > 0 else 0.0 for v in spreads)
    per_step = tuple(float(c + s) for c, s in zip(costs, senses))
    diag = {
        "special_case": special,
        "leaf_estimate": leaves,
        "nodes": solver.nodes,
        "tables": eng.n_tables,
        "expected_sensing": list(senses),
        "wall_time_s": time.perf_counter() - t0,
    }
    return PlanResult(actions[0], float(val), per_step, Policy.OPTIMAL, actions,
                      tuple(float(c) for c in costs), mse, cfg.discount, diag, tree)


PLANNERS = {
    Policy.MYOPIC: plan_myopic,
    Policy.SUBOPTIMAL: plan_suboptimal,
    Policy.OPTIMAL: plan_optimal,
    Policy.BASELINE: plan_baseline_mse,
}
