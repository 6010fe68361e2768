import dataclasses

import numpy as np
import pytest

from gospa_planner import _kernels as K
from gospa_planner.errors import BudgetExceededError, ConfigError, HorizonError
from gospa_planner.metric import GospaParams
from gospa_planner.planners import (PlanningConfig, Policy, is_special_case, plan_baseline_mse,
                                    plan_myopic, plan_optimal, plan_suboptimal)
from gospa_planner.sampling import Engine, SamplerConfig
from gospa_planner.scenarios import demo_setup
from gospa_planner.sensor import NO_OBSERVATION, Action, SensorModel
from gospa_planner.target import BernoulliDiracPrior

from conftest import random_prior

P = GospaParams(c=10)
GRID = (NO_OBSERVATION, Action.observe(0, 0), Action.observe(6, 0), Action.observe(-6, 0),
        Action.observe(0, 6), Action.observe(0, -6))


def case(seed=0, n=8, p_d=0.7, lam=0.0, sigma=1e-10, T=2, n_h=1, discount=1.0, actions=GRID):
    rng = np.random.default_rng(seed)
    prior = random_prior(rng, n, r=0.8, spread=6.0)
    sensor = SensorModel.isotropic(8.0, p_d, lam, sigma)
    cfg = PlanningConfig(T, discount, actions, SamplerConfig(n_h=n_h, seed=seed))
    return prior, sensor, cfg


def test_config_validation():
    with pytest.raises(ConfigError):
        PlanningConfig(action_set=(Action.observe(0, 0),))
    with pytest.raises(ConfigError):
        PlanningConfig(action_set=(NO_OBSERVATION, NO_OBSERVATION))
    with pytest.raises(ConfigError):
        PlanningConfig(discount=1.5, action_set=GRID)
    with pytest.raises(ConfigError):
        PlanningConfig(horizon_T=0, action_set=GRID)


def test_myopic_demo_examples():
    prior, sensor, params, actions = demo_setup(0.5)
    cfg = PlanningConfig(1, 1.0, actions, sensing_cost=5.0)
    assert plan_myopic(prior, sensor, params, cfg).first_action == actions[1]
    prior0, *_ = demo_setup(0.0)
    assert plan_myopic(prior0, sensor, params, cfg).first_action == NO_OBSERVATION


@pytest.mark.parametrize("lam,sigma", [(0.0, 1e-10), (0.01, 0.1)])
def test_horizon_one_coincides(lam, sigma):
    prior, sensor, cfg = case(lam=lam, sigma=sigma, T=1, n_h=2)
    my = plan_myopic(prior, sensor, P, cfg)
    sub = plan_suboptimal(prior, sensor, P, cfg)
    opt = plan_optimal(prior, sensor, P, cfg)
    assert my.first_action == sub.first_action == opt.first_action
    assert my.cost == pytest.approx(sub.cost, rel=1e-12)
    assert opt.cost == pytest.approx(sub.cost, rel=1e-9)


def test_zero_discount_is_myopic():
    prior, sensor, cfg = case(T=3, discount=0.0)
    sub = plan_suboptimal(prior, sensor, P, cfg)
    my = plan_myopic(prior, sensor, P, cfg)
    assert sub.first_action == my.first_action
    assert sub.cost == pytest.approx(my.cost, rel=1e-12)


@pytest.mark.parametrize("planner", [plan_suboptimal, plan_baseline_mse, plan_optimal])
def test_cost_is_discounted_step_sum(planner):
    prior, sensor, cfg = case(T=2, discount=0.7, lam=0.01, sigma=0.1, n_h=2)
    res = planner(prior, sensor, P, cfg)
    assert res.cost >= 0
    assert res.cost == pytest.approx(sum(0.7**t * c for t, c in enumerate(res.per_step_costs)), rel=1e-9)
    assert len(res.amms_per_step) == len(res.mse_per_step) == 2


def test_baseline_examples():
    # two separated hypotheses both inside one spotlight: a perfect scan removes all spread
    prior = BernoulliDiracPrior(0.8, [0.5, 0.5], [[-3, 0], [3, 0]])
    sensor = SensorModel.isotropic(10.0, 1.0, 0.0, 1e-10)
    cfg = PlanningConfig(1, 1.0, (NO_OBSERVATION, Action.observe(0, 0)))
    res = plan_baseline_mse(prior, sensor, P, cfg)
    assert res.first_action == Action.observe(0, 0)
    assert res.mse_per_step[0] == pytest.approx(0.0, abs=1e-12)
    none_only = plan_baseline_mse(prior, sensor, P, PlanningConfig(1, 1.0, (NO_OBSERVATION,)))
    assert none_only.mse_per_step[0] == pytest.approx(9.0)


def test_baseline_tight_cluster():
    rng = np.random.default_rng(1)
    prior = BernoulliDiracPrior.uniform(0.8, rng.normal(0, 0.5, size=(5, 2)))
    sensor = SensorModel.isotropic(10.0, 1.0, 0.0, 1e-10)
    res = plan_baseline_mse(prior, sensor, P, PlanningConfig(2, 1.0, GRID))
    assert res.mse_per_step[0] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("T", [2, 3])
def test_bellman_dominance_deterministic(seed, T):
    prior, sensor, cfg = case(seed=seed, T=T, p_d=0.6 + 0.1 * seed)
    sub = plan_suboptimal(prior, sensor, P, cfg)
    opt = plan_optimal(prior, sensor, P, cfg)
    assert opt.diagnostics["special_case"]
    assert opt.cost <= sub.cost + 1e-9


@pytest.mark.parametrize("seed", range(3))
def test_special_case_matches_general_recursion(seed):
    """The pruned recursion and the full branch recursion give the same value."""
    prior, sensor, cfg = case(seed=seed, n=5, T=2)
    fast = plan_optimal(prior, sensor, P, cfg)
    full = plan_optimal(prior, sensor, P, dataclasses.replace(cfg, special_case_sigma=0.0))
    assert fast.diagnostics["special_case"] and not full.diagnostics["special_case"]
    assert full.cost == pytest.approx(fast.cost, abs=1e-6)
    assert full.first_action == fast.first_action


def test_more_actions_cannot_hurt():
    prior, sensor, cfg = case(T=2, p_d=0.8)
    full = plan_suboptimal(prior, sensor, P, cfg)
    fewer = plan_suboptimal(prior, sensor, P, dataclasses.replace(cfg, action_set=GRID[:3]))
    assert full.cost <= fewer.cost + 1e-12


def test_caps_and_budgets():
    prior, sensor, cfg = case(T=4)
    with pytest.raises(HorizonError):
        plan_optimal(prior, sensor, P, cfg)
    with pytest.raises(HorizonError):
        plan_suboptimal(prior, sensor, P, dataclasses.replace(cfg, horizon_T=5))
    with pytest.raises(BudgetExceededError):
        plan_suboptimal(prior, sensor, P, dataclasses.replace(cfg, horizon_T=3, tuple_budget=100))
    clutter = SensorModel.isotropic(8.0, 0.7, 0.01, 0.1)
    with pytest.raises(BudgetExceededError):
        plan_optimal(prior, clutter, P, dataclasses.replace(cfg, horizon_T=3, leaf_budget=1e4))


def test_reproducible():
    prior, sensor, cfg = case(lam=0.01, sigma=0.1, n_h=3)
    for planner in (plan_suboptimal, plan_baseline_mse, plan_optimal):
        assert planner(prior, sensor, P, cfg) == planner(prior, sensor, P, cfg)


def test_special_case_detection():
    cfg = PlanningConfig(action_set=GRID)
    assert is_special_case(SensorModel.isotropic(8, 0.5, 0.0, 1e-5), cfg)
    assert not is_special_case(SensorModel.isotropic(8, 0.5, 0.0, 1e-3), cfg)
    assert not is_special_case(SensorModel.isotropic(8, 0.5, 0.01, 1e-10), cfg)


def test_leaf_fast_path_matches_log_domain_reference():
    rng = np.random.default_rng(4)
    for trial in range(3):
        prior = random_prior(rng, 7, spread=5.0)
        sensor = SensorModel.isotropic(8.0, 0.75, 0.02, 0.3 if trial else 1e-3)
        eng = Engine.from_prior(prior, sensor, P, 3, trial)
        states, *_ = eng.step(eng.root(), Action.observe(1, 1), 0)
        tables = eng.stacked_tables(GRID, 1)
        infov = np.stack([eng.infov(a) for a in GRID])
        observe = np.array([a.is_observe for a in GRID])
        args = (infov, observe, sensor.p_d, 0.5, eng.log_r, eng.log_1mr, eng.prior_w, eng.points,
                eng.c2, eng.J)
        fast = K.leaf_min(states, tables, K.scaled_tables(tables), *args)
        ref = K.leaf_min_exact(states, tables, *args)
        assert np.array_equal(fast[1], ref[1])
        for a, b in zip(fast, ref):
            assert np.allclose(a, b, rtol=1e-9, atol=1e-9)


def test_bimodal_cookie_cutter():
    rng = np.random.default_rng(0)
    left = rng.normal([-8, 0], 1.5, size=(20, 2))
    right = rng.normal([8, 0], 1.5, size=(20, 2))
    prior = BernoulliDiracPrior.uniform(0.8, np.vstack([left, right]))
    sensor = SensorModel.isotropic(8.0, 1.0, 0.0, 1e-10)
    acts = (NO_OBSERVATION, Action.observe(-8, 0), Action.observe(0, 0), Action.observe(8, 0))
    res = plan_suboptimal(prior, sensor, P, PlanningConfig(2, 1.0, acts))
    assert {a.center for a in res.actions} == {(-8.0, 0.0), (8.0, 0.0)}
    assert res.policy == Policy.SUBOPTIMAL
