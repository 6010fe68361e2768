"""Acceptance gate: one test per primary criterion, each logging a PASS/FAIL line.

``GOSPA_ACCEPTANCE_RUNS`` overrides the Monte Carlo run count (default 20);
``GOSPA_ACCEPTANCE_FULL=1`` adds every T=3 no-clutter configuration to the
direction tests (the default covers P_d = 1.0 at T=3).
"""
import itertools
import math
import os
import time

import numpy as np
import pytest
from click.testing import CliRunner

from gospa_planner.cli import cli
from gospa_planner.metric import GospaParams, gospa
from gospa_planner.msgospa import mms_gospa, ms_gospa_estimate, ms_gospa_phi
from gospa_planner.planners import PLANNERS, Policy, plan_myopic, plan_optimal, plan_suboptimal
from gospa_planner.sampling import SamplerConfig, amms_gospa_general
from gospa_planner.scenarios import (DEMO_R_GRID, DEMO_S_GRID, build_scenario, demo_decision_map,
                                     demo_setup, evaluate_policies, oracle_amms, oracle_map,
                                     oracle_observe, reference_scenario, planning_config)
from gospa_planner.sensor import (Action, MeasurementScan, SensorModel, detection_seq_prob,
                                  in_fov_mask, sample_scan)
from gospa_planner.target import BernoulliDiracPrior, PosteriorState, update_posterior

LINES: list[str] = []
RUNS = int(os.environ.get("GOSPA_ACCEPTANCE_RUNS", "20"))
FULL = os.environ.get("GOSPA_ACCEPTANCE_FULL", "0") == "1"
SCENARIOS = ("unimodal", "bimodal", "trimodal")
PDS = (0.6, 0.9, 1.0)
GOSPA_POLICIES = ("suboptimal", "optimal")


def report(name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    LINES.append(line)
    print(line)
    assert ok, line


_EVALS: dict = {}


def evaluation(name, p_d, lam, T, policies):
    key = (name, p_d, lam, T, policies)
    if key not in _EVALS:
        _EVALS[key] = evaluate_policies(reference_scenario(name, p_d, lam, 0), policies, T, RUNS, seed=0)
    return _EVALS[key]


def test_demo_decision_map():
    t0 = time.perf_counter()
    dmap = demo_decision_map(approach="efficient", n_h=1)
    om = oracle_map()
    match = float(np.mean(dmap.observe == om))
    t_map = time.perf_counter() - t0
    # the oracle itself, against the general sampler with 1e5 samples
    rng = np.random.default_rng(2024)
    cells = [(int(rng.integers(len(DEMO_R_GRID))), int(rng.integers(len(DEMO_S_GRID)))) for _ in range(20)]
    worst, agree = 0.0, True
    for k, (a, b) in enumerate(cells):
        r, s = DEMO_R_GRID[a], DEMO_S_GRID[b]
        prior, sensor, params, actions = demo_setup(r)
        none, obs = oracle_amms(r, 0.6, 10.0)
        val, se = amms_gospa_general(prior, [actions[1]], sensor, params,
                                     SamplerConfig(m_general=100_000),
                                     np.random.default_rng(np.random.SeedSequence(7, spawn_key=(k,))),
                                     mode="vectorised", return_stderr=True)
        z = abs(val - obs) / se if se > 0 else (0.0 if abs(val - obs) < 1e-9 else math.inf)
        worst = max(worst, z)
        if abs((none - obs) - s) > 3 * se:
            agree &= (val + s < none) == oracle_observe(r, s, 0.6, 10.0)
    t_all = time.perf_counter() - t0
    ok = match == 1.0 and worst <= 3.0 and agree
    report("demo decision map", ok,
           f"efficient n_h=1 matches oracle on {100 * match:.2f}% of {om.size} cells "
           f"({t_map:.2f} s); oracle vs general m=1e5 at 20 cells: max |z| = {worst:.2f} "
           f"(<= 3), decisions agree = {agree}; total {t_all:.1f} s")


def test_speed_ordering():
    r_grid = DEMO_R_GRID[::10]
    demo_decision_map(r_grid=r_grid[:2], approach="efficient")   # compile kernels first
    demo_decision_map(r_grid=r_grid[:2], approach="general", m=2)
    t0 = time.perf_counter()
    ms = {"efficient": demo_decision_map(r_grid=r_grid, approach="efficient", n_h=1).ms_per_optimisation}
    for m in (10, 100, 1000):
        ms[f"general m={m}"] = demo_decision_map(r_grid=r_grid, approach="general", m=m,
                                                 seed=m).ms_per_optimisation
    vals = list(ms.values())
    ordered = all(a < b for a, b in zip(vals, vals[1:]))
    ratio = ms["general m=1000"] / ms["efficient"]
    report("sampler speed ordering", ordered and ratio >= 50,
           ", ".join(f"{k} {v:.3f} ms" for k, v in ms.items())
           + f"; ratio {ratio:.0f}x (>= 50); {time.perf_counter() - t0:.1f} s")


def test_small_noise_equivalence():
    t0 = time.perf_counter()
    mismatches = []
    for name in SCENARIOS:
        for p_d in PDS:
            spec = reference_scenario(name, p_d, 0.0, 0, sigma=1e-10)
            prior, sensor, actions = build_scenario(spec, np.random.default_rng(0))
            for T in (1, 2, 3):
                cfg = planning_config(Policy.SUBOPTIMAL, actions, T, 1, 0)
                a_sub = plan_suboptimal(prior, sensor, GospaParams(), cfg).first_action
                a_opt = plan_optimal(prior, sensor, GospaParams(), cfg).first_action
                if a_sub != a_opt:
                    mismatches.append(f"{name}/Pd={p_d}/T={T}: {a_sub} vs {a_opt}")
    report("small-noise suboptimal/optimal equivalence", not mismatches,
           f"27 configurations, {len(mismatches)} first-action mismatches "
           f"{mismatches if mismatches else ''}({time.perf_counter() - t0:.0f} s)")


def clutter_report(name, p_d):
    return evaluation(name, p_d, 0.01, 2, ("baseline", "suboptimal", "optimal"))


def test_bellman_dominance():
    rows, ok, strict = [], True, False
    for name in SCENARIOS:
        for p_d in PDS:
            rep = clutter_report(name, p_d)
            v_hat = np.array([r.amms_pred for r in rep.records if r.policy == "optimal"])
            v = np.array([r.amms_pred for r in rep.records if r.policy == "suboptimal"])
            se = math.hypot(np.std(v_hat, ddof=1) / math.sqrt(len(v_hat)) if len(v_hat) > 1 else 0.0,
                            np.std(v, ddof=1) / math.sqrt(len(v)) if len(v) > 1 else 0.0)
            good = v_hat.mean() <= v.mean() + 2 * se
            ok &= bool(good)
            strict |= bool(v_hat.mean() < v.mean())
            rows.append(f"{name[:3]}/{p_d}: {v_hat.mean():.2f} vs {v.mean():.2f} "
                        f"({100 * (v_hat.mean() / v.mean() - 1):+.1f}%)")
    report("Bellman dominance", ok and strict,
           f"V_hat <= V + 2 SE on all 9 clutter configs ({RUNS} runs), strict somewhere = {strict}; "
           + "; ".join(rows))


def test_bimodal_magnitude():
    rep = evaluation("bimodal", 1.0, 0.0, 2, ("baseline", "optimal"))
    agg = rep.aggregates["optimal"]
    lo, hi = 13.03 - 2 * 1.39, 13.03 + 2 * 1.39
    km2 = lo <= agg.amms_mean <= hi
    km = lo <= agg.amms_sqrt_mean <= hi
    # the empirical squared GOSPA of executed plans estimates the same expectation
    realised = np.array([r.realised_amms for r in rep.records if r.policy == "optimal"])
    se = np.std(realised, ddof=1) / math.sqrt(len(realised)) if len(realised) > 1 else math.inf
    consistent = abs(realised.mean() - agg.amms_mean) <= 3 * se
    report("bimodal magnitude spot-check", (km2 or km) and consistent,
           f"optimal AMMS-GOSPA over {RUNS} runs = {agg.amms_mean:.2f} +/- {agg.amms_std:.2f} km^2 "
           f"(sqrt {agg.amms_sqrt_mean:.2f} km); window [{lo:.2f}, {hi:.2f}]: km^2 {km2}, km {km}; "
           f"empirical GOSPA^2 mean {realised.mean():.2f} (SE {se:.2f}) within 3 SE = {consistent}")


def direction_configs():
    cfgs = [(n, p, 0.0, 2) for n in SCENARIOS for p in PDS]
    cfgs += [(n, p, 0.0, 3) for n in SCENARIOS for p in (PDS if FULL else (1.0,))]
    cfgs += [(n, p, 0.01, 2) for n in SCENARIOS for p in PDS]
    return cfgs


def test_direction():
    failures, n = [], 0
    for name, p_d, lam, T in direction_configs():
        pols = ("baseline", "suboptimal", "optimal") if lam > 0 else ("baseline", "optimal")
        rep = evaluation(name, p_d, lam, T, pols)
        agg = rep.aggregates
        base = agg["baseline"]
        for pol in pols[1:]:
            n += 1
            g = agg[pol]
            checks = {
                "rmse": base.rmse_mean <= g.rmse_mean,
                "rmse_stepsum": base.rmse_stepsum_mean <= g.rmse_stepsum_mean,
                "amms": base.amms_mean >= g.amms_mean,
            }
            bad = [k for k, v in checks.items() if not v]
            if bad:
                failures.append(f"{name}/Pd={p_d}/lfa={lam}/T={T}/{pol} fails {bad} "
                                f"(baseline rmse {base.rmse_mean:.2f}/{base.rmse_stepsum_mean:.2f} "
                                f"amms {base.amms_mean:.2f}; {pol} rmse {g.rmse_mean:.2f}/"
                                f"{g.rmse_stepsum_mean:.2f} amms {g.amms_mean:.2f})")
    report("direction tests", not failures,
           f"{n} baseline-vs-planner comparisons over {len(direction_configs())} configurations "
           f"({RUNS} runs each); failures: {failures if failures else 'none'}")


def _plan(name, p_d, lam, policy, T, seed=0):
    spec = reference_scenario(name, p_d, lam, seed)
    prior, sensor, actions = build_scenario(spec, np.random.default_rng(seed))
    pol = Policy(policy)
    n_h = 1 if lam == 0 or pol == Policy.OPTIMAL else 10
    cfg = planning_config(pol, actions, T, n_h, seed)
    return prior, sensor, actions, PLANNERS[pol](prior, sensor, GospaParams(), cfg)


def test_qualitative_structure():
    # (a) myopic first action is the grid action nearest the hypothesis centroid
    a_fail = []
    for name in SCENARIOS:
        for p_d in PDS:
            for lam in (0.0, 0.01):
                prior, sensor, actions, plan = _plan(name, p_d, lam, "myopic", 1)
                centres = np.array([a.center for a in actions[1:]])
                nearest = actions[1 + int(np.argmin(np.hypot(*(centres - prior.mean).T)))]
                if plan.first_action != nearest:
                    mass = [float(prior.weights[in_fov_mask(prior.points, a, sensor)].sum())
                            for a in (plan.first_action, nearest)]
                    a_fail.append(f"{name}/{p_d}/{lam} chose {plan.first_action} "
                                  f"(in-view mass {mass[0]:.3f} vs {mass[1]:.3f} at {nearest})")
    # (b) bimodal optimal plan uses two distinct spotlights that together cover both modes
    b_rows, b_ok = [], True
    for seed in range(5):
        prior, sensor, _, plan = _plan("bimodal", 1.0, 0.0, "optimal", 2, seed)
        spots = [a for a in plan.actions if a.is_observe]
        union = np.zeros(prior.n, dtype=bool)
        for a in spots:
            union |= in_fov_mask(prior.points, a, sensor)
        cover = (union[:50].mean(), union[50:].mean())
        good = len(spots) == 2 and spots[0] != spots[1] and min(cover) >= 0.75
        b_ok &= bool(good)
        b_rows.append(f"seed {seed}: {cover[0]:.2f}/{cover[1]:.2f}")
    # (c) P_d = 0.6 multi-step plans keep every spotlight over the central high-mass region
    c_fail = []
    for name in SCENARIOS:
        for policy in GOSPA_POLICIES:
            for lam, T in ((0.0, 2), (0.0, 3), (0.01, 2)):
                if lam > 0 and policy == "optimal" and T > 2:
                    continue
                prior, sensor, _, plan = _plan(name, 0.6, lam, policy, T)
                for a in plan.actions:
                    if not a.is_observe or math.dist(a.center, prior.mean) > sensor.fov_radius:
                        c_fail.append(f"{name}/{policy}/lfa={lam}/T={T}: {a}")
    ok = not a_fail and b_ok and not c_fail
    report("qualitative structure", ok,
           f"(a) myopic-nearest-centroid failures {a_fail or 'none'} over 18 configs; "
           f"(b) distinct spotlights covering both modes (>= 75% each): {b_ok} [{'; '.join(b_rows)}]; "
           f"(c) spotlights containing the centroid at every step, failures {c_fail or 'none'}")


def _random_set(rng):
    return rng.uniform(-20, 20, size=(int(rng.integers(0, 6)), 2))


def test_property_suites(tmp_path):
    rng = np.random.default_rng(99)
    params = GospaParams(c=10)
    # metric axioms
    axioms = True
    for _ in range(200):
        X, Y, Z = _random_set(rng), _random_set(rng), _random_set(rng)
        xy = gospa(X, Y, params).total
        axioms &= abs(xy - gospa(Y, X, params).total) <= 1e-9
        axioms &= gospa(X, X, params).total <= 1e-9
        axioms &= gospa(X, Z, params).total <= xy + gospa(Y, Z, params).total + 1e-9
    # analytic MS-GOSPA versus weighted squared GOSPA through the metric
    worst = 0.0
    for _ in range(500):
        n = int(rng.integers(1, 21))
        pts = rng.normal(0, float(rng.uniform(1, 15)), size=(n, 2))
        w = rng.dirichlet(np.ones(n))
        q = float(rng.random())
        post = PosteriorState(np.concatenate([[q], (1 - q) * w]), w, w @ pts, pts)
        brute_est = q * gospa([], [post.estimate_e], params).total ** 2 + sum(
            (1 - q) * w[k] * gospa([pts[k]], [post.estimate_e], params).total ** 2 for k in range(n))
        brute_phi = sum((1 - q) * w[k] * gospa([pts[k]], [], params).total ** 2 for k in range(n))
        worst = max(worst, abs(ms_gospa_estimate(post, params) - brute_est),
                    abs(ms_gospa_phi(post, params) - brute_phi),
                    abs(mms_gospa(post, params).mms - min(brute_est, brute_phi)))
    ms_ok = worst <= 1e-9
    # detection-sequence probabilities
    seq_worst = 0.0
    sensor = SensorModel.isotropic(10.0, 0.65, 0.0, 1.0)
    pts = rng.uniform(-15, 15, size=(5, 2))
    choices = [Action.none(), Action.observe(0, 0), Action.observe(9, -4)]
    for t in range(1, 5):
        for acts in itertools.product(choices, repeat=t):
            for i in range(len(pts) + 1):
                tot = sum(detection_seq_prob(s, i, acts, sensor, pts)
                          for s in itertools.product((0, 1), repeat=t))
                seq_worst = max(seq_worst, abs(tot - 1.0))
    seq_ok = seq_worst <= 1e-12
    # posterior normalisation and batch/sequential equivalence
    post_ok = True
    cl = SensorModel.isotropic(10.0, 0.8, 0.01, 0.5)
    for _ in range(50):
        n = int(rng.integers(1, 12))
        prior = BernoulliDiracPrior(float(rng.uniform(0.05, 0.95)), rng.dirichlet(np.ones(n)),
                                    rng.normal(0, 6, size=(n, 2)))
        hist = []
        for _ in range(3):
            a = Action.observe(*rng.uniform(-6, 6, size=2))
            i = int(rng.choice(n + 1, p=prior.probabilities()))
            vis = i > 0 and math.dist(prior.points[i - 1], a.center) <= cl.fov_radius
            hist.append((a, sample_scan(i, int(vis and rng.random() < cl.p_d), a, cl, prior, rng)))
        post = update_posterior(prior, hist, cl)
        post_ok &= abs(post.p_hyp.sum() - 1) <= 1e-10 and abs(post.w_post.sum() - 1) <= 1e-10
        seq = prior
        for step in hist:
            p1 = update_posterior(seq, [step], cl)
            seq = BernoulliDiracPrior(1 - p1.p0, p1.w_post, prior.points)
        post_ok &= bool(np.allclose(seq.weights, post.w_post, rtol=1e-10, atol=1e-14))
        post_ok &= bool(np.isclose(1 - seq.r, post.p0, rtol=1e-10, atol=1e-14))
    # seed determinism of every CLI artifact
    commands = [
        ["demo", "--approach", "efficient", "--nh", "1"],
        ["demo", "--approach", "general", "--m", "10", "--seed", "3"],
        ["demo", "--approach", "oracle"],
        ["plan", "--scenario", "bimodal", "--policy", "optimal", "--T", "2", "--pd", "1.0", "--lfa", "0"],
        ["plan", "--scenario", "trimodal", "--policy", "suboptimal", "--T", "2", "--pd", "0.9",
         "--lfa", "0.01", "--nh", "2", "--seed", "5"],
    ]
    outputs = []
    for rep in range(2):
        out = tmp_path / f"rep{rep}"
        for cmd in commands:
            res = CliRunner().invoke(cli, cmd + ["--out", str(out)])
            assert res.exit_code == 0, res.output
        res = CliRunner().invoke(cli, ["evaluate", "--scenario", "bimodal", "--policy", "baseline",
                                       "--policy", "optimal", "--T", "2", "--pd", "0.9", "--runs", "2",
                                       "--seed", "4", "--out", str(out / "eval.csv"),
                                       "--records", str(out / "runs.jsonl")])
        assert res.exit_code == 0, res.output
        outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    cli_ok = outputs[0] == outputs[1] and len(outputs[0]) == 12
    ok = axioms and ms_ok and seq_ok and post_ok and cli_ok
    report("property suites", ok,
           f"metric axioms (200 triples) {bool(axioms)}; MS-GOSPA vs brute force (500 posteriors) "
           f"max err {worst:.1e}; sequence sums t<=4 max err {seq_worst:.1e}; posterior "
           f"normalisation/batch-sequential {bool(post_ok)}; {len(outputs[0])} CLI artifacts "
           f"byte-identical {cli_ok}")
