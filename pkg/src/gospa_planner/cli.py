"""Command-line interface: ``gospa-planner demo | plan | evaluate``.

Exit codes: 0 success, 1 domain or I/O error, 2 usage error.
"""
from __future__ import annotations

import dataclasses
import functools
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import io as out_io
from .config import RunConfig, load_config
from .errors import PlannerError
from .metric import GospaParams
from .planners import PLANNERS, Policy
from .scenarios import (build_scenario, default_n_h, demo_decision_map, evaluate_policies,
                        oracle_map, reference_scenario, planning_config)

WORKERS_ENV = "GOSPA_PLANNER_WORKERS"


def _domain_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except PlannerError as exc:
            raise click.ClickException(f"{type(exc).__name__}: {exc}") from exc
        except OSError as exc:
            raise click.ClickException(f"I/O error: {exc}") from exc
    return wrapper


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _merge(cfg: RunConfig, section: str, **overrides) -> RunConfig:
    """Apply command-line overrides that were actually given."""
    given = {k: v for k, v in overrides.items() if v is not None}
    if not given:
        return cfg
    sub = getattr(cfg, section).model_copy(update=given)
    return cfg.model_copy(update={section: type(sub).model_validate(sub.model_dump())})


@click.group()
@click.version_option(package_name="artifact")
def cli():
    """GOSPA-based sensor management planner."""


@cli.command()
@click.option("--approach", type=click.Choice(["general", "efficient", "oracle"]), default="efficient",
              show_default=True)
@click.option("--m", "m", type=click.IntRange(min=1), default=1000, show_default=True,
              help="Samples per hypothesis for the general approach.")
@click.option("--nh", type=click.IntRange(min=1), default=1, show_default=True,
              help="Samples per detection sequence for the efficient approach.")
@click.option("--mode", type=click.Choice(["first_principles", "vectorised"]),
              default="first_principles", show_default=True, help="General-approach implementation.")
@click.option("--pd", type=click.FloatRange(0.0, 1.0), default=0.6, show_default=True)
@click.option("--c", "c", type=click.FloatRange(min=0.0, min_open=True), default=10.0, show_default=True)
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="out", show_default=True)
@_domain_errors
def demo(approach, m, nh, mode, pd, c, seed, out_dir):
    """Single-hypothesis decision map over existence probability and sensing cost."""
    dmap = demo_decision_map(p_d=pd, c=c, approach=approach, m=m, n_h=nh, seed=seed, mode=mode)
    stem = {"general": f"demo_general_m{m}", "efficient": f"demo_efficient_nh{nh}",
            "oracle": "demo_oracle"}[approach]
    out = Path(out_dir)
    _write(out / f"{stem}.csv", out_io.decision_map_csv(dmap))
    _write(out / f"{stem}.svg", out_io.decision_map_svg(dmap))
    agree = float(np.mean(dmap.observe == oracle_map(dmap.r_grid, dmap.s_grid, pd, c)))
    click.echo(f"wrote {out / stem}.csv and .svg")
    click.echo(f"mean per-optimisation runtime: {dmap.ms_per_optimisation:.3f} ms")
    click.echo(f"agreement with closed-form oracle: {100 * agree:.2f}% of cells")


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--scenario", type=click.Choice(["unimodal", "bimodal", "trimodal"]))
@click.option("--policy", type=click.Choice([p.value for p in Policy]))
@click.option("--T", "horizon", type=click.IntRange(min=1))
@click.option("--pd", type=click.FloatRange(0.0, 1.0))
@click.option("--lfa", type=click.FloatRange(min=0.0), help="False alarms per km^2.")
@click.option("--sigma", type=click.FloatRange(min=0.0, min_open=True), help="Measurement std (km).")
@click.option("--nh", type=click.IntRange(min=1))
@click.option("--seed", type=click.IntRange(min=0))
@click.option("--out", "out_dir", type=click.Path(file_okay=False))
@_domain_errors
def plan(config_path, scenario, policy, horizon, pd, lfa, sigma, nh, seed, out_dir):
    """Plan one action sequence (or conditional policy) for a scenario."""
    cfg = load_config(config_path) if config_path else RunConfig()
    cfg = _merge(cfg, "scenario", name=scenario, p_d=pd, lambda_fa_per_km2=lfa, sigma_km=sigma)
    cfg = _merge(cfg, "planning", policy=policy, horizon_T=horizon, n_h=nh)
    if seed is not None:
        cfg = cfg.model_copy(update={"seed": seed})
    if out_dir is not None:
        cfg = cfg.model_copy(update={"output_dir": out_dir})
    sc, pl = cfg.scenario, cfg.planning
    spec = reference_scenario(sc.name, sc.p_d, sc.lambda_fa_per_km2, cfg.seed, sc.sigma_km,
                          sc.fov_radius_km, sc.existence_r)
    prior, sensor, actions = build_scenario(spec, np.random.default_rng(cfg.seed))
    pol = Policy(pl.policy)
    n_h = pl.n_h or default_n_h(pol, sensor.clutter_rate)
    pcfg = planning_config(pol, actions, pl.horizon_T, n_h, cfg.seed, pl.discount)
    pcfg = dataclasses.replace(pcfg, sensing_cost=pl.sensing_cost_km2)
    result = PLANNERS[pol](prior, sensor, GospaParams(c=sc.cutoff_c_km), pcfg)
    meta = {"schema_version": cfg.schema_version, "scenario": sc.model_dump(),
            "planning": {**pl.model_dump(), "n_h": n_h}, "seed": cfg.seed,
            "n_hypotheses": prior.n, "n_actions": len(actions)}
    stem = f"plan_{sc.name}_{pol.value}_T{pcfg.horizon_T}"
    out = Path(cfg.output_dir)
    _write(out / f"{stem}.json", out_io.plan_json(result, meta))
    _write(out / f"{stem}.svg", out_io.plan_svg(prior.points, result, sensor))
    click.echo(f"wrote {out / stem}.json and .svg")
    click.echo("actions: " + " -> ".join(str(a) for a in result.actions))
    click.echo(f"objective {result.cost:.4f}  AMMS-GOSPA {result.amms_total:.4f} km^2  "
               f"RMSE {result.rmse:.4f} km  ({result.diagnostics['wall_time_s']:.2f} s)")


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--scenario", "scenarios", multiple=True,
              type=click.Choice(["unimodal", "bimodal", "trimodal"]))
@click.option("--policy", "policies", multiple=True, type=click.Choice([p.value for p in Policy]))
@click.option("--T", "horizon", type=click.IntRange(min=1))
@click.option("--pd", "pds", multiple=True, type=click.FloatRange(0.0, 1.0))
@click.option("--lfa", "lfas", multiple=True, type=click.FloatRange(min=0.0))
@click.option("--runs", type=click.IntRange(min=1))
@click.option("--seed", type=click.IntRange(min=0))
@click.option("--workers", type=click.IntRange(min=1),
              help=f"Worker processes (default: ${WORKERS_ENV} or 1).")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default="out/evaluation.csv",
              show_default=True)
@click.option("--records", "records_path", type=click.Path(dir_okay=False),
              help="Optional JSON-lines file with per-run records.")
@_domain_errors
def evaluate(config_path, scenarios, policies, horizon, pds, lfas, runs, seed, workers, out_path,
             records_path):
    """Monte Carlo evaluation table (one row per configuration and policy)."""
    cfg = load_config(config_path) if config_path else RunConfig()
    sc, pl, ev = cfg.scenario, cfg.planning, cfg.evaluation
    scenarios = scenarios or (sc.name,)
    policies = policies or tuple(ev.policies)
    pds = pds or (sc.p_d,)
    lfas = lfas or (sc.lambda_fa_per_km2,)
    T = horizon or pl.horizon_T
    runs = runs or ev.runs
    seed = cfg.seed if seed is None else seed
    workers = workers or int(os.environ.get(WORKERS_ENV, ev.workers))
    params = GospaParams(c=sc.cutoff_c_km)
    reports = []
    for name in scenarios:
        for lfa in lfas:
            for pd in pds:
                spec = reference_scenario(name, pd, lfa, seed, sc.sigma_km, sc.fov_radius_km,
                                      sc.existence_r)
                n_h = {p: pl.n_h for p in policies} if pl.n_h else None
                reports.append(evaluate_policies(spec, policies, T, runs, seed, params, n_h,
                                                 pl.discount, workers))
                click.echo(f"{name} p_d={pd} lambda_fa={lfa} T={T}: done")
    _write(Path(out_path), out_io.evaluation_csv(reports))
    if records_path:
        _write(Path(records_path), out_io.records_jsonl(reports))
    click.echo(f"wrote {out_path}")


def main(argv=None):
    try:
        cli.main(args=argv, prog_name="gospa-planner", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    sys.exit(0)


if __name__ == "__main__":
    main()
