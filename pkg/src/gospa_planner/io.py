"""Deterministic CSV, JSON and SVG writers."""
from __future__ import annotations

import csv
import io
import json
from typing import Sequence

import numpy as np

from .planners import PlanResult
from .scenarios import DecisionMap, RunReport
from .sensor import SensorModel

NO_OBS_COLOUR = "#1f4e9c"
OBS_COLOUR = "#f5d327"
STEP_COLOURS = ("#d62728", "#2ca02c", "#1f77b4", "#9467bd")

EVAL_COLUMNS = (
    "scenario", "p_d", "lambda_fa", "T", "policy", "rmse_mean", "rmse_std", "amms_mean",
    "amms_std", "runs", "seed", "amms_sqrt_mean", "rmse_stepsum_mean", "rmse_stepsum_std",
    "realised_amms_mean", "realised_amms_std",
)


def fmt(x) -> str:
    """Shortest round-trip text for floats; plain str otherwise."""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def decision_map_csv(dmap: DecisionMap) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["r", "s", "action"])
    for a, r in enumerate(dmap.r_grid):
        for b, s in enumerate(dmap.s_grid):
            w.writerow([f"{r:.2f}", f"{s:.1f}", "observe" if dmap.observe[a, b] else "no_observation"])
    return buf.getvalue()


def decision_map_svg(dmap: DecisionMap, cell: int = 4) -> str:
    """Sensing cost on the horizontal axis, existence probability vertical."""
    n_r, n_s = dmap.observe.shape
    left, top, pad = 50, 20, 40
    width = left + n_s * cell + 20
    height = top + n_r * cell + pad
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>']
    for a in range(n_r):
        y = top + (n_r - 1 - a) * cell
        for b in range(n_s):
            colour = OBS_COLOUR if dmap.observe[a, b] else NO_OBS_COLOUR
            out.append(f'<rect x="{left + b * cell}" y="{y}" width="{cell}" height="{cell}" '
                       f'fill="{colour}"/>')
    base = top + n_r * cell
    out.append(f'<text x="{left + n_s * cell / 2:.1f}" y="{base + 28}" font-size="12" '
               f'text-anchor="middle">sensing cost s ({dmap.s_grid[0]:g} to {dmap.s_grid[-1]:g})</text>')
    out.append(f'<text x="14" y="{top + n_r * cell / 2:.1f}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 14 {top + n_r * cell / 2:.1f})">existence probability r</text>')
    out.append(f'<text x="{left}" y="{base + 14}" font-size="10">{dmap.approach}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _action_json(a) -> dict:
    return a.to_dict()


def plan_json(plan: PlanResult, meta: dict) -> str:
    diag = {k: v for k, v in plan.diagnostics.items() if k != "wall_time_s"}
    doc = {
        "meta": meta,
        "policy": plan.policy.value,
        "first_action": _action_json(plan.first_action),
        "actions": [_action_json(a) for a in plan.actions],
        "cost": plan.cost,
        "per_step_costs": list(plan.per_step_costs),
        "amms_per_step_km2": list(plan.amms_per_step),
        "mse_per_step_km2": list(plan.mse_per_step),
        "amms_total_km2": plan.amms_total,
        "rmse_km": plan.rmse,
        "rmse_stepsum_km": plan.rmse_stepsum,
        "policy_tree": plan.policy_tree,
        "diagnostics": diag,
    }
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def plan_svg(points: np.ndarray, plan: PlanResult, sensor: SensorModel, size: int = 480) -> str:
    """Hypotheses as dots and each planned spotlight as a circle coloured by step."""
    centres = [a.center for a in plan.actions if a.center is not None]
    second = [d["action"]["center"] for d in plan.policy_tree.get("second_step", [])[:4]
              if d["action"].get("kind") == "observe"]
    xs = np.concatenate([points[:, 0]] + [[c[0] - sensor.fov_radius, c[0] + sensor.fov_radius]
                                          for c in centres + second])
    ys = np.concatenate([points[:, 1]] + [[c[1] - sensor.fov_radius, c[1] + sensor.fov_radius]
                                          for c in centres + second])
    lo_x, hi_x, lo_y, hi_y = xs.min() - 2, xs.max() + 2, ys.min() - 2, ys.max() + 2
    span = max(hi_x - lo_x, hi_y - lo_y)
    scale = size / span

    def px(x, y):
        return (x - lo_x) * scale, size - (y - lo_y) * scale

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">', f'<rect width="{size}" height="{size}" fill="white"/>']
    for x, y in points:
        u, v = px(x, y)
        out.append(f'<circle cx="{u:.2f}" cy="{v:.2f}" r="1.5" fill="#555555"/>')
    rad = sensor.fov_radius * scale
    if plan.policy_tree.get("kind") == "conditional":
        drawn = [(tuple(plan.actions[0].center), 0)] if plan.actions[0].center else []
        drawn += [(tuple(c), 1) for c in second]
    else:
        drawn = [(c, k) for k, c in enumerate(a.center for a in plan.actions) if c is not None]
    for c, k in drawn:
        u, v = px(*c)
        colour = STEP_COLOURS[min(k, len(STEP_COLOURS) - 1)]
        out.append(f'<circle cx="{u:.2f}" cy="{v:.2f}" r="{rad:.2f}" fill="{colour}" '
                   f'fill-opacity="0.12" stroke="{colour}" stroke-width="1.5"/>')
        out.append(f'<path d="M{u - 4:.2f},{v:.2f} L{u + 4:.2f},{v:.2f} M{u:.2f},{v - 4:.2f} '
                   f'L{u:.2f},{v + 4:.2f}" stroke="{colour}" stroke-width="1.5"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def evaluation_rows(reports: Sequence[RunReport]) -> list[dict]:
    rows = []
    for rep in reports:
        for policy, agg in rep.aggregates.items():
            rows.append({
                "scenario": rep.scenario, "p_d": rep.p_d, "lambda_fa": rep.lambda_fa, "T": rep.T,
                "policy": policy, "rmse_mean": agg.rmse_mean, "rmse_std": agg.rmse_std,
                "amms_mean": agg.amms_mean, "amms_std": agg.amms_std, "runs": agg.runs,
                "seed": rep.seed, "amms_sqrt_mean": agg.amms_sqrt_mean,
                "rmse_stepsum_mean": agg.rmse_stepsum_mean, "rmse_stepsum_std": agg.rmse_stepsum_std,
                "realised_amms_mean": agg.realised_amms_mean,
                "realised_amms_std": agg.realised_amms_std,
            })
    return rows


def evaluation_csv(reports: Sequence[RunReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EVAL_COLUMNS)
    for row in evaluation_rows(reports):
        w.writerow([fmt(row[c]) for c in EVAL_COLUMNS])
    return buf.getvalue()


def records_jsonl(reports: Sequence[RunReport]) -> str:
    """Per-run records, one JSON object per line (timings omitted)."""
    lines = []
    for rep in reports:
        for rec in rep.records:
            d = rec.to_dict()
            d.pop("plan_time_s")
            d["scenario"] = rep.scenario
            lines.append(json.dumps(d, sort_keys=True, default=_json_default))
    return "\n".join(lines) + "\n"


def read_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))
