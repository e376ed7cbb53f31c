"""Experiment orchestration: run plans of (scenario, method, seed) cells,
persist results.csv, and sweep single knobs.

results.csv schema (v1):
    scenario,method,seed,T,T_norm,iters,wallclock,converged,cache_count,error
sweep csv schema (v1):
    scenario,method,seed,knob,value,T,ci_hops,di_hops,iters,wallclock,error
T_norm is per (scenario, seed), against the worst method of that cell group.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .baselines import cloud_ec, edge_ec, run_sep_lfu
from .errors import NetplaceError, ParseError
from .gcfw import GcfwConfig, gcfw_run
from .gp import GpConfig, gp_run_fluid, gp_run_measured
from .model import solve_traffic, total_cost
from .scenarios import ScenarioSpec, expand, preset

RESULTS_COLUMNS = ["scenario", "method", "seed", "T", "T_norm", "iters",
                   "wallclock", "converged", "cache_count", "loop_violations",
                   "error"]
SWEEP_COLUMNS = ["scenario", "method", "seed", "knob", "value", "T",
                 "ci_hops", "di_hops", "iters", "wallclock", "error"]

KNOBS = ("rate_scale", "result_size_ratio", "cache_price", "stepsize")


@dataclass
class ExperimentPlan:
    scenarios: list  # ScenarioSpec
    methods: list  # {"name": ..., **config}
    seeds: list
    out_dir: str = "results"

    def to_json(self):
        return json.dumps({
            "scenarios": [json.loads(s.to_json()) for s in self.scenarios],
            "methods": self.methods,
            "seeds": self.seeds,
            "out_dir": self.out_dir,
        }, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad plan JSON: {exc}") from exc
        scenarios = []
        for s in d.get("scenarios", []):
            if isinstance(s, str):
                scenarios.append(preset(s))
            else:
                scenarios.append(ScenarioSpec.from_json(json.dumps(s)))
        return cls(scenarios=scenarios, methods=d["methods"],
                   seeds=d.get("seeds", [0]), out_dir=d.get("out_dir", "results"))


@dataclass
class CellResult:
    scenario: str
    method: str
    seed: int
    T: float = math.nan
    iters: int = 0
    wallclock: float = 0.0
    converged: bool = False
    cache_count: float = 0.0
    loop_violations: int = 0
    error: str = ""
    ci_hops: float = math.nan
    di_hops: float = math.nan


def hop_counts(scenario, traffic):
    """Fluid mean travel distance (hops) of CI and DI packets."""
    total_rate = scenario.tasks.total_rate()
    ci_cross = 0.0
    for mk in scenario.ci_keys:
        t = traffic.tc[mk]
        rows = traffic.strategy.ci[mk]
        topo = scenario.topo
        for i in range(topo.n):
            if t[i] > 0.0:
                base = topo.slot_base[i]
                ci_cross += t[i] * sum(rows.phi[base:base + topo.degree(i)])
    di_inject = sum(sum(gv) for gv in traffic.g.values())
    di_cross = 0.0
    for k in scenario.di_keys:
        t = traffic.td[k]
        rows = traffic.strategy.di[k]
        topo = scenario.topo
        for i in range(topo.n):
            if t[i] > 0.0:
                base = topo.slot_base[i]
                di_cross += t[i] * sum(rows.phi[base:base + topo.degree(i)])
    ci_hops = ci_cross / total_rate if total_rate > 0 else 0.0
    di_hops = di_cross / di_inject if di_inject > 0 else 0.0
    return ci_hops, di_hops


def run_method(scenario, method, config=None):
    """Run one method on an expanded scenario; returns a CellResult without
    scenario/seed metadata filled in."""
    config = dict(config or {})
    config.pop("name", None)
    out = CellResult(scenario.name, method, -1)
    t0 = time.perf_counter()
    if method == "gp":
        cfg = GpConfig(**{k: v for k, v in config.items()
                          if k in GpConfig.__dataclass_fields__})
        res = gp_run_fluid(scenario, cfg)
        out.T = res.trace[-1].T
        out.iters = len(res.trace)
        out.converged = res.converged
        out.cache_count = res.trace[-1].cache_count
        out.loop_violations = res.loop_violations
        if res.final_traffic is not None:
            out.ci_hops, out.di_hops = hop_counts(scenario, res.final_traffic)
    elif method == "gp_measured":
        cfg = GpConfig(**{k: v for k, v in config.items()
                          if k in GpConfig.__dataclass_fields__})
        res = gp_run_measured(scenario, cfg)
        out.T = res.trace[-1].T
        out.iters = len(res.trace)
        out.cache_count = res.trace[-1].cache_count
    elif method == "gcfw":
        cfg = GcfwConfig(iters=int(config.get("iters", 100)))
        res = gcfw_run(scenario, cfg)
        ts = solve_traffic(scenario, res.strategy)
        out.T = total_cost(ts, scenario.costs, strict=False)
        out.iters = cfg.iters
        out.converged = True
        out.cache_count = sum(ts.cache_count)
        out.loop_violations = res.loop_violations
        out.ci_hops, out.di_hops = hop_counts(scenario, ts)
    elif method == "cloud_ec":
        res = cloud_ec(scenario, **config)
        out.T = res.final_T
        out.iters = len(res.trace)
        out.converged = res.converged
        out.cache_count = res.trace[-1].extra
    elif method == "edge_ec":
        res = edge_ec(scenario, **config)
        out.T = res.final_T
        out.iters = len(res.trace)
        out.converged = res.converged
        out.cache_count = res.trace[-1].extra
    elif method == "sep_lfu":
        res = run_sep_lfu(scenario, **config)
        out.T = res.best_T
        out.iters = res.best_slot
        out.cache_count = float(sum(res.capacities))
    else:
        raise NetplaceError(f"unknown method {method!r}")
    out.wallclock = time.perf_counter() - t0
    return out


def _run_cell(args):
    spec_json, method, seed = args
    spec = ScenarioSpec.from_json(spec_json).replace(seed=seed)
    try:
        scenario = expand(spec)
        cfg = dict(method)
        name = cfg.pop("name")
        cell = run_method(scenario, name, cfg)
    except Exception as exc:  # per-cell failure: record, keep going
        cell = CellResult(spec.name, method.get("name", "?"), seed,
                          error=f"{type(exc).__name__}: {exc}")
    cell.scenario = spec.name
    cell.seed = seed
    return cell


def run_plan(plan, workers=0):
    """Execute every (scenario, method, seed) cell; returns rows and writes
    out_dir/results.csv with per-(scenario, seed) worst-method normalization."""
    cells = []
    for spec in plan.scenarios:
        for method in plan.methods:
            for seed in plan.seeds:
                cells.append((spec.to_json(), method, seed))
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]

    worst = {}
    for r in results:
        if not r.error and not math.isnan(r.T):
            key = (r.scenario, r.seed)
            worst[key] = max(worst.get(key, 0.0), r.T)
    rows = []
    for r in results:
        scale = worst.get((r.scenario, r.seed), math.nan)
        t_norm = r.T / scale if scale and not math.isnan(r.T) else math.nan
        rows.append({
            "scenario": r.scenario, "method": r.method, "seed": r.seed,
            "T": r.T, "T_norm": t_norm, "iters": r.iters,
            "wallclock": round(r.wallclock, 4), "converged": r.converged,
            "cache_count": r.cache_count,
            "loop_violations": r.loop_violations, "error": r.error,
        })
    os.makedirs(plan.out_dir, exist_ok=True)
    path = os.path.join(plan.out_dir, "results.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULTS_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return rows


def _apply_knob(spec, method, knob, value):
    if knob == "rate_scale":
        return spec.replace(rate_scale=value), method
    if knob == "result_size_ratio":
        return spec.replace(result_size=value * spec.data_size), method
    if knob == "cache_price":
        return spec.replace(b_mean=value), method
    if knob == "stepsize":
        m2 = dict(method)
        if m2.get("name") == "gp":
            m2["stepsize"] = value
        return spec, m2
    raise NetplaceError(f"unknown sweep knob {knob!r}; have {KNOBS}")


def sweep(plan, knob, values, workers=0):
    """Re-run the plan at each knob value; records fluid CI/DI hop distances
    (meaningful for the optimizer methods)."""
    rows = []
    for value in values:
        for spec in plan.scenarios:
            for method in plan.methods:
                spec2, method2 = _apply_knob(spec, method, knob, value)
                for seed in plan.seeds:
                    cell = _run_cell((spec2.replace(seed=seed).to_json(),
                                      method2, seed))
                    rows.append({
                        "scenario": cell.scenario, "method": cell.method,
                        "seed": seed, "knob": knob, "value": value,
                        "T": cell.T, "ci_hops": cell.ci_hops,
                        "di_hops": cell.di_hops, "iters": cell.iters,
                        "wallclock": round(cell.wallclock, 4),
                        "error": cell.error,
                    })
    os.makedirs(plan.out_dir, exist_ok=True)
    path = os.path.join(plan.out_dir, f"sweep_{knob}.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return rows
