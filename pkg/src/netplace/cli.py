"""Command-line harness.

Subcommands: gen-scenario, optimize, simulate, compare, sweep, validate.
All accept --seed and --out DIR; exit code is nonzero on any hard error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from .baselines import cloud_ec, edge_ec, run_sep_lfu
from .errors import NetplaceError
from .gcfw import GcfwConfig, gcfw_run
from .gp import GpConfig, gp_run_fluid, gp_run_measured, randomized_round
from .harness import ExperimentPlan, run_plan, sweep
from .model import (
    check_loop_free,
    dump_strategy,
    load_strategy,
    solve_traffic,
    total_cost,
    validate_strategy,
)
from .packetsim import PacketSimulator, sim_run
from .routing import build_static_blocked_sets, sep_route
from .scenarios import ScenarioSpec, expand, preset, PRESETS


def _load_scenario(args):
    if args.scenario:
        with open(args.scenario) as fh:
            spec = ScenarioSpec.from_json(fh.read())
    elif args.preset:
        spec = preset(args.preset)
    else:
        raise NetplaceError("need --scenario FILE or --preset NAME")
    if args.seed is not None:
        spec = spec.replace(seed=args.seed)
    return spec, expand(spec)


def _outdir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerows(rows)


def cmd_gen_scenario(args):
    spec, scenario = _load_scenario(args)
    out = _outdir(args)
    path = os.path.join(out, f"{spec.name}.json")
    with open(path, "w") as fh:
        fh.write(spec.to_json() + "\n")
    print(f"wrote {path}: |V|={scenario.topo.n} |E|={scenario.topo.num_arcs} "
          f"tasks={len(scenario.tasks)} ci={len(scenario.ci_keys)} "
          f"di={len(scenario.di_keys)}")
    return 0


def cmd_optimize(args):
    spec, scenario = _load_scenario(args)
    out = _outdir(args)
    tag = f"{spec.name}_{args.method}"
    if args.method == "gcfw":
        res = gcfw_run(scenario, GcfwConfig(iters=args.iters))
        _write_csv(os.path.join(out, f"{tag}_trace.csv"),
                   ["iter", "G", "M", "N", "T"],
                   [(r.n, r.G, r.M, r.N, r.T) for r in res.trace])
        strategy = res.strategy
        summary = {"method": "gcfw", "best_G": res.best_G,
                   "loop_violations": res.loop_violations}
    elif args.method == "gp":
        cfg = GpConfig(stepsize=args.alpha, max_slots=args.slots,
                       seed=args.seed or 0)
        res = gp_run_measured(scenario, cfg) if args.measured else gp_run_fluid(scenario, cfg)
        _write_csv(os.path.join(out, f"{tag}_trace.csv"),
                   ["slot", "T", "residual", "total_cache_size"],
                   [(r.slot, r.T, r.residual, r.cache_count) for r in res.trace])
        strategy = res.strategy
        summary = {"method": "gp", "converged": res.converged,
                   "slots": len(res.trace),
                   "loop_violations": res.loop_violations}
    elif args.method in ("cloud_ec", "edge_ec", "sep_lfu"):
        if args.method == "cloud_ec":
            res = cloud_ec(scenario, max_slots=args.slots)
        elif args.method == "edge_ec":
            res = edge_ec(scenario, max_slots=args.slots)
        else:
            res = run_sep_lfu(scenario, slots=args.slots)
        _write_csv(os.path.join(out, f"{tag}_trace.csv"),
                   ["slot", "T", "residual", "cache"],
                   [(r.slot, r.T, r.residual, r.extra) for r in res.trace])
        strategy = res.strategy
        summary = {"method": args.method, "best_T": res.best_T,
                   "final_T": res.final_T}
    else:
        raise NetplaceError(f"unknown method {args.method!r}")
    ts = solve_traffic(scenario, strategy)
    summary["T"] = total_cost(ts, scenario.costs, strict=False)
    summary["loop_free"] = check_loop_free(strategy).ok
    with open(os.path.join(out, f"{tag}_strategy.json"), "w") as fh:
        json.dump(dump_strategy(strategy), fh, indent=1, sort_keys=True)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_simulate(args):
    spec, scenario = _load_scenario(args)
    out = _outdir(args)
    seed = args.seed or 0
    if args.controller == "gp":
        cfg = GpConfig(max_slots=10 ** 9, seed=seed)
        sim = PacketSimulator(scenario, seed=seed)
        res = gp_run_measured(scenario, cfg, sim=sim, horizon=args.horizon)
        audit = sim.audit()
        unstable = {"links": sorted(sim.unstable_links),
                    "cpus": sorted(sim.unstable_cpus)}
        rows = [(r.slot, "-", "T_measured", r.T) for r in res.trace]
    else:
        blocked = build_static_blocked_sets(scenario)
        strategy = sep_route(scenario, blocked)
        decision = randomized_round(scenario, strategy, seed)
        res = sim_run(scenario, strategy, decision, args.horizon, seed=seed)
        measurements = res.measurements
        audit = res.audit
        unstable = {"links": sorted(res.unstable_links),
                    "cpus": sorted(res.unstable_cpus)}
        rows = []
        t_acc = 0.0
        for m in measurements:
            t_acc += m.window
            for a, f in enumerate(m.F):
                if f > 0:
                    rows.append((t_acc, f"link{scenario.topo.arcs[a]}", "F", f))
            for i, g in enumerate(m.G):
                if g > 0:
                    rows.append((t_acc, f"node{i}", "G", g))
            rows.append((t_acc, "-", "mean_latency", m.mean_latency))
    _write_csv(os.path.join(out, f"{spec.name}_measurements.csv"),
               ["t", "id", "metric", "value"], rows)
    summary = {"audit": audit, "unstable": unstable}
    with open(os.path.join(out, f"{spec.name}_events.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_compare(args):
    with open(args.plan) as fh:
        plan = ExperimentPlan.from_json(fh.read())
    if args.out:
        plan.out_dir = args.out
    rows = run_plan(plan, workers=args.workers)
    bad = [r for r in rows if r["error"]]
    print(f"{len(rows)} cells -> {os.path.join(plan.out_dir, 'results.csv')}"
          + (f" ({len(bad)} failed)" if bad else ""))
    return 1 if len(bad) == len(rows) and rows else 0


def cmd_sweep(args):
    with open(args.plan) as fh:
        plan = ExperimentPlan.from_json(fh.read())
    if args.out:
        plan.out_dir = args.out
    values = [float(v) for v in args.values.split(",")]
    rows = sweep(plan, args.knob, values, workers=args.workers)
    print(f"{len(rows)} rows -> {os.path.join(plan.out_dir, f'sweep_{args.knob}.csv')}")
    return 0


def cmd_validate(args):
    spec, scenario = _load_scenario(args)
    with open(args.strategy) as fh:
        data = json.load(fh)
    strategy, load_issues = load_strategy(data, scenario.topo,
                                          scenario.ci_keys, scenario.di_keys)
    rep = validate_strategy(strategy, scenario.topo, scenario.catalogs)
    loops = check_loop_free(strategy)
    for issue in load_issues:
        print("load:", issue)
    print(rep.summary())
    if not loops.ok:
        for ck, cyc in loops.cycles().items():
            print(f"cycle in {ck}: {cyc}")
    ok = rep.ok and loops.ok and not load_issues
    return 0 if ok else 1


def build_parser():
    p = argparse.ArgumentParser(prog="netplace",
                                description="caching/forwarding/computation "
                                            "placement optimization toolkit")
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp):
        sp.add_argument("--scenario", help="scenario spec JSON file")
        sp.add_argument("--preset", choices=sorted(PRESETS),
                        help="named built-in scenario")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default="out")

    sp = sub.add_parser("gen-scenario", help="write a scenario spec file")
    common(sp)
    sp.set_defaults(fn=cmd_gen_scenario)

    sp = sub.add_parser("optimize", help="run one optimizer/baseline")
    common(sp)
    sp.add_argument("--method", required=True,
                    choices=["gcfw", "gp", "sep_lfu", "cloud_ec", "edge_ec"])
    sp.add_argument("--iters", type=int, default=100, help="GCFW iterations")
    sp.add_argument("--alpha", type=float, default=0.01, help="GP stepsize")
    sp.add_argument("--slots", type=int, default=5000, help="slot budget")
    sp.add_argument("--measured", action="store_true",
                    help="drive GP from packet-simulator measurements")
    sp.set_defaults(fn=cmd_optimize)

    sp = sub.add_parser("simulate", help="packet-level simulation")
    common(sp)
    sp.add_argument("--controller", choices=["gp", "static"], default="static")
    sp.add_argument("--horizon", type=float, default=1000.0)
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("compare", help="run an experiment plan")
    sp.add_argument("--plan", required=True)
    sp.add_argument("--out", default=None)
    sp.add_argument("--workers", type=int, default=0)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(fn=cmd_compare)

    sp = sub.add_parser("sweep", help="re-run a plan over a knob")
    sp.add_argument("--plan", required=True)
    sp.add_argument("--knob", required=True,
                    choices=["rate_scale", "result_size_ratio", "cache_price",
                             "stepsize"])
    sp.add_argument("--values", required=True, help="comma-separated values")
    sp.add_argument("--out", default=None)
    sp.add_argument("--workers", type=int, default=0)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("validate", help="validate a strategy file")
    common(sp)
    sp.add_argument("--strategy", required=True)
    sp.set_defaults(fn=cmd_validate)

    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except NetplaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
