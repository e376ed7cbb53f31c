"""Online adaptive optimizer: per-slot gradient projection with blocked sets,
plus the dependent rounding that materializes cache decisions.

Each slot: solve (or measure) traffic, broadcast marginals, then shift
forwarding/caching mass within every row from directions with above-minimum
modified marginal onto the minimum direction.  Blocked next-hops are zeroed
outright; rows with zero traffic snap to their minimum direction in one step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .marginals import broadcast_marginals, check_modified_condition
from .model import Strategy, solve_traffic, total_cost, TrafficState
from .routing import build_static_blocked_sets, sep_route, support_violations

INF = math.inf


@dataclass
class GpConfig:
    stepsize: float = 0.01
    t_slot: float = 10.0
    max_slots: int = 5000
    residual_tol: float = 1e-6
    active_tol: float = 1e-8
    blocked_policy: str = "static"  # "static" | "dynamic-stub"
    seed: int = 0
    check_loops: bool = True

    def __post_init__(self):
        if self.stepsize <= 0 or self.t_slot <= 0:
            raise ValueError("stepsize and t_slot must be positive")


def build_blocked_sets(scenario, policy="static"):
    """The dynamic policy is a stub behind the static construction: it exposes
    the same interface so per-slot recomputation can be swapped in later."""
    if policy not in ("static", "dynamic-stub"):
        raise ValueError(f"unknown blocked-set policy {policy!r}")
    return build_static_blocked_sets(scenario)


def _update_row(phi_slots, y_val, deltas, gamma, dmin, allowed_mask, alpha,
                has_compute, phi0_val, delta0):
    """One row of the projection step.  Returns (new_phi_slots, new_phi0, new_y).

    phi_slots/deltas/allowed_mask are aligned lists over the node's neighbor
    slots.  Directions with modified marginal above the row minimum shrink by
    min(value, alpha * excess); blocked directions are zeroed; the single
    minimum direction (tie order: compute slot, cache, smallest neighbor)
    absorbs the total, and also the float dust, so the row sum is preserved
    exactly.
    """
    deg = len(phi_slots)
    new_phi = list(phi_slots)
    new_phi0 = phi0_val
    new_y = y_val
    moved = 0.0

    absorber = None  # "phi0" | "y" | slot index
    if has_compute and delta0 == dmin:
        absorber = "phi0"
    elif gamma == dmin:
        absorber = "y"
    else:
        for s in range(deg):
            if allowed_mask[s] and deltas[s] == dmin:
                absorber = s
                break
    if absorber is None:
        # row minimum must be attained; guard against float surprises
        raise AssertionError("no minimum-direction entry in row update")

    for s in range(deg):
        v = new_phi[s]
        if not allowed_mask[s]:
            if v != 0.0:
                moved += v
                new_phi[s] = 0.0
            continue
        if s == absorber:
            continue
        e = deltas[s] - dmin
        if e > 0.0 and v > 0.0:
            d = v if v < alpha * e else alpha * e
            new_phi[s] = v - d
            moved += d
    if has_compute and absorber != "phi0":
        e = delta0 - dmin
        if e > 0.0 and new_phi0 > 0.0:
            d = new_phi0 if new_phi0 < alpha * e else alpha * e
            new_phi0 -= d
            moved += d
    if absorber != "y":
        e = gamma - dmin
        if e > 0.0 and new_y > 0.0:
            step = new_y if math.isinf(e) else alpha * e
            d = new_y if new_y < step else step
            new_y -= d
            moved += d

    if absorber == "phi0":
        new_phi0 += moved
    elif absorber == "y":
        new_y += moved
    else:
        new_phi[absorber] += moved

    # fold float dust into the absorber: conservation holds exactly
    target = y_val + phi0_val + sum(phi_slots) if has_compute else y_val + sum(phi_slots)
    total = new_y + (new_phi0 if has_compute else 0.0) + sum(new_phi)
    dust = target - total
    if dust != 0.0:
        if absorber == "phi0":
            new_phi0 += dust
        elif absorber == "y":
            new_y += dust
        else:
            new_phi[absorber] += dust
    return new_phi, new_phi0, new_y


def _rows_to_update(topo, rows, delta, delta0, gamma, dmin, mask,
                    np_slot_node, servers=None):
    """Rows with anything to move: active entries above the row minimum,
    active blocked arcs, or cache mass above the minimum.  Stationary rows
    (the common case near convergence) are skipped entirely."""
    dmin_arr = np.asarray(dmin)
    phi_arr = np.asarray(rows.phi)
    viol = (phi_arr > 0.0) & (~mask | (delta > dmin_arr[np_slot_node]))
    need = np.zeros(topo.n, dtype=bool)
    if viol.any():
        need[np_slot_node[viol]] = True
    y_arr = np.asarray(rows.y)
    need |= (y_arr > 0.0) & (np.asarray(gamma) > dmin_arr)
    if delta0 is not None:
        need |= (np.asarray(rows.phi0) > 0.0) & (np.asarray(delta0) > dmin_arr)
    if servers:
        need[list(servers)] = False
    return np.flatnonzero(need).tolist()


def gp_slot_update(scenario, strategy, traffic, marg, blocked, config):
    """Apply one synchronized projection step to every row; returns a new
    Strategy.  Conservation is preserved exactly (the absorber also swallows
    the float residual of the row)."""
    topo = scenario.topo
    n = topo.n
    alpha = config.stepsize
    _, _, np_slot_node, _ = topo.np_index()
    out = strategy.copy()

    for mk, rows in out.ci.items():
        k = mk[1]
        mask = blocked.slot_mask(k, topo)
        t = traffic.tc[mk]
        delta = marg.delta_c[mk]
        delta0 = marg.delta0_c[mk]
        gamma = marg.gamma_c[mk]
        dmin = marg.dmin_c[mk]
        for i in _rows_to_update(topo, rows, delta, delta0, gamma, dmin,
                                 mask, np_slot_node):
            base = topo.slot_base[i]
            deg = len(topo.nbrs[i])
            allowed = mask[base:base + deg]
            if t[i] <= 0.0:
                # zero-traffic row: steer wholly to the minimum direction
                best = delta0[i]
                pick = "phi0"
                for s in range(deg):
                    if allowed[s] and delta[base + s] < best:
                        best = delta[base + s]
                        pick = s
                for s in range(deg):
                    rows.phi[base + s] = 0.0
                rows.phi0[i] = 1.0 if pick == "phi0" else 0.0
                if pick != "phi0":
                    rows.phi[base + pick] = 1.0
                rows.y[i] = 0.0
                continue
            new_phi, new_phi0, new_y = _update_row(
                rows.phi[base:base + deg], rows.y[i],
                delta[base:base + deg], gamma[i], dmin[i], allowed,
                alpha, True, rows.phi0[i], delta0[i])
            rows.phi[base:base + deg] = new_phi
            rows.phi0[i] = new_phi0
            rows.y[i] = new_y

    for k, rows in out.di.items():
        mask = blocked.slot_mask(k, topo)
        servers = scenario.catalogs.servers[k]
        t = traffic.td[k]
        delta = marg.delta_d[k]
        gamma = marg.gamma_d[k]
        dmin = marg.dmin_d[k]
        for i in _rows_to_update(topo, rows, delta, None, gamma, dmin,
                                 mask, np_slot_node, servers):
            base = topo.slot_base[i]
            deg = len(topo.nbrs[i])
            allowed = mask[base:base + deg]
            if t[i] <= 0.0:
                best = INF
                pick = None
                for s in range(deg):
                    if allowed[s] and delta[base + s] < best:
                        best = delta[base + s]
                        pick = s
                for s in range(deg):
                    rows.phi[base + s] = 0.0
                rows.y[i] = 0.0
                if pick is None:
                    # no allowed route: the row can only cache
                    rows.y[i] = 1.0
                else:
                    rows.phi[base + pick] = 1.0
                continue
            new_phi, _, new_y = _update_row(
                rows.phi[base:base + deg], rows.y[i],
                delta[base:base + deg], gamma[i], dmin[i], allowed,
                alpha, False, 0.0, INF)
            rows.phi[base:base + deg] = new_phi
            rows.y[i] = new_y
    return out


# ---------------------------------------------------------------------------
# Dependent rounding


def round_node(items, rng):
    """Dependent rounding over one node's item list.

    items: sequence of (key, y).  Returns the set of chosen keys.  Each key is
    included with probability exactly y, and the realized count lies in
    {floor(sum y), ceil(sum y)}.
    """
    chosen = []
    frac = []
    for key, y in items:
        if y >= 1.0 - 1e-12:
            chosen.append(key)
        elif y > 1e-12:
            frac.append([key, float(y)])
    while len(frac) >= 2:
        a, b = frac[0], frac[1]
        e1 = min(1.0 - a[1], b[1])
        e2 = min(a[1], 1.0 - b[1])
        if rng.random() < e2 / (e1 + e2):
            a[1] += e1
            b[1] -= e1
        else:
            a[1] -= e2
            b[1] += e2
        keep = []
        for ent in (a, b):
            if ent[1] >= 1.0 - 1e-12:
                chosen.append(ent[0])
            elif ent[1] > 1e-12:
                keep.append(ent)
        frac = keep + frac[2:]
    if frac:
        if rng.random() < frac[0][1]:
            chosen.append(frac[0][0])
    return set(chosen)


@dataclass
class CacheDecision:
    """Rounded per-node cache contents: x in {0,1} per item."""

    per_node: list  # node -> set of ("c",(m,k)) / ("d",k)
    counts: list

    def has_result(self, i, mk):
        return ("c", mk) in self.per_node[i]

    def has_data(self, i, k):
        return ("d", k) in self.per_node[i]


def randomized_round(scenario, strategy, seed):
    """Round the continuous caching strategy to cache decisions, node by node
    (deterministic given seed)."""
    topo = scenario.topo
    rng = np.random.default_rng(seed)
    per_node = []
    counts = []
    ci_items = sorted(strategy.ci)
    di_items = sorted(strategy.di)
    for i in range(topo.n):
        items = [(("c", mk), strategy.ci[mk].y[i]) for mk in ci_items]
        items += [(("d", k), strategy.di[k].y[i]) for k in di_items]
        got = round_node(items, rng)
        per_node.append(got)
        counts.append(len(got))
    return CacheDecision(per_node, counts)


# ---------------------------------------------------------------------------
# Runs


@dataclass
class SlotRecord:
    slot: int
    T: float
    residual: float
    cache_count: float


@dataclass
class GpResult:
    strategy: object
    trace: list
    converged: bool
    blocked: object
    loop_violations: int = 0
    final_traffic: object = None

    @property
    def final_T(self):
        return self.trace[-1].T if self.trace else math.nan

    @property
    def oscillations(self):
        """Cost increases after the first slot; a nonzero count flags an
        unstable stepsize (or the early barrier-region transient)."""
        Ts = [r.T for r in self.trace]
        return sum(1 for i in range(1, len(Ts) - 1) if Ts[i + 1] > Ts[i] + 1e-12)


def _has_dead_cache(scenario, strategy, traffic, tol):
    """Cache mass sitting on zero-traffic rows.  Such rows satisfy the
    reported condition vacuously (their gamma is the +inf sentinel) but are
    pure deployment waste; the run is not converged until the full-steer
    updates have cleared them."""
    for mk, rows in strategy.ci.items():
        t = traffic.tc[mk]
        y = rows.y
        for i in range(scenario.topo.n):
            if y[i] > tol and t[i] <= 0.0:
                return True
    for k, rows in strategy.di.items():
        t = traffic.td[k]
        y = rows.y
        servers = scenario.catalogs.servers[k]
        for i in range(scenario.topo.n):
            if y[i] > tol and t[i] <= 0.0 and i not in servers:
                return True
    return False


def gp_run_fluid(scenario, config=None, initial=None, blocked=None):
    """Deterministic fluid-model run of the controller until the modified
    condition holds at residual_tol or the slot budget is spent."""
    config = config or GpConfig()
    if blocked is None:
        blocked = build_blocked_sets(scenario, config.blocked_policy)
    order = blocked.order_map(scenario.ci_keys, scenario.di_keys)
    strategy = initial.copy() if initial is not None else sep_route(scenario, blocked)
    trace = []
    converged = False
    violations = 0
    traffic = None
    for slot in range(config.max_slots):
        traffic = solve_traffic(scenario, strategy, order=order)
        T = total_cost(traffic, scenario.costs, strict=False)
        marg = broadcast_marginals(scenario, strategy, traffic,
                                   blocked=blocked, order=order)
        rep = check_modified_condition(scenario, strategy, marg,
                                       tol=config.active_tol, blocked=blocked)
        if config.check_loops:
            violations += len(support_violations(scenario, strategy, blocked))
        trace.append(SlotRecord(slot, T, rep.residual, sum(traffic.cache_count)))
        if (rep.residual <= config.residual_tol
                and not _has_dead_cache(scenario, strategy, traffic,
                                        config.active_tol)):
            converged = True
            break
        strategy = gp_slot_update(scenario, strategy, traffic, marg, blocked, config)
    return GpResult(strategy, trace, converged, blocked, violations, traffic)


def gp_run_measured(scenario, config=None, sim=None, horizon=None):
    """Measurement-driven run: traffic aggregates come from the packet
    simulator's windows, cache decisions are rounded and installed each slot."""
    from .packetsim import PacketSimulator  # local import: sim is optional

    config = config or GpConfig()
    blocked = build_blocked_sets(scenario, config.blocked_policy)
    order = blocked.order_map(scenario.ci_keys, scenario.di_keys)
    strategy = sep_route(scenario, blocked)
    if sim is None:
        sim = PacketSimulator(scenario, seed=config.seed)
    decision = randomized_round(scenario, strategy, config.seed)
    sim.install(strategy, decision)
    trace = []
    state = {"strategy": strategy, "slot": 0}

    def hook(measurement, sim_handle):
        strat = state["strategy"]
        for (i, j) in sim_handle.dead_arcs:  # topology changes -> block
            blocked.block_arc(i, j)
        measured = TrafficState(
            strat,
            tc=measurement.tc,
            g=measurement.g,
            td=measurement.td,
            F=measurement.F,
            G=measurement.G,
            cache_count=measurement.cache_count,
            cache_load=measurement.cache_load,
        )
        T = total_cost(measured, scenario.costs, strict=False)
        marg = broadcast_marginals(scenario, strat, measured,
                                   blocked=blocked, order=order)
        rep = check_modified_condition(scenario, strat, marg,
                                       tol=config.active_tol, blocked=blocked)
        trace.append(SlotRecord(state["slot"], T, rep.residual,
                                sum(measurement.cache_count)))
        new_strategy = gp_slot_update(scenario, strat, measured, marg, blocked, config)
        dec = randomized_round(scenario, new_strategy,
                               (config.seed * 1000003 + state["slot"]) & 0x7FFFFFFF)
        sim_handle.install(new_strategy, dec)
        state["strategy"] = new_strategy
        state["slot"] += 1

    slots = config.max_slots if horizon is None else max(1, int(horizon / config.t_slot))
    sim.run_slots(hook, slots, config.t_slot)
    return GpResult(state["strategy"], trace, False, blocked, 0, None)
