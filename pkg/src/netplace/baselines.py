"""Comparison baselines.

sep_route    -- shortest extended path, no caching (re-exported from routing)
run_sep_lfu  -- SEP forwarding, LFU cache filling, MinCost capacity growth
cloud_ec     -- route to the top-capacity compute nodes, elastic result caching
edge_ec      -- compute at requesters, elastic data caching

The elastic-caching baselines freeze the conditional forwarding split rho and
run the projection update on the caching coordinates only: per row, mass moves
between the cache slot and the rho-weighted forwarding block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .marginals import broadcast_marginals
from .model import solve_traffic, total_cost
from .routing import build_static_blocked_sets, route_to_nearest, sep_route


@dataclass
class BaselineSlot:
    slot: int
    T: float
    residual: float
    extra: float = 0.0  # total cache capacity (SEPLFU) or cache mass


@dataclass
class BaselineResult:
    strategy: object
    trace: list
    converged: bool = False
    rho: dict = None  # frozen conditional forwarding (elastic-caching runs)

    @property
    def final_T(self):
        return self.trace[-1].T if self.trace else math.nan

    @property
    def best_T(self):
        return min(r.T for r in self.trace)

    @property
    def best_slot(self):
        best = min(self.trace, key=lambda r: r.T)
        return best.slot


def _frozen_rho(strategy):
    """Per-row conditional forwarding shares of a (typically cache-free)
    strategy; rows that forward nothing keep empty shares."""
    topo = strategy.topo
    rho = {}
    for kind, key, rows in strategy.rows():
        table = []
        for i in range(topo.n):
            base = topo.slot_base[i]
            deg = len(topo.nbrs[i])
            total = sum(rows.phi[base:base + deg])
            p0 = rows.phi0[i] if rows.phi0 is not None else 0.0
            total += p0
            if total <= 0.0:
                table.append((0.0, ()))
                continue
            shares = tuple((s, rows.phi[base + s] / total)
                           for s in range(deg) if rows.phi[base + s] > 0.0)
            table.append((p0 / total, shares))
        rho[(kind, key)] = table
    return rho


def _apply_caching(strategy, rho, kind, key, i, y):
    """Set the row to y caching plus (1-y) of the frozen forwarding split."""
    topo = strategy.topo
    rows = strategy.ci[key] if kind == "c" else strategy.di[key]
    p0_share, shares = rho[(kind, key)][i]
    base = topo.slot_base[i]
    keep = 1.0 - y
    for s in range(len(topo.nbrs[i])):
        rows.phi[base + s] = 0.0
    for s, share in shares:
        rows.phi[base + s] = keep * share
    if rows.phi0 is not None:
        rows.phi0[i] = keep * p0_share
    rows.y[i] = y


def restricted_caching_gp(scenario, base_strategy, kinds, stepsize=0.01,
                          max_slots=2000, residual_tol=1e-8, cache_nodes=None):
    """Elastic caching: projection steps on y only, forwarding split frozen.

    kinds selects which cache coordinates move ("c" for results, "d" for
    data); cache_nodes optionally limits where caches may grow (e.g. only the
    cloud compute set).  Converges to the y-subspace stationarity: on interior
    rows the cache marginal gamma equals the rho-weighted forwarding marginal.
    """
    topo = scenario.topo
    n = topo.n
    rho = _frozen_rho(base_strategy)
    strategy = base_strategy.copy()
    trace = []
    converged = False
    for slot in range(max_slots):
        traffic = solve_traffic(scenario, strategy)
        T = total_cost(traffic, scenario.costs, strict=False)
        marg = broadcast_marginals(scenario, strategy, traffic)
        residual = 0.0
        moves = []
        dead_pending = False  # cache mass on zero-traffic rows not yet cleared
        for kind in kinds:
            items = strategy.ci.items() if kind == "c" else strategy.di.items()
            for key, rows in items:
                t_vec = traffic.tc[key] if kind == "c" else traffic.td[key]
                gamma = marg.gamma_c[key] if kind == "c" else marg.gamma_d[key]
                delta = marg.delta_c[key] if kind == "c" else marg.delta_d[key]
                delta0 = marg.delta0_c[key] if kind == "c" else None
                servers = scenario.catalogs.servers[key] if kind == "d" else ()
                for i in range(n):
                    if kind == "d" and i in servers:
                        continue
                    if cache_nodes is not None and i not in cache_nodes:
                        continue
                    p0_share, shares = rho[(kind, key)][i]
                    if p0_share == 0.0 and not shares:
                        continue  # row never forwards; nothing to trade
                    y = rows.y[i]
                    if t_vec[i] <= 0.0:
                        if y > 0.0:
                            moves.append((kind, key, i, 0.0))
                            dead_pending = True
                        continue
                    base = topo.slot_base[i]
                    dbar = sum(share * delta[base + s] for s, share in shares)
                    if delta0 is not None:
                        dbar += p0_share * delta0[i]
                    g = gamma[i]
                    p = 1.0 - y
                    if g > dbar:  # caching too expensive here: shrink y
                        if y > 1e-14:
                            residual = max(residual, g - dbar)
                        step = min(y, stepsize * (g - dbar))
                        if step > 0.0:
                            moves.append((kind, key, i, y - step))
                    elif g < dbar:  # caching relieves cost: grow y
                        if p > 1e-14:
                            residual = max(residual, dbar - g)
                        step = min(p, stepsize * (dbar - g))
                        if step > 0.0:
                            moves.append((kind, key, i, y + step))
        cache_mass = sum(traffic.cache_count)
        trace.append(BaselineSlot(slot, T, residual, cache_mass))
        if residual <= residual_tol and not dead_pending:
            converged = True
            break
        for kind, key, i, y in moves:
            _apply_caching(strategy, rho, kind, key, i, y)
    return BaselineResult(strategy, trace, converged, rho=rho)


def cloud_ec(scenario, stepsize=0.01, max_slots=2000, residual_tol=1e-8,
             top_fraction=0.05):
    """Cloud computing with elastic caching of computation results: CI routed
    to the nearest member of the top-capacity compute set, DI by SEP.

    Results are cached elastically at the cloud members themselves; this
    baseline deliberately has no requester-side computation reuse (that is
    the distinguishing feature of the optimizers under study).
    """
    topo = scenario.topo
    count = max(1, math.ceil(top_fraction * topo.n))
    ranked = sorted(range(topo.n),
                    key=lambda i: (scenario.costs.compute[i].param, i))
    members = set(ranked[:count])
    hop = route_to_nearest(scenario, members)
    blocked = build_static_blocked_sets(scenario)
    strategy = sep_route(scenario, blocked)
    for mk, rows in strategy.ci.items():
        for i in range(topo.n):
            base = topo.slot_base[i]
            for s in range(len(topo.nbrs[i])):
                rows.phi[base + s] = 0.0
            rows.phi0[i] = 0.0
            if i in members:
                rows.phi0[i] = 1.0
            else:
                rows.phi[topo.slot_of[(i, hop[i])]] = 1.0
    return restricted_caching_gp(scenario, strategy, ("c",), stepsize,
                                 max_slots, residual_tol, cache_nodes=members)


def edge_ec(scenario, stepsize=0.01, max_slots=2000, residual_tol=1e-8):
    """Edge computing with elastic caching of data: every node computes
    locally, DI by SEP."""
    topo = scenario.topo
    blocked = build_static_blocked_sets(scenario)
    strategy = sep_route(scenario, blocked)
    for mk, rows in strategy.ci.items():
        for i in range(topo.n):
            base = topo.slot_base[i]
            for s in range(len(topo.nbrs[i])):
                rows.phi[base + s] = 0.0
            rows.phi0[i] = 1.0
    return restricted_caching_gp(scenario, strategy, ("d",), stepsize,
                                 max_slots, residual_tol)


# ---------------------------------------------------------------------------
# SEP + LFU + MinCost


def _retrieval_min(scenario, marg, blocked, kind, key, i):
    """Minimum modified marginal over forwarding/compute directions only
    (cache expansion excluded): the unit cost of a miss at node i."""
    topo = scenario.topo
    base = topo.slot_base[i]
    k = key[1] if kind == "c" else key
    pos = blocked.pos[k]
    delta = marg.delta_c[key] if kind == "c" else marg.delta_d[key]
    best = marg.delta0_c[key][i] if kind == "c" else math.inf
    for s, j in enumerate(topo.nbrs[i]):
        if pos[j] < pos[i] and delta[base + s] < best:
            best = delta[base + s]
    return best


@dataclass
class SepLfuResult(BaselineResult):
    capacities: list = field(default_factory=list)
    caches: list = field(default_factory=list)


def run_sep_lfu(scenario, slots=400, patience=60):
    """Deterministic fluid run of the SEP + LFU + MinCost baseline.

    Each slot: evaluate cost under the current integer caches, grow capacity
    by one unit at the node with the highest miss cost (interest traffic times
    the delta-min retrieval marginal, summed over uncached items), refill
    caches by item frequency.  Returns the full trajectory; callers use the
    lowest slot cost.
    """
    topo = scenario.topo
    n = topo.n
    blocked = build_static_blocked_sets(scenario)
    order = blocked.order_map(scenario.ci_keys, scenario.di_keys)
    sep = sep_route(scenario, blocked)
    rho = _frozen_rho(sep)
    caps = [0] * n
    cached = [set() for _ in range(n)]
    trace = []
    best_T = math.inf
    stale = 0
    strategy = sep.copy()
    for slot in range(slots):
        traffic = solve_traffic(scenario, strategy, order=order)
        T = total_cost(traffic, scenario.costs, strict=False)
        trace.append(BaselineSlot(slot, T, 0.0, float(sum(caps))))
        if T < best_T - 1e-12:
            best_T = T
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                break
        marg = broadcast_marginals(scenario, strategy, traffic,
                                   blocked=blocked, order=order)
        # MinCost: one capacity unit to the node with the costliest misses
        best_node = 0
        best_cost = -1.0
        for i in range(n):
            miss = 0.0
            for mk in scenario.ci_keys:
                if ("c", mk) in cached[i] or traffic.tc[mk][i] <= 0.0:
                    continue
                miss += traffic.tc[mk][i] * _retrieval_min(scenario, marg, blocked, "c", mk, i)
            for k in scenario.di_keys:
                if ("d", k) in cached[i] or i in scenario.catalogs.servers[k]:
                    continue
                if traffic.td[k][i] <= 0.0:
                    continue
                miss += traffic.td[k][i] * _retrieval_min(scenario, marg, blocked, "d", k, i)
            if miss > best_cost:
                best_cost = miss
                best_node = i
        caps[best_node] += 1
        # LFU refill from current interest frequencies
        for i in range(n):
            items = []
            for mk in scenario.ci_keys:
                items.append((-traffic.tc[mk][i], 0, mk))
            for k in scenario.di_keys:
                if i in scenario.catalogs.servers[k]:
                    continue
                items.append((-traffic.td[k][i], 1, k))
            items.sort()
            cached[i] = {("c", it) if tag == 0 else ("d", it)
                         for _, tag, it in items[:caps[i]]}
        strategy = sep.copy()
        for i in range(n):
            for kind, key in cached[i]:
                _apply_caching(strategy, rho, kind, key, i, 1.0)
    return SepLfuResult(strategy, trace, False, capacities=caps, caches=cached)
