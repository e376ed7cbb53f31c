"""Offline optimizer: gradient-combining Frank-Wolfe over the forwarding
polytope, for the caching-offloading gain split G = M + N.

M is the congestion relief (baseline flow cost minus the strategy's link and
compute cost) and N the negated cache deployment cost of the caching implied
by conservation (y = 1 - row sum).  Each iteration solves the row-separable
LP over the blocked-set-restricted polytope and takes a fixed convex step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .marginals import broadcast_marginals
from .model import Strategy, flow_cost, cache_cost, solve_traffic, total_cost
from .routing import build_static_blocked_sets, sep_route, support_violations


@dataclass
class GcfwConfig:
    iters: int = 100
    check_loops: bool = True

    def __post_init__(self):
        if self.iters <= 1:
            raise ValueError("iteration count must exceed 1")

    @property
    def epsilon(self):
        return self.iters ** (-1.0 / 3.0)


class GainEvaluator:
    """Gain split for one scenario, with the no-caching baseline cost frozen
    as the additive constant of M."""

    def __init__(self, scenario, blocked=None):
        self.scenario = scenario
        self.blocked = blocked or build_static_blocked_sets(scenario)
        self.order = self.blocked.order_map(scenario.ci_keys, scenario.di_keys)
        self.initial = sep_route(scenario, self.blocked)
        ts0 = solve_traffic(scenario, self.initial, order=self.order)
        self.t0 = flow_cost(ts0, scenario.costs)  # no caching at the start

    def parts(self, strategy, traffic=None):
        """(M, N) values; M = T0 - link/compute cost, N = -cache cost."""
        if traffic is None:
            traffic = solve_traffic(self.scenario, strategy, order=self.order)
        m = self.t0 - flow_cost(traffic, self.scenario.costs)
        n = -cache_cost(traffic, self.scenario.costs)
        return m, n

    def value(self, strategy, traffic=None):
        m, n = self.parts(strategy, traffic)
        return m + n

    def grads(self, strategy):
        """(gradM, gradN) over the forwarding entries, y eliminated.

        gradM entry = -t_i * delta (pure flow marginal, y held fixed);
        gradN entry = +L * B'_i(cache load): pushing one unit of row mass from
        caching into forwarding relieves exactly that much deployment cost.
        Returns per-commodity dicts keyed like the strategy rows.
        """
        import numpy as np

        scenario = self.scenario
        topo = scenario.topo
        n = topo.n
        _, _, np_slot_node, _ = topo.np_index()
        traffic = solve_traffic(scenario, strategy, order=self.order)
        marg = broadcast_marginals(scenario, strategy, traffic,
                                   blocked=self.blocked, order=self.order)
        bprime = np.asarray([scenario.costs.cache[i].deriv_ext(traffic.cache_load[i])
                             for i in range(n)])
        gm = {}
        gn = {}
        for mk in strategy.ci:
            m, k = mk
            lc = scenario.sizes.lc(m, k)
            t = np.asarray(traffic.tc[mk])
            gphi = (-t[np_slot_node] * marg.delta_c[mk]).tolist()
            gphi0 = (-t * np.asarray(marg.delta0_c[mk])).tolist()
            gm[("c", mk)] = (gphi0, gphi)
            gn[("c", mk)] = (lc * bprime).tolist()
        for k in strategy.di:
            ld = scenario.sizes.ld(k)
            t = np.asarray(traffic.td[k])
            gm[("d", k)] = (None, (-t[np_slot_node] * marg.delta_d[k]).tolist())
            gn[("d", k)] = (ld * bprime).tolist()
        return gm, gn


def gain_parts(scenario, strategy, evaluator=None):
    """Convenience wrapper: (M, N) at the strategy."""
    ev = evaluator or GainEvaluator(scenario)
    return ev.parts(strategy)


def grad_gain(scenario, strategy, evaluator=None):
    ev = evaluator or GainEvaluator(scenario)
    return ev.grads(strategy)


def lp_step(scenario, gm, gn, blocked):
    """Row-separable LP: maximize <psi, gradM + 2 gradN> over the restricted
    polytope.  All-negative rows go to zero (cache the row); otherwise one
    unit at the best allowed direction (ties: compute slot, then smallest
    neighbor id)."""
    topo = scenario.topo
    n = topo.n
    psi = Strategy.zeros(topo, scenario.ci_keys, scenario.di_keys)
    for mk in scenario.ci_keys:
        k = mk[1]
        pos = blocked.pos[k]
        gphi0, gphi = gm[("c", mk)]
        gnrow = gn[("c", mk)]
        rows = psi.ci[mk]
        for i in range(n):
            two_n = 2.0 * gnrow[i]
            best = gphi0[i] + two_n
            pick = "phi0"
            base = topo.slot_base[i]
            for s, j in enumerate(topo.nbrs[i]):
                if pos[j] >= pos[i]:
                    continue
                score = gphi[base + s] + two_n
                if score > best:
                    best = score
                    pick = s
            if best < 0.0:
                rows.y[i] = 1.0
            elif pick == "phi0":
                rows.phi0[i] = 1.0
            else:
                rows.phi[base + pick] = 1.0
    for k in scenario.di_keys:
        pos = blocked.pos[k]
        _, gphi = gm[("d", k)]
        gnrow = gn[("d", k)]
        rows = psi.di[k]
        servers = scenario.catalogs.servers[k]
        for i in range(n):
            if i in servers:
                continue
            two_n = 2.0 * gnrow[i]
            best = -math.inf
            pick = None
            base = topo.slot_base[i]
            for s, j in enumerate(topo.nbrs[i]):
                if pos[j] >= pos[i]:
                    continue
                score = gphi[base + s] + two_n
                if score > best:
                    best = score
                    pick = s
            if pick is None or best < 0.0:
                rows.y[i] = 1.0
            else:
                rows.phi[base + pick] = 1.0
    return psi


def _blend(strategy, psi, w):
    """(1 - w) * strategy + w * psi, entrywise (stays in the polytope)."""
    out = strategy.copy()
    keep = 1.0 - w
    for (kind, key, rows), (_, _, prows) in zip(out.rows(), psi.rows()):
        phi = rows.phi
        pphi = prows.phi
        for idx in range(len(phi)):
            phi[idx] = keep * phi[idx] + w * pphi[idx]
        if rows.phi0 is not None:
            phi0 = rows.phi0
            pphi0 = prows.phi0
            for i in range(len(phi0)):
                phi0[i] = keep * phi0[i] + w * pphi0[i]
        y = rows.y
        py = prows.y
        for i in range(len(y)):
            y[i] = keep * y[i] + w * py[i]
    return out


@dataclass
class IterRecord:
    n: int
    G: float
    M: float
    N: float
    T: float


@dataclass
class GcfwResult:
    strategy: object
    trace: list
    evaluator: object
    loop_violations: int = 0

    @property
    def best_G(self):
        return max(r.G for r in self.trace)


def gcfw_run(scenario, config=None, evaluator=None):
    """Run the Frank-Wolfe loop and return the best iterate by gain."""
    config = config or GcfwConfig()
    ev = evaluator or GainEvaluator(scenario)
    eps2 = config.epsilon ** 2
    strategy = ev.initial.copy()
    best = strategy
    best_g = -math.inf
    trace = []
    violations = 0
    for it in range(config.iters + 1):
        traffic = solve_traffic(scenario, strategy, order=ev.order)
        m, nval = ev.parts(strategy, traffic)
        g = m + nval
        trace.append(IterRecord(it, g, m, nval,
                                total_cost(traffic, scenario.costs, strict=False)))
        if config.check_loops:
            violations += len(support_violations(scenario, strategy, ev.blocked))
        if g > best_g:
            best_g = g
            best = strategy
        if it == config.iters:
            break
        gm, gn = ev.grads(strategy)
        psi = lp_step(scenario, gm, gn, ev.blocked)
        strategy = _blend(strategy, psi, eps2)
    return GcfwResult(best, trace, ev, violations)
