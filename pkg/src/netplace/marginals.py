"""Closed-form marginals of the aggregated cost and optimality-condition checks.

The per-unit-traffic marginals dT/dt are computed by a two-stage sweep in
reverse topological order of each commodity's support DAG: data-interest
commodities first, then computation-interest commodities (whose local-compute
slot couples into the data side).  The sweep mirrors the two-stage broadcast
a distributed deployment would run; here it is sequential per commodity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import LoopDetected
from .model import _support_out, _topo_order

INF = math.inf


class MarginalState:
    """dT/dt recursions plus modified marginals delta/gamma and row minima.

    delta_c[(m,k)] -- numpy array over CSR slots: marginal of forwarding one
                      more CI/sec to that neighbor (L^c D'_{ji} + dT/dt^c_j)
    delta0_c[(m,k)][i] -- marginal of computing locally (W C'_i + dT/dt^d_i)
    gamma_c[(m,k)][i]  -- marginal of absorbing by cache growth
                          (L^c B'_i / t^c_i; +inf sentinel when t^c_i = 0)
    dmin_c[(m,k)][i]   -- minimum over allowed directions and gamma
    (and the d-side analogues without the compute slot).
    """

    __slots__ = ("dtc", "dtd", "delta_c", "delta0_c", "gamma_c", "dmin_c",
                 "delta_d", "gamma_d", "dmin_d")

    def __init__(self):
        self.dtc = {}
        self.dtd = {}
        self.delta_c = {}
        self.delta0_c = {}
        self.gamma_c = {}
        self.dmin_c = {}
        self.delta_d = {}
        self.gamma_d = {}
        self.dmin_d = {}


def _sweep_order(topo, rows, order_map, kind, key):
    if order_map is not None:
        seq = order_map.get((kind, key))
        if seq is not None:
            return seq
    try:
        return _topo_order(_support_out(topo, rows), topo.n, kind, key)
    except LoopDetected as exc:
        raise LoopDetected(kind, key, exc.cycle) from None


def _nbr_min(topo, delta, mask, np_slot_node):
    """Per-node minimum of delta over allowed slots (+inf where none)."""
    out = np.full(topo.n, INF)
    if mask is None:
        np.minimum.at(out, np_slot_node, delta)
    else:
        idx = np.flatnonzero(mask)
        np.minimum.at(out, np_slot_node[idx], delta[idx])
    return out


def broadcast_marginals(scenario, strategy, traffic, blocked=None, order=None):
    """Fill a MarginalState for the given strategy/traffic pair.

    `blocked`, when given, must expose slot_mask(k, topo); blocked next-hops
    are excluded from the row minima (they remain in the delta arrays).
    `order` optionally maps (kind, key) to a topological node order of the
    support, skipping the Kahn pass.  Raises LoopDetected on cyclic support.
    """
    topo = scenario.topo
    sizes = scenario.sizes
    costs = scenario.costs
    n = topo.n
    slot_dst = topo.slot_dst
    slot_rev = topo.slot_rev_arc
    np_slot_dst, np_slot_rev, np_slot_node, np_base_ext = topo.np_index()
    state = MarginalState()

    dprime = [0.0] * topo.num_arcs
    for a, fn in enumerate(costs.link):
        dprime[a] = fn.deriv_ext(traffic.F[a])
    dprime_np = np.asarray(dprime)
    dprime_rev = dprime_np[np_slot_rev]
    cprime = np.asarray([costs.compute[i].deriv_ext(traffic.G[i]) for i in range(n)])
    bprime = np.asarray([costs.cache[i].deriv_ext(traffic.cache_load[i])
                         for i in range(n)])

    def support(rows):
        """Nonzero forwarding slots grouped by node (CSR order), plus the
        per-node start offsets into that list."""
        nz = np.flatnonzero(np.asarray(rows.phi) > 0.0)
        starts = np.searchsorted(nz, np_base_ext).tolist()
        return nz.tolist(), starts

    # Stage 1: data-interest commodities.
    for k, rows in strategy.di.items():
        ld = sizes.ld(k)
        seq = _sweep_order(topo, rows, order, "d", k)
        phi = rows.phi
        nz, starts = support(rows)
        dtd = [0.0] * n
        for i in reversed(seq):
            acc = 0.0
            for idx in range(starts[i], starts[i + 1]):
                slot = nz[idx]
                acc += phi[slot] * (ld * dprime[slot_rev[slot]] + dtd[slot_dst[slot]])
            dtd[i] = acc
        state.dtd[k] = dtd

        dtd_np = np.asarray(dtd)
        delta = ld * dprime_rev + dtd_np[np_slot_dst]
        td = np.asarray(traffic.td[k])
        gamma = np.full(n, INF)
        pos_t = td > 0.0
        gamma[pos_t] = ld * bprime[pos_t] / td[pos_t]
        mask = blocked.slot_mask(k, topo) if blocked is not None else None
        dmin = np.minimum(_nbr_min(topo, delta, mask, np_slot_node), gamma)
        for srv in scenario.catalogs.servers[k]:
            dmin[srv] = 0.0
        state.delta_d[k] = delta
        state.gamma_d[k] = gamma.tolist()
        state.dmin_d[k] = dmin.tolist()

    # Stage 2: computation-interest commodities (uses stage-1 dtd via slot 0).
    for mk, rows in strategy.ci.items():
        m, k = mk
        lc = sizes.lc(m, k)
        dtd = state.dtd[k]
        seq = _sweep_order(topo, rows, order, "c", mk)
        phi = rows.phi
        phi0 = rows.phi0
        wv = sizes.w_vec(m, k, n)
        delta0_np = np.asarray(wv) * cprime + np.asarray(dtd)
        delta0 = delta0_np.tolist()
        nz, starts = support(rows)
        dtc = [0.0] * n
        for i in reversed(seq):
            acc = 0.0
            for idx in range(starts[i], starts[i + 1]):
                slot = nz[idx]
                acc += phi[slot] * (lc * dprime[slot_rev[slot]] + dtc[slot_dst[slot]])
            p0 = phi0[i]
            if p0 > 0.0:
                acc += p0 * delta0[i]
            dtc[i] = acc
        state.dtc[mk] = dtc

        dtc_np = np.asarray(dtc)
        delta = lc * dprime_rev + dtc_np[np_slot_dst]
        tcv = np.asarray(traffic.tc[mk])
        gamma = np.full(n, INF)
        pos_t = tcv > 0.0
        gamma[pos_t] = lc * bprime[pos_t] / tcv[pos_t]
        mask = blocked.slot_mask(k, topo) if blocked is not None else None
        dmin = np.minimum(_nbr_min(topo, delta, mask, np_slot_node),
                          np.minimum(delta0_np, gamma))
        state.delta_c[mk] = delta
        state.delta0_c[mk] = delta0
        state.gamma_c[mk] = gamma.tolist()
        state.dmin_c[mk] = dmin.tolist()

    return state


class Gradient:
    """dT over (phi, y), mirroring the Strategy layout."""

    __slots__ = ("dphi_c", "dphi0_c", "dy_c", "dphi_d", "dy_d")

    def __init__(self):
        self.dphi_c = {}
        self.dphi0_c = {}
        self.dy_c = {}
        self.dphi_d = {}
        self.dy_d = {}


def strategy_gradient(scenario, strategy, traffic, marg):
    """Partial derivatives of T over every phi and y entry (y held elsewhere).

    dT/dphi entries are t_i * delta; dT/dy entries are L * B'_i(cache load).
    Degenerate rows (t_i = 0) have all forwarding partials equal to 0.
    """
    topo = scenario.topo
    sizes = scenario.sizes
    costs = scenario.costs
    n = topo.n
    _, _, np_slot_node, _ = topo.np_index()
    bprime = np.asarray([costs.cache[i].deriv_ext(traffic.cache_load[i])
                         for i in range(n)])
    grad = Gradient()
    for mk in strategy.ci:
        m, k = mk
        lc = sizes.lc(m, k)
        t = np.asarray(traffic.tc[mk])
        grad.dphi_c[mk] = (t[np_slot_node] * marg.delta_c[mk]).tolist()
        grad.dphi0_c[mk] = (t * np.asarray(marg.delta0_c[mk])).tolist()
        grad.dy_c[mk] = (lc * bprime).tolist()
    for k in strategy.di:
        ld = sizes.ld(k)
        t = np.asarray(traffic.td[k])
        grad.dphi_d[k] = (t[np_slot_node] * marg.delta_d[k]).tolist()
        grad.dy_d[k] = (ld * bprime).tolist()
    return grad


@dataclass
class ConditionReport:
    """Worst optimality-condition violation over active entries."""

    residual: float
    worst: tuple  # descriptor of the arg-max entry
    degenerate: list  # rows excluded because t = 0
    blocked_active: list  # blocked arcs still carrying positive phi

    @property
    def ok(self):
        return self.residual <= 0.0


def check_kkt(scenario, strategy, traffic, marg, tol=1e-8):
    """Residual of the KKT stationarity condition at (y, phi).

    lambda per row is the minimum raw partial derivative; active entries
    (phi or y above tol) must match it.  Rows with zero traffic satisfy the
    condition vacuously and are listed separately.
    """
    grad = strategy_gradient(scenario, strategy, traffic, marg)
    topo = scenario.topo
    n = topo.n
    slot_base = topo.slot_base
    residual = 0.0
    worst = None
    degenerate = []

    def row_check(kind, key, i, entries, derivs):
        nonlocal residual, worst
        lam = min(derivs)
        for (label, val), dv in zip(entries, derivs):
            if val > tol:
                gap = dv - lam
                if gap > residual:
                    residual = gap
                    worst = (kind, key, i, label)

    for mk, rows in strategy.ci.items():
        t = traffic.tc[mk]
        dphi = grad.dphi_c[mk]
        dphi0 = grad.dphi0_c[mk]
        dy = grad.dy_c[mk]
        for i in range(n):
            if t[i] <= 0.0:
                degenerate.append(("c", mk, i))
                continue
            base = slot_base[i]
            entries = [("phi0", rows.phi0[i]), ("y", rows.y[i])]
            derivs = [dphi0[i], dy[i]]
            for s, j in enumerate(topo.nbrs[i]):
                entries.append((j, rows.phi[base + s]))
                derivs.append(dphi[base + s])
            row_check("c", mk, i, entries, derivs)
    for k, rows in strategy.di.items():
        t = traffic.td[k]
        dphi = grad.dphi_d[k]
        dy = grad.dy_d[k]
        servers = scenario.catalogs.servers[k]
        for i in range(n):
            if i in servers:
                continue
            if t[i] <= 0.0:
                degenerate.append(("d", k, i))
                continue
            base = slot_base[i]
            entries = [("y", rows.y[i])]
            derivs = [dy[i]]
            for s, j in enumerate(topo.nbrs[i]):
                entries.append((j, rows.phi[base + s]))
                derivs.append(dphi[base + s])
            row_check("d", k, i, entries, derivs)
    return ConditionReport(residual, worst, degenerate, [])


def check_modified_condition(scenario, strategy, marg, tol=1e-8, blocked=None):
    """Residual of the modified (traffic-normalized) condition.

    For every active entry the modified marginal must sit within tol of the
    row minimum; +inf gammas never enter and blocked next-hops are excluded
    from the minimum (active blocked arcs are reported on the side).  This is
    the convergence certificate of the online controller.
    """
    topo = scenario.topo
    n = topo.n
    np_slot_dst, _, np_slot_node, _ = topo.np_index()
    residual = 0.0
    worst = None
    blocked_active = []

    def scan(kind, key, rows, delta, gamma, dmin, delta0, servers):
        nonlocal residual, worst
        k = key[1] if kind == "c" else key
        dmin_arr = np.asarray(dmin)
        phi = np.asarray(rows.phi)
        active = phi > tol
        if active.any():
            mask = blocked.slot_mask(k, topo) if blocked is not None else None
            if mask is not None:
                bad = active & ~mask
                if bad.any():
                    for s in np.flatnonzero(bad):
                        i = int(np_slot_node[s])
                        blocked_active.append((kind, key, i, int(np_slot_dst[s]),
                                               rows.phi[s]))
                active = active & mask
            if active.any():
                gaps = delta[active] - dmin_arr[np_slot_node[active]]
                pos = int(np.argmax(gaps))
                if gaps[pos] > residual:
                    residual = float(gaps[pos])
                    s = int(np.flatnonzero(active)[pos])
                    worst = (kind, key, int(np_slot_node[s]), int(np_slot_dst[s]))
        for i in range(n):
            if servers is not None and i in servers:
                continue
            dm = dmin[i]
            if delta0 is not None and rows.phi0[i] > tol:
                gap = delta0[i] - dm
                if gap > residual:
                    residual, worst = gap, (kind, key, i, "phi0")
            g = gamma[i]
            if rows.y[i] > tol and not math.isinf(g):
                gap = g - dm
                if gap > residual:
                    residual, worst = gap, (kind, key, i, "y")

    for mk, rows in strategy.ci.items():
        scan("c", mk, rows, marg.delta_c[mk], marg.gamma_c[mk],
             marg.dmin_c[mk], marg.delta0_c[mk], None)
    for k, rows in strategy.di.items():
        scan("d", k, rows, marg.delta_d[k], marg.gamma_d[k],
             marg.dmin_d[k], None, scenario.catalogs.servers[k])
    return ConditionReport(residual, worst, [], blocked_active)


def _row_min_unrestricted(topo, i, delta, base, gamma_i, delta0_i=None):
    best = gamma_i
    if delta0_i is not None and delta0_i < best:
        best = delta0_i
    for s in range(len(topo.nbrs[i])):
        v = delta[base + s]
        if v < best:
            best = v
    return best


def bounded_gap_rhs(scenario, solution, sol_traffic, marg, ref_traffic):
    """Right-hand side of the bounded-gap inequality at `solution`.

    The caller compares T(reference) - T(solution) against this value.  The
    row minima here are unrestricted (all neighbors considered, matching the
    statement for arbitrary feasible references).
    """
    topo = scenario.topo
    n = topo.n
    slot_base = topo.slot_base
    ref_strategy = ref_traffic.strategy
    total = 0.0
    for k, rows in solution.di.items():
        delta = marg.delta_d[k]
        gamma = marg.gamma_d[k]
        t = sol_traffic.td[k]
        t_ref = ref_traffic.td[k]
        y = rows.y
        y_ref = ref_strategy.di[k].y
        servers = scenario.catalogs.servers[k]
        for i in range(n):
            if i in servers:
                continue
            dy = y[i] - y_ref[i]
            dt = t_ref[i] - t[i]
            if dy == 0.0 or dt == 0.0:
                continue
            dmin = _row_min_unrestricted(topo, i, delta, slot_base[i], gamma[i])
            total += dmin * dy * dt
    for mk, rows in solution.ci.items():
        delta = marg.delta_c[mk]
        delta0 = marg.delta0_c[mk]
        gamma = marg.gamma_c[mk]
        t = sol_traffic.tc[mk]
        t_ref = ref_traffic.tc[mk]
        y = rows.y
        y_ref = ref_strategy.ci[mk].y
        for i in range(n):
            dy = y[i] - y_ref[i]
            dt = t_ref[i] - t[i]
            if dy == 0.0 or dt == 0.0:
                continue
            dmin = _row_min_unrestricted(topo, i, delta, slot_base[i], gamma[i], delta0[i])
            total += dmin * dy * dt
    return total
