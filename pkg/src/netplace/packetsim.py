"""Discrete-event packet-level simulator of the CI/DI/CR/DR lifecycle.

Interests travel instantly and load nothing (their size is negligible);
responses queue through exponential-service link servers (mean service time
= packet size * link parameter) and computations through exponential CPUs
(mean W * c_i), matching the queueing cost families of the fluid model.
Forwarding samples the installed conditional split independently per packet;
caches are the rounded decisions installed at slot boundaries.  Runs are
deterministic given the seed.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass

import numpy as np

from .routing import route_to_nearest


@dataclass
class Measurement:
    """Window averages handed to the controller (duck-types TrafficState)."""

    window: float
    tc: dict
    g: dict
    td: dict
    F: list
    G: list
    cache_count: list
    cache_load: list
    mean_latency: float
    delivered: int
    occupancy: list
    unstable_links: set
    unstable_cpus: set


class _Server:
    """One FIFO exponential server (a directed link or a CPU)."""

    __slots__ = ("queue", "busy", "n", "occ_integral", "busy_integral",
                 "last_t", "bits")

    def __init__(self):
        self.queue = deque()
        self.busy = False
        self.n = 0
        self.occ_integral = 0.0
        self.busy_integral = 0.0
        self.last_t = 0.0
        self.bits = 0.0

    def _account(self, t):
        dt = t - self.last_t
        if dt > 0.0:
            self.occ_integral += self.n * dt
            if self.busy:
                self.busy_integral += dt
            self.last_t = t
        elif dt == 0.0:
            self.last_t = t


class _Journey:
    """A response packet walking a fixed node path through link queues."""

    __slots__ = ("kind", "nodes", "idx", "size", "task", "created", "payload")

    def __init__(self, kind, nodes, size, task, created, payload=None):
        self.kind = kind  # "CR" | "DR"
        self.nodes = nodes
        self.idx = 0
        self.size = size
        self.task = task
        self.created = created
        self.payload = payload  # for DR: the pending-CI path back to the requester


class PacketSimulator:
    """Event-driven network with per-slot strategy/cache installation."""

    def __init__(self, scenario, seed=0, t_monitor=10.0):
        self.scenario = scenario
        self.topo = scenario.topo
        self.rng = np.random.default_rng(seed)
        self.t_monitor = t_monitor
        self.now = 0.0
        self._seq = 0
        self._heap = []
        self.links = [_Server() for _ in range(self.topo.num_arcs)]
        self.cpus = [_Server() for _ in range(self.topo.n)]
        self.rate_scale = 1.0
        self.dead_arcs = set()
        self._fallback_hop = {}
        self.rho_c = {}
        self.rho_d = {}
        self.caches = None
        self.ci_generated = 0
        self.cr_delivered = 0
        self.unstable_links = set()
        self.unstable_cpus = set()
        self._unstable_streak = {}
        self._arrivals_on = True
        self._latencies = []
        self._reset_window()
        for idx, task in enumerate(scenario.tasks):
            self._schedule(self._next_arrival(task), "gen", idx)

    # -- plumbing ----------------------------------------------------------

    def _schedule(self, t, kind, payload):
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, kind, payload))

    def _next_arrival(self, task):
        rate = task.rate * self.rate_scale
        return self.now + float(self.rng.exponential(1.0 / rate))

    def _reset_window(self):
        topo = self.topo
        self.w_start = self.now
        self.w_tc = {mk: [0] * topo.n for mk in self.scenario.ci_keys}
        self.w_g = {mk: [0] * topo.n for mk in self.scenario.ci_keys}
        self.w_td = {k: [0] * topo.n for k in self.scenario.di_keys}
        self.w_bits = [0.0] * topo.num_arcs
        self.w_workload = [0.0] * topo.n
        self.w_latency = []
        self.w_occ0 = [srv.occ_integral for srv in self.links]
        for s in self.links + self.cpus:
            s.bits = 0.0

    def install(self, strategy, decision):
        """Install conditional forwarding and rounded caches atomically
        (callers invoke this only between slots)."""
        topo = self.topo
        self.caches = decision
        self.rho_c = {}
        self.rho_d = {}
        for mk, _ in strategy.ci.items():
            table = []
            for i in range(topo.n):
                p0, shares = strategy.conditional("c", mk, i)
                table.append(self._cdf(i, p0, shares))
            self.rho_c[mk] = table
        for k, _ in strategy.di.items():
            table = []
            for i in range(topo.n):
                p0, shares = strategy.conditional("d", k, i)
                table.append(self._cdf(i, p0, shares, with_compute=False))
            self.rho_d[k] = table

    def _cdf(self, i, p0, shares, with_compute=True):
        actions = []
        total = 0.0
        if with_compute and p0 > 0.0:
            total += p0
            actions.append((total, -1))  # -1 = compute locally
        for _slot, j, share in shares:
            if (i, j) in self.dead_arcs:
                continue
            total += share
            actions.append((total, j))
        if not actions:
            return None
        # renormalize (dead arcs removed; float dust)
        return [(c / total, j) for c, j in actions]

    def _sample(self, table):
        r = self.rng.random()
        for cum, action in table:
            if r <= cum:
                return action
        return table[-1][1]

    def remove_arc(self, i, j):
        """Topology change hook: the directed pair dies; installed splits are
        renormalized on the fly and the controller repairs at the next slot."""
        self.dead_arcs.add((i, j))
        self.dead_arcs.add((j, i))

    def scale_rates(self, factor):
        self.rate_scale = factor

    def _fallback(self, k, i):
        """Next hop toward a server of k when a row's installed split died."""
        if k not in self._fallback_hop:
            self._fallback_hop[k] = route_to_nearest(
                self.scenario, set(self.scenario.catalogs.servers[k]))
        return self._fallback_hop[k][i]

    # -- packet lifecycle ---------------------------------------------------

    def _handle_ci(self, task, t):
        mk = (task.comp, task.data)
        k = task.data
        node = task.node
        self.ci_generated += 1
        path = [node]
        counters = self.w_tc[mk]
        counters[node] += 1
        for _ in range(self.topo.n + 1):
            if self.caches.has_result(node, mk):
                self._launch_response("CR", list(reversed(path)),
                                      self.scenario.sizes.lc(*mk), task, t, None)
                return
            table = self.rho_c[mk][node]
            action = -1 if table is None else self._sample(table)
            if action != -1 and (node, action) in self.dead_arcs:
                action = -1  # forwarding split died mid-slot: compute here
            if action == -1:
                self.w_g[mk][node] += 1
                self._handle_di(task, node, path, t)
                return
            node = action
            path.append(node)
            counters[node] += 1
        raise RuntimeError(f"CI walk for {mk} exceeded node count (cyclic split?)")

    def _handle_di(self, task, origin, ci_path, t):
        k = task.data
        node = origin
        dpath = [node]
        counters = self.w_td[k]
        counters[node] += 1
        servers = self.scenario.catalogs.servers[k]
        for _ in range(self.topo.n + 1):
            if node in servers or self.caches.has_data(node, k):
                self._launch_response("DR", list(reversed(dpath)),
                                      self.scenario.sizes.ld(k), task, t,
                                      payload=ci_path)
                return
            table = self.rho_d[k][node]
            if table is None:
                nxt = self._fallback(k, node)
            else:
                nxt = self._sample(table)
                if (node, nxt) in self.dead_arcs:
                    nxt = self._fallback(k, node)
            node = nxt
            dpath.append(node)
            counters[node] += 1
        raise RuntimeError(f"DI walk for item {k} exceeded node count (cyclic split?)")

    def _launch_response(self, kind, nodes, size, task, t, payload):
        # .created is the CI generation instant: interests travel instantly,
        # so every response journey is born at its CI's timestamp and CR
        # delivery time minus .created is the task latency
        j = _Journey(kind, nodes, size, task, t, payload)
        if len(nodes) == 1:
            self._deliver(j, t)
        else:
            self._enqueue_link(j, t)

    def _enqueue_link(self, journey, t):
        u = journey.nodes[journey.idx]
        v = journey.nodes[journey.idx + 1]
        arc = self.topo.arc_id[(u, v)]
        srv = self.links[arc]
        srv._account(t)
        srv.n += 1
        srv.queue.append(journey)
        if not srv.busy:
            srv.busy = True
            self._start_link_service(arc, t)

    def _start_link_service(self, arc, t):
        journey = self.links[arc].queue[0]
        mean = journey.size * self.scenario.costs.link[arc].param
        self._schedule(t + float(self.rng.exponential(mean)), "link", arc)

    def _link_done(self, arc, t):
        srv = self.links[arc]
        srv._account(t)
        journey = srv.queue.popleft()
        srv.n -= 1
        srv.bits += journey.size
        self.w_bits[arc] += journey.size
        if srv.queue:
            self._start_link_service(arc, t)
        else:
            srv.busy = False
        journey.idx += 1
        if journey.idx == len(journey.nodes) - 1:
            self._deliver(journey, t)
        else:
            self._enqueue_link(journey, t)

    def _deliver(self, journey, t):
        if journey.kind == "CR":
            self.cr_delivered += 1
            lat = t - journey.created
            self.w_latency.append(lat)
            self._latencies.append(lat)
            return
        # DR at the compute node: queue the computation
        node = journey.nodes[-1]
        task = journey.task
        srv = self.cpus[node]
        srv._account(t)
        srv.n += 1
        srv.queue.append(journey)
        w = self.scenario.sizes.w(node, task.comp, task.data)
        self.w_workload[node] += w
        if not srv.busy:
            srv.busy = True
            self._start_cpu_service(node, t)

    def _start_cpu_service(self, node, t):
        journey = self.cpus[node].queue[0]
        task = journey.task
        w = self.scenario.sizes.w(node, task.comp, task.data)
        mean = w * self.scenario.costs.compute[node].param
        self._schedule(t + float(self.rng.exponential(mean)), "cpu", node)

    def _cpu_done(self, node, t):
        srv = self.cpus[node]
        srv._account(t)
        journey = srv.queue.popleft()
        srv.n -= 1
        if srv.queue:
            self._start_cpu_service(node, t)
        else:
            srv.busy = False
        task = journey.task
        ci_path = journey.payload
        cr = _Journey("CR", list(reversed(ci_path)),
                      self.scenario.sizes.lc(task.comp, task.data), task,
                      journey.created)
        if len(cr.nodes) == 1:
            self._deliver(cr, t)
        else:
            self._enqueue_link(cr, t)

    # -- event loop ----------------------------------------------------------

    def run_until(self, t_end):
        while self._heap and self._heap[0][0] <= t_end:
            t, _, kind, payload = heapq.heappop(self._heap)
            self.now = t
            if kind == "gen":
                task = self.scenario.tasks.tasks[payload]
                if self._arrivals_on:
                    self._handle_ci(task, t)
                    self._schedule(self._next_arrival(task), "gen", payload)
            elif kind == "link":
                self._link_done(payload, t)
            else:
                self._cpu_done(payload, t)
        self.now = t_end
        for s in self.links + self.cpus:
            s._account(t_end)

    def drain(self, patience=1e6):
        """Stop arrivals and run the queues empty (end-of-run audit)."""
        self._arrivals_on = False
        guard = self.now + patience
        while self._heap and self.now < guard:
            horizon = min(self._heap[0][0] + 1.0, guard)
            self.run_until(horizon)
            if all(not s.busy for s in self.links) and all(not s.busy for s in self.cpus):
                break
        self._arrivals_on = True

    def measure_window(self):
        """Averages over the window since the last reset."""
        dt = max(self.now - self.w_start, 1e-12)
        tc = {mk: [c / dt for c in v] for mk, v in self.w_tc.items()}
        g = {mk: [c / dt for c in v] for mk, v in self.w_g.items()}
        td = {k: [c / dt for c in v] for k, v in self.w_td.items()}
        F = [b / dt for b in self.w_bits]
        G = [w / dt for w in self.w_workload]
        if self.caches is None:
            counts, load = [0] * self.topo.n, [0.0] * self.topo.n
        else:
            counts = list(self.caches.counts)
            load = []
            for i in range(self.topo.n):
                tot = 0.0
                for kind, key in self.caches.per_node[i]:
                    tot += (self.scenario.sizes.lc(*key) if kind == "c"
                            else self.scenario.sizes.ld(key))
                load.append(tot)
        occ = [(srv.occ_integral - o0) / dt
               for srv, o0 in zip(self.links, self.w_occ0)]
        mean_lat = float(np.mean(self.w_latency)) if self.w_latency else 0.0
        self._update_stability(dt)
        m = Measurement(dt, tc, g, td, F, G, counts, load, mean_lat,
                        len(self.w_latency), occ,
                        set(self.unstable_links), set(self.unstable_cpus))
        self._reset_window()
        return m

    def _update_stability(self, dt):
        for tag, servers, out in (("L", self.links, self.unstable_links),
                                  ("C", self.cpus, self.unstable_cpus)):
            for idx, srv in enumerate(servers):
                key = (tag, idx)
                prev = self._unstable_streak.get(key, (0.0, 0))
                busy_prev, streak = prev
                busy_delta = srv.busy_integral - busy_prev
                if busy_delta >= 0.999 * dt:
                    streak += 1
                else:
                    streak = 0
                if streak >= 3:
                    out.add(idx)
                self._unstable_streak[key] = (srv.busy_integral, streak)

    def run_slots(self, hook, n_slots, t_slot):
        for _ in range(n_slots):
            self.run_until(self.now + t_slot)
            m = self.measure_window()
            hook(m, self)

    def occupancy(self, i, j):
        """Time-average number-in-system on the directed link (i, j) over the
        whole run so far."""
        arc = self.topo.arc_id[(i, j)]
        srv = self.links[arc]
        return srv.occ_integral / max(self.now, 1e-12)

    def audit(self):
        return {
            "ci_generated": self.ci_generated,
            "cr_delivered": self.cr_delivered,
            "pending": self.ci_generated - self.cr_delivered,
            "mean_latency": float(np.mean(self._latencies)) if self._latencies else 0.0,
        }


@dataclass
class SimResult:
    measurements: list
    audit: dict
    unstable_links: set
    unstable_cpus: set


def sim_run(scenario, strategy, decision, horizon, seed=0, controller=None,
            t_slot=10.0):
    """Convenience wrapper: install, run (with an optional controller hook at
    every slot), drain, and audit."""
    sim = PacketSimulator(scenario, seed=seed)
    sim.install(strategy, decision)
    measurements = []

    def hook(m, handle):
        measurements.append(m)
        if controller is not None:
            controller(m, handle)

    n_slots = max(1, int(horizon / t_slot))
    sim.run_slots(hook, n_slots, t_slot)
    sim.drain()
    return SimResult(measurements, sim.audit(),
                     set(sim.unstable_links), set(sim.unstable_cpus))
