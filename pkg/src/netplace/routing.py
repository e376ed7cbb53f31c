"""Blocked-set construction and extended-shortest-path routing.

Loop-freedom across all optimizer iterates is enforced by one global
per-data-item node ranking: nodes are ordered by zero-load shortest distance
to the item's designated servers (ties by node id), and interests may only be
forwarded strictly down the ranking.  Local computation (the CI slot 0) is
never blocked.
"""

from __future__ import annotations

import heapq

from .errors import Unreachable
from .model import Strategy


class BlockedSets:
    """Per-data-item node ranking; neighbor j is blocked at i iff
    rank(j) >= rank(i).  Dead arcs (topology changes) block globally."""

    def __init__(self, pos):
        self.pos = pos  # data item -> list: position of each node
        self.dead = set()  # directed arcs removed from service
        self._masks = {}

    def allowed(self, k, i, j):
        if (i, j) in self.dead:
            return False
        p = self.pos[k]
        return p[j] < p[i]

    def block_arc(self, i, j):
        """Topology-change hook: forbid the directed arc for every commodity
        (the next slot update moves its mass to the minimum direction)."""
        if (i, j) not in self.dead:
            self.dead.add((i, j))
            self._masks.clear()

    def slot_mask(self, k, topo):
        """Boolean numpy mask over CSR slots: True where the hop is allowed."""
        m = self._masks.get(k)
        if m is None:
            import numpy as np

            p = self.pos[k]
            m = np.fromiter((p[j] < p[i] and (i, j) not in self.dead
                             for i in range(topo.n) for j in topo.nbrs[i]),
                            dtype=bool, count=topo.num_slots)
            self._masks[k] = m
        return m

    def blocked_set(self, k, i, topo):
        p = self.pos[k]
        return sorted(j for j in topo.nbrs[i] if p[j] >= p[i])

    def order_desc(self, k):
        """Nodes farthest-from-server first: a topological order of every
        allowed interest digraph for item k."""
        p = self.pos[k]
        return sorted(range(len(p)), key=lambda i: -p[i])

    def order_map(self, ci_keys, di_keys):
        orders = {k: self.order_desc(k) for k in di_keys}
        m = {("d", k): orders[k] for k in di_keys}
        for mk in ci_keys:
            ordk = orders.get(mk[1])
            if ordk is None:
                ordk = self.order_desc(mk[1])
            m[("c", mk)] = ordk
        return m


def _dijkstra_to_set(topo, weights, targets):
    """Shortest distance from every node to the target set.

    weights[arc_id] is the cost of traversing arc (i, j); the search runs on
    reversed arcs from the targets.
    """
    dist = [float("inf")] * topo.n
    heap = []
    for t in targets:
        dist[t] = 0.0
        heap.append((0.0, t))
    heapq.heapify(heap)
    while heap:
        d, j = heapq.heappop(heap)
        if d > dist[j]:
            continue
        # relax arcs (i, j) arriving at j
        for i in topo.nbrs[j]:
            w = weights[topo.arc_id[(i, j)]]
            nd = d + w
            if nd < dist[i]:
                dist[i] = nd
                heapq.heappush(heap, (nd, i))
    return dist


def build_static_blocked_sets(scenario):
    """Rank nodes per data item by zero-load shortest distance to its servers
    (link weight: the marginal link cost at zero load), ties by node id.
    Raises Unreachable if some node cannot reach any server."""
    topo = scenario.topo
    weights = [fn.deriv_ext(0.0) for fn in scenario.costs.link]
    pos = {}
    for k in scenario.di_keys:
        servers = scenario.catalogs.servers[k]
        dist = _dijkstra_to_set(topo, weights, servers)
        bad = [i for i in range(topo.n) if dist[i] == float("inf")]
        if bad:
            raise Unreachable(f"nodes {bad[:8]} cannot reach servers of item {k}")
        ranked = sorted(range(topo.n), key=lambda i: (dist[i], i))
        p = [0] * topo.n
        for rank, i in enumerate(ranked):
            p[i] = rank
        pos[k] = p
    return BlockedSets(pos)


def _di_potentials(scenario, blocked, k):
    """Zero-load cost-to-go of one DI/sec from each node to the servers of k,
    restricted to allowed arcs.  DP in ascending rank order."""
    topo = scenario.topo
    ld = scenario.sizes.ld(k)
    servers = scenario.catalogs.servers[k]
    pos = blocked.pos[k]
    order = sorted(range(topo.n), key=lambda i: pos[i])
    pot = [float("inf")] * topo.n
    hop = [None] * topo.n
    for i in order:
        if i in servers:
            pot[i] = 0.0
            continue
        base = topo.slot_base[i]
        for s, j in enumerate(topo.nbrs[i]):
            if pos[j] >= pos[i]:
                continue
            # responses to interests on (i,j) load the reverse arc (j,i)
            w = ld * scenario.costs.link[topo.slot_rev_arc[base + s]].deriv_ext(0.0)
            v = w + pot[j]
            if v < pot[i]:  # neighbors scan in ascending id: ties keep smallest
                pot[i] = v
                hop[i] = j
    return pot, hop


def _ci_potentials(scenario, blocked, mk, di_pot):
    """Cost-to-go of one CI/sec: compute locally (zero-load CPU marginal plus
    the DI cost-to-go) or forward down the ranking."""
    topo = scenario.topo
    m, k = mk
    lc = scenario.sizes.lc(m, k)
    pos = blocked.pos[k]
    order = sorted(range(topo.n), key=lambda i: pos[i])
    pot = [float("inf")] * topo.n
    choice = [None] * topo.n  # 0 slot marker or neighbor id
    for i in order:
        best = scenario.sizes.w(i, m, k) * scenario.costs.compute[i].deriv_ext(0.0) + di_pot[i]
        pick = "phi0"
        base = topo.slot_base[i]
        for s, j in enumerate(topo.nbrs[i]):
            if pos[j] >= pos[i]:
                continue
            w = lc * scenario.costs.link[topo.slot_rev_arc[base + s]].deriv_ext(0.0)
            v = w + pot[j]
            if v < best:
                best = v
                pick = j
        pot[i] = best
        choice[i] = pick
    return pot, choice


def sep_route(scenario, blocked=None):
    """Shortest-extended-path strategy: one deterministic next hop (or local
    compute) per node and commodity, no caching.  Always respects the blocked
    sets, so it is a valid initial point for both optimizers."""
    if blocked is None:
        blocked = build_static_blocked_sets(scenario)
    topo = scenario.topo
    strategy = Strategy.zeros(topo, scenario.ci_keys, scenario.di_keys)
    di_pots = {}
    for k in scenario.di_keys:
        pot, hop = _di_potentials(scenario, blocked, k)
        di_pots[k] = pot
        rows = strategy.di[k]
        servers = scenario.catalogs.servers[k]
        for i in range(topo.n):
            if i in servers:
                continue
            j = hop[i]
            if j is None:
                raise Unreachable(f"node {i} has no allowed route to servers of {k}")
            rows.phi[topo.slot_of[(i, j)]] = 1.0
    for mk in scenario.ci_keys:
        _, choice = _ci_potentials(scenario, blocked, mk, di_pots[mk[1]])
        rows = strategy.ci[mk]
        for i in range(topo.n):
            if choice[i] == "phi0":
                rows.phi0[i] = 1.0
            else:
                rows.phi[topo.slot_of[(i, choice[i])]] = 1.0
    return strategy


def route_to_nearest(scenario, targets):
    """Next hop per node toward the nearest target by zero-load link weight;
    targets map to themselves.  Used by the cloud-style baseline."""
    topo = scenario.topo
    weights = [0.0] * topo.num_arcs
    for a, (i, j) in enumerate(topo.arcs):
        weights[a] = scenario.costs.link[topo.arc_id[(j, i)]].deriv_ext(0.0)
    dist = _dijkstra_to_set(topo, weights, targets)
    bad = [i for i in range(topo.n) if dist[i] == float("inf")]
    if bad:
        raise Unreachable(f"nodes {bad[:8]} cannot reach {sorted(targets)[:8]}")
    hop = [None] * topo.n
    tset = set(targets)
    for i in range(topo.n):
        if i in tset:
            continue
        best = None
        best_v = float("inf")
        base = topo.slot_base[i]
        for s, j in enumerate(topo.nbrs[i]):
            v = weights[base + s] + dist[j]
            if v < best_v:  # ascending id scan keeps the smallest id on ties
                best_v = v
                best = j
        hop[i] = best
    return hop


def support_violations(scenario, strategy, blocked, tol=0.0):
    """Forwarding entries that point at blocked next-hops (loop-freedom audit)."""
    topo = scenario.topo
    out = []
    for kind, key, rows in strategy.rows():
        k = key[1] if kind == "c" else key
        pos = blocked.pos[k]
        for i in range(topo.n):
            base = topo.slot_base[i]
            for s, j in enumerate(topo.nbrs[i]):
                if rows.phi[base + s] > tol and pos[j] >= pos[i]:
                    out.append((kind, key, i, j, rows.phi[base + s]))
    return out
