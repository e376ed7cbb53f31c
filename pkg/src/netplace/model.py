"""Network model: topology, catalogs, strategies, traffic fixed point, and costs.

Interest packets for a computation (CI) or a data object (DI) are split
fractionally at each node over the local-compute slot (CI only), the
neighbors, and the local cache; responses (CR/DR) travel the reverse links
and are the only packets that load links.  All functions here are pure:
they never mutate their inputs and are safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import (
    CapacityExceeded,
    DimensionMismatch,
    Disconnected,
    LoopDetected,
    ParseError,
)

# Fraction of a queueing pole above which optimizers switch to the convex
# quadratic extension.  Evaluation below the soft cap is exact.
SOFT_CAP_UTILIZATION = 0.9

# Relative distance from the pole at which strict evaluation refuses.
POLE_GUARD = 1e-12


class Topology:
    """Directed graph with symmetric link closure, stored CSR-style.

    Node labels are compacted to 0..n-1 (original labels kept in `labels`).
    `nbrs[i]` is the sorted neighbor tuple of i; "slot" s of node i refers to
    the s-th entry of that tuple and indexes the flat per-commodity strategy
    arrays via `slot_base[i] + s`.
    """

    def __init__(self, edges, labels=None):
        pairs = set()
        nodes = set()
        for u, v in edges:
            if u == v:
                raise ParseError(f"self-loop at node {u}")
            nodes.add(u)
            nodes.add(v)
            pairs.add((u, v))
            pairs.add((v, u))  # symmetric closure
        if not nodes:
            raise ParseError("empty topology")
        if labels is None:
            labels = sorted(nodes)
        self.labels = list(labels)
        index = {lab: i for i, lab in enumerate(self.labels)}
        self.n = len(self.labels)
        adj = [[] for _ in range(self.n)]
        for u, v in pairs:
            adj[index[u]].append(index[v])
        self.nbrs = [tuple(sorted(a)) for a in adj]
        self.slot_base = [0] * self.n
        acc = 0
        for i in range(self.n):
            self.slot_base[i] = acc
            acc += len(self.nbrs[i])
        self.num_slots = acc
        self.slot_dst = [0] * acc
        self.arcs = []
        self.arc_id = {}
        for i in range(self.n):
            for s, j in enumerate(self.nbrs[i]):
                self.slot_dst[self.slot_base[i] + s] = j
                self.arc_id[(i, j)] = len(self.arcs)
                self.arcs.append((i, j))
        # arc carrying the response to interests forwarded on this slot
        self.slot_rev_arc = [self.arc_id[(j, i)] for (i, j) in self.arcs]
        self.slot_of = {(i, j): self.slot_base[i] + s
                        for i in range(self.n) for s, j in enumerate(self.nbrs[i])}
        self._np = None
        self._check_connected()

    def np_index(self):
        """Lazy numpy mirrors of the CSR indexing (slot destination, reverse
        arc, owning node) for vectorized sweeps."""
        if self._np is None:
            import numpy as np

            slot_node = [i for i in range(self.n) for _ in self.nbrs[i]]
            self._np = (np.asarray(self.slot_dst, dtype=np.intp),
                        np.asarray(self.slot_rev_arc, dtype=np.intp),
                        np.asarray(slot_node, dtype=np.intp),
                        np.asarray(self.slot_base + [self.num_slots], dtype=np.intp))
        return self._np

    def _check_connected(self):
        seen = [False] * self.n
        stack = [0]
        seen[0] = True
        count = 1
        while stack:
            i = stack.pop()
            for j in self.nbrs[i]:
                if not seen[j]:
                    seen[j] = True
                    count += 1
                    stack.append(j)
        if count != self.n:
            missing = [self.labels[i] for i in range(self.n) if not seen[i]]
            raise Disconnected(f"unreachable nodes: {missing[:8]}")

    def degree(self, i):
        return len(self.nbrs[i])

    @property
    def num_arcs(self):
        return len(self.arcs)

    def undirected_pairs(self):
        return [(i, j) for (i, j) in self.arcs if i < j]

    @classmethod
    def from_edge_list(cls, path):
        """Parse a text edge list, one `u v` pair per line; '#' starts a comment."""
        edges = []
        with open(path) as fh:
            for ln, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split()
                if len(parts) != 2:
                    raise ParseError(f"{path}:{ln}: expected 'u v', got {line!r}")
                try:
                    u, v = int(parts[0]), int(parts[1])
                except ValueError as exc:
                    raise ParseError(f"{path}:{ln}: non-integer node id") from exc
                if u < 0 or v < 0:
                    raise ParseError(f"{path}:{ln}: negative node id")
                edges.append((u, v))
        if not edges:
            raise ParseError(f"{path}: no edges")
        return cls(edges)


# ---------------------------------------------------------------------------
# Cost functions


class CostFunction:
    """Increasing convex cost, value 0 at 0, optional finite pole.

    `value`/`deriv` are exact on [0, pole).  `value_ext`/`deriv_ext` replace
    the segment above ``SOFT_CAP_UTILIZATION * pole`` with the C^1 convex
    quadratic tangent there, so optimizers see finite costs and gradients on
    super-capacity states; below the soft cap both versions coincide.
    """

    __slots__ = ("family", "param", "pole", "_soft", "_v_s", "_d_s", "_k_s")

    def __init__(self, family, param, pole):
        self.family = family
        self.param = param
        self.pole = pole
        if math.isfinite(pole):
            self._soft = SOFT_CAP_UTILIZATION * pole
            self._v_s = self._value(self._soft)
            self._d_s = self._deriv(self._soft)
            self._k_s = self._curv(self._soft)
        else:
            self._soft = math.inf

    def _value(self, x):
        raise NotImplementedError

    def _deriv(self, x):
        raise NotImplementedError

    def _curv(self, x):
        raise NotImplementedError

    def value(self, x):
        if x >= self.pole * (1.0 - POLE_GUARD):
            raise CapacityExceeded(self.family, x, self.pole)
        return self._value(x)

    def deriv(self, x):
        if x >= self.pole * (1.0 - POLE_GUARD):
            raise CapacityExceeded(self.family, x, self.pole)
        return self._deriv(x)

    def value_ext(self, x):
        s = self._soft
        if x <= s:
            return self._value(x)
        dx = x - s
        return self._v_s + self._d_s * dx + 0.5 * self._k_s * dx * dx

    def deriv_ext(self, x):
        s = self._soft
        if x <= s:
            return self._deriv(x)
        return self._d_s + self._k_s * (x - s)


class QueueingCost(CostFunction):
    """x / (mu - x) with mu = 1/param: M/M/1 backlog at service rate mu."""

    def __init__(self, param):
        if param <= 0:
            raise ValueError("queueing cost needs param > 0")
        super().__init__("queueing", param, 1.0 / param)

    def _value(self, x):
        return x / (self.pole - x)

    def _deriv(self, x):
        d = self.pole - x
        return self.pole / (d * d)

    def _curv(self, x):
        d = self.pole - x
        return 2.0 * self.pole / (d * d * d)


class LinearCost(CostFunction):
    """param * x; used for cache deployment and cheap links."""

    def __init__(self, param, family="linear"):
        if param < 0:
            raise ValueError("linear cost needs param >= 0")
        super().__init__(family, param, math.inf)

    def _value(self, x):
        return self.param * x

    def _deriv(self, x):
        return self.param

    def value(self, x):  # no pole
        return self.param * x

    def deriv(self, x):
        return self.param

    def value_ext(self, x):
        return self.param * x

    def deriv_ext(self, x):
        return self.param


COST_FAMILIES = {}


def register_cost_family(name, factory, probe_param=1.0):
    """Register a cost family after a sampled convexity/monotonicity check."""
    fn = factory(probe_param)
    if abs(fn.value_ext(0.0)) > 1e-12:
        raise ValueError(f"{name}: value at 0 must be 0")
    hi = fn.pole * SOFT_CAP_UTILIZATION if math.isfinite(fn.pole) else 10.0
    xs = [hi * t / 16.0 for t in range(17)]
    vals = [fn.value_ext(x) for x in xs]
    for a, b in zip(vals, vals[1:]):
        if b < a - 1e-12:
            raise ValueError(f"{name}: not increasing")
    for a, b, c in zip(vals, vals[1:], vals[2:]):
        if b - a > c - b + 1e-9:
            raise ValueError(f"{name}: not convex")
    COST_FAMILIES[name] = factory


register_cost_family("queueing", QueueingCost)
register_cost_family("linear", lambda p: LinearCost(p))
register_cost_family("linear_cache", lambda p: LinearCost(p, family="linear_cache"))


@dataclass
class CostModel:
    """Per-link, per-CPU, and per-cache cost functions (indexed like Topology)."""

    link: list  # CostFunction per arc id
    compute: list  # per node
    cache: list  # per node

    @classmethod
    def build(cls, topo, d, c, b, link_family="queueing",
              compute_family="queueing", cache_family="linear_cache"):
        """d: float or {(u,v) or (v,u): param}; c, b: float or {node: param}."""

        def node_params(spec, n):
            if isinstance(spec, dict):
                return [spec[i] for i in range(n)]
            return [float(spec)] * n

        link_fns = []
        lf = COST_FAMILIES[link_family]
        for (i, j) in topo.arcs:
            if isinstance(d, dict):
                param = d.get((i, j), d.get((j, i)))
                if param is None:
                    raise DimensionMismatch(f"no link param for arc ({i},{j})")
            else:
                param = float(d)
            link_fns.append(lf(param))
        cf = COST_FAMILIES[compute_family]
        bf = COST_FAMILIES[cache_family]
        return cls(
            link=link_fns,
            compute=[cf(p) for p in node_params(c, topo.n)],
            cache=[bf(p) for p in node_params(b, topo.n)],
        )

    def link_param(self, arc_id):
        return self.link[arc_id].param


# ---------------------------------------------------------------------------
# Catalogs, sizes, tasks


@dataclass
class Catalogs:
    """Computation catalog 0..computations-1, data catalog 0..data-1."""

    computations: int
    data: int
    servers: dict  # data item -> tuple of designated server nodes

    def __post_init__(self):
        for k, srv in self.servers.items():
            if not srv:
                raise DimensionMismatch(f"data item {k} has no designated server")


@dataclass
class SizeModel:
    """Data/result sizes (bits) and computation workloads."""

    default_data: float = 0.2
    default_result: float = 0.1
    default_workload: float = 1.0
    data: dict = field(default_factory=dict)  # k -> L^d
    result: dict = field(default_factory=dict)  # (m, k) -> L^c
    workload: dict = field(default_factory=dict)  # (m, k) or (i, m, k) -> W

    def ld(self, k):
        return self.data.get(k, self.default_data)

    def lc(self, m, k):
        return self.result.get((m, k), self.default_result)

    def w(self, i, m, k):
        v = self.workload.get((i, m, k))
        if v is None:
            v = self.workload.get((m, k), self.default_workload)
        return v

    def w_vec(self, m, k, n):
        """Workload of (m, k) at every node; scalar fast path when no
        per-node overrides exist."""
        if not self.workload:
            return self.default_workload
        if not any(len(key) == 3 for key in self.workload):
            return self.workload.get((m, k), self.default_workload)
        return [self.w(i, m, k) for i in range(n)]


@dataclass(frozen=True)
class Task:
    node: int
    comp: int
    data: int
    rate: float


class TaskSet:
    """Deduplicated tasks plus per-commodity request-rate vectors."""

    def __init__(self, tasks, n):
        self.n = n
        merged = {}
        for t in tasks:
            if t.rate <= 0:
                raise DimensionMismatch(f"task {t} has non-positive rate")
            key = (t.node, t.comp, t.data)
            merged[key] = merged.get(key, 0.0) + t.rate
        self.tasks = [Task(d, m, k, r) for (d, m, k), r in sorted(merged.items())]
        self.ci_keys = sorted({(t.comp, t.data) for t in self.tasks})
        self.di_keys = sorted({t.data for t in self.tasks})
        self._rates = {}
        for t in self.tasks:
            vec = self._rates.setdefault((t.comp, t.data), [0.0] * n)
            vec[t.node] += t.rate

    def rate_vec(self, mk):
        return self._rates.get(mk, [0.0] * self.n)

    def total_rate(self):
        return sum(t.rate for t in self.tasks)

    def __len__(self):
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)


@dataclass
class Scenario:
    """Everything a run needs: topology, catalogs, demand, sizes, and costs."""

    topo: Topology
    catalogs: Catalogs
    tasks: TaskSet
    sizes: SizeModel
    costs: CostModel
    name: str = "scenario"
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def ci_keys(self):
        return self.tasks.ci_keys

    @property
    def di_keys(self):
        return self.tasks.di_keys

    def is_server(self, i, k):
        return i in self.catalogs.servers[k]


# ---------------------------------------------------------------------------
# Strategy


class Rows:
    """Per-commodity forwarding/caching row block.

    phi  -- flat list over CSR slots (phi[slot_base[i]+s] splits to nbrs[i][s])
    phi0 -- per-node local-compute fraction (CI commodities only, else None)
    y    -- per-node caching fraction
    """

    __slots__ = ("phi", "phi0", "y")

    def __init__(self, phi, phi0, y):
        self.phi = phi
        self.phi0 = phi0
        self.y = y

    @classmethod
    def zeros(cls, topo, with_compute):
        return cls([0.0] * topo.num_slots,
                   [0.0] * topo.n if with_compute else None,
                   [0.0] * topo.n)

    def copy(self):
        return Rows(list(self.phi), list(self.phi0) if self.phi0 is not None else None,
                    list(self.y))

    def row_sum(self, topo, i):
        base = topo.slot_base[i]
        s = sum(self.phi[base:base + len(topo.nbrs[i])])
        if self.phi0 is not None:
            s += self.phi0[i]
        return s


class Strategy:
    """The pair (phi, y) for every active CI commodity (m,k) and DI item k."""

    def __init__(self, topo, ci, di):
        self.topo = topo
        self.ci = ci  # (m,k) -> Rows
        self.di = di  # k -> Rows

    @classmethod
    def zeros(cls, topo, ci_keys, di_keys):
        return cls(topo,
                   {mk: Rows.zeros(topo, True) for mk in ci_keys},
                   {k: Rows.zeros(topo, False) for k in di_keys})

    def copy(self):
        return Strategy(self.topo,
                        {mk: r.copy() for mk, r in self.ci.items()},
                        {k: r.copy() for k, r in self.di.items()})

    def rows(self):
        """Yield ('c', (m,k), rows) then ('d', k, rows)."""
        for mk, r in self.ci.items():
            yield "c", mk, r
        for k, r in self.di.items():
            yield "d", k, r

    def conditional(self, kind, key, i):
        """Forwarding split given a cache miss: rho = phi / (1 - y), as
        (phi0_share, [(slot, dst, share), ...]). Returns (0, []) if nothing
        is forwarded."""
        rows = self.ci[key] if kind == "c" else self.di[key]
        topo = self.topo
        base = topo.slot_base[i]
        deg = len(topo.nbrs[i])
        total = sum(rows.phi[base:base + deg])
        p0 = rows.phi0[i] if rows.phi0 is not None else 0.0
        total += p0
        if total <= 0.0:
            return 0.0, []
        out = [(s, topo.slot_dst[base + s], rows.phi[base + s] / total)
               for s in range(deg) if rows.phi[base + s] > 0.0]
        return p0 / total, out


# ---------------------------------------------------------------------------
# Validation and loop checks


@dataclass
class ValidationReport:
    issues: list

    @property
    def ok(self):
        return not self.issues

    def kinds(self):
        return sorted({i[0] for i in self.issues})

    def summary(self):
        if self.ok:
            return "valid"
        return "; ".join(f"{i[0]}: {i[1:]}" for i in self.issues[:20])


def validate_strategy(strategy, topo, catalogs, tol=1e-9):
    """Report conservation residuals, out-of-range entries, and forwarding
    rows at designated servers.  Report-only: never raises."""
    issues = []
    for kind, key, rows in strategy.rows():
        if len(rows.y) != topo.n or len(rows.phi) != topo.num_slots:
            issues.append(("dimension", kind, key))
            continue
        for i in range(topo.n):
            base = topo.slot_base[i]
            deg = len(topo.nbrs[i])
            entries = list(rows.phi[base:base + deg])
            if rows.phi0 is not None:
                entries.append(rows.phi0[i])
            entries.append(rows.y[i])
            for v in entries:
                if not (-tol <= v <= 1.0 + tol) or v != v:
                    issues.append(("range", kind, key, i, v))
            total = sum(entries)
            if kind == "d" and i in catalogs.servers[key]:
                fwd = total - rows.y[i]
                if fwd > tol:
                    issues.append(("server_forward", key, i, fwd))
                if rows.y[i] > tol:
                    issues.append(("server_cache", key, i, rows.y[i]))
            elif abs(total - 1.0) > tol:
                issues.append(("conservation", kind, key, i, total - 1.0))
    return ValidationReport(issues)


def _support_out(topo, rows):
    """Neighbor successors with positive forwarding fraction, per node."""
    out = [[] for _ in range(topo.n)]
    for i in range(topo.n):
        base = topo.slot_base[i]
        for s in range(len(topo.nbrs[i])):
            if rows.phi[base + s] > 0.0:
                out[i].append(topo.slot_dst[base + s])
    return out


def _find_cycle(out, n):
    """Return one directed cycle in the successor lists, or None."""
    color = [0] * n
    parent = {}
    for start in range(n):
        if color[start]:
            continue
        stack = [(start, iter(out[start]))]
        color[start] = 1
        while stack:
            node, it = stack[-1]
            advanced = False
            for j in it:
                if color[j] == 0:
                    color[j] = 1
                    parent[j] = node
                    stack.append((j, iter(out[j])))
                    advanced = True
                    break
                if color[j] == 1:
                    cycle = [j, node]
                    cur = node
                    while cur != j:
                        cur = parent[cur]
                        cycle.append(cur)
                    cycle.reverse()
                    return cycle
            if not advanced:
                color[node] = 2
                stack.pop()
    return None


@dataclass
class LoopFreeReport:
    verdicts: dict  # (kind, key) -> cycle list or None

    @property
    def ok(self):
        return all(v is None for v in self.verdicts.values())

    def cycles(self):
        return {ck: v for ck, v in self.verdicts.items() if v is not None}


def check_loop_free(strategy, topo=None):
    """Per-commodity acyclicity verdicts with one witness cycle when cyclic."""
    topo = topo or strategy.topo
    verdicts = {}
    for kind, key, rows in strategy.rows():
        verdicts[(kind, key)] = _find_cycle(_support_out(topo, rows), topo.n)
    return LoopFreeReport(verdicts)


def _topo_order(out, n, kind, key):
    """Kahn order of the support digraph; raises LoopDetected on a cycle."""
    indeg = [0] * n
    for i in range(n):
        for j in out[i]:
            indeg[j] += 1
    stack = [i for i in range(n) if indeg[i] == 0]
    order = []
    while stack:
        i = stack.pop()
        order.append(i)
        for j in out[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                stack.append(j)
    if len(order) != n:
        cycle = _find_cycle(out, n)
        raise LoopDetected(kind, key, cycle)
    return order


# ---------------------------------------------------------------------------
# Traffic fixed point


class TrafficState:
    """Exact solution of the interest-flow equations for one strategy.

    tc[(m,k)][i], td[k][i] -- node interest traffic (packets/sec)
    g[(m,k)][i]            -- local computation rate
    F[arc]                 -- response bits/sec on each directed link
    G[i]                   -- computation workload/sec
    cache_count[i]         -- expected number of cached items (sum of y)
    cache_load[i]          -- size-weighted expected cache occupancy (drives B_i)
    """

    __slots__ = ("strategy", "tc", "g", "td", "F", "G", "cache_count", "cache_load")

    def __init__(self, strategy, tc, g, td, F, G, cache_count, cache_load):
        self.strategy = strategy
        self.tc = tc
        self.g = g
        self.td = td
        self.F = F
        self.G = G
        self.cache_count = cache_count
        self.cache_load = cache_load

    def fc(self, mk):
        """CI link rates for commodity (m,k), flat over CSR slots."""
        topo = self.strategy.topo
        rows = self.strategy.ci[mk]
        t = self.tc[mk]
        return [rows.phi[topo.slot_base[i] + s] * t[i]
                for i in range(topo.n) for s in range(len(topo.nbrs[i]))]

    def fd(self, k):
        topo = self.strategy.topo
        rows = self.strategy.di[k]
        t = self.td[k]
        return [rows.phi[topo.slot_base[i] + s] * t[i]
                for i in range(topo.n) for s in range(len(topo.nbrs[i]))]

    def fc_arc(self, mk, i, j):
        topo = self.strategy.topo
        return self.strategy.ci[mk].phi[topo.slot_of[(i, j)]] * self.tc[mk][i]

    def fd_arc(self, k, i, j):
        topo = self.strategy.topo
        return self.strategy.di[k].phi[topo.slot_of[(i, j)]] * self.td[k][i]


def solve_traffic(scenario, strategy, order=None):
    """Solve the traffic fixed point by substitution in topological order.

    CI commodities first (their local-computation rates inject the DI
    demand), then DI commodities.  `order`, when given, maps (kind, key) to
    a node order to use instead of running Kahn's algorithm; callers must
    guarantee it is a topological order of the support digraph.
    Raises LoopDetected for cyclic support.
    """
    topo = scenario.topo
    tasks = scenario.tasks
    sizes = scenario.sizes
    n = topo.n
    slot_base = topo.slot_base
    slot_dst = topo.slot_dst
    slot_rev = topo.slot_rev_arc
    F = [0.0] * topo.num_arcs
    G = [0.0] * n
    cache_count = [0.0] * n
    cache_load = [0.0] * n
    tc = {}
    g = {}
    di_inject = {k: [0.0] * n for k in strategy.di}

    for mk, rows in strategy.ci.items():
        m, k = mk
        lc = sizes.lc(m, k)
        seq = order.get(("c", mk)) if order else None
        if seq is None:
            seq = _topo_order(_support_out(topo, rows), n, "c", mk)
        t = list(tasks.rate_vec(mk))
        phi = rows.phi
        phi0 = rows.phi0
        gv = [0.0] * n
        inj = di_inject.get(k)
        for i in seq:
            ti = t[i]
            if ti > 0.0:
                base = slot_base[i]
                for s in range(len(topo.nbrs[i])):
                    p = phi[base + s]
                    if p > 0.0:
                        t[slot_dst[s + base]] += p * ti
                        F[slot_rev[s + base]] += lc * p * ti
                p0 = phi0[i]
                if p0 > 0.0:
                    gi = p0 * ti
                    gv[i] = gi
                    G[i] += sizes.w(i, m, k) * gi
                    if inj is not None:
                        inj[i] += gi
        tc[mk] = t
        g[mk] = gv
        y = rows.y
        for i in range(n):
            yi = y[i]
            if yi != 0.0:
                cache_count[i] += yi
                cache_load[i] += lc * yi

    td = {}
    for k, rows in strategy.di.items():
        ld = sizes.ld(k)
        seq = order.get(("d", k)) if order else None
        if seq is None:
            seq = _topo_order(_support_out(topo, rows), n, "d", k)
        t = list(di_inject[k])
        phi = rows.phi
        for i in seq:
            ti = t[i]
            if ti > 0.0:
                base = slot_base[i]
                for s in range(len(topo.nbrs[i])):
                    p = phi[base + s]
                    if p > 0.0:
                        t[slot_dst[s + base]] += p * ti
                        F[slot_rev[s + base]] += ld * p * ti
        td[k] = t
        y = rows.y
        for i in range(n):
            yi = y[i]
            if yi != 0.0:
                cache_count[i] += yi
                cache_load[i] += ld * yi

    return TrafficState(strategy, tc, g, td, F, G, cache_count, cache_load)


def total_cost(traffic, costs, strict=True):
    """Aggregated cost T = sum D_ij(F_ij) + sum B_i(Y_i) + sum C_i(G_i).

    strict=True raises CapacityExceeded at (or within 1e-12 of) a queueing
    pole, identifying the saturated element; strict=False evaluates the
    convex extension instead (what the optimizers minimize).
    """
    topo = traffic.strategy.topo
    total = 0.0
    if strict:
        for a, fn in enumerate(costs.link):
            f = traffic.F[a]
            if f > 0.0:
                try:
                    total += fn.value(f)
                except CapacityExceeded:
                    raise CapacityExceeded(f"link {topo.arcs[a]}", f, fn.pole)
        for i, fn in enumerate(costs.compute):
            gi = traffic.G[i]
            if gi > 0.0:
                try:
                    total += fn.value(gi)
                except CapacityExceeded:
                    raise CapacityExceeded(f"cpu {i}", gi, fn.pole)
        for i, fn in enumerate(costs.cache):
            if traffic.cache_load[i] > 0.0:
                total += fn.value(traffic.cache_load[i])
    else:
        for a, fn in enumerate(costs.link):
            if traffic.F[a] > 0.0:
                total += fn.value_ext(traffic.F[a])
        for i, fn in enumerate(costs.compute):
            if traffic.G[i] > 0.0:
                total += fn.value_ext(traffic.G[i])
        for i, fn in enumerate(costs.cache):
            if traffic.cache_load[i] > 0.0:
                total += fn.value_ext(traffic.cache_load[i])
    return total


def flow_cost(traffic, costs, strict=False):
    """Link + compute part of T (no caching term)."""
    total = 0.0
    for a, fn in enumerate(costs.link):
        f = traffic.F[a]
        if f > 0.0:
            total += fn.value(f) if strict else fn.value_ext(f)
    for i, fn in enumerate(costs.compute):
        gi = traffic.G[i]
        if gi > 0.0:
            total += fn.value(gi) if strict else fn.value_ext(gi)
    return total


def cache_cost(traffic, costs):
    return sum(fn.value_ext(traffic.cache_load[i])
               for i, fn in enumerate(costs.cache) if traffic.cache_load[i] > 0.0)


# ---------------------------------------------------------------------------
# Strategy (de)serialization


def dump_strategy(strategy):
    """JSON-ready dict: {"ci": {"m,k": {"i": {"j": f, "compute": f, "y": f}}},
    "di": ...} with neighbor ids as keys ("compute" is the local slot, which
    cannot reuse "0": that is a valid node id).  Zero entries are omitted."""
    topo = strategy.topo
    out = {"ci": {}, "di": {}}
    for kind, key, rows in strategy.rows():
        tag = f"{key[0]},{key[1]}" if kind == "c" else str(key)
        dest = out["ci" if kind == "c" else "di"].setdefault(tag, {})
        for i in range(topo.n):
            row = {}
            base = topo.slot_base[i]
            for s, j in enumerate(topo.nbrs[i]):
                if rows.phi[base + s] != 0.0:
                    row[str(j)] = rows.phi[base + s]
            if rows.phi0 is not None and rows.phi0[i] != 0.0:
                row["compute"] = rows.phi0[i]
            if rows.y[i] != 0.0:
                row["y"] = rows.y[i]
            if row:
                dest[str(i)] = row
    return out


def load_strategy(data, topo, ci_keys, di_keys):
    """Inverse of dump_strategy.  Returns (strategy, issues): entries naming
    non-links or unknown commodities are reported, not installed."""
    strategy = Strategy.zeros(topo, ci_keys, di_keys)
    issues = []
    for section, keys in (("ci", set(ci_keys)), ("di", set(di_keys))):
        for tag, rowmap in data.get(section, {}).items():
            if section == "ci":
                m, k = (int(x) for x in tag.split(","))
                key = (m, k)
                rows = strategy.ci.get(key)
            else:
                key = int(tag)
                rows = strategy.di.get(key)
            if rows is None:
                issues.append(("unknown_commodity", section, tag))
                continue
            for istr, entries in rowmap.items():
                i = int(istr)
                if not (0 <= i < topo.n):
                    issues.append(("unknown_node", section, tag, i))
                    continue
                for label, val in entries.items():
                    if label == "y":
                        rows.y[i] = float(val)
                    elif label == "compute":
                        if rows.phi0 is None:
                            issues.append(("compute_slot_on_data_row", tag, i))
                        else:
                            rows.phi0[i] = float(val)
                    else:
                        j = int(label)
                        if (i, j) not in topo.slot_of:
                            issues.append(("non_link", section, tag, i, j, float(val)))
                            continue
                        rows.phi[topo.slot_of[(i, j)]] = float(val)
    return strategy, issues
