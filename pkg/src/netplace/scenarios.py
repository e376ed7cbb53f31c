"""Scenario generation and (de)serialization.

A ScenarioSpec is the reproducible recipe (topology source, catalog sizes,
mean cost parameters, master seed); expand() turns it into a concrete
Scenario deterministically.  Explicit scenario files may instead pin servers,
tasks, and parameters literally.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import InvalidParams, ParseError
from .model import Catalogs, CostModel, Scenario, SizeModel, Task, TaskSet, Topology

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


def data_path(name):
    return os.path.join(DATA_DIR, name)


# ---------------------------------------------------------------------------
# Topology generators


def _grid_edges(rows, cols):
    edges = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                edges.append((i, i + 1))
            if r + 1 < rows:
                edges.append((i, i + cols))
    return edges


def _tree_edges(arity, levels):
    """Full arity-ary tree with `levels` levels (root is level 1)."""
    count = (arity ** levels - 1) // (arity - 1) if arity > 1 else levels
    edges = []
    for i in range(1, count):
        edges.append(((i - 1) // arity, i))
    return edges, count


def _fog_edges(arity, levels):
    """Tree plus linear concatenation of each parent's children."""
    edges, count = _tree_edges(arity, levels)
    for parent in range((count - 1) // arity):
        first = parent * arity + 1
        for c in range(first, min(first + arity - 1, count - 1)):
            edges.append((c, c + 1))
    return edges


def _connected(n, edges):
    adj = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = [False] * n
    seen[0] = True
    stack = [0]
    count = 1
    while stack:
        i = stack.pop()
        for j in adj[i]:
            if not seen[j]:
                seen[j] = True
                count += 1
                stack.append(j)
    return count == n


def _er_edges(n, p, rng):
    """Connectivity-guaranteed Erdos-Renyi: resample up to 100 times, then
    augment with the missing edges of a random spanning tree."""
    edges = []
    for _ in range(100):
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)
                 if rng.random() < p]
        if edges and _connected(n, edges):
            return edges
    present = set(edges)
    perm = [int(x) for x in rng.permutation(n)]
    for a, b in zip(perm, perm[1:]):
        e = (min(a, b), max(a, b))
        if e not in present:
            present.add(e)
            edges.append(e)
    return edges


def _small_world_edges(n, k, p, rng):
    """Ring lattice with k neighbors per side; longer-range lattice edges are
    rewired with probability p.  The base ring is never rewired, so the graph
    stays connected; the edge count is preserved up to rewiring collisions."""
    edges = set()
    out = []
    for i in range(n):
        edges.add((min(i, (i + 1) % n), max(i, (i + 1) % n)))
    for i in range(n):
        for off in range(2, k + 1):
            a, b = i, (i + off) % n
            if a == b:
                continue
            edges.add((min(a, b), max(a, b)))
    for (a, b) in sorted(edges):
        if (b - a) % n > 1 and rng.random() < p:
            for _ in range(20):
                c = int(rng.integers(n))
                if c != a and (min(a, c), max(a, c)) not in edges:
                    edges.add((min(a, c), max(a, c)))
                    b = c
                    break
        out.append((a, b))
    return out


def gen_topology(kind, params, seed=0):
    """Generate a symmetric-closure topology.  Kinds: er(n,p), grid(rows,cols),
    tree(depth), fog(arity,depth), sw(n,k,p), path(n), complete(n)."""
    rng = np.random.default_rng(seed)
    try:
        if kind == "grid":
            return Topology(_grid_edges(int(params["rows"]), int(params["cols"])))
        if kind == "tree":
            edges, _ = _tree_edges(2, int(params["depth"]))
            return Topology(edges)
        if kind == "fog":
            return Topology(_fog_edges(int(params.get("arity", 3)), int(params["depth"])))
        if kind == "er":
            return Topology(_er_edges(int(params["n"]), float(params["p"]), rng))
        if kind == "sw":
            return Topology(_small_world_edges(int(params["n"]), int(params.get("k", 3)),
                                               float(params.get("p", 0.1)), rng))
        if kind == "path":
            n = int(params["n"])
            return Topology([(i, i + 1) for i in range(n - 1)])
        if kind == "complete":
            n = int(params["n"])
            return Topology([(i, j) for i in range(n) for j in range(i + 1, n)])
    except (KeyError, ValueError, TypeError) as exc:
        raise InvalidParams(f"{kind}: {exc}") from exc
    raise InvalidParams(f"unknown topology kind {kind!r}")


def load_topology(path):
    """Edge-list file: one `u v` per line, closed symmetrically, must connect."""
    return Topology.from_edge_list(path)


# ---------------------------------------------------------------------------
# Workload sampling


def _zipf_probs(n, exponent):
    w = np.array([1.0 / (r ** exponent) for r in range(1, n + 1)])
    return w / w.sum()


@dataclass
class ScenarioSpec:
    """Reproducible scenario recipe (Table-style row)."""

    name: str = "scenario"
    topology: dict = field(default_factory=lambda: {"kind": "grid",
                                                    "params": {"rows": 5, "cols": 5}})
    num_data: int = 50
    num_comp: int = 10
    num_tasks: int = 50
    zipf: float = 1.0
    rate_range: tuple = (1.0, 5.0)
    rate_scale: float = 1.0
    d_mean: float = 3.0
    c_mean: float = 5.0
    b_mean: float = 10.0
    data_size: float = 0.2
    result_size: float = 0.1
    workload: float = 1.0
    seed: int = 0
    explicit: dict = None  # literal servers/tasks/params; overrides sampling

    def to_json(self):
        d = asdict(self)
        d["rate_range"] = list(self.rate_range)
        if d.get("explicit"):
            exp = dict(d["explicit"])
            if "servers" in exp:
                exp["servers"] = {str(k): list(v) for k, v in exp["servers"].items()}
            if "d" in exp and isinstance(exp["d"], dict):
                exp["d"] = {f"{i},{j}": v for (i, j), v in exp["d"].items()}
            for fld in ("c", "b"):
                if fld in exp and isinstance(exp[fld], dict):
                    exp[fld] = {str(k): v for k, v in exp[fld].items()}
            if "tasks" in exp:
                exp["tasks"] = [list(t) for t in exp["tasks"]]
            d["explicit"] = exp
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad scenario JSON: {exc}") from exc
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ParseError(f"unknown scenario fields: {sorted(extra)}")
        if "rate_range" in d:
            d["rate_range"] = tuple(d["rate_range"])
        if "explicit" in d and d["explicit"] is not None:
            exp = d["explicit"]
            if "servers" in exp:
                exp["servers"] = {int(k): list(v) for k, v in exp["servers"].items()}
            if "d" in exp and isinstance(exp["d"], dict):
                exp["d"] = {tuple(map(int, key.split(","))): v
                            for key, v in exp["d"].items()}
            for fld in ("c", "b"):
                if fld in exp and isinstance(exp[fld], dict):
                    exp[fld] = {int(k): v for k, v in exp[fld].items()}
        return cls(**d)

    def replace(self, **kw):
        d = asdict(self)
        d.update(kw)
        d["rate_range"] = tuple(d["rate_range"])
        return ScenarioSpec(**d)


def _build_topology(spec):
    src = spec.topology
    if "file" in src:
        path = src["file"]
        if not os.path.isabs(path) and not os.path.exists(path):
            cand = data_path(path)
            if os.path.exists(cand):
                path = cand
        return load_topology(path)
    return gen_topology(src["kind"], src.get("params", {}), seed=spec.seed)


def sample_workload(spec, topo, seed=None):
    """Draw catalogs, tasks, cost parameters, and sizes for a spec.

    The draw order is fixed (servers per item, then tasks, then link, CPU,
    and cache parameters) so one master seed reproduces the workload byte for
    byte; explicit spec blocks pin values instead of drawing them.
    Returns (Catalogs, TaskSet, CostModel, SizeModel).
    """
    rng = np.random.default_rng((spec.seed if seed is None else seed) + 0x5EED)
    exp = spec.explicit or {}

    if "servers" in exp:
        servers = {int(k): tuple(v) for k, v in exp["servers"].items()}
    else:
        servers = {k: (int(rng.integers(topo.n)),) for k in range(spec.num_data)}

    if "tasks" in exp:
        tasks = [Task(int(d), int(m), int(k), float(r) * spec.rate_scale)
                 for d, m, k, r in exp["tasks"]]
    else:
        pm = _zipf_probs(spec.num_comp, spec.zipf)
        pk = _zipf_probs(spec.num_data, spec.zipf)
        lo, hi = spec.rate_range
        tasks = []
        for _ in range(spec.num_tasks):
            d = int(rng.integers(topo.n))
            m = int(rng.choice(spec.num_comp, p=pm))
            k = int(rng.choice(spec.num_data, p=pk))
            rate = float(rng.uniform(lo, hi)) * spec.rate_scale
            tasks.append(Task(d, m, k, rate))
    task_set = TaskSet(tasks, topo.n)

    for k in set(task_set.di_keys):
        if k not in servers:
            raise InvalidParams(f"no server assigned for data item {k}")

    if "d" in exp:
        d_param = exp["d"]
    else:
        d_param = {}
        for (i, j) in topo.undirected_pairs():
            v = float(rng.uniform(0.5 * spec.d_mean, 1.5 * spec.d_mean))
            d_param[(i, j)] = v
    if "c" in exp:
        c_param = exp["c"]
    else:
        c_param = {i: float(rng.uniform(0.5 * spec.c_mean, 1.5 * spec.c_mean))
                   for i in range(topo.n)}
    if "b" in exp:
        b_param = exp["b"]
    else:
        b_param = {i: float(rng.uniform(0.5 * spec.b_mean, 1.5 * spec.b_mean))
                   for i in range(topo.n)}

    costs = CostModel.build(
        topo, d_param, c_param, b_param,
        link_family=exp.get("link_family", "queueing"),
        compute_family=exp.get("compute_family", "queueing"),
        cache_family=exp.get("cache_family", "linear_cache"),
    )
    sizes = SizeModel(default_data=spec.data_size,
                      default_result=spec.result_size,
                      default_workload=spec.workload)
    catalogs = Catalogs(spec.num_comp, spec.num_data, servers)
    return catalogs, task_set, costs, sizes


def expand(spec):
    """Deterministically expand a spec into a Scenario."""
    topo = _build_topology(spec)
    catalogs, task_set, costs, sizes = sample_workload(spec, topo)
    return Scenario(topo=topo, catalogs=catalogs, tasks=task_set, sizes=sizes,
                    costs=costs, name=spec.name, seed=spec.seed,
                    meta={"spec": json.loads(spec.to_json())})


# ---------------------------------------------------------------------------
# Shipped presets (Table-style rows; GEANT/LHC/DTelekom use stand-in files)

PRESETS = {
    "er50": ScenarioSpec(name="er50",
                         topology={"kind": "er", "params": {"n": 50, "p": 0.07}},
                         num_data=100, num_comp=20, num_tasks=200,
                         d_mean=5, c_mean=10, b_mean=20),
    "grid100": ScenarioSpec(name="grid100",
                            topology={"kind": "grid", "params": {"rows": 10, "cols": 10}},
                            num_data=100, num_comp=20, num_tasks=400,
                            d_mean=5, c_mean=15, b_mean=30),
    "tree": ScenarioSpec(name="tree",
                         topology={"kind": "tree", "params": {"depth": 6}},
                         num_data=100, num_comp=20, num_tasks=100,
                         d_mean=5, c_mean=10, b_mean=20),
    "fog": ScenarioSpec(name="fog",
                        topology={"kind": "fog", "params": {"arity": 3, "depth": 4}},
                        num_data=100, num_comp=20, num_tasks=150,
                        d_mean=3, c_mean=10, b_mean=30),
    "geant": ScenarioSpec(name="geant",
                          topology={"file": "geant.txt"},
                          num_data=50, num_comp=10, num_tasks=100,
                          d_mean=3, c_mean=5, b_mean=10),
    "lhc": ScenarioSpec(name="lhc",
                        topology={"file": "lhc.txt"},
                        num_data=50, num_comp=10, num_tasks=100,
                        d_mean=3, c_mean=10, b_mean=15),
    "dtelekom": ScenarioSpec(name="dtelekom",
                             topology={"file": "dtelekom.txt"},
                             num_data=200, num_comp=30, num_tasks=400,
                             d_mean=5, c_mean=15, b_mean=20),
    "sw": ScenarioSpec(name="sw",
                       topology={"kind": "sw", "params": {"n": 120, "k": 3, "p": 0.1}},
                       num_data=200, num_comp=30, num_tasks=400,
                       d_mean=5, c_mean=15, b_mean=20),
    "grid25": ScenarioSpec(name="grid25",
                           topology={"kind": "grid", "params": {"rows": 5, "cols": 5}},
                           num_data=50, num_comp=10, num_tasks=50,
                           d_mean=3, c_mean=5, b_mean=10),
}


def preset(name, **overrides):
    if name not in PRESETS:
        raise InvalidParams(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    spec = PRESETS[name]
    return spec.replace(**overrides) if overrides else spec


def chain_scenario(rate=1.0, d=1.0, c=None, b=5.0, ld=0.2, lc=0.1, w=1.0,
                   name="chain3"):
    """Three-node chain a-b-s with the server at s and one task at a.
    The worked micro-example used across the test suite."""
    topo = Topology([(0, 1), (1, 2)])
    c_param = c if c is not None else {0: 10.0, 1: 0.5, 2: 10.0}
    costs = CostModel.build(topo, d, c_param, b)
    catalogs = Catalogs(1, 1, {0: (2,)})
    tasks = TaskSet([Task(0, 0, 0, rate)], topo.n)
    sizes = SizeModel(default_data=ld, default_result=lc, default_workload=w)
    return Scenario(topo, catalogs, tasks, sizes, costs, name=name)
