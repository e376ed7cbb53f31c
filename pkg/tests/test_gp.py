import math

import numpy as np
import pytest

from netplace.errors import Disconnected
from netplace.gp import (
    GpConfig,
    _update_row,
    gp_run_fluid,
    gp_slot_update,
    randomized_round,
    round_node,
)
from netplace.marginals import broadcast_marginals, check_modified_condition
from netplace.model import Topology, solve_traffic, validate_strategy
from netplace.routing import build_static_blocked_sets, sep_route
from netplace.scenarios import chain_scenario, expand, preset

from oracles import dfs_has_cycle


# ---------------------------------------------------------------------------
# Blocked sets


def test_chain_blocked_set():
    sc = chain_scenario()
    blocked = build_static_blocked_sets(sc)
    # at b (node 1), the far node a (0) is blocked for data item 0
    assert blocked.blocked_set(0, 1, sc.topo) == [0]
    assert blocked.allowed(0, 1, 2) and not blocked.allowed(0, 1, 0)


def test_grid_allowed_digraph_acyclic():
    sc = expand(preset("grid25", seed=1))
    blocked = build_static_blocked_sets(sc)
    topo = sc.topo
    for k in sc.di_keys:
        succ = [[j for j in topo.nbrs[i] if blocked.allowed(k, i, j)]
                for i in range(topo.n)]
        assert not dfs_has_cycle(succ, topo.n)
        # every non-server node keeps an allowed route
        for i in range(topo.n):
            if i not in sc.catalogs.servers[k]:
                assert succ[i], f"node {i} stranded for item {k}"


def test_isolated_node_rejected_at_load():
    with pytest.raises(Disconnected):
        Topology([(0, 1), (2, 3)])


# ---------------------------------------------------------------------------
# Row update arithmetic (worked examples)


def test_row_update_competitor_shrinks_by_alpha_e():
    # deltas: j* at 1.0 (min), competitor at 1.5 (e=0.5), alpha=0.01
    new_phi, new_phi0, new_y = _update_row(
        [0.5, 0.2], 0.0, [1.0, 1.5], 3.0, 1.0, [True, True],
        0.01, False, 0.0, math.inf)
    assert new_phi[1] == pytest.approx(0.2 - 0.005)
    assert new_phi[0] == pytest.approx(0.5 + 0.005)
    assert new_y == 0.0


def test_row_update_mass_moves_into_cache_when_gamma_min():
    # gamma attains the minimum: forwarding shrinks, caching absorbs
    new_phi, _, new_y = _update_row(
        [0.6, 0.4], 0.0, [2.0, 3.0], 1.0, 1.0, [True, True],
        0.1, False, 0.0, math.inf)
    assert new_y == pytest.approx(0.1 + 0.2)
    assert new_phi == pytest.approx([0.5, 0.2])


def test_row_update_zero_at_stationary_row():
    new_phi, _, new_y = _update_row(
        [1.0, 0.0], 0.0, [1.0, 1.5], 2.0, 1.0, [True, True],
        0.01, False, 0.0, math.inf)
    assert new_phi == [1.0, 0.0] and new_y == 0.0


def test_row_update_blocked_entry_zeroed():
    new_phi, _, new_y = _update_row(
        [0.3, 0.7], 0.0, [1.2, 1.0], 5.0, 1.0, [False, True],
        0.01, False, 0.0, math.inf)
    assert new_phi[0] == 0.0
    assert new_phi[1] == pytest.approx(1.0)
    assert new_y == 0.0


# ---------------------------------------------------------------------------
# Rounding


def test_round_certain_rows_deterministic():
    rng = np.random.default_rng(0)
    for _ in range(50):
        got = round_node([("a", 1.0), ("b", 0.0), ("c", 0.0)], rng)
        assert got == {"a"}


def test_round_half_half_picks_exactly_one():
    rng = np.random.default_rng(1)
    counts = {"a": 0, "b": 0}
    for _ in range(4000):
        got = round_node([("a", 0.5), ("b", 0.5)], rng)
        assert len(got) == 1
        counts[next(iter(got))] += 1
    assert counts["a"] / 4000 == pytest.approx(0.5, abs=0.03)


def test_round_count_within_floor_ceil_and_marginals():
    rng = np.random.default_rng(2)
    ys = [0.3, 0.8, 0.45, 0.05, 0.9]
    total = sum(ys)
    hits = [0] * len(ys)
    trials = 5000
    for _ in range(trials):
        got = round_node(list(enumerate(ys)), rng)
        assert len(got) in (math.floor(total), math.ceil(total))
        for idx in got:
            hits[idx] += 1
    for idx, y in enumerate(ys):
        assert hits[idx] / trials == pytest.approx(y, abs=0.03)


def test_randomized_round_deterministic_given_seed():
    sc = chain_scenario(b=0.5)
    res = gp_run_fluid(sc, GpConfig(max_slots=500))
    d1 = randomized_round(sc, res.strategy, seed=123)
    d2 = randomized_round(sc, res.strategy, seed=123)
    assert d1.per_node == d2.per_node
    for i, count in enumerate(d1.counts):
        y = sum(r.y[i] for _, _, r in res.strategy.rows())
        assert count in (math.floor(y - 1e-9) if y > 1e-9 else 0,
                         math.floor(y + 1e-9), math.ceil(y - 1e-9))


# ---------------------------------------------------------------------------
# Fluid runs


def test_gp_chain_converges_monotone():
    sc = chain_scenario(b=0.5)
    res = gp_run_fluid(sc, GpConfig(max_slots=3000))
    assert res.converged
    Ts = [r.T for r in res.trace]
    assert all(Ts[i + 1] <= Ts[i] + 1e-12 for i in range(1, len(Ts) - 1))
    assert res.loop_violations == 0
    rep = validate_strategy(res.strategy, sc.topo, sc.catalogs, tol=1e-12)
    assert rep.ok, rep.summary()


def test_gp_stationary_start_stays_put():
    sc = chain_scenario(b=0.5)
    res = gp_run_fluid(sc, GpConfig(max_slots=3000))
    again = gp_run_fluid(sc, GpConfig(max_slots=50), initial=res.strategy)
    assert again.converged and len(again.trace) == 1


def test_gp_small_grid_certificate():
    spec = preset("grid25", seed=3).replace(num_tasks=10, num_data=8, num_comp=3)
    sc = expand(spec)
    res = gp_run_fluid(sc, GpConfig(max_slots=4000))
    assert res.converged
    blocked = res.blocked
    ts = solve_traffic(sc, res.strategy)
    marg = broadcast_marginals(sc, res.strategy, ts, blocked=blocked)
    rep = check_modified_condition(sc, res.strategy, marg, blocked=blocked)
    assert rep.residual <= 1e-6
    assert not rep.blocked_active


def test_gp_conservation_exact_after_updates():
    spec = preset("grid25", seed=4).replace(num_tasks=8, num_data=6, num_comp=2)
    sc = expand(spec)
    blocked = build_static_blocked_sets(sc)
    order = blocked.order_map(sc.ci_keys, sc.di_keys)
    strategy = sep_route(sc, blocked)
    cfg = GpConfig()
    for _ in range(40):
        ts = solve_traffic(sc, strategy, order=order)
        marg = broadcast_marginals(sc, strategy, ts, blocked=blocked, order=order)
        strategy = gp_slot_update(sc, strategy, ts, marg, blocked, cfg)
    rep = validate_strategy(strategy, sc.topo, sc.catalogs, tol=1e-12)
    assert rep.ok, rep.summary()


def test_gp_huge_stepsize_flagged_not_asserted():
    # oscillation with a huge step is possible; the run must complete and
    # the trace exposes the count as a flag (not asserted to oscillate)
    sc = chain_scenario(b=0.5)
    res = gp_run_fluid(sc, GpConfig(stepsize=10.0, max_slots=50))
    assert len(res.trace) >= 1
    assert res.oscillations >= 0
    calm = gp_run_fluid(sc, GpConfig(stepsize=0.01, max_slots=1500))
    assert calm.oscillations == 0


def test_dynamic_stub_blocked_policy():
    from netplace.gp import build_blocked_sets

    sc = chain_scenario()
    static = build_blocked_sets(sc, "static")
    stub = build_blocked_sets(sc, "dynamic-stub")
    assert stub.pos == static.pos  # stub shares the static construction
    with pytest.raises(ValueError):
        build_blocked_sets(sc, "nonsense")
