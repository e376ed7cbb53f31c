import numpy as np
import pytest

from netplace.gcfw import GainEvaluator, GcfwConfig, gcfw_run, lp_step
from netplace.model import validate_strategy
from netplace.routing import build_static_blocked_sets, support_violations
from netplace.scenarios import chain_scenario, expand, preset



def _paired_fd_gain(ev, strategy, kind, key, i, entry, h=1e-6):
    """Finite difference of G = M + N along the conservation-preserving move
    (entry up, y down)."""
    sc = ev.scenario

    def bumped(sign):
        s2 = strategy.copy()
        rows = s2.ci[key] if kind == "c" else s2.di[key]
        if entry == "phi0":
            rows.phi0[i] += sign * h
        else:
            rows.phi[sc.topo.slot_of[(i, entry)]] += sign * h
        rows.y[i] -= sign * h
        return s2

    return (ev.value(bumped(+1)) - ev.value(bumped(-1))) / (2 * h)


def test_grad_n_entry_linear_cache():
    # linear cache price b and result size 0.1: relieving one unit of cache
    # mass through forwarding is worth 0.1*b per unit
    sc = chain_scenario(b=7.0)
    ev = GainEvaluator(sc)
    strategy = ev.initial.copy()
    mk = sc.ci_keys[0]
    strategy.ci[mk].phi[sc.topo.slot_of[(0, 1)]] = 0.6
    strategy.ci[mk].y[0] = 0.4
    gm, gn = ev.grads(strategy)
    assert gn[("c", mk)][0] == pytest.approx(0.1 * 7.0)
    assert gn[("d", sc.di_keys[0])][0] == pytest.approx(0.2 * 7.0)


def test_grad_gain_matches_finite_differences():
    rng = np.random.default_rng(17)
    sc = expand(preset("grid25", seed=2).replace(
        num_tasks=6, num_data=4, num_comp=2,
        d_mean=0.3, c_mean=0.3, b_mean=1.0, rate_range=(0.05, 0.15)))
    ev = GainEvaluator(sc)
    blocked = ev.blocked
    strategy = ev.initial.copy()
    # interior-ize a few rows so finite differences are two-sided
    for mk, rows in strategy.ci.items():
        pos = blocked.pos[mk[1]]
        for i in range(sc.topo.n):
            base = sc.topo.slot_base[i]
            slots = [s for s, j in enumerate(sc.topo.nbrs[i]) if pos[j] < pos[i]]
            parts = len(slots) + 2
            rows.phi0[i] = 1.0 / parts
            rows.y[i] = 1.0 / parts
            for s in range(sc.topo.degree(i)):
                rows.phi[base + s] = 0.0
            for s in slots:
                rows.phi[base + s] = 1.0 / parts
    for k, rows in strategy.di.items():
        pos = blocked.pos[k]
        for i in range(sc.topo.n):
            if i in sc.catalogs.servers[k]:
                continue
            base = sc.topo.slot_base[i]
            slots = [s for s, j in enumerate(sc.topo.nbrs[i]) if pos[j] < pos[i]]
            parts = len(slots) + 1
            rows.y[i] = 1.0 / parts
            for s in range(sc.topo.degree(i)):
                rows.phi[base + s] = 0.0
            for s in slots:
                rows.phi[base + s] = 1.0 / parts
    gm, gn = ev.grads(strategy)
    checked = 0
    for _ in range(24):
        kind = "c" if rng.random() < 0.6 else "d"
        keys = sc.ci_keys if kind == "c" else sc.di_keys
        key = keys[int(rng.integers(len(keys)))]
        i = int(rng.integers(sc.topo.n))
        pos = blocked.pos[key[1] if kind == "c" else key]
        if kind == "d" and i in sc.catalogs.servers[key]:
            continue
        allowed = [j for j in sc.topo.nbrs[i] if pos[j] < pos[i]]
        options = allowed + (["phi0"] if kind == "c" else [])
        if not options:
            continue
        entry = options[int(rng.integers(len(options)))]
        gphi0, gphi = gm[(kind, key)]
        if entry == "phi0":
            analytic = gphi0[i] + gn[(kind, key)][i]
        else:
            analytic = gphi[sc.topo.slot_of[(i, entry)]] + gn[(kind, key)][i]
        numeric = _paired_fd_gain(ev, strategy, kind, key, i, entry)
        assert analytic == pytest.approx(numeric, rel=2e-5, abs=1e-6)
        checked += 1
    assert checked >= 12


def test_lp_step_row_rules():
    sc = chain_scenario()
    blocked = build_static_blocked_sets(sc)
    mk = sc.ci_keys[0]
    k = sc.di_keys[0]
    n = sc.topo.n

    def gm_gn(scores_phi0, scores_nbr, di_scores):
        gm = {("c", mk): (list(scores_phi0), list(scores_nbr)),
              ("d", k): (None, list(di_scores))}
        gn = {("c", mk): [0.0] * n, ("d", k): [0.0] * n}
        return gm, gn

    # all-negative row 0 -> zeroed (cache); row 1 positive at slot0
    gm, gn = gm_gn([-1.0, 2.0, -1.0],
                   [-1.0] * sc.topo.num_slots,
                   [-1.0] * sc.topo.num_slots)
    psi = lp_step(sc, gm, gn, blocked)
    assert psi.ci[mk].y[0] == 1.0
    assert psi.ci[mk].phi0[1] == 1.0
    rep = validate_strategy(psi, sc.topo, sc.catalogs)
    assert rep.ok, rep.summary()

    # tie between compute slot and the allowed neighbor: compute slot wins
    scores_nbr = [0.0] * sc.topo.num_slots
    scores_nbr[sc.topo.slot_of[(0, 1)]] = 5.0
    gm, gn = gm_gn([5.0, 5.0, 5.0], scores_nbr, [1.0] * sc.topo.num_slots)
    psi = lp_step(sc, gm, gn, blocked)
    assert psi.ci[mk].phi0[0] == 1.0 and psi.ci[mk].phi[sc.topo.slot_of[(0, 1)]] == 0.0


def test_lp_never_selects_blocked_hop():
    sc = expand(preset("grid25", seed=5).replace(num_tasks=6, num_data=4, num_comp=2))
    ev = GainEvaluator(sc)
    gm, gn = ev.grads(ev.initial)
    psi = lp_step(sc, gm, gn, ev.blocked)
    assert support_violations(sc, psi, ev.blocked) == []


def test_gcfw_run_trace_and_feasibility():
    sc = expand(preset("grid25", seed=6).replace(num_tasks=8, num_data=5, num_comp=2))
    cfg = GcfwConfig(iters=30)
    res = gcfw_run(sc, cfg)
    assert len(res.trace) == cfg.iters + 1
    assert res.loop_violations == 0
    # max-so-far of G is non-decreasing and the result attains it
    best = -1e18
    for rec in res.trace:
        best = max(best, rec.G)
    assert res.best_G == pytest.approx(best)
    rep = validate_strategy(res.strategy, sc.topo, sc.catalogs, tol=1e-9)
    assert rep.ok, rep.summary()
    # gain at the reported strategy matches the trace maximum
    assert res.evaluator.value(res.strategy) == pytest.approx(best, rel=1e-9, abs=1e-9)


def test_gain_parts_baseline_and_full_caching():
    sc = chain_scenario(b=0.5)
    ev = GainEvaluator(sc)
    m0, n0 = ev.parts(ev.initial)
    assert m0 == pytest.approx(0.0, abs=1e-12)  # baseline defines the origin
    assert n0 == 0.0
    full = ev.initial.copy()
    for kind, key, rows in full.rows():
        for i in range(sc.topo.n):
            if kind == "d" and i in sc.catalogs.servers[key]:
                continue
            base = sc.topo.slot_base[i]
            for s in range(sc.topo.degree(i)):
                rows.phi[base + s] = 0.0
            if rows.phi0 is not None:
                rows.phi0[i] = 0.0
            rows.y[i] = 1.0
    m1, n1 = ev.parts(full)
    assert m1 == pytest.approx(ev.t0)  # no flows at all
    # every cache row pays its price: -sum b_i * (L^c + L^d per item cached)
    expected = -sum(sc.costs.cache[i].param * (0.1 + (0.2 if i != 2 else 0.0))
                    for i in range(3))
    assert n1 == pytest.approx(expected)


def test_epsilon_schedule():
    assert GcfwConfig(iters=100).epsilon == pytest.approx(100 ** (-1 / 3))
    with pytest.raises(ValueError):
        GcfwConfig(iters=1)
