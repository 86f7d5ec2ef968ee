import math

import numpy as np
import pytest

from isinglab.exact import BETA_CRIT, corr_spin
from isinglab.lattice import MeshDomain, PMBoundarySpec, build_rectangle
from isinglab.montecarlo import (
    MCState, MonteCarloError, build_graph, estimate, integrated_autocorrelation,
    metropolis_sweep, wolff_update,
)


def _plus_pm(dom):
    return PMBoundarySpec([[("plus", len(dom.loop_edges(loop)))]
                           for loop in dom.boundary_loops])


def _free_pm(dom):
    return PMBoundarySpec([[("free", len(dom.loop_edges(loop)))]
                           for loop in dom.boundary_loops])


def test_beta_zero_clusters_are_single_sites():
    dom = build_rectangle(1.0, 4, 4)
    g = build_graph(dom, _plus_pm(dom))
    st = MCState(g, 3)
    assert all(wolff_update(st, beta=0.0) == 1 for _ in range(50))


def test_free_domain_symmetry():
    dom = build_rectangle(1.0, 4, 4)
    est = estimate(dom, _free_pm(dom), ("mean_spin", sorted(dom.vertices)),
                   500, 4000, seed=13)
    assert abs(est.mean) < 3 * max(est.stderr, 1e-3)


def test_matches_exact_enumeration():
    dom = build_rectangle(1.0, 4, 4)
    pm = _plus_pm(dom)
    vv = sorted(dom.vertices)
    pairs = [([vv[5]], 21), ([vv[5], vv[10]], 22)]
    for spins, seed in pairs:
        ex = corr_spin(dom, spins, pm=pm)
        est = estimate(dom, pm, ("spin_product", spins), 1000, 8000, seed=seed)
        assert abs(est.mean - ex) <= 3 * est.stderr


def test_distance_zero_product():
    dom = build_rectangle(1.0, 3, 3)
    v = sorted(dom.vertices)[0]
    est = estimate(dom, _plus_pm(dom), ("spin_product", [v, v]), 200, 2000,
                   seed=1)
    assert est.mean == 1.0 and est.stderr == 0.0


def test_determinism_and_chain_splitting():
    dom = build_rectangle(1.0, 3, 3)
    pm = _plus_pm(dom)
    v = sorted(dom.vertices)[4]
    a = estimate(dom, pm, ("spin_product", [v]), 300, 2000, seed=5)
    b = estimate(dom, pm, ("spin_product", [v]), 300, 2000, seed=5)
    assert a == b
    c = estimate(dom, pm, ("spin_product", [v]), 300, 2000, seed=5, chain=1)
    assert c.mean != a.mean


def test_sample_count_guard():
    dom = build_rectangle(1.0, 3, 3)
    with pytest.raises(MonteCarloError):
        estimate(dom, _plus_pm(dom), ("mean_spin", sorted(dom.vertices)),
                 10, 50, seed=0)


def test_detailed_balance_three_spin_chain():
    """Empirical stationary distribution of a three-spin chain with a
    pinned end matches the Gibbs weights."""
    dom = MeshDomain(1.0, {(0, 0), (2, 2), (4, 4)})
    L = len(dom.loop_edges(dom.boundary_loops[0]))
    labels = []
    # pin exactly the arcs adjacent to one end vertex
    edges = dom.loop_edges(dom.boundary_loops[0])
    from isinglab.lattice import crossing_edge, edge_key
    runs = []
    for oe in edges:
        ce = crossing_edge(edge_key(*oe))
        outer = ce[0] if ce[0] not in dom.vertices else ce[1]
        near_end = abs(outer[0] - 0) + abs(outer[1] - 0) <= 4
        runs.append("plus" if near_end else "free")
    spec = [[(lab, 1) for lab in runs]]
    pm = PMBoundarySpec(spec)
    g = build_graph(dom, pm)
    st = MCState(g, 7)
    mega = [s for s in range(g.n_interior, g.n_free)
            if g.mega_value.get(s, 0) != 0]
    counts = {}
    n_updates = 200_000
    for i in range(n_updates):
        wolff_update(st)
        if i % 5 == 0:
            metropolis_sweep(st)
        flip = 1
        for s in mega:
            flip *= st.component_sign(s)
        key = tuple(int(x) * flip for x in st.spins[:3])
        counts[key] = counts.get(key, 0) + 1
    # Gibbs weights over the three chain spins with the pinned-end field
    idx = {v: g.index_of[v] for v in ((0, 0), (2, 2), (4, 4))}
    n_pins = {v: 0 for v in idx}
    from isinglab.lattice import crossing_edge as ce2
    for e in dom.crossing_edges:
        vin = e[0] if e[0] in dom.vertices else e[1]
        de = ce2(e)
        lab = pm.edge_labels(dom)[de]
        if lab == "plus":
            n_pins[vin] += 1
    weights = {}
    for s0 in (1, -1):
        for s1 in (1, -1):
            for s2 in (1, -1):
                conf = {(0, 0): s0, (2, 2): s1, (4, 4): s2}
                e = s0 * s1 + s1 * s2
                e += sum(conf[v] * n_pins[v] for v in conf)
                spins = [0, 0, 0]
                for v, s in conf.items():
                    spins[idx[v]] = s
                weights[tuple(spins)] = math.exp(BETA_CRIT * e)
    ztot = sum(weights.values())
    for key, w in weights.items():
        p_emp = counts.get(key, 0) / n_updates
        p_th = w / ztot
        sigma = math.sqrt(p_th * (1 - p_th) / n_updates) * math.sqrt(10)
        assert abs(p_emp - p_th) < 4 * max(sigma, 5e-4), (key, p_emp, p_th)


def test_autocorrelation_reported():
    x = np.sin(np.arange(4000) * 0.01) + np.random.default_rng(0).normal(
        size=4000)
    tau = integrated_autocorrelation(x)
    assert tau > 0.5
