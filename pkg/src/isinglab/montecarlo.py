"""Wolff single-cluster Monte Carlo at the critical coupling.

Boundary handling: a boundary component whose non-free part carries a
single label (all plus, all minus, or wired) is represented by one
flippable mega-site tied to all its outer vertices; correlations in the
pinned ensemble are measured through the global flip identity
E_pinned[X] = E_unpinned[X * s_component], which keeps the cluster
dynamics ergodic.  Components mixing plus and minus arcs fall back to
frozen spins with cluster rejection, mitigated by interleaved
checkerboard Metropolis sweeps.

The generator is counter-based (Philox) keyed by (seed, chain), so runs
are reproducible and parallel chains get independent streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exact import BETA_CRIT
from .lattice import (FREE, MINUS, PLUS, WIRED, MeshDomain,
                      PMBoundarySpec, crossing_edge, edge_key)


class MonteCarloError(ValueError):
    pass


@dataclass
class CouplingGraph:
    """Sites: interior vertices, then one mega-site per monochromatic
    boundary component, then frozen sites of mixed components, then a
    zero-spin sentinel used as padding."""

    n_free: int                  # interior + mega-sites (all flippable)
    n_interior: int
    n_sites: int
    neighbors: np.ndarray        # (n_interior, 4) indices for Metropolis
    edge_csr: tuple              # (indptr, edge_other) per site for Wolff
    frozen: np.ndarray
    frozen_value: np.ndarray
    index_of: dict
    mega_value: dict             # site index -> pinned value (+-1) or 0 (wired)
    beta: float = BETA_CRIT
    color_groups: list = field(default_factory=list)


def build_graph(domain: MeshDomain, pm: PMBoundarySpec | None = None,
                beta: float = BETA_CRIT) -> CouplingGraph:
    labels = pm.edge_labels(domain) if pm is not None else {
        edge_key(*oe): FREE
        for loop in domain.boundary_loops for oe in domain.loop_edges(loop)}
    verts = sorted(domain.vertices)
    index = {v: i for i, v in enumerate(verts)}
    n_interior = len(verts)

    # classify boundary components
    comp_label: dict[int, str | None] = {}
    for k, loop in enumerate(domain.boundary_loops):
        labs = {labels[edge_key(*oe)] for oe in domain.loop_edges(loop)}
        labs.discard(FREE)
        if not labs:
            comp_label[k] = None
        elif len(labs) == 1:
            comp_label[k] = labs.pop()
        else:
            comp_label[k] = "mixed"
    dual_to_comp = {}
    for k, loop in enumerate(domain.boundary_loops):
        for u in loop:
            dual_to_comp[u] = k

    mega_site: dict[int, int] = {}
    mega_value: dict[int, int] = {}
    next_site = n_interior
    for k, lab in comp_label.items():
        if lab in (PLUS, MINUS, WIRED):
            mega_site[k] = next_site
            mega_value[next_site] = {PLUS: 1, MINUS: -1, WIRED: 0}[lab]
            next_site += 1
    n_free = next_site

    frozen_vals: dict[tuple, int] = {}
    edges: list[tuple[int, int]] = []
    for e in sorted(domain.interior_edges):
        edges.append((index[e[0]], index[e[1]]))
    for e in sorted(domain.crossing_edges):
        de = crossing_edge(e)
        lab = labels[de]
        if lab == FREE:
            continue
        vin = e[0] if e[0] in domain.vertices else e[1]
        vout = e[1] if e[0] in domain.vertices else e[0]
        comp = dual_to_comp[de[0]]
        if comp in mega_site:
            edges.append((index[vin], mega_site[comp]))
        else:
            val = 1 if lab == PLUS else -1
            if frozen_vals.get(vout, val) != val:
                raise MonteCarloError(f"conflicting pins at {vout}")
            if vout not in index:
                frozen_vals[vout] = val
                index[vout] = next_site
                next_site += 1
            edges.append((index[vin], index[vout]))
    n_sites = next_site
    sentinel = n_sites

    nbr = np.full((n_interior, 4), sentinel, dtype=np.int64)
    slot = np.zeros(n_interior, dtype=np.int64)
    deg = np.zeros(n_sites, dtype=np.int64)
    for a, b in edges:
        deg[a] += 1
        deg[b] += 1
        for s in (a, b):
            if s < n_interior:
                o = b if s == a else a
                nbr[s, slot[s]] = o
                slot[s] += 1
    indptr = np.zeros(n_sites + 1, dtype=np.int64)
    np.cumsum(deg, out=indptr[1:])
    other = np.zeros(indptr[-1], dtype=np.int64)
    fill = indptr[:-1].copy()
    for a, b in edges:
        other[fill[a]] = b
        fill[a] += 1
        other[fill[b]] = a
        fill[b] += 1

    frozen = np.zeros(n_sites, dtype=bool)
    frozen[n_free:] = True
    fval = np.zeros(n_sites, dtype=np.int8)
    for v, val in frozen_vals.items():
        fval[index[v]] = val
    graph = CouplingGraph(n_free, n_interior, n_sites, nbr,
                          (indptr, other), frozen, fval, index, mega_value,
                          beta)
    colors = np.array([(v[0] % 4) // 2 for v in verts], dtype=np.int64)
    graph.color_groups = [np.where(colors == c)[0] for c in (0, 1)]
    return graph


@dataclass
class MCState:
    graph: CouplingGraph
    seed: int
    chain: int = 0
    spins: np.ndarray = field(init=False)
    rng: np.random.Generator = field(init=False)
    n_updates: int = 0
    n_rejected: int = 0

    def __post_init__(self):
        self.rng = np.random.Generator(
            np.random.Philox(key=[self.seed, self.chain]))
        g = self.graph
        spins = self.rng.choice(np.array([-1, 1], dtype=np.int8), g.n_sites)
        for s, val in g.mega_value.items():
            spins[s] = val if val != 0 else spins[s]
        spins[g.frozen] = g.frozen_value[g.frozen]
        self.spins = np.concatenate([spins, np.zeros(1, dtype=np.int8)])

    def component_sign(self, site: int) -> int:
        """Spin of a mega-site relative to its pinned target (+1 for wired)."""
        target = self.graph.mega_value.get(site, 0)
        if target == 0:
            return 1
        return int(self.spins[site]) * target


def wolff_update(state: MCState, beta: float | None = None) -> int:
    """One single-cluster update; clusters touching a frozen site of a
    mixed component are rejected (size 0 reported)."""
    g = state.graph
    beta = g.beta if beta is None else beta
    p_add = 1.0 - math.exp(-2.0 * beta)
    indptr, other = g.edge_csr
    seed = int(state.rng.integers(0, g.n_free))
    spin0 = state.spins[seed]
    in_cluster = np.zeros(g.n_sites + 1, dtype=bool)
    in_cluster[seed] = True
    frontier = np.array([seed], dtype=np.int64)
    members = [seed]
    touched_frozen = False
    while len(frontier):
        spans = [other[indptr[s]:indptr[s + 1]] for s in frontier]
        cand = np.concatenate(spans) if spans else np.empty(0, dtype=np.int64)
        cand = cand[(state.spins[cand] == spin0) & ~in_cluster[cand]]
        if not len(cand):
            break
        keep = state.rng.random(len(cand)) < p_add
        cand = np.unique(cand[keep])
        if not len(cand):
            break
        in_cluster[cand] = True
        if np.any(g.frozen[cand]):
            touched_frozen = True
            break
        members.extend(cand.tolist())
        frontier = cand
    state.n_updates += 1
    if touched_frozen:
        state.n_rejected += 1
        return 0
    state.spins[members] = -spin0
    return len(members)


def metropolis_sweep(state: MCState, beta: float | None = None):
    """Vectorized checkerboard sweep over the interior sites."""
    g = state.graph
    beta = g.beta if beta is None else beta
    for group in g.color_groups:
        field_sum = state.spins[g.neighbors[group]].sum(axis=1)
        cur = state.spins[group]
        dE = 2.0 * cur * field_sum
        accept = state.rng.random(len(group)) < np.exp(-beta * dE)
        state.spins[group[accept]] = -cur[accept]


def _measure(state: MCState, observable) -> float:
    kind, payload = observable[0], observable[1]
    g = state.graph
    comp = 1.0
    for site in range(g.n_interior, g.n_free):
        if g.mega_value.get(site, 0) != 0:
            comp *= state.component_sign(site)
    if kind == "spin_product":
        out = 1.0
        for v in payload:
            out *= float(state.spins[g.index_of[tuple(v)]])
        par = len(payload) % 2
    elif kind == "mean_spin":
        idx = [g.index_of[tuple(v)] for v in payload]
        out = float(np.mean(state.spins[idx]))
        par = 1
    elif kind == "mean_edge":
        tot = 0.0
        for a, b in payload:
            tot += float(state.spins[g.index_of[tuple(a)]]
                         * state.spins[g.index_of[tuple(b)]])
        out = tot / len(payload)
        par = 0
    else:
        raise MonteCarloError(f"unknown observable {kind!r}")
    # odd observables need the pinned-component sign (flip identity);
    # even observables are flip-invariant
    return out * (comp if par == 1 else 1.0)


@dataclass
class Estimate:
    mean: float
    stderr: float
    n_samples: int
    ess: float
    tau: float
    rejection_rate: float


def estimate(domain: MeshDomain, pm: PMBoundarySpec | None, observable,
             n_therm: int, n_samples: int, seed: int,
             sweep_every: int = 10, chain: int = 0,
             beta: float = BETA_CRIT, n_bins: int = 20) -> Estimate:
    """Binned mean and jackknife standard error; deterministic in the seed.

    One sample per cluster update, a Metropolis sweep every sweep_every
    updates; the effective sample size comes from the integrated
    autocorrelation of the measured series.
    """
    if n_samples < 10 * n_bins:
        raise MonteCarloError("need at least 10 samples per bin")
    graph = build_graph(domain, pm, beta)
    state = MCState(graph, seed, chain)
    for i in range(n_therm):
        wolff_update(state)
        if sweep_every and i % sweep_every == 0:
            metropolis_sweep(state)
    series = np.empty(n_samples)
    for i in range(n_samples):
        wolff_update(state)
        if sweep_every and i % sweep_every == 0:
            metropolis_sweep(state)
        series[i] = _measure(state, observable)
    bins = series[: n_samples - n_samples % n_bins].reshape(n_bins, -1)
    bmeans = bins.mean(axis=1)
    mean = float(bmeans.mean())
    jk = (bmeans.sum() - bmeans) / (n_bins - 1)
    stderr = float(np.sqrt((n_bins - 1) / n_bins * np.sum((jk - jk.mean()) ** 2)))
    tau = integrated_autocorrelation(series)
    ess = n_samples / (2 * tau) if tau > 0 else float(n_samples)
    rej = state.n_rejected / max(1, state.n_updates)
    return Estimate(mean, stderr, n_samples, ess, tau, rej)


def integrated_autocorrelation(series: np.ndarray, c: float = 6.0) -> float:
    """Integrated autocorrelation time with an adaptive window."""
    x = np.asarray(series, dtype=float)
    x = x - x.mean()
    var = float(np.dot(x, x)) / len(x)
    if var == 0:
        return 0.5
    tau = 0.5
    for t in range(1, min(len(x) // 4, 2000)):
        rho = float(np.dot(x[:-t], x[t:])) / ((len(x) - t) * var)
        tau += rho
        if t >= c * tau:
            break
    return max(tau, 0.5)
