"""Brute-force enumeration of the critical Ising model on small domains.

Partition functions and correlations (spin, disorder, energy, fermionic,
plus/minus boundary conditions) are computed by vectorized enumeration over
all configurations of the free spins.  Complement components with wired
(unpinned) boundary get one extra binary variable each; free arcs are
excluded from the energy.

Serves as the ground-truth oracle for the solver and Monte Carlo modules.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .lattice import (
    FREE, MINUS, PLUS, WIRED, CornerPoint, DoubleCover, MeshDomain,
    PMBoundarySpec, corner_neighbors, crossing_edge, edge_key, is_primal,
    phase_step_sign, rotation_vertex, step_crossed_edge, corner_phase,
    _ROOT8, PHASE_INDEX, corner_direction,
)

BETA_CRIT = 0.5 * math.log(math.sqrt(2.0) + 1.0)

MAX_FREE_SPINS = 28
_CHUNK = 1 << 20


class EnumerationError(ValueError):
    pass


def _reduce_spins(spins) -> tuple:
    out: set = set()
    for s in spins:
        out.symmetric_difference_update({tuple(s)})
    return tuple(sorted(out))


@dataclass
class _Expr:
    """Spin value of a site as coef * s_var (var None means constant 1)."""
    coef: int
    var: int | None


class Enumeration:
    """Vectorized configuration sums for one domain and boundary treatment.

    mode:
      "standard"  wired arcs monochromatic per complement component (one
                  unpinned bit each), free arcs decoupled
      "pinned"    plus/minus arcs frozen to +-1 per a PMBoundarySpec
      "mono"      locally monochromatic: one bit per component, sign flipped
                  at each separation point of the PMBoundarySpec
    """

    def __init__(self, domain: MeshDomain, mode: str = "standard",
                 pm: PMBoundarySpec | None = None, beta: float = BETA_CRIT):
        self.domain = domain
        self.beta = beta
        self.mode = mode
        verts = sorted(domain.vertices)
        self.vert_index = {v: i for i, v in enumerate(verts)}
        self.exprs: dict[tuple, _Expr] = {
            v: _Expr(1, i) for v, i in self.vert_index.items()}
        nbits = self._assign_outer(pm)
        self.n_free = len(verts) + nbits
        if self.n_free > MAX_FREE_SPINS:
            raise EnumerationError(
                f"{self.n_free} free spins exceeds the enumeration limit "
                f"of {MAX_FREE_SPINS}")
        self._build_edges()

    # -- boundary assignment -------------------------------------------

    def _assign_outer(self, pm) -> int:
        dom = self.domain
        if self.mode == "standard":
            self.active_label = dict(dom.edge_label)
            nbits = 0
            self.loop_bit: dict[int, int | None] = {}
            for k, loop in enumerate(dom.boundary_loops):
                labs = {dom.edge_label[edge_key(*oe)] for oe in dom.loop_edges(loop)}
                if WIRED in labs:
                    self.loop_bit[k] = len(dom.vertices) + nbits
                    nbits += 1
                else:
                    self.loop_bit[k] = None
            for k, loop in enumerate(dom.boundary_loops):
                for oe in dom.loop_edges(loop):
                    de = edge_key(*oe)
                    if dom.edge_label[de] != WIRED:
                        continue
                    self._set_outer(de, _Expr(1, self.loop_bit[k]))
            return nbits
        if pm is None:
            raise EnumerationError(f"mode {self.mode!r} needs a PMBoundarySpec")
        labels = pm.edge_labels(dom)
        self.active_label = {de: (FREE if lab == FREE else WIRED)
                             for de, lab in labels.items()}
        if self.mode == "pinned":
            for de, lab in labels.items():
                if lab == PLUS:
                    self._set_outer(de, _Expr(1, None))
                elif lab == MINUS:
                    self._set_outer(de, _Expr(-1, None))
            return 0
        if self.mode == "mono":
            seps = set(pm.separation_points(dom))
            nbits = 0
            for loop in dom.boundary_loops:
                edges = dom.loop_edges(loop)
                if all(labels[edge_key(*oe)] == FREE for oe in edges):
                    continue
                bit = len(dom.vertices) + nbits
                nbits += 1
                sign = 1
                for u0, u1 in edges:
                    de = edge_key(u0, u1)
                    if labels[de] != FREE:
                        self._set_outer(de, _Expr(sign, bit))
                    if u1 in seps:
                        sign = -sign
                if sign != 1:
                    raise EnumerationError(
                        "odd number of separation points on a boundary loop")
            return nbits
        raise EnumerationError(f"unknown mode {self.mode!r}")

    def _set_outer(self, de, expr: _Expr):
        ce = crossing_edge(de)
        p_out = ce[0] if ce[0] not in self.domain.vertices else ce[1]
        old = self.exprs.get(p_out)
        if old is not None and (old.coef, old.var) != (expr.coef, expr.var):
            raise EnumerationError(
                f"conflicting boundary values at outer vertex {p_out}")
        self.exprs[p_out] = expr

    # -- energy ----------------------------------------------------------

    def _build_edges(self):
        dom = self.domain
        self.edge_terms: dict[tuple, tuple[int, int | None, int | None]] = {}
        for e in sorted(dom.interior_edges):
            a, b = self.exprs[e[0]], self.exprs[e[1]]
            self.edge_terms[e] = (a.coef * b.coef, a.var, b.var)
        for e in sorted(dom.crossing_edges):
            if self.active_label[crossing_edge(e)] == FREE:
                continue
            vin, vout = (e[0], e[1]) if e[0] in dom.vertices else (e[1], e[0])
            a, b = self.exprs[vin], self.exprs[vout]
            self.edge_terms[e] = (a.coef * b.coef, a.var, b.var)

    def _products(self, idx: np.ndarray, terms) -> np.ndarray:
        """Sum of +-1 edge products over the given (coef, va, vb) terms."""
        total = np.zeros(len(idx), dtype=np.int32)
        for coef, va, vb in terms:
            if va is None and vb is None:
                total += coef
                continue
            if va is None or vb is None:
                v = va if va is not None else vb
                bits = ((idx >> np.uint64(v)) & np.uint64(1)).astype(np.int32)
            else:
                bits = (((idx >> np.uint64(va)) ^ (idx >> np.uint64(vb)))
                        & np.uint64(1)).astype(np.int32)
            total += coef * (1 - 2 * bits)
        return total

    def _spin_signs(self, idx: np.ndarray, spins) -> np.ndarray:
        coef = 1
        var_list = []
        for s in spins:
            ex = self.exprs.get(tuple(s))
            if ex is None:
                raise EnumerationError(f"no spin value at {s} (free boundary?)")
            coef *= ex.coef
            if ex.var is not None:
                var_list.append(ex.var)
        acc = np.zeros(len(idx), dtype=np.uint64)
        for v in var_list:
            acc ^= (idx >> np.uint64(v)) & np.uint64(1)
        return coef * (1 - 2 * acc.astype(np.int32))

    def gamma_terms(self, gamma) -> list:
        """Energy terms of included edges crossed by the dual-edge set gamma."""
        terms = []
        for de in gamma:
            e = crossing_edge(edge_key(*de))
            t = self.edge_terms.get(e)
            if t is not None:
                terms.append(t)
        return terms

    def _chunks(self):
        """(idx, base_energy) pairs; the base energy is cached up to 2^24
        configurations (64 MB) and recomputed chunkwise beyond that."""
        n_total = 1 << self.n_free
        if n_total <= (1 << 24):
            if not hasattr(self, "_cache"):
                idx = np.arange(n_total, dtype=np.uint64)
                self._cache = (idx, self._products(
                    idx, list(self.edge_terms.values())))
            idx, energy = self._cache
            for start in range(0, n_total, _CHUNK):
                yield idx[start:start + _CHUNK], energy[start:start + _CHUNK]
            return
        base_terms = list(self.edge_terms.values())
        for start in range(0, n_total, _CHUNK):
            idx = np.arange(start, min(start + _CHUNK, n_total),
                            dtype=np.uint64)
            yield idx, self._products(idx, base_terms)

    def sums(self, observables, gamma=()) -> list[float]:
        """[sum_config mu_gamma(config) * w(config) * prod_{S} sigma] per S.

        observables: list of spin collections (each reduced mod 2 first);
        an entry may also be ("edges", [primal edges]) whose value is the
        product of sigma*sigma over those edges.
        """
        g_terms = self.gamma_terms(gamma)
        out = np.zeros(len(observables), dtype=float)
        emax = len(self.edge_terms) + 2 * len(g_terms) + 1
        table = np.exp(self.beta * np.arange(-emax, emax + 1))
        for idx, base_energy in self._chunks():
            energy = base_energy
            if g_terms:
                energy = energy - 2 * self._products(idx, g_terms)
            w = table[energy + emax]
            for i, obs in enumerate(observables):
                if isinstance(obs, tuple) and len(obs) == 2 and obs[0] == "edges":
                    val = np.ones(len(idx))
                    for e in obs[1]:
                        t = self.edge_terms.get(edge_key(*e))
                        if t is None:
                            raise EnumerationError(f"edge {e} not in the energy")
                        val = val * self._products(idx, [t])
                    out[i] += float(np.dot(w, val))
                else:
                    out[i] += float(np.dot(w, self._spin_signs(idx, obs)))
        return list(out)


# -- public correlation functions ----------------------------------------


def result_record(query: str, value, z: float | None = None,
                  bc: str = "standard") -> str:
    """One JSON-lines record for reproducible result logs (enumeration
    results carry no seed)."""
    import json
    if isinstance(value, complex):
        value = [value.real, value.imag]
    return json.dumps({"query": query, "value": value, "Z": z, "bc": bc,
                       "seedless": True}, sort_keys=True)


def partition_function(domain: MeshDomain, pm: PMBoundarySpec | None = None,
                       beta: float = BETA_CRIT) -> float:
    mode = "pinned" if pm is not None else "standard"
    en = Enumeration(domain, mode, pm, beta)
    (z,) = en.sums([()])
    return z


def corr_spin(domain: MeshDomain, vertices, pm: PMBoundarySpec | None = None,
              beta: float = BETA_CRIT) -> float:
    """E[sigma_v1 ... sigma_vn]; exactly zero for odd counts under the
    flip-symmetric standard boundary conditions."""
    spins = _reduce_spins(vertices)
    if pm is None and len(spins) % 2 == 1:
        return 0.0
    mode = "pinned" if pm is not None else "standard"
    en = Enumeration(domain, mode, pm, beta)
    num, z = en.sums([spins, ()])
    return num / z


def corr_disorder_spin(domain: MeshDomain, gamma, vertices=(),
                       pm: PMBoundarySpec | None = None,
                       normalized: bool = True, beta: float = BETA_CRIT) -> float:
    """E[mu_gamma sigma_v1 ... sigma_vn] for an explicit dual-edge cut."""
    spins = _reduce_spins(vertices)
    mode = "pinned" if pm is not None else "standard"
    en = Enumeration(domain, mode, pm, beta)
    (num,) = en.sums([spins], gamma=gamma)
    if not normalized:
        return num
    (z,) = en.sums([()])
    return num / z


def corr_energy(domain: MeshDomain, edges, spins=(),
                pm: PMBoundarySpec | None = None,
                beta: float = BETA_CRIT) -> float:
    """E[eps_e1 ... eps_es sigma_v...] with eps = sqrt2 (sigma sigma - 1/sqrt2).

    Repeated edges expand via eps^2 = 3 - 2 sqrt2 sigma sigma.
    """
    mode = "pinned" if pm is not None else "standard"
    en = Enumeration(domain, mode, pm, beta)
    for e in edges:
        if en.edge_terms.get(edge_key(*e)) is None:
            raise EnumerationError(f"energy edge {e} crosses a free arc")
    return _pm_content_value(en, spins, edges)


def corr_pm(domain: MeshDomain, pm: PMBoundarySpec, spins=(), energy_edges=(),
            beta: float = BETA_CRIT, check_tol: float | None = 1e-10) -> float:
    """Correlation under plus/minus/free boundary conditions.

    Computed directly with pinned boundary spins, and again through the
    locally monochromatic ensemble expanded over products of one marked
    boundary spin per component; the two routes must agree.
    """
    direct = _pm_direct(domain, pm, spins, energy_edges, beta)
    via_mono = _pm_via_mono(domain, pm, spins, energy_edges, beta)
    if check_tol is not None:
        scale = max(1.0, abs(direct))
        if abs(direct - via_mono) > check_tol * scale:
            raise EnumerationError(
                f"pm routes disagree: {direct} vs {via_mono}")
    return direct


def _pm_content_value(en: Enumeration, spins, energy_edges) -> float:
    spins = _reduce_spins(spins)
    z = en.sums([()])[0]
    if not energy_edges:
        return en.sums([spins])[0] / z
    edges = [edge_key(*e) for e in energy_edges]
    total = 0.0
    for mask in range(1 << len(edges)):
        sub = [edges[i] for i in range(len(edges)) if mask >> i & 1]
        coef = math.sqrt(2.0) ** len(edges) * (-1 / math.sqrt(2.0)) ** (
            len(edges) - len(sub))
        total += coef * _reweighted_mixed(en, spins, sub, ())
    return total / z


def _pm_direct(domain, pm, spins, energy_edges, beta) -> float:
    en = Enumeration(domain, "pinned", pm, beta)
    return _pm_content_value(en, spins, energy_edges)


def _pm_via_mono(domain, pm, spins, energy_edges, beta) -> float:
    """Fourier-Walsh expansion over marked boundary spins in the locally
    monochromatic ensemble."""
    en = Enumeration(domain, "mono", pm, beta)
    labels = pm.edge_labels(domain)
    marks: list[tuple] = []
    for loop in domain.boundary_loops:
        for oe in domain.loop_edges(loop):
            de = edge_key(*oe)
            if labels[de] in (PLUS, MINUS):
                ce = crossing_edge(de)
                p_out = ce[0] if ce[0] not in domain.vertices else ce[1]
                want = 1 if labels[de] == PLUS else -1
                marks.append((p_out, want))
                break
    num = 0.0
    den = 0.0
    for mask in range(1 << len(marks)):
        sub = [marks[i] for i in range(len(marks)) if mask >> i & 1]
        alpha = 1.0
        for _, want in sub:
            alpha *= want
        pts = [p for p, _ in sub]
        num += alpha * _pm_content_value(en, tuple(spins) + tuple(pts), energy_edges)
        den += alpha * _pm_content_value(en, tuple(pts), ())
    return num / den


# -- fermionic observables -------------------------------------------------


def _as_corner(c) -> CornerPoint:
    if isinstance(c, CornerPoint):
        return c
    return CornerPoint(tuple(c), 0)


def _phase0(pos) -> complex:
    return _ROOT8[PHASE_INDEX[corner_direction(pos)]]


def _side(source_pos, target_pos) -> int:
    """+1 if the first transport step leaves through the positive side of
    the source's primal-dual segment."""
    p, d = corner_neighbors(source_pos)
    ax, ay = p[0] - d[0], p[1] - d[1]
    bx, by = target_pos[0] - source_pos[0], target_pos[1] - source_pos[1]
    cross = ax * by - ay * bx
    return 1 if cross > 0 else -1


class _Transport:
    """Coherent branch bookkeeping for sigma-mu corner insertions.

    State: the explicit dual cut pairing the dual halves of all placed
    insertions, an accumulated sign (phase continuation and cut crossings),
    and the sheet parity with respect to the cover's primal branch cut.
    """

    def __init__(self, cover: DoubleCover):
        if cover.ram_dual:
            raise EnumerationError(
                "fermionic observables need a cover ramified at vertices only")
        self.cover = cover
        self.gamma: set = set()
        self.chi = 1
        self.lift = 0

    def clone(self):
        t = _Transport(self.cover)
        t.gamma = set(self.gamma)
        t.chi = self.chi
        t.lift = self.lift
        return t

    def step(self, c1, c2):
        w = rotation_vertex(c1, c2)
        e = step_crossed_edge(c1, c2)
        self.chi *= phase_step_sign(c1, c2)
        if is_primal(w):
            u1, u2 = (2 * c1[0] - w[0], 2 * c1[1] - w[1]), \
                     (2 * c2[0] - w[0], 2 * c2[1] - w[1])
            self.gamma.symmetric_difference_update({edge_key(u1, u2)})
            if e in self.cover.cut_primal:
                self.lift ^= 1
        else:
            if e in self.gamma:
                self.chi = -self.chi
            if e in self.cover.cut_dual:
                self.lift ^= 1

    @property
    def sign(self) -> int:
        return self.chi * (1 - 2 * self.lift)


def _corner_graph_neighbors(corners: set, c):
    out = []
    for d in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
        w = (c[0] + d[0], c[1] + d[1])
        if w in corners:
            out.append(w)
    return out


def _corner_bfs_path(corners: set, start, goal, avoid=frozenset()):
    prev = {start: None}
    queue = deque([start])
    while queue:
        c = queue.popleft()
        if c == goal:
            path = [c]
            while prev[path[-1]] is not None:
                path.append(prev[path[-1]])
            return path[::-1]
        for w in _corner_graph_neighbors(corners, c):
            if w not in prev and w not in avoid:
                prev[w] = c
                queue.append(w)
    raise EnumerationError(f"no corner path {start} -> {goal}")


def fermion_field(domain: MeshDomain, cover: DoubleCover, source,
                  beta: float = BETA_CRIT) -> dict:
    """Two-point observable as a field: F(source, c) for every corner c.

    Values are reported on the base sheet determined by the cover's branch
    cut and the positive side of the source's split; the pair of split
    values at the source itself is stored under the source position.
    """
    src = _as_corner(source)
    if src.pos not in domain.corners:
        raise EnumerationError("source corner outside the domain")
    en = Enumeration(domain, "standard", beta=beta)
    ram = _reduce_spins(cover.ram_primal)
    den = en.sums([ram])[0]
    if den == 0.0:
        raise EnumerationError("vanishing spin correlation denominator")
    eta_s = _phase0(src.pos)
    values: dict = {src.pos: (eta_s * eta_s, -eta_s * eta_s)}
    state0 = _Transport(cover)
    stack = [(src.pos, state0, True)]
    seen = {src.pos}
    order = []
    states = {}
    while stack:
        c, st, is_src = stack.pop()
        if not is_src:
            order.append(c)
            states[c] = st
        for w in _corner_graph_neighbors(domain.corners, c):
            if w in seen:
                continue
            seen.add(w)
            st2 = st.clone()
            if is_src:
                st2.chi *= _side(src.pos, w)
            st2.step(c, w)
            stack.append((w, st2, False))
    obs = []
    for c in order:
        p, _ = corner_neighbors(c)
        obs.append(_reduce_spins(ram + (corner_neighbors(src.pos)[0], p)))
    # one enumeration per distinct cut; group corners by their gamma set
    groups: dict[frozenset, list[int]] = {}
    for i, c in enumerate(order):
        groups.setdefault(frozenset(states[c].gamma), []).append(i)
    results = [0.0] * len(order)
    for gamma, members in groups.items():
        vals = en.sums([obs[i] for i in members], gamma=gamma)
        for i, v in zip(members, vals):
            results[i] = v
    for i, c in enumerate(order):
        st = states[c]
        values[c] = st.sign * eta_s * _phase0(c) * results[i] / den
    return values


def fermion_multipoint(domain: MeshDomain, cover: DoubleCover, corners,
                       avoid=(), beta: float = BETA_CRIT) -> complex:
    """Multi-point observable F(z1, ..., zk), k even.

    The global sign follows the recursive convention: each new pair starts
    as a split-corner insertion worth eta^2 times the shorter correlation
    and is transported to its target along a deterministic path avoiding
    the other marked points.
    """
    pts = [_as_corner(c) for c in corners]
    if len(pts) % 2 != 0:
        raise EnumerationError("need an even number of corners")
    pos = [p.pos for p in pts]
    if len(set(pos)) != len(pos):
        raise EnumerationError("corner positions must be distinct")
    en = Enumeration(domain, "standard", beta=beta)
    ram = _reduce_spins(cover.ram_primal)
    den = en.sums([ram])[0]
    st = _Transport(cover)
    phase = complex(1.0)
    placed: list = []
    for j in range(0, len(pos), 2):
        a, b = pos[j], pos[j + 1]
        phase *= _phase0(a) * _phase0(b)
        forbidden = frozenset(placed) | frozenset(tuple(q) for q in avoid) - {a, b}
        path = _corner_bfs_path(domain.corners, a, b,
                                avoid=(forbidden | {a}) - {b})
        st.chi *= _side(a, path[1])
        for c1, c2 in zip(path, path[1:]):
            st.step(c1, c2)
        placed += [a, b]
    spins = _reduce_spins(ram + tuple(corner_neighbors(p)[0] for p in pos))
    num = en.sums([spins], gamma=st.gamma)[0]
    sheet = sum(p.sheet for p in pts) % 2
    return (1 - 2 * sheet) * st.sign * phase * num / den


def obs_fermion(domain: MeshDomain, cover: DoubleCover, z1, z2,
                beta: float = BETA_CRIT) -> complex:
    """Two-point fermionic observable F(z1, z2)."""
    c1, c2 = _as_corner(z1), _as_corner(z2)
    if c1.pos == c2.pos:
        # split-corner convention: F(z, z^+) = eta^2
        eta = corner_phase(c1)
        return eta * eta * (1 if c1.sheet == c2.sheet else -1)
    return fermion_multipoint(domain, cover, [c1, c2], beta=beta)


# -- mixed correlations ----------------------------------------------------


@dataclass
class MixedContent:
    """Operator content for lattice mixed correlations."""
    spins: tuple = ()
    disorders: tuple = ()          # dual vertices
    energies: tuple = ()           # primal edges
    fermions: tuple = ()           # CornerPoint-likes

    def total_corners(self, domain: MeshDomain):
        """Corner list (fermions, energy pairs, disorder companions) and the
        full vertex list entering the reduction to spin correlations."""
        corners = [_as_corner(z) for z in self.fermions]
        for e in self.energies:
            e = edge_key(*e)
            n_pos, _, s_pos, _, _, _ = domain.stencil(e)
            # the opposite pair whose primal neighbours are the edge endpoints;
            # the corner whose dual sits east of its primal goes first
            first, second = n_pos, s_pos
            if corner_direction(first) != (2, 0):
                first, second = second, first
            corners += [CornerPoint(first), CornerPoint(second)]
        aux_vertices = []
        for u in self.disorders:
            c = (u[0] + 1, u[1])  # east corner of the face
            corners.append(CornerPoint(c))
            aux_vertices.append(corner_neighbors(c)[0])
        return corners, tuple(self.spins) + tuple(aux_vertices)


def corr_mixed(domain: MeshDomain, content: MixedContent,
               beta: float = BETA_CRIT, check_tol: float | None = 1e-9):
    """General mixed correlation under standard boundary conditions.

    Returns the direct enumeration value.  The same quantity is recomputed
    through the multi-point fermionic observable times the pure-spin
    correlation, and the two routes must agree in magnitude (the fermionic
    route fixes signs only up to the documented global convention; the
    returned record carries both).
    """
    corners, vertices = content.total_corners(domain)
    K = len(corners)
    if K % 2 == 1:
        return 0.0
    en = Enumeration(domain, "standard", beta=beta)
    z = en.sums([()])[0]
    # direct route: disorders via explicit cuts, energies via sigma products
    gamma: set = set()
    duals = [c.dual for c in [_as_corner(f) for f in content.fermions]]
    duals += [tuple(u) for u in content.disorders]
    for j in range(0, len(duals) - 1, 2):
        path = _dual_bfs_path(domain, duals[j], duals[j + 1])
        for a, b in zip(path, path[1:]):
            gamma.symmetric_difference_update({edge_key(a, b)})
    if len(duals) % 2 == 1:
        raise EnumerationError("odd disorder count has no standard-bc value")
    spin_list = list(content.spins)
    spin_list += [_as_corner(f).primal for f in content.fermions]
    direct_spins = _reduce_spins(spin_list)
    if content.energies:
        total = 0.0
        edges = [edge_key(*e) for e in content.energies]
        for mask in range(1 << len(edges)):
            sub = [edges[i] for i in range(len(edges)) if mask >> i & 1]
            coef = math.sqrt(2.0) ** len(edges) * (-1 / math.sqrt(2.0)) ** (
                len(edges) - len(sub))
            total += coef * _reweighted_mixed(en, direct_spins, sub, gamma)
        direct = total / z
    else:
        direct = en.sums([direct_spins], gamma=gamma)[0] / z
    if check_tol is not None and (content.fermions or content.disorders
                                  or content.energies):
        ferm = _mixed_via_fermions(domain, content, en, z, beta)
        scale = max(abs(direct), abs(ferm), 1e-30)
        if abs(abs(direct) - abs(ferm)) > check_tol * max(1.0, scale):
            raise EnumerationError(
                f"mixed-correlation routes disagree: |{direct}| vs |{ferm}|")
    return direct


def _reweighted_mixed(en: Enumeration, spins, sub_edges, gamma) -> float:
    g_terms = en.gamma_terms(gamma)
    emax = len(en.edge_terms) + 2 * len(g_terms) + 1
    table = np.exp(en.beta * np.arange(-emax, emax + 1))
    acc = 0.0
    for idx, base_energy in en._chunks():
        energy = base_energy
        if g_terms:
            energy = energy - 2 * en._products(idx, g_terms)
        w = table[energy + emax]
        val = en._spin_signs(idx, spins).astype(float)
        for e in sub_edges:
            val = val * en._products(idx, [en.edge_terms[e]])
        acc += float(np.dot(w, val))
    return acc


def _mixed_via_fermions(domain, content: MixedContent, en, z, beta) -> float:
    corners, vertices = content.total_corners(domain)
    cover = DoubleCover(domain, ram_primal=frozenset(_reduce_spins(vertices)))
    cover = _with_cut(domain, cover)
    F = fermion_multipoint(domain, cover, corners, beta=beta)
    spin_corr = en.sums([_reduce_spins(vertices)])[0] / z
    eta_prod = complex(1.0)
    for c in corners:
        eta_prod *= corner_phase(_as_corner(c))
    val = F * spin_corr / eta_prod
    return val.real


def _with_cut(domain, cover: DoubleCover) -> DoubleCover:
    from .lattice import make_cover
    pts = sorted(cover.ram_primal)
    if not pts:
        return cover
    return make_cover(domain, pts)


def _dual_bfs_path(domain: MeshDomain, a, b):
    prev = {a: None}
    queue = deque([a])
    while queue:
        c = queue.popleft()
        if c == b:
            path = [c]
            while prev[path[-1]] is not None:
                path.append(prev[path[-1]])
            return path[::-1]
        for s in ((2, 2), (2, -2), (-2, 2), (-2, -2)):
            w = (c[0] + s[0], c[1] + s[1])
            if w in domain.duals and w not in prev:
                prev[w] = c
                queue.append(w)
    raise EnumerationError(f"no dual path {a} -> {b}")
