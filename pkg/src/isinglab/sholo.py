"""Discrete s-holomorphic boundary-value problems and special kernels.

The solver reconstructs the two-point fermionic observable as the unique
spinor satisfying the four-corner relation at every interior and
wired-crossing edge, the standard boundary pair relations, and a pinned
split value at the source corner.  One real unknown per corner (the phase
condition fixes the direction); the assembled system is solved in the
least-squares sense with an asserted residual.

Also here: the full-plane discrete analogues of 1/z and 1/sqrt(z) built
from discrete exponentials, the integrated quadratic form H, and the
contour formula recovering a spinor's value next to its ramification
point.
"""

from __future__ import annotations

import cmath
import math
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lattice import (
    FREE, WIRED, CornerPoint, DoubleCover, MeshDomain, corner_neighbors,
    crossing_edge, edge_key, phase_step_sign, step_crossed_edge, _ROOT8,
)
from .exact import _phase0, _side

_CYC = [(1, 0), (0, 1), (-1, 0), (0, -1)]


class SolveError(RuntimeError):
    pass


# -- boundary pair relations ------------------------------------------------


def _rotation_seq(u, c1, c2, direction):
    i1 = _CYC.index((c1[0] - u[0], c1[1] - u[1]))
    i2 = _CYC.index((c2[0] - u[0], c2[1] - u[1]))
    seq = [c1]
    i = i1
    while i % 4 != i2 % 4:
        i += direction
        d = _CYC[i % 4]
        seq.append((u[0] + d[0], u[1] + d[1]))
    return seq


def _path_sign(path, cover: DoubleCover) -> int:
    s = 1
    for a, b in zip(path, path[1:]):
        s *= phase_step_sign(a, b)
        e = step_crossed_edge(a, b)
        if e in cover.cut_primal or e in cover.cut_dual:
            s = -s
    return s


def boundary_pairs(domain: MeshDomain, cover: DoubleCover):
    """Relations x_a = sign * x_b between boundary corner unknowns.

    Three families: the two outer corners at a boundary face inside a
    wired arc (sign from the rotation through the outside), the two
    corners at a common inner vertex across a free boundary edge (sign
    from the direct step), and the two wired-side corners at the endpoints
    of each free arc (sign from the corner path hugging the arc outside).
    """
    rels = []
    verts = domain.vertices

    def outer_corner(u, oriented_edge):
        ce = crossing_edge(edge_key(*oriented_edge))
        po = ce[0] if ce[0] not in verts else ce[1]
        return ((po[0] + u[0]) // 2, (po[1] + u[1]) // 2)

    for loop in domain.boundary_loops:
        edges = domain.loop_edges(loop)
        labs = [domain.edge_label[edge_key(*oe)] for oe in edges]
        n = len(edges)
        for i in range(n):
            if labs[i - 1] != WIRED or labs[i] != WIRED:
                continue
            u = edges[i][0]
            c1 = outer_corner(u, edges[i - 1])
            c2 = outer_corner(u, edges[i])
            if c1 == c2:
                continue
            best = None
            for d in (1, -1):
                seq = _rotation_seq(u, c1, c2, d)
                if all(corner_neighbors(q)[0] not in verts for q in seq[1:-1]):
                    if best is None or len(seq) < len(best):
                        best = seq
            rels.append((c1, c2, _path_sign(best, cover)))
        for i in range(n):
            if labs[i] != FREE:
                continue
            u1, u2 = edges[i]
            ce = crossing_edge(edge_key(u1, u2))
            v = ce[0] if ce[0] in verts else ce[1]
            c1 = ((v[0] + u1[0]) // 2, (v[1] + u1[1]) // 2)
            c2 = ((v[0] + u2[0]) // 2, (v[1] + u2[1]) // 2)
            rels.append((c1, c2, _path_sign([c1, c2], cover)))
    for arc in domain.free_arcs():
        whole_component = any(
            len(arc) == len(loop) for loop in domain.boundary_loops)
        if whole_component:
            continue
        arc_duals = set()
        for a, b in arc:
            arc_duals.update((a, b))
        za = zb = None
        for loop in domain.boundary_loops:
            edges = domain.loop_edges(loop)
            for i, oe in enumerate(edges):
                if oe == arc[0]:
                    za = outer_corner(arc[0][0], edges[i - 1])
                if oe == arc[-1]:
                    zb = outer_corner(arc[-1][1], edges[(i + 1) % len(edges)])
        if za is None or zb is None:
            continue
        path = _outside_arc_path(domain, za, zb, arc_duals)
        rels.append((za, zb, _path_sign(path, cover)))
    return rels


def _outside_arc_path(domain, za, zb, arc_duals):
    def allowed(c):
        p, d = corner_neighbors(c)
        return p not in domain.vertices and d in arc_duals

    prev = {za: None}
    queue = deque([za])
    while queue:
        c = queue.popleft()
        if c == zb:
            path = [c]
            while prev[path[-1]] is not None:
                path.append(prev[path[-1]])
            return path[::-1]
        for dd in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            w = (c[0] + dd[0], c[1] + dd[1])
            if w not in prev and (w == zb or allowed(w)):
                prev[w] = c
                queue.append(w)
    raise SolveError("no outside path along the free arc")


def stencil_signs(domain: MeshDomain, cover: DoubleCover, e):
    """Relative sheet signs of the four corners around the midpoint of e,
    walked N -> E -> S -> W across the cover's branch cut."""
    n, east, s, west, _, _ = domain.stencil(e)
    signs = {n: 1}
    a = 1
    for c1, c2 in ((n, east), (east, s), (s, west)):
        ek = step_crossed_edge(c1, c2)
        if ek in cover.cut_primal or ek in cover.cut_dual:
            a = -a
        signs[c2] = a
    return (n, east, s, west), signs


# -- the solver ---------------------------------------------------------------


@dataclass
class SpinorField:
    """Solution of the discrete boundary-value problem.

    values[c] is the spinor on the base sheet; the source corner carries
    the split pair (+normalization, -normalization).
    """

    domain: MeshDomain
    cover: DoubleCover
    source: CornerPoint
    normalization: complex
    values: dict
    residual: float
    shape: tuple[int, int]

    @property
    def source_values(self):
        return (self.normalization, -self.normalization)

    def value(self, c, sheet: int = 0) -> complex:
        v = self.values[tuple(c)]
        return -v if sheet else v

    def observable(self) -> dict:
        """Rescale so the field equals the two-point observable F(source, .)
        on the base sheet (split pair stored under the source position)."""
        eta_s = _phase0(self.source.pos)
        out = {c: eta_s * v for c, v in self.values.items()}
        out[self.source.pos] = (eta_s * self.normalization,
                                -eta_s * self.normalization)
        return out

    def csv_rows(self):
        return [(c[0], c[1], 0, v.real, v.imag)
                for c, v in sorted(self.values.items())]


def solve_observable(domain: MeshDomain, cover: DoubleCover, source,
                     normalization: complex | None = None,
                     residual_tol: float = 1e-10) -> SpinorField:
    """Unique s-holomorphic spinor with a split source value.

    The cover may be ramified at primal vertices only.  Raises SolveError
    if the least-squares residual exceeds residual_tol * |rhs| (which
    would signal an inconsistent assembly, since the observable itself
    solves the system exactly).
    """
    if cover.ram_dual:
        raise SolveError("covers ramified at dual vertices are not supported")
    src = source if isinstance(source, CornerPoint) else CornerPoint(tuple(source))
    if src.pos not in domain.corners:
        raise SolveError("source corner outside the domain")
    if corner_neighbors(src.pos)[0] not in domain.vertices:
        raise SolveError("source corner must have its vertex inside the domain")
    eta0 = {c: _phase0(c) for c in domain.corners}
    eta_pin = eta0[src.pos] if normalization is None else complex(normalization)
    if abs((eta_pin * eta0[src.pos].conjugate()).imag) > 1e-12 * abs(eta_pin):
        raise SolveError(
            "normalization must be a real multiple of the source phase")

    unknowns = sorted(domain.corners - {src.pos})
    col = {c: i for i, c in enumerate(unknowns)}
    rows_i: list[int] = []
    cols_i: list[int] = []
    data: list[float] = []
    rhs: list[float] = []
    nrow = 0

    for e in sorted(domain.shol_edges):
        quad, signs = stencil_signs(domain, cover, e)
        n, east, s, west = quad
        m = ((e[0][0] + e[1][0]) // 2, (e[0][1] + e[1][1]) // 2)
        coeffs: dict = {}
        b = 0j
        for c, pm in ((n, 1), (s, 1), (east, -1), (west, -1)):
            if c == src.pos:
                b -= pm * signs[c] * _side(src.pos, m) * eta_pin
            else:
                coef = pm * signs[c] * eta0[c]
                coeffs[c] = coeffs.get(c, 0j) + coef
        for part in (0, 1):
            wrote = False
            for c, coef in coeffs.items():
                val = coef.real if part == 0 else coef.imag
                if val != 0.0:
                    rows_i.append(nrow)
                    cols_i.append(col[c])
                    data.append(val)
                    wrote = True
            if wrote or (b.real if part == 0 else b.imag) != 0.0:
                rhs.append(b.real if part == 0 else b.imag)
                nrow += 1

    for c1, c2, sign in boundary_pairs(domain, cover):
        rows_i.extend([nrow, nrow])
        cols_i.extend([col[c1], col[c2]])
        data.extend([1.0, -float(sign)])
        rhs.append(0.0)
        nrow += 1

    A = sp.csr_matrix((data, (rows_i, cols_i)), shape=(nrow, len(unknowns)))
    b = np.asarray(rhs)
    ata = (A.T @ A).tocsc()
    lu = spla.splu(ata)
    x = lu.solve(A.T @ b)
    for _ in range(3):
        r = b - A @ x
        x = x + lu.solve(A.T @ r)
    res = float(np.linalg.norm(b - A @ x))
    nb = float(np.linalg.norm(b))
    if res > residual_tol * max(nb, 1e-30):
        raise SolveError(
            f"least-squares residual {res:.3e} exceeds {residual_tol} * |rhs|"
            f" ({nb:.3e})")
    values = {c: complex(x[i]) * eta0[c] for c, i in col.items()}
    return SpinorField(domain, cover, src, eta_pin, values,
                       res / max(nb, 1e-300), (nrow, len(unknowns)))


# -- discrete exponentials and full-plane kernels -----------------------------


def discrete_exponential(zeta: complex, z: complex) -> complex:
    """p(zeta)^x q(zeta)^y at z = x + iy, with p = (1+zeta/2)/(1-zeta/2)
    and q = (1+i zeta/2)/(1-i zeta/2) (principal powers)."""
    if zeta in (2, -2, 2j, -2j):
        raise ValueError("pole of the discrete exponential")
    if zeta == 0:
        return 1.0 + 0j
    p = (1 + zeta / 2) / (1 - zeta / 2)
    q = (1 + 1j * zeta / 2) / (1 - 1j * zeta / 2)
    x, y = z.real, z.imag
    return cmath.exp(x * cmath.log(p) + y * cmath.log(q))


def _exp_ratio_vec(zeta, dx: int, dy: int):
    p = (1 + zeta / 2) / (1 - zeta / 2)
    q = (1 + 1j * zeta / 2) / (1 - 1j * zeta / 2)
    return p ** dx * q ** dy


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss_nodes(n: int):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def _ray_quadrature(f, tol: float = 1e-13, max_pow: int = 11) -> complex:
    """integral_0^infinity f(t) dt via t = tan(theta), Gauss-Legendre with
    point-doubling until two successive values agree."""
    prev = None
    for k in range(5, max_pow + 1):
        n = 1 << k
        x, w = _gauss_nodes(n)
        theta = (x + 1) * (math.pi / 4)
        t = np.tan(theta)
        vals = f(t) * (math.pi / 4) / np.cos(theta) ** 2
        val = complex(np.sum(w * vals))
        if prev is not None and abs(val - prev) <= tol * max(1.0, abs(val)):
            return val
        prev = val
    raise SolveError("ray quadrature did not converge")


def _rot_cw(c):
    """Grid rotation z -> -i z."""
    return (c[1], -c[0])


def _kernel_K(a, z) -> complex:
    """Discrete Cauchy kernel; a on the vertical corner sublattice, z on the
    horizontal one, grid half-step coordinates, mesh 1."""
    az = complex(a[0], a[1]) / 2.0
    zz = complex(z[0], z[1]) / 2.0
    dx = (z[0] - a[0] - 1) // 2
    dy = (z[1] - a[1] - 1) // 2
    d = zz - az
    direction = -d.conjugate() / abs(d)

    def f(t):
        zeta = direction * t
        return (_exp_ratio_vec(zeta, dx, dy)
                / ((1 - zeta / 2) * (1 - 1j * zeta / 2))) * direction

    # orientation convention of the ray integral: fixed against the split
    # values +-eta at the base corner
    return -_ray_quadrature(f) / math.pi


def _p_diamond(a, z) -> complex:
    """P_a at a horizontal-type corner z (vertical-type a)."""
    return _phase0(a).conjugate() * _kernel_K(a, z)


def discrete_P(a, z, delta: float = 1.0) -> complex:
    """Discrete analogue of 1/z: the s-holomorphic kernel with split values
    +-eta_a at the corner a.  Both arguments are corner grid coordinates.

    Values on a's own sublattice come from the s-holomorphic extension
    through the stencil farther from a.
    """
    a, z = tuple(a), tuple(z)
    if a == z:
        raise ValueError("P is split at its base corner; use discrete_P_split")
    if a[0] % 2 == 1:
        return _ROOT8[7] * discrete_P(_rot_cw(a), _rot_cw(z), delta)
    if z[0] % 2 == 1:
        return _p_diamond(a, z) / delta
    mids = [(z[0] + 1, z[1]), (z[0] - 1, z[1])]
    m = max(mids, key=lambda q: ((q[0] - a[0]) ** 2 + (q[1] - a[1]) ** 2, q))
    c1, c2 = (m[0], m[1] + 1), (m[0], m[1] - 1)
    val = _p_diamond(a, c1) + _p_diamond(a, c2)
    eta = _phase0(z)
    return eta * (eta.conjugate() * val).real / delta


def discrete_P_split(a, delta: float = 1.0):
    """The split pair (P(a^+), P(a^-)) at the base corner."""
    a = tuple(a)
    if a[0] % 2 == 1:
        plus, minus = discrete_P_split(_rot_cw(a), delta)
        return _ROOT8[7] * plus, _ROOT8[7] * minus
    out = {}
    for m in ((a[0] + 1, a[1]), (a[0] - 1, a[1])):
        c1, c2 = (m[0], m[1] + 1), (m[0], m[1] - 1)
        val = _p_diamond(a, c1) + _p_diamond(a, c2)
        eta = _phase0(a)
        out[_side(a, m)] = eta * (eta.conjugate() * val).real / delta
    return out[1], out[-1]


def _q_diamond(z) -> complex:
    """Ramified inverse square root at a horizontal-type corner, base point
    the primal origin, branch cut along the negative imaginary axis."""
    zz = complex(z[0], z[1]) / 2.0
    dx = (z[0] - 1) // 2
    dy = z[1] // 2
    direction = -zz.conjugate() / abs(zz)
    root_dir = cmath.exp(0.5 * cmath.log(direction))

    def f(s):
        zeta = direction * s * s
        return _exp_ratio_vec(zeta, dx, dy) / (1 - zeta / 2)

    integral = 2.0 * root_dir * _ray_quadrature(f)
    val = _ROOT8[7] * integral / (math.sqrt(2.0) * math.pi)
    # the principal branch of the ray rotation puts the section jump along
    # the east ray; move it to the south ray
    if z[0] > 0 and z[1] < 0:
        val = -val
    return val


def discrete_Q(w, z, delta: float = 1.0) -> complex:
    """Discrete analogue of 1/sqrt(z) ramified at the vertex or face w.

    Section convention: single-valued off the ray pointing south of w;
    corners on that ray take their east-side continuation.  A face centre
    carries an extra factor -i to preserve the phase condition.
    """
    w, z = tuple(w), tuple(z)
    off = (z[0] - w[0], z[1] - w[1])
    pref = 1.0 if (w[0] + w[1]) % 4 == 0 else -1j
    if off[0] % 2 == 1:
        return pref * _q_diamond(off) / math.sqrt(delta)
    if off[0] == 0 and off[1] < 0:
        m = (1, off[1])  # corners on the branch ray continue from the east
    else:
        mids = [(off[0] + 1, off[1]), (off[0] - 1, off[1])]
        m = max(mids, key=lambda q: (q[0] ** 2 + q[1] ** 2, q[0]))
    c1, c2 = (m[0], m[1] + 1), (m[0], m[1] - 1)
    val = _q_diamond(c1) + _q_diamond(c2)
    eta = _phase0(off)
    return pref * eta * (eta.conjugate() * val).real / math.sqrt(delta)


# -- integrated form H -------------------------------------------------------


def integrate_H(f1: SpinorField, f2: SpinorField | None = None):
    """Integral of the closed form built from two s-holomorphic fields.

    Returns (values, closedness, jump): values maps primal, dual and outer
    wired vertices to H (one overall constant fixed at an arbitrary base
    vertex), closedness is the largest residual of the per-face closure
    identity, jump the largest mismatch met when the integration revisits
    a vertex.
    """
    if f2 is None:
        f2 = f1
    dom = f1.domain

    def product(c):
        a = f1.normalization if c == f1.source.pos else f1.values.get(c)
        b = f2.normalization if c == f2.source.pos else f2.values.get(c)
        if a is None or b is None:
            raise KeyError(c)
        return a * b

    def dstep(c):
        p, d = corner_neighbors(c)
        return dom.position(d) - dom.position(p)

    values: dict = {}
    start = min(dom.vertices)
    values[start] = 0.0
    queue = deque([start])
    jump = 0.0
    while queue:
        g = queue.popleft()
        for sdir in _CYC:
            c = (g[0] + sdir[0], g[1] + sdir[1])
            if c not in dom.corners:
                continue
            p, d = corner_neighbors(c)
            inc = (-2j * product(c) * dstep(c)).real
            other = d if g == p else p
            hval = values[g] + (inc if g == p else -inc)
            if other in values:
                jump = max(jump, abs(values[other] - hval))
            else:
                values[other] = hval
                queue.append(other)
    closed = 0.0
    for e in sorted(dom.shol_edges):
        n, east, s, west, _, _ = dom.stencil(e)
        try:
            r = (product(n) * dstep(n) + product(s) * dstep(s)
                 - product(east) * dstep(east) - product(west) * dstep(west))
        except KeyError:
            continue
        closed = max(closed, abs(r))
    return values, closed, jump


def boundary_H_spread(field: SpinorField, hvalues: dict):
    """Max spread of H along each free arc and each wired boundary piece
    (zero when the field satisfies the standard boundary conditions)."""
    dom = field.domain
    spreads = []
    for arc in dom.free_arcs():
        duals = []
        for a, b in arc:
            duals += [a, b]
        vals = [hvalues[u] for u in duals if u in hvalues]
        if vals:
            spreads.append(max(vals) - min(vals))
    for loop in dom.boundary_loops:
        vals = []
        for oe in dom.loop_edges(loop):
            de = edge_key(*oe)
            if dom.edge_label[de] != WIRED:
                continue
            ce = crossing_edge(de)
            po = ce[0] if ce[0] not in dom.vertices else ce[1]
            if po in hvalues:
                vals.append(hvalues[po])
        if vals:
            spreads.append(max(vals) - min(vals))
    return max(spreads) if spreads else 0.0


# -- contour recovery ---------------------------------------------------------


def _section_flip(c1, c2, cover: DoubleCover, u) -> int:
    """Sign change of the single-valued section of field * Q_u along a
    corner step: flips across the cover's branch cut and across the
    south ray of u (where Q's stored section is discontinuous)."""
    s = 1
    e = step_crossed_edge(c1, c2)
    if e in cover.cut_primal or e in cover.cut_dual:
        s = -s
    for on_ray, other in ((c1, c2), (c2, c1)):
        if on_ray[0] == u[0] and on_ray[1] < u[1] and other[0] == u[0] - 1:
            s = -s
    return s


def cauchy_recover(field: SpinorField, v, u, radius: int = 4) -> complex:
    """Recover the spinor value at the corner between the ramification
    vertex v and the adjacent face u from a rectangular contour integral
    against the ramified inverse square root based at u.

    The contour is an axis-aligned rectangle of lattice vertices at grid
    margin `radius` around u and v; it must stay inside the field's
    s-holomorphicity region and keep the source outside.
    """
    dom = field.domain
    v, u = tuple(v), tuple(u)
    z = ((v[0] + u[0]) // 2, (v[1] + u[1]) // 2)
    if v not in field.cover.ram_primal:
        raise SolveError("v must be a ramification vertex of the field")
    x0 = min(u[0], v[0]) - 2 * radius
    x1 = max(u[0], v[0]) + 2 * radius
    y0 = min(u[1], v[1]) - 2 * radius
    y1 = max(u[1], v[1]) + 2 * radius
    ring: list = []
    for x in range(x0, x1, 2):
        ring.append((x, y0))
    for y in range(y0, y1, 2):
        ring.append((x1, y))
    for x in range(x1, x0, -2):
        ring.append((x, y1))
    for y in range(y1, y0, -2):
        ring.append((x0, y))
    segs = []
    mring = len(ring)
    for i in range(mring):
        g1, g2 = ring[i], ring[(i + 1) % mring]
        c = ((g1[0] + g2[0]) // 2, (g1[1] + g2[1]) // 2)
        if c not in dom.corners or c not in field.values:
            raise SolveError("contour leaves the domain")
        segs.append((c, g1, g2))
    delta = dom.delta

    # Single-valued section of field * Q_u on the cut plane: propagate signs
    # by BFS from an anchor corner next to z, never re-entering the immediate
    # neighbourhood of the split corner.
    root = (z[0] + 1, z[1] + 1)
    ball = {(z[0] + a, z[1] + b) for a in (-1, 0, 1) for b in (-1, 0, 1)}
    signs = {root: 1}
    queue = deque([root])
    while queue:
        c = queue.popleft()
        for dd in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            w = (c[0] + dd[0], c[1] + dd[1])
            if w in ball and w != root:
                continue
            if w not in field.values or w in signs:
                continue
            signs[w] = signs[c] * _section_flip(c, w, field.cover, u)
            queue.append(w)

    total = 0j
    for c, g1, g2 in segs:
        if c not in signs:
            raise SolveError("section did not reach the contour")
        step = dom.position(g2) - dom.position(g1)
        total += (-2j * signs[c] * field.values[c]
                  * discrete_Q(u, c, delta) * step)
    eta_z = _phase0(z)
    # relate the section's anchor sheet to the field's base sheet at z
    fix = _section_flip(z, root, field.cover, u)
    return fix * 0.25 / math.sqrt(delta) * eta_z * total
