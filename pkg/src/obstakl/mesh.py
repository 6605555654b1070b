"""Triangular meshes with red-green-blue refinement.

Vertices are stored geometrically.  Periodic meshes keep the duplicated seam
vertices for geometry and record ``vertex_map``, which sends every vertex to
its canonical (master) copy; facets are built on canonical vertex pairs, so a
seam facet is one topological entity with two incident triangles.

Local edge ``k`` of triangle ``t`` joins ``t[k]`` and ``t[(k + 1) % 3]``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

logger = logging.getLogger(__name__)

LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])


class SeamMismatchError(ValueError):
    def __init__(self, vertices):
        self.vertices = list(vertices)
        super().__init__(f"periodic seam vertices without partner: {self.vertices}")


@dataclass(frozen=True)
class PeriodicInfo:
    direction: int
    period: float
    offset: np.ndarray


@dataclass(eq=False)
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    vertex_map: np.ndarray
    facets: np.ndarray
    tri_to_facet: np.ndarray
    facet_to_tri: np.ndarray
    edge_nodes: np.ndarray | None = None
    periodic: PeriodicInfo | None = None
    info: dict = field(default_factory=dict)

    @classmethod
    def from_arrays(cls, vertices, triangles, vertex_map=None, edge_nodes=None,
                    periodic=None) -> "TriMesh":
        p = np.ascontiguousarray(vertices, dtype=float)
        t = np.ascontiguousarray(triangles, dtype=np.int64)
        vmap = np.arange(len(p)) if vertex_map is None else np.asarray(vertex_map, dtype=np.int64)
        ct = vmap[t]
        edges = np.sort(ct[:, LOCAL_EDGES].reshape(-1, 2), axis=1)
        facets, inverse = np.unique(edges, axis=0, return_inverse=True)
        t2f = inverse.reshape(-1, 3)
        nf = len(facets)
        counts = np.bincount(t2f.ravel(), minlength=nf)
        if counts.max(initial=0) > 2:
            bad = np.nonzero(counts > 2)[0]
            raise ValueError(f"non-manifold facets {bad[:10].tolist()}")
        f2t = -np.ones((nf, 2), dtype=np.int64)
        order = np.argsort(t2f.ravel(), kind="stable")
        tri_of = order // 3
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        f2t[:, 0] = tri_of[starts]
        two = counts == 2
        f2t[two, 1] = tri_of[starts[two] + 1]
        return cls(p, t, vmap, facets, t2f, f2t,
                   None if edge_nodes is None else np.asarray(edge_nodes, dtype=float),
                   periodic)

    # basic queries

    @property
    def nvertices(self) -> int:
        return len(self.vertices)

    @property
    def ntriangles(self) -> int:
        return len(self.triangles)

    @property
    def nfacets(self) -> int:
        return len(self.facets)

    @property
    def is_quadratic(self) -> bool:
        return self.edge_nodes is not None

    @property
    def boundary_facets(self) -> np.ndarray:
        return np.nonzero(self.facet_to_tri[:, 1] < 0)[0]

    @property
    def periodic_pairs(self) -> np.ndarray:
        """(slave, master) vertex index pairs; empty if not periodic."""
        slaves = np.nonzero(self.vertex_map != np.arange(self.nvertices))[0]
        return np.column_stack([slaves, self.vertex_map[slaves]])

    def canonical_vertices(self) -> np.ndarray:
        return np.unique(self.vertex_map)

    def boundary_vertices(self) -> np.ndarray:
        """Geometric vertex indices lying on the (topological) boundary."""
        on = np.zeros(self.nvertices, dtype=bool)
        on[self.facets[self.boundary_facets].ravel()] = True
        return np.nonzero(on[self.vertex_map])[0]

    def signed_areas(self, vertices=None) -> np.ndarray:
        p = self.vertices if vertices is None else vertices
        t = self.triangles
        e1 = p[t[:, 1]] - p[t[:, 0]]
        e2 = p[t[:, 2]] - p[t[:, 0]]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def edge_lengths(self) -> np.ndarray:
        """(nt, 3) geometric lengths of local edges."""
        p = self.vertices[self.triangles]
        return np.linalg.norm(p[:, [1, 2, 0]] - p, axis=2)

    def element_h(self) -> np.ndarray:
        """Longest edge of each triangle."""
        return self.edge_lengths().max(axis=1)

    def diameter(self) -> float:
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))

    def min_angles(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        angles = []
        for k in range(3):
            a = p[:, (k + 1) % 3] - p[:, k]
            b = p[:, (k + 2) % 3] - p[:, k]
            cosang = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angles.append(np.arccos(np.clip(cosang, -1, 1)))
        return np.min(angles, axis=0)

    def quality(self) -> np.ndarray:
        """2 r_in / r_circ per triangle (1 for equilateral)."""
        ell = self.edge_lengths()
        a, b, c = ell.T
        area = np.abs(self.signed_areas())
        s = 0.5 * (a + b + c)
        r_in = area / s
        r_circ = a * b * c / (4 * area)
        return 2 * r_in / r_circ

    def edge_node_displacement(self) -> np.ndarray:
        """(nf, 2) offset of each facet's geometry node from its straight midpoint."""
        if self.edge_nodes is None:
            return np.zeros((self.nfacets, 2))
        mid = 0.5 * (self.vertices[self.facets[:, 0]] + self.vertices[self.facets[:, 1]])
        return self.edge_nodes - mid

    def element_nodes(self) -> np.ndarray:
        """(nt, 6, 2) geometry nodes: vertices then local edge nodes."""
        pv = self.vertices[self.triangles]
        mids = 0.5 * (pv + pv[:, [1, 2, 0]])
        if self.edge_nodes is not None:
            mids = mids + self.edge_node_displacement()[self.tri_to_facet]
        return np.concatenate([pv, mids], axis=1)

    def geometric_facet_points(self, t: np.ndarray, k: np.ndarray):
        """Endpoints of local edge ``k`` of triangles ``t`` in geometric coordinates."""
        a = self.triangles[t, k]
        b = self.triangles[t, (k + 1) % 3]
        return self.vertices[a], self.vertices[b]

    def neighbors(self) -> np.ndarray:
        """(nt, 3) neighbouring triangle across each local edge, -1 on boundary."""
        f2t = self.facet_to_tri[self.tri_to_facet]
        own = np.arange(self.ntriangles)[:, None]
        return np.where(f2t[..., 0] == own, f2t[..., 1], f2t[..., 0])

    def with_vertices(self, vertices) -> "TriMesh":
        return replace(self, vertices=np.asarray(vertices, dtype=float), info={})

    def refined(self, levels: int = 1) -> "TriMesh":
        m = self
        for _ in range(levels):
            m = refine_uniform(m)
        return m

    # text io

    def save(self, path) -> None:
        Path(path).write_text(mesh_to_text(self))

    @classmethod
    def load(cls, path) -> "TriMesh":
        return mesh_from_text(Path(path).read_text())


def mesh_to_text(mesh: TriMesh) -> str:
    lines = [str(mesh.nvertices)]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines.append(str(mesh.ntriangles))
    lines += [f"{a} {b} {c}" for a, b, c in mesh.triangles]
    return "\n".join(lines) + "\n"


def mesh_from_text(text: str) -> TriMesh:
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    nv = int(rows[0][0])
    p = np.array(rows[1:1 + nv], dtype=float)
    nt = int(rows[1 + nv][0])
    t = np.array(rows[2 + nv:2 + nv + nt], dtype=np.int64)
    if p.shape != (nv, 2) or t.shape != (nt, 3):
        raise ValueError("malformed mesh file")
    return TriMesh.from_arrays(p, t)


def init_square_symmetric(levels: int = 0) -> TriMesh:
    """Unit square split into four triangles around the centre vertex."""
    p = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]])
    t = np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])
    return TriMesh.from_arrays(p, t).refined(levels)


def init_rectangle(x0, x1, y0, y1, nx: int, ny: int) -> TriMesh:
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    p = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[1:, :-1].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[:-1, 1:].ravel()
    t = np.vstack([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return TriMesh.from_arrays(p, t)


def _midpoint_vertices(mesh: TriMesh, tri_idx, local_edge, curved: bool = True):
    """Create midpoint vertices for the given (triangle, local edge) pairs.

    With ``curved`` the vertex is placed on the quadratic edge, otherwise at
    the chord midpoint.

    Returns (new vertex coordinates, new vertex_map tail, index lookup) where
    the lookup maps each input pair to the new vertex index.  Geometric edges
    shared by two triangles get one vertex; seam copies get one vertex per
    side, identified through the vertex map.
    """
    nv = mesh.nvertices
    a = mesh.triangles[tri_idx, local_edge]
    b = mesh.triangles[tri_idx, (local_edge + 1) % 3]
    fac = mesh.tri_to_facet[tri_idx, local_edge]
    keys = np.sort(np.column_stack([a, b]), axis=1)
    # order new vertices by facet, then geometric key (deterministic)
    rec = np.column_stack([fac, keys])
    uniq, inverse = np.unique(rec, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    ua, ub, uf = uniq[:, 1], uniq[:, 2], uniq[:, 0]
    coords = 0.5 * (mesh.vertices[ua] + mesh.vertices[ub])
    if curved and mesh.edge_nodes is not None:
        coords = coords + mesh.edge_node_displacement()[uf]
    new_index = nv + np.arange(len(uniq))
    vmap_tail = new_index.copy()
    if mesh.periodic is not None:
        ca = mesh.vertex_map[ua]
        cb = mesh.vertex_map[ub]
        ckeys = np.sort(np.column_stack([ca, cb]), axis=1)
        lookup = {(f, x, y): i for i, (f, x, y) in enumerate(uniq.tolist())}
        for i in range(len(uniq)):
            j = lookup.get((int(uf[i]), int(ckeys[i, 0]), int(ckeys[i, 1])))
            if j is not None:
                vmap_tail[i] = nv + j
    return coords, vmap_tail, nv + inverse


def refine_uniform(mesh: TriMesh) -> TriMesh:
    """Split every triangle into four similar children."""
    nt = mesh.ntriangles
    tri = np.repeat(np.arange(nt), 3)
    loc = np.tile(np.arange(3), nt)
    coords, vtail, idx = _midpoint_vertices(mesh, tri, loc)
    m = idx.reshape(nt, 3)
    t = mesh.triangles
    children = np.vstack([
        np.column_stack([t[:, 0], m[:, 0], m[:, 2]]),
        np.column_stack([m[:, 0], t[:, 1], m[:, 1]]),
        np.column_stack([m[:, 2], m[:, 1], t[:, 2]]),
        np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
    ])
    p = np.vstack([mesh.vertices, coords])
    vmap = np.concatenate([mesh.vertex_map, vtail])
    return TriMesh.from_arrays(p, children, vmap, periodic=mesh.periodic)


def _reference_edge(mesh: TriMesh) -> np.ndarray:
    """Local index of each triangle's longest edge (ties -> lowest facet id)."""
    ell = mesh.edge_lengths()
    scale = ell.max(axis=1, keepdims=True)
    rounded = np.round(ell / scale, 12)
    fid = mesh.tri_to_facet
    rows = np.arange(mesh.ntriangles)
    best = np.zeros(mesh.ntriangles, dtype=np.int64)
    for k in (1, 2):
        cur = rounded[rows, best]
        better = (rounded[:, k] > cur) | ((rounded[:, k] == cur) & (fid[:, k] < fid[rows, best]))
        best[better] = k
    return best


def rgb_refine(mesh: TriMesh, marked, curved: bool = False) -> tuple[TriMesh, np.ndarray]:
    """Red-green-blue refinement of the marked triangles.

    Returns the refined (affine) mesh and ``parent``, mapping each child
    triangle to the triangle of ``mesh`` it was cut from.  New vertices sit at
    chord midpoints so children tile their straight-sided parent exactly;
    ``curved=True`` places them on quadratic edges instead.
    """
    marked = np.unique(np.asarray(marked, dtype=np.int64))
    nt = mesh.ntriangles
    if marked.size == 0:
        return mesh, np.arange(nt)
    if marked.min() < 0 or marked.max() >= nt:
        raise IndexError("marked triangle index out of range")

    ref = _reference_edge(mesh)
    t2f = mesh.tri_to_facet
    edge_mark = np.zeros(mesh.nfacets, dtype=bool)
    edge_mark[t2f[marked].ravel()] = True
    rows = np.arange(nt)
    while True:
        has = edge_mark[t2f].any(axis=1)
        need = has & ~edge_mark[t2f[rows, ref]]
        if not need.any():
            break
        edge_mark[t2f[rows[need], ref[need]]] = True

    tm = edge_mark[t2f]
    count = tm.sum(axis=1)
    sel_t, sel_k = np.nonzero(tm)
    coords, vtail, idx = _midpoint_vertices(mesh, sel_t, sel_k, curved)
    mid = -np.ones((nt, 3), dtype=np.int64)
    mid[sel_t, sel_k] = idx

    t = mesh.triangles
    children = []
    parents = []

    keep = np.nonzero(count == 0)[0]
    children.append(t[keep])
    parents.append(keep)

    red = np.nonzero(count == 3)[0]
    tr, mr = t[red], mid[red]
    for c in (
        np.column_stack([tr[:, 0], mr[:, 0], mr[:, 2]]),
        np.column_stack([mr[:, 0], tr[:, 1], mr[:, 1]]),
        np.column_stack([mr[:, 2], mr[:, 1], tr[:, 2]]),
        np.column_stack([mr[:, 0], mr[:, 1], mr[:, 2]]),
    ):
        children.append(c)
        parents.append(red)

    # rotate so that the reference edge is local edge 0: (a, b), opposite c
    def rotated(ids):
        k = ref[ids]
        a = t[ids, k]
        b = t[ids, (k + 1) % 3]
        c = t[ids, (k + 2) % 3]
        m_ab = mid[ids, k]
        m_bc = mid[ids, (k + 1) % 3]
        m_ca = mid[ids, (k + 2) % 3]
        return a, b, c, m_ab, m_bc, m_ca

    green = np.nonzero(count == 1)[0]
    a, b, c, m, _, _ = rotated(green)
    children += [np.column_stack([a, m, c]), np.column_stack([m, b, c])]
    parents += [green, green]

    blue = np.nonzero(count == 2)[0]
    a, b, c, m, m_bc, m_ca = rotated(blue)
    right = m_bc >= 0
    r = np.nonzero(right)[0]
    children += [np.column_stack([a[r], m[r], c[r]]),
                 np.column_stack([m[r], b[r], m_bc[r]]),
                 np.column_stack([m[r], m_bc[r], c[r]])]
    parents += [blue[r]] * 3
    lft = np.nonzero(~right)[0]
    children += [np.column_stack([m[lft], b[lft], c[lft]]),
                 np.column_stack([a[lft], m[lft], m_ca[lft]]),
                 np.column_stack([m[lft], c[lft], m_ca[lft]])]
    parents += [blue[lft]] * 3

    newt = np.vstack(children)
    parent = np.concatenate(parents)
    order = np.lexsort((np.arange(len(parent)), parent))
    newt, parent = newt[order], parent[order]
    p = np.vstack([mesh.vertices, coords])
    vmap = np.concatenate([mesh.vertex_map, vtail])
    out = TriMesh.from_arrays(p, newt, vmap, periodic=mesh.periodic)
    return out, parent


def hanging_nodes(mesh: TriMesh, rtol: float = 1e-10) -> np.ndarray:
    """Vertices lying strictly inside some facet segment (geometric check)."""
    p = mesh.vertices
    t = mesh.triangles
    ga = t[:, LOCAL_EDGES[:, 0]].ravel()
    gb = t[:, LOCAL_EDGES[:, 1]].ravel()
    seg = np.unique(np.sort(np.column_stack([ga, gb]), axis=1), axis=0)
    a, b = p[seg[:, 0]], p[seg[:, 1]]
    mid = 0.5 * (a + b)
    half = 0.5 * np.linalg.norm(b - a, axis=1)
    tree = cKDTree(p)
    found = set()
    for i, cand in enumerate(tree.query_ball_point(mid, half * (1 + 1e-9))):
        for v in cand:
            if v == seg[i, 0] or v == seg[i, 1]:
                continue
            d = b[i] - a[i]
            w = p[v] - a[i]
            L2 = d @ d
            cross = d[0] * w[1] - d[1] * w[0]
            s = (w @ d) / L2
            if abs(cross) <= rtol * L2 and 1e-9 < s < 1 - 1e-9:
                found.add(v)
    return np.array(sorted(found), dtype=np.int64)


def _fixed_for_motion(mesh: TriMesh) -> np.ndarray:
    fixed = np.zeros(mesh.nvertices, dtype=bool)
    fixed[mesh.boundary_vertices()] = True
    if mesh.periodic is not None:
        pairs = mesh.periodic_pairs
        fixed[pairs.ravel()] = True
    return fixed


def geometric_edges(mesh: TriMesh) -> np.ndarray:
    t = mesh.triangles
    e = np.sort(t[:, LOCAL_EDGES].reshape(-1, 2), axis=1)
    return np.unique(e, axis=0)


def laplacian_smooth(mesh: TriMesh, sdf=None, sweeps: int = 2) -> TriMesh:
    """Move interior vertices to the mean of their neighbours.

    Boundary (and periodic seam) vertices stay fixed.  Moves that would
    invert a triangle are undone for that sweep.  Quadratic meshes keep their
    boundary geometry nodes; interior ones are reset to facet midpoints.
    """
    if sweeps <= 0:
        return mesh
    fixed = _fixed_for_motion(mesh)
    edges = geometric_edges(mesh)
    nv = mesh.nvertices
    deg = np.bincount(edges.ravel(), minlength=nv).astype(float)
    p = mesh.vertices.copy()
    curved = mesh.is_quadratic
    for _ in range(sweeps):
        acc = np.zeros_like(p)
        np.add.at(acc, edges[:, 0], p[edges[:, 1]])
        np.add.at(acc, edges[:, 1], p[edges[:, 0]])
        target = p.copy()
        movable = ~fixed & (deg > 0)
        target[movable] = acc[movable] / deg[movable, None]
        moving = movable.copy()
        while True:
            trial = np.where(moving[:, None], target, p)
            bad = _inverted(mesh, trial, curved)
            if not bad.any():
                break
            verts = np.unique(mesh.triangles[bad].ravel())
            if not moving[verts].any():
                break
            moving[verts] = False
        p = np.where(moving[:, None], target, p)
    out = TriMesh.from_arrays(p, mesh.triangles, mesh.vertex_map, periodic=mesh.periodic)
    if curved:
        disp = mesh.edge_node_displacement()
        bf = out.boundary_facets
        en = 0.5 * (out.vertices[out.facets[:, 0]] + out.vertices[out.facets[:, 1]])
        en[bf] += disp[bf]
        out = replace(out, edge_nodes=en)
    return out


def _inverted(mesh: TriMesh, p, curved) -> np.ndarray:
    area = mesh.signed_areas(p)
    scale = np.max(np.abs(mesh.signed_areas()))
    bad = area <= 1e-12 * scale
    if curved:
        trial = replace(mesh, vertices=p, edge_nodes=None)
        disp = np.zeros((mesh.nfacets, 2))
        bf = mesh.boundary_facets
        disp[bf] = mesh.edge_node_displacement()[bf]
        en = 0.5 * (p[mesh.facets[:, 0]] + p[mesh.facets[:, 1]]) + disp
        trial = replace(trial, edge_nodes=en)
        bad |= min_jacobian(trial) <= 0
    return bad


_CHECK_POINTS = np.array([[0, 1, 0, .5, .5, 0, 1 / 3, .2, .6, .2],
                          [0, 0, 1, 0, .5, .5, 1 / 3, .2, .2, .6]])


def min_jacobian(mesh: TriMesh, ref_points=None) -> np.ndarray:
    """Minimum of det(J) of the element maps over sample reference points."""
    from .fem import geometry_at

    pts = _CHECK_POINTS if ref_points is None else ref_points
    _, jac = geometry_at(mesh, pts)
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    return det.min(axis=1)


def _project_points(sdf, x, tol, max_iter):
    """Newton projection of points (n, 2); returns points and zero-gradient count."""
    x = x.copy()
    stuck = np.zeros(len(x), dtype=bool)
    for _ in range(max_iter):
        d = sdf.eval(x.T)
        todo = (np.abs(d) > tol) & ~stuck
        if not todo.any():
            break
        g = sdf.grad(x[todo].T).T
        gg = np.sum(g ** 2, axis=1)
        zero = gg == 0
        idx = np.nonzero(todo)[0]
        stuck[idx[zero]] = True
        ok = ~zero
        x[idx[ok]] -= (d[todo][ok] / gg[ok])[:, None] * g[ok]
    return x, int(stuck.sum())


def project_boundary_nodes(mesh: TriMesh, sdf, max_iter: int = 5, rtol: float = 1e-10) -> TriMesh:
    """Move boundary vertices (and boundary geometry nodes) onto ``{sdf = 0}``."""
    tol = rtol * mesh.diameter()
    bv = mesh.boundary_vertices()
    p = mesh.vertices.copy()
    p[bv], nwarn = _project_points(sdf, p[bv], tol, max_iter)
    out = TriMesh.from_arrays(p, mesh.triangles, mesh.vertex_map, periodic=mesh.periodic)
    if mesh.is_quadratic:
        en = mesh.edge_nodes.copy()
        # keep interior nodes at straight midpoints of the moved vertices
        en[:] = 0.5 * (p[mesh.facets[:, 0]] + p[mesh.facets[:, 1]])
        bf = mesh.boundary_facets
        en[bf], w2 = _project_points(sdf, mesh.edge_nodes[bf], tol, max_iter)
        nwarn += w2
        out = replace(out, edge_nodes=en)
    out.info["projection_warnings"] = nwarn
    if nwarn:
        logger.warning("%d boundary nodes left in place (zero sdf gradient)", nwarn)
    return out


def lift_quadratic(mesh: TriMesh, sdf=None, max_iter: int = 5, rtol: float = 1e-10) -> TriMesh:
    """Add one geometry node per facet; boundary nodes projected onto ``sdf``."""
    p = mesh.vertices
    en = 0.5 * (p[mesh.facets[:, 0]] + p[mesh.facets[:, 1]])
    if sdf is not None:
        bf = mesh.boundary_facets
        en[bf], _ = _project_points(sdf, en[bf], rtol * mesh.diameter(), max_iter)
    return replace(mesh, edge_nodes=en, info={})


def wrap_periodic(mesh: TriMesh, direction: int = 0, period: float | None = None,
                  rtol: float = 1e-9) -> TriMesh:
    """Identify the two sides of the mesh normal to ``direction``.

    Vertices on the max side become copies of their partners on the min side.
    """
    p = mesh.vertices
    lo = p[:, direction].min()
    hi = p[:, direction].max()
    if period is None:
        period = hi - lo
    tol = rtol * period
    bv = mesh.boundary_vertices()
    left = bv[np.abs(p[bv, direction] - lo) <= tol]
    right = bv[np.abs(p[bv, direction] - (lo + period)) <= tol]
    other = 1 - direction
    tree = cKDTree(p[left][:, [other]])
    dist, j = tree.query(p[right][:, [other]])
    unmatched = right[dist > tol].tolist()
    matched_left = set(left[j[dist <= tol]].tolist())
    unmatched += [v for v in left.tolist() if v not in matched_left]
    if unmatched or len(left) != len(right):
        raise SeamMismatchError(sorted(unmatched))
    vmap = np.arange(mesh.nvertices)
    vmap[right] = left[j]
    offset = np.zeros(2)
    offset[direction] = period
    info = PeriodicInfo(direction, float(period), offset)
    return TriMesh.from_arrays(p, mesh.triangles, vmap, mesh.edge_nodes, info)


@dataclass
class Location:
    elements: np.ndarray
    ref: np.ndarray  # (2, n) reference coordinates
    missed: np.ndarray  # indices of points found in no element

    @property
    def outside(self) -> int:
        return len(self.missed)


def _affine_ref(mesh, elems, x):
    pv = mesh.vertices[mesh.triangles[elems]]
    e1 = pv[:, 1] - pv[:, 0]
    e2 = pv[:, 2] - pv[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    w = x - pv[:, 0]
    xi = (w[:, 0] * e2[:, 1] - w[:, 1] * e2[:, 0]) / det
    eta = (e1[:, 0] * w[:, 1] - e1[:, 1] * w[:, 0]) / det
    return np.stack([xi, eta])


def _inside_measure(ref):
    # min barycentric coordinate
    return np.minimum(np.minimum(ref[0], ref[1]), 1 - ref[0] - ref[1])


def _newton_ref(mesh, elems, x, ref0, iters=8):
    from .fem import geometry_at_points

    ref = ref0.copy()
    for _ in range(iters):
        xm, jac = geometry_at_points(mesh, elems, ref)
        r = x - xm
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        dxi = (jac[:, 1, 1] * r[:, 0] - jac[:, 0, 1] * r[:, 1]) / det
        deta = (-jac[:, 1, 0] * r[:, 0] + jac[:, 0, 0] * r[:, 1]) / det
        ref = ref + np.stack([dxi, deta])
        if np.max(np.abs(np.concatenate([dxi, deta])), initial=0) < 1e-14:
            break
    return ref


def locate_points(mesh: TriMesh, x, hint=None, tol: float = 1e-10, k: int = 12) -> Location:
    """Find an element containing each point (n, 2) and its reference coordinates.

    ``hint`` gives a candidate element per point.  Points found in no element
    are assigned to the nearest candidate and counted in ``outside``.
    """
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    n = len(x)
    elems = -np.ones(n, dtype=np.int64)
    ref = np.zeros((2, n))
    if hint is not None:
        hint = np.asarray(hint, dtype=np.int64)
        r = _affine_ref(mesh, hint, x)
        ok = _inside_measure(r) >= -tol
        elems[ok] = hint[ok]
        ref[:, ok] = r[:, ok]
    todo = np.nonzero(elems < 0)[0]
    missed = np.zeros(0, dtype=np.int64)
    if len(todo):
        centroids = mesh.vertices[mesh.triangles].mean(axis=1)
        tree = cKDTree(centroids)
        kk = min(k, mesh.ntriangles)
        _, cand = tree.query(x[todo], k=kk)
        cand = cand.reshape(len(todo), kk)
        best_val = np.full(len(todo), -np.inf)
        best_el = cand[:, 0].copy()
        best_ref = np.zeros((2, len(todo)))
        for j in range(kk):
            r = _affine_ref(mesh, cand[:, j], x[todo])
            val = _inside_measure(r)
            better = val > best_val
            best_val[better] = val[better]
            best_el[better] = cand[better, j]
            best_ref[:, better] = r[:, better]
        miss = best_val < -tol
        if miss.any():
            # exhaustive fallback for the few points not in the k nearest
            for i in np.nonzero(miss)[0]:
                r = _affine_ref(mesh, np.arange(mesh.ntriangles), np.repeat(x[todo[i]][None], mesh.ntriangles, 0))
                val = _inside_measure(r)
                j = int(np.argmax(val))
                best_val[i], best_el[i], best_ref[:, i] = val[j], j, r[:, j]
        missed = todo[best_val < -tol]
        elems[todo] = best_el
        ref[:, todo] = best_ref
    if mesh.is_quadratic:
        ref = _newton_ref(mesh, elems, x, ref)
    return Location(elems, ref, missed)
