"""Interior triangulation and semi-infinite exterior trapezoids.

The computational domain is a square with 45-degree chamfered corners
(convex polygon).  The interior is triangulated Delaunay-style; every
boundary vertex carries an outward ray (the bisector of the two adjacent
edge normals), and each boundary edge together with the rays at its two
endpoints spans a semi-infinite trapezoid covering the exterior.

The trapezoid over an edge with endpoints p0, p1 is the image of the
reference strip [0,1] x [0,inf) under

    g(eta, xi) = (1 - eta) (p0 + xi w0) + eta (p1 + xi w1)

where w0, w1 are the endpoint rays rescaled so that both have normal
component exactly h_xi.  The Jacobian of g in the rotated frame R = [t n] is

    J = R [[h_eta + (a+b) xi, -b + (a+b) eta], [0, h_xi]]

with b = -(w0 . t), a = w1 . t and |J| = h_xi (h_eta + (a+b) xi).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay


@dataclass(frozen=True)
class Mesh:
    """Immutable triangulation with boundary rays.

    vertices       (n, 2) float array
    triangles      (m, 3) int array, counterclockwise
    boundary_loop  (k,) int array, counterclockwise closed loop
    rays           (k, 2) float array, unit outward direction per boundary
                   vertex, aligned with boundary_loop
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_loop: np.ndarray
    rays: np.ndarray
    refinement_level: int = 0

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def ray_of_vertex(self, v):
        """Ray direction at global vertex index v (must be on the boundary)."""
        pos = np.where(self.boundary_loop == v)[0]
        if len(pos) != 1:
            raise ValueError("vertex %d is not a boundary vertex" % v)
        return self.rays[pos[0]]


@dataclass(frozen=True)
class ExteriorElementGeometry:
    """Mapping parameters of one semi-infinite trapezoid.

    p0 is the eta=0 endpoint, p1 the eta=1 endpoint; the edge is traversed
    so that [t n] is a proper rotation (clockwise along the boundary loop).
    v0, v1 are the global vertex indices of p0, p1; w0, w1 the rescaled ray
    vectors with normal component h_xi.
    """

    edge_index: int
    p0: np.ndarray
    p1: np.ndarray
    h_eta: float
    h_xi: float
    a: float
    b: float
    R: np.ndarray
    v0: int = -1
    v1: int = -1
    w0: np.ndarray = field(default=None)
    w1: np.ndarray = field(default=None)

    def point(self, eta, xi):
        """Physical image g(eta, xi) of a reference point."""
        return (1.0 - eta) * (self.p0 + xi * self.w0) + eta * (self.p1 + xi * self.w1)

    def invert_point(self, q):
        """Reference coordinates (eta, xi) of a physical point q.

        The normal component of q - p0 fixes xi; eta follows from the
        tangential component.  Valid for any q; membership in the element
        means xi >= 0 and 0 <= eta <= 1.
        """
        loc = self.R.T @ (np.asarray(q, dtype=float) - self.p0)
        xi = loc[1] / self.h_xi
        eta = (loc[0] + self.b * xi) / (self.h_eta + (self.a + self.b) * xi)
        return eta, xi


def build_base_mesh(half_width, corner_chamfer, target_edge):
    """Coarse triangulation of the chamfered square.

    The chamfer parameter is the cut-back distance from each corner along
    both incident sides, so the chamfer edge has length corner_chamfer*sqrt(2)
    (zero gives the exact square).  All boundary edges are split to length
    <= target_edge; interior nodes come from a hexagonal lattice of the same
    spacing, which keeps the Delaunay triangles well shaped.
    """
    w = float(half_width)
    c = float(corner_chamfer)
    t = float(target_edge)
    if w <= 0:
        raise ValueError("half_width must be positive")
    if t <= 0:
        raise ValueError("target_edge must be positive")
    if c < 0 or c >= w:
        raise ValueError("corner_chamfer must satisfy 0 <= chamfer < half_width")

    if c == 0.0:
        corners = [(w, -w), (w, w), (-w, w), (-w, -w)]
    else:
        corners = [
            (w, -w + c), (w, w - c),
            (w - c, w), (-w + c, w),
            (-w, w - c), (-w, -w + c),
            (-w + c, -w), (w - c, -w),
        ]
    poly = np.array(corners, dtype=float)

    boundary_pts = []
    for i in range(len(poly)):
        p, q = poly[i], poly[(i + 1) % len(poly)]
        nseg = max(1, int(np.ceil(np.linalg.norm(q - p) / t - 1e-12)))
        for s in range(nseg):
            boundary_pts.append(p + (s / nseg) * (q - p))
    boundary_pts = np.array(boundary_pts)

    interior_pts = _hex_lattice_points(poly, t)
    pts = np.vstack([boundary_pts, interior_pts]) if len(interior_pts) else boundary_pts

    tri = Delaunay(pts)
    triangles = _orient_ccw(pts, tri.simplices.astype(np.int64))
    loop = _extract_boundary_loop(pts, triangles)
    rays = _bisector_rays(pts, loop)

    mesh = Mesh(pts, triangles, loop, rays, refinement_level=0)
    _validate(mesh)
    return mesh


def refine_uniform(mesh):
    """Red refinement: split every triangle into 4 via edge midpoints."""
    _validate(mesh)
    verts = mesh.vertices
    tris = mesh.triangles

    edge_mid = {}
    new_verts = [verts]
    next_id = len(verts)

    def midpoint(i, j):
        nonlocal next_id
        key = (min(i, j), max(i, j))
        if key not in edge_mid:
            edge_mid[key] = next_id
            new_verts.append(0.5 * (verts[key[0]] + verts[key[1]])[None, :])
            next_id += 1
        return edge_mid[key]

    new_tris = []
    for a, b, c in tris:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        new_tris.extend([(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)])

    verts2 = np.vstack(new_verts)
    tris2 = np.array(new_tris, dtype=np.int64)

    loop = mesh.boundary_loop
    new_loop = []
    for i in range(len(loop)):
        v, vn = loop[i], loop[(i + 1) % len(loop)]
        new_loop.append(v)
        new_loop.append(edge_mid[(min(v, vn), max(v, vn))])
    new_loop = np.array(new_loop, dtype=np.int64)
    rays = _bisector_rays(verts2, new_loop)

    out = Mesh(verts2, tris2, new_loop, rays, refinement_level=mesh.refinement_level + 1)
    _validate(out)
    return out


def exterior_geometry(mesh):
    """One trapezoid geometry record per boundary edge.

    Each edge of the counterclockwise loop is traversed backwards
    (p0 = later loop vertex, p1 = earlier) so that the frame [t n] with the
    outward normal n has determinant +1.
    """
    verts = mesh.vertices
    loop = mesh.boundary_loop
    nb = len(loop)
    geoms = []
    for i in range(nb):
        v1g, v0g = loop[i], loop[(i + 1) % nb]
        p0, p1 = verts[v0g], verts[v1g]
        h_eta = float(np.linalg.norm(p1 - p0))
        tvec = (p1 - p0) / h_eta
        nvec = np.array([-tvec[1], tvec[0]])
        h_xi = 1.0

        d0 = mesh.rays[(i + 1) % nb]
        d1 = mesh.rays[i]
        dn0 = float(d0 @ nvec)
        dn1 = float(d1 @ nvec)
        if dn0 <= 0 or dn1 <= 0:
            raise ValueError("ray not outward relative to edge %d" % i)
        w0 = d0 * (h_xi / dn0)
        w1 = d1 * (h_xi / dn1)
        b = -float(w0 @ tvec)
        a = float(w1 @ tvec)
        if a + b < -1e-12:
            raise ValueError("a+b < 0 on edge %d: nonconvex ray layout" % i)
        R = np.column_stack([tvec, nvec])
        geoms.append(
            ExteriorElementGeometry(
                edge_index=i, p0=p0.copy(), p1=p1.copy(),
                h_eta=h_eta, h_xi=h_xi, a=a, b=b, R=R,
                v0=int(v0g), v1=int(v1g), w0=w0, w1=w1,
            )
        )
    return geoms


def jacobian(geom, eta, xi):
    """Jacobian matrix and determinant of the trapezoid map at (eta, xi)."""
    ab = geom.a + geom.b
    jloc = np.array(
        [
            [geom.h_eta + ab * xi, -geom.b + ab * eta],
            [0.0, geom.h_xi],
        ]
    )
    det = geom.h_xi * (geom.h_eta + ab * xi)
    return geom.R @ jloc, det


def export_text(mesh):
    """Plain-text dump: ``v x y`` / ``t i j k`` / ``r i dx dy`` lines."""
    lines = []
    for x, y in mesh.vertices:
        lines.append("v %.17g %.17g" % (x, y))
    for i, j, k in mesh.triangles:
        lines.append("t %d %d %d" % (i, j, k))
    for pos, v in enumerate(mesh.boundary_loop):
        dx, dy = mesh.rays[pos]
        lines.append("r %d %.17g %.17g" % (v, dx, dy))
    return "\n".join(lines) + "\n"


def _hex_lattice_points(poly, spacing):
    """Hexagonal lattice inside the polygon, clear of the boundary."""
    xmin, ymin = poly.min(axis=0)
    xmax, ymax = poly.max(axis=0)
    dy = spacing * np.sqrt(3.0) / 2.0
    pts = []
    row = 0
    y = ymin
    while y <= ymax + 1e-12:
        xoff = 0.5 * spacing if row % 2 else 0.0
        x = xmin + xoff
        while x <= xmax + 1e-12:
            p = np.array([x, y])
            if _point_in_polygon(p, poly) and _dist_to_polygon(p, poly) > 0.5 * spacing:
                pts.append(p)
            x += spacing
        y += dy
        row += 1
    return np.array(pts) if pts else np.zeros((0, 2))


def _point_in_polygon(p, poly):
    # convex, counterclockwise polygon: inside iff left of every edge
    for i in range(len(poly)):
        a, b = poly[i], poly[(i + 1) % len(poly)]
        if np.cross(b - a, p - a) <= 0:
            return False
    return True


def _dist_to_polygon(p, poly):
    d = np.inf
    for i in range(len(poly)):
        a, b = poly[i], poly[(i + 1) % len(poly)]
        ab = b - a
        s = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
        d = min(d, float(np.linalg.norm(p - (a + s * ab))))
    return d


def _orient_ccw(pts, tris):
    out = tris.copy()
    for n, (i, j, k) in enumerate(out):
        if np.cross(pts[j] - pts[i], pts[k] - pts[i]) < 0:
            out[n, 1], out[n, 2] = k, j
    return out


def _signed_area(pts, tri):
    i, j, k = tri
    return 0.5 * float(np.cross(pts[j] - pts[i], pts[k] - pts[i]))


def _extract_boundary_loop(pts, tris):
    """Counterclockwise loop of the edges used by exactly one triangle."""
    count = {}
    for i, j, k in tris:
        for a, b in ((i, j), (j, k), (k, i)):
            count[(min(a, b), max(a, b))] = count.get((min(a, b), max(a, b)), 0) + 1
    succ = {}
    for i, j, k in tris:
        for a, b in ((i, j), (j, k), (k, i)):
            if count[(min(a, b), max(a, b))] == 1:
                succ[a] = b  # directed boundary edge of a ccw triangle
    start = min(succ)
    loop = [start]
    nxt = succ[start]
    while nxt != start:
        loop.append(nxt)
        nxt = succ[nxt]
    loop = np.array(loop, dtype=np.int64)
    area = 0.0
    for i in range(len(loop)):
        a, b = pts[loop[i]], pts[loop[(i + 1) % len(loop)]]
        area += np.cross(a, b)
    if area < 0:
        loop = loop[::-1].copy()
    return loop


def _bisector_rays(verts, loop):
    """Unit bisector of the adjacent edge outward normals at each loop vertex."""
    nb = len(loop)
    rays = np.zeros((nb, 2))
    for i in range(nb):
        p_prev = verts[loop[(i - 1) % nb]]
        p = verts[loop[i]]
        p_next = verts[loop[(i + 1) % nb]]
        n_in = _outward_normal(p_prev, p)
        n_out = _outward_normal(p, p_next)
        d = n_in + n_out
        rays[i] = d / np.linalg.norm(d)
    return rays


def _outward_normal(a, b):
    t = b - a
    t = t / np.linalg.norm(t)
    return np.array([t[1], -t[0]])  # right of ccw travel = outward


def _validate(mesh):
    pts, tris = mesh.vertices, mesh.triangles
    for n in range(len(tris)):
        if _signed_area(pts, tris[n]) <= 0:
            raise ValueError("triangle %d is not positively oriented" % n)
    loop = mesh.boundary_loop
    nb = len(loop)
    for i in range(nb):
        p_prev = pts[loop[(i - 1) % nb]]
        p = pts[loop[i]]
        p_next = pts[loop[(i + 1) % nb]]
        if np.cross(p - p_prev, p_next - p) < -1e-12:
            raise ValueError("boundary loop is not convex at vertex %d" % loop[i])
        d = mesh.rays[i]
        for q0, q1 in ((p_prev, p), (p, p_next)):
            if d @ _outward_normal(q0, q1) <= 0:
                raise ValueError("ray at vertex %d not outward" % loop[i])
