"""Polygon generation, triangulation, uniform refinement, and submesh extraction.

Meshes are plain P1 triangulations: vertices, triangles (CCW), and tagged
boundary edges.  Tags follow the ``"dirichlet:<seg>"`` / ``"neumann:<seg>"``
convention; submesh extraction adds the ``"artificial"`` tag for boundary
created by cutting through the parent interior.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GenerationError, MeshingError

ARTIFICIAL_TAG = "artificial"

# Retry budget for the rejection-sampling polygon generator.
_POLYGON_RETRIES = 100


def _signed_area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def segments_intersect(p0, p1, q0, q1, eps: float = 1e-14) -> bool:
    """True if closed segments [p0,p1] and [q0,q1] share any point."""
    d1 = _orient(q0, q1, p0)
    d2 = _orient(q0, q1, p1)
    d3 = _orient(p0, p1, q0)
    d4 = _orient(p0, p1, q1)
    if ((d1 > eps and d2 < -eps) or (d1 < -eps and d2 > eps)) and (
        (d3 > eps and d4 < -eps) or (d3 < -eps and d4 > eps)
    ):
        return True

    def on_segment(a, b, c) -> bool:
        if abs(_orient(a, b, c)) > eps:
            return False
        return (
            min(a[0], b[0]) - eps <= c[0] <= max(a[0], b[0]) + eps
            and min(a[1], b[1]) - eps <= c[1] <= max(a[1], b[1]) + eps
        )

    return (
        on_segment(q0, q1, p0)
        or on_segment(q0, q1, p1)
        or on_segment(p0, p1, q0)
        or on_segment(p0, p1, q1)
    )


def is_simple_polygon(pts: np.ndarray, eps: float = 1e-14) -> bool:
    """O(n^2) pairwise check: no two non-adjacent edges may touch."""
    n = len(pts)
    for i in range(n):
        a0, a1 = pts[i], pts[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if segments_intersect(a0, a1, pts[j], pts[(j + 1) % n], eps):
                return False
    return True


@dataclass
class Polygon:
    """Simple polygon with counter-clockwise vertex order."""

    vertices: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.vertices, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
            raise ValueError("polygon needs at least 3 planar vertices")
        if np.any(np.all(np.isclose(pts, np.roll(pts, -1, axis=0)), axis=1)):
            raise ValueError("consecutive polygon vertices coincide")
        if _signed_area(pts) <= 0:
            raise ValueError("polygon must be counter-clockwise with positive area")
        if not is_simple_polygon(pts):
            raise ValueError("polygon is not simple")
        pts.flags.writeable = False
        self.vertices = pts

    @property
    def n(self) -> int:
        return len(self.vertices)

    @property
    def area(self) -> float:
        return _signed_area(self.vertices)

    def to_dict(self) -> dict:
        return {"vertices": self.vertices.tolist()}


def random_simple_polygon(
    n_min: int,
    n_max: int,
    bounding_box: tuple[float, float, float, float] = (-0.5, -0.5, 0.5, 0.5),
    rng_seed: int = 0,
) -> Polygon:
    """Sample a simple polygon with n in [n_min, n_max] vertices inside the box.

    Points are sampled uniformly, ordered by angle around their centroid, and
    de-crossed with 2-opt reversals until simple.  Deterministic per seed;
    raises GenerationError after the retry budget.
    """
    if not (3 <= n_min <= n_max):
        raise ValueError("need 3 <= n_min <= n_max")
    xmin, ymin, xmax, ymax = bounding_box
    if not (xmax > xmin and ymax > ymin):
        raise ValueError("bounding box is degenerate")
    rng = np.random.default_rng(rng_seed)
    box_area = (xmax - xmin) * (ymax - ymin)
    scale = max(xmax - xmin, ymax - ymin)

    for _ in range(_POLYGON_RETRIES):
        n = int(rng.integers(n_min, n_max + 1))
        pts = rng.uniform((xmin, ymin), (xmax, ymax), size=(n, 2))
        centroid = pts.mean(axis=0)
        order = np.argsort(np.arctan2(pts[:, 1] - centroid[1], pts[:, 0] - centroid[0]))
        pts = pts[order]
        if not _uncross(pts):
            continue
        if _signed_area(pts) < 0:
            pts = pts[::-1].copy()
        if abs(_signed_area(pts)) < 1e-3 * box_area:
            continue
        # Collinear or coincident corners make poor seeds for ear clipping.
        corner_ok = True
        for i in range(n):
            a, b, c = pts[i - 1], pts[i], pts[(i + 1) % n]
            if abs(_orient(a, b, c)) < 1e-9 * scale * scale:
                corner_ok = False
                break
        if not corner_ok:
            continue
        if not is_simple_polygon(pts):
            continue
        return Polygon(pts)
    raise GenerationError(
        f"no simple polygon found in {_POLYGON_RETRIES} attempts (seed {rng_seed})"
    )


def _uncross(pts: np.ndarray) -> bool:
    """2-opt pass: reverse chains between crossing edges. Mutates pts in place."""
    n = len(pts)
    for _ in range(3 * n):
        crossing = None
        for i in range(n):
            a0, a1 = pts[i], pts[(i + 1) % n]
            for j in range(i + 1, n):
                if (j + 1) % n == i or (i + 1) % n == j:
                    continue
                if segments_intersect(a0, a1, pts[j], pts[(j + 1) % n]):
                    crossing = (i, j)
                    break
            if crossing:
                break
        if crossing is None:
            return True
        i, j = crossing
        pts[i + 1 : j + 1] = pts[i + 1 : j + 1][::-1]
    return False


@dataclass
class TriMesh:
    """Unstructured P1 triangulation with tagged boundary edges."""

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        self.boundary_edges = np.ascontiguousarray(self.boundary_edges, dtype=np.int64)
        if self.boundary_edges.size == 0:
            self.boundary_edges = self.boundary_edges.reshape(0, 2)
        for arr in (self.vertices, self.triangles, self.boundary_edges):
            arr.flags.writeable = False

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def triangle_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return 0.5 * (
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
        )

    def edges(self) -> np.ndarray:
        """Unique undirected edges of the triangulation, sorted pairs."""
        e = np.vstack(
            [self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]]
        )
        e = np.sort(e, axis=1)
        return np.unique(e, axis=0)

    def boundary_vertices(self) -> np.ndarray:
        if len(self.boundary_edges) == 0:
            return np.empty(0, dtype=np.int64)
        return np.unique(self.boundary_edges)

    def max_edge_length(self) -> float:
        e = self.edges()
        d = self.vertices[e[:, 0]] - self.vertices[e[:, 1]]
        return float(np.max(np.hypot(d[:, 0], d[:, 1])))

    def to_dict(self) -> dict:
        return {
            "vertices": self.vertices.tolist(),
            "triangles": self.triangles.tolist(),
            "boundary_edges": [
                {"v": [int(i), int(j)], "tag": t}
                for (i, j), t in zip(self.boundary_edges, self.boundary_tags)
            ],
        }


def mesh_from_dict(d: dict) -> TriMesh:
    edges = [e["v"] for e in d["boundary_edges"]]
    tags = [e["tag"] for e in d["boundary_edges"]]
    return TriMesh(
        np.asarray(d["vertices"], dtype=float),
        np.asarray(d["triangles"], dtype=np.int64),
        np.asarray(edges, dtype=np.int64).reshape(len(edges), 2),
        tags,
    )


def validate_mesh(mesh: TriMesh) -> None:
    """Check the structural invariants; raises MeshingError on violation."""
    n = mesh.n_vertices
    if mesh.triangles.size and (mesh.triangles.min() < 0 or mesh.triangles.max() >= n):
        raise MeshingError("triangle vertex index out of range")
    if mesh.boundary_edges.size and (
        mesh.boundary_edges.min() < 0 or mesh.boundary_edges.max() >= n
    ):
        raise MeshingError("boundary edge vertex index out of range")
    if np.any(mesh.triangle_areas() <= 0):
        raise MeshingError("triangle with nonpositive signed area")
    counts: dict[tuple[int, int], int] = {}
    for tri in mesh.triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            counts[key] = counts.get(key, 0) + 1
    listed = {(min(i, j), max(i, j)) for i, j in mesh.boundary_edges}
    for key, c in counts.items():
        if c == 1 and key not in listed:
            raise MeshingError(f"boundary edge {key} missing from boundary list")
        if c == 2 and key in listed:
            raise MeshingError(f"interior edge {key} tagged as boundary")
        if c > 2:
            raise MeshingError(f"edge {key} shared by {c} triangles")
    for key in listed:
        if counts.get(key) != 1:
            raise MeshingError(f"listed boundary edge {key} not on the mesh boundary")
    # Boundary edges must chain into closed loops: every boundary vertex has
    # exactly two incident boundary edges.
    if len(mesh.boundary_edges):
        deg = np.zeros(n, dtype=int)
        np.add.at(deg, mesh.boundary_edges.ravel(), 1)
        bverts = mesh.boundary_vertices()
        if np.any(deg[bverts] != 2):
            raise MeshingError("boundary edges do not form closed loops")


# ---------------------------------------------------------------------------
# Triangulation: ear clipping + uniform refinement + smoothing + edge flips
# ---------------------------------------------------------------------------


def _point_in_triangle(p, a, b, c, eps=1e-12) -> bool:
    d1 = _orient(a, b, p)
    d2 = _orient(b, c, p)
    d3 = _orient(c, a, p)
    return d1 >= -eps and d2 >= -eps and d3 >= -eps


def _ear_clip(pts: np.ndarray) -> list[tuple[int, int, int]]:
    n = len(pts)
    idx = list(range(n))
    tris: list[tuple[int, int, int]] = []
    scale2 = float(np.max(np.ptp(pts, axis=0))) ** 2
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * n * n:
            raise MeshingError("ear clipping failed to terminate (degenerate polygon?)")
        best = None
        best_quality = -1.0
        m = len(idx)
        for k in range(m):
            ia, ib, ic = idx[k - 1], idx[k], idx[(k + 1) % m]
            a, b, c = pts[ia], pts[ib], pts[ic]
            area2 = _orient(a, b, c)
            if area2 <= 1e-14 * scale2:
                continue
            contains = False
            for j in idx:
                if j in (ia, ib, ic):
                    continue
                if _point_in_triangle(pts[j], a, b, c, eps=-1e-14 * scale2):
                    contains = True
                    break
            if contains:
                continue
            # prefer fat ears: min angle proxy = area / longest edge^2
            lmax = max(
                np.dot(b - a, b - a), np.dot(c - b, c - b), np.dot(a - c, a - c)
            )
            quality = area2 / lmax
            if quality > best_quality:
                best_quality = quality
                best = k
        if best is None:
            raise MeshingError("no ear found; polygon is degenerate or not simple")
        ia, ib, ic = idx[best - 1], idx[best], idx[(best + 1) % len(idx)]
        tris.append((ia, ib, ic))
        idx.pop(best)
    tris.append((idx[0], idx[1], idx[2]))
    return tris


def _smooth_interior(mesh: TriMesh, weight: float = 0.5) -> TriMesh:
    """One damped Laplacian pass on interior vertices; reverted if any triangle flips."""
    nbrs: dict[int, set[int]] = {}
    for tri in mesh.triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            nbrs.setdefault(int(a), set()).add(int(b))
            nbrs.setdefault(int(b), set()).add(int(a))
    fixed = set(int(v) for v in mesh.boundary_vertices())
    new_pts = mesh.vertices.copy()
    for v, ns in nbrs.items():
        if v in fixed:
            continue
        target = mesh.vertices[sorted(ns)].mean(axis=0)
        new_pts[v] = (1 - weight) * mesh.vertices[v] + weight * target
    candidate = TriMesh(new_pts, mesh.triangles, mesh.boundary_edges, list(mesh.boundary_tags))
    if np.any(candidate.triangle_areas() <= 0):
        return mesh
    return candidate


def _in_circumcircle(a, b, c, d) -> bool:
    """True if d lies strictly inside the circumcircle of CCW triangle abc."""
    m = np.array(
        [
            [a[0] - d[0], a[1] - d[1], (a[0] - d[0]) ** 2 + (a[1] - d[1]) ** 2],
            [b[0] - d[0], b[1] - d[1], (b[0] - d[0]) ** 2 + (b[1] - d[1]) ** 2],
            [c[0] - d[0], c[1] - d[1], (c[0] - d[0]) ** 2 + (c[1] - d[1]) ** 2],
        ]
    )
    return np.linalg.det(m) > 1e-12


def _lawson_flips(mesh: TriMesh, max_sweeps: int = 60) -> TriMesh:
    """Flip interior edges to the (constrained) Delaunay configuration.

    Boundary edges are never flipped, so tags survive untouched.  Gives the
    stiffness matrix its M-matrix structure on interior rows, which the
    discrete maximum principle relies on.
    """
    tris = [list(t) for t in mesh.triangles]
    pts = mesh.vertices
    constrained = {(min(i, j), max(i, j)) for i, j in mesh.boundary_edges}

    for _ in range(max_sweeps):
        edge_map: dict[tuple[int, int], list[int]] = {}
        for t_idx, tri in enumerate(tris):
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                edge_map.setdefault((min(a, b), max(a, b)), []).append(t_idx)
        flipped = 0
        dirty: set[int] = set()
        for edge, owners in edge_map.items():
            if len(owners) != 2 or edge in constrained:
                continue
            t0, t1 = owners
            if t0 in dirty or t1 in dirty:
                continue
            a, b = edge
            c = next(v for v in tris[t0] if v not in edge)
            d = next(v for v in tris[t1] if v not in edge)
            if c == d:
                continue
            # flip only convex quads: a and b strictly on opposite sides of c-d
            if _orient(pts[c], pts[d], pts[a]) * _orient(pts[c], pts[d], pts[b]) >= 0:
                continue
            if not (
                _in_circumcircle(*pts[np.array(_ccw_tri(tris[t0], pts))], pts[d])
            ):
                continue
            tris[t0] = [c, a, d] if _orient(pts[c], pts[a], pts[d]) > 0 else [c, d, a]
            tris[t1] = [d, b, c] if _orient(pts[d], pts[b], pts[c]) > 0 else [d, c, b]
            dirty.add(t0)
            dirty.add(t1)
            flipped += 1
        if flipped == 0:
            break
    return TriMesh(pts, np.asarray(tris), mesh.boundary_edges, list(mesh.boundary_tags))


def _ccw_tri(tri, pts):
    if _orient(pts[tri[0]], pts[tri[1]], pts[tri[2]]) > 0:
        return tri
    return [tri[0], tri[2], tri[1]]


def _point_in_polygon(p, pts) -> bool:
    """Even-odd ray crossing test."""
    x, y = p
    inside = False
    n = len(pts)
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        if (y0 > y) != (y1 > y):
            xc = x0 + (y - y0) / (y1 - y0) * (x1 - x0)
            if x < xc:
                inside = not inside
    return inside


def _dist_to_boundary(p, pts) -> float:
    n = len(pts)
    best = np.inf
    for i in range(n):
        a = pts[i]
        b = pts[(i + 1) % n]
        ab = b - a
        t = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
        d = np.hypot(*(p - (a + t * ab)))
        best = min(best, d)
    return best


def _lattice_triangulation(polygon: Polygon, target: float) -> TriMesh | None:
    """Uniform-size mesh: boundary points spaced ~target along the polygon,
    interior points on a hex lattice, Delaunay connectivity restricted to the
    polygon.  Returns None when the polygon boundary is not recovered exactly
    (the caller falls back to the subdivision pipeline)."""
    from scipy.spatial import Delaunay

    pts = polygon.vertices
    n = polygon.n
    bpoints = []
    btag_of_segment = []
    for i in range(n):
        a, b = pts[i], pts[(i + 1) % n]
        length = float(np.hypot(*(b - a)))
        pieces = max(1, int(np.ceil(length / target)))
        for j in range(pieces):
            bpoints.append(a + (j / pieces) * (b - a))
            btag_of_segment.append(f"dirichlet:{i}")
    bpoints = np.asarray(bpoints)
    nb = len(bpoints)

    xmin, ymin = pts.min(axis=0)
    xmax, ymax = pts.max(axis=0)
    margin = 0.45 * target
    step = 0.9 * target
    interior = []
    dy = step * np.sqrt(3.0) / 2.0
    row = 0
    y = ymin + margin
    while y < ymax - 0.25 * margin:
        offset = 0.5 * step if row % 2 else 0.0
        x = xmin + margin + offset
        while x < xmax - 0.25 * margin:
            p = np.array([x, y])
            if _point_in_polygon(p, pts) and _dist_to_boundary(p, pts) >= margin:
                interior.append(p)
            x += step
        y += dy
        row += 1
    all_pts = np.vstack([bpoints] + ([np.asarray(interior)] if interior else []))

    if len(all_pts) < 3:
        return None
    tris = None
    for _ in range(4):
        try:
            dela = Delaunay(all_pts)
        except Exception:
            return None
        centroids = all_pts[dela.simplices].mean(axis=1)
        keep = np.array([_point_in_polygon(c, pts) for c in centroids])
        tris = dela.simplices[keep]
        if len(tris) == 0:
            return None
        # split residual long edges (gaps next to the exclusion band)
        edges = np.vstack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
        edges = np.unique(np.sort(edges, axis=1), axis=0)
        dvec = all_pts[edges[:, 0]] - all_pts[edges[:, 1]]
        lengths = np.hypot(dvec[:, 0], dvec[:, 1])
        long = edges[lengths > 1.45 * target]
        new_pts = []
        for a, b in long:
            if a < nb and b < nb and abs(a - b) in (1, nb - 1):
                continue  # boundary segment, never split
            mid = 0.5 * (all_pts[a] + all_pts[b])
            if _point_in_polygon(mid, pts) and _dist_to_boundary(mid, pts) >= 0.3 * target:
                new_pts.append(mid)
        if not new_pts:
            break
        all_pts = np.vstack([all_pts, np.asarray(new_pts)])
    # normalize orientation to CCW
    p0 = all_pts[tris]
    areas = 0.5 * (
        (p0[:, 1, 0] - p0[:, 0, 0]) * (p0[:, 2, 1] - p0[:, 0, 1])
        - (p0[:, 1, 1] - p0[:, 0, 1]) * (p0[:, 2, 0] - p0[:, 0, 0])
    )
    flip = areas < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    # boundary recovery check: the free edges of the kept triangles must be
    # exactly the consecutive boundary segments
    counts: dict[tuple[int, int], int] = {}
    for tri in tris:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(int(a), int(b)), max(int(a), int(b)))
            counts[key] = counts.get(key, 0) + 1
    free = {k for k, c in counts.items() if c == 1}
    expected = {}
    for j in range(nb):
        a, b = j, (j + 1) % nb
        expected[(min(a, b), max(a, b))] = btag_of_segment[j]
    if free != set(expected):
        return None

    bedges = np.asarray(sorted(expected), dtype=np.int64)
    btags = [expected[tuple(e)] for e in bedges.tolist()]
    mesh = TriMesh(all_pts, tris.astype(np.int64), bedges, btags)
    if abs(mesh.triangle_areas().sum() - polygon.area) > 1e-9 * max(polygon.area, 1.0):
        return None
    return mesh


def _subdivision_triangulation(polygon: Polygon, target: float) -> TriMesh:
    pts = polygon.vertices
    n = polygon.n
    tris = np.asarray(_ear_clip(pts), dtype=np.int64)
    bedges = np.asarray([(i, (i + 1) % n) for i in range(n)], dtype=np.int64)
    btags = [f"dirichlet:{i}" for i in range(n)]
    mesh = TriMesh(pts, tris, bedges, btags)
    for _ in range(16):
        if mesh.max_edge_length() <= 1.5 * target:
            break
        mesh = refine_uniform(mesh, 1)
    return _lawson_flips(mesh)


def triangulate(polygon: Polygon, target_edge_length: float) -> TriMesh:
    """Conforming triangulation of a simple polygon with edges near the target.

    Primary path: boundary points spaced along the polygon at the target
    length, a hex lattice inside, Delaunay connectivity clipped to the
    polygon.  When boundary recovery fails (rare, sharp notches), falls back
    to ear clipping plus global midpoint subdivision.  Either way one damped
    smoothing pass and Delaunay edge flips finish the mesh, and boundary
    edges carry the tag ``"dirichlet:<polygon-edge-index>"`` of the polygon
    edge they lie on.
    """
    if target_edge_length <= 0:
        raise ValueError("target edge length must be positive")
    pts = polygon.vertices
    diam = float(np.max(np.ptp(pts, axis=0)))
    if polygon.area < 1e-10 * diam * diam:
        raise MeshingError("polygon area is numerically zero")

    mesh = _lattice_triangulation(polygon, target_edge_length)
    if mesh is None or mesh.max_edge_length() > 1.5 * target_edge_length:
        mesh = _subdivision_triangulation(polygon, target_edge_length)
    mesh = _smooth_interior(mesh)
    mesh = _lawson_flips(mesh)
    validate_mesh(mesh)
    return mesh


def refine_uniform(mesh: TriMesh, rounds: int) -> TriMesh:
    """Split every triangle into 4 by edge midpoints, `rounds` times."""
    if rounds < 0:
        raise ValueError("rounds must be nonnegative")
    for _ in range(rounds):
        pts = [p for p in mesh.vertices]
        midpoint: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in midpoint:
                midpoint[key] = len(pts)
                pts.append(0.5 * (mesh.vertices[a] + mesh.vertices[b]))
            return midpoint[key]

        new_tris = []
        for i, j, k in mesh.triangles:
            mij, mjk, mki = mid(i, j), mid(j, k), mid(k, i)
            new_tris.extend([(i, mij, mki), (mij, j, mjk), (mki, mjk, k), (mij, mjk, mki)])
        new_bedges = []
        new_btags = []
        for (i, j), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
            m = mid(int(i), int(j))
            new_bedges.extend([(i, m), (m, j)])
            new_btags.extend([tag, tag])
        mesh = TriMesh(
            np.asarray(pts), np.asarray(new_tris, dtype=np.int64),
            np.asarray(new_bedges, dtype=np.int64), new_btags,
        )
    return mesh


# ---------------------------------------------------------------------------
# Submesh extraction
# ---------------------------------------------------------------------------


@dataclass
class SubMesh:
    """Vertex-induced submesh with its local boundary classified.

    ``global_ids[local]`` maps back to the parent mesh.  A local boundary
    vertex is exactly one of: global-Dirichlet (carries the parent Dirichlet
    data), global-Neumann (free, flux edges only), or artificial (sits in the
    parent interior, or is an interface endpoint cut out of a Neumann arc).
    """

    mesh: TriMesh
    global_ids: np.ndarray
    artificial_boundary: np.ndarray
    global_dirichlet_vertices: np.ndarray
    neumann_edge_indices: np.ndarray

    def __post_init__(self):
        self.global_ids = np.ascontiguousarray(self.global_ids, dtype=np.int64)
        if len(np.unique(self.global_ids)) != len(self.global_ids):
            raise MeshingError("global_ids must be injective")


def extract_submesh(
    mesh: TriMesh,
    vertex_ids: np.ndarray,
    parent_boundary_tags: dict[tuple[int, int], str] | None = None,
) -> SubMesh:
    """Extract the submesh induced by a vertex set (all-3-vertices-in rule)."""
    ids = np.unique(np.asarray(vertex_ids, dtype=np.int64))
    member = np.zeros(mesh.n_vertices, dtype=bool)
    member[ids] = True
    keep = member[mesh.triangles].all(axis=1)
    if not np.any(keep):
        raise MeshingError("vertex set induces no triangle")
    tris = mesh.triangles[keep]
    used = np.unique(tris)
    local_of = np.full(mesh.n_vertices, -1, dtype=np.int64)
    local_of[used] = np.arange(len(used))
    local_tris = local_of[tris]

    if parent_boundary_tags is None:
        parent_boundary_tags = {
            (min(int(i), int(j)), max(int(i), int(j))): tag
            for (i, j), tag in zip(mesh.boundary_edges, mesh.boundary_tags)
        }

    # Local boundary = edges of the induced triangulation with one owner.
    counts: dict[tuple[int, int], int] = {}
    for tri in local_tris:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            counts[key] = counts.get(key, 0) + 1
    bedges = []
    btags = []
    for (a, b), c in sorted(counts.items()):
        if c != 1:
            continue
        gkey = (
            min(int(used[a]), int(used[b])),
            max(int(used[a]), int(used[b])),
        )
        bedges.append((a, b))
        btags.append(parent_boundary_tags.get(gkey, ARTIFICIAL_TAG))
    bedges = np.asarray(bedges, dtype=np.int64).reshape(len(bedges), 2)

    local_mesh = TriMesh(mesh.vertices[used], local_tris, bedges, btags)

    parent_dirichlet: set[int] = set()
    parent_boundary: set[int] = set()
    for (i, j), tag in parent_boundary_tags.items():
        parent_boundary.update((int(i), int(j)))
        if tag.startswith("dirichlet"):
            parent_dirichlet.update((int(i), int(j)))

    edge_is_parent = [t != ARTIFICIAL_TAG for t in btags]
    touches_artificial: dict[int, bool] = {}
    touches_parent_edge: dict[int, bool] = {}
    for (a, b), is_parent in zip(bedges, edge_is_parent):
        for v in (int(a), int(b)):
            touches_artificial[v] = touches_artificial.get(v, False) or not is_parent
            touches_parent_edge[v] = touches_parent_edge.get(v, False) or is_parent

    artificial = []
    global_dirichlet = []
    for v in sorted(touches_artificial):
        g = int(used[v])
        if g in parent_dirichlet:
            global_dirichlet.append(v)
        elif g in parent_boundary:
            # On a parent Neumann arc: stays Neumann only if no artificial
            # edge ends here; an interface endpoint becomes artificial.
            if touches_artificial[v]:
                artificial.append(v)
        else:
            artificial.append(v)

    neumann_idx = [
        e_idx
        for e_idx, tag in enumerate(btags)
        if tag.startswith("neumann")
    ]
    return SubMesh(
        mesh=local_mesh,
        global_ids=used,
        artificial_boundary=np.asarray(artificial, dtype=np.int64),
        global_dirichlet_vertices=np.asarray(global_dirichlet, dtype=np.int64),
        neumann_edge_indices=np.asarray(neumann_idx, dtype=np.int64),
    )
