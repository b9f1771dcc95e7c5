"""Planar cross-sections of triangle meshes as closed 2D loops.

A loop is an (N, 2) float64 array of in-plane coordinates, closed by
convention (no duplicated endpoint), stored clockwise starting from the
vertex minimizing x + y.  Slicing keys every intersection point by its mesh
edge (sorted vertex pair), so endpoints shared between adjacent faces are
bit-identical and chaining is exact instead of tolerance-based.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (
    DegenerateLoopError,
    InvalidInputError,
    NonManifoldSliceError,
    ParseError,
)

AREA_TOL = 1e-12


def _as_unit(v, what):
    v = np.asarray(v, dtype=np.float64).reshape(3)
    n = float(np.linalg.norm(v))
    if n < 1e-12:
        raise InvalidInputError(f"{what} has near-zero length")
    return v / n


@dataclass(frozen=True)
class SlicePlane:
    """A slicing plane with an orthonormal in-plane frame (x, y, normal)."""

    origin: np.ndarray
    normal: np.ndarray
    basis_x: np.ndarray
    basis_y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64).reshape(3))
        object.__setattr__(self, "normal", _as_unit(self.normal, "plane normal"))
        object.__setattr__(self, "basis_x", _as_unit(self.basis_x, "plane basis_x"))
        object.__setattr__(self, "basis_y", _as_unit(self.basis_y, "plane basis_y"))
        for a, b, what in (
            (self.normal, self.basis_x, "normal/basis_x"),
            (self.normal, self.basis_y, "normal/basis_y"),
            (self.basis_x, self.basis_y, "basis_x/basis_y"),
        ):
            if abs(float(a @ b)) > 1e-9:
                raise InvalidInputError(f"plane frame not orthogonal: {what}")


def plane_basis(normal, origin=(0.0, 0.0, 0.0)):
    """Build a :class:`SlicePlane` with a deterministic right-handed frame.

    The in-plane x axis comes from crossing the normal with whichever
    canonical axis it is least aligned with, so nearby normals get nearby
    frames and the construction has no randomness.
    """
    n = _as_unit(normal, "plane normal")
    axis = int(np.argmin(np.abs(n)))
    a = np.zeros(3)
    a[axis] = 1.0
    x = np.cross(a, n)
    x = x / np.linalg.norm(x)
    y = np.cross(n, x)
    return SlicePlane(origin=np.asarray(origin, dtype=np.float64), normal=n, basis_x=x, basis_y=y)


class PlaneList:
    """An ordered stack of parallel slicing planes sharing one normal."""

    def __init__(self, planes):
        planes = tuple(planes)
        if not planes:
            raise InvalidInputError("PlaneList needs at least one plane")
        for p in planes:
            if not isinstance(p, SlicePlane):
                raise InvalidInputError("PlaneList expects SlicePlane entries")
        n0 = planes[0].normal
        for p in planes[1:]:
            if not np.allclose(p.normal, n0, atol=1e-9):
                raise InvalidInputError("PlaneList planes must share a normal")
        self._planes = planes

    def __len__(self):
        return len(self._planes)

    def __getitem__(self, i):
        return self._planes[i]

    def __iter__(self):
        return iter(self._planes)

    @property
    def normal(self):
        return self._planes[0].normal

    @property
    def origins(self):
        return np.stack([p.origin for p in self._planes])


@dataclass
class Mesh:
    """Triangle mesh: float64 vertices (V, 3) and int64 faces (F, 3)."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise InvalidInputError("mesh vertices must have shape (V, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise InvalidInputError("mesh faces must have shape (F, 3)")
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise InvalidInputError("mesh face index out of range")


def to_plane_coords(plane, points):
    """Project 3D points lying on the plane into its 2D frame."""
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    rel = pts - plane.origin
    off = rel @ plane.normal
    worst = float(np.max(np.abs(off))) if len(off) else 0.0
    if worst > 1e-6:
        raise InvalidInputError(f"point off plane by {worst:.3e} (tolerance 1e-6)")
    out = np.stack([rel @ plane.basis_x, rel @ plane.basis_y], axis=1)
    return out[0] if single else out


def from_plane_coords(plane, coords):
    """Lift 2D in-plane coordinates back to 3D."""
    q = np.asarray(coords, dtype=np.float64)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    out = plane.origin + q[:, :1] * plane.basis_x + q[:, 1:2] * plane.basis_y
    return out[0] if single else out


def signed_area(loop):
    """Shoelace area: positive for counterclockwise, negative for clockwise."""
    pts = np.asarray(loop, dtype=np.float64)
    x = pts[:, 0]
    y = pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _tri_area(p0, p1, p2):
    return 0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))


def canonicalize_loop(points):
    """Rotate/reverse a closed loop into canonical form.

    Canonical form starts at the vertex minimizing x + y (ties: min x, then
    min y); the order is reversed when the leading three points turn
    counterclockwise.  When neither direction gives a clockwise leading
    triangle (collinear, or a reflex wiggle right at the start) the
    whole-loop signed area decides, and an exactly zero-area loop falls back
    to a lexicographic comparison of the two directions.  Rerunning on the
    output reproduces it bit for bit.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise DegenerateLoopError("loop needs at least 3 points of shape (K, 2)")

    order = np.lexsort((pts[:, 1], pts[:, 0], pts[:, 0] + pts[:, 1]))
    start = int(order[0])
    fwd = np.roll(pts, -start, axis=0)
    rev = np.concatenate([fwd[:1], fwd[:0:-1]])

    a_fwd = _tri_area(fwd[0], fwd[1], fwd[2])
    a_rev = _tri_area(rev[0], rev[1], rev[2])
    if a_fwd < -AREA_TOL:
        return fwd
    if a_fwd > AREA_TOL and a_rev < -AREA_TOL:
        return rev
    # leading triangle collinear, or clockwise in neither direction: the
    # first-three rule cannot settle this loop, so whole-loop area does
    total = signed_area(fwd)
    if total < -AREA_TOL:
        return fwd
    if total > AREA_TOL:
        return rev

    for a, b in zip(fwd.ravel(), rev.ravel()):
        if a < b:
            return fwd
        if a > b:
            return rev
    return fwd


def resample_loop(polyline, n_points):
    """Resample a closed polyline to ``n_points`` by uniform arc length.

    The input is canonicalized first, samples are taken from the canonical
    start, and the result is canonicalized again so the output satisfies the
    loop convention exactly.  Orientation is preserved.
    """
    pts = np.asarray(polyline, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DegenerateLoopError("polyline must have shape (K, 2)")
    if len(pts) >= 2 and np.linalg.norm(pts[0] - pts[-1]) < 1e-12:
        pts = pts[:-1]
    keep = np.ones(len(pts), dtype=bool)
    for i in range(1, len(pts)):
        if np.linalg.norm(pts[i] - pts[i - 1]) < 1e-15:
            keep[i] = False
    pts = pts[keep]
    if len(pts) < 3:
        raise DegenerateLoopError("closed polyline needs at least 3 distinct points")
    if n_points < 3:
        raise InvalidInputError("n_points must be at least 3")

    loop = canonicalize_loop(pts)
    seg = np.linalg.norm(np.roll(loop, -1, axis=0) - loop, axis=1)
    total = float(seg.sum())
    if total < 1e-12:
        raise DegenerateLoopError("loop has near-zero perimeter")

    cum = np.concatenate([[0.0], np.cumsum(seg)])
    cum[-1] = total
    targets = np.arange(n_points) * (total / n_points)
    idx = np.searchsorted(cum, targets, side="right") - 1
    idx = np.clip(idx, 0, len(loop) - 1)
    local = (targets - cum[idx]) / np.where(seg[idx] > 0, seg[idx], 1.0)
    nxt = (idx + 1) % len(loop)
    out = loop[idx] + local[:, None] * (loop[nxt] - loop[idx])
    return canonicalize_loop(out)


def point_in_loop(loop, point, boundary_tol=1e-12):
    """Even-odd containment test; boundary points count as inside."""
    return bool(points_in_loop(loop, np.asarray(point, dtype=np.float64)[None, :], boundary_tol)[0])


def points_in_loop(loop, points, boundary_tol=1e-12):
    poly = np.ascontiguousarray(loop, dtype=np.float64)
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 3:
        raise DegenerateLoopError("loop needs at least 3 points of shape (K, 2)")
    return _kernels.points_in_polygon(poly, pts, float(boundary_tol))


def _chain_segments(edge_a, pt_a, edge_b, pt_b, plane_index):
    """Walk intersection segments into closed node cycles.

    Nodes are mesh edges (exact integer keys).  In a watertight mesh every
    node is hit by exactly two faces; anything else means the slice crossed
    a hole or a fin and is reported as non-manifold.
    """
    node_ids = {}
    node_pts = []
    adjacency = []

    def node_of(edge, pt):
        key = (int(edge[0]), int(edge[1]))
        nid = node_ids.get(key)
        if nid is None:
            nid = len(node_pts)
            node_ids[key] = nid
            node_pts.append(pt)
            adjacency.append([])
        return nid

    n_seg = len(edge_a)
    seg_nodes = np.empty((n_seg, 2), dtype=np.int64)
    for s in range(n_seg):
        u = node_of(edge_a[s], pt_a[s])
        v = node_of(edge_b[s], pt_b[s])
        seg_nodes[s, 0] = u
        seg_nodes[s, 1] = v
        if u == v:
            continue
        adjacency[u].append(s)
        adjacency[v].append(s)

    for nid, segs in enumerate(adjacency):
        if len(segs) not in (0, 2):
            raise NonManifoldSliceError(
                plane_index,
                f"mesh edge met by {len(segs)} crossing faces (expected 2)",
            )

    visited = np.zeros(n_seg, dtype=bool)
    cycles = []
    for s0 in range(n_seg):
        if visited[s0] or seg_nodes[s0, 0] == seg_nodes[s0, 1]:
            visited[s0] = True
            continue
        visited[s0] = True
        start = seg_nodes[s0, 0]
        current = seg_nodes[s0, 1]
        path = [start]
        prev_seg = s0
        while current != start:
            path.append(current)
            nxt = None
            for s in adjacency[current]:
                if s != prev_seg:
                    nxt = s
                    break
            if nxt is None or visited[nxt]:
                raise NonManifoldSliceError(plane_index, "open intersection contour")
            visited[nxt] = True
            current = seg_nodes[nxt, 0] if seg_nodes[nxt, 1] == current else seg_nodes[nxt, 1]
            prev_seg = nxt
        if len(path) >= 3:
            cycles.append(np.stack([node_pts[i] for i in path]))
    return cycles


def slice_mesh(mesh, planes, n_points=32, chain_tol=1e-9):
    """Slice a mesh with every plane; returns one list of loops per plane.

    Vertices landing exactly on a plane are nudged to the positive side by
    ``chain_tol`` so every crossing is transversal and chaining stays exact.
    Loops are resampled to ``n_points`` and canonicalized.
    """
    if not isinstance(mesh, Mesh):
        mesh = Mesh(np.asarray(mesh[0]), np.asarray(mesh[1]))
    V = mesh.vertices
    F = mesh.faces
    out = []
    for i, plane in enumerate(planes):
        d = (V - plane.origin) @ plane.normal
        d = np.where(d == 0.0, chain_tol, d)
        edge_a, pt_a, edge_b, pt_b = _kernels.face_segments(V, F, d)
        loops = []
        for cycle in _chain_segments(edge_a, pt_a, edge_b, pt_b, plane_index=i):
            rel = cycle - plane.origin
            coords = np.stack([rel @ plane.basis_x, rel @ plane.basis_y], axis=1)
            try:
                loops.append(resample_loop(coords, n_points))
            except DegenerateLoopError:
                continue
        out.append(loops)
    return out


def load_obj(path):
    """Minimal OBJ reader: v/f records, polygon faces fanned to triangles."""
    vertices = []
    faces = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            tag = tokens[0]
            if tag == "v":
                if len(tokens) < 4:
                    raise ParseError("vertex needs 3 coordinates", line=lineno)
                try:
                    vertices.append([float(t) for t in tokens[1:4]])
                except ValueError:
                    raise ParseError("bad vertex coordinate", line=lineno)
            elif tag == "f":
                if len(tokens) < 4:
                    raise ParseError("face needs at least 3 vertices", line=lineno)
                idx = []
                for tok in tokens[1:]:
                    head = tok.split("/")[0]
                    try:
                        k = int(head)
                    except ValueError:
                        raise ParseError("bad face index", line=lineno)
                    if k == 0:
                        raise ParseError("face index 0 is invalid", line=lineno)
                    idx.append(k - 1 if k > 0 else len(vertices) + k)
                for j in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[j], idx[j + 1]])
            # v-normals, texcoords, groups, materials: irrelevant here
    if not vertices or not faces:
        raise ParseError("OBJ contains no usable geometry")
    return Mesh(np.asarray(vertices), np.asarray(faces))
