"""Oriented point clouds from decoded loop sequences.

Loops are sampled by arc length; each sample carries the outward in-plane
edge normal, tilted toward the slicing axis on the first/last occupied
planes so Poisson reconstruction closes the ends. Inner loops (odd even-odd
nesting depth) get their in-plane normal components flipped, caps are
rejection-sampled, and the result exports to ASCII PLY.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import chamfer_sq
from .errors import DegenerateLoopError, InvalidInputError, ShapeError
from .geometry import from_plane_coords, points_in_loop, signed_area
from .sequence import decode_sequence

AREA_TOL = 1e-12


@dataclass
class OrientedPointCloud:
    points: np.ndarray   # (M, 3)
    normals: np.ndarray  # (M, 3), unit length
    # one (plane_index, start, end) row span per source loop; cap points
    # appended by merge_clouds carry no span
    loop_slices: list = field(default_factory=list)
    plane_normal: np.ndarray = None

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.normals = np.ascontiguousarray(self.normals, dtype=np.float64).reshape(-1, 3)
        if self.points.shape != self.normals.shape:
            raise ShapeError("points and normals must pair one-to-one")
        if len(self.points):
            norms = np.linalg.norm(self.normals, axis=1)
            if np.max(np.abs(norms - 1.0)) > 1e-6:
                raise InvalidInputError("normals must be unit length within 1e-6")

    def __len__(self):
        return len(self.points)


def merge_clouds(a, b):
    normal = a.plane_normal if a.plane_normal is not None else b.plane_normal
    return OrientedPointCloud(
        np.concatenate([a.points, b.points]),
        np.concatenate([a.normals, b.normals]),
        list(a.loop_slices),
        normal,
    )


def sample_loop_points(loop, m):
    """m arc-length-uniform samples on the closed polyline, with edge tangents."""
    loop = np.asarray(loop, dtype=np.float64)
    if loop.ndim != 2 or loop.shape[1] != 2 or loop.shape[0] < 3:
        raise ShapeError("loop must be (N >= 3, 2)")
    if m < 1:
        raise InvalidInputError("need at least one sample")
    edges = np.roll(loop, -1, axis=0) - loop
    seg_len = np.linalg.norm(edges, axis=1)
    total = float(seg_len.sum())
    if total <= 0.0:
        raise DegenerateLoopError("loop has zero perimeter")
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    s = np.arange(m) * (total / m)
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(loop) - 1)
    safe = np.where(seg_len[idx] > 0.0, seg_len[idx], 1.0)
    frac = (s - cum[idx]) / safe
    pts = loop[idx] + frac[:, None] * edges[idx]
    return pts, edges[idx]


def _outward_in_plane(loop, tangents):
    """Unit 2D normals perpendicular to the tangents, pointing off the loop."""
    lengths = np.linalg.norm(tangents, axis=1)
    safe = np.where(lengths > 0.0, lengths, 1.0)
    t = tangents / safe[:, None]
    if signed_area(loop) < -AREA_TOL:  # clockwise
        n2 = np.stack([-t[:, 1], t[:, 0]], axis=1)
    else:
        n2 = np.stack([t[:, 1], -t[:, 0]], axis=1)
    return n2


def estimate_normals(seq, planes, samples_per_loop=64, boundary_tilt=0.5):
    """Sample every loop and orient each sample's normal outward.

    Samples on the first (last) occupied plane are tilted toward the negative
    (positive) plane normal by boundary_tilt and renormalized; with a single
    occupied plane both tilts would cancel, so it is treated as interior.
    """
    if not 0.0 <= boundary_tilt < 1.0:
        raise InvalidInputError("boundary_tilt must lie in [0, 1)")
    per_plane = decode_sequence(seq, planes)
    occupied = [i for i, loops in enumerate(per_plane) if loops]
    if not occupied:
        return OrientedPointCloud(np.zeros((0, 3)), np.zeros((0, 3)), [], planes.normal)
    first_occ, last_occ = occupied[0], occupied[-1]
    axis_n = planes.normal

    all_pts, all_normals, slices = [], [], []
    row = 0
    for plane_idx, loops in enumerate(per_plane):
        if not loops:
            continue
        plane = planes[plane_idx]
        tilt = 0.0
        if first_occ != last_occ:
            if plane_idx == first_occ:
                tilt = -boundary_tilt
            elif plane_idx == last_occ:
                tilt = boundary_tilt
        for loop in loops:
            pts2, tangents = sample_loop_points(loop, samples_per_loop)
            n2 = _outward_in_plane(loop, tangents)
            pts3 = from_plane_coords(plane, pts2)
            n3 = n2[:, 0:1] * plane.basis_x + n2[:, 1:2] * plane.basis_y
            if tilt != 0.0:
                n3 = (1.0 - abs(tilt)) * n3 + tilt * axis_n
            norms = np.linalg.norm(n3, axis=1)
            n3 = n3 / np.where(norms > 0.0, norms, 1.0)[:, None]
            all_pts.append(pts3)
            all_normals.append(n3)
            slices.append((plane_idx, row, row + len(pts3)))
            row += len(pts3)
    return OrientedPointCloud(
        np.concatenate(all_pts), np.concatenate(all_normals), slices, axis_n
    )


def flip_inner_loops(per_plane_loops, cloud):
    """Negate in-plane normal components of loops at odd even-odd nesting depth.

    Depth counts how many other same-plane loops contain a loop's centroid.
    Pure reflection about the plane normal, so applying it twice restores
    the input cloud exactly.
    """
    if cloud.plane_normal is None:
        raise InvalidInputError("cloud does not carry its plane normal")
    n = cloud.plane_normal
    flipped = cloud.normals.copy()
    slice_iter = iter(cloud.loop_slices)
    spans = []
    for plane_idx, loops in enumerate(per_plane_loops):
        for _ in loops:
            spans.append(next(slice_iter))
    span_pos = 0
    for plane_idx, loops in enumerate(per_plane_loops):
        k = len(loops)
        if k == 0:
            continue
        loops = [np.asarray(l, dtype=np.float64) for l in loops]
        centroids = np.stack([np.mean(l, axis=0) for l in loops])
        areas = np.array([abs(signed_area(l)) for l in loops])
        depth = np.zeros(k, dtype=int)
        for j, other in enumerate(loops):
            inside = points_in_loop(other, centroids)
            # only a strictly larger loop can contain another: concentric
            # rings both cover each other's centroid otherwise
            inside &= areas < areas[j]
            depth += inside.astype(int)
        for i in range(k):
            plane_of_span, start, end = spans[span_pos]
            span_pos += 1
            if depth[i] % 2 == 1:
                seg = flipped[start:end]
                out_of_plane = (seg @ n)[:, None] * n
                flipped[start:end] = -(seg - out_of_plane) + out_of_plane
    return OrientedPointCloud(cloud.points.copy(), flipped, list(cloud.loop_slices), n)


def cap_fill(seq, planes, density, seed=0):
    """Rejection-sample the even-odd interior of the first/last occupied planes.

    Bottom-cap normals point along -n, top-cap along +n; a cap whose loops
    enclose less than one expected sample still emits the largest loop's
    centroid so tiny shapes stay closed.
    """
    if density <= 0:
        raise InvalidInputError("density must be positive")
    per_plane = decode_sequence(seq, planes)
    occupied = [i for i, loops in enumerate(per_plane) if loops]
    if not occupied:
        return OrientedPointCloud(np.zeros((0, 3)), np.zeros((0, 3)), [], planes.normal)
    rng = np.random.default_rng(seed)
    n = planes.normal
    caps = [(occupied[0], -1.0), (occupied[-1], 1.0)]
    pts_out, normals_out = [], []
    for plane_idx, sign in caps:
        loops = [np.asarray(l, dtype=np.float64) for l in per_plane[plane_idx]]
        stacked = np.concatenate(loops)
        lo = stacked.min(axis=0)
        hi = stacked.max(axis=0)
        extent = hi - lo
        bbox_area = float(extent[0] * extent[1])
        n_try = max(1, math.ceil(density * bbox_area))
        candidates = lo + rng.random((n_try, 2)) * extent
        parity = np.zeros(n_try, dtype=int)
        for loop in loops:
            parity += points_in_loop(loop, candidates).astype(int)
        kept = candidates[parity % 2 == 1]
        if len(kept) == 0:
            biggest = max(loops, key=lambda l: abs(signed_area(l)))
            kept = np.mean(biggest, axis=0)[None, :]
        pts3 = from_plane_coords(planes[plane_idx], kept)
        pts_out.append(pts3)
        normals_out.append(np.tile(sign * n, (len(pts3), 1)))
    return OrientedPointCloud(
        np.concatenate(pts_out), np.concatenate(normals_out), [], n
    )


def oriented_cloud(seq, planes, density, seed=0):
    """Full reconstruction input: sampled loops with outward normals, inner
    loops flipped, boundary tilt, and rejection-sampled end caps."""
    per_plane = decode_sequence(seq, planes)
    cloud = flip_inner_loops(per_plane, estimate_normals(seq, planes))
    caps = cap_fill(seq, planes, density=density, seed=seed)
    return merge_clouds(cloud, caps)


def export_ply(cloud, path):
    """ASCII PLY with double x y z nx ny nz properties, 9 significant digits."""
    lines = [
        "ply",
        "format ascii 1.0",
        "element vertex {}".format(len(cloud)),
        "property double x",
        "property double y",
        "property double z",
        "property double nx",
        "property double ny",
        "property double nz",
        "end_header",
    ]
    rows = np.concatenate([cloud.points, cloud.normals], axis=1) if len(cloud) else []
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
        for row in rows:
            f.write(" ".join(f"{v:.9g}" for v in row) + "\n")
    return path


def load_ply(path):
    """Parse the ASCII PLY subset written by export_ply."""
    with open(path, "r", encoding="utf-8") as f:
        lines = [l.rstrip("\n") for l in f]
    if not lines or lines[0] != "ply":
        raise InvalidInputError("not a PLY file")
    count = None
    body_at = None
    for i, line in enumerate(lines):
        if line.startswith("element vertex "):
            count = int(line.split()[-1])
        if line == "end_header":
            body_at = i + 1
            break
    if count is None or body_at is None:
        raise InvalidInputError("malformed PLY header")
    rows = [
        [float(v) for v in line.split()]
        for line in lines[body_at : body_at + count]
        if line
    ]
    if len(rows) != count:
        raise InvalidInputError(f"expected {count} vertices, found {len(rows)}")
    if any(len(r) != 6 for r in rows):
        raise InvalidInputError("each vertex row must hold x y z nx ny nz")
    data = np.asarray(rows, dtype=np.float64).reshape(count, 6)
    return OrientedPointCloud(data[:, :3], data[:, 3:])


def chamfer(a, b):
    """Symmetric mean of squared nearest-neighbor distances between clouds."""
    a = np.ascontiguousarray(getattr(a, "points", a), dtype=np.float64)
    b = np.ascontiguousarray(getattr(b, "points", b), dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError("point clouds must be (M, D) arrays of equal dimension")
    if len(a) == 0 or len(b) == 0:
        raise InvalidInputError("chamfer distance needs nonempty clouds")
    return float(chamfer_sq(a, b))
