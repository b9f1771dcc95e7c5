"""Hot numeric kernels, each in two flavors: a numba ``@njit`` build and a
vectorized pure-numpy fallback.

Set ``LOOPFORGE_NO_NUMBA=1`` to force the numpy path (or it is chosen
automatically when numba is not importable).  ``benchmarks/bench_kernels.py``
times both.  The transformer itself is deliberately *not* here: its hot spots
are BLAS matmuls, which numpy already dispatches better than a jitted loop.
"""

import os

import numpy as np

_DISABLE = os.environ.get("LOOPFORGE_NO_NUMBA", "").strip().lower() in (
    "1",
    "true",
    "yes",
)

try:
    if _DISABLE:
        raise ImportError("numba disabled via LOOPFORGE_NO_NUMBA")
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


# ---------------------------------------------------------------------------
# plane/triangle intersection segments

def _face_segments_py(vertices, faces, dist):
    """For every face straddling the plane, emit its intersection segment.

    ``dist`` is the per-vertex signed distance to the plane with exact zeros
    already perturbed away, so every crossing face cuts exactly two edges.
    Each endpoint is keyed by its mesh edge with sorted vertex indices, which
    makes shared endpoints bit-identical across neighboring faces.

    Returns (edge_a, point_a, edge_b, point_b) with shapes (S,2),(S,3),(S,2),(S,3).
    """
    n_faces = faces.shape[0]
    count = 0
    for f in range(n_faces):
        d0 = dist[faces[f, 0]] > 0.0
        d1 = dist[faces[f, 1]] > 0.0
        d2 = dist[faces[f, 2]] > 0.0
        if d0 != d1 or d1 != d2:
            count += 1

    edge_a = np.empty((count, 2), dtype=np.int64)
    edge_b = np.empty((count, 2), dtype=np.int64)
    pt_a = np.empty((count, 3), dtype=np.float64)
    pt_b = np.empty((count, 3), dtype=np.float64)

    s = 0
    for f in range(n_faces):
        i0 = faces[f, 0]
        i1 = faces[f, 1]
        i2 = faces[f, 2]
        p0 = dist[i0] > 0.0
        p1 = dist[i1] > 0.0
        p2 = dist[i2] > 0.0
        if p0 == p1 and p1 == p2:
            continue
        n_hit = 0
        for a, b, same in ((i0, i1, p0 == p1), (i1, i2, p1 == p2), (i2, i0, p2 == p0)):
            if same:
                continue
            lo, hi = (a, b) if a < b else (b, a)
            t = dist[lo] / (dist[lo] - dist[hi])
            px = vertices[lo, 0] + t * (vertices[hi, 0] - vertices[lo, 0])
            py = vertices[lo, 1] + t * (vertices[hi, 1] - vertices[lo, 1])
            pz = vertices[lo, 2] + t * (vertices[hi, 2] - vertices[lo, 2])
            if n_hit == 0:
                edge_a[s, 0] = lo
                edge_a[s, 1] = hi
                pt_a[s, 0] = px
                pt_a[s, 1] = py
                pt_a[s, 2] = pz
            else:
                edge_b[s, 0] = lo
                edge_b[s, 1] = hi
                pt_b[s, 0] = px
                pt_b[s, 1] = py
                pt_b[s, 2] = pz
            n_hit += 1
        s += 1
    return edge_a, pt_a, edge_b, pt_b


def _face_segments_np(vertices, faces, dist):
    """Vectorized twin of :func:`_face_segments_py`."""
    side = dist[faces] > 0.0  # (F,3)
    crossing = ~(np.all(side, axis=1) | np.all(~side, axis=1))
    tri = faces[crossing]
    tri_side = side[crossing]

    # edges (0,1),(1,2),(2,0); a face cuts exactly the two with differing signs
    pairs = np.array([[0, 1], [1, 2], [2, 0]])
    va = tri[:, pairs[:, 0]]  # (S,3)
    vb = tri[:, pairs[:, 1]]
    differs = tri_side[:, pairs[:, 0]] != tri_side[:, pairs[:, 1]]  # (S,3)

    # each row of `differs` has exactly two True entries; split them out
    first = np.argmax(differs, axis=1)
    rev = np.argmax(differs[:, ::-1], axis=1)
    second = 2 - rev

    rows = np.arange(tri.shape[0])
    a0, b0 = va[rows, first], vb[rows, first]
    a1, b1 = va[rows, second], vb[rows, second]

    def cut(a, b):
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        t = dist[lo] / (dist[lo] - dist[hi])
        p = vertices[lo] + t[:, None] * (vertices[hi] - vertices[lo])
        return np.stack([lo, hi], axis=1), p

    edge_a, pt_a = cut(a0, b0)
    edge_b, pt_b = cut(a1, b1)
    return edge_a, pt_a, edge_b, pt_b


# ---------------------------------------------------------------------------
# even-odd point-in-polygon with boundary counted as inside

def _points_in_polygon_py(poly, pts, tol):
    n_pts = pts.shape[0]
    n_vert = poly.shape[0]
    out = np.zeros(n_pts, dtype=np.bool_)
    tol2 = tol * tol
    for m in range(n_pts):
        qx = pts[m, 0]
        qy = pts[m, 1]
        inside = False
        on_edge = False
        for k in range(n_vert):
            x1 = poly[k, 0]
            y1 = poly[k, 1]
            k2 = k + 1 if k + 1 < n_vert else 0
            x2 = poly[k2, 0]
            y2 = poly[k2, 1]
            ex = x2 - x1
            ey = y2 - y1
            seg2 = ex * ex + ey * ey
            if seg2 > 0.0:
                t = ((qx - x1) * ex + (qy - y1) * ey) / seg2
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
            else:
                t = 0.0
            dx = qx - (x1 + t * ex)
            dy = qy - (y1 + t * ey)
            if dx * dx + dy * dy <= tol2:
                on_edge = True
                break
            if (y1 > qy) != (y2 > qy):
                xint = x1 + (qy - y1) * ex / ey
                if qx < xint:
                    inside = not inside
        out[m] = on_edge or inside
    return out


def _points_in_polygon_np(poly, pts, tol):
    x1 = poly[:, 0][None, :]
    y1 = poly[:, 1][None, :]
    x2 = np.roll(poly[:, 0], -1)[None, :]
    y2 = np.roll(poly[:, 1], -1)[None, :]
    qx = pts[:, 0][:, None]
    qy = pts[:, 1][:, None]

    ex = x2 - x1
    ey = y2 - y1
    seg2 = ex * ex + ey * ey
    safe = np.where(seg2 > 0.0, seg2, 1.0)
    t = np.clip(((qx - x1) * ex + (qy - y1) * ey) / safe, 0.0, 1.0)
    t = np.where(seg2 > 0.0, t, 0.0)
    dx = qx - (x1 + t * ex)
    dy = qy - (y1 + t * ey)
    on_edge = (dx * dx + dy * dy <= tol * tol).any(axis=1)

    crosses = (y1 > qy) != (y2 > qy)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x1 + (qy - y1) * ex / ey
    inside = (np.count_nonzero(crosses & (qx < xint), axis=1) % 2).astype(np.bool_)
    return on_edge | inside


# ---------------------------------------------------------------------------
# symmetric squared chamfer distance

def _chamfer_sq_py(a, b):
    na = a.shape[0]
    nb = b.shape[0]
    dim = a.shape[1]
    total_a = 0.0
    for i in range(na):
        best = np.inf
        for j in range(nb):
            d = 0.0
            for k in range(dim):
                diff = a[i, k] - b[j, k]
                d += diff * diff
            if d < best:
                best = d
        total_a += best
    total_b = 0.0
    for j in range(nb):
        best = np.inf
        for i in range(na):
            d = 0.0
            for k in range(dim):
                diff = a[i, k] - b[j, k]
                d += diff * diff
            if d < best:
                best = d
        total_b += best
    return total_a / na + total_b / nb


def _chamfer_sq_np(a, b):
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    return d2.min(axis=1).mean() + d2.min(axis=0).mean()


# ---------------------------------------------------------------------------
# dispatch

if HAS_NUMBA:
    _face_segments_nb = njit(cache=True)(_face_segments_py)
    _points_in_polygon_nb = njit(cache=True)(_points_in_polygon_py)
    _chamfer_sq_nb = njit(cache=True)(_chamfer_sq_py)

    face_segments = _face_segments_nb
    points_in_polygon = _points_in_polygon_nb
    chamfer_sq = _chamfer_sq_nb
else:
    face_segments = _face_segments_np
    points_in_polygon = _points_in_polygon_np
    chamfer_sq = _chamfer_sq_np
