"""Watertight triangle-mesh primitives used by dataset generators and tests.

All builders return :class:`~loopforge.geometry.Mesh` with outward-facing
windings.  Axis-parameterized builders construct in a local frame with the
symmetry axis last, then permute coordinate columns, so changing the axis
never changes the floating-point values.
"""

import numpy as np

from .errors import InvalidInputError
from .geometry import Mesh


def _permute_axis(local_xyz, axis):
    """Map local columns (u, v, axis) onto world axes with `axis` last."""
    out = np.empty_like(local_xyz)
    out[:, (axis + 1) % 3] = local_xyz[:, 0]
    out[:, (axis + 2) % 3] = local_xyz[:, 1]
    out[:, axis] = local_xyz[:, 2]
    return out


def box_mesh(lo, hi):
    """Axis-aligned box between corners ``lo`` and ``hi``."""
    x0, y0, z0 = (float(v) for v in lo)
    x1, y1, z1 = (float(v) for v in hi)
    if not (x1 > x0 and y1 > y0 and z1 > z0):
        raise InvalidInputError("box_mesh needs hi > lo on every axis")
    verts = np.array(
        [
            [x0, y0, z0],
            [x1, y0, z0],
            [x1, y1, z0],
            [x0, y1, z0],
            [x0, y0, z1],
            [x1, y0, z1],
            [x1, y1, z1],
            [x0, y1, z1],
        ]
    )
    faces = np.array(
        [
            [0, 2, 1],
            [0, 3, 2],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [3, 7, 6],
            [3, 6, 2],
            [0, 4, 7],
            [0, 7, 3],
            [1, 2, 6],
            [1, 6, 5],
        ]
    )
    return Mesh(verts, faces)


def revolve_mesh(heights, radii, segments=64, axis=1):
    """Closed surface of revolution around ``axis``.

    ``heights`` must be strictly increasing and ``radii`` strictly positive;
    both ends are capped with triangle fans sharing the ring vertices, so the
    result is watertight.
    """
    h = np.asarray(heights, dtype=np.float64)
    r = np.asarray(radii, dtype=np.float64)
    if h.ndim != 1 or h.shape != r.shape or len(h) < 2:
        raise InvalidInputError("heights and radii must be matching 1D arrays, length >= 2")
    if np.any(np.diff(h) <= 0):
        raise InvalidInputError("heights must be strictly increasing")
    if np.any(r <= 0):
        raise InvalidInputError("radii must be strictly positive")
    if segments < 3:
        raise InvalidInputError("segments must be at least 3")

    ang = 2.0 * np.pi * np.arange(segments) / segments
    cos = np.cos(ang)
    sin = np.sin(ang)

    n_rings = len(h)
    verts = np.empty((n_rings * segments + 2, 3))
    for i in range(n_rings):
        verts[i * segments : (i + 1) * segments, 0] = r[i] * cos
        verts[i * segments : (i + 1) * segments, 1] = r[i] * sin
        verts[i * segments : (i + 1) * segments, 2] = h[i]
    apex_lo = n_rings * segments
    apex_hi = apex_lo + 1
    verts[apex_lo] = (0.0, 0.0, h[0])
    verts[apex_hi] = (0.0, 0.0, h[-1])

    faces = []
    for i in range(n_rings - 1):
        b = i * segments
        t = (i + 1) * segments
        for k in range(segments):
            k2 = (k + 1) % segments
            faces.append([b + k, b + k2, t + k2])
            faces.append([b + k, t + k2, t + k])
    for k in range(segments):
        k2 = (k + 1) % segments
        faces.append([apex_lo, k2, k])
        top = (n_rings - 1) * segments
        faces.append([apex_hi, top + k, top + k2])

    return Mesh(_permute_axis(verts, axis), np.asarray(faces))


def cylinder_mesh(radius, lo, hi, segments=64, axis=1):
    """Capped circular cylinder from ``lo`` to ``hi`` along ``axis``."""
    if hi <= lo:
        raise InvalidInputError("cylinder_mesh needs hi > lo")
    return revolve_mesh([lo, hi], [radius, radius], segments=segments, axis=axis)


def torus_mesh(major_radius, minor_radius, center=(0.0, 0.0, 0.0), axis=1,
               segments_major=64, segments_minor=32):
    """Torus around ``axis`` through ``center``.

    A plane through the center perpendicular to ``axis`` cuts it in two
    concentric circles of radii ``major_radius - minor_radius`` and
    ``major_radius + minor_radius``.
    """
    if not (major_radius > minor_radius > 0):
        raise InvalidInputError("torus needs major_radius > minor_radius > 0")
    th = 2.0 * np.pi * np.arange(segments_major) / segments_major
    ph = 2.0 * np.pi * np.arange(segments_minor) / segments_minor

    verts = np.empty((segments_major * segments_minor, 3))
    idx = 0
    for i in range(segments_major):
        ct, st = np.cos(th[i]), np.sin(th[i])
        for j in range(segments_minor):
            ring = major_radius + minor_radius * np.cos(ph[j])
            verts[idx] = (ring * ct, ring * st, minor_radius * np.sin(ph[j]))
            idx += 1

    faces = []
    for i in range(segments_major):
        i2 = (i + 1) % segments_major
        for j in range(segments_minor):
            j2 = (j + 1) % segments_minor
            a = i * segments_minor + j
            b = i2 * segments_minor + j
            c = i2 * segments_minor + j2
            d = i * segments_minor + j2
            faces.append([a, b, c])
            faces.append([a, c, d])

    world = _permute_axis(verts, axis) + np.asarray(center, dtype=np.float64)
    return Mesh(world, np.asarray(faces))


def torus_segment_mesh(arc_radius, tube_radius, theta0, theta1,
                       segments_arc=24, segments_tube=16):
    """Capped partial torus in the local x-y plane (z is the tube offset).

    The arc circle of radius ``arc_radius`` lies in the x-y plane centered at
    the origin; the tube sweeps ``theta0`` to ``theta1``.  Both ends are
    capped with fans, so the segment is watertight on its own.  Callers
    rotate/translate the result into place (vase handles).
    """
    if not (arc_radius > tube_radius > 0):
        raise InvalidInputError("torus segment needs arc_radius > tube_radius > 0")
    if theta1 <= theta0:
        raise InvalidInputError("torus segment needs theta1 > theta0")
    th = np.linspace(theta0, theta1, segments_arc + 1)
    ph = 2.0 * np.pi * np.arange(segments_tube) / segments_tube

    n_rings = len(th)
    verts = np.empty((n_rings * segments_tube + 2, 3))
    for i in range(n_rings):
        ct, st = np.cos(th[i]), np.sin(th[i])
        for j in range(segments_tube):
            ring = arc_radius + tube_radius * np.cos(ph[j])
            verts[i * segments_tube + j] = (ring * ct, ring * st, tube_radius * np.sin(ph[j]))
    apex0 = n_rings * segments_tube
    apex1 = apex0 + 1
    verts[apex0] = (arc_radius * np.cos(th[0]), arc_radius * np.sin(th[0]), 0.0)
    verts[apex1] = (arc_radius * np.cos(th[-1]), arc_radius * np.sin(th[-1]), 0.0)

    faces = []
    for i in range(n_rings - 1):
        b = i * segments_tube
        t = (i + 1) * segments_tube
        for j in range(segments_tube):
            j2 = (j + 1) % segments_tube
            faces.append([b + j, b + j2, t + j2])
            faces.append([b + j, t + j2, t + j])
    last = (n_rings - 1) * segments_tube
    for j in range(segments_tube):
        j2 = (j + 1) % segments_tube
        faces.append([apex0, j2, j])
        faces.append([apex1, last + j, last + j2])

    return Mesh(verts, np.asarray(faces))


def merge_meshes(meshes):
    """Concatenate meshes into one vertex/face soup (no welding)."""
    meshes = list(meshes)
    if not meshes:
        raise InvalidInputError("merge_meshes needs at least one mesh")
    verts = []
    faces = []
    offset = 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        offset += len(m.vertices)
    return Mesh(np.concatenate(verts), np.concatenate(faces))
