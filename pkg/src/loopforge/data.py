"""Dataset preparation: normalization, plane schedules, procedural shapes.

Two shape families cover the texture extremes the model trains on: smooth
surfaces of revolution with optional sub-surface handle attachments (varied
topology), and sharp-cornered unions of boxes swept along the slicing axis
(rectilinear, non-convex cross-sections).  Both families intersect every
plane of their schedule by construction, so level-up flag counting is a
valid stop rule on the resulting data.
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import shapely.geometry as sgeom
import shapely.ops
from scipy.interpolate import PchipInterpolator

from .errors import (
    DatasetQualityError,
    DegenerateLoopError,
    EmptyShapeError,
    InvalidInputError,
    NonManifoldSliceError,
    SequenceLengthError,
)
from .geometry import Mesh, PlaneList, load_obj, plane_basis, slice_mesh
from .meshes import merge_meshes, revolve_mesh, torus_segment_mesh
from .sequence import LoopSequence, deserialize, encode_sequence, serialize


@dataclass
class DatasetConfig:
    category: str = "vase"
    num_shapes: int = 64
    plane_count: int = 16
    slice_axis: int = 1
    plane_range: tuple = None
    n_points: int = 32
    seed: int = 0
    max_seq_len: int = 135

    def __post_init__(self):
        if self.category not in ("vase", "sofa", "custom"):
            raise InvalidInputError(f"unknown category {self.category!r}")
        if self.plane_count < 2:
            raise InvalidInputError("plane_count must be at least 2")
        if self.slice_axis not in (0, 1, 2):
            raise InvalidInputError("slice_axis must be 0, 1 or 2")
        if self.plane_range is None:
            # center of each of plane_count equal slabs of the unit interval
            half = 1.0 / (2.0 * self.plane_count)
            self.plane_range = (half, 1.0 - half)
        lo, hi = self.plane_range
        if not lo < hi:
            raise InvalidInputError("plane_range low must be below high")
        if self.max_seq_len < self.plane_count:
            raise InvalidInputError("max_seq_len must be at least plane_count")


@dataclass
class ShapeRecord:
    id: str
    sequence: LoopSequence
    provenance: dict


def normalize_mesh(mesh):
    """Uniformly scale and translate so the bounding box fits [0,1]^3 centered."""
    v = mesh.vertices
    if len(v) == 0:
        raise EmptyShapeError("cannot normalize an empty mesh")
    lo = v.min(axis=0)
    hi = v.max(axis=0)
    extent = float((hi - lo).max())
    if extent < 1e-12:
        raise DegenerateLoopError("mesh has zero extent")
    center = (hi + lo) / 2.0
    return Mesh((v - center) / extent + 0.5, mesh.faces)


def make_plane_schedule(cfg):
    """Evenly spaced parallel planes along the configured axis.

    Origins sit on the axis line through the center of the unit cube, since
    normalized meshes are centered there.
    """
    lo, hi = cfg.plane_range
    values = np.linspace(lo, hi, cfg.plane_count)
    normal = np.zeros(3)
    normal[cfg.slice_axis] = 1.0
    planes = []
    for t in values:
        origin = np.full(3, 0.5)
        origin[cfg.slice_axis] = t
        planes.append(plane_basis(normal, origin=origin))
    return PlaneList(planes)


# ---------------------------------------------------------------------------
# vases: smooth revolution profiles with optional handles

@dataclass
class HandleParams:
    height: float          # arc center height on the vase axis
    arc_radius: float      # radius of the handle's arc circle
    tube_radius: float     # thickness of the handle tube
    span_deg: float        # arc coverage, centered on the radial direction
    azimuth: float         # rotation of the handle around the vase axis
    center_offset: float   # arc center distance from the vase axis


@dataclass
class VaseParams:
    control_radii: tuple
    handles: tuple = ()
    segments: int = 48
    rings: int = 25


def _vase_profile(params):
    ctrl = np.asarray(params.control_radii, dtype=np.float64)
    if len(ctrl) < 2:
        raise InvalidInputError("vase profile needs at least 2 control radii")
    ctrl = np.clip(ctrl, 0.05, 0.45)
    knots = np.linspace(0.0, 1.0, len(ctrl))
    return PchipInterpolator(knots, ctrl)


def random_vase_params(rng):
    """Draw vase parameters; infeasible handles are silently dropped."""
    n_ctrl = int(rng.integers(4, 9))
    radii = rng.uniform(0.05, 0.45, size=n_ctrl)
    params = VaseParams(control_radii=tuple(float(r) for r in radii))
    profile = _vase_profile(params)

    handles = []
    if rng.random() < 0.5:
        count = int(rng.integers(1, 3))
        base_azimuth = float(rng.uniform(0.0, 2.0 * np.pi))
        cy = float(rng.uniform(0.35, 0.65))
        arc_r = float(rng.uniform(0.13, 0.18))
        tube_r = float(rng.uniform(0.018, 0.028))
        # wide spans curl the arc ends back toward the axis far enough to
        # bury them while the mid-arc still clears the wall
        span = float(rng.uniform(120.0, 160.0))
        pick = float(rng.random())
        for k in range(count):
            offset = _handle_offset(profile, cy, arc_r, tube_r, span, pick)
            if offset is None:
                continue
            handles.append(
                HandleParams(
                    height=cy,
                    arc_radius=arc_r,
                    tube_radius=tube_r,
                    span_deg=span,
                    azimuth=base_azimuth + k * np.pi,
                    center_offset=offset,
                )
            )
    params.handles = tuple(handles)
    return params


def _handle_offset(profile, cy, arc_r, tube_r, span_deg, pick):
    """Arc center offset making the handle protrude yet stay attached.

    Both arc ends (plus tube thickness) must sit inside the body over the
    whole height band they occupy, the mid-arc must clear the wall outward,
    and the total reach must leave the vertical axis the longest one.
    Returns None when those constraints cannot all hold.
    """
    half = np.deg2rad(span_deg) / 2.0
    reach_y = arc_r * np.sin(half) + tube_r
    y_lo, y_hi = cy - reach_y, cy + reach_y
    if y_lo < 0.02 or y_hi > 0.98:
        return None
    band = np.linspace(y_lo, y_hi, 32)
    rho_min = float(np.min(profile(band)))
    rho_mid = float(profile(cy))

    lo = rho_mid + 0.01 - arc_r + tube_r           # mid-arc protrudes
    hi = min(
        rho_min - 0.01 - tube_r - arc_r * np.cos(half),  # ends buried
        0.48 - arc_r - tube_r,                            # reach stays under 0.48
    )
    if hi < lo:
        return None
    return float(lo + pick * (hi - lo))


def _rotate_y(points, angle):
    c, s = np.cos(angle), np.sin(angle)
    out = np.empty_like(points)
    out[:, 0] = points[:, 0] * c + points[:, 2] * s
    out[:, 1] = points[:, 1]
    out[:, 2] = -points[:, 0] * s + points[:, 2] * c
    return out


def generate_vase(params=None, rng=None):
    """Closed vase mesh: revolution surface plus optional handle segments."""
    if params is None:
        if rng is None:
            raise InvalidInputError("generate_vase needs params or rng")
        params = random_vase_params(rng)
    profile = _vase_profile(params)
    heights = np.linspace(0.0, 1.0, params.rings)
    radii = profile(heights)
    parts = [revolve_mesh(heights, radii, segments=params.segments, axis=1)]

    for h in params.handles:
        half = np.deg2rad(h.span_deg) / 2.0
        seg = torus_segment_mesh(h.arc_radius, h.tube_radius, -half, half)
        verts = seg.vertices + np.array([h.center_offset, h.height, 0.0])
        parts.append(Mesh(_rotate_y(verts, h.azimuth), seg.faces))
    return merge_meshes(parts)


# ---------------------------------------------------------------------------
# sofas: unions of boxes extruded along the slicing axis

@dataclass
class SofaParams:
    depth: float = 0.45
    seat_height: float = 0.2
    back_height: float = 0.6
    back_depth: float = 0.12
    arm_width: float = 0.1
    arm_height: float = 0.38
    arm_count: int = 2
    chaise: tuple = None   # (x0, x1, depth extension) or None


def random_sofa_params(rng):
    params = SofaParams(
        depth=float(rng.uniform(0.35, 0.5)),
        seat_height=float(rng.uniform(0.15, 0.25)),
        back_height=float(rng.uniform(0.5, 0.7)),
        back_depth=float(rng.uniform(0.1, 0.15)),
        arm_width=float(rng.uniform(0.08, 0.14)),
        arm_height=float(rng.uniform(0.3, 0.45)),
        arm_count=int(rng.choice([0, 1, 2], p=[0.15, 0.15, 0.7])),
    )
    if rng.random() < 0.3:
        x0 = float(rng.uniform(params.arm_width + 0.02, 0.5))
        x1 = float(rng.uniform(x0 + 0.25, min(x0 + 0.45, 1.0 - params.arm_width - 0.02)))
        if x1 > x0 + 0.1:
            params.chaise = (x0, x1, float(rng.uniform(0.15, 0.3)))
    return params


def _profile_rectangles(params, x_mid):
    """Active (y, z) rectangles of the sofa silhouette at axis position x."""
    rects = [
        (0.0, params.seat_height, 0.0, params.depth),             # seat slab
        (0.0, params.back_height, 0.0, params.back_depth),        # backrest
    ]
    if params.arm_count >= 1 and x_mid < params.arm_width:
        rects.append((0.0, params.arm_height, 0.0, params.depth))
    if params.arm_count == 2 and x_mid > 1.0 - params.arm_width:
        rects.append((0.0, params.arm_height, 0.0, params.depth))
    if params.chaise is not None:
        x0, x1, ext = params.chaise
        if x0 < x_mid < x1:
            rects.append((0.0, params.seat_height, 0.0, params.depth + ext))
    return rects


def _strip_collinear(ring):
    pts = np.asarray(ring, dtype=np.float64)
    if np.linalg.norm(pts[0] - pts[-1]) < 1e-12:
        pts = pts[:-1]
    keep = []
    n = len(pts)
    for i in range(n):
        a, b, c = pts[(i - 1) % n], pts[i], pts[(i + 1) % n]
        cross = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
        if abs(cross) > 1e-12:
            keep.append(i)
    return pts[keep]


def _point_in_tri(p, a, b, c):
    d1 = (p[0] - b[0]) * (a[1] - b[1]) - (a[0] - b[0]) * (p[1] - b[1])
    d2 = (p[0] - c[0]) * (b[1] - c[1]) - (b[0] - c[0]) * (p[1] - c[1])
    d3 = (p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])
    has_neg = (d1 < -1e-12) or (d2 < -1e-12) or (d3 < -1e-12)
    has_pos = (d1 > 1e-12) or (d2 > 1e-12) or (d3 > 1e-12)
    return not (has_neg and has_pos)


def _ear_clip(poly):
    """Triangulate a simple CCW polygon into index triples."""
    idx = list(range(len(poly)))
    tris = []
    stall = 0
    while len(idx) > 3:
        clipped = False
        for pos in range(len(idx)):
            i0 = idx[pos - 1]
            i1 = idx[pos]
            i2 = idx[(pos + 1) % len(idx)]
            a, b, c = poly[i0], poly[i1], poly[i2]
            cross = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
            if cross <= 1e-15:
                continue
            if any(
                _point_in_tri(poly[j], a, b, c)
                for j in idx
                if j not in (i0, i1, i2)
            ):
                continue
            tris.append((i0, i1, i2))
            idx.pop(pos)
            clipped = True
            break
        if not clipped:
            stall += 1
            if stall > 2:
                raise DegenerateLoopError("polygon could not be triangulated")
            # drop the flattest corner and retry
            flattest = min(
                range(len(idx)),
                key=lambda pos: abs(
                    (poly[idx[pos]][0] - poly[idx[pos - 1]][0])
                    * (poly[idx[(pos + 1) % len(idx)]][1] - poly[idx[pos - 1]][1])
                    - (poly[idx[(pos + 1) % len(idx)]][0] - poly[idx[pos - 1]][0])
                    * (poly[idx[pos]][1] - poly[idx[pos - 1]][1])
                ),
            )
            idx.pop(flattest)
    tris.append(tuple(idx))
    return tris


def _prism(profile_pts, x_lo, x_hi):
    """Closed prism: a (y, z) polygon extruded along x and capped."""
    k = len(profile_pts)
    verts = np.empty((2 * k, 3))
    verts[:k, 0] = x_lo
    verts[k:, 0] = x_hi
    verts[:k, 1] = profile_pts[:, 0]
    verts[k:, 1] = profile_pts[:, 0]
    verts[:k, 2] = profile_pts[:, 1]
    verts[k:, 2] = profile_pts[:, 1]

    faces = []
    for i in range(k):
        j = (i + 1) % k
        faces.append([i, j, k + j])
        faces.append([i, k + j, k + i])
    for (a, b, c) in _ear_clip(profile_pts):
        faces.append([a, c, b])              # low-x cap, facing -x
        faces.append([k + a, k + b, k + c])  # high-x cap, facing +x
    return Mesh(verts, np.asarray(faces))


def generate_sofa(params=None, rng=None):
    """Sofa mesh as adjacent closed prisms along the x axis.

    The (y, z) cross-section is constant between x breakpoints, so interior
    cap faces are never cut transversally and each slicing plane sees the
    side walls of exactly one prism.
    """
    if params is None:
        if rng is None:
            raise InvalidInputError("generate_sofa needs params or rng")
        params = random_sofa_params(rng)

    breaks = {0.0, 1.0}
    if params.arm_count >= 1:
        breaks.add(params.arm_width)
    if params.arm_count == 2:
        breaks.add(1.0 - params.arm_width)
    if params.chaise is not None:
        breaks.add(params.chaise[0])
        breaks.add(params.chaise[1])
    xs = sorted(breaks)

    parts = []
    for x_lo, x_hi in zip(xs[:-1], xs[1:]):
        rects = _profile_rectangles(params, (x_lo + x_hi) / 2.0)
        union = shapely.ops.unary_union(
            [sgeom.box(y0, z0, y1, z1) for (y0, y1, z0, z1) in rects]
        )
        if union.geom_type != "Polygon" or union.interiors:
            raise DegenerateLoopError("sofa cross-section must be simply connected")
        ring = np.asarray(union.exterior.coords)
        if not union.exterior.is_ccw:
            ring = ring[::-1]
        parts.append(_prism(_strip_collinear(ring), x_lo, x_hi))
    return merge_meshes(parts)


# ---------------------------------------------------------------------------
# dataset assembly

def build_dataset(cfg, out_dir=None, obj_dir=None):
    """Generate shapes, slice, encode; optionally write artifacts.

    Returns (records, manifest).  Shapes that fail closure, leave a plane
    empty, or exceed max_seq_len are rejected; more than 50% rejections
    aborts the build.
    """
    rng = np.random.default_rng(cfg.seed)
    schedule = make_plane_schedule(cfg)

    sources = []
    if cfg.category == "custom":
        if obj_dir is None:
            raise InvalidInputError("category 'custom' needs obj_dir")
        paths = sorted(Path(obj_dir).glob("*.obj"))
        if not paths:
            raise InvalidInputError(f"no .obj files under {obj_dir}")
        sources = paths[: cfg.num_shapes]

    records = []
    rejected = 0
    reasons = {}
    for i in range(cfg.num_shapes if cfg.category != "custom" else len(sources)):
        if cfg.category == "vase":
            params = random_vase_params(rng)
            mesh = generate_vase(params)
            provenance = {"kind": "vase", "params": asdict(params)}
        elif cfg.category == "sofa":
            params = random_sofa_params(rng)
            mesh = generate_sofa(params)
            provenance = {"kind": "sofa", "params": asdict(params)}
        else:
            mesh = load_obj(sources[i])
            provenance = {"kind": "obj", "path": str(sources[i])}

        try:
            mesh = normalize_mesh(mesh)
            per_plane = slice_mesh(mesh, schedule, n_points=cfg.n_points)
            seq = encode_sequence(per_plane, cfg.plane_count)
            if any(len(loops) == 0 for loops in per_plane):
                raise EmptyShapeError("a schedule plane misses the shape")
            if len(seq) > cfg.max_seq_len:
                raise SequenceLengthError(
                    f"sequence length {len(seq)} exceeds {cfg.max_seq_len}"
                )
        except (NonManifoldSliceError, EmptyShapeError, DegenerateLoopError,
                SequenceLengthError) as exc:
            rejected += 1
            reasons[type(exc).__name__] = reasons.get(type(exc).__name__, 0) + 1
            continue
        records.append(
            ShapeRecord(id=f"{cfg.category}_{i:05d}", sequence=seq, provenance=provenance)
        )

    total = rejected + len(records)
    if total == 0 or rejected * 2 > total:
        raise DatasetQualityError(
            f"rejected {rejected}/{total} shapes ({reasons}); dataset unusable"
        )

    lengths = [len(r.sequence) for r in records]
    manifest = {
        "config": asdict(cfg),
        "ids": [r.id for r in records],
        "stats": {
            "count": len(records),
            "rejected": rejected,
            "mean_seq_len": float(np.mean(lengths)),
            "max_seq_len": int(np.max(lengths)),
        },
    }

    if out_dir is not None:
        out = Path(out_dir)
        (out / "shapes").mkdir(parents=True, exist_ok=True)
        for rec in records:
            (out / "shapes" / f"{rec.id}.loopseq").write_bytes(
                serialize(rec.sequence, schedule)
            )
        with open(out / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return records, manifest


def load_dataset(root):
    """Read back a dataset directory written by :func:`build_dataset`."""
    root = Path(root)
    with open(root / "manifest.json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    records = []
    planes = None
    for shape_id in manifest["ids"]:
        blob = (root / "shapes" / f"{shape_id}.loopseq").read_bytes()
        seq, file_planes = deserialize(blob)
        if planes is None:
            planes = file_planes
        records.append(ShapeRecord(id=shape_id, sequence=seq, provenance={"kind": "file"}))
    if planes is None:
        raise InvalidInputError("dataset contains no plane schedule")
    return records, planes, manifest
