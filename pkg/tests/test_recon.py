"""Oriented point clouds: sampling, normals, flips, caps, PLY, chamfer."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import cKDTree

from loopforge.errors import DegenerateLoopError, InvalidInputError, ShapeError
from loopforge.geometry import PlaneList, from_plane_coords, plane_basis, to_plane_coords
from loopforge.recon import (
    OrientedPointCloud,
    cap_fill,
    chamfer,
    estimate_normals,
    export_ply,
    flip_inner_loops,
    load_ply,
    merge_clouds,
    sample_loop_points,
)
from loopforge.sequence import LoopSequence, encode_sequence


def circle(r, cx=0.5, cy=0.5, n=32):
    t = np.arange(n) / n * 2.0 * np.pi
    return np.stack([cx + r * np.cos(t), cy + r * np.sin(t)], axis=1)


def square(side=1.0, x0=0.0, y0=0.0):
    return np.array(
        [[x0, y0], [x0 + side, y0], [x0 + side, y0 + side], [x0, y0 + side]]
    )


def z_planes(n, dz=0.1):
    return PlaneList([plane_basis((0, 0, 1), origin=(0, 0, i * dz)) for i in range(n)])


def cloud_for(per_plane, planes, samples=64):
    seq = encode_sequence(per_plane, len(planes))
    return seq, estimate_normals(seq, planes, samples_per_loop=samples)


def radial_dots(cloud, span, center3):
    _, s, e = cloud.loop_slices[span]
    rad = cloud.points[s:e] - center3
    rad = rad / np.linalg.norm(rad, axis=1, keepdims=True)
    return (rad * cloud.normals[s:e]).sum(axis=1)


# ---------------------------------------------------------------------------
# arc-length sampling


def test_square_samples_land_at_uniform_perimeter_positions():
    pts, _ = sample_loop_points(square(), 8)
    expected = np.array(
        [[0, 0], [0.5, 0], [1, 0], [1, 0.5], [1, 1], [0.5, 1], [0, 1], [0, 0.5]],
        dtype=np.float64,
    )
    assert np.allclose(pts, expected, atol=1e-12)


def test_sample_tangents_follow_their_edges():
    pts, tangents = sample_loop_points(square(), 8)
    # bottom, right, top, left edges in walk order, two samples each
    expected = np.array([[1, 0], [1, 0], [0, 1], [0, 1], [-1, 0], [-1, 0], [0, -1], [0, -1]])
    assert np.allclose(tangents, expected, atol=1e-12)


def test_sample_count_matches_request():
    pts, tangents = sample_loop_points(circle(0.3), 17)
    assert pts.shape == (17, 2)
    assert tangents.shape == (17, 2)


def test_sample_zero_perimeter_rejected():
    with pytest.raises(DegenerateLoopError):
        sample_loop_points(np.zeros((4, 2)), 8)


def test_sample_input_validation():
    with pytest.raises(ShapeError):
        sample_loop_points(np.zeros((2, 2)), 4)
    with pytest.raises(ShapeError):
        sample_loop_points(np.zeros((4, 3)), 4)
    with pytest.raises(InvalidInputError):
        sample_loop_points(square(), 0)


def _dist_to_segments(p, a, b):
    ab = b - a
    denom = (ab * ab).sum(axis=1)
    t = np.clip(((p - a) * ab).sum(axis=1) / np.where(denom > 0, denom, 1.0), 0.0, 1.0)
    return np.linalg.norm(a + t[:, None] * ab - p, axis=1).min()


@settings(max_examples=30, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.floats(-3, 3, allow_nan=False), st.floats(-3, 3, allow_nan=False)
        ),
        min_size=4,
        max_size=10,
        unique=True,
    ),
    st.integers(1, 40),
)
def test_samples_always_lie_on_the_polyline(raw, m):
    pts = np.asarray(raw, dtype=np.float64)
    # sort by angle about the centroid so the polygon is simple
    c = pts.mean(axis=0)
    loop = pts[np.argsort(np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0]))]
    if np.linalg.norm(np.roll(loop, -1, axis=0) - loop, axis=1).sum() <= 0:
        return
    samples, _ = sample_loop_points(loop, m)
    a = loop
    b = np.roll(loop, -1, axis=0)
    for p in samples:
        assert _dist_to_segments(p[None, :], a, b) < 1e-9


# ---------------------------------------------------------------------------
# cloud container


def test_cloud_rejects_non_unit_normals():
    with pytest.raises(InvalidInputError):
        OrientedPointCloud(np.zeros((2, 3)), np.full((2, 3), 0.5))


def test_cloud_rejects_mismatched_shapes():
    with pytest.raises(ShapeError):
        OrientedPointCloud(np.zeros((2, 3)), np.zeros((3, 3)))


def test_merge_clouds_concatenates_and_keeps_metadata():
    planes = z_planes(1)
    per_plane = [[circle(0.4)]]
    _, a = cloud_for(per_plane, planes)
    b = OrientedPointCloud(np.array([[0.0, 0.0, 5.0]]), np.array([[0.0, 0.0, 1.0]]))
    merged = merge_clouds(a, b)
    assert len(merged) == len(a) + 1
    assert merged.loop_slices == a.loop_slices
    assert np.array_equal(merged.plane_normal, planes.normal)
    assert np.array_equal(merged.points[-1], b.points[0])


# ---------------------------------------------------------------------------
# normal estimation


def test_circle_normals_point_outward():
    planes = z_planes(1)
    _, cloud = cloud_for([[circle(0.4)]], planes)
    center = from_plane_coords(planes[0], np.array([0.5, 0.5]))
    assert radial_dots(cloud, 0, center).min() > 0.99


def test_clockwise_circle_normals_still_point_outward():
    planes = z_planes(1)
    _, cloud = cloud_for([[circle(0.4)[::-1]]], planes)
    center = from_plane_coords(planes[0], np.array([0.5, 0.5]))
    assert radial_dots(cloud, 0, center).min() > 0.99


def test_square_edge_normals_are_edge_perpendicular():
    planes = z_planes(1)
    _, cloud = cloud_for([[square()]], planes, samples=8)
    bx, by = planes[0].basis_x, planes[0].basis_y
    in_plane = np.array(
        [[0, -1], [0, -1], [1, 0], [1, 0], [0, 1], [0, 1], [-1, 0], [-1, 0]],
        dtype=np.float64,
    )
    expected = in_plane[:, 0:1] * bx + in_plane[:, 1:2] * by
    assert np.allclose(cloud.normals, expected, atol=1e-12)


def test_normals_are_unit_length():
    planes = z_planes(3)
    _, cloud = cloud_for([[circle(0.4)], [circle(0.3)], [circle(0.2)]], planes)
    assert np.max(np.abs(np.linalg.norm(cloud.normals, axis=1) - 1.0)) < 1e-6


def test_boundary_planes_tilt_along_the_axis():
    planes = z_planes(3)
    _, cloud = cloud_for([[circle(0.4)], [circle(0.4)], [circle(0.4)]], planes)
    axial = cloud.normals @ planes.normal
    spans = [cloud.loop_slices[i] for i in range(3)]
    bottom = axial[spans[0][1] : spans[0][2]]
    middle = axial[spans[1][1] : spans[1][2]]
    top = axial[spans[2][1] : spans[2][2]]
    # tilt 0.5 blends half in-plane, half axial, then renormalizes
    assert np.allclose(bottom, -1.0 / np.sqrt(2.0), atol=1e-12)
    assert np.allclose(middle, 0.0, atol=1e-12)
    assert np.allclose(top, 1.0 / np.sqrt(2.0), atol=1e-12)


def test_tilt_skips_unoccupied_planes():
    planes = z_planes(4)
    # planes 0 and 3 are empty, so 1 and 2 are the boundary planes
    seq = encode_sequence([[], [circle(0.4)], [circle(0.4)], []], len(planes))
    cloud = estimate_normals(seq, planes)
    axial = cloud.normals @ planes.normal
    assert np.allclose(axial[: len(axial) // 2], -1.0 / np.sqrt(2.0), atol=1e-12)
    assert np.allclose(axial[len(axial) // 2 :], 1.0 / np.sqrt(2.0), atol=1e-12)


def test_single_occupied_plane_gets_no_tilt():
    planes = z_planes(3)
    seq = encode_sequence([[], [circle(0.4)], []], len(planes))
    cloud = estimate_normals(seq, planes)
    assert np.allclose(cloud.normals @ planes.normal, 0.0, atol=1e-12)


def test_zero_tilt_keeps_normals_in_plane():
    planes = z_planes(3)
    seq = encode_sequence([[circle(0.4)], [circle(0.4)], [circle(0.4)]], len(planes))
    cloud = estimate_normals(seq, planes, boundary_tilt=0.0)
    assert np.allclose(cloud.normals @ planes.normal, 0.0, atol=1e-12)


def test_tilt_out_of_range_rejected():
    planes = z_planes(1)
    seq = encode_sequence([[circle(0.4)]], len(planes))
    with pytest.raises(InvalidInputError):
        estimate_normals(seq, planes, boundary_tilt=1.0)
    with pytest.raises(InvalidInputError):
        estimate_normals(seq, planes, boundary_tilt=-0.1)


def test_empty_sequence_gives_empty_cloud():
    planes = z_planes(2)
    seq = LoopSequence(np.zeros((0, 9)), plane_count=2, n_points=4)
    cloud = estimate_normals(seq, planes)
    assert len(cloud) == 0
    assert cloud.loop_slices == []


def test_loop_slices_cover_the_cloud_in_order():
    planes = z_planes(2)
    _, cloud = cloud_for([[circle(0.4), circle(0.1, cx=0.8, cy=0.8)], [circle(0.3)]], planes, samples=16)
    assert [s[0] for s in cloud.loop_slices] == [0, 0, 1]
    bounds = [(s[1], s[2]) for s in cloud.loop_slices]
    assert bounds == [(0, 16), (16, 32), (32, 48)]
    assert len(cloud) == 48


# ---------------------------------------------------------------------------
# inner-loop flipping


def test_annulus_inner_loop_flips_inward():
    planes = z_planes(1)
    per_plane = [[circle(0.4), circle(0.2)]]
    _, cloud = cloud_for(per_plane, planes)
    flipped = flip_inner_loops(per_plane, cloud)
    center = from_plane_coords(planes[0], np.array([0.5, 0.5]))
    assert radial_dots(flipped, 0, center).min() > 0.99
    assert radial_dots(flipped, 1, center).max() < -0.99


def test_triple_nesting_flips_only_odd_depths():
    planes = z_planes(1)
    per_plane = [[circle(0.45), circle(0.3), circle(0.15)]]
    _, cloud = cloud_for(per_plane, planes)
    flipped = flip_inner_loops(per_plane, cloud)
    center = from_plane_coords(planes[0], np.array([0.5, 0.5]))
    assert radial_dots(flipped, 0, center).min() > 0.99
    assert radial_dots(flipped, 1, center).max() < -0.99
    assert radial_dots(flipped, 2, center).min() > 0.99


def test_disjoint_loops_never_flip():
    planes = z_planes(1)
    per_plane = [[circle(0.2, cx=0.25, cy=0.5), circle(0.2, cx=0.75, cy=0.5)]]
    _, cloud = cloud_for(per_plane, planes)
    flipped = flip_inner_loops(per_plane, cloud)
    assert np.array_equal(flipped.normals, cloud.normals)


def test_flip_is_an_exact_involution():
    planes = z_planes(2)
    per_plane = [[circle(0.4), circle(0.2)], [circle(0.35), circle(0.1, cx=0.6)]]
    _, cloud = cloud_for(per_plane, planes)
    twice = flip_inner_loops(per_plane, flip_inner_loops(per_plane, cloud))
    assert np.array_equal(twice.normals, cloud.normals)
    assert np.array_equal(twice.points, cloud.points)


def test_flip_preserves_points_and_needs_plane_normal():
    planes = z_planes(1)
    per_plane = [[circle(0.4), circle(0.2)]]
    _, cloud = cloud_for(per_plane, planes)
    flipped = flip_inner_loops(per_plane, cloud)
    assert np.array_equal(flipped.points, cloud.points)
    bare = OrientedPointCloud(cloud.points, cloud.normals, cloud.loop_slices)
    with pytest.raises(InvalidInputError):
        flip_inner_loops(per_plane, bare)


def test_flipped_boundary_normals_keep_axial_component():
    planes = z_planes(2)
    per_plane = [[circle(0.4), circle(0.2)], [circle(0.4), circle(0.2)]]
    _, cloud = cloud_for(per_plane, planes)
    flipped = flip_inner_loops(per_plane, cloud)
    # reflection about the plane normal negates in-plane parts only
    assert np.allclose(
        flipped.normals @ planes.normal, cloud.normals @ planes.normal, atol=1e-15
    )


# ---------------------------------------------------------------------------
# cap fill


def test_square_caps_keep_every_bbox_sample():
    planes = z_planes(2, dz=0.2)
    seq = encode_sequence([[square()], [square()]], len(planes))
    caps = cap_fill(seq, planes, density=400, seed=0)
    assert len(caps) == 800
    assert np.array_equal(caps.normals[:400], np.tile(-planes.normal, (400, 1)))
    assert np.array_equal(caps.normals[400:], np.tile(planes.normal, (400, 1)))
    assert np.allclose(caps.points[:400] @ planes.normal, 0.0, atol=1e-12)
    assert np.allclose(caps.points[400:] @ planes.normal, 0.2, atol=1e-12)


def test_annulus_cap_respects_even_odd_parity():
    planes = z_planes(1)
    outer, inner = circle(0.4), circle(0.2)
    seq = encode_sequence([[outer, inner]], len(planes))
    caps = cap_fill(seq, planes, density=500, seed=1)
    assert len(caps) > 0
    uv = to_plane_coords(planes[0], caps.points)
    r = np.linalg.norm(uv - np.array([0.5, 0.5]), axis=1)
    # polygon radius dips below the circumradius between vertices
    assert np.all(r <= 0.4 + 1e-9)
    assert np.all(r >= 0.2 * np.cos(np.pi / 32) - 1e-9)


def test_tiny_caps_fall_back_to_the_largest_centroid():
    planes = z_planes(1)
    big = square(side=0.2)
    far = square(side=0.1, x0=10.0, y0=10.0)
    seq = encode_sequence([[big, far]], len(planes))
    caps = cap_fill(seq, planes, density=0.001, seed=0)
    assert len(caps) == 2
    expected = from_plane_coords(planes[0], big.mean(axis=0))
    assert np.allclose(caps.points, np.stack([expected, expected]), atol=1e-12)
    assert np.array_equal(caps.normals[0], -planes.normal)
    assert np.array_equal(caps.normals[1], planes.normal)


def test_cap_count_tracks_density_times_area():
    planes = z_planes(1)
    seq = encode_sequence([[circle(0.4)]], len(planes))
    caps = cap_fill(seq, planes, density=1000, seed=3)
    # two caps on the lone occupied plane, ~pi * 0.4^2 * density each
    expected = 2 * np.pi * 0.16 * 1000
    assert abs(len(caps) - expected) < 5 * np.sqrt(expected)


def test_cap_seed_is_reproducible():
    planes = z_planes(2)
    seq = encode_sequence([[circle(0.4)], [circle(0.4)]], len(planes))
    a = cap_fill(seq, planes, density=200, seed=9)
    b = cap_fill(seq, planes, density=200, seed=9)
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.normals, b.normals)


def test_cap_density_must_be_positive():
    planes = z_planes(1)
    seq = encode_sequence([[circle(0.4)]], len(planes))
    with pytest.raises(InvalidInputError):
        cap_fill(seq, planes, density=0)


# ---------------------------------------------------------------------------
# PLY export


def test_ply_round_trip(tmp_path):
    planes = z_planes(2)
    _, cloud = cloud_for([[circle(0.4)], [circle(0.3)]], planes, samples=16)
    path = tmp_path / "cloud.ply"
    export_ply(cloud, path)
    loaded = load_ply(path)
    assert len(loaded) == len(cloud)
    assert np.allclose(loaded.points, cloud.points, atol=1e-8)
    assert np.allclose(loaded.normals, cloud.normals, atol=1e-8)


def test_ply_header_layout(tmp_path):
    cloud = OrientedPointCloud(np.array([[1.0, 2.0, 3.0]]), np.array([[0.0, 0.0, 1.0]]))
    path = tmp_path / "one.ply"
    export_ply(cloud, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "ply"
    assert lines[1] == "format ascii 1.0"
    assert lines[2] == "element vertex 1"
    assert lines[3:9] == [f"property double {c}" for c in ("x", "y", "z", "nx", "ny", "nz")]
    assert lines[9] == "end_header"
    assert lines[10] == "1 2 3 0 0 1"


def test_ply_empty_cloud_round_trip(tmp_path):
    cloud = OrientedPointCloud(np.zeros((0, 3)), np.zeros((0, 3)))
    path = tmp_path / "empty.ply"
    export_ply(cloud, path)
    assert len(load_ply(path)) == 0


def test_ply_rejects_malformed_files(tmp_path):
    bad = tmp_path / "bad.ply"
    bad.write_text("solid nope\n")
    with pytest.raises(InvalidInputError):
        load_ply(bad)
    bad.write_text("ply\nformat ascii 1.0\nelement vertex 1\n")
    with pytest.raises(InvalidInputError):
        load_ply(bad)
    bad.write_text("ply\nformat ascii 1.0\nelement vertex 2\nend_header\n0 0 0 0 0 1\n")
    with pytest.raises(InvalidInputError):
        load_ply(bad)
    bad.write_text("ply\nformat ascii 1.0\nelement vertex 1\nend_header\n0 0 0 0 0\n")
    with pytest.raises(InvalidInputError):
        load_ply(bad)


# ---------------------------------------------------------------------------
# chamfer distance


def test_chamfer_hand_value():
    a = np.array([[0.0, 0.0, 0.0]])
    b = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
    # a->b nearest is 1; b->a gives (1 + 4) / 2
    assert chamfer(a, b) == pytest.approx(3.5, rel=1e-12)


def test_chamfer_of_shifted_copy():
    a = square().astype(np.float64)
    b = a + np.array([0.1, 0.0])
    assert chamfer(a, b) == pytest.approx(0.02, rel=1e-12)


def test_chamfer_is_symmetric_and_zero_on_itself():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((40, 3))
    b = rng.standard_normal((25, 3))
    assert chamfer(a, b) == chamfer(b, a)
    assert chamfer(a, a) == 0.0
    assert chamfer(a, b) > 0.0


def test_chamfer_matches_kdtree_oracle():
    rng = np.random.default_rng(7)
    a = rng.standard_normal((50, 3))
    b = rng.standard_normal((70, 3))
    da = cKDTree(b).query(a)[0]
    db = cKDTree(a).query(b)[0]
    expected = float((da**2).mean() + (db**2).mean())
    assert chamfer(a, b) == pytest.approx(expected, rel=1e-12)


def test_chamfer_accepts_clouds():
    planes = z_planes(1)
    _, cloud = cloud_for([[circle(0.4)]], planes, samples=16)
    assert chamfer(cloud, cloud) == 0.0
    assert chamfer(cloud, cloud.points) == 0.0


def test_chamfer_input_validation():
    with pytest.raises(ShapeError):
        chamfer(np.zeros((3, 3)), np.zeros((3, 2)))
    with pytest.raises(InvalidInputError):
        chamfer(np.zeros((0, 3)), np.zeros((3, 3)))
