"""Electrode layout construction and panel meshing checks."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pixeltrap.geometry import (
    LayoutError,
    MeshError,
    PanelMesh,
    annular_sector_polygon,
    build_pixel_layout,
    concat_meshes,
    hex_center,
    hex_ring_coords,
    hex_ring_count,
    hexagon_vertices,
    load_layout,
    mesh_layout,
    polygon_area,
    polygon_centroid,
    save_layout,
    structured_annulus_mesh,
    structured_disk_mesh,
)

SQRT3 = math.sqrt(3.0)


# ---------------------------------------------------------------------------
# polygon primitives


def test_polygon_area_unit_square():
    sq = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    assert polygon_area(sq) == pytest.approx(1.0)
    assert polygon_area(sq[::-1]) == pytest.approx(-1.0)


def test_polygon_centroid_square():
    sq = np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]])
    np.testing.assert_allclose(polygon_centroid(sq), [1.0, 1.0])


@st.composite
def convex_polygons(draw):
    """Random convex polygon: sorted angles on a circle, jittered radii."""
    n = draw(st.integers(min_value=3, max_value=12))
    angs = draw(
        st.lists(
            st.floats(min_value=0.0, max_value=2.0 * math.pi - 1e-3),
            min_size=n,
            max_size=n,
            unique=True,
        )
    )
    angs = np.sort(np.asarray(angs))
    if np.min(np.diff(angs)) < 1e-3:
        angs = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    r = draw(st.floats(min_value=0.1, max_value=10.0))
    return np.column_stack([r * np.cos(angs), r * np.sin(angs)])


@given(convex_polygons(), st.floats(-5.0, 5.0), st.floats(-5.0, 5.0))
@settings(max_examples=60, deadline=None)
def test_area_and_centroid_translation_invariance(poly, dx, dy):
    shift = np.array([dx, dy])
    a0 = polygon_area(poly)
    a1 = polygon_area(poly + shift)
    assert a1 == pytest.approx(a0, rel=1e-9, abs=1e-12)
    c0 = polygon_centroid(poly)
    c1 = polygon_centroid(poly + shift)
    np.testing.assert_allclose(c1, c0 + shift, rtol=1e-9, atol=1e-9)


@given(convex_polygons())
@settings(max_examples=60, deadline=None)
def test_centroid_inside_convex_polygon(poly):
    c = polygon_centroid(poly)
    # point-in-convex-polygon: centroid left of every CCW edge
    if polygon_area(poly) < 0.0:
        poly = poly[::-1]
    d = np.roll(poly, -1, axis=0) - poly
    rel = c[None, :] - poly
    cross = d[:, 0] * rel[:, 1] - d[:, 1] * rel[:, 0]
    assert np.all(cross > -1e-12 * np.max(np.abs(poly)))


# ---------------------------------------------------------------------------
# hexagonal lattice


def test_hex_ring_count_closed_form():
    assert [hex_ring_count(n) for n in range(4)] == [1, 7, 19, 37]


@given(st.integers(min_value=1, max_value=8))
@settings(max_examples=20, deadline=None)
def test_hex_ring_coords_size_and_distance(ring):
    coords = hex_ring_coords(ring)
    assert len(coords) == 6 * ring
    assert len(set(coords)) == len(coords)
    for i, j in coords:
        assert max(abs(i), abs(j), abs(i + j)) == ring


def test_hex_ring_coords_match_count():
    cells = [c for r in range(4) for c in hex_ring_coords(r)]
    assert len(cells) == hex_ring_count(3)
    assert len(set(cells)) == len(cells)


def test_hex_neighbours_sit_one_pitch_apart():
    pitch = 2.5e-4
    c0 = hex_center(0, 0, pitch)
    for i, j in [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)]:
        d = np.linalg.norm(hex_center(i, j, pitch) - c0)
        assert d == pytest.approx(pitch, rel=1e-12)


def test_hexagon_vertices_geometry():
    R = 1.7e-4
    hexa = hexagon_vertices(np.array([0.0, 0.0]), R)
    r = np.hypot(hexa[:, 0], hexa[:, 1])
    np.testing.assert_allclose(r, R, rtol=1e-12)
    assert polygon_area(hexa) == pytest.approx(1.5 * SQRT3 * R**2, rel=1e-12)


# ---------------------------------------------------------------------------
# layout construction


def test_layout_electrode_census(small_layout):
    """Two rings of 120 um pixels: 19 pixels, 4 guard and 4 outer segments."""
    assert len(small_layout) == 27
    assert len(small_layout.pixel_ids) == hex_ring_count(2)
    assert len(small_layout.group_ids("guard")) == 4
    assert len(small_layout.group_ids("plane")) == 4
    assert small_layout.ids[0] == "pix_r0_00"
    assert "guard_q0" in small_layout.ids
    assert "outer_q3" in small_layout.ids


def test_pixel_ring_recovered_from_positions(small_layout):
    for eid in small_layout.pixel_ids:
        ring = int(eid.split("_")[1][1:])
        assert small_layout.pixel_ring(eid) == ring
    with pytest.raises(KeyError):
        small_layout.pixel_ring("guard_q0")


def test_pixel_pitch_is_hex_lattice_spacing(small_layout):
    """Neighbouring pixel centres sit sqrt(3)/2 circumcircle diameters apart."""
    c0 = small_layout.by_id("pix_r0_00").centroid
    c1 = small_layout.by_id("pix_r1_00").centroid
    pitch = np.linalg.norm(c1 - c0)
    assert pitch == pytest.approx(0.5 * SQRT3 * 120e-6, rel=1e-9)


def test_pixel_area_shrunk_by_gap(small_layout):
    a_eff = 60e-6 - 8e-6 / SQRT3
    want = 1.5 * SQRT3 * a_eff**2
    for eid in small_layout.pixel_ids:
        assert small_layout.by_id(eid).area == pytest.approx(want, rel=1e-9)


def test_facing_pixel_edges_one_gap_apart(small_layout):
    """Flat-to-flat spacing between adjacent hexagons equals the gap."""
    c0 = small_layout.by_id("pix_r0_00").centroid
    c1 = small_layout.by_id("pix_r1_00").centroid
    a_eff = 60e-6 - 8e-6 / SQRT3
    apothem = 0.5 * SQRT3 * a_eff
    gap = np.linalg.norm(c1 - c0) - 2.0 * apothem
    assert gap == pytest.approx(8e-6, rel=1e-9)


def test_guard_quadrants_one_gap_apart(small_layout):
    p0 = small_layout.by_id("guard_q0").polygon
    p1 = small_layout.by_id("guard_q1").polygon
    d = np.linalg.norm(p0[:, None, :] - p1[None, :, :], axis=-1)
    assert d.min() == pytest.approx(8e-6, rel=1e-6)


def test_default_guard_radii():
    lay = build_pixel_layout(1, 200e-6, 5e-6)
    r_pix = lay.pixel_array_radius()
    guard = lay.by_id("guard_q0").polygon
    r = np.hypot(guard[:, 0], guard[:, 1])
    assert r.min() == pytest.approx(1.05 * r_pix, rel=1e-9)
    assert r.max() == pytest.approx(2.0 * 1.05 * r_pix, rel=1e-9)
    outer = lay.by_id("outer_q0").polygon
    ro = np.hypot(outer[:, 0], outer[:, 1])
    assert ro.max() == pytest.approx(4.0 * 1.05 * r_pix, rel=1e-9)


def test_layout_rejects_bad_parameters():
    with pytest.raises(LayoutError):
        build_pixel_layout(-1, 300e-6, 4e-6)
    with pytest.raises(LayoutError):
        build_pixel_layout(2, 0.0, 4e-6)
    with pytest.raises(LayoutError):
        build_pixel_layout(2, 300e-6, 100e-6)  # gap over a quarter diameter
    with pytest.raises(LayoutError):
        build_pixel_layout(2, 300e-6, 4e-6, guard_inner_radius=1e-6)


def test_annular_sector_polygon_properties():
    poly = annular_sector_polygon(1.0, 2.0, 0, 0.05)
    assert polygon_area(poly) > 0.0
    r = np.hypot(poly[:, 0], poly[:, 1])
    assert r.min() == pytest.approx(1.0, rel=1e-9)
    assert r.max() == pytest.approx(2.0, rel=1e-9)
    # quarter annulus minus two straight cuts, to chord precision
    quarter = 0.25 * math.pi * (4.0 - 1.0)
    assert polygon_area(poly) < quarter
    assert polygon_area(poly) > 0.9 * quarter


def test_annular_sector_rejects_bad_radii():
    with pytest.raises(LayoutError):
        annular_sector_polygon(2.0, 1.0, 0, 0.05)
    with pytest.raises(LayoutError):
        annular_sector_polygon(1.0, 2.0, 0, 1.5)


def test_duplicate_electrode_ids_rejected(small_layout):
    from pixeltrap.geometry import Electrode, ElectrodeLayout

    el = small_layout.electrodes[0]
    twin = Electrode(el.id, el.group, el.polygon.copy())
    with pytest.raises(LayoutError):
        ElectrodeLayout([el, twin], 120e-6, 8e-6)


def test_layout_save_load_round_trip(small_layout, tmp_path):
    path = tmp_path / "layout.json"
    save_layout(small_layout, path)
    back = load_layout(path)
    assert back.ids == small_layout.ids
    assert back.circumcircle_diameter == small_layout.circumcircle_diameter
    assert back.gap_width == small_layout.gap_width
    for eid in small_layout.ids:
        np.testing.assert_allclose(
            back.by_id(eid).polygon, small_layout.by_id(eid).polygon
        )
        assert back.by_id(eid).group == small_layout.by_id(eid).group


def test_load_layout_rejects_malformed_files(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    with pytest.raises(LayoutError):
        load_layout(bad)
    missing = tmp_path / "missing.json"
    missing.write_text('{"gap_width": 1e-6}')
    with pytest.raises(LayoutError):
        load_layout(missing)


# ---------------------------------------------------------------------------
# panel meshes


def test_mesh_panel_count_near_target(small_mesh):
    assert 0.8 * 900 <= len(small_mesh) <= 1.2 * 900
    assert small_mesh.panel_count == len(small_mesh)


def test_mesh_areas_positive_and_consistent(small_layout, small_mesh):
    """Panels wind counter-clockwise and tile each electrode outline."""
    assert small_mesh.areas.min() > 0.0
    for el in small_layout:
        a_mesh = small_mesh.electrode_area(el.id)
        assert a_mesh == pytest.approx(el.area, rel=5e-3)


def test_mesh_covers_every_electrode(small_layout, small_mesh):
    assert small_mesh.electrode_ids == small_layout.ids
    for eid in small_layout.ids:
        assert small_mesh.panels_of(eid).size > 0


def test_mesh_edge_flags_mark_boundary_layer(small_mesh):
    for eid in small_mesh.electrode_ids:
        panels = small_mesh.panels_of(eid)
        flags = small_mesh.edge_flags[panels]
        assert flags.any(), f"{eid} has no edge panels"


def test_mesh_edge_panels_smaller_on_hexagons():
    """Grading puts finer panels along electrode boundaries."""
    lay = build_pixel_layout(0, 200e-6, 2e-6)
    mesh = mesh_layout(lay, 800)
    panels = mesh.panels_of("pix_r0_00")
    flags = mesh.edge_flags[panels]
    a = mesh.areas[panels]
    assert flags.any() and not flags.all()
    assert a[flags].mean() < a[~flags].mean()


def test_mesh_incidence_matrix_partitions(small_mesh):
    m = small_mesh.incidence_matrix()
    assert m.shape == (len(small_mesh), len(small_mesh.electrode_ids))
    np.testing.assert_allclose(m.sum(axis=1), 1.0)


def test_mesh_centroids_inside_bounding_box(small_mesh):
    lim = np.max(np.abs(small_mesh.vertices))
    assert np.all(np.abs(small_mesh.centroids) <= lim)


def test_mesh_is_deterministic(small_layout, small_mesh):
    again = mesh_layout(small_layout, 900)
    assert np.array_equal(again.vertices, small_mesh.vertices)
    assert np.array_equal(again.nvert, small_mesh.nvert)


def test_mesh_scales_with_target(small_layout):
    coarse = mesh_layout(small_layout, 300)
    assert len(coarse) < 900
    for el in small_layout:
        assert coarse.electrode_area(el.id) == pytest.approx(el.area, rel=5e-3)


def test_mesh_rejects_target_below_electrode_count(small_layout):
    with pytest.raises(MeshError):
        mesh_layout(small_layout, 10)


def test_mesh_save_load_round_trip(small_mesh, tmp_path):
    path = tmp_path / "mesh.npz"
    small_mesh.save(path)
    back = PanelMesh.load(path)
    assert np.array_equal(back.vertices, small_mesh.vertices)
    assert np.array_equal(back.nvert, small_mesh.nvert)
    assert np.array_equal(back.electrode_index, small_mesh.electrode_index)
    assert back.electrode_ids == small_mesh.electrode_ids
    assert np.array_equal(back.edge_flags, small_mesh.edge_flags)


def test_mesh_load_rejects_incomplete_archive(small_mesh, tmp_path):
    path = tmp_path / "broken.npz"
    np.savez_compressed(path, vertices=small_mesh.vertices, nvert=small_mesh.nvert)
    with pytest.raises(MeshError):
        PanelMesh.load(path)


def test_degenerate_panel_rejected():
    verts = np.zeros((1, 4, 2))
    with pytest.raises(MeshError):
        PanelMesh(
            verts,
            np.array([4]),
            np.array([0], dtype=np.int32),
            ["e0"],
            np.array([False]),
        )


@given(st.integers(min_value=60, max_value=400))
@settings(max_examples=8, deadline=None)
def test_mesh_count_tracks_target_on_one_ring(target):
    lay = build_pixel_layout(0, 200e-6, 2e-6)
    mesh = mesh_layout(lay, max(target, len(lay.electrodes)))
    assert len(mesh) >= len(lay.electrodes)
    assert mesh.areas.min() > 0.0


# ---------------------------------------------------------------------------
# structured validation meshes


def test_disk_mesh_area_and_rim_grading():
    mesh = structured_disk_mesh(1e-3, n_radial=24, n_azimuthal=64)
    assert np.sum(mesh.areas) == pytest.approx(math.pi * 1e-6, rel=5e-3)
    r = np.hypot(mesh.centroids[:, 0], mesh.centroids[:, 1])
    assert mesh.areas[r > 0.9e-3].mean() < mesh.areas[r < 0.5e-3].mean()


def test_annulus_mesh_area():
    mesh = structured_annulus_mesh(0.5e-3, 1.5e-3, n_radial=20, n_azimuthal=64)
    want = math.pi * ((1.5e-3) ** 2 - (0.5e-3) ** 2)
    assert np.sum(mesh.areas) == pytest.approx(want, rel=5e-3)


def test_concat_meshes_appends_electrodes():
    disk = structured_disk_mesh(1e-3, electrode_id="a")
    ring = structured_annulus_mesh(1.2e-3, 2e-3, electrode_id="b")
    both = concat_meshes(disk, ring)
    assert both.electrode_ids == ["a", "b"]
    assert len(both) == len(disk) + len(ring)
    assert both.panels_of("b").size == len(ring)
    with pytest.raises(MeshError):
        concat_meshes(disk, structured_disk_mesh(1e-3, electrode_id="a"))
