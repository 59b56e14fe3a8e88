import logging

import numpy as np
import pytest

from roadmend.mesh_io import TexturedMesh
from roadmend.raster import (MAX_VIEWPORT, ProjectionSpec, RasterError,
                             build_projection, rasterize, roi_from_mesh)
from roadmend.synthetic import checkerboard, quad_mesh


def const_atlas(rgb, n=8):
    a = np.empty((n, n, 3), dtype=np.uint8)
    a[:] = rgb
    return a


def tri_mesh(verts, uvs, atlas):
    return TexturedMesh(
        vertices=np.asarray(verts, dtype=np.float64),
        facets=np.array([[0, 1, 2]], dtype=np.int32),
        uv_vertices=np.asarray(uvs, dtype=np.float64),
        uv_facets=np.array([[0, 1, 2]], dtype=np.int32),
        atlas_index=np.zeros(1, dtype=np.int32),
        atlases=[atlas]).validate()


def roi(x0, y0, x1, y1, h0=-10.0, h1=10.0):
    return np.array([[x0, y0, h0], [x1, y1, h1]])


# ---------------------------------------------------------------- projection

def test_viewport_10x20_at_01():
    spec = build_projection(roi(0, 0, 10, 20), 0.1)
    assert (spec.width, spec.height) == (100, 200)


def test_viewport_1x1_at_1():
    spec = build_projection(roi(0, 0, 1, 1), 1.0)
    assert (spec.width, spec.height) == (1, 1)


def test_viewport_too_large_is_an_error():
    with pytest.raises(RasterError, match="16384"):
        build_projection(roi(0, 0, 2000, 2000), 0.05)


def test_viewport_bounds():
    spec = build_projection(roi(0, 0, 0.01, 0.01), 1.0)
    assert (spec.width, spec.height) == (1, 1)
    spec = build_projection(roi(0, 0, MAX_VIEWPORT * 0.5, 1), 0.5)
    assert spec.width == MAX_VIEWPORT


def test_bad_roi_and_gsd_are_errors():
    with pytest.raises(RasterError, match="extent"):
        build_projection(roi(0, 0, -1, 10), 0.1)
    with pytest.raises(RasterError, match="gsd"):
        build_projection(roi(0, 0, 1, 1), 0.0)
    with pytest.raises(RasterError, match="up_axis"):
        build_projection(roi(0, 0, 1, 1), 0.1, up_axis="w")


def test_matrix_chain_matches_direct_pixel_map():
    spec = build_projection(roi(2.5, -3.0, 12.5, 17.0, -2.0, 6.0), 0.25)
    rng = np.random.default_rng(1)
    pts = rng.uniform([2.5, -3.0, -2.0], [12.5, 17.0, 6.0], (100, 3))
    direct = spec.world_to_pixel(pts)
    hom = np.concatenate([pts, np.ones((100, 1))], axis=1)
    ndc = (spec.P @ spec.V @ hom.T).T
    px = (ndc[:, 0] + 1.0) * 0.5 * spec.width
    py = (ndc[:, 1] + 1.0) * 0.5 * spec.height
    np.testing.assert_allclose(px, direct[:, 0], atol=1e-9)
    np.testing.assert_allclose(py, direct[:, 1], atol=1e-9)
    # ndc height spans [-1, 1] over the roi height range
    lo = (spec.P @ spec.V @ [0, 0, -2.0, 1.0])[2]
    hi = (spec.P @ spec.V @ [0, 0, 6.0, 1.0])[2]
    assert lo == pytest.approx(-1.0) and hi == pytest.approx(1.0)


def test_pixel_ground_round_trip():
    spec = build_projection(roi(1.0, 2.0, 9.0, 6.0), 0.125)
    gx, gy = spec.pixel_to_ground(3.5, 7.5)
    back = spec.world_to_pixel(np.array([[gx, gy, 0.0]]))
    assert back[0, 0] == pytest.approx(3.5)
    assert back[0, 1] == pytest.approx(7.5)


# ------------------------------------------------------------- rasterization

def test_constant_triangle():
    atlas = const_atlas((77, 88, 99))
    mesh = tri_mesh([[0, 0, 0], [8, 0, 0], [0, 8, 0]],
                    [[0, 1], [1, 1], [0, 0]], atlas)
    spec = build_projection(roi(0, 0, 8, 8), 1.0)
    r = rasterize(mesh, spec)
    assert r.valid.any()
    assert (r.color[r.valid] == (77, 88, 99)).all()
    assert (r.facet[r.valid] == 0).all()
    assert (r.facet[~r.valid] == -1).all()
    np.testing.assert_allclose(r.height[r.valid], 0.0)
    assert r.n_pixels == int(r.valid.sum())


def test_higher_surface_wins():
    low = quad_mesh(const_atlas((200, 0, 0)), size_m=8.0, height=0.0)
    high = quad_mesh(const_atlas((0, 0, 200)), size_m=8.0, height=2.0)
    mesh = TexturedMesh(
        vertices=np.concatenate([low.vertices, high.vertices]),
        facets=np.concatenate([low.facets, high.facets + 4]),
        uv_vertices=np.concatenate([low.uv_vertices, high.uv_vertices]),
        uv_facets=np.concatenate([low.uv_facets, high.uv_facets + 4]),
        atlas_index=np.array([0, 0, 1, 1], dtype=np.int32),
        atlases=[low.atlases[0], high.atlases[0]]).validate()
    spec = build_projection(roi(0, 0, 8, 8), 0.5)
    r = rasterize(mesh, spec)
    assert (r.color[r.valid] == (0, 0, 200)).all()
    assert set(np.unique(r.facet[r.valid])) <= {2, 3}
    np.testing.assert_allclose(r.height[r.valid], 2.0)


def test_equal_height_keeps_first_facet():
    a = quad_mesh(const_atlas((200, 0, 0)), size_m=8.0, height=0.0)
    b = quad_mesh(const_atlas((0, 0, 200)), size_m=8.0, height=0.0)
    mesh = TexturedMesh(
        vertices=np.concatenate([a.vertices, b.vertices]),
        facets=np.concatenate([a.facets, b.facets + 4]),
        uv_vertices=np.concatenate([a.uv_vertices, b.uv_vertices]),
        uv_facets=np.concatenate([a.uv_facets, b.uv_facets + 4]),
        atlas_index=np.array([0, 0, 1, 1], dtype=np.int32),
        atlases=[a.atlases[0], b.atlases[0]]).validate()
    spec = build_projection(roi(0, 0, 8, 8), 0.5)
    r = rasterize(mesh, spec)
    assert (r.color[r.valid] == (200, 0, 0)).all()
    assert set(np.unique(r.facet[r.valid])) <= {0, 1}


def test_split_quad_covers_each_pixel_once():
    mesh = quad_mesh(const_atlas((10, 20, 30), 16), size_m=16.0)
    spec = build_projection(roi(0, 0, 16, 16), 1.0)
    r = rasterize(mesh, spec)
    assert r.valid.all()
    # strict depth test never fires twice per pixel at equal height, so the
    # per-facet write counts sum to exactly one write per pixel
    assert r.n_pixels == 16 * 16


def _bilinear_oracle(atlas, tx, ty):
    ah, aw = atlas.shape[:2]
    x0 = int(np.floor(tx))
    y0 = int(np.floor(ty))
    fx, fy = tx - x0, ty - y0
    gx, gy = 1.0 - fx, 1.0 - fy
    xa = min(max(x0, 0), aw - 1)
    xb = min(max(x0 + 1, 0), aw - 1)
    ya = min(max(y0, 0), ah - 1)
    yb = min(max(y0 + 1, 0), ah - 1)
    out = np.empty(3, dtype=np.uint8)
    for c in range(3):
        pa = float(atlas[ya, xa, c])
        pb = float(atlas[ya, xb, c])
        pc = float(atlas[yb, xa, c])
        pd = float(atlas[yb, xb, c])
        out[c] = np.uint8(np.rint(gx * gy * pa + fx * gy * pb
                                  + gx * fy * pc + fx * fy * pd))
    return out


def test_checkerboard_two_x_upsample_matches_bilinear_oracle():
    atlas = checkerboard(16, cell=2)
    mesh = quad_mesh(atlas, size_m=16.0)
    spec = build_projection(roi(0, 0, 16, 16), 0.5)
    r = rasterize(mesh, spec)
    assert r.valid.all()
    for j in range(32):
        for i in range(32):
            tx = i / 2.0 - 0.25
            ty = j / 2.0 - 0.25
            assert (r.color[j, i] == _bilinear_oracle(atlas, tx, ty)).all(), (i, j)


def _orient2d(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def test_winning_facet_contains_pixel_center():
    from roadmend.synthetic import random_mesh
    mesh = random_mesh(seed=4, max_facets=300)
    box = roi_from_mesh(mesh)
    spec = build_projection(box, (box[1, 0] - box[0, 0]) / 64)
    r = rasterize(mesh, spec)
    proj = spec.world_to_pixel(mesh.vertices)
    ys, xs = np.nonzero(r.valid)
    for y, x in zip(ys, xs):
        k = r.facet[y, x]
        t = proj[mesh.facets[k]]
        cx, cy = x + 0.5, y + 0.5
        area = _orient2d(t[0, 0], t[0, 1], t[1, 0], t[1, 1], t[2, 0], t[2, 1])
        if area < 0:
            t = t[[0, 2, 1]]
            area = -area
        w0 = _orient2d(t[1, 0], t[1, 1], t[2, 0], t[2, 1], cx, cy) / area
        w1 = _orient2d(t[2, 0], t[2, 1], t[0, 0], t[0, 1], cx, cy) / area
        w2 = _orient2d(t[0, 0], t[0, 1], t[1, 0], t[1, 1], cx, cy) / area
        assert min(w0, w1, w2) >= -1e-6, (x, y, k)


def test_up_axis_variants_render_identically():
    zmesh = quad_mesh(checkerboard(16, cell=4), size_m=8.0, height=1.0)
    spec = build_projection(roi(0, 0, 8, 8), 0.5)
    rz = rasterize(zmesh, spec)

    for axis, perm in (("y", [0, 2, 1]), ("x", [1, 2, 0])):
        m = zmesh.copy()
        # place (ground1, ground2, height) into the axis convention
        remapped = np.empty_like(m.vertices)
        remapped[:, perm[0]] = zmesh.vertices[:, 0]
        remapped[:, perm[1]] = zmesh.vertices[:, 1]
        remapped[:, perm[2]] = zmesh.vertices[:, 2]
        m.vertices[:] = remapped
        box = np.empty((2, 3))
        box[0, perm[0]], box[1, perm[0]] = 0, 8
        box[0, perm[1]], box[1, perm[1]] = 0, 8
        box[0, perm[2]], box[1, perm[2]] = -10, 10
        s = build_projection(box, 0.5, up_axis=axis)
        r = rasterize(m, s)
        assert np.array_equal(r.color, rz.color), axis
        assert np.array_equal(r.valid, rz.valid), axis
        assert np.array_equal(r.facet, rz.facet), axis
        np.testing.assert_allclose(r.height, rz.height)


def test_height_clip_drops_out_of_range_surfaces():
    low = quad_mesh(const_atlas((200, 0, 0)), size_m=8.0, height=0.0)
    high = quad_mesh(const_atlas((0, 0, 200)), size_m=8.0, height=2.0)
    mesh = TexturedMesh(
        vertices=np.concatenate([low.vertices, high.vertices]),
        facets=np.concatenate([low.facets, high.facets + 4]),
        uv_vertices=np.concatenate([low.uv_vertices, high.uv_vertices]),
        uv_facets=np.concatenate([low.uv_facets, high.uv_facets + 4]),
        atlas_index=np.array([0, 0, 1, 1], dtype=np.int32),
        atlases=[low.atlases[0], high.atlases[0]]).validate()
    spec = build_projection(roi(0, 0, 8, 8, -0.5, 1.0), 0.5)
    r = rasterize(mesh, spec)
    assert (r.color[r.valid] == (200, 0, 0)).all()
    r2 = rasterize(mesh, spec, clip_height=False)
    assert (r2.color[r2.valid] == (0, 0, 200)).all()


def test_mesh_outside_roi_warns_and_renders_nothing(caplog):
    mesh = quad_mesh(const_atlas((1, 2, 3)), size_m=1.0)
    spec = build_projection(roi(10, 10, 11, 11), 0.5)
    with caplog.at_level(logging.WARNING):
        r = rasterize(mesh, spec)
    assert r.n_pixels == 0
    assert not r.valid.any()
    assert any("empty" in rec.message for rec in caplog.records)


def test_rasterize_is_deterministic():
    from roadmend.synthetic import random_mesh
    mesh = random_mesh(seed=11, max_facets=400)
    box = roi_from_mesh(mesh)
    spec = build_projection(box, (box[1, 0] - box[0, 0]) / 96)
    r1 = rasterize(mesh, spec)
    r2 = rasterize(mesh, spec)
    assert np.array_equal(r1.color, r2.color)
    assert np.array_equal(r1.facet, r2.facet)
    assert np.array_equal(r1.height, r2.height)
    assert np.array_equal(r1.valid, r2.valid)


def test_degenerate_facet_is_skipped():
    atlas = const_atlas((5, 5, 5))
    mesh = tri_mesh([[0, 0, 0], [4, 0, 0], [8, 0, 0]],
                    [[0, 0], [0.5, 0], [1, 0]], atlas)
    spec = build_projection(roi(0, 0, 8, 8), 1.0)
    r = rasterize(mesh, spec)
    assert r.n_pixels == 0
