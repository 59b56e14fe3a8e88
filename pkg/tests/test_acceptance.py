"""Whole-system acceptance checks, one verdict line per property.

Each test verifies one gate on the shipped behaviour (exact round-trips,
independent brute-force oracles, seeded quality benchmarks, wall-time
bounds) and prints a single `[PASS]`/`[FAIL]` line before asserting, so a
`-v` run doubles as a scoreboard.  Fixtures are seeded and deterministic.
"""

import json
import time

import numpy as np
import pytest
from numpy.lib.stride_tricks import sliding_window_view

from roadmend.backend import get_kernels
from roadmend.complete import (
    CompletionParams,
    complete_image,
    patch_energy,
)
from roadmend.mask import BoundingBox, mask_from_boxes, save_boxes
from roadmend.mesh_io import save_textured_mesh
from roadmend.metrics import psnr, ssim
from roadmend.pipeline import PipelineConfig, run_pipeline
from roadmend.raster import build_projection, rasterize, roi_from_mesh
from roadmend.regularity import gray601_u8, prewitt_edges, ransac_directions
from roadmend.remap import (
    build_texel_map,
    collect_masked_facets,
    deintegrate,
    flatten_vehicle_geometry,
)
from roadmend.synthetic import (
    bump_mesh,
    center_hole,
    dashed_stripe_image,
    duplicated_texture,
    random_mesh,
    road_scene,
    stripe_image,
)

GSD = 0.125

_CAPSYS = None


@pytest.fixture(autouse=True)
def _verdicts_bypass_capture(capsys):
    # verdict lines must reach the terminal even for passing tests
    global _CAPSYS
    _CAPSYS = capsys
    yield
    _CAPSYS = None


def _verdict(ok, label):
    line = f"\n[{'PASS' if ok else 'FAIL'}] {label}"
    if _CAPSYS is not None:
        with _CAPSYS.disabled():
            print(line, flush=True)
    else:
        print(line, flush=True)
    assert ok, label


def test_empty_edit_roundtrip_keeps_atlases_byte_identical():
    t0 = time.perf_counter()
    ok = True
    for seed in range(25):
        mesh = random_mesh(seed, max_facets=1000)
        spec = build_projection(roi_from_mesh(mesh), GSD)
        raster = rasterize(mesh, spec)
        tmap = build_texel_map(mesh, raster)
        stats = {}
        out = deintegrate(raster.color, np.zeros(raster.valid.shape, bool),
                          tmap, mesh, stats)
        ok &= all(np.array_equal(a, b)
                  for a, b in zip(out.atlases, mesh.atlases))
        ok &= stats["deintegrate_skipped_pixels"] == 0
    dt = time.perf_counter() - t0
    _verdict(ok and dt < 10.0,
             "empty-edit round-trip leaves the atlases of 25 random meshes "
             f"byte-identical ({dt:.1f}s < 10s)")


def test_texel_map_matches_brute_force_barycentric_solve():
    mesh = random_mesh(777, max_facets=1000)
    spec = build_projection(roi_from_mesh(mesh), GSD)
    raster = rasterize(mesh, spec)
    tmap = build_texel_map(mesh, raster)

    rng = np.random.default_rng(42)
    py_, px_ = np.nonzero(raster.valid & tmap.mapped)
    fids = raster.facet[py_, px_]
    facets = np.unique(fids)
    assert len(facets) >= 50
    pick = rng.choice(facets, size=50, replace=False)
    proj = spec.world_to_pixel(mesh.vertices)

    worst = 0.0
    n_checked = 0
    for f in pick:
        sel = np.nonzero(fids == f)[0]
        take = rng.choice(sel, size=2, replace=len(sel) < 2)
        for t in take:
            x, y = int(px_[t]), int(py_[t])
            tri = proj[mesh.facets[f], :2]
            m = np.column_stack([tri[0] - tri[2], tri[1] - tri[2]])
            ab = np.linalg.solve(m, np.array([x + 0.5, y + 0.5]) - tri[2])
            w3 = np.array([ab[0], ab[1], 1.0 - ab[0] - ab[1]])
            uv = w3 @ mesh.uv_vertices[mesh.uv_facets[f]]
            atl = mesh.atlases[mesh.atlas_index[f]]
            ah, aw = atl.shape[:2]
            bx = np.clip(uv[0] * aw - 0.5, 0.0, aw - 1.0)
            by = np.clip((1.0 - uv[1]) * ah - 0.5, 0.0, ah - 1.0)
            worst = max(worst, abs(bx - tmap.tex_x[y, x]),
                        abs(by - tmap.tex_y[y, x]))
            assert tmap.atlas_id[y, x] == mesh.atlas_index[f]
            n_checked += 1
    _verdict(worst <= 1e-6 and n_checked == 100,
             f"pixel-to-texel map matches an independent barycentric solve on "
             f"{n_checked} pixels across 50 facets (worst {worst:.2e} texel)")


def test_energy_terms_match_hand_examples():
    params = CompletionParams()

    # length prior: v = (3,4), boundary pixel, 800x800 -> sigma_c = 100
    img = np.zeros((800, 800, 3), np.uint8)
    known = np.ones((800, 800), bool)
    void = np.zeros((800, 800), bool)
    void[400, 400] = True
    known[400, 400] = False
    dist = np.zeros((800, 800))
    _, _, e_p, _ = patch_energy(img, known, void, dist, (), params,
                                (400, 400), (3, 4))
    ok = abs(e_p - 0.0025) <= 1e-9

    # direction prior: one horizontal direction, offset along the diagonal
    _, _, _, e_r = patch_energy(img, known, void, dist, (0.0,), params,
                                (400, 400), (3, 3))
    ok &= abs(e_r - (1.0 - np.cos(np.pi / 4.0))) <= 1e-9

    # appearance term vanishes on exactly duplicated content
    dup = duplicated_texture(size=256, shift=100, seed=3)
    known = np.ones((256, 256), bool)
    void = np.zeros((256, 256), bool)
    void[128, 60] = True
    known[128, 60] = False
    dist = np.zeros((256, 256))
    e, e_a, e_p, e_r = patch_energy(dup, known, void, dist, (0.0,), params,
                                    (60, 128), (100, 0))
    ok &= e_a == 0.0 and e_r == 0.0 and e == params.lambda1 * e_p
    _verdict(ok, "energy terms reproduce hand-computed length/direction "
                 "examples to 1e-9 and vanish on duplicated content")


def test_pass_energy_never_increases_in_full_runs():
    kern = get_kernels()
    checked = violations = 0
    for seed in range(10):
        img = stripe_image(size=48, seed=seed)
        void = center_hole(48, 10)
        valid = np.ones((48, 48), bool)
        events = []
        complete_image(img, valid, void, angles=(3 * np.pi / 4,),
                       params=CompletionParams(seed=seed), hook=events.append)
        for ev in events:
            p = ev["params"]
            dc = np.ascontiguousarray(np.cos(ev["angles"]))
            ds = np.ascontiguousarray(np.sin(ev["angles"]))
            ch = (ev["nnf_before"] != ev["nnf_after"]).any(axis=2) & ev["void"]
            for y, x in zip(*np.nonzero(ch)):
                args = (ev["img"], ev["wint"], ev["dist"], int(x), int(y))
                tail = (p.lambda1, p.lambda2, ev["sigma_c2"], dc, ds,
                        p.literal_regularity)
                vb = ev["nnf_before"][y, x]
                va = ev["nnf_after"][y, x]
                eb = kern.eval_energy(*args, int(vb[0]), int(vb[1]), *tail)[0]
                ea = kern.eval_energy(*args, int(va[0]), int(va[1]), *tail)[0]
                checked += 1
                violations += ea > eb
    _verdict(violations == 0 and checked > 0,
             f"per-pixel energy never increased across 10 full runs "
             f"({checked} adoptions checked, {violations} violations)")


def test_converged_nnf_energy_near_exhaustive_optimum():
    kern = get_kernels()
    t0 = time.perf_counter()
    half = CompletionParams().patch_size // 2
    patch = CompletionParams().patch_size
    ratios = []
    for seed in range(5):
        img = stripe_image(size=48, seed=seed)
        void = center_hole(48, 10)
        valid = np.ones((48, 48), bool)
        events = []
        # 20 passes: adoption count reaches zero well before the last pass,
        # so the field being scored is the converged one
        complete_image(img, valid, void, angles=(),
                       params=CompletionParams(seed=seed, iterations=20),
                       hook=events.append)
        fin = [ev for ev in events if ev["img"].shape[0] == 48][-1]
        imgf = fin["img"]
        nnf = fin["nnf_after"]
        known = fin["known"]
        dist = fin["dist"]
        wint = fin["wint"]
        s2 = fin["sigma_c2"]
        lam1 = fin["params"].lambda1

        pad = np.full((48 + 2 * half, 48 + 2 * half, 3), np.nan)
        pad[half:-half, half:-half] = imgf
        wins = sliding_window_view(pad, (patch, patch), axis=(0, 1))
        den = (~np.isnan(wins[:, :, 0]) * wint).sum(axis=(2, 3))
        sy, sx = np.mgrid[0:48, 0:48]
        no_dirs = np.empty(0)

        conv = opt = 0.0
        for y, x in zip(*np.nonzero(fin["void"])):
            tgt = imgf[y - half:y + half + 1, x - half:x + half + 1]
            tgt = tgt.astype(np.float64).transpose(2, 0, 1)
            num = np.nansum(np.abs(wins - tgt[None, None]) * wint,
                            axis=(2, 3, 4))
            e_all = (num / (3.0 * den)
                     + lam1 * ((sx - x) ** 2 + (sy - y) ** 2)
                     / (dist[y, x] ** 2 + s2))
            opt += e_all[known].min()
            conv += kern.eval_energy(imgf, wint, dist, int(x), int(y),
                                     int(nnf[y, x, 0]), int(nnf[y, x, 1]),
                                     lam1, 0.5, s2, no_dirs, no_dirs,
                                     False)[0]
        ratios.append(conv / opt)
    dt = time.perf_counter() - t0
    _verdict(max(ratios) <= 1.10 and dt < 120.0,
             f"converged offset field within 10% of the exhaustive optimum "
             f"on 5 seeds (worst ratio {max(ratios):.4f}, {dt:.1f}s < 120s)")


def test_guided_completion_beats_unguided_on_stripes():
    t0 = time.perf_counter()
    angles = (np.pi / 4.0, 3.0 * np.pi / 4.0)
    void = center_hole(512, 64)
    valid = np.ones((512, 512), bool)
    ok25 = okpair = 0
    for seed in range(10):
        truth = dashed_stripe_image(seed=seed)
        guided, _ = complete_image(
            truth, valid, void, angles=angles,
            params=CompletionParams(seed=seed, max_levels=2, iterations=3))
        plain, _ = complete_image(
            truth, valid, void, angles=angles,
            params=CompletionParams(seed=seed, max_levels=2, iterations=3,
                                    directional_guidance=False,
                                    linear_ordering=False))
        ok25 += psnr(guided, truth, void) >= 25.0
        okpair += psnr(guided, truth, void) >= psnr(plain, truth, void)
    dt = time.perf_counter() - t0
    _verdict(ok25 >= 8 and okpair >= 8 and dt < 300.0,
             f"diagonal-stripe hole fill: PSNR >= 25 dB on {ok25}/10 seeds, "
             f"guided >= unguided on {okpair}/10 paired seeds "
             f"({dt:.1f}s < 300s)")


def test_planted_directions_recovered_within_two_degrees():
    rng = np.random.default_rng(2026)
    planted = rng.uniform(0.0, np.pi, size=10)
    n_ok = 0
    for theta in planted:
        for _ in range(10):
            r = rng.uniform(10.0, 60.0, 42) * rng.choice([-1.0, 1.0], 42)
            inl = (np.column_stack([r * np.cos(theta), r * np.sin(theta)])
                   + rng.normal(0.0, 1.0, (42, 2)))
            out = rng.uniform(-60.0, 60.0, (18, 2))
            offs = np.vstack([inl, out])
            got, _ = ransac_directions(offs, seed=int(rng.integers(1 << 31)))
            if len(got):
                d = np.min(np.abs(((got - theta) + np.pi / 2.0) % np.pi
                                  - np.pi / 2.0))
                n_ok += np.rad2deg(d) <= 2.0
    _verdict(n_ok >= 95,
             f"planted direction recovered within 2 degrees under 30% "
             f"outliers in {n_ok}/100 trials")


def test_edge_filter_matches_direct_convolution():
    kx = np.array([[1, 0, -1]] * 3, dtype=np.int64)
    ky = kx.T
    ok = True
    for seed in range(20):
        rng = np.random.default_rng(seed)
        img = rng.integers(0, 256, (64, 64, 3), dtype=np.uint8)
        void = np.zeros((64, 64), bool)
        got = prewitt_edges(img, void)
        gray = gray601_u8(img).astype(np.int64)
        brute = np.zeros((64, 64), bool)
        for y in range(1, 63):
            for x in range(1, 63):
                win = gray[y - 1:y + 2, x - 1:x + 2]
                gx = int((win * kx).sum())
                gy = int((win * ky).sum())
                brute[y, x] = gx * gx + gy * gy >= 40 * 40
        ok &= np.array_equal(got, brute)
    _verdict(ok, "edge filter equals direct 3x3 convolution exactly on "
                 "20 random images")


def test_mask_dilation_covers_expected_pixel_centers():
    box = BoundingBox(10, 10, 30, 30)
    d = box.dilated(0.10)
    ok = (d.x_min, d.y_min, d.x_max, d.y_max) == (9.0, 9.0, 31.0, 31.0)
    got = mask_from_boxes([box], (40, 40), dilation=0.10)
    brute = np.zeros((40, 40), bool)
    for y in range(40):
        for x in range(40):
            brute[y, x] = (9.0 <= x + 0.5 <= 31.0) and (9.0 <= y + 0.5 <= 31.0)
    ok &= np.array_equal(got, brute)
    _verdict(ok, "10% dilation of an interior box masks exactly the pixel "
                 "centers inside the grown box (brute-force verified)")


def test_bump_flattened_onto_ground_plane():
    mesh, in_bump = bump_mesh()
    spec = build_projection(roi_from_mesh(mesh), GSD)
    raster = rasterize(mesh, spec)
    h, w = raster.valid.shape
    xx, yy = np.meshgrid(np.arange(w), np.arange(h))
    g1, g2 = spec.pixel_to_ground(xx + 0.5, yy + 0.5)
    mask = ((g1 >= 7.0) & (g1 <= 13.0) & (g2 >= 7.0) & (g2 <= 13.0)
            & raster.valid)
    facets = collect_masked_facets(raster.facet, mask)
    out = flatten_vehicle_geometry(mesh, facets, raster, mask)

    ok = bool(np.all(np.abs(out.vertices[in_bump, 2] - 5.0) <= 2.0 * GSD))
    used = np.zeros(len(mesh.vertices), bool)
    used[mesh.facets[list(facets)].ravel()] = True
    ok &= np.array_equal(out.vertices[~used], mesh.vertices[~used])
    worst = float(np.abs(out.vertices[in_bump, 2] - 5.0).max())
    _verdict(ok, f"0.5 m bump flattened onto the ground plane to within "
                 f"2xGSD (worst {worst:.2e} m); untouched vertices "
                 f"bit-identical")


def test_same_seed_pipeline_runs_byte_identical(tmp_path):
    mesh, cars = road_scene()
    bundle = tmp_path / "bundle" / "scene.obj"
    save_textured_mesh(mesh, bundle)
    boxes_path = tmp_path / "boxes.json"
    save_boxes(boxes_path, [BoundingBox(*c) for c in cars], 256, 256)

    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        run_pipeline(PipelineConfig(input=str(bundle), out=str(out),
                                    bboxes_path=str(boxes_path), gsd=GSD,
                                    seed=5))
        outs.append(out)

    rels = [sorted(p.relative_to(o) for p in o.rglob("*") if p.is_file())
            for o in outs]
    ok = rels[0] == rels[1] and len(rels[0]) > 0
    n_binary = 0
    for rel in rels[0]:
        fa, fb = outs[0] / rel, outs[1] / rel
        if rel.name == "report.json":
            ra, rb = (json.loads(f.read_text()) for f in (fa, fb))
            for r in (ra, rb):
                r.pop("timings_s", None)
                r["params"]["out"] = None
                if "save" in r["stages"]:
                    r["stages"]["save"]["corrected"] = None
            ok &= ra == rb
        else:
            ok &= fa.read_bytes() == fb.read_bytes()
            n_binary += 1
    _verdict(ok and n_binary >= 6,
             f"two same-seed pipeline runs byte-identical across "
             f"{n_binary} artifacts")


def test_metric_reference_values():
    rng = np.random.default_rng(11)
    a = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
    lo = np.zeros((32, 32, 3), np.uint8)
    hi = np.full((32, 32, 3), 255, np.uint8)
    ok = psnr(a, a) == 99.0
    ok &= psnr(lo, hi) == 0.0
    ok &= ssim(a, a) == 1.0
    _verdict(ok, "metric anchors hold: psnr(a,a)=99, psnr(0,255)=0, "
                 "ssim(a,a)=1")
