"""Raster-to-atlas remapping and vehicle geometry flattening.

Every valid raster pixel belongs to exactly one facet.  Its barycentric
coordinates in the projected geometry triangle transfer affinely to the UV
triangle of the same facet, giving the texel t = T(p) that sourced the pixel.
Edited pixels are written back through T (nearest texel, collisions averaged),
which keeps untouched texels bit-identical.  Flattening refits masked
vehicle bumps onto a RANSAC ground plane.
"""

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


class RemapError(ValueError):
    pass


def barycentric(tri, p):
    """Normalized barycentric coordinates of 2-D point ``p`` in ``tri`` (3x2).

    Weights satisfy a + b + c = 1 and a*t0 + b*t1 + c*t2 = p.  Degenerate
    triangles (|signed area * 2| <= 1e-12) are an error.
    """
    tri = np.asarray(tri, dtype=np.float64)
    x0, y0 = tri[0]
    x1, y1 = tri[1]
    x2, y2 = tri[2]
    px, py = float(p[0]), float(p[1])
    det = (y1 - y2) * (x0 - x2) + (x2 - x1) * (y0 - y2)
    if abs(det) <= 1e-12:
        raise RemapError(f"degenerate triangle, doubled area {det}")
    a = ((y1 - y2) * (px - x2) + (x2 - x1) * (py - y2)) / det
    b = ((y2 - y0) * (px - x2) + (x0 - x2) * (py - y2)) / det
    return np.array([a, b, 1.0 - a - b])


@dataclass
class TexelMap:
    """Per-pixel texel targets: arrays indexed like the raster."""

    tex_x: np.ndarray         # (H, W) float64, texel center units
    tex_y: np.ndarray
    atlas_id: np.ndarray      # (H, W) int32, -1 where unmapped
    mapped: np.ndarray        # (H, W) bool
    n_unmapped: int = 0       # valid pixels with a degenerate triangle


def build_texel_map(mesh, raster, spec=None):
    """Precompute t = T(p) for every valid raster pixel.

    Barycentric weights come from the projected geometry triangle at the
    pixel center; the same weights interpolate the UV triangle, and the UV
    point converts to texel units (center convention, v flipped, clipped to
    the atlas).  Pixels on degenerate triangles stay unmapped and are counted.
    """
    spec = spec if spec is not None else raster.spec
    h, w = raster.valid.shape
    tex_x = np.zeros((h, w), dtype=np.float64)
    tex_y = np.zeros((h, w), dtype=np.float64)
    atlas_id = np.full((h, w), -1, dtype=np.int32)
    mapped = np.zeros((h, w), dtype=bool)

    ys, xs = np.nonzero(raster.valid)
    if len(ys) == 0:
        return TexelMap(tex_x, tex_y, atlas_id, mapped, 0)
    f = raster.facet[ys, xs]

    proj = spec.world_to_pixel(mesh.vertices)
    vidx = mesh.facets[f]                      # (N, 3)
    tx = proj[vidx, 0]                         # (N, 3)
    ty = proj[vidx, 1]
    px = xs + 0.5
    py = ys + 0.5

    det = ((ty[:, 1] - ty[:, 2]) * (tx[:, 0] - tx[:, 2])
           + (tx[:, 2] - tx[:, 1]) * (ty[:, 0] - ty[:, 2]))
    uvw = mesh.uv_vertices[mesh.uv_facets[f]]  # (N, 3, 2)
    dims = np.array([a.shape[:2] for a in mesh.atlases], dtype=np.float64)
    aid = mesh.atlas_index[f]
    ah = dims[aid, 0]
    aw = dims[aid, 1]

    # UV slivers cannot anchor a stable write target either
    uv_det = ((uvw[:, 1, 0] - uvw[:, 0, 0]) * (uvw[:, 2, 1] - uvw[:, 0, 1])
              - (uvw[:, 1, 1] - uvw[:, 0, 1]) * (uvw[:, 2, 0] - uvw[:, 0, 0]))
    ok = (np.abs(det) > 1e-12) & (np.abs(uv_det * aw * ah) > 1e-12)

    with np.errstate(invalid="ignore", divide="ignore"):
        a = ((ty[:, 1] - ty[:, 2]) * (px - tx[:, 2])
             + (tx[:, 2] - tx[:, 1]) * (py - ty[:, 2])) / det
        b = ((ty[:, 2] - ty[:, 0]) * (px - tx[:, 2])
             + (tx[:, 0] - tx[:, 2]) * (py - ty[:, 2])) / det
    c = 1.0 - a - b
    u = a * uvw[:, 0, 0] + b * uvw[:, 1, 0] + c * uvw[:, 2, 0]
    v = a * uvw[:, 0, 1] + b * uvw[:, 1, 1] + c * uvw[:, 2, 1]

    txl = np.clip(u * aw - 0.5, 0.0, aw - 1.0)
    tyl = np.clip((1.0 - v) * ah - 0.5, 0.0, ah - 1.0)

    sel = np.nonzero(ok)[0]
    tex_x[ys[sel], xs[sel]] = txl[sel]
    tex_y[ys[sel], xs[sel]] = tyl[sel]
    atlas_id[ys[sel], xs[sel]] = aid[sel]
    mapped[ys[sel], xs[sel]] = True
    n_unmapped = int(len(ys) - len(sel))
    if n_unmapped:
        log.warning("%d valid pixels on degenerate facets left unmapped",
                    n_unmapped)
    return TexelMap(tex_x, tex_y, atlas_id, mapped, n_unmapped)


def deintegrate(edited, edit_mask, tmap, mesh, stats=None):
    """Write edited raster pixels back into the texture atlases.

    Each edited pixel lands on its nearest texel; several pixels hitting the
    same texel are averaged (integer accumulation, rint).  Texels not hit stay
    bit-identical.  Returns a new mesh; ``stats`` (optional dict) receives
    counts of skipped unmapped pixels and collided texels.
    """
    edited = np.asarray(edited)
    edit_mask = np.asarray(edit_mask, dtype=bool)
    if edited.shape[:2] != tmap.mapped.shape or edit_mask.shape != tmap.mapped.shape:
        raise RemapError(
            f"raster dims {edited.shape[:2]} / mask {edit_mask.shape} do not "
            f"match texel map {tmap.mapped.shape}")

    out = mesh.copy()
    ys, xs = np.nonzero(edit_mask)
    n_skipped = 0
    n_collided = 0
    if len(ys):
        mpd = tmap.mapped[ys, xs]
        n_skipped = int((~mpd).sum())
        ys = ys[mpd]
        xs = xs[mpd]
    if len(ys):
        aid = tmap.atlas_id[ys, xs]
        jx = np.rint(tmap.tex_x[ys, xs]).astype(np.int64)
        jy = np.rint(tmap.tex_y[ys, xs]).astype(np.int64)
        cols = edited[ys, xs].astype(np.int64)
        for i, atl in enumerate(out.atlases):
            pick = aid == i
            if not pick.any():
                continue
            ah, aw = atl.shape[:2]
            flat = jy[pick] * aw + jx[pick]
            order = np.argsort(flat, kind="stable")
            flat_s = flat[order]
            cols_s = cols[pick][order]
            uniq, start, cnt = np.unique(flat_s, return_index=True,
                                         return_counts=True)
            acc = np.add.reduceat(cols_s, start, axis=0)
            vals = np.rint(acc / cnt[:, None]).astype(np.uint8)
            atl.reshape(-1, 3)[uniq] = vals
            n_collided += int((cnt > 1).sum())

    if stats is not None:
        stats["deintegrate_skipped_pixels"] = n_skipped
        stats["deintegrate_collided_texels"] = n_collided
    if n_skipped:
        log.warning("%d edited pixels had no texel record and were skipped",
                    n_skipped)
    return out


def collect_masked_facets(raster_f, mask):
    """Facet indices appearing under at least one masked pixel."""
    raster_f = np.asarray(raster_f)
    mask = np.asarray(mask, dtype=bool)
    if raster_f.shape != mask.shape:
        raise RemapError(
            f"facet raster {raster_f.shape} does not match mask {mask.shape}")
    hit = raster_f[mask]
    return set(int(i) for i in np.unique(hit[hit >= 0]))


def _fit_plane_lstsq(g1, g2, hh):
    A = np.column_stack([g1, g2, np.ones_like(g1)])
    coef, *_ = np.linalg.lstsq(A, hh, rcond=None)
    return coef


def fit_ground_plane(points, threshold, seed=0, iterations=1000):
    """RANSAC plane h = a*g1 + b*g2 + c over (N, 3) ground-coordinate points.

    Vertical residual, 3-point minimal samples, least-squares refit on the
    best consensus set.  Needs at least 3 points.
    """
    points = np.asarray(points, dtype=np.float64)
    if len(points) < 3:
        raise RemapError("cannot fit ground plane: fewer than 3 support vertices")
    g1, g2, hh = points[:, 0], points[:, 1], points[:, 2]
    n = len(points)
    rng = np.random.default_rng(seed)

    best_count = -1
    best_inl = None
    for _ in range(iterations):
        idx = rng.choice(n, size=3, replace=False)
        A = np.column_stack([g1[idx], g2[idx], np.ones(3)])
        if abs(np.linalg.det(A)) <= 1e-12:
            continue
        coef = np.linalg.solve(A, hh[idx])
        resid = np.abs(g1 * coef[0] + g2 * coef[1] + coef[2] - hh)
        inl = resid <= threshold
        cnt = int(inl.sum())
        if cnt > best_count:
            best_count = cnt
            best_inl = inl
    if best_inl is None or best_count < 3:
        # all-collinear support: fall back to a direct least-squares fit
        return _fit_plane_lstsq(g1, g2, hh)
    return _fit_plane_lstsq(g1[best_inl], g2[best_inl], hh[best_inl])


def flatten_vehicle_geometry(mesh, masked_facets, raster, mask, spec=None,
                             seed=0):
    """Drop masked vehicle geometry onto the fitted ground plane.

    The plane is fit to vertices of rendered facets outside the masked set
    (inlier threshold 2 x GSD, 1000 seeded iterations).  Only vertices used
    exclusively by masked facets move; shared boundary vertices and all
    connectivity stay untouched.
    """
    spec = spec if spec is not None else raster.spec
    masked_facets = set(int(i) for i in masked_facets)
    out = mesh.copy()
    if not masked_facets:
        return out

    rendered = set(int(i) for i in
                   np.unique(raster.facet[raster.facet >= 0]))
    support_facets = sorted(rendered - masked_facets)
    g1c, g2c, upc = spec.ground_cols()
    if support_facets:
        sv = np.unique(mesh.facets[support_facets].ravel())
    else:
        sv = np.array([], dtype=np.int64)
    if len(sv) < 3:
        raise RemapError("cannot fit ground plane: fewer than 3 support vertices")

    pts = np.column_stack([mesh.vertices[sv, g1c], mesh.vertices[sv, g2c],
                           mesh.vertices[sv, upc]])
    coef = fit_ground_plane(pts, threshold=2.0 * spec.gsd, seed=seed)

    used_by_masked = np.zeros(len(mesh.vertices), dtype=bool)
    used_by_other = np.zeros(len(mesh.vertices), dtype=bool)
    for k in range(mesh.n_facets):
        tgt = used_by_masked if k in masked_facets else used_by_other
        tgt[mesh.facets[k]] = True
    move = np.nonzero(used_by_masked & ~used_by_other)[0]

    if len(move):
        vg1 = out.vertices[move, g1c]
        vg2 = out.vertices[move, g2c]
        out.vertices[move, upc] = vg1 * coef[0] + vg2 * coef[1] + coef[2]
        log.info("flattened %d vertices of %d masked facets",
                 len(move), len(masked_facets))
    return out
