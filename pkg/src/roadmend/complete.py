"""Structure-aware PatchMatch completion of the void region.

Coarse-to-fine scheme: box-downsampled pyramid until the image max dimension
drops to 64 or the void's bounding box to 8; at the coarsest level void
colors bootstrap from distance-weighted boundary interpolation and the
offset field from valid random draws.  Each level runs refinement passes in
edge-priority order (void pixels near strong known edges first) interleaved
with patch-voting synthesis, then the field doubles up to the next level.

Per-pixel energy is E_a + lambda1 * E_p + lambda2 * E_r: weighted patch
dissimilarity, an offset-length prior relaxed with distance into the void,
and the angular deviation of the offset from the nearest repeat direction.
Random-search candidates draw from 2W-wide rectangular bands along those
directions with geometrically shrinking radii.

All randomness comes from one generator in a fixed draw order, and the hot
loops live in the kernel backends, so results are byte-reproducible across
runs and backends.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import distance_transform_edt

from .backend import get_kernels
from .regularity import PREWITT_THRESHOLD, prewitt_edges

log = logging.getLogger(__name__)

WEIGHT_SCALE = 65536


class CompleteError(ValueError):
    pass


@dataclass
class CompletionParams:
    patch_size: int = 21
    lambda1: float = 5e-4
    lambda2: float = 0.5
    iterations: int = 5
    sigma_w: float = 0.0          # 0 -> patch_size / 4
    seed: int = 0
    synthesis: str = "vote"       # "vote" | "copy"
    directional_guidance: bool = True
    linear_ordering: bool = True
    literal_regularity: bool = False   # signed-cos regularity term
    edge_threshold: int = PREWITT_THRESHOLD
    coarse_dim_cap: int = 64
    coarse_void_cap: int = 8
    max_levels: int = 0           # 0 -> no cap

    def validate(self):
        if self.patch_size < 3 or self.patch_size % 2 == 0:
            raise CompleteError(
                f"patch size must be odd and >= 3, got {self.patch_size}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise CompleteError("lambda weights must be >= 0")
        if self.iterations < 1:
            raise CompleteError("need at least one iteration per level")
        if self.synthesis not in ("vote", "copy"):
            raise CompleteError(f"unknown synthesis mode {self.synthesis!r}")
        return self

    @property
    def sigma(self):
        return self.sigma_w if self.sigma_w > 0 else self.patch_size / 4.0


def gaussian_patch_weights(patch_size, sigma):
    """Fixed-point Gaussian window, int64, minimum weight 1.

    Integer weights make every weighted sum exact, which is what keeps the
    two kernel backends bit-identical.
    """
    r = patch_size // 2
    g = np.arange(-r, r + 1, dtype=np.float64)
    d2 = g[:, None] ** 2 + g[None, :] ** 2
    w = np.exp(-d2 / (2.0 * sigma * sigma))
    wint = np.rint(w * WEIGHT_SCALE).astype(np.int64)
    return np.maximum(wint, 1)


def radius_tiers(maxdim):
    """Search radii maxdim * (1/2)^r for r = 1, 2, ... while >= 1."""
    radii = []
    r = 1
    while True:
        rad = maxdim * 0.5 ** r
        if rad < 1.0:
            break
        radii.append(rad)
        r += 1
    return np.array(radii, dtype=np.float64)


def guided_random_candidates(p, angles, dims, params, draws):
    """Candidate pixels for one target, mirroring the kernel's sampling.

    ``draws`` is the (tiers, 3) slice of the per-pass random block: column 0
    picks the direction, 1 the position along it, 2 the position across.
    Candidates fall in the 2W-wide band of length 2*radius centered on p;
    out-of-image candidates are dropped, not resampled.  Used by tests and
    debug dumps; the kernels inline the same arithmetic.
    """
    h, w = dims
    px, py = p
    radii = radius_tiers(max(w, h))
    out = []
    for t in range(len(radii)):
        u0, ua, ub = draws[t]
        if params.directional_guidance and len(angles):
            idx = min(int(u0 * len(angles)), len(angles) - 1)
            theta = angles[idx]
        else:
            theta = u0 * 2.0 * np.pi
        dc = np.cos(theta)
        ds = np.sin(theta)
        a = (2.0 * ua - 1.0) * radii[t]
        b = (2.0 * ub - 1.0) * float(params.patch_size)
        cx = int(np.rint(px + (a * dc - b * ds)))
        cy = int(np.rint(py + (a * ds + b * dc)))
        if 0 <= cx < w and 0 <= cy < h:
            out.append((cx, cy))
    return out


def downsample_level(img, valid, void):
    """One pyramid step: box-average of valid children, factor 2.

    A coarse pixel is valid iff any child is valid and void iff any child is
    void; its color averages the valid children (so known coarse colors only
    ever mix known fine pixels).
    """
    h, w = valid.shape
    h2, w2 = (h + 1) // 2, (w + 1) // 2
    pimg = np.zeros((h2 * 2, w2 * 2, 3), dtype=np.int64)
    pval = np.zeros((h2 * 2, w2 * 2), dtype=bool)
    pvoid = np.zeros((h2 * 2, w2 * 2), dtype=bool)
    pimg[:h, :w] = img
    pval[:h, :w] = valid
    pvoid[:h, :w] = void

    q = pval.reshape(h2, 2, w2, 2)
    cnt = q.sum(axis=(1, 3))
    csum = (pimg * pval[..., None]).reshape(h2, 2, w2, 2, 3).sum(axis=(1, 3))
    out = np.zeros((h2, w2, 3), dtype=np.uint8)
    has = cnt > 0
    out[has] = np.rint(csum[has] / cnt[has, None]).astype(np.uint8)
    return (out, has, pvoid.reshape(h2, 2, w2, 2).any(axis=(1, 3)))


def _void_extent(void):
    ys, xs = np.nonzero(void)
    if len(ys) == 0:
        return 0
    return max(int(ys.max() - ys.min() + 1), int(xs.max() - xs.min() + 1))


def build_pyramid(img, valid, void, params):
    """Finest-first list of (img, valid, void) levels per the stop rule."""
    levels = [(np.ascontiguousarray(img), np.ascontiguousarray(valid),
               np.ascontiguousarray(void))]
    while True:
        cimg, cval, cvoid = levels[-1]
        h, w = cval.shape
        if max(h, w) <= params.coarse_dim_cap:
            break
        if _void_extent(cvoid) <= params.coarse_void_cap:
            break
        if params.max_levels and len(levels) >= params.max_levels:
            break
        levels.append(downsample_level(cimg, cval, cvoid))
    return levels


def init_void_colors(img, known, void):
    """Bootstrap void colors by 1/d^2 interpolation of the known boundary."""
    out = img.copy()
    vy, vx = np.nonzero(void)
    if len(vy) == 0:
        return out
    ky, kx = np.nonzero(known)
    if len(ky) == 0:
        raise CompleteError("no known pixels to interpolate from")

    # known pixels 8-adjacent to the void; all known pixels as fallback
    grow = void.copy()
    grow[1:, :] |= void[:-1, :]
    grow[:-1, :] |= void[1:, :]
    grow[:, 1:] |= grow[:, :-1].copy()
    grow[:, :-1] |= grow[:, 1:].copy()
    by, bx = np.nonzero(grow & known)
    if len(by) == 0:
        by, bx = ky, kx

    d2 = ((vy[:, None] - by[None, :]).astype(np.float64) ** 2
          + (vx[:, None] - bx[None, :]) ** 2)
    wgt = 1.0 / d2
    cols = img[by, bx].astype(np.float64)
    num = wgt @ cols
    den = wgt.sum(axis=1)
    out[vy, vx] = np.rint(num / den[:, None]).astype(np.uint8)
    return out


def _nearest_known_offsets(known):
    iy, ix = distance_transform_edt(~known, return_indices=True)[1]
    return ix, iy


def init_nnf(known, void, rng, tries=100):
    """Uniform-random valid offsets; nearest known pixel after 100 misses."""
    h, w = known.shape
    nnf = np.zeros((h, w, 2), dtype=np.int32)
    near_x, near_y = _nearest_known_offsets(known)
    vy, vx = np.nonzero(void)
    for py, px in zip(vy, vx):
        hit = False
        for _ in range(tries):
            qx = int(rng.integers(w))
            qy = int(rng.integers(h))
            if known[qy, qx]:
                nnf[py, px, 0] = qx - px
                nnf[py, px, 1] = qy - py
                hit = True
                break
        if not hit:
            nnf[py, px, 0] = int(near_x[py, px]) - px
            nnf[py, px, 1] = int(near_y[py, px]) - py
    return nnf


def upsample_nnf(nnf_c, known, void, rng, tries=100):
    """Double offsets, nearest-neighbor upsample, re-validate per pixel."""
    h, w = known.shape
    up = np.repeat(np.repeat(nnf_c * 2, 2, axis=0), 2, axis=1)[:h, :w]
    nnf = np.ascontiguousarray(up.astype(np.int32))
    near_x, near_y = _nearest_known_offsets(known)
    vy, vx = np.nonzero(void)
    ty = vy + nnf[vy, vx, 1]
    tx = vx + nnf[vy, vx, 0]
    ok = (ty >= 0) & (ty < h) & (tx >= 0) & (tx < w)
    ok[ok] = known[ty[ok], tx[ok]]
    for py, px in zip(vy[~ok], vx[~ok]):
        hit = False
        for _ in range(tries):
            qx = int(rng.integers(w))
            qy = int(rng.integers(h))
            if known[qy, qx]:
                nnf[py, px, 0] = qx - px
                nnf[py, px, 1] = qy - py
                hit = True
                break
        if not hit:
            nnf[py, px, 0] = int(near_x[py, px]) - px
            nnf[py, px, 1] = int(near_y[py, px]) - py
    return nnf


def check_nnf(nnf, known, void):
    """True iff every void pixel's offset lands on a known pixel."""
    h, w = known.shape
    vy, vx = np.nonzero(void)
    ty = vy + nnf[vy, vx, 1]
    tx = vx + nnf[vy, vx, 0]
    ok = (ty >= 0) & (ty < h) & (tx >= 0) & (tx < w)
    if not ok.all():
        return False
    return bool(known[ty, tx].all())


def build_order(edges, void, dist_known, patch_size, linear_ordering,
                pass_index):
    """Void pixel processing order as an (N, 2) int array of (x, y).

    Priority order: descending sum of edge responses in the WxW window, ties
    to smaller distance-from-known, then row-major.  With linear ordering
    ablated the order is plain scanline, reversed on even passes.
    """
    vy, vx = np.nonzero(void)
    if len(vy) == 0:
        return np.zeros((0, 2), dtype=np.int32)
    if not linear_ordering:
        order = np.column_stack([vx, vy]).astype(np.int32)
        if pass_index % 2 == 0:
            order = order[::-1]
        return np.ascontiguousarray(order)

    r = patch_size // 2
    h, w = void.shape
    pad = np.zeros((h + 2 * r + 1, w + 2 * r + 1), dtype=np.int64)
    pad[r + 1:r + 1 + h, r + 1:r + 1 + w] = edges
    ii = pad.cumsum(axis=0).cumsum(axis=1)
    y0 = vy
    x0 = vx
    score = (ii[y0 + 2 * r + 1, x0 + 2 * r + 1] - ii[y0, x0 + 2 * r + 1]
             - ii[y0 + 2 * r + 1, x0] + ii[y0, x0])
    dk = dist_known[vy, vx]
    idx = np.lexsort((vx, vy, dk, -score))
    return np.ascontiguousarray(
        np.column_stack([vx[idx], vy[idx]]).astype(np.int32))


def _angles_arrays(angles):
    angles = np.asarray(angles, dtype=np.float64).ravel()
    return (np.ascontiguousarray(np.cos(angles)),
            np.ascontiguousarray(np.sin(angles)))


def patch_energy(img, known, void, dist, angles, params, p, v):
    """Energy terms (E, E_a, E_p, E_r) of offset ``v`` at pixel ``p``.

    Thin assert-guarded wrapper over the kernel used by tests and debugging;
    sigma_c derives from the image dimensions as max(w, h) / 8.
    """
    px, py = int(p[0]), int(p[1])
    vx, vy = int(v[0]), int(v[1])
    h, w = known.shape
    assert void[py, px], "target pixel must be void"
    assert 0 <= px + vx < w and 0 <= py + vy < h, "source out of bounds"
    assert known[py + vy, px + vx], "source pixel must be known"
    wint = gaussian_patch_weights(params.patch_size, params.sigma)
    sigma_c = max(w, h) / 8.0
    dirs_cos, dirs_sin = _angles_arrays(angles)
    kern = get_kernels()
    return kern.eval_energy(
        np.ascontiguousarray(img), wint, np.ascontiguousarray(dist),
        px, py, vx, vy, params.lambda1, params.lambda2,
        sigma_c * sigma_c, dirs_cos, dirs_sin, params.literal_regularity)


def _synthesize(img, known, void, nnf, wint, mode):
    if mode == "copy":
        out = img.copy()
        vy, vx = np.nonzero(void)
        out[vy, vx] = img[vy + nnf[vy, vx, 1], vx + nnf[vy, vx, 0]]
        return out
    return get_kernels().synthesize_votes(img, known, void, nnf, wint)


def complete_image(img, valid, void, angles=(), params=None, hook=None):
    """Fill ``void`` pixels of ``img``; returns (completed, info).

    ``valid`` marks pixels backed by geometry; sources only ever come from
    valid non-void pixels.  ``angles`` are repeat directions in radians.
    Pixels outside the void are returned byte-identical.  ``hook``, if
    given, is called with a dict after every refinement pass (tests use it
    to audit per-pixel energy monotonicity).
    """
    params = (params or CompletionParams()).validate()
    img = np.ascontiguousarray(np.asarray(img, dtype=np.uint8))
    valid = np.asarray(valid, dtype=bool)
    void = np.asarray(void, dtype=bool) & valid
    info = {"seed": params.seed, "levels": 0, "adoptions": [],
            "level_dims": [], "n_void": int(void.sum())}
    if not void.any():
        info["note"] = "empty void; nothing to do"
        return img.copy(), info
    if not (valid & ~void).any():
        raise CompleteError("no known pixels to copy from")

    kern = get_kernels()
    wint = gaussian_patch_weights(params.patch_size, params.sigma)
    dirs_cos, dirs_sin = _angles_arrays(angles)
    rng = np.random.default_rng(params.seed)
    band_hw = float(params.patch_size)

    levels = build_pyramid(img, valid, void, params)
    info["levels"] = len(levels)
    info["level_dims"] = [list(l[1].shape) for l in levels]

    nnf = None
    lvl_img = None
    for li in range(len(levels) - 1, -1, -1):
        limg, lvalid, lvoid = levels[li]
        known = lvalid & ~lvoid
        if not known.any():
            raise CompleteError(f"level {li}: no known pixels")
        h, w = known.shape
        dist = distance_transform_edt(lvoid).astype(np.float64)
        dist_known = distance_transform_edt(~known).astype(np.float64)
        sigma_c = max(w, h) / 8.0
        sigma_c2 = sigma_c * sigma_c
        radii = radius_tiers(max(w, h))
        n_tiers = len(radii)

        if li == len(levels) - 1:
            lvl_img = init_void_colors(limg, known, lvoid)
            nnf = init_nnf(known, lvoid, rng)
        else:
            nnf = upsample_nnf(nnf, known, lvoid, rng)
            lvl_img = _synthesize(limg.copy(), known, lvoid, nnf, wint,
                                  params.synthesis)
        lvl_img = np.ascontiguousarray(lvl_img)

        edges = prewitt_edges(lvl_img, lvoid | ~lvalid,
                              params.edge_threshold)
        order = build_order(edges, lvoid, dist_known, params.patch_size,
                            params.linear_ordering, 1)
        n = len(order)
        level_adopts = []
        for it in range(1, params.iterations + 1):
            if not params.linear_ordering:
                order = build_order(edges, lvoid, dist_known,
                                    params.patch_size, False, it)
            draws = rng.random((n, n_tiers, 3))
            if params.directional_guidance and len(dirs_cos):
                k = len(dirs_cos)
                idx = np.minimum((draws[:, :, 0] * k).astype(np.int64), k - 1)
                theta = np.asarray(angles, dtype=np.float64).ravel()[idx]
            else:
                theta = draws[:, :, 0] * (2.0 * np.pi)
            cand_cos = np.ascontiguousarray(np.cos(theta))
            cand_sin = np.ascontiguousarray(np.sin(theta))
            u_along = np.ascontiguousarray(draws[:, :, 1])
            u_across = np.ascontiguousarray(draws[:, :, 2])

            nnf_before = nnf.copy() if hook else None
            adopts = kern.pm_pass(lvl_img, known, nnf, wint, dist, order,
                                  cand_cos, cand_sin, u_along, u_across,
                                  radii, band_hw, dirs_cos, dirs_sin,
                                  params.literal_regularity, params.lambda1,
                                  params.lambda2, sigma_c2, lvoid)
            level_adopts.append(int(adopts))
            if hook:
                hook({"event": "pass", "level": li, "pass_index": it,
                      "img": lvl_img, "nnf_before": nnf_before,
                      "nnf_after": nnf.copy(), "known": known,
                      "void": lvoid, "dist": dist, "wint": wint,
                      "sigma_c2": sigma_c2, "angles": np.asarray(angles),
                      "params": params})
            lvl_img = _synthesize(lvl_img, known, lvoid, nnf, wint,
                                  params.synthesis)
        info["adoptions"].append(level_adopts)

    out = img.copy()
    vy, vx = np.nonzero(void)
    out[vy, vx] = lvl_img[vy, vx]
    return out, info
