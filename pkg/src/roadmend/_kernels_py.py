"""Pure-NumPy kernels: triangle fill, patch energy, PatchMatch pass, patch voting.

This is the fallback backend used when the compiled extension is unavailable.
Both backends must produce bit-identical results: every reduction here is an
exact integer sum (fixed-point Gaussian weights), and every float expression
mirrors the C code operation-for-operation, so adoption decisions and output
bytes cannot diverge between them.
"""

import numpy as np

BACKEND_NAME = "python"


def fill_triangle(xs, ys, hs, us, vs, facet_id, atlas,
                  h_min, h_max, color, facet, depth, valid):
    """Rasterize one triangle into the color/facet/depth/valid buffers.

    xs, ys: pixel-space vertex coordinates; hs: camera depth (larger = closer);
    us, vs: per-vertex texel coordinates (center units) in ``atlas``.
    Pixel centers at (i+0.5, j+0.5); depth test is strict > so earlier facets
    win ties.  Returns the number of pixels written.
    """
    grid_h, grid_w = facet.shape
    x0, x1, x2 = float(xs[0]), float(xs[1]), float(xs[2])
    y0, y1, y2 = float(ys[0]), float(ys[1]), float(ys[2])
    h0, h1, h2 = float(hs[0]), float(hs[1]), float(hs[2])
    u0, u1, u2 = float(us[0]), float(us[1]), float(us[2])
    v0, v1, v2 = float(vs[0]), float(vs[1]), float(vs[2])

    area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
    if area2 == 0.0 or np.isnan(area2):
        return 0
    if area2 < 0.0:
        x1, x2 = x2, x1
        y1, y2 = y2, y1
        h1, h2 = h2, h1
        u1, u2 = u2, u1
        v1, v2 = v2, v1

    ix_lo = max(0, int(np.ceil(min(x0, x1, x2) - 0.5)))
    ix_hi = min(grid_w - 1, int(np.floor(max(x0, x1, x2) - 0.5)))
    iy_lo = max(0, int(np.ceil(min(y0, y1, y2) - 0.5)))
    iy_hi = min(grid_h - 1, int(np.floor(max(y0, y1, y2) - 0.5)))
    if ix_hi < ix_lo or iy_hi < iy_lo:
        return 0

    cx = np.arange(ix_lo, ix_hi + 1, dtype=np.float64)[None, :] + 0.5
    cy = np.arange(iy_lo, iy_hi + 1, dtype=np.float64)[:, None] + 0.5

    e0 = (x2 - x1) * (cy - y1) - (y2 - y1) * (cx - x1)
    e1 = (x0 - x2) * (cy - y2) - (y0 - y2) * (cx - x2)
    e2 = (x1 - x0) * (cy - y0) - (y1 - y0) * (cx - x0)

    def edge_mask(e, dx, dy):
        # top-left rule: centers exactly on a top or left edge are inside
        if (dy < 0.0) or (dy == 0.0 and dx > 0.0):
            return e >= 0.0
        return e > 0.0

    inside = (edge_mask(e0, x2 - x1, y2 - y1)
              & edge_mask(e1, x0 - x2, y0 - y2)
              & edge_mask(e2, x1 - x0, y1 - y0))
    if not inside.any():
        return 0

    s = e0 + e1 + e2
    with np.errstate(invalid="ignore", divide="ignore"):
        w0 = e0 / s
        w1 = e1 / s
        w2 = e2 / s
    h = w0 * h0 + w1 * h1 + w2 * h2
    inside &= (h >= h_min) & (h <= h_max)

    sub_depth = depth[iy_lo:iy_hi + 1, ix_lo:ix_hi + 1]
    win = inside & (h > sub_depth)
    if not win.any():
        return 0

    u = w0 * u0 + w1 * u1 + w2 * u2
    v = w0 * v0 + w1 * v1 + w2 * v2

    wy, wx = np.nonzero(win)
    uw = u[wy, wx]
    vw = v[wy, wx]
    ah, aw = atlas.shape[:2]
    uf = np.floor(uw)
    vf = np.floor(vw)
    fx = uw - uf
    fy = vw - vf
    # clamp-to-edge: indices clamped, fractional weights untouched
    ix0 = np.clip(uf, 0.0, aw - 1.0).astype(np.intp)
    ix1 = np.clip(uf + 1.0, 0.0, aw - 1.0).astype(np.intp)
    iy0 = np.clip(vf, 0.0, ah - 1.0).astype(np.intp)
    iy1 = np.clip(vf + 1.0, 0.0, ah - 1.0).astype(np.intp)

    gx = 1.0 - fx
    gy = 1.0 - fy
    out = np.empty((len(wy), 3), dtype=np.uint8)
    for c in range(3):
        a = atlas[iy0, ix0, c].astype(np.float64)
        b = atlas[iy0, ix1, c].astype(np.float64)
        cc = atlas[iy1, ix0, c].astype(np.float64)
        d = atlas[iy1, ix1, c].astype(np.float64)
        val = gx * gy * a + fx * gy * b + gx * fy * cc + fx * fy * d
        out[:, c] = np.rint(val).astype(np.uint8)

    gy_idx = wy + iy_lo
    gx_idx = wx + ix_lo
    color[gy_idx, gx_idx] = out
    facet[gy_idx, gx_idx] = facet_id
    depth[gy_idx, gx_idx] = h[wy, wx]
    valid[gy_idx, gx_idx] = 1
    return int(len(wy))


def eval_energy(img, wint, dist, px, py, vx, vy,
                lam1, lam2, sigma_c2, dirs_cos, dirs_sin, literal_er):
    """Three-term patch energy at pixel (px, py) for offset (vx, vy).

    Returns (E, E_a, E_p, E_r).  E_a uses fixed-point Gaussian weights and
    exact integer accumulation; the combination is a fixed float expression so
    the compiled backend reproduces it bit-for-bit.
    """
    h, w = img.shape[:2]
    patch = wint.shape[0]
    half = patch // 2
    if vx == 0 and vy == 0:
        return np.inf, np.inf, 0.0, 0.0

    ry0 = max(-half, -py, -(py + vy))
    ry1 = min(half, h - 1 - py, h - 1 - (py + vy))
    rx0 = max(-half, -px, -(px + vx))
    rx1 = min(half, w - 1 - px, w - 1 - (px + vx))

    tgt = img[py + ry0:py + ry1 + 1, px + rx0:px + rx1 + 1].astype(np.int64)
    src = img[py + vy + ry0:py + vy + ry1 + 1,
              px + vx + rx0:px + vx + rx1 + 1].astype(np.int64)
    wsub = wint[half + ry0:half + ry1 + 1, half + rx0:half + rx1 + 1]
    d = np.abs(tgt - src).sum(axis=2)
    num = int(np.sum(wsub * d))
    den = int(np.sum(wsub))
    e_a = num / (3.0 * den)

    dd = dist[py, px]
    vn2 = float(vx * vx + vy * vy)
    e_p = vn2 / (dd * dd + sigma_c2)

    n_dirs = len(dirs_cos)
    if n_dirs == 0:
        e_r = 0.0
    else:
        vnorm = np.sqrt(vn2)
        e_r = np.inf
        for k in range(n_dirs):
            dot = vx * dirs_cos[k] + vy * dirs_sin[k]
            if literal_er:
                val = dot / vnorm
            else:
                val = 1.0 - abs(dot) / vnorm
            if val < e_r:
                e_r = val
    e = e_a + lam1 * e_p + lam2 * e_r
    return e, e_a, e_p, e_r


def _energy_only(img, wint, dist, px, py, vx, vy,
                 lam1, lam2, sigma_c2, dirs_cos, dirs_sin, literal_er):
    return eval_energy(img, wint, dist, px, py, vx, vy,
                       lam1, lam2, sigma_c2, dirs_cos, dirs_sin, literal_er)[0]


def pm_pass(img, known, nnf, wint, dist, order,
            cand_cos, cand_sin, u_along, u_across, radii, band_hw,
            dirs_cos, dirs_sin, literal_er, lam1, lam2, sigma_c2, void):
    """One PatchMatch refinement pass over ``order`` (in place on ``nnf``).

    Neighborhood expansion over the 4-neighborhood, then one guided random
    candidate per radius tier from the precomputed draws.  Adoption is on
    strictly lower energy only.  Returns the number of adoptions.
    """
    h, w = known.shape
    n = len(order)
    n_tiers = len(radii)
    adopts = 0

    for k in range(n):
        px = int(order[k, 0])
        py = int(order[k, 1])
        vx = int(nnf[py, px, 0])
        vy = int(nnf[py, px, 1])
        e_cur = _energy_only(img, wint, dist, px, py, vx, vy,
                             lam1, lam2, sigma_c2, dirs_cos, dirs_sin, literal_er)

        for qx, qy in ((px - 1, py), (px + 1, py), (px, py - 1), (px, py + 1)):
            if 0 <= qx < w and 0 <= qy < h and void[qy, qx]:
                cvx = int(nnf[qy, qx, 0])
                cvy = int(nnf[qy, qx, 1])
                if cvx == vx and cvy == vy:
                    continue
                tx = px + cvx
                ty = py + cvy
                if 0 <= tx < w and 0 <= ty < h and known[ty, tx]:
                    e = _energy_only(img, wint, dist, px, py, cvx, cvy,
                                     lam1, lam2, sigma_c2,
                                     dirs_cos, dirs_sin, literal_er)
                    if e < e_cur:
                        vx, vy = cvx, cvy
                        e_cur = e
                        adopts += 1

        for t in range(n_tiers):
            a = (2.0 * u_along[k, t] - 1.0) * radii[t]
            b = (2.0 * u_across[k, t] - 1.0) * band_hw
            dc = cand_cos[k, t]
            ds = cand_sin[k, t]
            cx = int(np.rint(px + (a * dc - b * ds)))
            cy = int(np.rint(py + (a * ds + b * dc)))
            if 0 <= cx < w and 0 <= cy < h and known[cy, cx]:
                cvx = cx - px
                cvy = cy - py
                if cvx == vx and cvy == vy:
                    continue
                e = _energy_only(img, wint, dist, px, py, cvx, cvy,
                                 lam1, lam2, sigma_c2,
                                 dirs_cos, dirs_sin, literal_er)
                if e < e_cur:
                    vx, vy = cvx, cvy
                    e_cur = e
                    adopts += 1

        nnf[py, px, 0] = vx
        nnf[py, px, 1] = vy

    return adopts


def synthesize_votes(img, known, void, nnf, wint):
    """Gaussian-weighted patch voting; returns a new uint8 image.

    Every void pixel q within the patch window of p casts the vote
    img[p + nnf(q)] with the Gaussian weight of (p - q), provided the source
    position is known.  Falls back to the direct copy img[p + nnf(p)] when no
    vote is valid.  Integer accumulation keeps the result backend-exact.
    """
    h, w = known.shape
    patch = wint.shape[0]
    half = patch // 2
    out = img.copy()

    vy_idx, vx_idx = np.nonzero(void)
    n = len(vy_idx)
    if n == 0:
        return out
    acc = np.zeros((n, 3), dtype=np.int64)
    den = np.zeros(n, dtype=np.int64)

    for sy in range(-half, half + 1):
        for sx in range(-half, half + 1):
            wgt = int(wint[half + sy, half + sx])
            qy = vy_idx + sy
            qx = vx_idx + sx
            ok = (qy >= 0) & (qy < h) & (qx >= 0) & (qx < w)
            if not ok.any():
                continue
            sel = np.nonzero(ok)[0]
            qy_s = qy[sel]
            qx_s = qx[sel]
            is_void = void[qy_s, qx_s]
            sel = sel[is_void]
            if len(sel) == 0:
                continue
            qy_s = qy[sel]
            qx_s = qx[sel]
            spy = vy_idx[sel] + nnf[qy_s, qx_s, 1]
            spx = vx_idx[sel] + nnf[qy_s, qx_s, 0]
            ok2 = (spy >= 0) & (spy < h) & (spx >= 0) & (spx < w)
            sel = sel[ok2]
            if len(sel) == 0:
                continue
            spy = spy[ok2]
            spx = spx[ok2]
            is_known = known[spy, spx]
            sel = sel[is_known]
            if len(sel) == 0:
                continue
            spy = spy[is_known]
            spx = spx[is_known]
            acc[sel] += wgt * img[spy, spx].astype(np.int64)
            den[sel] += wgt

    have = den > 0
    if have.any():
        vals = np.rint(acc[have] / den[have, None]).astype(np.uint8)
        out[vy_idx[have], vx_idx[have]] = vals
    rest = np.nonzero(~have)[0]
    if len(rest):
        # only reachable on a broken NNF invariant; stay in bounds regardless
        spy = np.clip(vy_idx[rest] + nnf[vy_idx[rest], vx_idx[rest], 1], 0, h - 1)
        spx = np.clip(vx_idx[rest] + nnf[vy_idx[rest], vx_idx[rest], 0], 0, w - 1)
        out[vy_idx[rest], vx_idx[rest]] = img[spy, spx]
    return out
