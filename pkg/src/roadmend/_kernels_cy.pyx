# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled kernels: triangle fill, patch energy, PatchMatch pass, patch voting.

Mirror of _kernels_py, operation for operation.  All reductions are exact
int64 sums (fixed-point Gaussian weights), every float expression keeps the
same association as the NumPy code, rounding goes through rint(), and the
extension is built with -ffp-contract=off, so both backends produce identical
bytes.  Keep the two files in sync; test_backends locks the equivalence.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, floor, sqrt, fabs, rint, INFINITY

cnp.import_array()

BACKEND_NAME = "compiled"


cdef inline bint _edge_ok(double e, double dx, double dy) nogil:
    # top-left rule: centers exactly on a top or left edge are inside
    if dy < 0.0 or (dy == 0.0 and dx > 0.0):
        return e >= 0.0
    return e > 0.0


def fill_triangle(xs, ys, hs, us, vs, int facet_id,
                  cnp.uint8_t[:, :, ::1] atlas,
                  double h_min, double h_max,
                  cnp.uint8_t[:, :, ::1] color,
                  cnp.int32_t[:, ::1] facet,
                  double[:, ::1] depth,
                  cnp.uint8_t[:, ::1] valid):
    """Rasterize one triangle into the color/facet/depth/valid buffers.

    Same contract as the fallback: pixel centers at (i+0.5, j+0.5), top-left
    fill rule, strict > depth test, bilinear clamp-to-edge atlas sampling.
    """
    cdef Py_ssize_t grid_h = facet.shape[0]
    cdef Py_ssize_t grid_w = facet.shape[1]
    cdef double x0 = xs[0], x1 = xs[1], x2 = xs[2]
    cdef double y0 = ys[0], y1 = ys[1], y2 = ys[2]
    cdef double h0 = hs[0], h1 = hs[1], h2 = hs[2]
    cdef double u0 = us[0], u1 = us[1], u2 = us[2]
    cdef double v0 = vs[0], v1 = vs[1], v2 = vs[2]
    cdef double tmp

    cdef double area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
    if area2 == 0.0 or area2 != area2:
        return 0
    if area2 < 0.0:
        tmp = x1; x1 = x2; x2 = tmp
        tmp = y1; y1 = y2; y2 = tmp
        tmp = h1; h1 = h2; h2 = tmp
        tmp = u1; u1 = u2; u2 = tmp
        tmp = v1; v1 = v2; v2 = tmp

    cdef double minx = x0, maxx = x0, miny = y0, maxy = y0
    if x1 < minx: minx = x1
    if x2 < minx: minx = x2
    if x1 > maxx: maxx = x1
    if x2 > maxx: maxx = x2
    if y1 < miny: miny = y1
    if y2 < miny: miny = y2
    if y1 > maxy: maxy = y1
    if y2 > maxy: maxy = y2

    # clamp in double space before casting so absurd coordinates stay safe
    cdef double blo = ceil(minx - 0.5)
    if blo < 0.0: blo = 0.0
    if blo > <double>grid_w: blo = <double>grid_w
    cdef double bhi = floor(maxx - 0.5)
    if bhi > <double>(grid_w - 1): bhi = <double>(grid_w - 1)
    if bhi < -1.0: bhi = -1.0
    cdef Py_ssize_t ix_lo = <Py_ssize_t>blo
    cdef Py_ssize_t ix_hi = <Py_ssize_t>bhi
    blo = ceil(miny - 0.5)
    if blo < 0.0: blo = 0.0
    if blo > <double>grid_h: blo = <double>grid_h
    bhi = floor(maxy - 0.5)
    if bhi > <double>(grid_h - 1): bhi = <double>(grid_h - 1)
    if bhi < -1.0: bhi = -1.0
    cdef Py_ssize_t iy_lo = <Py_ssize_t>blo
    cdef Py_ssize_t iy_hi = <Py_ssize_t>bhi
    if ix_hi < ix_lo or iy_hi < iy_lo:
        return 0

    cdef Py_ssize_t ah = atlas.shape[0]
    cdef Py_ssize_t aw = atlas.shape[1]
    cdef Py_ssize_t ix, iy, wrote = 0
    cdef Py_ssize_t jx0, jx1, jy0, jy1
    cdef double cx, cy, e0, e1, e2, s, w0, w1, w2, hh, u, v
    cdef double uf, vf, fx, fy, gx, gy, val, cl
    cdef double pa, pb, pc, pd
    cdef int c

    for iy in range(iy_lo, iy_hi + 1):
        cy = iy + 0.5
        for ix in range(ix_lo, ix_hi + 1):
            cx = ix + 0.5
            e0 = (x2 - x1) * (cy - y1) - (y2 - y1) * (cx - x1)
            if not _edge_ok(e0, x2 - x1, y2 - y1):
                continue
            e1 = (x0 - x2) * (cy - y2) - (y0 - y2) * (cx - x2)
            if not _edge_ok(e1, x0 - x2, y0 - y2):
                continue
            e2 = (x1 - x0) * (cy - y0) - (y1 - y0) * (cx - x0)
            if not _edge_ok(e2, x1 - x0, y1 - y0):
                continue
            s = e0 + e1 + e2
            w0 = e0 / s
            w1 = e1 / s
            w2 = e2 / s
            hh = w0 * h0 + w1 * h1 + w2 * h2
            if not (hh >= h_min and hh <= h_max):
                continue
            if not (hh > depth[iy, ix]):
                continue
            u = w0 * u0 + w1 * u1 + w2 * u2
            v = w0 * v0 + w1 * v1 + w2 * v2

            uf = floor(u)
            vf = floor(v)
            fx = u - uf
            fy = v - vf
            # clamp-to-edge: indices clamped, fractional weights untouched
            cl = uf
            if cl < 0.0: cl = 0.0
            if cl > <double>(aw - 1): cl = <double>(aw - 1)
            jx0 = <Py_ssize_t>cl
            cl = uf + 1.0
            if cl < 0.0: cl = 0.0
            if cl > <double>(aw - 1): cl = <double>(aw - 1)
            jx1 = <Py_ssize_t>cl
            cl = vf
            if cl < 0.0: cl = 0.0
            if cl > <double>(ah - 1): cl = <double>(ah - 1)
            jy0 = <Py_ssize_t>cl
            cl = vf + 1.0
            if cl < 0.0: cl = 0.0
            if cl > <double>(ah - 1): cl = <double>(ah - 1)
            jy1 = <Py_ssize_t>cl

            gx = 1.0 - fx
            gy = 1.0 - fy
            for c in range(3):
                pa = <double>atlas[jy0, jx0, c]
                pb = <double>atlas[jy0, jx1, c]
                pc = <double>atlas[jy1, jx0, c]
                pd = <double>atlas[jy1, jx1, c]
                val = gx * gy * pa + fx * gy * pb + gx * fy * pc + fx * fy * pd
                color[iy, ix, c] = <cnp.uint8_t>rint(val)
            facet[iy, ix] = facet_id
            depth[iy, ix] = hh
            valid[iy, ix] = 1
            wrote += 1
    return wrote


cdef inline double _energy(cnp.uint8_t[:, :, ::1] img,
                           cnp.int64_t[:, ::1] wint,
                           double[:, ::1] dist,
                           Py_ssize_t px, Py_ssize_t py,
                           Py_ssize_t vx, Py_ssize_t vy,
                           double lam1, double lam2, double sigma_c2,
                           double[::1] dirs_cos, double[::1] dirs_sin,
                           bint literal_er,
                           double* ea_out, double* ep_out, double* er_out) nogil:
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    cdef Py_ssize_t patch = wint.shape[0]
    cdef Py_ssize_t half = patch // 2
    if vx == 0 and vy == 0:
        ea_out[0] = INFINITY
        ep_out[0] = 0.0
        er_out[0] = 0.0
        return INFINITY

    cdef Py_ssize_t ry0 = -half
    if -py > ry0: ry0 = -py
    if -(py + vy) > ry0: ry0 = -(py + vy)
    cdef Py_ssize_t ry1 = half
    if h - 1 - py < ry1: ry1 = h - 1 - py
    if h - 1 - (py + vy) < ry1: ry1 = h - 1 - (py + vy)
    cdef Py_ssize_t rx0 = -half
    if -px > rx0: rx0 = -px
    if -(px + vx) > rx0: rx0 = -(px + vx)
    cdef Py_ssize_t rx1 = half
    if w - 1 - px < rx1: rx1 = w - 1 - px
    if w - 1 - (px + vx) < rx1: rx1 = w - 1 - (px + vx)

    cdef long long num = 0, den = 0, wgt, d
    cdef Py_ssize_t ry, rx, ty, tx, sy, sx
    for ry in range(ry0, ry1 + 1):
        ty = py + ry
        sy = py + vy + ry
        for rx in range(rx0, rx1 + 1):
            tx = px + rx
            sx = px + vx + rx
            wgt = wint[half + ry, half + rx]
            d = (<long long>img[ty, tx, 0] - <long long>img[sy, sx, 0])
            if d < 0: d = -d
            num += wgt * d
            d = (<long long>img[ty, tx, 1] - <long long>img[sy, sx, 1])
            if d < 0: d = -d
            num += wgt * d
            d = (<long long>img[ty, tx, 2] - <long long>img[sy, sx, 2])
            if d < 0: d = -d
            num += wgt * d
            den += wgt
    cdef double e_a = <double>num / (3.0 * <double>den)

    cdef double dd = dist[py, px]
    cdef double vn2 = <double>(vx * vx + vy * vy)
    cdef double e_p = vn2 / (dd * dd + sigma_c2)

    cdef Py_ssize_t n_dirs = dirs_cos.shape[0]
    cdef double e_r, vnorm, dot, valr
    cdef Py_ssize_t k
    if n_dirs == 0:
        e_r = 0.0
    else:
        vnorm = sqrt(vn2)
        e_r = INFINITY
        for k in range(n_dirs):
            dot = vx * dirs_cos[k] + vy * dirs_sin[k]
            if literal_er:
                valr = dot / vnorm
            else:
                valr = 1.0 - fabs(dot) / vnorm
            if valr < e_r:
                e_r = valr
    ea_out[0] = e_a
    ep_out[0] = e_p
    er_out[0] = e_r
    return e_a + lam1 * e_p + lam2 * e_r


def eval_energy(cnp.uint8_t[:, :, ::1] img, cnp.int64_t[:, ::1] wint,
                double[:, ::1] dist, Py_ssize_t px, Py_ssize_t py,
                Py_ssize_t vx, Py_ssize_t vy,
                double lam1, double lam2, double sigma_c2,
                double[::1] dirs_cos, double[::1] dirs_sin, bint literal_er):
    """Three-term patch energy at (px, py) for offset (vx, vy).

    Returns (E, E_a, E_p, E_r), matching the fallback bit for bit.
    """
    cdef double ea = 0.0, ep = 0.0, er = 0.0
    cdef double e = _energy(img, wint, dist, px, py, vx, vy,
                            lam1, lam2, sigma_c2, dirs_cos, dirs_sin,
                            literal_er, &ea, &ep, &er)
    return e, ea, ep, er


def pm_pass(cnp.uint8_t[:, :, ::1] img, known, nnf_arr,
            cnp.int64_t[:, ::1] wint, double[:, ::1] dist,
            cnp.int32_t[:, ::1] order,
            double[:, ::1] cand_cos, double[:, ::1] cand_sin,
            double[:, ::1] u_along, double[:, ::1] u_across,
            double[::1] radii, double band_hw,
            double[::1] dirs_cos, double[::1] dirs_sin, bint literal_er,
            double lam1, double lam2, double sigma_c2, void_mask):
    """One PatchMatch refinement pass over ``order`` (in place on the NNF).

    Neighborhood expansion over the 4-neighborhood, then one guided random
    candidate per radius tier from the precomputed draws.  Adoption is on
    strictly lower energy only.  Returns the number of adoptions.
    """
    cdef cnp.uint8_t[:, ::1] known_m = known.view(np.uint8)
    cdef cnp.uint8_t[:, ::1] void_m = void_mask.view(np.uint8)
    cdef cnp.int32_t[:, :, ::1] nnf = nnf_arr
    cdef Py_ssize_t h = known_m.shape[0]
    cdef Py_ssize_t w = known_m.shape[1]
    cdef Py_ssize_t n = order.shape[0]
    cdef Py_ssize_t n_tiers = radii.shape[0]
    cdef Py_ssize_t adopts = 0

    cdef Py_ssize_t k, t, i
    cdef Py_ssize_t px, py, vx, vy, qx, qy, cvx, cvy, tx, ty, cx, cy
    cdef double e_cur, e, a, b, dc, ds
    cdef double ea = 0.0, ep = 0.0, er = 0.0

    for k in range(n):
        px = order[k, 0]
        py = order[k, 1]
        vx = nnf[py, px, 0]
        vy = nnf[py, px, 1]
        e_cur = _energy(img, wint, dist, px, py, vx, vy,
                        lam1, lam2, sigma_c2, dirs_cos, dirs_sin,
                        literal_er, &ea, &ep, &er)

        for i in range(4):
            if i == 0:
                qx = px - 1; qy = py
            elif i == 1:
                qx = px + 1; qy = py
            elif i == 2:
                qx = px; qy = py - 1
            else:
                qx = px; qy = py + 1
            if 0 <= qx < w and 0 <= qy < h and void_m[qy, qx]:
                cvx = nnf[qy, qx, 0]
                cvy = nnf[qy, qx, 1]
                if cvx == vx and cvy == vy:
                    continue
                tx = px + cvx
                ty = py + cvy
                if 0 <= tx < w and 0 <= ty < h and known_m[ty, tx]:
                    e = _energy(img, wint, dist, px, py, cvx, cvy,
                                lam1, lam2, sigma_c2, dirs_cos, dirs_sin,
                                literal_er, &ea, &ep, &er)
                    if e < e_cur:
                        vx = cvx; vy = cvy
                        e_cur = e
                        adopts += 1

        for t in range(n_tiers):
            a = (2.0 * u_along[k, t] - 1.0) * radii[t]
            b = (2.0 * u_across[k, t] - 1.0) * band_hw
            dc = cand_cos[k, t]
            ds = cand_sin[k, t]
            cx = <Py_ssize_t>rint(px + (a * dc - b * ds))
            cy = <Py_ssize_t>rint(py + (a * ds + b * dc))
            if 0 <= cx < w and 0 <= cy < h and known_m[cy, cx]:
                cvx = cx - px
                cvy = cy - py
                if cvx == vx and cvy == vy:
                    continue
                e = _energy(img, wint, dist, px, py, cvx, cvy,
                            lam1, lam2, sigma_c2, dirs_cos, dirs_sin,
                            literal_er, &ea, &ep, &er)
                if e < e_cur:
                    vx = cvx; vy = cvy
                    e_cur = e
                    adopts += 1

        nnf[py, px, 0] = <cnp.int32_t>vx
        nnf[py, px, 1] = <cnp.int32_t>vy

    return adopts


def synthesize_votes(img_arr, known, void_mask, nnf_arr, cnp.int64_t[:, ::1] wint):
    """Gaussian-weighted patch voting; returns a new uint8 image.

    Integer accumulation, rint(num/den) per channel, direct copy through the
    pixel's own offset when no weighted vote lands.
    """
    cdef cnp.uint8_t[:, :, ::1] img = img_arr
    cdef cnp.uint8_t[:, ::1] known_m = known.view(np.uint8)
    cdef cnp.uint8_t[:, ::1] void_m = void_mask.view(np.uint8)
    cdef cnp.int32_t[:, :, ::1] nnf = nnf_arr
    out_arr = np.asarray(img_arr).copy()
    cdef cnp.uint8_t[:, :, ::1] out = out_arr

    cdef Py_ssize_t h = known_m.shape[0]
    cdef Py_ssize_t w = known_m.shape[1]
    cdef Py_ssize_t patch = wint.shape[0]
    cdef Py_ssize_t half = patch // 2
    cdef Py_ssize_t px, py, sy, sx, qy, qx, spy, spx
    cdef long long acc0, acc1, acc2, den, wgt

    for py in range(h):
        for px in range(w):
            if not void_m[py, px]:
                continue
            acc0 = 0; acc1 = 0; acc2 = 0; den = 0
            for sy in range(-half, half + 1):
                qy = py + sy
                if qy < 0 or qy >= h:
                    continue
                for sx in range(-half, half + 1):
                    qx = px + sx
                    if qx < 0 or qx >= w:
                        continue
                    if not void_m[qy, qx]:
                        continue
                    spy = py + nnf[qy, qx, 1]
                    spx = px + nnf[qy, qx, 0]
                    if spy < 0 or spy >= h or spx < 0 or spx >= w:
                        continue
                    if not known_m[spy, spx]:
                        continue
                    wgt = wint[half + sy, half + sx]
                    acc0 += wgt * <long long>img[spy, spx, 0]
                    acc1 += wgt * <long long>img[spy, spx, 1]
                    acc2 += wgt * <long long>img[spy, spx, 2]
                    den += wgt
            if den > 0:
                out[py, px, 0] = <cnp.uint8_t>rint(<double>acc0 / <double>den)
                out[py, px, 1] = <cnp.uint8_t>rint(<double>acc1 / <double>den)
                out[py, px, 2] = <cnp.uint8_t>rint(<double>acc2 / <double>den)
            else:
                # only reachable on a broken NNF invariant; stay in bounds
                spy = py + nnf[py, px, 1]
                spx = px + nnf[py, px, 0]
                if spy < 0: spy = 0
                if spy > h - 1: spy = h - 1
                if spx < 0: spx = 0
                if spx > w - 1: spx = w - 1
                out[py, px, 0] = img[spy, spx, 0]
                out[py, px, 1] = img[spy, spx, 1]
                out[py, px, 2] = img[spy, spx, 2]
    return out_arr
