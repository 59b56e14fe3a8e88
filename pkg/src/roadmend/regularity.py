"""Guidance signals for completion: repeat directions and an edge map.

Road markings repeat along the carriageway, so offsets between self-matched
features cluster on lines through the origin of offset space.  Sequential
RANSAC recovers up to two such directions (plus orthogonals); the completion
stage restricts its random search to bands along them.  The second signal is
a binary Prewitt edge map used to order void pixels by structure content.

The feature backend sits behind detect_keypoints(); the default is a
multi-scale DoG detector with gradient-histogram descriptors.  Matching uses
the ratio test only, deliberately without geometric outlier filtering.
"""

import logging

import cv2
import numpy as np

log = logging.getLogger(__name__)

RATIO_THRESHOLD = 0.8
MIN_OFFSET_LEN = 8.0
MIN_MATCHES = 20
RANSAC_INLIER_DIST = 5.0
RANSAC_ACCEPT_FRAC = 0.25
RANSAC_ITERATIONS = 1000
MAX_LINES = 2
MIN_SEPARATION_DEG = 10.0
PREWITT_THRESHOLD = 40


def gray601_u8(img):
    """ITU-R 601 luma rounded to uint8."""
    img = np.asarray(img)
    if img.ndim == 2:
        return img.astype(np.uint8)
    g = (0.299 * img[..., 0].astype(np.float64)
         + 0.587 * img[..., 1].astype(np.float64)
         + 0.114 * img[..., 2].astype(np.float64))
    return np.rint(g).astype(np.uint8)


def prewitt_edges(img, void, threshold=PREWITT_THRESHOLD):
    """Binary edge map: Prewitt magnitude >= threshold on 601 grayscale.

    Border pixels are false, and so is any pixel whose 3x3 support touches
    the void mask.  The comparison is done on squared integer magnitudes, so
    the result is exact.
    """
    gray = gray601_u8(img).astype(np.int64)
    void = np.asarray(void, dtype=bool)
    h, w = gray.shape
    edges = np.zeros((h, w), dtype=bool)
    if h < 3 or w < 3:
        return edges

    # column/row sums of the 3x3 support, then differenced: Prewitt kernels
    # [[1,0,-1]]*3 and its transpose
    csum = gray[:-2, :] + gray[1:-1, :] + gray[2:, :]      # (h-2, w)
    rsum = gray[:, :-2] + gray[:, 1:-1] + gray[:, 2:]      # (h, w-2)
    gx = csum[:, :-2] - csum[:, 2:]                         # (h-2, w-2)
    gy = rsum[:-2, :] - rsum[2:, :]

    thr2 = int(threshold) * int(threshold)
    mag2 = gx * gx + gy * gy
    edges[1:-1, 1:-1] = mag2 >= thr2

    if void.any():
        # any void pixel in the 3x3 support kills the response
        touch = void.copy()
        touch[:-1, :] |= void[1:, :]
        touch[1:, :] |= void[:-1, :]
        touch[:, :-1] |= touch[:, 1:].copy()
        touch[:, 1:] |= touch[:, :-1].copy()
        edges &= ~touch
    return edges


def detect_keypoints(gray):
    """Keypoints + descriptors of the default multi-scale feature backend."""
    sift = cv2.SIFT_create()
    kps, desc = sift.detectAndCompute(gray, None)
    if desc is None:
        desc = np.zeros((0, 128), dtype=np.float32)
    return kps, desc


def match_offsets(img, void, ratio=RATIO_THRESHOLD, min_len=MIN_OFFSET_LEN):
    """Canonicalized self-match offsets (N, 2) within one image.

    Keypoints inside the void are discarded.  Each keypoint matches its best
    partner at a different position, subject to the ratio test against the
    second-best; no geometric outlier filtering.  Offsets flip into the
    dy > 0 (or dy = 0, dx > 0) half-plane and must be at least ``min_len``.
    """
    gray = gray601_u8(img)
    void = np.asarray(void, dtype=bool)
    h, w = gray.shape
    kps, desc = detect_keypoints(gray)
    if len(kps) == 0:
        return np.zeros((0, 2))

    pts = np.array([kp.pt for kp in kps], dtype=np.float64)
    ix = np.clip(np.rint(pts[:, 0]).astype(np.int64), 0, w - 1)
    iy = np.clip(np.rint(pts[:, 1]).astype(np.int64), 0, h - 1)
    keep = ~void[iy, ix]
    pts = pts[keep]
    desc = desc[keep]
    if len(pts) < 2:
        return np.zeros((0, 2))

    # self-match: k nearest in descriptor space, skip hits at the same
    # position (the trivial self pair and duplicate-orientation keypoints)
    matcher = cv2.BFMatcher(cv2.NORM_L2)
    knn = matcher.knnMatch(desc, desc, k=min(4, len(pts)))
    offsets = []
    for cand in knn:
        good = [m for m in cand
                if not np.allclose(pts[m.trainIdx], pts[m.queryIdx])]
        if len(good) < 2:
            continue
        best, second = good[0], good[1]
        if second.distance <= 0:
            continue
        if best.distance / second.distance > ratio:
            continue
        d = pts[best.trainIdx] - pts[best.queryIdx]
        dx, dy = float(d[0]), float(d[1])
        if dy < 0.0 or (dy == 0.0 and dx < 0.0):
            dx, dy = -dx, -dy
        if dx * dx + dy * dy < min_len * min_len:
            continue
        offsets.append((dx, dy))
    return np.array(offsets, dtype=np.float64).reshape(-1, 2)


def _angdiff(a, b):
    d = abs(a - b) % np.pi
    return min(d, np.pi - d)


def ransac_directions(offsets, seed, inlier_dist=RANSAC_INLIER_DIST,
                      accept_frac=RANSAC_ACCEPT_FRAC,
                      iterations=RANSAC_ITERATIONS):
    """Fit up to 2 origin lines to offset scatter; return (angles, counts).

    Sequential: the best-consensus line is accepted iff it claims at least
    ``accept_frac`` of the remaining offsets, whose inliers (perpendicular
    distance <= inlier_dist) are removed before the next fit.  Accepted
    angles are refined by the principal direction of their inliers, then
    orthogonals are appended and the set deduplicated at 10 degrees.  Angles
    live in [0, pi).
    """
    offsets = np.asarray(offsets, dtype=np.float64).reshape(-1, 2)
    if len(offsets) < MIN_MATCHES:
        raise ValueError(
            f"need at least {MIN_MATCHES} offsets, got {len(offsets)}")
    rng = np.random.default_rng(seed)

    remaining = offsets.copy()
    found = []
    for _ in range(MAX_LINES):
        n = len(remaining)
        if n == 0:
            break
        best_cnt = -1
        best_inl = None
        for _ in range(iterations):
            pick = remaining[rng.integers(n)]
            norm = np.hypot(pick[0], pick[1])
            if norm == 0.0:
                continue
            # perpendicular distance to the origin line through ``pick``
            perp = np.abs(remaining[:, 1] * pick[0]
                          - remaining[:, 0] * pick[1]) / norm
            inl = perp <= inlier_dist
            cnt = int(inl.sum())
            if cnt > best_cnt:
                best_cnt = cnt
                best_inl = inl
        if best_inl is None or best_cnt < accept_frac * n:
            break
        sub = remaining[best_inl]
        # principal direction of the inlier scatter
        m = sub.T @ sub
        evals, evecs = np.linalg.eigh(m)
        d = evecs[:, np.argmax(evals)]
        theta = float(np.arctan2(d[1], d[0])) % np.pi
        found.append((theta, best_cnt))
        remaining = remaining[~best_inl]

    ordered = list(found) + [((t + np.pi / 2.0) % np.pi, c) for t, c in found]
    angles, counts = [], []
    min_sep = np.deg2rad(MIN_SEPARATION_DEG)
    for t, c in ordered:
        if all(_angdiff(t, u) >= min_sep for u in angles):
            angles.append(t)
            counts.append(c)
    return np.array(angles), np.array(counts, dtype=np.int64)


def detect_directions(img, void, seed):
    """Compose matching + RANSAC; returns (angles, info dict).

    Fewer than 20 usable matches means insufficient evidence: the angle set
    is empty and completion runs unguided.
    """
    offsets = match_offsets(img, void)
    info = {"n_offsets": int(len(offsets)), "status": "ok"}
    if len(offsets) < MIN_MATCHES:
        info["status"] = "insufficient regularity evidence"
        info["angles_deg"] = []
        info["inlier_counts"] = []
        log.info("regularity: %d offsets, need %d; running unguided",
                 len(offsets), MIN_MATCHES)
        return np.array([]), info
    angles, counts = ransac_directions(offsets, seed)
    info["angles_deg"] = [float(np.rad2deg(a)) for a in angles]
    info["inlier_counts"] = [int(c) for c in counts]
    if len(angles) == 0:
        info["status"] = "no consistent direction"
    return angles, info
