"""Top-down orthographic rasterization of a textured mesh.

Produces a color raster, a facet-index raster, a height buffer and a validity
mask over a ground-aligned ROI.  The pixel grid is tied to the ROI by

    px = (g1 - g1_min) / gsd,   py = (g2 - g2_min) / gsd

with (g1, g2) the ground coordinates for the chosen up axis, so pixel (0, 0)
sits at the minimal ground corner.  The projection/view matrices stored on
ProjectionSpec reproduce the same map through the usual NDC + viewport chain.

Hidden surfaces resolve by height: the camera looks along -up, larger height
wins, equal height keeps the lower facet index (facets are filled in order
with a strict > test).
"""

import logging
from dataclasses import dataclass

import numpy as np

from .backend import get_kernels

log = logging.getLogger(__name__)

MAX_VIEWPORT = 16384

# ground/up column indices into the vertex array per up-axis tag
_AXES = {"z": (0, 1, 2), "y": (0, 2, 1), "x": (1, 2, 0)}


class RasterError(ValueError):
    pass


@dataclass
class ProjectionSpec:
    """Orthographic top-down camera over a ground-aligned ROI."""

    P: np.ndarray
    V: np.ndarray
    width: int
    height: int
    gsd: float
    roi: np.ndarray           # (2, 3) world-axis min/max corners
    up_axis: str = "z"

    def ground_cols(self):
        g1, g2, up = _AXES[self.up_axis]
        return g1, g2, up

    def world_to_pixel(self, pts):
        """Map (N, 3) world points to (N, 3) of (px, py, height)."""
        pts = np.asarray(pts, dtype=np.float64)
        g1, g2, up = self.ground_cols()
        out = np.empty((len(pts), 3), dtype=np.float64)
        out[:, 0] = (pts[:, g1] - self.roi[0, g1]) / self.gsd
        out[:, 1] = (pts[:, g2] - self.roi[0, g2]) / self.gsd
        out[:, 2] = pts[:, up]
        return out

    def pixel_to_ground(self, px, py):
        """Inverse of world_to_pixel on the ground plane (pixel units in)."""
        g1, g2, _ = self.ground_cols()
        return (self.roi[0, g1] + px * self.gsd,
                self.roi[0, g2] + py * self.gsd)


@dataclass
class RasterResult:
    color: np.ndarray         # (H, W, 3) uint8, sentinel 0 where invalid
    facet: np.ndarray         # (H, W) int32, -1 where invalid
    height: np.ndarray        # (H, W) float64, -inf where invalid
    valid: np.ndarray         # (H, W) bool
    spec: ProjectionSpec
    n_pixels: int = 0

    @property
    def shape(self):
        return self.valid.shape


def roi_from_mesh(mesh, margin=0.0, up_axis="z"):
    """Axis-aligned bounding box of the mesh vertices, optionally padded.

    The height axis gets a hair of extra slack: interpolating a surface that
    sits exactly on the box boundary can land one ulp outside it, and the
    depth clip would then drop those pixels.
    """
    lo = mesh.vertices.min(axis=0) - margin
    hi = mesh.vertices.max(axis=0) + margin
    up = _AXES[up_axis][2]
    eps = 1e-9 * max(1.0, abs(lo[up]), abs(hi[up]))
    lo[up] -= eps
    hi[up] += eps
    return np.stack([lo, hi])


def build_projection(roi, gsd, up_axis="z"):
    """Lay an orthographic top-down camera over ``roi`` at ``gsd`` m/px.

    Viewport is ceil(ground extent / gsd) per axis, at least 1 and at most
    16384 pixels; larger requests are an error (ROI too large for the GSD).
    """
    roi = np.asarray(roi, dtype=np.float64)
    if roi.shape != (2, 3):
        raise RasterError(f"roi must be (2, 3) min/max corners, got {roi.shape}")
    if up_axis not in _AXES:
        raise RasterError(f"up_axis must be one of {sorted(_AXES)}, got {up_axis!r}")
    if not gsd > 0.0:
        raise RasterError(f"gsd must be positive, got {gsd}")

    g1, g2, up = _AXES[up_axis]
    ext1 = roi[1, g1] - roi[0, g1]
    ext2 = roi[1, g2] - roi[0, g2]
    if ext1 <= 0.0 or ext2 <= 0.0:
        raise RasterError(f"roi has non-positive ground extent ({ext1} x {ext2})")

    width = max(1, int(np.ceil(ext1 / gsd)))
    height = max(1, int(np.ceil(ext2 / gsd)))
    if width > MAX_VIEWPORT or height > MAX_VIEWPORT:
        raise RasterError(
            f"viewport {width} x {height} exceeds {MAX_VIEWPORT}; "
            "shrink the roi or increase the gsd")

    # view: rotate world axes into (ground1, ground2, up), origin at the
    # minimal ground corner (height 0)
    R = np.zeros((3, 3))
    R[0, g1] = 1.0
    R[1, g2] = 1.0
    R[2, up] = 1.0
    origin = np.zeros(3)
    origin[g1] = roi[0, g1]
    origin[g2] = roi[0, g2]
    V = np.eye(4)
    V[:3, :3] = R
    V[:3, 3] = -R @ origin

    # orthographic box snapped to the viewport so the NDC->pixel chain lands
    # exactly on px = (g1 - g1_min)/gsd
    h_lo = roi[0, up]
    h_hi = roi[1, up]
    if h_hi <= h_lo:
        h_hi = h_lo + 1.0
    P = np.zeros((4, 4))
    P[0, 0] = 2.0 / (width * gsd)
    P[1, 1] = 2.0 / (height * gsd)
    P[2, 2] = 2.0 / (h_hi - h_lo)
    P[0, 3] = -1.0
    P[1, 3] = -1.0
    P[2, 3] = -(h_hi + h_lo) / (h_hi - h_lo)
    P[3, 3] = 1.0

    return ProjectionSpec(P=P, V=V, width=width, height=height, gsd=float(gsd),
                          roi=roi, up_axis=up_axis)


def rasterize(mesh, spec, clip_height=True):
    """Render the mesh through ``spec`` into color/facet/height/valid buffers.

    Facets are filled in index order with a strict height test, so equal
    heights keep the lower index.  With ``clip_height`` pixels outside the
    ROI's up-range are dropped; facets fully outside the viewport never rasterize.
    """
    h, w = spec.height, spec.width
    color = np.zeros((h, w, 3), dtype=np.uint8)
    facet = np.full((h, w), -1, dtype=np.int32)
    heightbuf = np.full((h, w), -np.inf, dtype=np.float64)
    valid = np.zeros((h, w), dtype=np.uint8)

    proj = spec.world_to_pixel(mesh.vertices)
    g1, g2, up = spec.ground_cols()
    if clip_height:
        h_min = float(spec.roi[0, up])
        h_max = float(spec.roi[1, up])
    else:
        h_min, h_max = -np.inf, np.inf

    kern = get_kernels()
    n_pixels = 0
    for k in range(mesh.n_facets):
        idx = mesh.facets[k]
        xs = proj[idx, 0]
        ys = proj[idx, 1]
        hs = proj[idx, 2]
        aid = int(mesh.atlas_index[k])
        atlas = mesh.atlases[aid]
        ah, aw = atlas.shape[:2]
        uvs = mesh.uv_vertices[mesh.uv_facets[k]]
        # center-unit texel coordinates, v flipped, unclipped: the sampler's
        # index clamp supplies clamp-to-edge at chart borders
        us = uvs[:, 0] * aw - 0.5
        vs = (1.0 - uvs[:, 1]) * ah - 0.5
        n_pixels += kern.fill_triangle(xs, ys, hs, us, vs, k, atlas,
                                       h_min, h_max, color, facet,
                                       heightbuf, valid)

    if n_pixels == 0:
        log.warning("no facet rasterized inside the ROI; rasters are empty")
    return RasterResult(color=color, facet=facet, height=heightbuf,
                        valid=valid.astype(bool), spec=spec,
                        n_pixels=n_pixels)
