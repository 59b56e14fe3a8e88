"""Synthetic fixtures: images with known structure and meshes with known
geometry, used by the test suite and handy for demos.

Everything is seeded and pure numpy, so fixtures are bit-reproducible.
"""

import numpy as np
from scipy.ndimage import gaussian_filter

from .mesh_io import TexturedMesh


def smooth_noise(shape, rng, sigma=3.0, amplitude=10.0):
    n = rng.standard_normal(shape)
    n = gaussian_filter(n, sigma, mode="reflect")
    s = n.std()
    if s > 0:
        n = n / s
    return n * amplitude


def stripe_image(size=512, period=16.0, angle_deg=45.0, seed=0,
                 base=120.0, amplitude=90.0, noise_amp=10.0):
    """Diagonal stripes plus smooth noise; repeats along the stripe axis."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    th = np.deg2rad(angle_deg)
    # phase advances across the stripes; content repeats along them
    phase = (xx * np.cos(th) + yy * np.sin(th)) * (2.0 * np.pi / period)
    wave = base + amplitude * np.sin(phase)
    img = np.empty((size, size, 3), dtype=np.float64)
    for c in range(3):
        img[..., c] = wave + smooth_noise((size, size), rng, 3.0, noise_amp)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def dashed_stripe_image(size=512, period=16.0, dash_period=64.0, seed=0,
                        base=125.0, amplitude=80.0, dash_amp=40.0,
                        noise_amp=2.0):
    """45-degree stripes with a dash modulation running along the crests.

    The stripe phase advances perpendicular to the crests with spacing
    ``period`` px; the dash phase advances with period ``dash_period`` in
    (x - y) units, so the pattern repeats exactly only under integer offsets
    k * (dash_period/2, -dash_period/2).  Short offsets are never exact
    repeats, which makes the good-offset set sparse and long-range.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    stripes = (xx + yy) * (2.0 * np.pi / (period * np.sqrt(2.0)))
    dashes = (xx - yy) * (2.0 * np.pi / dash_period)
    wave = base + amplitude * np.sin(stripes) + dash_amp * np.sin(dashes)
    img = np.empty((size, size, 3), dtype=np.float64)
    for c in range(3):
        img[..., c] = wave + smooth_noise((size, size), rng, 3.0, noise_amp)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def center_hole(size, hole):
    void = np.zeros((size, size), dtype=bool)
    a = (size - hole) // 2
    void[a:a + hole, a:a + hole] = True
    return void


def dot_grid_image(size=256, pitch=32, seed=0, background=60):
    """Dot lattice where dots come in appearance-twin pairs.

    Random site pairs share one pixel-identical appearance (radius,
    brightness, inner-spot placement) unique to the pair.  Ratio-test
    matching then pairs twins: each match offset is an exact lattice vector,
    while every appearance stays distinct enough to survive the ratio check.
    """
    rng = np.random.default_rng(seed)
    img = np.full((size, size, 3), background, dtype=np.uint8)
    rad = 5
    g = np.arange(-rad, rad + 1)
    disk = g[:, None] ** 2 + g[None, :] ** 2 <= rad * rad
    sites = [(cy, cx)
             for cy in range(pitch // 2, size, pitch)
             for cx in range(pitch // 2, size, pitch)]
    order = rng.permutation(len(sites))
    for a, b in zip(order[0::2], order[1::2]):
        # twins share one unique noise texture, so descriptors match only
        # within a pair and every matched offset is an exact lattice vector
        tex = rng.integers(110, 256, (2 * rad + 1, 2 * rad + 1),
                           dtype=np.uint8)
        for cy, cx in (sites[a], sites[b]):
            patch = img[cy - rad:cy + rad + 1, cx - rad:cx + rad + 1]
            patch[disk] = tex[disk, None]
    return img


def duplicated_texture(size=256, shift=100, seed=0):
    """Random smooth texture repeating horizontally with period ``shift``."""
    rng = np.random.default_rng(seed)
    img = np.empty((size, size, 3), dtype=np.float64)
    for c in range(3):
        img[..., c] = 128 + smooth_noise((size, size), rng, 2.0, 55.0)
    for x in range(shift, size):
        img[:, x] = img[:, x - shift]
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def checkerboard(size=64, cell=8, lo=40, hi=215):
    yy, xx = np.mgrid[0:size, 0:size]
    a = ((yy // cell + xx // cell) % 2).astype(np.uint8)
    img = np.where(a[..., None] == 0, lo, hi).astype(np.uint8)
    return np.ascontiguousarray(np.repeat(img, 3, axis=2))


def quad_mesh(atlas, size_m=16.0, height=0.0):
    """Two triangles covering [0, size]^2 ground at constant height, z-up.

    The UV chart spans the full atlas oriented so that rendering at
    gsd = size / atlas_width reproduces the atlas 1:1 (pixel (i, j) reads
    texel (i, j))."""
    s = float(size_m)
    vertices = np.array([[0, 0, height], [s, 0, height],
                         [s, s, height], [0, s, height]], dtype=np.float64)
    uv = np.array([[0, 1], [1, 1], [1, 0], [0, 0]], dtype=np.float64)
    facets = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32)
    return TexturedMesh(
        vertices=vertices, facets=facets, uv_vertices=uv,
        uv_facets=facets.copy(),
        atlas_index=np.zeros(2, dtype=np.int32),
        atlases=[np.ascontiguousarray(atlas)]).validate()


def grid_mesh(atlases, nx=8, ny=8, size_m=16.0, height_fn=None,
              atlas_split=None, jitter=0.0, seed=0):
    """Triangulated (nx x ny)-cell plane with a ground-proportional UV chart.

    ``height_fn(x, y)`` gives vertex heights (default 0).  ``atlas_split``
    maps facet index -> atlas id (default all 0).  ``jitter`` shakes interior
    vertices in the ground plane for irregular triangulations.
    """
    rng = np.random.default_rng(seed)
    xs = np.linspace(0.0, size_m, nx + 1)
    ys = np.linspace(0.0, size_m, ny + 1)
    verts = []
    uvs = []
    for j in range(ny + 1):
        for i in range(nx + 1):
            x, y = xs[i], ys[j]
            if jitter > 0 and 0 < i < nx and 0 < j < ny:
                x += rng.uniform(-jitter, jitter)
                y += rng.uniform(-jitter, jitter)
            h = height_fn(x, y) if height_fn else 0.0
            verts.append([x, y, h])
            uvs.append([x / size_m, 1.0 - y / size_m])
    verts = np.array(verts, dtype=np.float64)
    uvs = np.clip(np.array(uvs, dtype=np.float64), 0.0, 1.0)

    facets = []
    for j in range(ny):
        for i in range(nx):
            a = j * (nx + 1) + i
            b = a + 1
            c = a + nx + 2
            d = a + nx + 1
            facets.append([a, b, c])
            facets.append([a, c, d])
    facets = np.array(facets, dtype=np.int32)
    if atlas_split is None:
        atlas_index = np.zeros(len(facets), dtype=np.int32)
    else:
        atlas_index = np.array([atlas_split(k) for k in range(len(facets))],
                               dtype=np.int32)
    return TexturedMesh(
        vertices=verts, facets=facets, uv_vertices=uvs.copy(),
        uv_facets=facets.copy(), atlas_index=atlas_index,
        atlases=[np.ascontiguousarray(a) for a in atlases]).validate()


def random_mesh(seed, max_facets=1000):
    """Randomized jittered grid mesh with 1-2 noise atlases."""
    rng = np.random.default_rng(seed)
    nx = int(rng.integers(2, 17))
    ny = int(rng.integers(2, 17))
    while 2 * nx * ny > max_facets:
        nx = max(2, nx // 2)
        ny = max(2, ny // 2)
    size = float(rng.uniform(4.0, 40.0))
    n_atlas = int(rng.integers(1, 3))
    dim = int(rng.integers(48, 129))
    atlases = [rng.integers(0, 256, size=(dim, dim, 3), dtype=np.uint8)
               for _ in range(n_atlas)]
    amp = float(rng.uniform(0.0, 0.5))
    phase = float(rng.uniform(0, 2 * np.pi))

    def height_fn(x, y):
        return amp * np.sin(0.3 * x + phase) * np.cos(0.2 * y)

    split = (None if n_atlas == 1
             else (lambda k: 0 if k < nx * ny else 1))
    cell = size / max(nx, ny)
    return grid_mesh(atlases, nx=nx, ny=ny, size_m=size,
                     height_fn=height_fn, atlas_split=split,
                     jitter=0.2 * cell, seed=int(rng.integers(1 << 31)))


def bump_mesh(nx=20, ny=20, size_m=20.0, plane_z=5.0, bump=0.5,
              bump_lo=8.0, bump_hi=12.0, atlas=None):
    """Plane at ``plane_z`` with a square bump; for flattening tests.

    Returns (mesh, in_bump) where in_bump flags vertices strictly inside the
    bump footprint (the ones a flattening pass should move back down).
    """
    if atlas is None:
        atlas = np.full((64, 64, 3), 128, dtype=np.uint8)

    def height_fn(x, y):
        if bump_lo < x < bump_hi and bump_lo < y < bump_hi:
            return plane_z + bump
        return plane_z

    mesh = grid_mesh([atlas], nx=nx, ny=ny, size_m=size_m,
                     height_fn=height_fn)
    in_bump = mesh.vertices[:, 2] > plane_z + 1e-9
    return mesh, in_bump


def road_scene(size_m=32.0, atlas_dim=256, seed=0):
    """Road-like textured scene with painted vehicles and geometry bumps.

    Returns (mesh, car_boxes_atlas) where boxes are (x_min, y_min, x_max,
    y_max) rectangles in atlas pixel units (equal to raster units when
    rendered at gsd = size_m / atlas_dim).
    """
    rng = np.random.default_rng(seed)
    atlas = np.empty((atlas_dim, atlas_dim, 3), dtype=np.float64)
    for c in range(3):
        atlas[..., c] = 95 + smooth_noise((atlas_dim, atlas_dim), rng, 4.0, 6.0)
    # dashed center line along x
    mid = atlas_dim // 2
    for x0 in range(8, atlas_dim - 8, 32):
        atlas[mid - 2:mid + 2, x0:x0 + 16] = 235
    # side lines
    atlas[mid - 60:mid - 58, :] = 210
    atlas[mid + 58:mid + 60, :] = 210

    cars = []
    lanes = [mid - 30, mid + 30]
    colors = [(200, 40, 40), (40, 60, 200), (230, 230, 230)]
    for i, cx in enumerate(range(40, atlas_dim - 60, 90)):
        cy = lanes[i % 2]
        w, h = int(rng.integers(26, 34)), int(rng.integers(14, 18))
        x0, y0 = cx, cy - h // 2
        col = colors[i % len(colors)]
        atlas[y0:y0 + h, x0:x0 + w] = col
        atlas[y0 + 2:y0 + h - 2, x0 + 6:x0 + w - 6] = tuple(
            int(c * 0.6) for c in col)
        cars.append((float(x0), float(y0), float(x0 + w), float(y0 + h)))
    atlas = np.clip(np.rint(atlas), 0, 255).astype(np.uint8)

    px2m = size_m / atlas_dim
    boxes_m = [(x0 * px2m, y0 * px2m, x1 * px2m, y1 * px2m)
               for x0, y0, x1, y1 in cars]

    def height_fn(x, y):
        for x0, y0, x1, y1 in boxes_m:
            if x0 + 0.2 < x < x1 - 0.2 and y0 + 0.2 < y < y1 - 0.2:
                return 0.35
        return 0.0

    mesh = grid_mesh([atlas], nx=32, ny=32, size_m=size_m,
                     height_fn=height_fn)
    return mesh, cars
