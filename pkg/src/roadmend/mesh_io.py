"""Textured mesh bundles: Wavefront geometry + UV mesh + one or more PNG atlases.

A bundle is a single ``.obj`` (with ``mtllib``/``usemtl`` material switches, one
material per atlas) or a directory of such bundles (tiles) treated as one
logical mesh with concatenated facet lists.  Loading and saving round-trip
vertices and facets exactly and atlas pixels bit-exactly.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

UV_EPS = 1e-4  # tolerated UV overshoot outside [0, 1]; clamped on load


class MeshBundleError(ValueError):
    """Raised for malformed or inconsistent mesh bundles."""


@dataclass
class Texel:
    """Continuous texture coordinate in pixel units, origin at the top-left.

    ``u`` grows to the right and ``v`` downward; integer values sit on texel
    centers.  Valid range is [0, width-1] x [0, height-1] of the atlas.
    """

    u: float
    v: float
    atlas_id: int


@dataclass
class TexturedMesh:
    """Geometry mesh + UV mesh in facet correspondence + texture atlases.

    ``facets[k]`` and ``uv_facets[k]`` describe the same surface triangle; the
    facet's texture lives in ``atlases[atlas_index[k]]``.  UV coordinates are
    stored in the file convention (origin bottom-left, [0, 1] range); use
    :meth:`uv_to_texel` for image-space coordinates.
    """

    vertices: np.ndarray        # (N, 3) float64
    facets: np.ndarray          # (M, 3) int32 indices into vertices
    uv_vertices: np.ndarray     # (N', 2) float64 in [0, 1]^2
    uv_facets: np.ndarray       # (M, 3) int32 indices into uv_vertices
    atlas_index: np.ndarray     # (M,) int32 atlas id per facet
    atlases: list = field(default_factory=list)  # list of (H, W, 3) uint8

    @property
    def n_facets(self):
        return len(self.facets)

    def validate(self):
        """Check the type invariants; returns self, raises MeshBundleError."""
        if len(self.facets) != len(self.uv_facets):
            raise MeshBundleError(
                f"|F| != |F'| ({len(self.facets)} geometry facets vs "
                f"{len(self.uv_facets)} uv facets)")
        if len(self.atlas_index) != len(self.facets):
            raise MeshBundleError("atlas_index length != facet count")
        if self.facets.size and self.facets.max(initial=-1) >= len(self.vertices):
            raise MeshBundleError("geometry facet references vertex out of range")
        if self.facets.size and self.facets.min(initial=0) < 0:
            raise MeshBundleError("negative vertex index")
        if self.uv_facets.size and self.uv_facets.max(initial=-1) >= len(self.uv_vertices):
            raise MeshBundleError("uv facet references uv vertex out of range")
        if self.atlas_index.size and self.atlas_index.max(initial=-1) >= len(self.atlases):
            raise MeshBundleError("facet references missing atlas")
        if self.uv_vertices.size:
            lo, hi = self.uv_vertices.min(), self.uv_vertices.max()
            if lo < 0.0 or hi > 1.0:
                raise MeshBundleError(f"uv coordinates outside [0,1]: [{lo}, {hi}]")
        for i, a in enumerate(self.atlases):
            if a.ndim != 3 or a.shape[2] != 3 or a.dtype != np.uint8:
                raise MeshBundleError(
                    f"atlas {i} must be (H, W, 3) uint8, got "
                    f"{a.shape} {a.dtype}")
        return self

    def uv_to_texel(self, uv, atlas_id):
        """Map file-convention UVs (n, 2) to top-left texel coords (n, 2).

        Output integer coordinates sit on texel centers and are clipped to
        [0, width-1] x [0, height-1].
        """
        h, w = self.atlases[atlas_id].shape[:2]
        uv = np.asarray(uv, dtype=np.float64)
        tex = np.empty_like(uv)
        tex[..., 0] = np.clip(uv[..., 0] * w - 0.5, 0.0, w - 1.0)
        tex[..., 1] = np.clip((1.0 - uv[..., 1]) * h - 0.5, 0.0, h - 1.0)
        return tex

    def copy(self):
        return TexturedMesh(
            vertices=self.vertices.copy(),
            facets=self.facets.copy(),
            uv_vertices=self.uv_vertices.copy(),
            uv_facets=self.uv_facets.copy(),
            atlas_index=self.atlas_index.copy(),
            atlases=[a.copy() for a in self.atlases],
        )


def _read_atlas(path):
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            return np.asarray(rgb, dtype=np.uint8).copy()
    except FileNotFoundError:
        raise MeshBundleError(f"texture image not found: {path}")
    except OSError as exc:
        raise MeshBundleError(f"unreadable texture image {path}: {exc}")


def _parse_mtl(path):
    """Return list of (material name, texture path) in file order."""
    materials = []
    current = None
    for raw in path.read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(None, 1)
        if parts[0] == "newmtl" and len(parts) == 2:
            current = parts[1].strip()
            materials.append((current, None))
        elif parts[0] == "map_Kd" and len(parts) == 2:
            if current is None:
                raise MeshBundleError(f"{path}: map_Kd before newmtl")
            materials[-1] = (current, path.parent / parts[1].strip())
    return materials


def _load_single(obj_path):
    obj_path = Path(obj_path)
    if not obj_path.is_file():
        raise MeshBundleError(f"mesh bundle not found: {obj_path}")

    vertices, uvs = [], []
    facets, uv_facets, atlas_ids = [], [], []
    materials = []          # (name, texture path)
    mat_by_name = {}
    current_mat = 0
    missing_uv = False

    for raw in obj_path.read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            vertices.append([float(x) for x in parts[1:4]])
        elif tag == "vt":
            uvs.append([float(parts[1]), float(parts[2])])
        elif tag == "mtllib":
            mtl_path = obj_path.parent / line.split(None, 1)[1].strip()
            if not mtl_path.is_file():
                raise MeshBundleError(f"material file not found: {mtl_path}")
            for name, tex in _parse_mtl(mtl_path):
                if name not in mat_by_name:
                    mat_by_name[name] = len(materials)
                    materials.append((name, tex))
        elif tag == "usemtl":
            name = line.split(None, 1)[1].strip()
            if name not in mat_by_name:
                # tolerate missing mtllib declarations, one implicit texture-less material
                mat_by_name[name] = len(materials)
                materials.append((name, None))
            current_mat = mat_by_name[name]
        elif tag == "f":
            if len(parts) != 4:
                raise MeshBundleError(
                    f"{obj_path}: only triangular facets are supported: {line!r}")
            tri_v, tri_t = [], []
            for spec in parts[1:]:
                fields = spec.split("/")
                tri_v.append(int(fields[0]))
                if len(fields) >= 2 and fields[1]:
                    tri_t.append(int(fields[1]))
            facets.append(tri_v)
            if len(tri_t) == 3:
                uv_facets.append(tri_t)
            else:
                missing_uv = True
            atlas_ids.append(current_mat)

    if missing_uv or len(facets) != len(uv_facets):
        raise MeshBundleError(
            f"{obj_path}: |F| != |F'| (facet without texture coordinates)")

    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    uvs = np.asarray(uvs, dtype=np.float64).reshape(-1, 2)
    facets = np.asarray(facets, dtype=np.int32) - 1       # obj is 1-based
    uv_facets = np.asarray(uv_facets, dtype=np.int32) - 1
    facets = facets.reshape(-1, 3)
    uv_facets = uv_facets.reshape(-1, 3)
    if facets.size and (facets.min() < 0 or facets.max() >= len(vertices)):
        raise MeshBundleError(f"{obj_path}: vertex index out of range")
    if uv_facets.size and (uv_facets.min() < 0 or uv_facets.max() >= len(uvs)):
        raise MeshBundleError(f"{obj_path}: uv vertex index out of range")

    if uvs.size:
        lo, hi = uvs.min(), uvs.max()
        if lo < -UV_EPS or hi > 1.0 + UV_EPS:
            raise MeshBundleError(
                f"{obj_path}: uv coordinates outside [-{UV_EPS}, 1+{UV_EPS}]: "
                f"range [{lo}, {hi}]")
        np.clip(uvs, 0.0, 1.0, out=uvs)

    atlases = []
    for name, tex in materials:
        if tex is None:
            raise MeshBundleError(
                f"{obj_path}: material {name!r} has no map_Kd texture")
        atlases.append(_read_atlas(tex))
    if not atlases:
        raise MeshBundleError(f"{obj_path}: bundle declares no texture atlas")

    mesh = TexturedMesh(
        vertices=vertices,
        facets=facets,
        uv_vertices=uvs,
        uv_facets=uv_facets,
        atlas_index=np.asarray(atlas_ids, dtype=np.int32),
        atlases=atlases,
    )
    mesh.validate()
    _warn_if_nonmanifold(mesh, obj_path)
    return mesh


def _warn_if_nonmanifold(mesh, origin):
    # The pipeline never needs manifoldness; photogrammetric meshes routinely
    # violate it, so this is informational only.
    if mesh.facets.size == 0:
        return
    edges = np.concatenate([
        mesh.facets[:, [0, 1]], mesh.facets[:, [1, 2]], mesh.facets[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    if (counts > 2).any():
        log.warning("%s: non-manifold mesh (%d edges shared by >2 facets)",
                    origin, int((counts > 2).sum()))


def _merge(meshes):
    v_off = t_off = a_off = 0
    vs, ts, fs, tfs, ais, atlases = [], [], [], [], [], []
    for m in meshes:
        vs.append(m.vertices)
        ts.append(m.uv_vertices)
        fs.append(m.facets + v_off)
        tfs.append(m.uv_facets + t_off)
        ais.append(m.atlas_index + a_off)
        atlases.extend(m.atlases)
        v_off += len(m.vertices)
        t_off += len(m.uv_vertices)
        a_off += len(m.atlases)
    return TexturedMesh(
        vertices=np.concatenate(vs),
        facets=np.concatenate(fs),
        uv_vertices=np.concatenate(ts),
        uv_facets=np.concatenate(tfs),
        atlas_index=np.concatenate(ais),
        atlases=atlases,
    )


def load_textured_mesh(path):
    """Load a mesh bundle (single .obj or a directory of tile bundles).

    Directory input: every ``*.obj`` below the directory, sorted by path, is
    loaded and concatenated into one logical mesh.
    """
    path = Path(path)
    if path.is_dir():
        objs = sorted(path.rglob("*.obj"))
        if not objs:
            raise MeshBundleError(f"no .obj bundles under {path}")
        mesh = _merge([_load_single(p) for p in objs])
        mesh.validate()
        return mesh
    return _load_single(path)


def _fmt(x):
    # repr() of a Python float is the shortest string that round-trips exactly
    return repr(float(x))


def save_textured_mesh(mesh, path):
    """Write ``mesh`` as a single bundle: path.obj + path.mtl + PNG atlases.

    ``path`` names the .obj file (the suffix may be omitted).  Floats are
    written in round-trip precision so load(save(mesh)) reproduces vertices
    exactly; atlases are written as lossless PNG.
    """
    mesh.validate()
    obj_path = Path(path)
    if obj_path.suffix != ".obj":
        obj_path = obj_path.with_suffix(".obj")
    stem = obj_path.stem
    mtl_path = obj_path.with_suffix(".mtl")
    out_dir = obj_path.parent
    try:
        out_dir.mkdir(parents=True, exist_ok=True)

        atlas_names = [f"{stem}_atlas{i:03d}" for i in range(len(mesh.atlases))]
        with mtl_path.open("w") as f:
            for name, atlas in zip(atlas_names, mesh.atlases):
                f.write(f"newmtl {name}\n")
                f.write(f"map_Kd {name}.png\n")
        for name, atlas in zip(atlas_names, mesh.atlases):
            Image.fromarray(atlas, mode="RGB").save(out_dir / f"{name}.png")

        with obj_path.open("w") as f:
            f.write(f"mtllib {mtl_path.name}\n")
            for v in mesh.vertices:
                f.write(f"v {_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}\n")
            for t in mesh.uv_vertices:
                f.write(f"vt {_fmt(t[0])} {_fmt(t[1])}\n")
            current = -1
            for k in range(mesh.n_facets):
                aid = int(mesh.atlas_index[k])
                if aid != current:
                    f.write(f"usemtl {atlas_names[aid]}\n")
                    current = aid
                fv = mesh.facets[k] + 1
                ft = mesh.uv_facets[k] + 1
                f.write(f"f {fv[0]}/{ft[0]} {fv[1]}/{ft[1]} {fv[2]}/{ft[2]}\n")
    except OSError as exc:
        raise MeshBundleError(f"cannot write mesh bundle to {obj_path}: {exc}")
    return obj_path
