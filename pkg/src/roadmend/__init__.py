"""roadmend: vehicle removal from textured road-surface meshes.

Renders a top-down view of the textured mesh, masks vehicle boxes, fills the
masked pixels with a structure-aware PatchMatch completion guided by repeated
road markings, writes the repaired pixels back into the texture atlases, and
flattens the vehicle geometry onto the road plane.
"""

__version__ = "0.1.0"

from .mesh_io import (MeshBundleError, TexturedMesh, load_textured_mesh,
                      save_textured_mesh)
from .raster import ProjectionSpec, RasterResult, build_projection, rasterize
from .remap import build_texel_map, deintegrate, flatten_vehicle_geometry
from .mask import MaskError, load_boxes, mask_from_boxes
from .regularity import detect_directions, prewitt_edges
from .complete import CompletionParams, complete_image
from .metrics import psnr, ssim

__all__ = [
    "MeshBundleError", "TexturedMesh", "load_textured_mesh",
    "save_textured_mesh", "ProjectionSpec", "RasterResult",
    "build_projection", "rasterize", "build_texel_map", "deintegrate",
    "flatten_vehicle_geometry", "MaskError", "load_boxes", "mask_from_boxes",
    "detect_directions", "prewitt_edges", "CompletionParams",
    "complete_image", "psnr", "ssim", "__version__",
]
