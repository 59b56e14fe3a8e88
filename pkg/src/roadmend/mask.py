"""Void-region mask construction from bounding boxes or a mask image.

Boxes come from a detector as JSON (schema in bbox_schema.json, shared with
the detector sidecar).  Each box grows by a proportional dilation about its
center to swallow shadows, then a pixel is void iff its center falls in a
dilated box (closed).  A mask that leaves no known pixel is an error: the
completion stage needs something to copy from.
"""

import json
import logging
from dataclasses import dataclass
from importlib import resources

import jsonschema
import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

DEFAULT_DILATION = 0.10


class MaskError(ValueError):
    pass


@dataclass
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    score: float = 1.0
    label: str = "vehicle"

    def dilated(self, fraction):
        """Scale width and height by (1 + fraction) about the center."""
        cx = (self.x_min + self.x_max) / 2.0
        cy = (self.y_min + self.y_max) / 2.0
        hw = (self.x_max - self.x_min) / 2.0 * (1.0 + fraction)
        hh = (self.y_max - self.y_min) / 2.0 * (1.0 + fraction)
        return BoundingBox(cx - hw, cy - hh, cx + hw, cy + hh,
                           self.score, self.label)


def _schema():
    with resources.files("roadmend").joinpath("bbox_schema.json").open() as fh:
        return json.load(fh)


def load_boxes(path):
    """Read and validate a detector JSON file.

    Returns (boxes, (width, height)) where width/height are the image
    dimensions the detector saw.
    """
    with open(path) as fh:
        doc = json.load(fh)
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        raise MaskError(f"invalid box file {path}: {exc.message}") from exc
    boxes = [BoundingBox(b["x_min"], b["y_min"], b["x_max"], b["y_max"],
                         b["score"], b["label"]) for b in doc["boxes"]]
    dims = (int(doc["image"]["width"]), int(doc["image"]["height"]))
    return boxes, dims


def save_boxes(path, boxes, width, height):
    doc = {
        "image": {"width": int(width), "height": int(height)},
        "boxes": [{"x_min": float(b.x_min), "y_min": float(b.y_min),
                   "x_max": float(b.x_max), "y_max": float(b.y_max),
                   "score": float(b.score), "label": b.label}
                  for b in boxes],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def mask_from_boxes(boxes, shape, dilation=DEFAULT_DILATION):
    """OR all dilated boxes into a boolean void mask of ``shape`` (H, W).

    A pixel is void iff its center (i+0.5, j+0.5) lies inside the closed
    dilated box.  Errors: malformed box, box outside the image, dilation
    outside [0, 1], or a mask with no known pixel left.
    """
    if not 0.0 <= dilation <= 1.0:
        raise MaskError(f"dilation must be in [0, 1], got {dilation}")
    h, w = shape
    mask = np.zeros((h, w), dtype=bool)
    cx = np.arange(w, dtype=np.float64) + 0.5
    cy = np.arange(h, dtype=np.float64) + 0.5
    for b in boxes:
        if not (b.x_min < b.x_max and b.y_min < b.y_max):
            raise MaskError(f"degenerate box {b}")
        if b.x_max <= 0 or b.y_max <= 0 or b.x_min >= w or b.y_min >= h:
            raise MaskError(f"box {b} lies outside the {w}x{h} image")
        d = b.dilated(dilation)
        in_x = (cx >= d.x_min) & (cx <= d.x_max)
        in_y = (cy >= d.y_min) & (cy <= d.y_max)
        mask |= in_y[:, None] & in_x[None, :]
    if boxes and mask.all():
        raise MaskError("mask covers the full raster; no known pixels remain")
    return mask


def load_mask(path, shape):
    """Read a single-channel mask image; value > 127 means void."""
    img = Image.open(path)
    if img.mode not in ("L", "1", "I", "I;16"):
        img = img.convert("L")
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise MaskError(f"mask image {path} is not single-channel")
    if arr.shape != tuple(shape):
        raise MaskError(
            f"mask image {arr.shape} does not match raster {tuple(shape)}")
    mask = arr > 127
    if mask.all():
        raise MaskError("mask covers the full raster; no known pixels remain")
    return mask
