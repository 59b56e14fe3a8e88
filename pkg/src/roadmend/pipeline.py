"""End-to-end pipeline: render, mask, guide, complete, write back, flatten.

Stages run in a fixed order, each timed and reported; any failure aborts
with a stage-tagged error and removes the artifacts written so far.  All
randomized stages draw their seed from one root seed hashed with the stage
name, so a single --seed value makes the whole run reproducible.
"""

import csv
import hashlib
import json
import logging
import shlex
import shutil
import subprocess
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from . import __version__
from .backend import backend_name
from .complete import CompletionParams, complete_image
from .mask import (DEFAULT_DILATION, MaskError, load_boxes, load_mask,
                   mask_from_boxes)
from .mesh_io import load_textured_mesh, save_textured_mesh
from .metrics import psnr, ssim
from .raster import build_projection, rasterize, roi_from_mesh
from .regularity import detect_directions, prewitt_edges
from .remap import (build_texel_map, collect_masked_facets, deintegrate,
                    flatten_vehicle_geometry)

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class PipelineConfig:
    input: str
    out: str
    roi: tuple = None            # (g1_min, g2_min, g1_max, g2_max[, h_min, h_max])
    gsd: float = 0.05
    up_axis: str = "z"
    mask_path: str = None
    bboxes_path: str = None
    detect_cmd: str = None
    dilation: float = DEFAULT_DILATION
    seed: int = 0
    completion: CompletionParams = field(default_factory=CompletionParams)
    eval_ref: str = None
    dump_debug: bool = False

    def validate(self):
        sources = [s for s in (self.mask_path, self.bboxes_path,
                               self.detect_cmd) if s]
        if len(sources) > 1:
            raise ValueError("choose exactly one mask source "
                             "(--mask / --bboxes / --detect-cmd)")
        if not sources:
            raise ValueError("a mask source is required "
                             "(--mask / --bboxes / --detect-cmd)")
        if self.roi is not None:
            r = tuple(float(v) for v in self.roi)
            if len(r) not in (4, 6):
                raise ValueError(f"roi needs 4 or 6 values, got {len(r)}")
            if r[0] >= r[2] or r[1] >= r[3]:
                raise ValueError(f"roi is not well-ordered: {r}")
            if len(r) == 6 and r[4] >= r[5]:
                raise ValueError(f"roi height range is not well-ordered: {r}")
        if not self.gsd > 0:
            raise ValueError(f"gsd must be positive, got {self.gsd}")
        if not 0.0 <= self.dilation <= 1.0:
            raise ValueError(f"dilation must be in [0, 1], got {self.dilation}")
        self.completion.validate()
        return self


def stage_seed(root_seed, stage):
    """Per-stage seed: first 8 bytes of sha256("<root>:<stage>")."""
    digest = hashlib.sha256(f"{root_seed}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _save_png(path, arr):
    Image.fromarray(np.asarray(arr)).save(path)


def _world_roi(config, mesh):
    from .raster import _AXES
    g1, g2, up = _AXES[config.up_axis]
    box = roi_from_mesh(mesh, up_axis=config.up_axis)
    if config.roi is not None:
        r = tuple(float(v) for v in config.roi)
        box[0, g1], box[1, g1] = r[0], r[2]
        box[0, g2], box[1, g2] = r[1], r[3]
        if len(r) == 6:
            box[0, up], box[1, up] = r[4], r[5]
    return box


def _draw_boxes(img, boxes, dilation):
    vis = Image.fromarray(img).convert("RGB")
    d = ImageDraw.Draw(vis)
    for b in boxes:
        d.rectangle([b.x_min, b.y_min, b.x_max, b.y_max],
                    outline=(255, 40, 40), width=2)
        db = b.dilated(dilation)
        d.rectangle([db.x_min, db.y_min, db.x_max, db.y_max],
                    outline=(255, 170, 40), width=1)
    return np.asarray(vis)


def _mask_preview(img, mask):
    out = img.copy()
    out[mask] = 255
    return out


def nnf_to_rgb(nnf, void):
    """Offset field as hue (direction) / value (magnitude) image."""
    h, w = void.shape
    vx = nnf[..., 0].astype(np.float64)
    vy = nnf[..., 1].astype(np.float64)
    mag = np.hypot(vx, vy)
    ang = (np.arctan2(vy, vx) + np.pi) / (2 * np.pi)
    mmax = mag[void].max() if void.any() and mag[void].max() > 0 else 1.0
    hsv = np.zeros((h, w, 3), dtype=np.uint8)
    hsv[..., 0] = np.rint(ang * 179).astype(np.uint8)
    hsv[..., 1] = 255
    hsv[..., 2] = np.where(void, np.rint(255 * mag / mmax), 0).astype(np.uint8)
    import cv2
    return cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB)


def run_pipeline(config):
    """Execute every stage; returns the report dict (also written as JSON).

    Outputs under config.out: rendered.png, boxes.png (when boxes exist),
    masked.png, completed.png, corrected/<name>.obj bundle, report.json, and
    debug/ dumps when enabled.  On error all of them are removed.
    """
    t_all = time.perf_counter()
    out_dir = Path(config.out)
    artifacts = []
    report = {"version": __version__, "backend": backend_name(),
              "stages": {}, "timings_s": {}}
    current_stage = "config"

    def begin(stage):
        nonlocal current_stage
        current_stage = stage
        report["timings_s"][stage] = time.perf_counter()
        log.info("stage %s", stage)

    def done(stage):
        report["timings_s"][stage] = round(
            time.perf_counter() - report["timings_s"][stage], 4)

    def track(path):
        artifacts.append(Path(path))
        return Path(path)

    try:
        begin("config")
        config.validate()
        out_dir.mkdir(parents=True, exist_ok=True)
        report["params"] = {
            "input": str(config.input), "out": str(out_dir),
            "roi": list(config.roi) if config.roi else None,
            "gsd": config.gsd, "up_axis": config.up_axis,
            "mask_path": config.mask_path, "bboxes_path": config.bboxes_path,
            "detect_cmd": config.detect_cmd, "dilation": config.dilation,
            "seed": config.seed, "eval_ref": config.eval_ref,
            "dump_debug": config.dump_debug,
            "completion": asdict(config.completion),
        }
        report["stage_seeds"] = {
            s: stage_seed(config.seed, s)
            for s in ("regularity", "complete", "flatten")}
        done("config")

        begin("load")
        mesh = load_textured_mesh(config.input)
        report["stages"]["load"] = {
            "facets": int(mesh.n_facets), "atlases": len(mesh.atlases)}
        done("load")

        begin("integrate")
        roi = _world_roi(config, mesh)
        spec = build_projection(roi, config.gsd, config.up_axis)
        raster = rasterize(mesh, spec)
        report["params"]["resolved_roi"] = [list(r) for r in roi.tolist()]
        report["stages"]["integrate"] = {
            "viewport": [spec.width, spec.height],
            "rendered_pixels": int(raster.n_pixels)}
        _save_png(track(out_dir / "rendered.png"), raster.color)
        done("integrate")

        begin("mask")
        boxes = None
        if config.mask_path:
            mask = load_mask(config.mask_path, raster.shape)
            source = {"type": "mask_image", "path": str(config.mask_path)}
        else:
            if config.detect_cmd:
                bbox_path = track(out_dir / "boxes.json")
                argv = shlex.split(config.detect_cmd) + [
                    str(out_dir / "rendered.png"), "--out", str(bbox_path)]
                proc = subprocess.run(argv, capture_output=True, text=True)
                if proc.returncode != 0:
                    tail = (proc.stderr or proc.stdout or "").strip()[-400:]
                    raise MaskError(
                        f"detector command failed ({proc.returncode}): {tail}")
                source = {"type": "detect_cmd", "cmd": config.detect_cmd,
                          "bboxes": str(bbox_path)}
            else:
                bbox_path = Path(config.bboxes_path)
                source = {"type": "bboxes", "path": str(bbox_path)}
            boxes, dims = load_boxes(bbox_path)
            if dims != (spec.width, spec.height):
                raise MaskError(
                    f"box file is for a {dims[0]}x{dims[1]} image, raster is "
                    f"{spec.width}x{spec.height}")
            mask = mask_from_boxes(boxes, raster.shape, config.dilation)
            _save_png(track(out_dir / "boxes.png"),
                      _draw_boxes(raster.color, boxes, config.dilation))
        _save_png(track(out_dir / "masked.png"),
                  _mask_preview(raster.color, mask))
        n_void = int((mask & raster.valid).sum())
        report["stages"]["mask"] = {
            "source": source, "boxes": len(boxes) if boxes is not None else None,
            "mask_pixels": int(mask.sum()), "void_pixels": n_void,
            "note": f"{n_void} void pixels"}
        done("mask")

        if n_void == 0:
            begin("save")
            corrected = track(out_dir / "corrected")
            save_textured_mesh(mesh, corrected / (Path(config.input).stem + ".obj"))
            _save_png(track(out_dir / "completed.png"), raster.color)
            report["stages"]["save"] = {"corrected": str(corrected),
                                        "note": "no-op: 0 void pixels"}
            done("save")
            report["timings_s"]["total"] = round(time.perf_counter() - t_all, 4)
            _write_report(out_dir, report, track)
            return report

        dbg = None
        if config.dump_debug:
            dbg = track(out_dir / "debug")
            dbg.mkdir(parents=True, exist_ok=True)

        begin("regularity")
        void_or_invalid = mask | ~raster.valid
        if config.completion.directional_guidance:
            angles, reg_info = detect_directions(
                raster.color, void_or_invalid,
                stage_seed(config.seed, "regularity"))
        else:
            angles = np.array([])
            reg_info = {"status": "guidance disabled", "angles_deg": []}
        report["stages"]["regularity"] = reg_info
        if dbg is not None:
            edges = prewitt_edges(raster.color, void_or_invalid,
                                  config.completion.edge_threshold)
            _save_png(dbg / "edges.png",
                      (edges * np.uint8(255)).astype(np.uint8))
            from .regularity import match_offsets
            offs = match_offsets(raster.color, void_or_invalid)
            with open(dbg / "offsets.csv", "w", newline="") as fh:
                wtr = csv.writer(fh)
                wtr.writerow(["dx", "dy"])
                wtr.writerows(offs.tolist())
        done("regularity")

        begin("complete")
        params = CompletionParams(**{
            **asdict(config.completion),
            "seed": stage_seed(config.seed, "complete")})
        hook = None
        if dbg is not None:
            def hook(ev):
                tag = f"level{ev['level']}_pass{ev['pass_index']}"
                _save_png(dbg / f"{tag}.png", ev["img"])
                _save_png(dbg / f"{tag}_nnf.png",
                          nnf_to_rgb(ev["nnf_after"], ev["void"]))
        completed, cinfo = complete_image(raster.color, raster.valid, mask,
                                          angles, params, hook=hook)
        report["stages"]["complete"] = cinfo
        _save_png(track(out_dir / "completed.png"), completed)
        done("complete")

        begin("deintegrate")
        tmap = build_texel_map(mesh, raster)
        stats = {}
        mesh2 = deintegrate(completed, mask & raster.valid, tmap, mesh,
                            stats=stats)
        stats["unmapped_pixels"] = tmap.n_unmapped
        report["stages"]["deintegrate"] = stats
        done("deintegrate")

        begin("flatten")
        facets = collect_masked_facets(raster.facet, mask)
        mesh3 = flatten_vehicle_geometry(
            mesh2, facets, raster, mask,
            seed=stage_seed(config.seed, "flatten"))
        moved = int((mesh3.vertices != mesh2.vertices).any(axis=1).sum())
        report["stages"]["flatten"] = {
            "masked_facets": len(facets), "moved_vertices": moved}
        done("flatten")

        begin("save")
        corrected = track(out_dir / "corrected")
        save_textured_mesh(mesh3, corrected / (Path(config.input).stem + ".obj"))
        report["stages"]["save"] = {"corrected": str(corrected)}
        done("save")

        if config.eval_ref:
            begin("eval")
            report["stages"]["eval"] = evaluate_images(
                out_dir / "completed.png", config.eval_ref,
                region=mask & raster.valid)
            done("eval")

        report["timings_s"]["total"] = round(time.perf_counter() - t_all, 4)
        _write_report(out_dir, report, track)
        return report

    except Exception as exc:
        for p in reversed(artifacts):
            try:
                if p.is_dir():
                    shutil.rmtree(p, ignore_errors=True)
                elif p.exists():
                    p.unlink()
            except OSError:
                pass
        if isinstance(exc, PipelineError):
            raise
        raise PipelineError(current_stage, str(exc)) from exc


def _write_report(out_dir, report, track):
    path = track(out_dir / "report.json")
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, default=str)
        fh.write("\n")
    log.info("report written to %s", path)


def _load_image(path):
    return np.asarray(Image.open(path).convert("RGB"))


def evaluate_images(completed_path, reference_path, region=None):
    """PSNR/SSIM of two image files, whole-image and region-restricted."""
    a = _load_image(completed_path)
    b = _load_image(reference_path)
    out = {"psnr_db": psnr(a, b), "ssim": ssim(a, b)}
    if region is not None:
        region = np.asarray(region, dtype=bool)
        if region.any():
            out["psnr_db_region"] = psnr(a, b, region)
            out["ssim_region"] = ssim(a, b, region)
    return out


def eval_row(completed_path, reference_path, region_path=None,
             dataset="-", method="-"):
    """One CSV evaluation row: dataset, method, PSNR, SSIM."""
    region = None
    if region_path:
        r = np.asarray(Image.open(region_path).convert("L"))
        region = r > 127
    a = _load_image(completed_path)
    b = _load_image(reference_path)
    return [dataset, method,
            f"{psnr(a, b, region):.4f}", f"{ssim(a, b, region):.6f}"]
