"""Command-line front end.

`roadmend run` drives the whole mesh-correction pipeline; `roadmend eval`
scores a completed raster against a reference.  Flag values may also come
from a flat key/value config file (same names as the flags, one per line,
`name = value`); explicit flags win over the file, the file wins over
defaults.
"""

import csv
import sys
from pathlib import Path

import click

from .complete import CompletionParams
from .pipeline import PipelineConfig, PipelineError, eval_row, run_pipeline


def parse_config_file(path):
    """Flat `name = value` lines; '#' starts a comment; names match flags."""
    values = {}
    for ln, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, val = line.partition("=")
        elif ":" in line:
            key, _, val = line.partition(":")
        else:
            raise click.UsageError(
                f"{path}:{ln}: expected 'name = value', got {raw!r}")
        values[key.strip().lstrip("-")] = val.strip().strip("'\"")
    return values


def apply_config_file(ctx, config_path):
    """Fill params still at their defaults from the config file."""
    if not config_path:
        return
    values = parse_config_file(config_path)
    by_name = {}
    for param in ctx.command.params:
        for opt in param.opts:
            by_name[opt.lstrip("-")] = param
    unknown = set(values) - set(by_name)
    if unknown:
        raise click.UsageError(
            f"unknown config keys: {', '.join(sorted(unknown))}")
    for key, raw in values.items():
        param = by_name[key]
        src = ctx.get_parameter_source(param.name)
        if src is not None and src.name != "DEFAULT":
            continue
        if param.is_flag:
            val = click.BOOL.convert(raw, param, ctx)
        else:
            val = param.type.convert(raw, param, ctx)
        ctx.params[param.name] = val


def parse_roi(value):
    if value is None:
        return None
    parts = [p for p in value.replace(",", " ").split() if p]
    try:
        floats = tuple(float(p) for p in parts)
    except ValueError:
        raise click.BadParameter(f"roi values must be numbers: {value!r}")
    if len(floats) not in (4, 6):
        raise click.BadParameter(
            "roi needs x_min,y_min,x_max,y_max[,z_min,z_max]")
    return floats


@click.group()
@click.version_option()
def main():
    """Remove vehicles from textured road meshes."""


@main.command()
@click.option("--input", "input_", required=False, type=click.Path(exists=True),
              help="Mesh bundle: an .obj file or a directory of them.")
@click.option("--roi", type=str, default=None,
              help="Ground rectangle x_min,y_min,x_max,y_max[,z_min,z_max].")
@click.option("--gsd", type=float, default=0.05, show_default=True,
              help="Ground sampling distance in metres per pixel.")
@click.option("--up-axis", type=click.Choice(["z", "y", "x"]), default="z",
              show_default=True, help="World axis treated as height.")
@click.option("--mask", "mask_", type=click.Path(exists=True), default=None,
              help="Vehicle mask image (nonzero = remove).")
@click.option("--bboxes", type=click.Path(exists=True), default=None,
              help="Vehicle bounding-box JSON.")
@click.option("--detect-cmd", type=str, default=None,
              help="External detector; invoked as CMD <image> --out <json>.")
@click.option("--out", required=False, type=click.Path(),
              help="Output directory.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--patch-size", type=int, default=21, show_default=True)
@click.option("--lambda1", type=float, default=5e-4, show_default=True,
              help="Position-term weight.")
@click.option("--lambda2", type=float, default=0.5, show_default=True,
              help="Direction-term weight.")
@click.option("--iters", type=int, default=5, show_default=True,
              help="Optimization passes per pyramid level.")
@click.option("--edge-threshold", type=int, default=40, show_default=True,
              help="Gradient magnitude cutoff for the priority map.")
@click.option("--synthesis", type=click.Choice(["vote", "copy"]),
              default="vote", show_default=True)
@click.option("--no-directional-guidance", is_flag=True, default=False,
              help="Disable direction-guided search (ablation).")
@click.option("--no-linear-ordering", is_flag=True, default=False,
              help="Scanline queue order instead of edge priority (ablation).")
@click.option("--eval-ref", type=click.Path(exists=True), default=None,
              help="Reference raster; adds PSNR/SSIM to the report.")
@click.option("--dump-debug", is_flag=True, default=False,
              help="Write edge maps, offset CSV, and per-pass snapshots.")
@click.option("--literal-regularity", is_flag=True, default=False, hidden=True,
              help="Signed-cosine direction penalty variant.")
@click.option("--config", "config_file", type=click.Path(exists=True),
              default=None, help="Flat key/value file with these flag names.")
@click.pass_context
def run(ctx, input_, roi, gsd, up_axis, mask_, bboxes, detect_cmd, out, seed,
        patch_size, lambda1, lambda2, iters, edge_threshold, synthesis,
        no_directional_guidance, no_linear_ordering, eval_ref, dump_debug,
        literal_regularity, config_file):
    """Run the correction pipeline on one mesh bundle."""
    apply_config_file(ctx, config_file)
    p = ctx.params
    if not p["input_"]:
        raise click.UsageError("--input is required (flag or config file)")
    if not p["out"]:
        raise click.UsageError("--out is required (flag or config file)")
    completion = CompletionParams(
        patch_size=p["patch_size"], lambda1=p["lambda1"],
        lambda2=p["lambda2"], iterations=p["iters"],
        synthesis=p["synthesis"],
        directional_guidance=not p["no_directional_guidance"],
        linear_ordering=not p["no_linear_ordering"],
        literal_regularity=p["literal_regularity"],
        edge_threshold=p["edge_threshold"])
    config = PipelineConfig(
        input=p["input_"], out=p["out"], roi=parse_roi(p["roi"]),
        gsd=p["gsd"], up_axis=p["up_axis"], mask_path=p["mask_"],
        bboxes_path=p["bboxes"], detect_cmd=p["detect_cmd"], seed=p["seed"],
        completion=completion, eval_ref=p["eval_ref"],
        dump_debug=p["dump_debug"])
    try:
        report = run_pipeline(config)
    except (PipelineError, ValueError) as exc:
        raise click.ClickException(str(exc))
    note = report["stages"].get("mask", {}).get("note", "")
    click.echo(f"done: {report['params']['out']}" + (f" ({note})" if note else ""))


@main.command("eval")
@click.argument("completed", type=click.Path(exists=True))
@click.argument("reference", type=click.Path(exists=True))
@click.option("--region", type=click.Path(exists=True), default=None,
              help="Mask image; nonzero pixels are scored.")
@click.option("--dataset", default="-", show_default=True)
@click.option("--method", default="-", show_default=True)
@click.option("--csv", "csv_path", type=click.Path(), default=None,
              help="Append the row to this file instead of stdout.")
def eval_cmd(completed, reference, region, dataset, method, csv_path):
    """Score COMPLETED against REFERENCE; emits dataset,method,PSNR,SSIM."""
    try:
        row = eval_row(completed, reference, region, dataset, method)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    if csv_path:
        new = not Path(csv_path).exists()
        with open(csv_path, "a", newline="") as fh:
            wtr = csv.writer(fh)
            if new:
                wtr.writerow(["dataset", "method", "psnr_db", "ssim"])
            wtr.writerow(row)
    else:
        csv.writer(sys.stdout).writerow(row)


if __name__ == "__main__":
    main()
