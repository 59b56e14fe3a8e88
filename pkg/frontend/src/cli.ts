#!/usr/bin/env node
import * as fs from "node:fs";
import * as path from "node:path";
import { parseArgs } from "node:util";
import { readImage, ImageError } from "./image";
import { detectBuiltin, Detection } from "./detector";
import { detectWithModel, ModelError } from "./ssd";

const USAGE = `usage: detect <image> --out <json> [--threshold t] [--model url|dir]

Detect vehicles in a top-down road image and write bounding boxes as JSON.
  <image>          PNG or JPEG input
  --out <json>     output path for the box file (required)
  --threshold t    minimum detection score in (0, 1] (default 0.5)
  --model m        optional pretrained detector graph (model.json URL or
                   directory); without it a deterministic builtin contrast
                   detector runs fully offline

exit codes: 0 success, 1 unreadable input, 2 usage error, 3 model failure`;

function fail(code: number, msg: string): never {
  process.stderr.write(`detect: ${msg}\n`);
  process.exit(code);
}

async function main(): Promise<void> {
  let args;
  try {
    args = parseArgs({
      args: process.argv.slice(2),
      options: {
        out: { type: "string" },
        threshold: { type: "string", default: "0.5" },
        model: { type: "string" },
        help: { type: "boolean", default: false },
      },
      allowPositionals: true,
    });
  } catch (err) {
    fail(2, `${(err as Error).message}\n${USAGE}`);
  }
  if (args.values.help) {
    process.stdout.write(USAGE + "\n");
    return;
  }
  if (args.positionals.length !== 1) {
    fail(2, `expected exactly one image argument\n${USAGE}`);
  }
  if (!args.values.out) {
    fail(2, `--out is required\n${USAGE}`);
  }
  const threshold = Number(args.values.threshold);
  if (!Number.isFinite(threshold) || threshold <= 0 || threshold > 1) {
    fail(2, `--threshold must be in (0, 1], got ${args.values.threshold}`);
  }

  let img;
  try {
    img = readImage(args.positionals[0]);
  } catch (err) {
    if (err instanceof ImageError) fail(1, err.message);
    throw err;
  }

  let boxes: Detection[];
  try {
    boxes = args.values.model
      ? await detectWithModel(img, args.values.model, threshold)
      : await detectBuiltin(img, threshold);
  } catch (err) {
    if (err instanceof ModelError) fail(3, err.message);
    throw err;
  }

  const doc = {
    image: { width: img.width, height: img.height },
    boxes,
  };
  const outPath = args.values.out!;
  fs.mkdirSync(path.dirname(path.resolve(outPath)), { recursive: true });
  fs.writeFileSync(outPath, JSON.stringify(doc, null, 2) + "\n");
  process.stdout.write(`detect: ${boxes.length} boxes -> ${outPath}\n`);
}

main().catch((err) => {
  process.stderr.write(`detect: unexpected error: ${err?.stack ?? err}\n`);
  process.exit(1);
});
