import * as fs from "node:fs";
import * as path from "node:path";
import * as tf from "@tensorflow/tfjs";
import { DecodedImage } from "./image";
import { Detection } from "./detector";

export class ModelError extends Error {}

// COCO class ids kept when a pretrained detector is plugged in
const CLASS_WHITELIST: Record<number, string> = {
  3: "car",
  6: "bus",
  8: "truck",
};

/** IO handler reading a graph-model directory (model.json + shards). */
function fileSystemHandler(dir: string): tf.io.IOHandler {
  return {
    load: async () => {
      const manifestPath = path.join(dir, "model.json");
      const manifest = JSON.parse(fs.readFileSync(manifestPath, "utf8"));
      const specs: tf.io.WeightsManifestEntry[] = [];
      const buffers: Buffer[] = [];
      for (const group of manifest.weightsManifest ?? []) {
        specs.push(...group.weights);
        for (const p of group.paths) {
          buffers.push(fs.readFileSync(path.join(dir, p)));
        }
      }
      const weightData = new Uint8Array(Buffer.concat(buffers)).buffer;
      return {
        modelTopology: manifest.modelTopology,
        format: manifest.format,
        generatedBy: manifest.generatedBy,
        convertedBy: manifest.convertedBy,
        weightSpecs: specs,
        weightData,
      };
    },
  };
}

/**
 * Run a pretrained single-shot detector graph (TF object-detection export:
 * detection_boxes / detection_scores / detection_classes outputs), keeping
 * only road-vehicle classes.  `source` is an http(s) URL of a model.json
 * or a local directory containing one.  Weight fetching needs network or
 * pre-downloaded files; failures raise ModelError.
 */
export async function detectWithModel(
  img: DecodedImage,
  source: string,
  threshold: number,
): Promise<Detection[]> {
  await tf.ready();
  let model: tf.GraphModel;
  try {
    model = /^https?:\/\//.test(source)
      ? await tf.loadGraphModel(source)
      : await tf.loadGraphModel(fileSystemHandler(source));
  } catch (err) {
    throw new ModelError(
      `cannot load model from ${source}: ${(err as Error).message}`);
  }

  const { width: w, height: h, data } = img;
  const rgba = tf.tensor3d(data, [h, w, 4], "int32");
  const input = tf.slice(rgba, [0, 0, 0], [h, w, 3]).expandDims(0);
  rgba.dispose();

  let outputs: tf.Tensor[];
  try {
    const res = await model.executeAsync(input, [
      "detection_boxes",
      "detection_scores",
      "detection_classes",
    ]);
    outputs = Array.isArray(res) ? res : [res];
  } catch (err) {
    input.dispose();
    throw new ModelError(`model execution failed: ${(err as Error).message}`);
  }
  input.dispose();

  const [boxes, scores, classes] = await Promise.all(
    outputs.map((t) => t.data()));
  outputs.forEach((t) => t.dispose());

  const dets: Detection[] = [];
  for (let i = 0; i < scores.length; i++) {
    const label = CLASS_WHITELIST[Math.round(classes[i])];
    if (!label || scores[i] < threshold) continue;
    // detector boxes are normalized [ymin, xmin, ymax, xmax]
    dets.push({
      x_min: Math.max(0, boxes[4 * i + 1] * w),
      y_min: Math.max(0, boxes[4 * i] * h),
      x_max: Math.min(w, boxes[4 * i + 3] * w),
      y_max: Math.min(h, boxes[4 * i + 2] * h),
      score: Math.min(1, scores[i]),
      label,
    });
  }
  dets.sort((a, b) => b.score - a.score);
  return dets;
}
