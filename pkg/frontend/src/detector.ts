import * as tf from "@tensorflow/tfjs";
import { DecodedImage } from "./image";

export interface Detection {
  x_min: number;
  y_min: number;
  x_max: number;
  y_max: number;
  score: number;
  label: string;
}

// fixed sensitivity of the builtin detector; the CLI threshold filters
// the resulting per-blob scores, it does not change these
const BLUR_SIZE = 15;
const RESPONSE_CUTOFF = 0.1;
const SCORE_SCALE = 0.2;
const MIN_AREA_PX = 25;

/**
 * Deterministic contrast detector with hand-set weights.
 *
 * Objects that differ from the local road surface light up in
 * |gray - localAverage|; connected response blobs become boxes scored by
 * their mean response.  A constant image produces no response anywhere,
 * so it yields zero boxes by construction.  No weights are learned and
 * nothing is fetched at runtime.
 */
export async function detectBuiltin(
  img: DecodedImage,
  threshold: number,
): Promise<Detection[]> {
  await tf.ready();
  const { width: w, height: h, data } = img;

  const resp = tf.tidy(() => {
    const rgba = tf.tensor3d(data, [h, w, 4], "float32");
    const rgb = tf.slice(rgba, [0, 0, 0], [h, w, 3]).div(255.0);
    const grayWeights = tf.tensor1d([0.299, 0.587, 0.114]);
    const gray = tf.sum(tf.mul(rgb, grayWeights), 2).expandDims(2);
    const bg = tf.avgPool(
      gray.expandDims(0) as tf.Tensor4D, BLUR_SIZE, 1, "same");
    return tf.abs(gray.expandDims(0).sub(bg)).squeeze([0, 3]) as tf.Tensor2D;
  });
  const values = (await resp.data()) as Float32Array;
  resp.dispose();

  return groupResponses(values, w, h, threshold);
}

/** 8-connected components of above-cutoff response, scored and boxed. */
function groupResponses(
  resp: Float32Array,
  w: number,
  h: number,
  threshold: number,
): Detection[] {
  const seen = new Uint8Array(w * h);
  const out: Detection[] = [];
  const stack: number[] = [];

  for (let start = 0; start < w * h; start++) {
    if (seen[start] || resp[start] <= RESPONSE_CUTOFF) continue;
    let x0 = w, x1 = -1, y0 = h, y1 = -1;
    let area = 0;
    let sum = 0;
    seen[start] = 1;
    stack.push(start);
    while (stack.length) {
      const p = stack.pop()!;
      const px = p % w;
      const py = (p - px) / w;
      if (px < x0) x0 = px;
      if (px > x1) x1 = px;
      if (py < y0) y0 = py;
      if (py > y1) y1 = py;
      area++;
      sum += resp[p];
      for (let dy = -1; dy <= 1; dy++) {
        for (let dx = -1; dx <= 1; dx++) {
          const nx = px + dx;
          const ny = py + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const q = ny * w + nx;
          if (!seen[q] && resp[q] > RESPONSE_CUTOFF) {
            seen[q] = 1;
            stack.push(q);
          }
        }
      }
    }
    if (area < MIN_AREA_PX) continue;
    const score = Math.min(1.0, sum / area / SCORE_SCALE);
    if (score < threshold) continue;
    out.push({
      x_min: x0,
      y_min: y0,
      x_max: x1 + 1,
      y_max: y1 + 1,
      score,
      label: "vehicle",
    });
  }
  out.sort((a, b) => b.score - a.score);
  return out;
}
