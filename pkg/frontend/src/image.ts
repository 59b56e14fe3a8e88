import * as fs from "node:fs";
import { PNG } from "pngjs";
import * as jpeg from "jpeg-js";

export interface DecodedImage {
  width: number;
  height: number;
  /** RGBA interleaved, 4 bytes per pixel. */
  data: Uint8Array;
}

export class ImageError extends Error {}

/** Decode a PNG or JPEG file by magic bytes, not extension. */
export function readImage(path: string): DecodedImage {
  let buf: Buffer;
  try {
    buf = fs.readFileSync(path);
  } catch (err) {
    throw new ImageError(`cannot read image ${path}: ${(err as Error).message}`);
  }
  try {
    if (buf.length >= 8 && buf[0] === 0x89 && buf[1] === 0x50) {
      const png = PNG.sync.read(buf);
      return { width: png.width, height: png.height, data: new Uint8Array(png.data) };
    }
    if (buf.length >= 2 && buf[0] === 0xff && buf[1] === 0xd8) {
      const img = jpeg.decode(buf, { useTArray: true, maxMemoryUsageInMB: 1024 });
      return { width: img.width, height: img.height, data: new Uint8Array(img.data) };
    }
  } catch (err) {
    throw new ImageError(`cannot decode image ${path}: ${(err as Error).message}`);
  }
  throw new ImageError(`cannot decode image ${path}: not a PNG or JPEG`);
}
