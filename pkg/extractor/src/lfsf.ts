import * as fs from "fs";
import { LayeredFeatures } from "./encoder";

/**
 * Layered feature serialization. Binary layout, little-endian throughout:
 *
 *   bytes 0..3    magic "LFSF"
 *   bytes 4..7    u32 format version (currently 1)
 *   bytes 8..19   u32 layers, u32 frames, u32 dim
 *   bytes 20..23  f32 frames-per-second
 *   bytes 24..31  reserved, zero
 *   bytes 32..    layers * frames * dim f32 values, layer-major
 */

export const MAGIC = "LFSF";
export const VERSION = 1;
export const HEADER_SIZE = 32;

export function encodeLfsf(features: LayeredFeatures): Buffer {
  const { data, layers, frames, dim, fps } = features;
  if (data.length !== layers * frames * dim) {
    throw new Error(`encodeLfsf: buffer has ${data.length} values, expected ${layers * frames * dim}`);
  }
  const header = Buffer.alloc(HEADER_SIZE);
  header.write(MAGIC, 0, "ascii");
  header.writeUInt32LE(VERSION, 4);
  header.writeUInt32LE(layers, 8);
  header.writeUInt32LE(frames, 12);
  header.writeUInt32LE(dim, 16);
  header.writeFloatLE(fps, 20);
  const payload = Buffer.from(data.buffer, data.byteOffset, data.byteLength);
  return Buffer.concat([header, payload]);
}

export function writeLfsf(path: string, features: LayeredFeatures): void {
  fs.writeFileSync(path, encodeLfsf(features));
}

export interface DecodedLfsf {
  data: Float32Array;
  layers: number;
  frames: number;
  dim: number;
  fps: number;
}

/** Parse and fully validate an LFSF buffer; throws on any structural problem. */
export function decodeLfsf(buf: Buffer, label = "buffer"): DecodedLfsf {
  if (buf.length < HEADER_SIZE) {
    throw new Error(`${label}: truncated header (${buf.length} bytes)`);
  }
  if (buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new Error(`${label}: bad magic`);
  }
  const version = buf.readUInt32LE(4);
  if (version !== VERSION) {
    throw new Error(`${label}: unsupported version ${version}`);
  }
  const layers = buf.readUInt32LE(8);
  const frames = buf.readUInt32LE(12);
  const dim = buf.readUInt32LE(16);
  const fps = buf.readFloatLE(20);
  if (layers < 1 || frames < 1 || dim < 1) {
    throw new Error(`${label}: invalid dimensions ${layers}x${frames}x${dim}`);
  }
  const expected = layers * frames * dim * 4;
  const payload = buf.length - HEADER_SIZE;
  if (payload < expected) {
    throw new Error(`${label}: truncated payload (${payload} of ${expected} bytes)`);
  }
  if (payload > expected) {
    throw new Error(`${label}: trailing bytes after payload (${payload - expected})`);
  }
  const data = new Float32Array(layers * frames * dim);
  for (let i = 0; i < data.length; i++) {
    data[i] = buf.readFloatLE(HEADER_SIZE + 4 * i);
  }
  for (let i = 0; i < data.length; i++) {
    if (!Number.isFinite(data[i])) {
      throw new Error(`${label}: non-finite value at index ${i}`);
    }
  }
  if (!(fps > 0) || !Number.isFinite(fps)) {
    throw new Error(`${label}: invalid fps ${fps}`);
  }
  return { data, layers, frames, dim, fps };
}

export function readLfsf(path: string): DecodedLfsf {
  return decodeLfsf(fs.readFileSync(path), path);
}
