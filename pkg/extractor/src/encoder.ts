import { FrameAnalysis, NUM_BANDS } from "./dsp";

/**
 * Deterministic layered encoder. Each of the LAYER_COUNT stages applies a
 * fixed seeded mixing of the normalized filterbank frames with progressively
 * wider temporal smoothing, so deeper layers summarize longer context. The
 * same audio always yields bit-identical features.
 */

export const LAYER_COUNT = 24;
export const FEATURE_DIM = NUM_BANDS;

const LAYER_SEED = 0x5f3759df;

/** Small deterministic PRNG (mulberry32) for building the fixed layer weights. */
function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

interface LayerWeights {
  mix: Float64Array; // FEATURE_DIM x FEATURE_DIM, row-major
  bias: Float64Array;
  smoothRadius: number;
}

function buildLayerWeights(layer: number): LayerWeights {
  const rand = mulberry32((LAYER_SEED ^ Math.imul(layer + 1, 0x9e3779b9)) >>> 0);
  const scale = 1 / Math.sqrt(FEATURE_DIM);
  const mix = new Float64Array(FEATURE_DIM * FEATURE_DIM);
  for (let i = 0; i < mix.length; i++) {
    mix[i] = (2 * rand() - 1) * scale;
  }
  const bias = new Float64Array(FEATURE_DIM);
  for (let i = 0; i < bias.length; i++) {
    bias[i] = 0.1 * (2 * rand() - 1);
  }
  return { mix, bias, smoothRadius: Math.floor(layer / 8) };
}

const LAYERS: LayerWeights[] = [];
for (let l = 0; l < LAYER_COUNT; l++) {
  LAYERS.push(buildLayerWeights(l));
}

/** Normalize each band to zero mean / unit variance across the recording. */
function normalizeFrames(frames: Float64Array[]): Float64Array[] {
  const t = frames.length;
  const mean = new Float64Array(FEATURE_DIM);
  const varAcc = new Float64Array(FEATURE_DIM);
  for (const frame of frames) {
    for (let d = 0; d < FEATURE_DIM; d++) mean[d] += frame[d];
  }
  for (let d = 0; d < FEATURE_DIM; d++) mean[d] /= t;
  for (const frame of frames) {
    for (let d = 0; d < FEATURE_DIM; d++) {
      const delta = frame[d] - mean[d];
      varAcc[d] += delta * delta;
    }
  }
  const std = new Float64Array(FEATURE_DIM);
  for (let d = 0; d < FEATURE_DIM; d++) {
    std[d] = Math.sqrt(varAcc[d] / t) || 1;
  }
  return frames.map((frame) => {
    const z = new Float64Array(FEATURE_DIM);
    for (let d = 0; d < FEATURE_DIM; d++) z[d] = (frame[d] - mean[d]) / std[d];
    return z;
  });
}

function smoothInTime(frames: Float64Array[], radius: number): Float64Array[] {
  if (radius === 0) return frames;
  const t = frames.length;
  return frames.map((_, i) => {
    const out = new Float64Array(FEATURE_DIM);
    const lo = Math.max(0, i - radius);
    const hi = Math.min(t - 1, i + radius);
    for (let j = lo; j <= hi; j++) {
      for (let d = 0; d < FEATURE_DIM; d++) out[d] += frames[j][d];
    }
    for (let d = 0; d < FEATURE_DIM; d++) out[d] /= hi - lo + 1;
    return out;
  });
}

function applyLayer(frames: Float64Array[], weights: LayerWeights): Float64Array[] {
  const smoothed = smoothInTime(frames, weights.smoothRadius);
  return smoothed.map((frame) => {
    const out = new Float64Array(FEATURE_DIM);
    for (let i = 0; i < FEATURE_DIM; i++) {
      let acc = weights.bias[i];
      for (let j = 0; j < FEATURE_DIM; j++) {
        acc += weights.mix[i * FEATURE_DIM + j] * frame[j];
      }
      out[i] = Math.tanh(acc) + 0.1 * frame[i];
    }
    return out;
  });
}

export interface LayeredFeatures {
  /** Layer-major flat buffer, layers * frames * FEATURE_DIM float32 values. */
  data: Float32Array;
  layers: number;
  frames: number;
  dim: number;
  fps: number;
}

/** Run all layers over one recording's frame analysis. */
export function encode(analysis: FrameAnalysis): LayeredFeatures {
  const t = analysis.frames.length;
  if (t === 0) throw new Error("encode: no frames");
  let current = normalizeFrames(analysis.frames);
  const data = new Float32Array(LAYER_COUNT * t * FEATURE_DIM);
  for (let l = 0; l < LAYER_COUNT; l++) {
    current = applyLayer(current, LAYERS[l]);
    for (let i = 0; i < t; i++) {
      data.set(current[i], (l * t + i) * FEATURE_DIM);
    }
  }
  return { data, layers: LAYER_COUNT, frames: t, dim: FEATURE_DIM, fps: analysis.fps };
}
