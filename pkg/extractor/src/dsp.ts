/**
 * Minimal spectral frontend: framing, Hann window, radix-2 FFT and a
 * mel-spaced triangular filterbank producing log band energies per frame.
 */

export const WINDOW_SECONDS = 0.025;
export const HOP_SECONDS = 0.02;
export const NUM_BANDS = 8;
const MIN_BAND_HZ = 80;
const LOG_FLOOR = 1e-10;

export function hannWindow(size: number): Float64Array {
  const w = new Float64Array(size);
  for (let i = 0; i < size; i++) {
    w[i] = 0.5 - 0.5 * Math.cos((2 * Math.PI * i) / size);
  }
  return w;
}

export function nextPowerOfTwo(n: number): number {
  let p = 1;
  while (p < n) p *= 2;
  return p;
}

/** In-place iterative radix-2 Cooley-Tukey transform; lengths must be powers of two. */
export function fft(re: Float64Array, im: Float64Array): void {
  const n = re.length;
  if (n !== im.length || (n & (n - 1)) !== 0) {
    throw new Error(`fft: length must be a power of two, got ${n}`);
  }
  for (let i = 1, j = 0; i < n; i++) {
    let bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      [re[i], re[j]] = [re[j], re[i]];
      [im[i], im[j]] = [im[j], im[i]];
    }
  }
  for (let len = 2; len <= n; len <<= 1) {
    const angle = (-2 * Math.PI) / len;
    const wRe = Math.cos(angle);
    const wIm = Math.sin(angle);
    for (let start = 0; start < n; start += len) {
      let curRe = 1;
      let curIm = 0;
      for (let k = 0; k < len / 2; k++) {
        const evenIdx = start + k;
        const oddIdx = start + k + len / 2;
        const oddRe = re[oddIdx] * curRe - im[oddIdx] * curIm;
        const oddIm = re[oddIdx] * curIm + im[oddIdx] * curRe;
        re[oddIdx] = re[evenIdx] - oddRe;
        im[oddIdx] = im[evenIdx] - oddIm;
        re[evenIdx] += oddRe;
        im[evenIdx] += oddIm;
        const nextRe = curRe * wRe - curIm * wIm;
        curIm = curRe * wIm + curIm * wRe;
        curRe = nextRe;
      }
    }
  }
}

/** Reference O(n^2) transform used to cross-check the fast version in tests. */
export function naiveDft(signal: Float64Array): { re: Float64Array; im: Float64Array } {
  const n = signal.length;
  const re = new Float64Array(n);
  const im = new Float64Array(n);
  for (let k = 0; k < n; k++) {
    for (let t = 0; t < n; t++) {
      const angle = (-2 * Math.PI * k * t) / n;
      re[k] += signal[t] * Math.cos(angle);
      im[k] += signal[t] * Math.sin(angle);
    }
  }
  return { re, im };
}

function melOfHz(hz: number): number {
  return 2595 * Math.log10(1 + hz / 700);
}

function hzOfMel(mel: number): number {
  return 700 * (Math.pow(10, mel / 2595) - 1);
}

/**
 * Triangular filters with mel-spaced centres over [MIN_BAND_HZ, 0.45 * sampleRate].
 * Returns one weight row of length fftSize/2+1 per band.
 */
export function melFilterbank(sampleRate: number, fftSize: number, numBands = NUM_BANDS): Float64Array[] {
  const maxHz = 0.45 * sampleRate;
  const loMel = melOfHz(MIN_BAND_HZ);
  const hiMel = melOfHz(maxHz);
  const edges: number[] = [];
  for (let i = 0; i < numBands + 2; i++) {
    edges.push(hzOfMel(loMel + ((hiMel - loMel) * i) / (numBands + 1)));
  }
  const bins = fftSize / 2 + 1;
  const hzPerBin = sampleRate / fftSize;
  const filters: Float64Array[] = [];
  for (let b = 0; b < numBands; b++) {
    const [lo, mid, hi] = [edges[b], edges[b + 1], edges[b + 2]];
    const row = new Float64Array(bins);
    for (let k = 0; k < bins; k++) {
      const hz = k * hzPerBin;
      if (hz > lo && hz < mid) row[k] = (hz - lo) / (mid - lo);
      else if (hz >= mid && hz < hi) row[k] = (hi - hz) / (hi - mid);
    }
    filters.push(row);
  }
  return filters;
}

export interface FrameAnalysis {
  /** Per-frame log band energies, each of length NUM_BANDS. */
  frames: Float64Array[];
  /** Frames per second implied by the hop size. */
  fps: number;
}

/** Slice audio into overlapping windows and reduce each to log filterbank energies. */
export function analyze(samples: Float64Array, sampleRate: number): FrameAnalysis {
  if (sampleRate <= 0) throw new Error(`analyze: bad sample rate ${sampleRate}`);
  const win = Math.round(WINDOW_SECONDS * sampleRate);
  const hop = Math.round(HOP_SECONDS * sampleRate);
  const fftSize = nextPowerOfTwo(win);
  const window = hannWindow(win);
  const filters = melFilterbank(sampleRate, fftSize);

  const frameCount = samples.length >= win ? 1 + Math.floor((samples.length - win) / hop) : 1;
  const frames: Float64Array[] = [];
  const re = new Float64Array(fftSize);
  const im = new Float64Array(fftSize);
  for (let f = 0; f < frameCount; f++) {
    re.fill(0);
    im.fill(0);
    const start = f * hop;
    const limit = Math.min(win, samples.length - start);
    for (let i = 0; i < limit; i++) {
      re[i] = samples[start + i] * window[i];
    }
    fft(re, im);
    const out = new Float64Array(filters.length);
    for (let b = 0; b < filters.length; b++) {
      const row = filters[b];
      let energy = 0;
      for (let k = 0; k < row.length; k++) {
        if (row[k] !== 0) energy += row[k] * (re[k] * re[k] + im[k] * im[k]);
      }
      out[b] = Math.log(energy + LOG_FLOOR);
    }
    frames.push(out);
  }
  return { frames, fps: sampleRate / hop };
}
