import * as fs from "fs";

export interface WavAudio {
  samples: Float64Array;
  sampleRate: number;
}

const FORMAT_PCM = 1;
const FORMAT_IEEE_FLOAT = 3;

/**
 * Read a mono RIFF/WAVE file. Supports 16-bit PCM and 32-bit IEEE float;
 * samples come back normalized to [-1, 1] doubles.
 */
export function readWav(path: string): WavAudio {
  const buf = fs.readFileSync(path);
  if (buf.length < 12 || buf.toString("ascii", 0, 4) !== "RIFF" || buf.toString("ascii", 8, 12) !== "WAVE") {
    throw new Error(`${path}: not a RIFF/WAVE file`);
  }

  let fmt: { format: number; channels: number; sampleRate: number; bitsPerSample: number } | null = null;
  let data: Buffer | null = null;

  let offset = 12;
  while (offset + 8 <= buf.length) {
    const chunkId = buf.toString("ascii", offset, offset + 4);
    const chunkSize = buf.readUInt32LE(offset + 4);
    const body = offset + 8;
    if (chunkId === "fmt ") {
      fmt = {
        format: buf.readUInt16LE(body),
        channels: buf.readUInt16LE(body + 2),
        sampleRate: buf.readUInt32LE(body + 4),
        bitsPerSample: buf.readUInt16LE(body + 14),
      };
    } else if (chunkId === "data") {
      data = buf.subarray(body, body + chunkSize);
    }
    // Chunks are word-aligned: odd sizes carry a pad byte.
    offset = body + chunkSize + (chunkSize % 2);
  }

  if (!fmt) throw new Error(`${path}: missing fmt chunk`);
  if (!data) throw new Error(`${path}: missing data chunk`);
  if (fmt.channels !== 1) {
    throw new Error(`${path}: expected mono audio, got ${fmt.channels} channels`);
  }

  let samples: Float64Array;
  if (fmt.format === FORMAT_PCM && fmt.bitsPerSample === 16) {
    const n = Math.floor(data.length / 2);
    samples = new Float64Array(n);
    for (let i = 0; i < n; i++) {
      samples[i] = data.readInt16LE(2 * i) / 32768;
    }
  } else if (fmt.format === FORMAT_IEEE_FLOAT && fmt.bitsPerSample === 32) {
    const n = Math.floor(data.length / 4);
    samples = new Float64Array(n);
    for (let i = 0; i < n; i++) {
      samples[i] = data.readFloatLE(4 * i);
    }
  } else {
    throw new Error(`${path}: unsupported format (code ${fmt.format}, ${fmt.bitsPerSample}-bit)`);
  }

  if (samples.length === 0) throw new Error(`${path}: empty data chunk`);
  return { samples, sampleRate: fmt.sampleRate };
}

/** Write a mono 16-bit PCM WAV (used by the test suite). */
export function writeWav(path: string, samples: Float64Array | number[], sampleRate: number): void {
  const n = samples.length;
  const buf = Buffer.alloc(44 + 2 * n);
  buf.write("RIFF", 0, "ascii");
  buf.writeUInt32LE(36 + 2 * n, 4);
  buf.write("WAVE", 8, "ascii");
  buf.write("fmt ", 12, "ascii");
  buf.writeUInt32LE(16, 16);
  buf.writeUInt16LE(FORMAT_PCM, 20);
  buf.writeUInt16LE(1, 22);
  buf.writeUInt32LE(sampleRate, 24);
  buf.writeUInt32LE(sampleRate * 2, 28);
  buf.writeUInt16LE(2, 32);
  buf.writeUInt16LE(16, 34);
  buf.write("data", 36, "ascii");
  buf.writeUInt32LE(2 * n, 40);
  for (let i = 0; i < n; i++) {
    const clipped = Math.max(-1, Math.min(1, samples[i]));
    buf.writeInt16LE(Math.round(clipped * 32767), 44 + 2 * i);
  }
  fs.writeFileSync(path, buf);
}
