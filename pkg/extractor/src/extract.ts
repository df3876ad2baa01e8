import * as fs from "fs";
import * as path from "path";
import { analyze } from "./dsp";
import { encode, FEATURE_DIM, LAYER_COUNT } from "./encoder";
import { readLfsf, writeLfsf } from "./lfsf";
import { ManifestEntry, readMetadata, writeManifest } from "./manifest";
import { readWav } from "./wav";

export interface ExtractJob {
  audioDir: string;
  metaPath: string;
  outDir: string;
  manifestPath: string;
}

export interface ExtractSummary {
  recordings: number;
  layers: number;
  dim: number;
  fps: number;
  manifestPath: string;
}

function toManifestPath(fromDir: string, featurePath: string): string {
  return path.relative(fromDir, featurePath).split(path.sep).join("/");
}

/**
 * Run feature extraction for every recording listed in the metadata CSV:
 * read the WAV, compute layered features, write one .lfsf file per
 * recording into outDir and a JSONL manifest pointing at them (paths
 * relative to the manifest's directory).
 */
export function runExtract(job: ExtractJob): ExtractSummary {
  const rows = readMetadata(job.metaPath);
  fs.mkdirSync(job.outDir, { recursive: true });
  fs.mkdirSync(path.dirname(path.resolve(job.manifestPath)), { recursive: true });

  const manifestDir = path.dirname(path.resolve(job.manifestPath));
  const entries: ManifestEntry[] = [];
  const usedNames = new Set<string>();
  let fps: number | null = null;

  for (const row of rows) {
    const wavPath = path.join(job.audioDir, row.file);
    const audio = readWav(wavPath);
    const features = encode(analyze(audio.samples, audio.sampleRate));
    if (fps === null) {
      fps = features.fps;
    } else if (features.fps !== fps) {
      throw new Error(
        `${row.file}: frame rate ${features.fps} differs from earlier recordings (${fps}); ` +
          "all recordings in a run must share one frame rate",
      );
    }

    const stem = path.basename(row.file).replace(/\.[^.]*$/, "");
    let name = `${stem}.lfsf`;
    for (let n = 2; usedNames.has(name); n++) name = `${stem}-${n}.lfsf`;
    usedNames.add(name);

    const featurePath = path.resolve(job.outDir, name);
    writeLfsf(featurePath, features);
    entries.push({
      path: toManifestPath(manifestDir, featurePath),
      patient_id: row.patientId,
      recording_id: row.recordingId,
      language: row.language,
      label: row.label,
    });
  }

  writeManifest(job.manifestPath, entries);
  return {
    recordings: entries.length,
    layers: LAYER_COUNT,
    dim: FEATURE_DIM,
    fps: fps as number,
    manifestPath: job.manifestPath,
  };
}

export interface VerifyReport {
  path: string;
  ok: boolean;
  layers?: number;
  frames?: number;
  dim?: number;
  fps?: number;
  error?: string;
}

/** Structural check of feature files; never throws, reports per file. */
export function verifyFiles(paths: string[]): VerifyReport[] {
  return paths.map((p) => {
    try {
      const decoded = readLfsf(p);
      return {
        path: p,
        ok: true,
        layers: decoded.layers,
        frames: decoded.frames,
        dim: decoded.dim,
        fps: decoded.fps,
      };
    } catch (err) {
      return { path: p, ok: false, error: err instanceof Error ? err.message : String(err) };
    }
  });
}
