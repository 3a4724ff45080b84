/**
 * Embedding dump files: a JSON manifest next to a raw float32 payload.
 *
 * The format is shared with the analysis toolkit, which validates and
 * consumes these files; nothing here is private to the extractor.  A dump
 * base path `b` owns two files:
 *
 *   b.manifest.json   metadata, row labels, span records, payload digest
 *   b.f32             row-major float32 matrix, little-endian
 *
 * The payload digest is the sha256 of the payload bytes, so a reader can
 * detect truncation or corruption without trusting file sizes.  Writes go
 * through a temp file and rename so a crash never leaves a half-written
 * dump at the target path.
 */

import { createHash } from "node:crypto";
import * as fs from "node:fs";
import * as path from "node:path";

export const DTYPE_TAG = "float32-le";

export const ROLES = [
  "static",
  "layerwise_contextual",
  "question_final",
  "vision_patch",
  "unembedding",
] as const;

export type DumpRole = (typeof ROLES)[number];

/** Span keys each spanned role must carry, mirrored by the validator. */
export const REQUIRED_SPAN_KEYS: Readonly<Record<string, readonly string[]>> = {
  layerwise_contextual: ["instance_id", "concept", "mention_index", "slot"],
  question_final: ["instance_id", "group"],
  vision_patch: ["concept", "image_id"],
};

export const QUESTION_GROUPS = ["hypernym", "negative"] as const;

export type SpanRecord = Record<string, string | number>;

export interface DumpManifest {
  model_id: string;
  role: DumpRole;
  dims: [number, number];
  dtype: string;
  payload_digest: string;
  labels: string[];
  layer?: number;
  n_layers?: number;
  spans?: SpanRecord[];
  extra?: Record<string, string | number | boolean>;
}

/** Dense row-major float32 matrix. */
export interface Matrix {
  rows: number;
  cols: number;
  data: Float32Array;
}

export class DumpError extends Error {}

export function matrixFromRows(rows: Float32Array[]): Matrix {
  if (rows.length === 0) throw new DumpError("matrix needs at least one row");
  const cols = rows[0].length;
  const data = new Float32Array(rows.length * cols);
  for (let i = 0; i < rows.length; i++) {
    if (rows[i].length !== cols) {
      throw new DumpError(`row ${i} has ${rows[i].length} cols, expected ${cols}`);
    }
    data.set(rows[i], i * cols);
  }
  return { rows: rows.length, cols, data };
}

export function matrixRow(matrix: Matrix, index: number): Float32Array {
  if (index < 0 || index >= matrix.rows) {
    throw new DumpError(`row ${index} out of range for ${matrix.rows} rows`);
  }
  return matrix.data.subarray(index * matrix.cols, (index + 1) * matrix.cols);
}

/** Payload bytes are explicitly little-endian regardless of host order. */
export function payloadBytes(matrix: Matrix): Buffer {
  const buf = Buffer.alloc(matrix.data.length * 4);
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  for (let i = 0; i < matrix.data.length; i++) {
    view.setFloat32(i * 4, matrix.data[i], true);
  }
  return buf;
}

export function payloadDigest(payload: Buffer): string {
  return createHash("sha256").update(payload).digest("hex");
}

export interface DumpPaths {
  manifestPath: string;
  payloadPath: string;
}

/** Strip a trailing .manifest.json / .f32 so either file names the dump. */
export function dumpPaths(base: string): DumpPaths {
  let stem = base;
  if (stem.endsWith(".manifest.json")) stem = stem.slice(0, -".manifest.json".length);
  else if (stem.endsWith(".f32")) stem = stem.slice(0, -".f32".length);
  return { manifestPath: `${stem}.manifest.json`, payloadPath: `${stem}.f32` };
}

function manifestProblems(manifest: DumpManifest, matrix: Matrix): string[] {
  const problems: string[] = [];
  if (!ROLES.includes(manifest.role)) problems.push(`unknown role ${manifest.role}`);
  if (!manifest.model_id) problems.push("empty model_id");
  if (manifest.dtype !== DTYPE_TAG) problems.push(`dtype must be ${DTYPE_TAG}`);
  const [rows, cols] = manifest.dims;
  if (rows <= 0 || cols <= 0) problems.push(`dims must be positive, got ${rows}x${cols}`);
  if (rows !== matrix.rows || cols !== matrix.cols) {
    problems.push(`dims ${rows}x${cols} disagree with matrix ${matrix.rows}x${matrix.cols}`);
  }
  if (manifest.labels.length !== rows) {
    problems.push(`${manifest.labels.length} labels for ${rows} rows`);
  }
  const required = REQUIRED_SPAN_KEYS[manifest.role];
  if (required) {
    const spans = manifest.spans;
    if (!spans) {
      problems.push(`role ${manifest.role} requires spans`);
    } else {
      if (spans.length !== rows) problems.push(`${spans.length} spans for ${rows} rows`);
      for (let i = 0; i < spans.length; i++) {
        for (const key of required) {
          if (!(key in spans[i])) problems.push(`span ${i} missing key ${key}`);
        }
      }
      if (manifest.role === "question_final") {
        for (let i = 0; i < spans.length; i++) {
          const group = spans[i]["group"];
          if (!QUESTION_GROUPS.includes(group as (typeof QUESTION_GROUPS)[number])) {
            problems.push(`span ${i} group ${String(group)} not in ${QUESTION_GROUPS.join("/")}`);
          }
        }
      }
    }
  }
  if (manifest.role === "layerwise_contextual" && manifest.layer === undefined) {
    problems.push("layerwise dumps need a layer index");
  }
  for (let i = 0; i < matrix.data.length; i++) {
    if (!Number.isFinite(matrix.data[i])) {
      problems.push(`non-finite value at flat index ${i}`);
      break;
    }
  }
  return problems;
}

/** JSON.stringify with recursively sorted object keys, 2-space indent. */
function stableJson(value: unknown): string {
  const sortKeys = (node: unknown): unknown => {
    if (Array.isArray(node)) return node.map(sortKeys);
    if (node !== null && typeof node === "object") {
      const src = node as Record<string, unknown>;
      const out: Record<string, unknown> = {};
      for (const key of Object.keys(src).sort()) out[key] = sortKeys(src[key]);
      return out;
    }
    return node;
  };
  return JSON.stringify(sortKeys(value), null, 2) + "\n";
}

function writeAtomic(target: string, content: Buffer | string): void {
  const dir = path.dirname(target);
  fs.mkdirSync(dir, { recursive: true });
  const tmp = path.join(dir, `.${path.basename(target)}.tmp-${process.pid}`);
  fs.writeFileSync(tmp, content);
  fs.renameSync(tmp, target);
}

export interface WriteSpec {
  modelId: string;
  role: DumpRole;
  labels: string[];
  matrix: Matrix;
  layer?: number;
  nLayers?: number;
  spans?: SpanRecord[];
  extra?: Record<string, string | number | boolean>;
}

/** Validate and write one dump; returns the two file paths. */
export function writeDump(base: string, spec: WriteSpec): DumpPaths {
  const payload = payloadBytes(spec.matrix);
  const manifest: DumpManifest = {
    model_id: spec.modelId,
    role: spec.role,
    dims: [spec.matrix.rows, spec.matrix.cols],
    dtype: DTYPE_TAG,
    payload_digest: payloadDigest(payload),
    labels: spec.labels,
  };
  if (spec.layer !== undefined) manifest.layer = spec.layer;
  if (spec.nLayers !== undefined) manifest.n_layers = spec.nLayers;
  if (spec.spans !== undefined) manifest.spans = spec.spans;
  if (spec.extra !== undefined) manifest.extra = spec.extra;

  const problems = manifestProblems(manifest, spec.matrix);
  if (problems.length > 0) {
    throw new DumpError(`refusing to write invalid dump: ${problems.join("; ")}`);
  }
  const paths = dumpPaths(base);
  writeAtomic(paths.payloadPath, payload);
  writeAtomic(paths.manifestPath, stableJson(manifest));
  return paths;
}

export interface LoadedDump {
  manifest: DumpManifest;
  matrix: Matrix;
}

/** Read a dump back, verifying payload size and digest. */
export function readDump(base: string): LoadedDump {
  const paths = dumpPaths(base);
  const manifest = JSON.parse(fs.readFileSync(paths.manifestPath, "utf8")) as DumpManifest;
  const payload = fs.readFileSync(paths.payloadPath);
  const [rows, cols] = manifest.dims;
  const expected = rows * cols * 4;
  if (payload.length !== expected) {
    throw new DumpError(`payload is ${payload.length} bytes, expected ${expected}`);
  }
  const digest = payloadDigest(payload);
  if (digest !== manifest.payload_digest) {
    throw new DumpError(`payload digest ${digest} does not match manifest`);
  }
  const data = new Float32Array(rows * cols);
  const view = new DataView(payload.buffer, payload.byteOffset, payload.byteLength);
  for (let i = 0; i < data.length; i++) data[i] = view.getFloat32(i * 4, true);
  return { manifest, matrix: { rows, cols, data } };
}
