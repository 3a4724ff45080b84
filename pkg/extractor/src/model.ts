/**
 * A tiny causal transformer with weights generated, not loaded.
 *
 * Every tensor is derived from (modelId, tensorName) through a seeded
 * generator, so a model id fully determines the parameters and two
 * processes given the same id produce bit-identical states.  The network
 * is deliberately small; the extractor's job is producing dumps with the
 * right shapes, labels, and alignment, and a toy model exercises exactly
 * the same code paths as a large one.
 *
 * `forward` returns one state per position per layer, where layer 0 is
 * the embedding layer (token embedding plus positional encoding), so the
 * number of states is model depth + 1.
 */

import { SeededRng } from "./rng.js";
import { Tokenizer } from "./tokenizer.js";
import type { PnmImage } from "./pnm.js";

export interface ModelConfig {
  dModel: number;
  nLayers: number;
  nHeads: number;
  ffDim: number;
  /** Square patch edge for the vision encoder, in pixels. */
  patchSize: number;
}

export const DEFAULT_CONFIG: ModelConfig = {
  dModel: 16,
  nLayers: 2,
  nHeads: 2,
  ffDim: 32,
  patchSize: 4,
};

/** Row-major f64 matrix for internal math; dumps cast to f32 at the end. */
type Mat = { rows: number; cols: number; data: Float64Array };

function zeros(rows: number, cols: number): Mat {
  return { rows, cols, data: new Float64Array(rows * cols) };
}

export class TinyTransformer {
  readonly config: ModelConfig;
  private readonly embedCache = new Map<string, Float32Array>();
  private readonly tensorCache = new Map<string, Mat>();

  constructor(
    readonly modelId: string,
    readonly tokenizer: Tokenizer,
    config: Partial<ModelConfig> = {},
  ) {
    if (!modelId) throw new Error("model id must be non-empty");
    this.config = { ...DEFAULT_CONFIG, ...config };
    const { dModel, nHeads } = this.config;
    if (dModel % nHeads !== 0) throw new Error("dModel must be divisible by nHeads");
  }

  /** Distinct hidden-state levels: embedding layer plus each block. */
  get nStates(): number {
    return this.config.nLayers + 1;
  }

  /** Input-embedding table row for a token id.  Rows are generated lazily
   * and cached, so lookups are cheap and the table never fully exists. */
  embeddingRow(id: number): Float32Array {
    return this.seededRow("embed", id, 0.5);
  }

  /** Output-side (unembedding) table row, independent of the input table. */
  unembeddingRow(id: number): Float32Array {
    return this.seededRow("unembed", id, 0.5);
  }

  private seededRow(table: string, id: number, scale: number): Float32Array {
    if (id < 0 || id >= this.tokenizer.vocabSize) {
      throw new Error(`token id ${id} outside vocabulary of ${this.tokenizer.vocabSize}`);
    }
    const key = `${table}/${id}`;
    let row = this.embedCache.get(key);
    if (!row) {
      row = new SeededRng(`${this.modelId}/${key}`).normals(this.config.dModel, scale);
      this.embedCache.set(key, row);
    }
    return row;
  }

  private tensor(name: string, rows: number, cols: number): Mat {
    let mat = this.tensorCache.get(name);
    if (!mat) {
      const rng = new SeededRng(`${this.modelId}/${name}`);
      const scale = 1 / Math.sqrt(cols);
      mat = zeros(rows, cols);
      for (let i = 0; i < mat.data.length; i++) mat.data[i] = rng.normal() * scale;
      this.tensorCache.set(name, mat);
    }
    return mat;
  }

  /**
   * Hidden states for a token sequence: `states[layer][pos]` is the
   * d-model vector at that position after that layer, with layer 0 the
   * embedding layer.  Causal attention; no sampling anywhere, so the
   * output is a pure function of (modelId, ids).
   */
  forward(ids: number[]): Float64Array[][] {
    if (ids.length === 0) throw new Error("cannot run the model on an empty sequence");
    const { dModel, nLayers, nHeads, ffDim } = this.config;
    const n = ids.length;

    let x: Float64Array[] = [];
    for (let p = 0; p < n; p++) {
      const row = this.embeddingRow(ids[p]);
      const vec = new Float64Array(dModel);
      for (let d = 0; d < dModel; d++) vec[d] = row[d] + positional(p, d, dModel);
      x.push(vec);
    }
    const states: Float64Array[][] = [x.map((v) => v.slice())];

    for (let layer = 0; layer < nLayers; layer++) {
      const wq = this.tensor(`layer${layer}/wq`, dModel, dModel);
      const wk = this.tensor(`layer${layer}/wk`, dModel, dModel);
      const wv = this.tensor(`layer${layer}/wv`, dModel, dModel);
      const wo = this.tensor(`layer${layer}/wo`, dModel, dModel);
      const w1 = this.tensor(`layer${layer}/w1`, ffDim, dModel);
      const w2 = this.tensor(`layer${layer}/w2`, dModel, ffDim);

      const normed = x.map(rmsNorm);
      const q = normed.map((v) => matVec(wq, v));
      const k = normed.map((v) => matVec(wk, v));
      const v = normed.map((vec) => matVec(wv, vec));

      const headDim = dModel / nHeads;
      const mixed: Float64Array[] = [];
      for (let p = 0; p < n; p++) {
        const out = new Float64Array(dModel);
        for (let h = 0; h < nHeads; h++) {
          const off = h * headDim;
          const scores = new Float64Array(p + 1);
          for (let s = 0; s <= p; s++) {
            let dot = 0;
            for (let d = 0; d < headDim; d++) dot += q[p][off + d] * k[s][off + d];
            scores[s] = dot / Math.sqrt(headDim);
          }
          softmaxInPlace(scores);
          for (let s = 0; s <= p; s++) {
            for (let d = 0; d < headDim; d++) out[off + d] += scores[s] * v[s][off + d];
          }
        }
        mixed.push(matVec(wo, out));
      }
      for (let p = 0; p < n; p++) {
        for (let d = 0; d < dModel; d++) x[p][d] += mixed[p][d];
      }

      const normed2 = x.map(rmsNorm);
      for (let p = 0; p < n; p++) {
        const hidden = matVec(w1, normed2[p]);
        for (let i = 0; i < ffDim; i++) hidden[i] = Math.tanh(hidden[i]);
        const back = matVec(w2, hidden);
        for (let d = 0; d < dModel; d++) x[p][d] += back[d];
      }
      states.push(x.map((vec) => vec.slice()));
    }
    return states;
  }

  /**
   * One vector per image: non-overlapping patches are reduced to channel
   * means plus normalized position, projected through a seeded linear map
   * with tanh, and mean-pooled.  Output width equals dModel.
   */
  encodeImage(image: PnmImage): Float32Array {
    const { dModel, patchSize } = this.config;
    const proj = this.tensor("vision/proj", dModel, 5);
    const pooled = new Float64Array(dModel);
    const rowsPatches = Math.ceil(image.height / patchSize);
    const colsPatches = Math.ceil(image.width / patchSize);
    let count = 0;
    for (let pr = 0; pr < rowsPatches; pr++) {
      for (let pc = 0; pc < colsPatches; pc++) {
        const feat = patchFeatures(image, pr, pc, patchSize);
        const vec = matVec(proj, feat);
        for (let d = 0; d < dModel; d++) pooled[d] += Math.tanh(vec[d]);
        count += 1;
      }
    }
    const out = new Float32Array(dModel);
    for (let d = 0; d < dModel; d++) out[d] = Math.fround(pooled[d] / count);
    return out;
  }
}

function positional(pos: number, dim: number, dModel: number): number {
  const pair = Math.floor(dim / 2);
  const rate = Math.pow(10000, (2 * pair) / dModel);
  return dim % 2 === 0 ? Math.sin(pos / rate) : Math.cos(pos / rate);
}

function rmsNorm(vec: Float64Array): Float64Array {
  let sq = 0;
  for (let d = 0; d < vec.length; d++) sq += vec[d] * vec[d];
  const inv = 1 / Math.sqrt(sq / vec.length + 1e-6);
  const out = new Float64Array(vec.length);
  for (let d = 0; d < vec.length; d++) out[d] = vec[d] * inv;
  return out;
}

function matVec(mat: Mat, vec: Float64Array | Float32Array): Float64Array {
  if (mat.cols !== vec.length) {
    throw new Error(`matVec shape mismatch: ${mat.rows}x${mat.cols} times ${vec.length}`);
  }
  const out = new Float64Array(mat.rows);
  for (let r = 0; r < mat.rows; r++) {
    let acc = 0;
    const base = r * mat.cols;
    for (let c = 0; c < mat.cols; c++) acc += mat.data[base + c] * vec[c];
    out[r] = acc;
  }
  return out;
}

function softmaxInPlace(scores: Float64Array): void {
  let max = -Infinity;
  for (const s of scores) max = Math.max(max, s);
  let sum = 0;
  for (let i = 0; i < scores.length; i++) {
    scores[i] = Math.exp(scores[i] - max);
    sum += scores[i];
  }
  for (let i = 0; i < scores.length; i++) scores[i] /= sum;
}

/** Channel means over one patch plus its normalized center position. */
function patchFeatures(image: PnmImage, pr: number, pc: number, patchSize: number): Float64Array {
  const y0 = pr * patchSize;
  const x0 = pc * patchSize;
  const y1 = Math.min(y0 + patchSize, image.height);
  const x1 = Math.min(x0 + patchSize, image.width);
  const sums = [0, 0, 0];
  let count = 0;
  for (let y = y0; y < y1; y++) {
    for (let x = x0; x < x1; x++) {
      const base = (y * image.width + x) * image.channels;
      for (let c = 0; c < 3; c++) {
        const channel = image.channels === 3 ? c : 0;
        sums[c] += image.pixels[base + channel] / image.maxval;
      }
      count += 1;
    }
  }
  const feat = new Float64Array(5);
  for (let c = 0; c < 3; c++) feat[c] = sums[c] / count;
  feat[3] = (y0 + y1) / 2 / image.height;
  feat[4] = (x0 + x1) / 2 / image.width;
  return feat;
}
