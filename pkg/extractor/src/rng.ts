/**
 * Deterministic string-seeded random numbers.
 *
 * Weight tensors are generated lazily from (modelId, tensorName) seeds, so
 * the same model id always yields the same parameters with no weight files
 * on disk.  The generator is sfc32 keyed by the sha256 of the seed string;
 * quality is far beyond what a toy model needs, and unlike Math.random it
 * is reproducible across processes and platforms.
 */

import { createHash } from "node:crypto";

export class SeededRng {
  private a: number;
  private b: number;
  private c: number;
  private d: number;
  private spare: number | null = null;

  constructor(seed: string) {
    const digest = createHash("sha256").update(seed, "utf8").digest();
    this.a = digest.readUInt32LE(0);
    this.b = digest.readUInt32LE(4);
    this.c = digest.readUInt32LE(8);
    this.d = digest.readUInt32LE(12);
    // mix the state so near-identical seeds decorrelate
    for (let i = 0; i < 12; i++) this.uniform();
  }

  /** Uniform float in [0, 1). */
  uniform(): number {
    this.a >>>= 0;
    this.b >>>= 0;
    this.c >>>= 0;
    this.d >>>= 0;
    let t = (this.a + this.b) | 0;
    this.a = this.b ^ (this.b >>> 9);
    this.b = (this.c + (this.c << 3)) | 0;
    this.c = (this.c << 21) | (this.c >>> 11);
    this.d = (this.d + 1) | 0;
    t = (t + this.d) | 0;
    this.c = (this.c + t) | 0;
    return (t >>> 0) / 4294967296;
  }

  /** Standard normal via Box-Muller. */
  normal(): number {
    if (this.spare !== null) {
      const value = this.spare;
      this.spare = null;
      return value;
    }
    // u in (0, 1] so the log is finite
    const u = 1 - this.uniform();
    const v = this.uniform();
    const radius = Math.sqrt(-2 * Math.log(u));
    const angle = 2 * Math.PI * v;
    this.spare = radius * Math.sin(angle);
    return radius * Math.cos(angle);
  }

  /** Float32Array of iid normals scaled by `scale`. */
  normals(count: number, scale = 1): Float32Array {
    const out = new Float32Array(count);
    for (let i = 0; i < count; i++) out[i] = Math.fround(this.normal() * scale);
    return out;
  }
}
