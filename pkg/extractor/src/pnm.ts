/**
 * Minimal PGM/PPM image reader (P2/P5 grayscale, P3/P6 color).
 *
 * Netpbm is the one raster format that needs no dependency: a text header
 * (magic, width, height, maxval, `#` comments allowed) followed by either
 * ASCII sample values or raw bytes.  Maxval above 255 uses two big-endian
 * bytes per sample in the raw variants.
 */

import * as fs from "node:fs";

export interface PnmImage {
  width: number;
  height: number;
  maxval: number;
  /** 1 for grayscale, 3 for color. */
  channels: number;
  /** Row-major, interleaved channels; length = width*height*channels. */
  pixels: Uint16Array;
}

export class PnmError extends Error {}

const WHITESPACE = new Set([0x20, 0x09, 0x0a, 0x0d, 0x0b, 0x0c]);

class HeaderScanner {
  pos = 0;
  constructor(private readonly buf: Buffer) {}

  /** Next whitespace-delimited header field, skipping `#` comments. */
  nextField(): string {
    const { buf } = this;
    while (this.pos < buf.length) {
      if (WHITESPACE.has(buf[this.pos])) {
        this.pos += 1;
      } else if (buf[this.pos] === 0x23) {
        while (this.pos < buf.length && buf[this.pos] !== 0x0a) this.pos += 1;
      } else {
        break;
      }
    }
    const start = this.pos;
    while (this.pos < buf.length && !WHITESPACE.has(buf[this.pos])) this.pos += 1;
    if (this.pos === start) throw new PnmError("truncated header");
    return this.buf.toString("ascii", start, this.pos);
  }

  nextInt(): number {
    const field = this.nextField();
    const value = Number(field);
    if (!Number.isInteger(value) || value < 0) {
      throw new PnmError(`expected integer header field, got ${JSON.stringify(field)}`);
    }
    return value;
  }
}

export function parsePnm(buf: Buffer): PnmImage {
  const scanner = new HeaderScanner(buf);
  const magic = scanner.nextField();
  const ascii = magic === "P2" || magic === "P3";
  const raw = magic === "P5" || magic === "P6";
  if (!ascii && !raw) throw new PnmError(`unsupported magic ${JSON.stringify(magic)}`);
  const channels = magic === "P3" || magic === "P6" ? 3 : 1;
  const width = scanner.nextInt();
  const height = scanner.nextInt();
  const maxval = scanner.nextInt();
  if (width === 0 || height === 0) throw new PnmError("zero-sized image");
  if (maxval === 0 || maxval > 65535) throw new PnmError(`bad maxval ${maxval}`);

  const count = width * height * channels;
  const pixels = new Uint16Array(count);
  if (ascii) {
    for (let i = 0; i < count; i++) {
      const v = scanner.nextInt();
      if (v > maxval) throw new PnmError(`sample ${v} exceeds maxval ${maxval}`);
      pixels[i] = v;
    }
  } else {
    // exactly one whitespace byte separates the header from raw samples
    let pos = scanner.pos;
    if (pos >= buf.length || !WHITESPACE.has(buf[pos])) throw new PnmError("truncated header");
    pos += 1;
    const wide = maxval > 255;
    const need = count * (wide ? 2 : 1);
    if (buf.length - pos < need) {
      throw new PnmError(`payload has ${buf.length - pos} bytes, expected ${need}`);
    }
    for (let i = 0; i < count; i++) {
      const v = wide ? buf.readUInt16BE(pos + i * 2) : buf[pos + i];
      if (v > maxval) throw new PnmError(`sample ${v} exceeds maxval ${maxval}`);
      pixels[i] = v;
    }
  }
  return { width, height, maxval, channels, pixels };
}

export function readPnm(path: string): PnmImage {
  let buf: Buffer;
  try {
    buf = fs.readFileSync(path);
  } catch (err) {
    throw new PnmError(`cannot read ${path}: ${(err as Error).message}`);
  }
  try {
    return parsePnm(buf);
  } catch (err) {
    if (err instanceof PnmError) throw new PnmError(`${path}: ${err.message}`);
    throw err;
  }
}
