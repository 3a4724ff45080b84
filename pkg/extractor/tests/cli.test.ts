import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { fileURLToPath } from "node:url";
import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { EXIT_CONFIG, EXIT_DATA, EXIT_OK, main } from "../src/cli.js";
import { readDump } from "../src/dump.js";

const here = path.dirname(fileURLToPath(import.meta.url));
const FIXTURE = path.join(here, "fixtures", "dataset.jsonl");

let dir: string;
beforeEach(() => {
  dir = fs.mkdtempSync(path.join(os.tmpdir(), "cli-test-"));
});
afterEach(() => {
  fs.rmSync(dir, { recursive: true, force: true });
});

describe("taxqa-extract", () => {
  it("writes static dumps from a concept list", () => {
    const concepts = path.join(dir, "concepts.txt");
    fs.writeFileSync(concepts, "# comment line\ndog\ncanine\nmammal\n");
    const base = path.join(dir, "static");
    const code = main(["static", "--model-id", "toy-v1", "--concepts", concepts, "--out", base]);
    expect(code).toBe(EXIT_OK);
    const loaded = readDump(base);
    expect(loaded.manifest.labels).toEqual(["dog", "canine", "mammal"]);
    expect(loaded.manifest.role).toBe("static");
  });

  it("honors the unembedding role and extra lexicon words", () => {
    const concepts = path.join(dir, "concepts.txt");
    fs.writeFileSync(concepts, "quokka\n");
    const lexicon = path.join(dir, "lexicon.txt");
    fs.writeFileSync(lexicon, "quokka\n");
    const base = path.join(dir, "un");
    const code = main([
      "static", "--model-id", "toy-v1", "--concepts", concepts,
      "--out", base, "--role", "unembedding", "--lexicon", lexicon,
    ]);
    expect(code).toBe(EXIT_OK);
    expect(readDump(base).manifest.role).toBe("unembedding");
  });

  it("writes one layer dump per state level", () => {
    const out = path.join(dir, "layers");
    const code = main([
      "layers", "--model-id", "toy-v1", "--dataset", FIXTURE, "--out-dir", out,
    ]);
    expect(code).toBe(EXIT_OK);
    const files = fs.readdirSync(out).sort();
    expect(files).toEqual([
      "layer_00.f32", "layer_00.manifest.json",
      "layer_01.f32", "layer_01.manifest.json",
      "layer_02.f32", "layer_02.manifest.json",
    ]);
    const first = readDump(path.join(out, "layer_00"));
    expect(first.manifest.layer).toBe(0);
    expect(first.manifest.n_layers).toBe(3);
  });

  it("writes question-final dumps", () => {
    const base = path.join(dir, "question");
    const code = main(["question", "--model-id", "toy-v1", "--dataset", FIXTURE, "--out", base]);
    expect(code).toBe(EXIT_OK);
    expect(readDump(base).manifest.role).toBe("question_final");
  });

  it("writes vision dumps from a concept map", () => {
    const imgDir = path.join(dir, "imgs");
    fs.mkdirSync(imgDir);
    fs.writeFileSync(path.join(imgDir, "dog1.pgm"), "P2\n4 4\n255\n" + Array(16).fill(7).join(" "));
    const map = path.join(dir, "map.json");
    fs.writeFileSync(map, JSON.stringify({ "dog1.pgm": "dog" }));
    const base = path.join(dir, "vision");
    const code = main([
      "vision", "--model-id", "toy-v1", "--images", imgDir, "--concept-map", map, "--out", base,
    ]);
    expect(code).toBe(EXIT_OK);
    expect(readDump(base).manifest.labels).toEqual(["dog/dog1"]);
  });

  it("exits 2 on missing flags and unknown commands", () => {
    expect(main(["static", "--model-id", "toy-v1"])).toBe(EXIT_CONFIG);
    expect(main(["frobnicate"])).toBe(EXIT_CONFIG);
    expect(main([])).toBe(EXIT_CONFIG);
  });

  it("exits 0 on help", () => {
    expect(main(["--help"])).toBe(EXIT_OK);
  });

  it("exits 4 on data problems", () => {
    const base = path.join(dir, "x");
    expect(
      main(["question", "--model-id", "toy-v1", "--dataset", "/nonexistent.jsonl", "--out", base]),
    ).toBe(EXIT_DATA);
    const empty = path.join(dir, "empty.jsonl");
    fs.writeFileSync(empty, "");
    expect(
      main(["question", "--model-id", "toy-v1", "--dataset", empty, "--out", base]),
    ).toBe(EXIT_DATA);
  });
});
