/**
 * Command-line entry point.
 *
 *   taxqa-extract static   --model-id ID --concepts FILE --out BASE
 *                          [--role static|unembedding] [--lexicon FILE]
 *   taxqa-extract layers   --model-id ID --dataset FILE --out-dir DIR
 *                          [--prefix NAME] [--lexicon FILE]
 *   taxqa-extract question --model-id ID --dataset FILE --out BASE
 *                          [--lexicon FILE]
 *   taxqa-extract vision   --model-id ID --images DIR --concept-map FILE
 *                          --out BASE
 *
 * Exit codes: 0 success, 2 usage or config problem, 4 data problem
 * (unparseable dataset, missing mention, unreadable image).
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { parseArgs } from "node:util";
import { pathToFileURL } from "node:url";

import { readDataset, DatasetError } from "./dataset.js";
import { writeDump, DumpError } from "./dump.js";
import {
  extractLayerStates,
  extractQuestionStates,
  extractStatic,
  extractVisionPatches,
  ExtractError,
} from "./extract.js";
import { TinyTransformer } from "./model.js";
import { PnmError } from "./pnm.js";
import { DEFAULT_LEXICON, SpanAlignmentError, Tokenizer } from "./tokenizer.js";

export const EXIT_OK = 0;
export const EXIT_CONFIG = 2;
export const EXIT_DATA = 4;

const USAGE = `usage: taxqa-extract <command> [options]

commands:
  static     concept rows from the input or output embedding table
  layers     per-mention hidden states at every layer
  question   prompt-final states for substituted positives and negatives
  vision     mean-pooled patch vectors per (concept, image)

common options:
  --model-id ID     seed string that determines the model weights
  --lexicon FILE    extra vocabulary words, one per line (extends built-ins)

static:    --concepts FILE --out BASE [--role static|unembedding]
layers:    --dataset FILE --out-dir DIR [--prefix NAME]
question:  --dataset FILE --out BASE
vision:    --images DIR --concept-map FILE --out BASE
`;

class UsageError extends Error {}

function readLines(file: string): string[] {
  return fs
    .readFileSync(file, "utf8")
    .split("\n")
    .map((line) => line.trim())
    .filter((line) => line !== "" && !line.startsWith("#"));
}

function buildTokenizer(lexiconFile?: string): Tokenizer {
  if (!lexiconFile) return new Tokenizer();
  return new Tokenizer([...DEFAULT_LEXICON, ...readLines(lexiconFile)]);
}

function need(values: Record<string, string | undefined>, ...keys: string[]): void {
  for (const key of keys) {
    if (!values[key]) throw new UsageError(`--${key} is required`);
  }
}

function parse(args: string[], flags: string[]): Record<string, string | undefined> {
  const options: Record<string, { type: "string" }> = {};
  for (const flag of flags) options[flag] = { type: "string" };
  try {
    const { values, positionals } = parseArgs({ args, options, strict: true, allowPositionals: true });
    if (positionals.length > 0) {
      throw new UsageError(`unexpected argument ${JSON.stringify(positionals[0])}`);
    }
    return values as Record<string, string | undefined>;
  } catch (err) {
    if (err instanceof UsageError) throw err;
    throw new UsageError((err as Error).message);
  }
}

function cmdStatic(args: string[]): number {
  const v = parse(args, ["model-id", "concepts", "out", "role", "lexicon"]);
  need(v, "model-id", "concepts", "out");
  const role = v["role"] ?? "static";
  if (role !== "static" && role !== "unembedding") {
    throw new UsageError(`--role must be static or unembedding, got ${role}`);
  }
  const model = new TinyTransformer(v["model-id"]!, buildTokenizer(v["lexicon"]));
  const spec = extractStatic(model, readLines(v["concepts"]!), role);
  const paths = writeDump(v["out"]!, spec);
  process.stdout.write(`${spec.matrix.rows} rows -> ${paths.manifestPath}\n`);
  return EXIT_OK;
}

function cmdLayers(args: string[]): number {
  const v = parse(args, ["model-id", "dataset", "out-dir", "prefix", "lexicon"]);
  need(v, "model-id", "dataset", "out-dir");
  const model = new TinyTransformer(v["model-id"]!, buildTokenizer(v["lexicon"]));
  const specs = extractLayerStates(model, readDataset(v["dataset"]!));
  const prefix = v["prefix"] ?? "layer";
  for (const spec of specs) {
    const stamp = String(spec.layer).padStart(2, "0");
    const paths = writeDump(path.join(v["out-dir"]!, `${prefix}_${stamp}`), spec);
    process.stdout.write(`layer ${spec.layer}: ${spec.matrix.rows} rows -> ${paths.manifestPath}\n`);
  }
  return EXIT_OK;
}

function cmdQuestion(args: string[]): number {
  const v = parse(args, ["model-id", "dataset", "out", "lexicon"]);
  need(v, "model-id", "dataset", "out");
  const model = new TinyTransformer(v["model-id"]!, buildTokenizer(v["lexicon"]));
  const spec = extractQuestionStates(model, readDataset(v["dataset"]!));
  const paths = writeDump(v["out"]!, spec);
  process.stdout.write(`${spec.matrix.rows} rows -> ${paths.manifestPath}\n`);
  return EXIT_OK;
}

function cmdVision(args: string[]): number {
  const v = parse(args, ["model-id", "images", "concept-map", "out"]);
  need(v, "model-id", "images", "concept-map", "out");
  let conceptMap: Record<string, string | string[]>;
  try {
    conceptMap = JSON.parse(fs.readFileSync(v["concept-map"]!, "utf8"));
  } catch (err) {
    if (err instanceof SyntaxError) {
      throw new ExtractError(`concept map is not valid JSON: ${err.message}`);
    }
    throw err;
  }
  const model = new TinyTransformer(v["model-id"]!, new Tokenizer());
  const spec = extractVisionPatches(model, v["images"]!, conceptMap);
  const paths = writeDump(v["out"]!, spec);
  process.stdout.write(`${spec.matrix.rows} rows -> ${paths.manifestPath}\n`);
  return EXIT_OK;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    switch (command) {
      case "static":
        return cmdStatic(rest);
      case "layers":
        return cmdLayers(rest);
      case "question":
        return cmdQuestion(rest);
      case "vision":
        return cmdVision(rest);
      case "-h":
      case "--help":
      case "help":
      case undefined:
        process.stdout.write(USAGE);
        return command === undefined ? EXIT_CONFIG : EXIT_OK;
      default:
        throw new UsageError(`unknown command ${JSON.stringify(command)}`);
    }
  } catch (err) {
    if (err instanceof UsageError) {
      process.stderr.write(`error: ${err.message}\n\n${USAGE}`);
      return EXIT_CONFIG;
    }
    if (
      err instanceof DatasetError ||
      err instanceof DumpError ||
      err instanceof ExtractError ||
      err instanceof PnmError ||
      err instanceof SpanAlignmentError ||
      (err as NodeJS.ErrnoException).code === "ENOENT"
    ) {
      process.stderr.write(`error: ${(err as Error).message}\n`);
      return EXIT_DATA;
    }
    throw err;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === pathToFileURL(process.argv[1]).href;
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
