/**
 * The four extraction operations, each producing write-ready dump specs:
 *
 *   static embeddings   one row per concept from the input (or output)
 *                       embedding table, subword rows mean-pooled
 *   layer states        per tracked mention, the hidden state at the
 *                       mention's last subword token, at every layer
 *   question states     prompt-final hidden state at the last layer for
 *                       substituted positives and their negatives
 *   vision patches      one mean-pooled vector per (concept, image)
 *
 * Prompts are plain text, description and question joined by a blank
 * line, exactly as the evaluation client renders them; no chat template
 * is applied, and the manifests record that choice.
 */

import * as path from "node:path";

import type { DatasetInstance, DatasetQuestion } from "./dataset.js";
import { matrixFromRows, type SpanRecord, type WriteSpec } from "./dump.js";
import { TinyTransformer } from "./model.js";
import { readPnm, PnmError } from "./pnm.js";
import { findMentions, lastSubwordIndex, type Token } from "./tokenizer.js";

export class ExtractError extends Error {}

/** A tracked concept never occurs in the text it should be mentioned in. */
export class MentionNotFoundError extends ExtractError {}

/** One or more image files could not be read or parsed. */
export class UnreadableImagesError extends ExtractError {
  constructor(readonly failures: ReadonlyArray<{ file: string; reason: string }>) {
    super(
      `${failures.length} unreadable image(s): ` +
        failures.map((f) => `${f.file} (${f.reason})`).join("; "),
    );
  }
}

function toF32(vec: Float64Array): Float32Array {
  const out = new Float32Array(vec.length);
  for (let i = 0; i < vec.length; i++) out[i] = Math.fround(vec[i]);
  return out;
}

/**
 * Static concept embeddings.  Each concept is tokenized and its row is
 * the mean of the table rows of its subword tokens, so a single-token
 * concept's row is exactly the table row.  Role "static" reads the input
 * embedding table; "unembedding" reads the output-side table restricted
 * to the same concept list.
 */
export function extractStatic(
  model: TinyTransformer,
  concepts: readonly string[],
  role: "static" | "unembedding" = "static",
): WriteSpec {
  if (concepts.length === 0) throw new ExtractError("no concepts given");
  const rows: Float32Array[] = [];
  for (const concept of concepts) {
    const ids = model.tokenizer.tokenIds(concept);
    if (ids.length === 0) {
      throw new ExtractError(`concept ${JSON.stringify(concept)} tokenizes to nothing`);
    }
    const table = role === "unembedding"
      ? (id: number) => model.unembeddingRow(id)
      : (id: number) => model.embeddingRow(id);
    const mean = new Float64Array(model.config.dModel);
    for (const id of ids) {
      const row = table(id);
      for (let d = 0; d < mean.length; d++) mean[d] += row[d];
    }
    for (let d = 0; d < mean.length; d++) mean[d] /= ids.length;
    rows.push(toF32(mean));
  }
  return {
    modelId: model.modelId,
    role,
    labels: [...concepts],
    matrix: matrixFromRows(rows),
    extra: { subword_pooling: "mean", tokenizer_vocab: model.tokenizer.vocabSize },
  };
}

/** Description and question joined the way the evaluation client does. */
export function promptFor(instance: DatasetInstance, question: DatasetQuestion): string {
  return instance.description
    ? `${instance.description}\n\n${question.text}`
    : question.text;
}

interface TrackedRow {
  label: string;
  span: SpanRecord;
  states: Float64Array[]; // one vector per layer
}

function mentionRows(
  model: TinyTransformer,
  instance: DatasetInstance,
  question: DatasetQuestion,
  tracked: ReadonlyArray<{ concept: string; slot: string; inDescription: boolean }>,
): TrackedRow[] {
  const prompt = promptFor(instance, question);
  const tokens: Token[] = model.tokenizer.tokenize(prompt);
  const states = model.forward(tokens.map((t) => t.id));
  const descEnd = instance.description.length;
  const questionStart = instance.description ? descEnd + 2 : 0;

  const rows: TrackedRow[] = [];
  for (const { concept, slot, inDescription } of tracked) {
    const region = inDescription && instance.description
      ? { start: 0, end: descEnd }
      : { start: questionStart, end: prompt.length };
    const mentions = findMentions(prompt, concept, region);
    if (mentions.length === 0) {
      throw new MentionNotFoundError(
        `${instance.instance_id}: no mention of ${JSON.stringify(concept)} ` +
          `in the ${inDescription && instance.description ? "description" : "question"}`,
      );
    }
    for (let m = 0; m < mentions.length; m++) {
      const tokenIndex = lastSubwordIndex(tokens, mentions[m]);
      rows.push({
        label: concept,
        span: {
          instance_id: instance.instance_id,
          concept,
          mention_index: m,
          slot,
          char_start: mentions[m].start,
          char_end: mentions[m].end,
          token_index: tokenIndex,
        },
        states: states.map((layer) => layer[tokenIndex]),
      });
    }
  }
  return rows;
}

/**
 * Contextual states for every tracked mention at every layer: the source
 * leaf where the description (or, scene-free, the question) mentions it,
 * the positive question's target, and each negative question's target.
 * Returns one spec per layer, index 0 the embedding layer, all sharing
 * one span list so row i means the same mention in every dump.
 */
export function extractLayerStates(
  model: TinyTransformer,
  instances: readonly DatasetInstance[],
): WriteSpec[] {
  if (instances.length === 0) throw new ExtractError("no instances given");
  const rows: TrackedRow[] = [];
  for (const instance of instances) {
    rows.push(
      ...mentionRows(model, instance, instance.positive, [
        { concept: instance.source_leaf, slot: "hyponym", inDescription: true },
        { concept: instance.positive.target, slot: "hypernym", inDescription: false },
      ]),
    );
    for (let k = 0; k < instance.negatives.length; k++) {
      rows.push(
        ...mentionRows(model, instance, instance.negatives[k], [
          { concept: instance.negatives[k].target, slot: `neg${k + 1}`, inDescription: false },
        ]),
      );
    }
  }
  const labels = rows.map((r) => r.label);
  const spans = rows.map((r) => r.span);
  const specs: WriteSpec[] = [];
  for (let layer = 0; layer < model.nStates; layer++) {
    specs.push({
      modelId: model.modelId,
      role: "layerwise_contextual",
      labels,
      matrix: matrixFromRows(rows.map((r) => toF32(r.states[layer]))),
      layer,
      nLayers: model.nStates,
      spans,
      extra: { chat_template: "none", prompt_template: "description\\n\\nquestion" },
    });
  }
  return specs;
}

/**
 * Prompt-final hidden states at the last layer for hypernym-substituted
 * instances: the positive question (group "hypernym") and each negative
 * (group "negative").  Depth-0 instances carry no substitution and are
 * skipped.
 */
export function extractQuestionStates(
  model: TinyTransformer,
  instances: readonly DatasetInstance[],
): WriteSpec {
  const labels: string[] = [];
  const spans: SpanRecord[] = [];
  const rows: Float32Array[] = [];

  const addRow = (instance: DatasetInstance, question: DatasetQuestion,
                  group: "hypernym" | "negative", tag: string) => {
    const ids = model.tokenizer.tokenIds(promptFor(instance, question));
    const states = model.forward(ids);
    const final = states[states.length - 1];
    rows.push(toF32(final[final.length - 1]));
    labels.push(`${instance.instance_id}/${tag}`);
    spans.push({ instance_id: instance.instance_id, group, target: question.target });
  };

  for (const instance of instances) {
    if (instance.substitution_depth < 1) continue;
    addRow(instance, instance.positive, "hypernym", "positive");
    for (let k = 0; k < instance.negatives.length; k++) {
      addRow(instance, instance.negatives[k], "negative", `neg${k + 1}`);
    }
  }
  if (rows.length === 0) {
    throw new ExtractError("no hypernym-substituted instances in the dataset");
  }
  return {
    modelId: model.modelId,
    role: "question_final",
    labels,
    matrix: matrixFromRows(rows),
    spans,
    extra: { chat_template: "none", prompt_template: "description\\n\\nquestion" },
  };
}

/**
 * One mean-pooled vision vector per (concept, image) pair.  The concept
 * map assigns each image file one or more concepts; an image listed under
 * two concepts contributes two rows with distinct labels.  Unreadable
 * files are collected and reported together rather than one at a time.
 */
export function extractVisionPatches(
  model: TinyTransformer,
  imageDir: string,
  conceptMap: Readonly<Record<string, string | readonly string[]>>,
): WriteSpec {
  const files = Object.keys(conceptMap).sort();
  if (files.length === 0) throw new ExtractError("empty concept map");

  const failures: Array<{ file: string; reason: string }> = [];
  const labels: string[] = [];
  const spans: SpanRecord[] = [];
  const rows: Float32Array[] = [];
  for (const file of files) {
    const mapped = conceptMap[file];
    const concepts = typeof mapped === "string" ? [mapped] : [...mapped];
    if (concepts.length === 0) {
      failures.push({ file, reason: "no concept assigned" });
      continue;
    }
    let vector: Float32Array;
    try {
      vector = model.encodeImage(readPnm(path.join(imageDir, file)));
    } catch (err) {
      if (err instanceof PnmError) {
        failures.push({ file, reason: err.message });
        continue;
      }
      throw err;
    }
    const imageId = file.replace(/\.[^.]+$/, "");
    for (const concept of concepts) {
      labels.push(`${concept}/${imageId}`);
      spans.push({ concept, image_id: imageId });
      rows.push(vector);
    }
  }
  if (failures.length > 0) throw new UnreadableImagesError(failures);
  return {
    modelId: model.modelId,
    role: "vision_patch",
    labels,
    matrix: matrixFromRows(rows),
    spans,
    extra: { patch_size: model.config.patchSize, pooling: "mean" },
  };
}
