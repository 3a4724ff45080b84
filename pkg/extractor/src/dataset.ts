/**
 * Reader for the question-dataset interchange format: one JSON object per
 * line, each a QA instance with a scene description, one positive
 * question, and its matched negative questions.
 */

import * as fs from "node:fs";

export interface DatasetQuestion {
  qtype: string;
  /** Concept the question asks about. */
  target: string;
  text: string;
  gold: string;
}

export interface DatasetInstance {
  instance_id: string;
  scene_id: string;
  description: string;
  positive: DatasetQuestion;
  negatives: DatasetQuestion[];
  /** 0 for the original leaf question, k for the k-th hypernym substitution. */
  substitution_depth: number;
  /** Leaf concept the instance derives from. */
  source_leaf: string;
  image?: string;
}

export class DatasetError extends Error {}

function asQuestion(value: unknown, where: string): DatasetQuestion {
  const q = value as Partial<DatasetQuestion> | null;
  if (!q || typeof q.qtype !== "string" || typeof q.target !== "string" ||
      typeof q.text !== "string" || typeof q.gold !== "string") {
    throw new DatasetError(`${where}: malformed question record`);
  }
  return { qtype: q.qtype, target: q.target, text: q.text, gold: q.gold };
}

export function parseInstance(line: string, where: string): DatasetInstance {
  let raw: unknown;
  try {
    raw = JSON.parse(line);
  } catch (err) {
    throw new DatasetError(`${where}: not JSON: ${(err as Error).message}`);
  }
  const rec = raw as Record<string, unknown>;
  for (const key of ["instance_id", "scene_id", "description", "source_leaf"]) {
    if (typeof rec[key] !== "string") throw new DatasetError(`${where}: missing ${key}`);
  }
  if (typeof rec["substitution_depth"] !== "number") {
    throw new DatasetError(`${where}: missing substitution_depth`);
  }
  if (!Array.isArray(rec["negatives"])) throw new DatasetError(`${where}: missing negatives`);
  const instance: DatasetInstance = {
    instance_id: rec["instance_id"] as string,
    scene_id: rec["scene_id"] as string,
    description: rec["description"] as string,
    positive: asQuestion(rec["positive"], where),
    negatives: (rec["negatives"] as unknown[]).map((q, i) => asQuestion(q, `${where} neg ${i}`)),
    substitution_depth: rec["substitution_depth"] as number,
    source_leaf: rec["source_leaf"] as string,
  };
  if (typeof rec["image"] === "string") instance.image = rec["image"];
  return instance;
}

export function readDataset(path: string): DatasetInstance[] {
  const text = fs.readFileSync(path, "utf8");
  const instances: DatasetInstance[] = [];
  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i++) {
    if (lines[i].trim() === "") continue;
    instances.push(parseInstance(lines[i], `${path}:${i + 1}`));
  }
  if (instances.length === 0) throw new DatasetError(`${path}: empty dataset`);
  return instances;
}
