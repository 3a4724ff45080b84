export { SeededRng } from "./rng.js";
export { pluralize } from "./surface.js";
export {
  DEFAULT_LEXICON,
  findMentions,
  lastSubwordIndex,
  SpanAlignmentError,
  Tokenizer,
  type Mention,
  type Token,
} from "./tokenizer.js";
export { DEFAULT_CONFIG, TinyTransformer, type ModelConfig } from "./model.js";
export { parsePnm, readPnm, PnmError, type PnmImage } from "./pnm.js";
export {
  parseInstance,
  readDataset,
  DatasetError,
  type DatasetInstance,
  type DatasetQuestion,
} from "./dataset.js";
export {
  DTYPE_TAG,
  ROLES,
  REQUIRED_SPAN_KEYS,
  QUESTION_GROUPS,
  dumpPaths,
  matrixFromRows,
  matrixRow,
  payloadBytes,
  payloadDigest,
  readDump,
  writeDump,
  DumpError,
  type DumpManifest,
  type DumpRole,
  type LoadedDump,
  type Matrix,
  type SpanRecord,
  type WriteSpec,
} from "./dump.js";
export {
  extractLayerStates,
  extractQuestionStates,
  extractStatic,
  extractVisionPatches,
  promptFor,
  ExtractError,
  MentionNotFoundError,
  UnreadableImagesError,
} from "./extract.js";
export { EXIT_CONFIG, EXIT_DATA, EXIT_OK, main } from "./cli.js";
