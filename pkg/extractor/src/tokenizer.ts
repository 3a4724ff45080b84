/**
 * Deterministic word-piece tokenizer with exact character offsets.
 *
 * The vocabulary is fixed at construction: two specials, every single
 * character a word or punctuation mark can contain, and a lexicon of whole
 * words.  Lexicon words tokenize to one piece; anything else falls back to
 * greedy longest-prefix matching, bottoming out at single characters, so
 * every word tokenizes and a concept in the lexicon is single-token by
 * construction.  Matching is case-insensitive but offsets always index the
 * original text, which is what downstream span records store.
 */

import { pluralize } from "./surface.js";

export interface Token {
  piece: string;
  id: number;
  /** Character offsets into the original text, [start, end). */
  start: number;
  end: number;
}

export interface Mention {
  concept: string;
  /** Matched surface form, singular or plural. */
  surface: string;
  start: number;
  end: number;
}

/** A mention's character offsets do not land on token boundaries. */
export class SpanAlignmentError extends Error {}

const PAD = "[PAD]";
const UNK = "[UNK]";

const WORD_CHARS = "abcdefghijklmnopqrstuvwxyz0123456789'-";
const PUNCT_CHARS = ".,?!;:()";

/** Words the default vocabulary treats as single pieces: question-template
 * and description-template function words plus common scene concepts and
 * attributes.  Callers can extend or replace the list per corpus. */
export const DEFAULT_LEXICON: readonly string[] = [
  // function words used by the question and description templates
  "a", "an", "and", "any", "are", "atop", "behind", "by", "do", "in", "is",
  "it", "made", "near", "next", "no", "of", "on", "off", "one", "or",
  "picture", "scene", "see", "that", "the", "there", "this", "to", "true",
  "under", "with", "yes", "you",
  // concept nouns: leaves and hypernyms
  "aircraft", "animal", "apple", "baked", "ball", "banana", "barrier",
  "bench", "bicycle", "bird", "board", "boat", "bottle", "bovine", "bread",
  "canine", "car", "carrot", "cat", "chair", "clothing", "container", "cow",
  "cup", "cutlery", "deer", "device", "dog", "eagle", "equine", "equipment",
  "feline", "fence", "fish", "flower", "food", "fork", "fruit", "furniture",
  "garment", "goods", "hammer", "hat", "headgear", "horse", "jacket", "kite",
  "knife", "lamp", "mammal", "motor", "plant", "plate", "potato", "produce",
  "salmon", "seat", "sheep", "shirt", "skateboard", "sofa", "sparrow",
  "spoon", "surfboard", "table", "telephone", "television", "tool", "toy",
  "tree", "truck", "ungulate", "utensil", "vegetable", "vehicle",
  "vertebrate", "vessel", "wall", "watch",
  // attributes and relation words the renderer emits
  "black", "blue", "brick", "brown", "docked", "full", "glass", "gray",
  "green", "large", "metal", "parked", "red", "silver", "small", "tall",
  "white", "wood", "yellow",
];

export class Tokenizer {
  /** id -> piece */
  readonly vocab: string[];
  private readonly ids = new Map<string, number>();
  private readonly words = new Set<string>();
  private readonly maxWordLength: number;

  constructor(lexicon: readonly string[] = DEFAULT_LEXICON) {
    const pieces: string[] = [PAD, UNK];
    for (const ch of WORD_CHARS) pieces.push(ch);
    for (const ch of PUNCT_CHARS) pieces.push(ch);
    const seen = new Set(pieces);
    // multi-word lexicon entries contribute their words
    const wordSet = new Set<string>();
    for (const entry of lexicon) {
      for (const word of entry.toLowerCase().split(/\s+/)) {
        if (word) wordSet.add(word);
      }
    }
    for (const word of [...wordSet].sort()) {
      if (!seen.has(word)) {
        pieces.push(word);
        seen.add(word);
      }
      this.words.add(word);
    }
    this.vocab = pieces;
    for (let i = 0; i < pieces.length; i++) this.ids.set(pieces[i], i);
    this.maxWordLength = Math.max(1, ...[...this.words].map((w) => w.length));
  }

  get vocabSize(): number {
    return this.vocab.length;
  }

  get padId(): number {
    return 0;
  }

  get unkId(): number {
    return 1;
  }

  pieceId(piece: string): number {
    const id = this.ids.get(piece);
    if (id === undefined) throw new Error(`piece ${JSON.stringify(piece)} not in vocabulary`);
    return id;
  }

  isWord(word: string): boolean {
    return this.words.has(word.toLowerCase());
  }

  tokenize(text: string): Token[] {
    const tokens: Token[] = [];
    let pos = 0;
    while (pos < text.length) {
      const ch = text[pos];
      const low = ch.toLowerCase();
      if (/\s/.test(ch)) {
        pos += 1;
        continue;
      }
      if (WORD_CHARS.includes(low)) {
        let end = pos;
        while (end < text.length && WORD_CHARS.includes(text[end].toLowerCase())) end += 1;
        this.tokenizeWord(text, pos, end, tokens);
        pos = end;
        continue;
      }
      const id = this.ids.get(low) ?? this.unkId;
      tokens.push({ piece: id === this.unkId ? UNK : low, id, start: pos, end: pos + 1 });
      pos += 1;
    }
    return tokens;
  }

  /** Greedy longest-prefix split of text[start:end); single characters
   * guarantee progress, so every word tokenizes. */
  private tokenizeWord(text: string, start: number, end: number, out: Token[]): void {
    let pos = start;
    while (pos < end) {
      const limit = Math.min(end - pos, this.maxWordLength);
      let matched = 1;
      let piece = text[pos].toLowerCase();
      for (let len = limit; len >= 2; len--) {
        const candidate = text.slice(pos, pos + len).toLowerCase();
        if (this.words.has(candidate)) {
          matched = len;
          piece = candidate;
          break;
        }
      }
      const id = this.ids.get(piece) ?? this.unkId;
      out.push({ piece: id === this.unkId ? UNK : piece, id, start: pos, end: pos + matched });
      pos += matched;
    }
  }

  tokenIds(text: string): number[] {
    return this.tokenize(text).map((t) => t.id);
  }
}

const BOUNDARY = /[a-z0-9_]/i;

function wordBoundaryMatches(text: string, form: string): Array<[number, number]> {
  const out: Array<[number, number]> = [];
  const lowText = text.toLowerCase();
  const lowForm = form.toLowerCase();
  let from = 0;
  for (;;) {
    const at = lowText.indexOf(lowForm, from);
    if (at < 0) break;
    const end = at + lowForm.length;
    const leftOk = at === 0 || !BOUNDARY.test(text[at - 1]);
    const rightOk = end === text.length || !BOUNDARY.test(text[end]);
    if (leftOk && rightOk) out.push([at, end]);
    from = at + 1;
  }
  return out;
}

/**
 * Word-boundary occurrences of a concept in singular or plural form,
 * sorted by start offset.  Plural matches win where the two overlap,
 * mirroring how the question generator treats surface forms.
 */
export function findMentions(
  text: string,
  concept: string,
  region?: { start: number; end: number },
): Mention[] {
  const start = region?.start ?? 0;
  const end = region?.end ?? text.length;
  const window = text.slice(start, end);
  const plural = pluralize(concept);
  const claimed: Array<[number, number]> = [];
  const mentions: Mention[] = [];
  const forms = plural === concept ? [concept] : [plural, concept];
  for (const form of forms) {
    for (const [s, e] of wordBoundaryMatches(window, form)) {
      const overlaps = claimed.some(([cs, ce]) => s < ce && cs < e);
      if (overlaps) continue;
      claimed.push([s, e]);
      mentions.push({
        concept,
        surface: text.slice(start + s, start + e),
        start: start + s,
        end: start + e,
      });
    }
  }
  mentions.sort((a, b) => a.start - b.start);
  return mentions;
}

/**
 * Index of the last token lying entirely inside the mention's character
 * range: the anchor position for contextual-state extraction.
 */
export function lastSubwordIndex(tokens: Token[], mention: Mention): number {
  let last = -1;
  for (let i = 0; i < tokens.length; i++) {
    if (tokens[i].start >= mention.start && tokens[i].end <= mention.end) last = i;
  }
  if (last < 0) {
    throw new SpanAlignmentError(
      `mention of ${JSON.stringify(mention.concept)} at chars ` +
        `[${mention.start}, ${mention.end}) covers no complete token`,
    );
  }
  return last;
}
