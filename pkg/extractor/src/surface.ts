/**
 * English plural surface forms for concept names.
 *
 * Mention matching must accept the same plural the question generator
 * produces ("Are there any knives?"), so these tables and suffix rules
 * mirror the generator's exactly.  Multi-word names pluralize the head
 * (last) word: "traffic light" -> "traffic lights".
 */

const IRREGULAR_PLURALS: Readonly<Record<string, string>> = {
  man: "men",
  woman: "women",
  child: "children",
  person: "people",
  foot: "feet",
  tooth: "teeth",
  goose: "geese",
  mouse: "mice",
  sheep: "sheep",
  fish: "fish",
  deer: "deer",
  aircraft: "aircraft",
  // mass and collective nouns used as category labels
  furniture: "furniture",
  clothing: "clothing",
  equipment: "equipment",
  cutlery: "cutlery",
  produce: "produce",
  food: "food",
  bread: "bread",
  headgear: "headgear",
  goods: "goods",
  grass: "grass",
};

const PLURAL_ONLY = new Set([
  "pants", "jeans", "shorts", "scissors", "glasses", "sunglasses",
  "clothes", "stairs", "trousers", "binoculars",
]);

const F_TO_VES = new Set(["knife", "leaf", "wolf", "shelf", "loaf", "calf", "half", "scarf"]);
const O_TO_ES = new Set(["potato", "tomato", "hero", "echo"]);

export function pluralize(noun: string): string {
  if (!noun) throw new Error("cannot pluralize an empty name");
  const cut = noun.lastIndexOf(" ");
  const prefix = cut >= 0 ? noun.slice(0, cut) : "";
  const head = cut >= 0 ? noun.slice(cut + 1) : noun;
  let pluralHead: string;
  if (PLURAL_ONLY.has(head)) {
    pluralHead = head;
  } else if (head in IRREGULAR_PLURALS) {
    pluralHead = IRREGULAR_PLURALS[head];
  } else if (/(s|x|z|ch|sh)$/.test(head)) {
    pluralHead = head + "es";
  } else if (head.length > 1 && head.endsWith("y") && !"aeiou".includes(head[head.length - 2])) {
    pluralHead = head.slice(0, -1) + "ies";
  } else if (F_TO_VES.has(head)) {
    const stem = head.endsWith("fe") ? head.slice(0, -2) : head.slice(0, -1);
    pluralHead = stem + "ves";
  } else if (O_TO_ES.has(head)) {
    pluralHead = head + "es";
  } else {
    pluralHead = head + "s";
  }
  return prefix ? `${prefix} ${pluralHead}` : pluralHead;
}
