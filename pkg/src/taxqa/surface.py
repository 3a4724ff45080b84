"""English surface forms for concept mentions: plurals, articles, substitution."""
from __future__ import annotations

import re

# Nouns whose plural is not formed by a suffix rule.
_IRREGULAR_PLURALS = {
    "man": "men",
    "woman": "women",
    "child": "children",
    "person": "people",
    "foot": "feet",
    "tooth": "teeth",
    "goose": "geese",
    "mouse": "mice",
    "sheep": "sheep",
    "fish": "fish",
    "deer": "deer",
    "aircraft": "aircraft",
    # mass and collective nouns used as category labels
    "furniture": "furniture",
    "clothing": "clothing",
    "equipment": "equipment",
    "cutlery": "cutlery",
    "produce": "produce",
    "food": "food",
    "bread": "bread",
    "headgear": "headgear",
    "goods": "goods",
    "grass": "grass",
}

# Already-plural nouns: pluralize() is a no-op and they take plural verbs.
PLURAL_ONLY = {
    "pants", "jeans", "shorts", "scissors", "glasses", "sunglasses",
    "clothes", "stairs", "trousers", "binoculars",
}

_F_TO_VES = {"knife", "leaf", "wolf", "shelf", "loaf", "calf", "half", "scarf"}
_O_TO_ES = {"potato", "tomato", "hero", "echo"}

# Vowel-initial words with consonant sounds, and the reverse.
_A_EXCEPTIONS = {
    "unicorn", "uniform", "university", "utensil", "user", "ukulele",
    "used", "one", "european", "unicycle",
}
_AN_EXCEPTIONS = {"hour", "honest", "heir", "honor", "heirloom"}


def pluralize(noun: str) -> str:
    """Plural surface form of a concept name.

    Multi-word names pluralize the head (last) word: "traffic light" ->
    "traffic lights". Names in PLURAL_ONLY are returned unchanged.
    """
    if not noun:
        raise ValueError("cannot pluralize an empty name")
    prefix, _, head = noun.rpartition(" ")
    if head in PLURAL_ONLY:
        plural_head = head
    elif head in _IRREGULAR_PLURALS:
        plural_head = _IRREGULAR_PLURALS[head]
    elif re.search(r"(s|x|z|ch|sh)$", head):
        plural_head = head + "es"
    elif len(head) > 1 and head.endswith("y") and head[-2] not in "aeiou":
        plural_head = head[:-1] + "ies"
    elif head in _F_TO_VES:
        stem = head[:-2] if head.endswith("fe") else head[:-1]
        plural_head = stem + "ves"
    elif head in _O_TO_ES:
        plural_head = head + "es"
    else:
        plural_head = head + "s"
    return f"{prefix} {plural_head}" if prefix else plural_head


def is_plural_only(noun: str) -> bool:
    return noun.rpartition(" ")[2] in PLURAL_ONLY


def indefinite_article(phrase: str) -> str:
    """"a" or "an" for the given noun phrase, by its first word."""
    head = phrase.split()[0].lower()
    if head in _AN_EXCEPTIONS:
        return "an"
    if head in _A_EXCEPTIONS:
        return "a"
    return "an" if head[0] in "aeiou" else "a"


class MentionNotFoundError(ValueError):
    """The concept to replace does not occur in the text."""


def replace_concept_mention(text: str, old: str, new: str) -> str:
    """Replace one word-boundary mention of `old` with `new`.

    Handles three surface shapes, most specific first: an article-marked
    singular ("a dog" -> "an animal"), the plural form, and a bare singular.
    The article is re-agreed to the replacement.
    """
    # Article-marked singular. Checked first so that nouns with identical
    # singular and plural forms ("a sheep") are not treated as plurals.
    pat = re.compile(rf"\b(a|an) {re.escape(old)}\b")
    m = pat.search(text)
    if m:
        replacement = f"{indefinite_article(new)} {new}"
        return text[: m.start()] + replacement + text[m.end():]

    old_plural = pluralize(old)
    pat = re.compile(rf"\b{re.escape(old_plural)}\b")
    m = pat.search(text)
    if m:
        return text[: m.start()] + pluralize(new) + text[m.end():]

    pat = re.compile(rf"\b{re.escape(old)}\b")
    m = pat.search(text)
    if m:
        return text[: m.start()] + new + text[m.end():]

    raise MentionNotFoundError(f"no mention of {old!r} in {text!r}")


def mentions_concept(text: str, concept: str) -> bool:
    """Word-boundary scan for the concept in singular or plural form."""
    for form in (concept, pluralize(concept)):
        if re.search(rf"\b{re.escape(form)}\b", text):
            return True
    return False
