"""Yes/No question synthesis, negative sampling, and hypernym substitution.

Thirteen scene question types are supported. The gold answer is mechanical:
types whose tag ends in "C" are counterfactuals with gold "No", everything
else is gold "Yes". Taxonomy-membership probes ("Is it true that a cat is a
feline?") use the dedicated `isa` tag.
"""
from __future__ import annotations

import json
import hashlib
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

from .scene import SceneGraph, filter_question, filter_scene, render_description
from .seeding import stable_seed
from .surface import (
    indefinite_article,
    is_plural_only,
    pluralize,
    replace_concept_mention,
)
from .taxonomy import Taxonomy

log = logging.getLogger(__name__)

QTYPES = (
    "exist",
    "existAttr",
    "existAttrNot",
    "existAttrC",
    "existAttrNotC",
    "existThat",
    "existThatNot",
    "existThatC",
    "existThatNotC",
    "existMaterial",
    "existMaterialNot",
    "existMaterialC",
    "existMaterialNotC",
)
TAXOMPS_QTYPE = "isa"

NEGATIVES_PER_QUESTION = 4
DEFAULT_SCENE_QUOTA = 40

# Built-in attribute lexicon: surface value -> attribute class. Callers may
# pass their own mapping; classes must match taxonomy signature tags.
ATTRIBUTE_CLASSES: dict[str, str] = {
    **{
        c: "color"
        for c in (
            "white", "black", "brown", "gray", "grey", "red", "green", "blue",
            "yellow", "orange", "purple", "pink", "silver", "gold", "tan",
            "beige", "cream", "dark", "light",
        )
    },
    **{
        m: "material"
        for m in (
            "wood", "wooden", "metal", "metallic", "steel", "plastic", "glass",
            "leather", "lace", "concrete", "brick", "stone", "cotton", "wool",
            "rubber", "paper", "porcelain", "ceramic", "denim", "wicker",
        )
    },
    **{
        s: "size"
        for s in ("large", "small", "big", "tiny", "huge", "little", "tall", "short", "long")
    },
    **{
        s: "state"
        for s in (
            "open", "closed", "on", "off", "empty", "full", "broken", "clean",
            "dirty", "wet", "dry", "lit", "folded", "parked", "docked",
        )
    },
    **{p: "pattern" for p in ("striped", "spotted", "checkered", "plaid", "floral")},
}

# Adjective-to-noun normalization for "made of {x}" slots.
_MATERIAL_NOUNS = {"wooden": "wood", "metallic": "metal"}

# Surface aliases treated as one value when deciding absence, so an object
# annotated "wooden" can never be asked about lacking "wood".
_VALUE_ALIASES = {"grey": "gray", "wooden": "wood", "metallic": "metal"}


def _canon_value(value: str) -> str:
    return _VALUE_ALIASES.get(value, value)


class QuestgenError(Exception):
    pass


class UnsupportedQuestionTypeError(QuestgenError):
    pass


class MissingAttributeError(QuestgenError):
    pass


class InsufficientCandidatesError(QuestgenError):
    """Fewer eligible negative concepts than required; the caller discards."""


@dataclass(frozen=True)
class Question:
    qtype: str
    target: str
    text: str
    gold: str
    # Attribute mentioned by the text, if any. Not part of the on-disk
    # record; negative sampling needs it while a dataset is being built.
    attribute: str | None = None


@dataclass(frozen=True)
class QAInstance:
    instance_id: str
    scene_id: str
    description: str
    positive: Question
    negatives: tuple[Question, ...]
    substitution_depth: int
    source_leaf: str
    image: str | None = None

    def __post_init__(self):
        if len(self.negatives) != NEGATIVES_PER_QUESTION:
            raise QuestgenError(
                f"{self.instance_id}: expected {NEGATIVES_PER_QUESTION} negatives,"
                f" got {len(self.negatives)}"
            )


def gold_for_qtype(qtype: str) -> str:
    return "No" if qtype.endswith("C") else "Yes"


def parent_instance_id(instance_id: str) -> str:
    """Strip the depth suffix: 's1|exist|dog@d2' -> 's1|exist|dog'."""
    base, sep, depth = instance_id.rpartition("@d")
    return base if sep and depth.isdigit() else instance_id


# ---------------------------------------------------------------------------
# templates
# ---------------------------------------------------------------------------

# slot form: "pl" templates speak of the plural, "sing" of an article-marked
# singular. Surface forms appear exactly once so substitution stays surgical.
_TEMPLATES: dict[str, tuple[str, str]] = {
    "exist": ("Are there any {pl}?", "pl"),
    "existAttr": ("Are there any {pl} that are {attr}?", "pl"),
    "existAttrNot": ("Are there {pl} in this scene that are not {attr}?", "pl"),
    "existAttrC": ("Do you see {pl} that are {attr}?", "pl"),
    "existAttrNotC": ("Do you see {art} {sing} that is not {attr}?", "sing"),
    "existThat": ("Are there any {pl} in the picture that are {attr}?", "pl"),
    "existThatNot": ("Is there {art} {sing} in the image that is not {attr}?", "sing"),
    "existThatC": ("Is there {art} {sing} that is {attr}?", "sing"),
    "existThatNotC": ("Is there {art} {sing} in the image that is not {attr}?", "sing"),
    "existMaterial": ("Do you see {art} {sing} that is made of {attr}?", "sing"),
    "existMaterialNot": ("Is there {art} {sing} that is not made of {attr}?", "sing"),
    "existMaterialC": ("Are there any {attr} {pl}?", "pl"),
    "existMaterialNotC": ("Are there {pl} that are not made of {attr}?", "pl"),
}

_MATERIAL_TYPES = frozenset(t for t in QTYPES if t.startswith("existMaterial"))
# Types whose attribute must be held by the object vs. provably absent.
_HELD_ATTR_TYPES = frozenset(
    ("existAttr", "existAttrNotC", "existThat", "existThatNotC",
     "existMaterial", "existMaterialNotC")
)
_ABSENT_ATTR_TYPES = frozenset(
    ("existAttrNot", "existAttrC", "existThatNot", "existThatC",
     "existMaterialNot", "existMaterialC")
)


def instantiate_question(qtype: str, name: str, attribute: str | None = None) -> Question:
    """Render one question from its template; gold follows the type tag."""
    if qtype not in _TEMPLATES:
        raise UnsupportedQuestionTypeError(qtype)
    template, form = _TEMPLATES[qtype]
    if qtype == "exist":
        if attribute is not None:
            raise MissingAttributeError("exist takes no attribute")
    elif attribute is None:
        raise MissingAttributeError(f"{qtype} requires an attribute")
    if form == "sing" and is_plural_only(name):
        raise UnsupportedQuestionTypeError(
            f"{qtype} needs a singular form but {name!r} is plural-only"
        )
    attr = attribute
    if attr is not None and "made of" in template:
        attr = _MATERIAL_NOUNS.get(attr, attr)
    text = template.format(
        pl=pluralize(name),
        sing=name,
        art=indefinite_article(name),
        attr=attr,
    )
    return Question(qtype, name, text, gold_for_qtype(qtype), attribute)


# ---------------------------------------------------------------------------
# per-scene synthesis
# ---------------------------------------------------------------------------


def _attr_class(attr: str, classes: Mapping[str, str]) -> str | None:
    return classes.get(attr)


def synthesize_questions(
    scene: SceneGraph,
    taxonomy: Taxonomy,
    seed: int = 0,
    attribute_classes: Mapping[str, str] | None = None,
) -> list[Question]:
    """All eligible positive questions for one scene, in deterministic order.

    Held-attribute types yield one question per annotated attribute of the
    right class; absent-attribute types pick one absent value per type with
    a seeded draw from the lexicon, restricted to classes the object is
    annotated for. Annotations are read closed-world, as in the source
    scene graphs: a value not listed for an object is false of it.
    """
    classes = ATTRIBUTE_CLASSES if attribute_classes is None else attribute_classes
    questions: list[Question] = []
    for obj in sorted(scene.objects, key=lambda o: o.object_id):
        if not taxonomy.is_leaf(obj.name):
            continue
        if not filter_question(scene, taxonomy, obj.name).accepted:
            continue
        held_material = [a for a in obj.attributes if _attr_class(a, classes) == "material"]
        held_plain = [
            a
            for a in obj.attributes
            if a not in held_material and _attr_class(a, classes) is not None
        ]
        held_classes_plain = sorted({classes[a] for a in held_plain})

        def absent_value(qtype: str, pool_classes: Sequence[str]) -> str | None:
            held = {_canon_value(a) for a in obj.attributes}
            candidates = sorted(
                v
                for v, cls in classes.items()
                if cls in pool_classes and _canon_value(v) not in held
            )
            if not candidates:
                return None
            rng = random.Random(stable_seed(seed, scene.scene_id, obj.object_id, qtype))
            return rng.choice(candidates)

        for qtype in QTYPES:
            try:
                if qtype == "exist":
                    questions.append(instantiate_question(qtype, obj.name))
                elif qtype in _HELD_ATTR_TYPES:
                    held = held_material if qtype in _MATERIAL_TYPES else held_plain
                    questions.extend(
                        instantiate_question(qtype, obj.name, a) for a in held
                    )
                else:
                    pool = ["material"] if qtype in _MATERIAL_TYPES else held_classes_plain
                    # Only classes the object is annotated for: otherwise the
                    # absence of the value cannot be read off the graph.
                    if qtype in _MATERIAL_TYPES and not held_material:
                        continue
                    value = absent_value(qtype, pool)
                    if value is not None:
                        questions.append(instantiate_question(qtype, obj.name, value))
            except UnsupportedQuestionTypeError:
                continue
    return questions


def sample_negatives(
    question: Question,
    taxonomy: Taxonomy,
    scene_concepts: Iterable[str],
    rng_seed: int,
    source_leaf: str | None = None,
    attribute_classes: Mapping[str, str] | None = None,
) -> tuple[Question, ...]:
    """Four negative variants of the question, concepts drawn without replacement.

    Eligibility: not in the scene or the hypernym closure of its labels, not
    on the source leaf's chain, and carrying every attribute class the
    question mentions. Raises InsufficientCandidatesError when fewer than
    four concepts qualify; the caller discards the question, mirroring the
    removal of types where substitution was impossible.
    """
    classes = ATTRIBUTE_CLASSES if attribute_classes is None else attribute_classes
    required: frozenset[str] = frozenset()
    if question.attribute is not None:
        cls = _attr_class(question.attribute, classes)
        if cls is not None:
            required = frozenset((cls,))
    anchor = source_leaf or question.target
    pool = taxonomy.negative_candidates(
        anchor,
        scene_concepts,
        required_tags=required,
        extra_exclude=(question.target,),
    )
    if len(pool) < NEGATIVES_PER_QUESTION:
        raise InsufficientCandidatesError(
            f"{question.qtype}/{question.target}: pool has {len(pool)} concepts"
        )
    rng = random.Random(rng_seed)
    picked = rng.sample(pool, NEGATIVES_PER_QUESTION)
    return tuple(
        Question(
            question.qtype,
            concept,
            replace_concept_mention(question.text, question.target, concept),
            "No",
            question.attribute,
        )
        for concept in picked
    )


def build_scene_instances(
    scene: SceneGraph,
    taxonomy: Taxonomy,
    seed: int = 0,
    attribute_classes: Mapping[str, str] | None = None,
) -> list[QAInstance]:
    """Depth-0 instances for one scene; empty if the scene fails its filter."""
    if not filter_scene(scene).accepted:
        return []
    description = render_description(scene)
    names = scene.names()
    instances: list[QAInstance] = []
    for q in synthesize_questions(scene, taxonomy, seed, attribute_classes):
        iid = _instance_id(scene.scene_id, q)
        try:
            negatives = sample_negatives(
                q,
                taxonomy,
                names,
                stable_seed(seed, "neg", iid),
                source_leaf=q.target,
                attribute_classes=attribute_classes,
            )
        except InsufficientCandidatesError:
            continue
        instances.append(
            QAInstance(
                instance_id=iid,
                scene_id=scene.scene_id,
                description=description,
                positive=q,
                negatives=negatives,
                substitution_depth=0,
                source_leaf=q.target,
                image=scene.image,
            )
        )
    return instances


def _instance_id(scene_id: str, q: Question) -> str:
    parts = [scene_id, q.qtype, q.target]
    if q.attribute is not None:
        parts.append(q.attribute)
    return "|".join(parts)


# ---------------------------------------------------------------------------
# hypernym substitution
# ---------------------------------------------------------------------------


def substitute_hypernyms(
    instance: QAInstance,
    taxonomy: Taxonomy,
    scene_concepts: Iterable[str] = (),
    seed: int = 0,
    attribute_classes: Mapping[str, str] | None = None,
) -> list[QAInstance]:
    """One instance per hypernym on the source leaf's chain, depth 1-based.

    The gold answer never changes: the question filter guarantees no other
    scene object shares the chain, so the target's extension in the scene is
    stable under substitution. Negatives are re-sampled per depth with a
    derived seed (same eligibility pool; the leaf's chain stays excluded).
    """
    if instance.substitution_depth != 0:
        raise QuestgenError("can only substitute a depth-0 instance")
    leaf = instance.source_leaf
    out: list[QAInstance] = []
    for depth, hyper in enumerate(taxonomy.hypernym_chain(leaf), start=1):
        pos = Question(
            instance.positive.qtype,
            hyper,
            replace_concept_mention(instance.positive.text, instance.positive.target, hyper),
            instance.positive.gold,
            instance.positive.attribute,
        )
        iid = f"{instance.instance_id}@d{depth}"
        negatives = sample_negatives(
            pos,
            taxonomy,
            scene_concepts,
            stable_seed(seed, "neg", iid),
            source_leaf=leaf,
            attribute_classes=attribute_classes,
        )
        out.append(
            QAInstance(
                instance_id=iid,
                scene_id=instance.scene_id,
                description=instance.description,
                positive=pos,
                negatives=negatives,
                substitution_depth=depth,
                source_leaf=leaf,
                image=instance.image,
            )
        )
    return out


# ---------------------------------------------------------------------------
# per-scene balancing
# ---------------------------------------------------------------------------


def balance_sample(
    instances: Sequence[QAInstance],
    quota: int = DEFAULT_SCENE_QUOTA,
    seed: int = 0,
) -> list[QAInstance]:
    """Cap each scene at `quota` depth-0 instances, preserving type ratios.

    Per-type allotments use largest-remainder apportionment (floor the
    proportional share, then hand leftover slots to the largest fractional
    remainders, ties broken by type name). Scenes at or under the quota are
    kept whole.
    """
    by_scene: dict[str, list[QAInstance]] = {}
    for inst in instances:
        if inst.substitution_depth != 0:
            raise QuestgenError("balance_sample expects depth-0 instances")
        by_scene.setdefault(inst.scene_id, []).append(inst)

    kept: list[QAInstance] = []
    for scene_id in sorted(by_scene):
        scene_insts = by_scene[scene_id]
        if len(scene_insts) <= quota:
            kept.extend(scene_insts)
            continue
        by_type: dict[str, list[QAInstance]] = {}
        for inst in scene_insts:
            by_type.setdefault(inst.positive.qtype, []).append(inst)
        total = len(scene_insts)
        shares = {qt: quota * len(g) / total for qt, g in by_type.items()}
        allot = {qt: int(share) for qt, share in shares.items()}
        leftover = quota - sum(allot.values())
        for qt in sorted(shares, key=lambda qt: (-(shares[qt] - allot[qt]), qt)):
            if leftover == 0:
                break
            if allot[qt] < len(by_type[qt]):
                allot[qt] += 1
                leftover -= 1
        rng = random.Random(stable_seed(seed, "balance", scene_id))
        chosen: list[QAInstance] = []
        for qt in sorted(by_type):
            group = by_type[qt]
            k = min(allot[qt], len(group))
            idx = sorted(rng.sample(range(len(group)), k))
            chosen.extend(group[i] for i in idx)
        order = {inst.instance_id: i for i, inst in enumerate(scene_insts)}
        chosen.sort(key=lambda inst: order[inst.instance_id])
        kept.extend(chosen)
    return kept


# ---------------------------------------------------------------------------
# taxonomy-membership probes
# ---------------------------------------------------------------------------


def _isa_text(hypo: str, hyper: str) -> str:
    subj = hypo if is_plural_only(hypo) else f"{indefinite_article(hypo)} {hypo}"
    verb = "are" if is_plural_only(hypo) else "is"
    pred = hyper if is_plural_only(hyper) else f"{indefinite_article(hyper)} {hyper}"
    return f"Is it true that {subj} {verb} {pred}?"


def generate_taxomps(taxonomy: Taxonomy, seed: int = 0) -> list[QAInstance]:
    """Scene-free membership probes for every (leaf, hypernym) pair.

    The positive asks about the true hypernym (gold Yes); negatives replace
    it with four sampled concepts off the leaf's chain whose signatures
    cover the hypernym's (gold No). Pairs with an insufficient pool are
    skipped with a warning.
    """
    out: list[QAInstance] = []
    for hypo, hyper in taxonomy.hyponym_hypernym_pairs():
        pool = taxonomy.negative_candidates(
            hypo, (), required_tags=taxonomy.signature(hyper)
        )
        if len(pool) < NEGATIVES_PER_QUESTION:
            log.warning("taxomps: skipping (%s, %s): pool has %d", hypo, hyper, len(pool))
            continue
        rng = random.Random(stable_seed(seed, "taxomps", hypo, hyper))
        picked = rng.sample(pool, NEGATIVES_PER_QUESTION)
        text = _isa_text(hypo, hyper)
        positive = Question(TAXOMPS_QTYPE, hyper, text, "Yes")
        negatives = tuple(
            Question(TAXOMPS_QTYPE, c, replace_concept_mention(text, hyper, c), "No")
            for c in picked
        )
        depth = taxonomy.hypernym_chain(hypo).index(hyper) + 1
        out.append(
            QAInstance(
                instance_id=f"taxomps|{hypo}|{hyper}",
                scene_id="",
                description="",
                positive=positive,
                negatives=negatives,
                substitution_depth=depth,
                source_leaf=hypo,
            )
        )
    return out


# ---------------------------------------------------------------------------
# full pipeline and dataset IO
# ---------------------------------------------------------------------------


def build_dataset(
    scenes: Mapping[str, SceneGraph],
    taxonomy: Taxonomy,
    seed: int = 0,
    quota: int = DEFAULT_SCENE_QUOTA,
    attribute_classes: Mapping[str, str] | None = None,
    jobs: int = 1,
) -> tuple[list[QAInstance], dict]:
    """Scenes to instances: synthesize, balance, substitute. Returns a
    (instances, manifest) pair; the result is independent of `jobs`."""
    ordered = [scenes[sid] for sid in sorted(scenes)]

    def per_scene(scene: SceneGraph) -> list[QAInstance]:
        return build_scene_instances(
            scene, taxonomy, stable_seed(seed, "scene", scene.scene_id), attribute_classes
        )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            raw_lists = list(pool.map(per_scene, ordered))
    else:
        raw_lists = [per_scene(s) for s in ordered]

    depth0 = balance_sample([i for lst in raw_lists for i in lst], quota, seed)
    names_by_scene = {s.scene_id: s.names() for s in ordered}
    substituted: list[QAInstance] = []
    for inst in depth0:
        substituted.extend(
            substitute_hypernyms(
                inst,
                taxonomy,
                names_by_scene[inst.scene_id],
                stable_seed(seed, "subst", inst.instance_id),
                attribute_classes,
            )
        )
    instances = sorted(depth0 + substituted, key=lambda i: i.instance_id)

    scene_ids = {i.scene_id for i in instances}
    by_depth: dict[int, int] = {}
    by_qtype: dict[str, int] = {}
    for inst in instances:
        by_depth[inst.substitution_depth] = by_depth.get(inst.substitution_depth, 0) + 1
        by_qtype[inst.positive.qtype] = by_qtype.get(inst.positive.qtype, 0) + 1
    pairs = {(i.source_leaf, i.positive.target) for i in instances if i.substitution_depth > 0}
    manifest = {
        "template_version": "1",
        "seed": seed,
        "quota_per_scene": quota,
        "negatives_per_question": NEGATIVES_PER_QUESTION,
        "resample_negatives_per_depth": True,
        "n_scenes": len(scene_ids),
        "n_positive_leaf": len(depth0),
        "n_positive_substituted": len(substituted),
        "n_positive": len(instances),
        "n_total_questions": len(instances) * (1 + NEGATIVES_PER_QUESTION),
        "n_chains": len({i.source_leaf for i in substituted}),
        "n_pairs": len(pairs),
        "counts_by_depth": {str(k): by_depth[k] for k in sorted(by_depth)},
        "counts_by_qtype": {k: by_qtype[k] for k in sorted(by_qtype)},
    }
    return instances, manifest


def instance_to_record(instance: QAInstance) -> dict:
    def qrec(q: Question) -> dict:
        return {"qtype": q.qtype, "target": q.target, "text": q.text, "gold": q.gold}

    record = {
        "instance_id": instance.instance_id,
        "scene_id": instance.scene_id,
        "description": instance.description,
        "positive": qrec(instance.positive),
        "negatives": [qrec(q) for q in instance.negatives],
        "substitution_depth": instance.substitution_depth,
        "source_leaf": instance.source_leaf,
    }
    if instance.image is not None:
        record["image"] = instance.image
    return record


def record_to_instance(record: Mapping) -> QAInstance:
    def q(body: Mapping) -> Question:
        return Question(body["qtype"], body["target"], body["text"], body["gold"])

    return QAInstance(
        instance_id=record["instance_id"],
        scene_id=record["scene_id"],
        description=record["description"],
        positive=q(record["positive"]),
        negatives=tuple(q(b) for b in record["negatives"]),
        substitution_depth=record["substitution_depth"],
        source_leaf=record["source_leaf"],
        image=record.get("image"),
    )


def write_dataset(path: str | Path, instances: Iterable[QAInstance]) -> None:
    lines = [
        json.dumps(instance_to_record(i), ensure_ascii=False, sort_keys=True)
        for i in instances
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_dataset(source: str | Path | IO[str]) -> list[QAInstance]:
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text(encoding="utf-8")
    return [
        record_to_instance(json.loads(line))
        for line in text.splitlines()
        if line.strip()
    ]


def dataset_digest(instances: Iterable[QAInstance]) -> str:
    """Digest of the canonical record serialization; stamped into run files."""
    h = hashlib.sha256()
    for inst in instances:
        h.update(
            json.dumps(
                instance_to_record(inst), ensure_ascii=False, sort_keys=True
            ).encode("utf-8")
        )
        h.update(b"\n")
    return h.hexdigest()
