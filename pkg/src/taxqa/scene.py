"""Scene graphs: parsing, eligibility filters, and description rendering."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Mapping

from .surface import indefinite_article, is_plural_only
from .taxonomy import Taxonomy

MAX_SCENE_OBJECTS = 20
TEMPLATE_VERSION = "1"


class SceneError(Exception):
    """Base class for scene graph failures."""


class SceneSchemaError(SceneError):
    def __init__(self, message: str, path: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class DanglingRelationError(SceneSchemaError):
    pass


class UnknownObjectError(SceneError):
    pass


@dataclass(frozen=True)
class SceneObject:
    object_id: str
    name: str
    attributes: tuple[str, ...] = ()
    # (predicate, target object id) in annotation order
    relations: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class SceneGraph:
    scene_id: str
    objects: tuple[SceneObject, ...]
    image: str | None = None

    def __post_init__(self):
        if not self.objects:
            raise SceneSchemaError("scene has no objects", self.scene_id)

    def object_by_id(self, object_id: str) -> SceneObject:
        for obj in self.objects:
            if obj.object_id == object_id:
                return obj
        raise UnknownObjectError(f"{self.scene_id}: no object {object_id!r}")

    def names(self) -> list[str]:
        return [obj.name for obj in self.objects]


# ---------------------------------------------------------------------------
# parsing and serialization
# ---------------------------------------------------------------------------


def parse_scene_graph(scene_id: str, document: Mapping) -> SceneGraph:
    """Parse one scene body; errors name the offending path."""
    if not isinstance(document, Mapping):
        raise SceneSchemaError("scene body must be an object", scene_id)
    objects_doc = document.get("objects")
    if not isinstance(objects_doc, Mapping) or not objects_doc:
        raise SceneSchemaError("missing or empty 'objects'", scene_id)

    objects: list[SceneObject] = []
    for oid, body in objects_doc.items():
        path = f"{scene_id}.objects.{oid}"
        if not isinstance(body, Mapping):
            raise SceneSchemaError("object body must be an object", path)
        name = body.get("name")
        if not isinstance(name, str) or not name.strip():
            raise SceneSchemaError("missing object name", path)
        attrs = body.get("attributes", [])
        if not isinstance(attrs, list) or any(not isinstance(a, str) for a in attrs):
            raise SceneSchemaError("attributes must be a list of strings", path)
        relations = []
        for i, rel in enumerate(body.get("relations", [])):
            rel_path = f"{path}.relations[{i}]"
            if not isinstance(rel, Mapping):
                raise SceneSchemaError("relation must be an object", rel_path)
            pred, tgt = rel.get("name"), rel.get("object")
            if not isinstance(pred, str) or not pred.strip():
                raise SceneSchemaError("missing relation name", rel_path)
            if not isinstance(tgt, str) or not tgt:
                raise SceneSchemaError("missing relation object id", rel_path)
            relations.append((pred.strip(), tgt))
        objects.append(
            SceneObject(str(oid), name.strip(), tuple(attrs), tuple(relations))
        )

    known_ids = {o.object_id for o in objects}
    for obj in objects:
        for _, tgt in obj.relations:
            if tgt not in known_ids:
                raise DanglingRelationError(
                    f"relation targets missing object {tgt!r}",
                    f"{scene_id}.objects.{obj.object_id}",
                )
    image = document.get("image")
    return SceneGraph(scene_id, tuple(objects), image if isinstance(image, str) else None)


def serialize_scene_graph(scene: SceneGraph) -> dict:
    body: dict = {
        "objects": {
            obj.object_id: {
                "name": obj.name,
                "attributes": list(obj.attributes),
                "relations": [
                    {"name": pred, "object": tgt} for pred, tgt in obj.relations
                ],
            }
            for obj in scene.objects
        }
    }
    if scene.image is not None:
        body["image"] = scene.image
    return body


def load_scene_graphs(source: str | Path | IO[str] | Mapping) -> dict[str, SceneGraph]:
    """Load a {scene_id: body} document from a path, stream, or mapping."""
    if isinstance(source, Mapping):
        document = source
    elif hasattr(source, "read"):
        document = json.load(source)
    else:
        document = json.loads(Path(source).read_text(encoding="utf-8"))
    if not isinstance(document, Mapping):
        raise SceneSchemaError("top level must map scene ids to bodies", "$")
    return {sid: parse_scene_graph(str(sid), body) for sid, body in document.items()}


# ---------------------------------------------------------------------------
# eligibility filters
# ---------------------------------------------------------------------------

REASON_OK = "ok"
REASON_TOO_MANY_OBJECTS = "too_many_objects"
REASON_DUPLICATE_LABELS = "duplicate_labels"
REASON_MULTI_OBJECT_QUESTION = "multi_object_question"
REASON_HYPERNYM_OVERLAP = "hypernym_overlap"
REASON_UNSUPPORTED_ANSWER = "unsupported_answer_type"


@dataclass(frozen=True)
class FilterVerdict:
    accepted: bool
    reason: str

    @classmethod
    def ok(cls) -> "FilterVerdict":
        return cls(True, REASON_OK)

    @classmethod
    def reject(cls, reason: str) -> "FilterVerdict":
        return cls(False, reason)


def filter_scene(scene: SceneGraph, max_objects: int = MAX_SCENE_OBJECTS) -> FilterVerdict:
    """Scenes must be small and unambiguous: the object count check runs first."""
    if len(scene.objects) > max_objects:
        return FilterVerdict.reject(REASON_TOO_MANY_OBJECTS)
    names = scene.names()
    if len(set(names)) != len(names):
        return FilterVerdict.reject(REASON_DUPLICATE_LABELS)
    return FilterVerdict.ok()


def _safe_chain(taxonomy: Taxonomy, concept: str) -> tuple[str, ...]:
    return taxonomy.hypernym_chain(concept) if concept in taxonomy else ()


def filter_question(
    scene: SceneGraph,
    taxonomy: Taxonomy,
    target: str,
    answer: str = "yes",
    mentioned_objects: Iterable[str] | None = None,
) -> FilterVerdict:
    """Per-question eligibility for hypernym substitution.

    The target must be the only object the question mentions, the answer
    must be yes/no, and no hypernym of the target may also be the name or a
    hypernym of another scene object (otherwise substituting the target
    could flip the ground truth).
    """
    if answer.strip().lower() not in ("yes", "no"):
        return FilterVerdict.reject(REASON_UNSUPPORTED_ANSWER)
    mentioned = set(mentioned_objects) if mentioned_objects is not None else {target}
    if len(mentioned) > 1:
        return FilterVerdict.reject(REASON_MULTI_OBJECT_QUESTION)
    if target not in scene.names():
        raise UnknownObjectError(
            f"{scene.scene_id}: question target {target!r} names no scene object"
        )
    target_chain = set(_safe_chain(taxonomy, target))
    if not target_chain:
        return FilterVerdict.ok()
    for obj in scene.objects:
        if obj.name == target:
            continue
        other = {obj.name, *_safe_chain(taxonomy, obj.name)}
        if target_chain & other:
            return FilterVerdict.reject(REASON_HYPERNYM_OVERLAP)
    return FilterVerdict.ok()


# ---------------------------------------------------------------------------
# description rendering
# ---------------------------------------------------------------------------


def _indefinite_phrase(obj: SceneObject) -> str:
    core = " ".join((*obj.attributes, obj.name))
    if is_plural_only(obj.name):
        return core
    return f"{indefinite_article(core)} {core}"


def render_description(scene: SceneGraph, seed: int = 0) -> str:
    """Template-based scene description.

    Objects are visited in object-id order. Each gets one indefinite
    introduction carrying all its attributes, either as an existential
    sentence or inline as the first mention inside a relation sentence;
    later mentions are definite. Each relation yields one sentence. The
    seed is reserved for template-variant selection and is currently inert.
    """
    del seed
    introduced: set[str] = set()
    sentences: list[str] = []

    def introduce(obj: SceneObject) -> None:
        verb = "are" if is_plural_only(obj.name) else "is"
        sentences.append(f"There {verb} {_indefinite_phrase(obj)}.")
        introduced.add(obj.object_id)

    for obj in sorted(scene.objects, key=lambda o: o.object_id):
        if obj.object_id not in introduced:
            introduce(obj)
        for pred, tgt_id in obj.relations:
            tgt = scene.object_by_id(tgt_id)
            if tgt.object_id in introduced:
                tgt_phrase = f"the {tgt.name}"
            else:
                tgt_phrase = _indefinite_phrase(tgt)
                introduced.add(tgt.object_id)
            verb = "are" if is_plural_only(obj.name) else "is"
            sentences.append(f"The {obj.name} {verb} {pred} {tgt_phrase}.")
    return " ".join(sentences)
