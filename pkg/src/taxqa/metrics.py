"""Taxonomy-aware accuracy metrics over judged instances.

An instance is judged correct only when its positive question and all four
negative variants are answered correctly. Three aggregate views:

  overall       correct instances (originals and substituted) over all instances
  conditional   among originals judged correct, the fraction of their
                substituted instances judged correct
  hierarchical  per original, 1 only if it and every substituted version is
  consistency   correct; averaged over originals

Conditional accuracy is undefined when no original with substitutions is
judged correct; that case is reported as an explicit absent value (None),
never coerced to 0 or 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .questgen import NEGATIVES_PER_QUESTION, parent_instance_id


class MetricsError(Exception):
    pass


class EmptyInstanceSetError(MetricsError):
    pass


class UnresolvedParentError(MetricsError):
    pass


@dataclass(frozen=True)
class InstanceResult:
    instance_id: str
    positive_correct: bool
    negatives_correct: tuple[bool, ...]
    substitution_depth: int = 0
    source_leaf: str = ""
    target: str = ""
    parent_instance_id: str | None = None

    def __post_init__(self):
        if len(self.negatives_correct) != NEGATIVES_PER_QUESTION:
            raise MetricsError(
                f"{self.instance_id}: expected {NEGATIVES_PER_QUESTION} negative"
                f" judgments, got {len(self.negatives_correct)}"
            )


def judge_instance(result: InstanceResult) -> int:
    """1 iff the positive and every negative variant were answered correctly."""
    return int(result.positive_correct and all(result.negatives_correct))


@dataclass
class InstanceSet:
    """Originals paired with their substituted versions (possibly none)."""

    originals: list[InstanceResult]
    substituted: dict[str, list[InstanceResult]] = field(default_factory=dict)

    def __post_init__(self):
        known = {r.instance_id for r in self.originals}
        for parent in self.substituted:
            if parent not in known:
                raise UnresolvedParentError(
                    f"substituted results reference unknown original {parent!r}"
                )

    def subs_of(self, original: InstanceResult) -> list[InstanceResult]:
        return self.substituted.get(original.instance_id, [])


def instance_set_from_results(results: Iterable[InstanceResult]) -> InstanceSet:
    """Group flat results into originals and their substituted versions.

    Parent links use `parent_instance_id` when set, else the depth suffix of
    the instance id. Membership probes (depth > 0 with no resolvable parent)
    are treated as their own originals.
    """
    results = list(results)
    ids = {r.instance_id for r in results}
    originals: list[InstanceResult] = []
    substituted: dict[str, list[InstanceResult]] = {}
    for r in results:
        parent = r.parent_instance_id or parent_instance_id(r.instance_id)
        if r.substitution_depth > 0 and parent != r.instance_id and parent in ids:
            substituted.setdefault(parent, []).append(r)
        elif r.substitution_depth > 0 and r.parent_instance_id is not None:
            raise UnresolvedParentError(
                f"{r.instance_id}: parent {parent!r} not in result set"
            )
        else:
            originals.append(r)
    return InstanceSet(originals, substituted)


def overall_accuracy(s: InstanceSet) -> float:
    """Correct instances over all instances, originals and substituted alike."""
    total = len(s.originals) + sum(len(v) for v in s.substituted.values())
    if total == 0:
        raise EmptyInstanceSetError("no instances to score")
    correct = sum(judge_instance(r) for r in s.originals) + sum(
        judge_instance(r) for subs in s.substituted.values() for r in subs
    )
    return correct / total


def conditional_accuracy(s: InstanceSet) -> float | None:
    """Substituted accuracy conditioned on the original being judged correct.

    Originals without substituted versions contribute nothing. Returns None
    when the conditioning set is empty.
    """
    num = den = 0
    for original in s.originals:
        subs = s.subs_of(original)
        if not subs or not judge_instance(original):
            continue
        den += len(subs)
        num += sum(judge_instance(r) for r in subs)
    if den == 0:
        return None
    return num / den


def hierarchical_consistency(s: InstanceSet) -> float:
    """Fraction of originals correct together with all their substitutions."""
    if not s.originals:
        raise EmptyInstanceSetError("no original instances")
    hits = 0
    for original in s.originals:
        if judge_instance(original) and all(
            judge_instance(r) for r in s.subs_of(original)
        ):
            hits += 1
    return hits / len(s.originals)


@dataclass(frozen=True)
class MetricsReport:
    overall: float
    conditional: float | None
    hierarchical_consistency: float
    n_originals: int
    n_substituted: int
    n_conditioned: int

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "conditional": self.conditional,
            "hierarchical_consistency": self.hierarchical_consistency,
            "n_originals": self.n_originals,
            "n_substituted": self.n_substituted,
            "n_conditioned": self.n_conditioned,
        }


def metrics_report(s: InstanceSet) -> MetricsReport:
    n_subs = sum(len(v) for v in s.substituted.values())
    n_cond = sum(
        len(s.subs_of(o)) for o in s.originals if judge_instance(o) and s.subs_of(o)
    )
    return MetricsReport(
        overall=overall_accuracy(s),
        conditional=conditional_accuracy(s),
        hierarchical_consistency=hierarchical_consistency(s),
        n_originals=len(s.originals),
        n_substituted=n_subs,
        n_conditioned=n_cond,
    )


# ---------------------------------------------------------------------------
# breakdowns
# ---------------------------------------------------------------------------


def per_depth_accuracy(s: InstanceSet) -> dict[int, float]:
    """Instance accuracy grouped by substitution depth (0 = originals)."""
    num: dict[int, int] = {}
    den: dict[int, int] = {}
    for r in s.originals:
        den[r.substitution_depth] = den.get(r.substitution_depth, 0) + 1
        num[r.substitution_depth] = num.get(r.substitution_depth, 0) + judge_instance(r)
    for subs in s.substituted.values():
        for r in subs:
            den[r.substitution_depth] = den.get(r.substitution_depth, 0) + 1
            num[r.substitution_depth] = num.get(r.substitution_depth, 0) + judge_instance(r)
    return {d: num[d] / den[d] for d in sorted(den)}


def pair_conditional_accuracy(s: InstanceSet) -> dict[tuple[str, str], float]:
    """Per (leaf, hypernym) pair: substituted accuracy over correct originals.

    Feeds the image-similarity analysis; pairs whose originals were never
    judged correct are absent from the result.
    """
    num: dict[tuple[str, str], int] = {}
    den: dict[tuple[str, str], int] = {}
    for original in s.originals:
        if not judge_instance(original):
            continue
        for r in s.subs_of(original):
            if not r.source_leaf or not r.target:
                continue
            key = (r.source_leaf, r.target)
            den[key] = den.get(key, 0) + 1
            num[key] = num.get(key, 0) + judge_instance(r)
    return {k: num[k] / den[k] for k in sorted(den)}


def per_hypernym_conditional(s: InstanceSet) -> dict[str, float]:
    """Conditional accuracy grouped by the substituted hypernym."""
    num: dict[str, int] = {}
    den: dict[str, int] = {}
    for original in s.originals:
        if not judge_instance(original):
            continue
        for r in s.subs_of(original):
            if not r.target:
                continue
            den[r.target] = den.get(r.target, 0) + 1
            num[r.target] = num.get(r.target, 0) + judge_instance(r)
    return {k: num[k] / den[k] for k in sorted(den)}
