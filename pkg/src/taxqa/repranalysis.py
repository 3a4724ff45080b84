"""Representation analyses over model dumps: hierarchy alignment, hypernym
deltas, layerwise correctness odds, separability, and image prototypes.

Every report is a plain dataclass with `to_dict()` for JSON export and
carries provenance (model ids, payload digests, seeds) so results can be
traced back to the exact dump files that produced them.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dumps import EmbeddingDump
from .evalclient import EvalRun
from .metrics import InstanceResult, judge_instance
from .seeding import stable_seed
from .stats import (
    GroupedRegressionResult,
    cosine,
    grouped_regression,
    logistic_fit,
    paired_t_test,
    pairwise_cosine,
    pca,
    rsa,
    svm_fit,
    whiten,
)
from .taxonomy import Taxonomy

log = logging.getLogger(__name__)

NEGATIVES_PER_PAIR = 4


class AnalysisError(Exception):
    pass


class LabelMismatchError(AnalysisError):
    pass


class MissingConceptEmbeddingError(AnalysisError):
    def __init__(self, concept: str, model_id: str):
        super().__init__(f"model {model_id!r} has no embedding for {concept!r}")
        self.concept = concept


class SpanResolutionError(AnalysisError):
    pass


class LayerSetError(AnalysisError):
    pass


class EmptyPrototypeError(AnalysisError):
    pass


def _provenance(*dumps: EmbeddingDump, **extra) -> dict:
    return {
        "dumps": [
            {
                "model_id": d.manifest.model_id,
                "role": d.manifest.role,
                "layer": d.manifest.layer,
                "payload_digest": d.manifest.payload_digest,
            }
            for d in dumps
        ],
        **extra,
    }


# ---------------------------------------------------------------------------
# hierarchy alignment (RSA against taxonomy path similarity)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RsaComparison:
    mean: float
    sd: float | None


@dataclass(frozen=True)
class HierarchyRsaReport:
    model_a: str
    model_b: str
    labels: list[str]
    a_vs_reference: RsaComparison
    b_vs_reference: RsaComparison
    a_vs_b: RsaComparison
    subsets: int
    subset_size: int
    seed: int
    provenance: dict

    def to_dict(self) -> dict:
        return {
            "model_a": self.model_a,
            "model_b": self.model_b,
            "n_labels": len(self.labels),
            "a_vs_reference": {"mean": self.a_vs_reference.mean, "sd": self.a_vs_reference.sd},
            "b_vs_reference": {"mean": self.b_vs_reference.mean, "sd": self.b_vs_reference.sd},
            "a_vs_b": {"mean": self.a_vs_b.mean, "sd": self.a_vs_b.sd},
            "subsets": self.subsets,
            "subset_size": self.subset_size,
            "seed": self.seed,
            "provenance": self.provenance,
        }


def reference_similarity_matrix(taxonomy: Taxonomy, labels: Sequence[str]) -> np.ndarray:
    """Pairwise taxonomy path similarity, 1/(1 + hops), over the labels."""
    n = len(labels)
    ref = np.ones((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            ref[i, j] = ref[j, i] = taxonomy.path_similarity(labels[i], labels[j])
    return ref


def hierarchy_rsa_report(
    dump_a: EmbeddingDump,
    dump_b: EmbeddingDump,
    taxonomy: Taxonomy,
    subsets: int = 100,
    subset_size: int = 100,
    seed: int = 0,
    ridge: float | None = None,
    out_dir: str | Path | None = None,
) -> HierarchyRsaReport:
    """Second-order alignment between two models and the reference taxonomy.

    Rows are whitened before cosine similarity so shared variance directions
    do not dominate; the same label subsets (same seed) are used for all
    three comparisons.
    """
    if dump_a.manifest.labels != dump_b.manifest.labels:
        raise LabelMismatchError(
            "dumps disagree on labels; re-extract with a shared concept list"
        )
    labels = list(dump_a.manifest.labels)
    sims = {}
    for key, dump in (("a", dump_a), ("b", dump_b)):
        sims[key] = pairwise_cosine(whiten(np.asarray(dump.matrix, dtype=np.float64), ridge))
    ref = reference_similarity_matrix(taxonomy, labels)

    def compare(x: np.ndarray, y: np.ndarray) -> RsaComparison:
        r = rsa(x, y, subsets=subsets, subset_size=subset_size, seed=seed)
        return RsaComparison(r.mean, r.sd)

    report = HierarchyRsaReport(
        model_a=dump_a.manifest.model_id,
        model_b=dump_b.manifest.model_id,
        labels=labels,
        a_vs_reference=compare(sims["a"], ref),
        b_vs_reference=compare(sims["b"], ref),
        a_vs_b=compare(sims["a"], sims["b"]),
        subsets=subsets,
        subset_size=subset_size,
        seed=seed,
        provenance=_provenance(dump_a, dump_b, ridge=ridge),
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_matrix_csv(out / "similarity_model_a.csv", sims["a"], labels)
        write_matrix_csv(out / "similarity_model_b.csv", sims["b"], labels)
        write_matrix_csv(out / "similarity_reference.csv", ref, labels)
        write_report_json(out / "hierarchy_rsa.json", report.to_dict())
    return report


# ---------------------------------------------------------------------------
# static hypernym deltas
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeltaRow:
    hyponym: str
    hypernym: str
    delta_a: float
    delta_b: float
    negatives: tuple[str, ...]


@dataclass(frozen=True)
class StaticDeltaReport:
    model_a: str
    model_b: str
    rows: list[DeltaRow]
    mean_delta_a: float
    mean_delta_b: float
    t: float
    p: float
    dof: int
    seed: int
    provenance: dict

    def to_dict(self) -> dict:
        return {
            "model_a": self.model_a,
            "model_b": self.model_b,
            "n_pairs": len(self.rows),
            "mean_delta_a": self.mean_delta_a,
            "mean_delta_b": self.mean_delta_b,
            "t": self.t,
            "p": self.p,
            "dof": self.dof,
            "seed": self.seed,
            "provenance": self.provenance,
        }


def _concept_row(dump: EmbeddingDump, concept: str) -> np.ndarray:
    try:
        return dump.row_for_label(concept)
    except Exception as exc:
        raise MissingConceptEmbeddingError(concept, dump.manifest.model_id) from exc


def static_delta_report(
    dump_a: EmbeddingDump,
    dump_b: EmbeddingDump,
    taxonomy: Taxonomy,
    seed: int = 0,
    out_dir: str | Path | None = None,
) -> StaticDeltaReport:
    """Hypernym-proximity delta per (hyponym, hypernym) pair, both models.

    delta = cos(hyponym, hypernym) - mean cos(hyponym, negative) over four
    negatives drawn once per pair with a seed derived from the pair, so both
    models see identical draws. The paired t-test compares models over pairs.
    """
    rows: list[DeltaRow] = []
    for hypo, hyper in taxonomy.hyponym_hypernym_pairs():
        pool = taxonomy.negative_candidates(
            hypo, (), required_tags=taxonomy.signature(hyper)
        )
        if len(pool) < NEGATIVES_PER_PAIR:
            log.warning("delta: skipping (%s, %s): pool has %d", hypo, hyper, len(pool))
            continue
        rng = random.Random(stable_seed(seed, "delta", hypo, hyper))
        negatives = tuple(rng.sample(pool, NEGATIVES_PER_PAIR))
        deltas = {}
        for key, dump in (("a", dump_a), ("b", dump_b)):
            h = _concept_row(dump, hypo)
            y = _concept_row(dump, hyper)
            neg_sims = [cosine(h, _concept_row(dump, n)) for n in negatives]
            deltas[key] = cosine(h, y) - sum(neg_sims) / len(neg_sims)
        rows.append(DeltaRow(hypo, hyper, deltas["a"], deltas["b"], negatives))
    if len(rows) < 2:
        raise AnalysisError("fewer than two pairs with a full negative pool")
    da = np.array([r.delta_a for r in rows])
    db = np.array([r.delta_b for r in rows])
    t_res = paired_t_test(da, db)
    report = StaticDeltaReport(
        model_a=dump_a.manifest.model_id,
        model_b=dump_b.manifest.model_id,
        rows=rows,
        mean_delta_a=float(da.mean()),
        mean_delta_b=float(db.mean()),
        t=t_res.t,
        p=t_res.p,
        dof=t_res.dof,
        seed=seed,
        provenance=_provenance(dump_a, dump_b),
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "static_deltas.csv").open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["hyponym", "hypernym", "delta_a", "delta_b", "negatives"])
            for r in rows:
                writer.writerow(
                    [r.hyponym, r.hypernym, f"{r.delta_a:.10g}", f"{r.delta_b:.10g}",
                     "|".join(r.negatives)]
                )
        write_report_json(out / "static_delta.json", report.to_dict())
    return report


# ---------------------------------------------------------------------------
# layerwise correctness odds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OddsRow:
    layer: int
    n: int
    coefficient: float
    standard_error: float
    odds_ratio: float
    ci_low: float
    ci_high: float
    p: float
    converged: bool


@dataclass(frozen=True)
class LayerwiseOddsReport:
    model_id: str
    rows: list[OddsRow]
    n_instances: int
    provenance: dict

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "n_instances": self.n_instances,
            "rows": [
                {
                    "layer": r.layer,
                    "n": r.n,
                    "coefficient": r.coefficient,
                    "standard_error": r.standard_error,
                    "odds_ratio": r.odds_ratio,
                    "ci_low": r.ci_low,
                    "ci_high": r.ci_high,
                    "p": r.p,
                    "converged": r.converged,
                }
                for r in self.rows
            ],
            "provenance": self.provenance,
        }


def eligible_no_instances(run: EvalRun) -> dict[str, InstanceResult]:
    """Substituted all-gold-No instances whose original was judged correct."""
    gold_positive = {
        rec.instance_id: rec.gold for rec in run.records if rec.slot == "positive"
    }
    s = run.instance_set()
    eligible: dict[str, InstanceResult] = {}
    for original in s.originals:
        if not judge_instance(original):
            continue
        for sub in s.subs_of(original):
            if gold_positive.get(sub.instance_id) == "No":
                eligible[sub.instance_id] = sub
    return eligible


def _span_groups(dump: EmbeddingDump) -> dict[str, dict[str, list[int]]]:
    groups: dict[str, dict[str, list[int]]] = {}
    for i, span in enumerate(dump.manifest.spans or []):
        groups.setdefault(span["instance_id"], {}).setdefault(span["slot"], []).append(i)
    return groups


def instance_delta(dump: EmbeddingDump, slots: Mapping[str, list[int]], instance_id: str) -> float:
    """sim(hyponym, hypernym) - max_k sim(hyponym, negative_k), where sim is
    the max cosine over the hyponym's description mentions."""
    if "hyponym" not in slots or "hypernym" not in slots:
        raise SpanResolutionError(
            f"{instance_id}: dump lacks hyponym/hypernym mention rows"
        )
    neg_slots = sorted(s for s in slots if s.startswith("neg"))
    if not neg_slots:
        raise SpanResolutionError(f"{instance_id}: dump lacks negative mention rows")
    mentions = dump.matrix[slots["hyponym"]]

    def sim_to(rows: list[int]) -> float:
        return max(
            cosine(m, dump.matrix[r]) for m in mentions for r in rows
        )

    sim_hyper = sim_to(slots["hypernym"])
    sim_neg = max(sim_to(slots[s]) for s in neg_slots)
    return sim_hyper - sim_neg


def layerwise_odds_report(
    layer_dumps: Sequence[EmbeddingDump],
    run: EvalRun,
    out_dir: str | Path | None = None,
) -> LayerwiseOddsReport:
    """Per-layer logistic fit of instance correctness on the similarity delta.

    Uses the gold-No substituted instances whose original was answered
    correctly. The delta per instance takes the maximum over the hyponym's
    description mentions, and the maximum over the four negatives.
    """
    if not layer_dumps:
        raise LayerSetError("no layerwise dumps given")
    layers = [d.manifest.layer for d in layer_dumps]
    if any(l is None for l in layers) or len(set(layers)) != len(layers):
        raise LayerSetError(f"layer indices must be unique and set, got {layers}")
    declared = {d.manifest.n_layers for d in layer_dumps if d.manifest.n_layers}
    if declared and len(layer_dumps) not in declared:
        raise LayerSetError(
            f"{len(layer_dumps)} dumps but manifests declare n_layers={sorted(declared)}"
        )
    model_ids = {d.manifest.model_id for d in layer_dumps}
    if len(model_ids) != 1:
        raise LayerSetError(f"dumps mix models: {sorted(model_ids)}")

    eligible = eligible_no_instances(run)
    rows: list[OddsRow] = []
    n_used = 0
    for dump in sorted(layer_dumps, key=lambda d: d.manifest.layer):
        groups = _span_groups(dump)
        deltas: list[float] = []
        labels: list[int] = []
        for iid in sorted(groups):
            if iid not in eligible:
                continue
            deltas.append(instance_delta(dump, groups[iid], iid))
            labels.append(judge_instance(eligible[iid]))
        if len(deltas) < 8:
            raise SpanResolutionError(
                f"layer {dump.manifest.layer}: only {len(deltas)} eligible instances resolved"
            )
        n_used = len(deltas)
        fit = logistic_fit(np.array(deltas), np.array(labels, dtype=float))
        b1 = float(fit.coefficients[1])
        se1 = float(fit.standard_errors[1])
        rows.append(
            OddsRow(
                layer=int(dump.manifest.layer),
                n=len(deltas),
                coefficient=b1,
                standard_error=se1,
                odds_ratio=math.exp(b1),
                ci_low=math.exp(b1 - 1.96 * se1),
                ci_high=math.exp(b1 + 1.96 * se1),
                p=float(fit.p_values[1]),
                converged=fit.converged,
            )
        )
    report = LayerwiseOddsReport(
        model_id=layer_dumps[0].manifest.model_id,
        rows=rows,
        n_instances=n_used,
        provenance=_provenance(*layer_dumps, run_id=run.run_id, mode=run.mode),
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "layerwise_odds.csv").open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["layer", "n", "coefficient", "standard_error", "odds_ratio",
                 "ci_low", "ci_high", "p", "converged"]
            )
            for r in report.rows:
                writer.writerow(
                    [r.layer, r.n, f"{r.coefficient:.10g}", f"{r.standard_error:.10g}",
                     f"{r.odds_ratio:.10g}", f"{r.ci_low:.10g}", f"{r.ci_high:.10g}",
                     f"{r.p:.10g}", r.converged]
                )
        write_report_json(out / "layerwise_odds.json", report.to_dict())
    return report


# ---------------------------------------------------------------------------
# separability of question-final states
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeparabilityReport:
    model_id: str
    n_hypernym: int
    n_negative: int
    explained_variance: tuple[float, float]
    svm_error: float
    weights: tuple[float, float]
    bias: float
    provenance: dict

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "n_hypernym": self.n_hypernym,
            "n_negative": self.n_negative,
            "explained_variance": list(self.explained_variance),
            "svm_error": self.svm_error,
            "weights": list(self.weights),
            "bias": self.bias,
            "provenance": self.provenance,
        }


def separability_report(
    dump: EmbeddingDump,
    c: float = 1.0,
    out_dir: str | Path | None = None,
) -> SeparabilityReport:
    """PCA to two components, then a linear SVM on the projections.

    svm_error counts margin violations as well as misclassifications, so a
    cleanly separated but narrow-margin geometry still scores above zero.
    """
    spans = dump.manifest.spans or []
    if len(spans) != dump.matrix.shape[0]:
        raise SpanResolutionError("span metadata does not cover all rows")
    y = np.array([1.0 if s["group"] == "hypernym" else -1.0 for s in spans])
    p = pca(np.asarray(dump.matrix, dtype=np.float64), 2)
    coords = p.transform(dump.matrix)
    svm = svm_fit(coords, y, c=c)
    report = SeparabilityReport(
        model_id=dump.manifest.model_id,
        n_hypernym=int((y > 0).sum()),
        n_negative=int((y < 0).sum()),
        explained_variance=(float(p.explained_variance[0]), float(p.explained_variance[1])),
        svm_error=svm.svm_error,
        weights=(float(svm.weights[0]), float(svm.weights[1])),
        bias=svm.bias,
        provenance=_provenance(dump, c=c),
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        name = f"separability_{dump.manifest.model_id}"
        with (out / f"{name}_coords.csv").open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["instance_id", "group", "pc1", "pc2"])
            for span, (x1, x2) in zip(spans, coords):
                writer.writerow(
                    [span["instance_id"], span["group"], f"{x1:.10g}", f"{x2:.10g}"]
                )
        write_report_json(out / f"{name}.json", report.to_dict())
    return report


# ---------------------------------------------------------------------------
# image prototypes vs conditional accuracy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VisualPairRow:
    hyponym: str
    hypernym: str
    viz_sim: float
    conditional_accuracy: float


@dataclass(frozen=True)
class VisualSimilarityReport:
    model_id: str
    rows: list[VisualPairRow]
    regression: GroupedRegressionResult
    cohesion: dict[str, float]
    global_median: float
    include_leaf_images: bool
    provenance: dict

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "n_pairs": len(self.rows),
            "rows": [
                {
                    "hyponym": r.hyponym,
                    "hypernym": r.hypernym,
                    "viz_sim": r.viz_sim,
                    "conditional_accuracy": r.conditional_accuracy,
                }
                for r in self.rows
            ],
            "regression": {
                "slope": self.regression.slope,
                "intercept": self.regression.intercept,
                "slope_se": self.regression.slope_se,
                "slope_t": self.regression.slope_t,
                "slope_p": self.regression.slope_p,
                "n": self.regression.n,
                "per_group": {
                    g: {
                        "slope": line.slope,
                        "intercept": line.intercept,
                        "n": line.n,
                        "pooled_fallback": line.pooled_fallback,
                    }
                    for g, line in self.regression.per_group.items()
                },
            },
            "cohesion": self.cohesion,
            "global_median": self.global_median,
            "include_leaf_images": self.include_leaf_images,
            "provenance": self.provenance,
        }


def _rows_by_concept(dump: EmbeddingDump) -> dict[str, list[int]]:
    rows: dict[str, list[int]] = {}
    for i, span in enumerate(dump.manifest.spans or []):
        rows.setdefault(span["concept"], []).append(i)
    return rows


def prototype_similarity(
    dump: EmbeddingDump,
    hyponym: str,
    members: Iterable[str],
    include_leaf_images: bool = False,
) -> float:
    """Mean cosine between the hyponym's images and the category prototype.

    The prototype averages the member concepts' image vectors; the hyponym's
    own images are excluded unless include_leaf_images is set.
    """
    by_concept = _rows_by_concept(dump)
    if hyponym not in by_concept:
        raise MissingConceptEmbeddingError(hyponym, dump.manifest.model_id)
    member_rows: list[int] = []
    for member in members:
        if member == hyponym and not include_leaf_images:
            continue
        member_rows.extend(by_concept.get(member, []))
    if not member_rows:
        raise EmptyPrototypeError(
            f"prototype for {hyponym!r} has no member images"
        )
    proto = np.asarray(dump.matrix[member_rows], dtype=np.float64).mean(axis=0)
    sims = [cosine(dump.matrix[r], proto) for r in by_concept[hyponym]]
    return float(np.mean(sims))


def cohesion_scores(pair_sims: Mapping[tuple[str, str], float]) -> tuple[dict[str, float], float]:
    """Per-hypernym fraction of pairs strictly above the global median."""
    if not pair_sims:
        raise AnalysisError("no pair similarities")
    values = sorted(pair_sims.values())
    mid = len(values) // 2
    median = values[mid] if len(values) % 2 else (values[mid - 1] + values[mid]) / 2.0
    per: dict[str, list[float]] = {}
    for (_, hyper), sim in pair_sims.items():
        per.setdefault(hyper, []).append(sim)
    return (
        {h: sum(1 for v in vals if v > median) / len(vals) for h, vals in sorted(per.items())},
        float(median),
    )


def visual_similarity_report(
    dump: EmbeddingDump,
    membership: Mapping[str, Sequence[str]],
    pair_conditional: Mapping[tuple[str, str], float],
    include_leaf_images: bool = False,
    out_dir: str | Path | None = None,
) -> VisualSimilarityReport:
    """Relate image-prototype similarity to substituted-question accuracy.

    For each (hyponym, hypernym) pair with a conditional accuracy, computes
    viz_sim against the hypernym's member prototype, fits a pooled
    y-on-x regression with per-hypernym lines, and reports per-hypernym
    cohesion (fraction of its pairs strictly above the global median).
    """
    rows: list[VisualPairRow] = []
    sims: dict[tuple[str, str], float] = {}
    for hypo, hyper in sorted(pair_conditional):
        if hyper not in membership:
            raise AnalysisError(f"membership map lacks hypernym {hyper!r}")
        sim = prototype_similarity(dump, hypo, membership[hyper], include_leaf_images)
        sims[(hypo, hyper)] = sim
        rows.append(VisualPairRow(hypo, hyper, sim, pair_conditional[(hypo, hyper)]))
    if len(rows) < 3:
        raise AnalysisError("need at least three pairs for the regression")
    regression = grouped_regression(
        [(r.hypernym, r.viz_sim, r.conditional_accuracy) for r in rows]
    )
    cohesion, median = cohesion_scores(sims)
    report = VisualSimilarityReport(
        model_id=dump.manifest.model_id,
        rows=rows,
        regression=regression,
        cohesion=cohesion,
        global_median=median,
        include_leaf_images=include_leaf_images,
        provenance=_provenance(dump),
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "visual_similarity.csv").open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["hyponym", "hypernym", "viz_sim", "conditional_accuracy"])
            for r in rows:
                writer.writerow(
                    [r.hyponym, r.hypernym, f"{r.viz_sim:.10g}", f"{r.conditional_accuracy:.10g}"]
                )
        write_report_json(out / "visual_similarity.json", report.to_dict())
    return report


# ---------------------------------------------------------------------------
# export helpers
# ---------------------------------------------------------------------------


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def write_report_json(path: str | Path, doc: dict) -> None:
    Path(path).write_text(
        json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def write_matrix_csv(path: str | Path, matrix: np.ndarray, labels: Sequence[str]) -> None:
    """Similarity matrix with labels on both axes."""
    matrix = np.asarray(matrix)
    if matrix.shape != (len(labels), len(labels)):
        raise AnalysisError(f"matrix {matrix.shape} does not match {len(labels)} labels")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["", *labels])
        for label, row in zip(labels, matrix):
            writer.writerow([label, *(f"{v:.10g}" for v in row)])
