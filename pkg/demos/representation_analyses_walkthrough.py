"""Run every representational analysis on synthetic embedding dumps.

Fabricates dump files whose geometry encodes a known ground truth, then runs
the five report types over them: hierarchy agreement of unembedding spaces,
static hypernym-similarity deltas between two models, layerwise odds of
answering correctly given the contextual similarity delta, linear
separability of question-final states, and visual prototype cohesion.
Since the ground truth is planted, every report's read-out is checkable by
eye. Artifacts land in a temporary directory whose path is printed.
"""

import math
import random
import tempfile
from pathlib import Path

import numpy as np

from taxqa.dumps import DumpManifest, EmbeddingDump, payload_digest, save_dump
from taxqa.evalclient import EvalRun, QuestionRecord
from taxqa.repranalysis import (
    hierarchy_rsa_report,
    layerwise_odds_report,
    separability_report,
    static_delta_report,
    visual_similarity_report,
)
from taxqa.taxonomy import load_taxonomy

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
OUT = Path(tempfile.mkdtemp(prefix="repranalysis_demo_"))

taxonomy = load_taxonomy(FIXTURES / "taxonomy.txt")


def dump(model_id, role, labels, matrix, **extra_fields):
    matrix = np.asarray(matrix, dtype=np.float32)
    manifest = DumpManifest(
        model_id=model_id, role=role, dims=matrix.shape, labels=list(labels),
        payload_digest=payload_digest(matrix), **extra_fields,
    )
    return EmbeddingDump(manifest, matrix)


def chain_sum_matrix(labels, dim, rng, noise=0.05):
    """Concept vector = own direction + its ancestors' directions.

    Concepts sharing ancestry share summands, so cosine similarity rises
    with relatedness in the taxonomy. Adding noise erodes exactly that.
    """
    direction = {c: rng.normal(size=dim) for c in sorted(taxonomy.concepts)}
    rows = []
    for label in labels:
        vec = direction[label].copy()
        for ancestor in taxonomy.hypernym_chain(label):
            vec += direction[ancestor]
        rows.append(vec + noise * rng.normal(size=dim))
    return np.array(rows)


# --- hierarchy agreement of two unembedding spaces ---------------------------
# model a organizes concepts by the taxonomy; model b is pure noise. Labels
# stay inside one connected family because reference similarity is a
# path-length quantity.
animal_labels = sorted(
    {l for l in taxonomy.leaves() if "animal" in taxonomy.hypernym_chain(l)}
    | {c for l in taxonomy.leaves() if "animal" in taxonomy.hypernym_chain(l)
       for c in taxonomy.hypernym_chain(l)}
)
rng = np.random.default_rng(7)
dump_a = dump("model-a", "unembedding", animal_labels,
              chain_sum_matrix(animal_labels, 8, rng))
dump_b = dump("model-b", "unembedding", animal_labels,
              rng.normal(size=(len(animal_labels), 8)))
rsa = hierarchy_rsa_report(dump_a, dump_b, taxonomy,
                           subsets=64, subset_size=12, seed=3, out_dir=OUT)
print(f"hierarchy agreement over {len(animal_labels)} animal concepts:")
print(f"  taxonomy-shaped model vs reference: {rsa.a_vs_reference.mean:+.3f}")
print(f"  noise model vs reference:           {rsa.b_vs_reference.mean:+.3f}")

# --- static similarity deltas -------------------------------------------------
# same construction, full vocabulary: for each (hyponym, hypernym) pair,
# similarity to the hypernym minus the best negative-concept similarity
rng = np.random.default_rng(13)
all_concepts = sorted(taxonomy.concepts)
static_a = dump("model-a", "static", all_concepts, chain_sum_matrix(all_concepts, 12, rng))
static_b = dump("model-b", "static", all_concepts, rng.normal(size=(len(all_concepts), 12)))
delta = static_delta_report(static_a, static_b, taxonomy, seed=1, out_dir=OUT)
print(f"\nstatic deltas over {len(delta.rows)} pairs:")
print(f"  mean delta, taxonomy-shaped model: {delta.mean_delta_a:+.3f}")
print(f"  mean delta, noise model:           {delta.mean_delta_b:+.3f}")
print(f"  paired t={delta.t:.2f}, p={delta.p:.2e}")

# --- layerwise odds of correctness ---------------------------------------------
# layer 0 carries a planted link between the similarity delta and judged
# correctness; layer 1 has none. The report should find an odds ratio above
# one with a tight interval at layer 0 and nothing at layer 1.


def question_records(instance_id, ok):
    records = [QuestionRecord(instance_id, "positive", "No", "No" if ok else "Yes",
                              0.5, 0.5, False)]
    records += [QuestionRecord(instance_id, f"neg{k}", "No", "No", 0.1, 0.9, False)
                for k in (1, 2, 3, 4)]
    return records


def spans_dump(deltas, layer):
    rows, spans = [], []
    for i, d in enumerate(deltas):
        iid = f"p{i:02d}@d1"
        h, g = 0.5 + d / 2.0, 0.5 - d / 2.0
        for slot, vec in [("hyponym", (1.0, 0.0)),
                          ("hypernym", (h, math.sqrt(1 - h * h)))] + [
                          (f"neg{k}", (g, math.sqrt(1 - g * g))) for k in (1, 2, 3, 4)]:
            rows.append(vec)
            spans.append({"instance_id": iid, "concept": "dog",
                          "mention_index": 0, "slot": slot})
    m = np.array(rows, dtype=np.float32)
    return EmbeddingDump(
        DumpManifest(model_id="demo-model", role="layerwise_contextual",
                     dims=m.shape, labels=["dog"] * len(m),
                     payload_digest=payload_digest(m), layer=layer, n_layers=2,
                     spans=spans),
        m,
    )


signal = [0.5] * 16 + [-0.1] * 4 + [-0.5] * 16 + [0.1] * 4
flat = [0.5, -0.5] * 20
records, meta = [], []
for i in range(40):
    original, sub = f"p{i:02d}", f"p{i:02d}@d1"
    records += question_records(original, True)
    meta.append({"instance_id": original, "substitution_depth": 0,
                 "source_leaf": "dog", "target": "dog", "parent_instance_id": None})
    records += question_records(sub, i < 20)
    meta.append({"instance_id": sub, "substitution_depth": 1,
                 "source_leaf": "dog", "target": "canine", "parent_instance_id": original})
run = EvalRun("demo-run", "text", "demo-model", "0" * 8, "argmax", records, meta)
odds = layerwise_odds_report([spans_dump(signal, 0), spans_dump(flat, 1)], run, out_dir=OUT)
print("\nlayerwise odds of a correct judgment per unit of similarity delta:")
for row in odds.rows:
    print(f"  layer {row.layer}: OR={row.odds_ratio:8.1f} "
          f"ci=({row.ci_low:.2f}, {row.ci_high:.1f}) p={row.p:.3f}")

# --- separability of question-final states ------------------------------------
rng = np.random.default_rng(11)
offset = np.zeros(6)
offset[0] = 3.0
states = np.vstack([rng.normal(0, 0.3, (30, 6)) + offset,
                    rng.normal(0, 0.3, (30, 6)) - offset])
qf = EmbeddingDump(
    DumpManifest(model_id="demo-model", role="question_final",
                 dims=states.shape, labels=[f"q{i:03d}" for i in range(60)],
                 payload_digest=payload_digest(states.astype(np.float32)),
                 spans=[{"instance_id": f"q{i:03d}",
                         "group": "hypernym" if i < 30 else "negative"}
                        for i in range(60)]),
    states.astype(np.float32),
)
sep = separability_report(qf, out_dir=OUT)
print(f"\nseparability of hypernym vs negative question states: "
      f"svm_error={sep.svm_error:.2f}")

# --- visual prototype cohesion -------------------------------------------------
# canine images cluster at low angles, feline wider, equine widest; pair
# cohesion should fall in that order and track conditional accuracy


def unit(deg):
    return (math.cos(math.radians(deg)), math.sin(math.radians(deg)))


angles = {"dog": (0, 4), "wolf": (8, 12), "cat": (40, 52), "tiger": (60, 72),
          "horse": (100, 125), "pony": (150, 175)}
rows, spans = [], []
for concept, pair in angles.items():
    for j, angle in enumerate(pair):
        rows.append(unit(angle))
        spans.append({"concept": concept, "image_id": f"{concept}-{j}"})
viz = EmbeddingDump(
    DumpManifest(model_id="demo-viz", role="vision_patch",
                 dims=(len(rows), 2), labels=[s["image_id"] for s in spans],
                 payload_digest=payload_digest(np.array(rows, dtype=np.float32)),
                 spans=spans),
    np.array(rows, dtype=np.float32),
)
membership = {"canine": ["dog", "wolf"], "feline": ["cat", "tiger"],
              "equine": ["horse", "pony"]}
conditional = {("dog", "canine"): 0.95, ("wolf", "canine"): 0.90,
               ("cat", "feline"): 0.70, ("tiger", "feline"): 0.65,
               ("horse", "equine"): 0.30, ("pony", "equine"): 0.25}
visual = visual_similarity_report(viz, membership, conditional, out_dir=OUT)
print("\nvisual cohesion per hypernym (fraction of pairs above the median):")
for hypernym, score in sorted(visual.cohesion.items()):
    print(f"  {hypernym:<8} {score:.2f}")
print(f"  global regression slope: {visual.regression.slope:+.3f}")

print(f"\nall artifacts written under {OUT}")
for path in sorted(OUT.iterdir()):
    print(f"  {path.name}")
