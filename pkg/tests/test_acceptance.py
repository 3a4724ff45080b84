"""Release acceptance suite: one test per gate, each with a wall-clock budget.

Every gate pins a hand-derived value, an independent oracle, or a property
that must hold with zero exceptions. scipy and scikit-learn appear only as
oracles here; the package itself never imports them. Run with -v to get one
pass/fail line per gate.
"""

from __future__ import annotations

import math
import random
import time
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats as scipy_stats
from scipy.optimize import minimize
from sklearn.svm import SVC

from conftest import make_result
from taxqa import stats
from taxqa.cli import EXIT_OK, main
from taxqa.dumps import DumpManifest, EmbeddingDump, payload_digest
from taxqa.evalclient import (
    Checkpoint,
    EndpointConfig,
    EndpointError,
    EvalRun,
    QuestionRecord,
    aggregate_yes_no,
    run_eval,
)
from taxqa.metrics import instance_set_from_results, metrics_report
from taxqa.mock_endpoint import MockEndpoint
from taxqa.questgen import ATTRIBUTE_CLASSES, build_dataset, generate_taxomps
from taxqa.repranalysis import (
    layerwise_odds_report,
    separability_report,
    visual_similarity_report,
)
from taxqa.scene import SceneGraph, SceneObject
from taxqa.taxonomy import Taxonomy


@contextmanager
def budget(seconds: float):
    start = time.perf_counter()
    yield
    elapsed = time.perf_counter() - start
    assert elapsed < seconds, f"gate ran {elapsed:.2f}s, budget {seconds:.0f}s"


# ---------------------------------------------------------------------------
# gate 1: metric arithmetic on the worked fixture and simulated answer policies
# ---------------------------------------------------------------------------


def _policy_results(policy: str):
    """InstanceResults for two originals with one and two substitutions.

    Positives carry mixed gold labels; negatives are always gold No. A
    policy answers every question the same way, so correctness per slot is
    just a label comparison.
    """
    gold_positive = {"X1": "Yes", "X1@d1": "Yes", "X2": "No", "X2@d1": "No", "X2@d2": "No"}
    results = []
    for iid, gold in gold_positive.items():
        answer = gold if policy == "gold" else "Yes"
        depth = iid.count("@")
        results.append(
            make_result(
                iid,
                ok=answer == gold,
                depth=depth,
                parent=iid.split("@")[0] if depth else None,
                neg_ok=(policy == "gold",) * 4,
            )
        )
    return results


def test_criterion_1_metric_fixture():
    with budget(1.0):
        # N=2 originals, k=[1,2]; only the deepest substitution is wrong
        results = [
            make_result("X1", ok=True, neg_ok=(True,) * 4),
            make_result("X1@d1", ok=True, depth=1, parent="X1", neg_ok=(True,) * 4),
            make_result("X2", ok=True, neg_ok=(True,) * 4),
            make_result("X2@d1", ok=True, depth=1, parent="X2", neg_ok=(True,) * 4),
            make_result("X2@d2", ok=False, depth=2, parent="X2", neg_ok=(True,) * 4),
        ]
        report = metrics_report(instance_set_from_results(results))
        # hand enumeration: judged values X1=1, X1s1=1, X2=1, X2s1=1, X2s2=0
        overall = Fraction(1 + 1 + 1 + 1 + 0, 5)
        conditional = Fraction(1 + 1 + 0, 3)
        consistency = Fraction(1 * 1 + 1 * (1 * 0), 2)
        assert abs(report.overall - float(overall)) < 1e-12
        assert abs(report.conditional - float(conditional)) < 1e-12
        assert abs(report.hierarchical_consistency - float(consistency)) < 1e-12
        assert report.overall == pytest.approx(0.8, abs=1e-12)
        assert report.conditional == pytest.approx(2.0 / 3.0, abs=1e-12)
        assert report.hierarchical_consistency == pytest.approx(0.5, abs=1e-12)

        gold = metrics_report(instance_set_from_results(_policy_results("gold")))
        assert gold.overall == 1.0
        assert gold.conditional == 1.0
        assert gold.hierarchical_consistency == 1.0

        # a Yes-everywhere policy misses every gold-No negative, so no
        # instance is judged correct; the conditional denominator is empty
        # and the metric is reported absent rather than coerced to a number
        yes = metrics_report(instance_set_from_results(_policy_results("always_yes")))
        assert yes.overall == 0.0
        assert yes.hierarchical_consistency == 0.0
        assert yes.conditional is None


# ---------------------------------------------------------------------------
# gate 2: membership-probe arithmetic
# ---------------------------------------------------------------------------


def _wide_taxonomy(families: int = 23, leaves: int = 3, depth: int = 4) -> Taxonomy:
    chains: dict[str, list[str]] = {}
    signatures: dict[str, list[str]] = {}
    for f in range(families):
        levels = [f"rank{d}_fam{f}" for d in range(depth)]
        for i in range(leaves):
            leaf = f"leaf{i}_fam{f}"
            chains[leaf] = list(levels)
            signatures[leaf] = ["color", "size"]
        for level in levels:
            signatures[level] = ["color", "size"]
    return Taxonomy(chains, signatures)


def test_criterion_2_membership_probe_arithmetic():
    with budget(5.0):
        taxonomy = _wide_taxonomy()
        assert len(taxonomy.hyponym_hypernym_pairs()) == 276
        for seed in (0, 1, 2):
            instances = generate_taxomps(taxonomy, seed=seed)
            assert len(instances) == 276
            positives = sum(1 for _ in instances)
            questions = sum(1 + len(inst.negatives) for inst in instances)
            assert questions == 1380
            assert questions == 5 * positives


# ---------------------------------------------------------------------------
# gate 3: negative-sampling properties over randomized fixtures
# ---------------------------------------------------------------------------

_ATTR_POOL = ("brown", "red", "white", "small", "large", "tiny")


def _random_scene(rng: random.Random, taxonomy: Taxonomy, scene_id: str) -> SceneGraph:
    picked = rng.sample(taxonomy.leaves(), rng.randint(3, 5))
    objects = tuple(
        SceneObject(f"o{j}", name, tuple(rng.sample(_ATTR_POOL, rng.randint(0, 2))))
        for j, name in enumerate(picked)
    )
    return SceneGraph(scene_id, objects)


def test_criterion_3_negative_sampling_properties(random_taxonomy):
    with budget(30.0):
        checked = 0
        for i in range(1000):
            rng = random.Random(i)
            taxonomy = random_taxonomy(rng)
            scene = _random_scene(rng, taxonomy, f"s{i}")
            instances, _ = build_dataset({scene.scene_id: scene}, taxonomy, seed=i, quota=6)
            names = set(scene.names())
            closure = set(names)
            for name in names:
                closure.update(taxonomy.hypernym_chain(name))
            for inst in instances:
                targets = [q.target for q in inst.negatives]
                assert len(targets) == 4 and len(set(targets)) == 4, inst.instance_id
                banned = set(taxonomy.hypernym_chain(inst.source_leaf))
                banned |= {inst.source_leaf, inst.positive.target}
                for q in inst.negatives:
                    checked += 1
                    assert q.target not in closure, (inst.instance_id, q.target)
                    assert q.target not in banned, (inst.instance_id, q.target)
                    assert q.gold == "No"
                    assert q.qtype == inst.positive.qtype
                    assert q.attribute == inst.positive.attribute
                    if inst.positive.attribute is not None:
                        cls = ATTRIBUTE_CLASSES.get(inst.positive.attribute)
                        if cls is not None:
                            assert cls in taxonomy.signature(q.target), q.target
        assert checked > 50_000  # the sweep actually exercised the sampler


# ---------------------------------------------------------------------------
# gate 4: dataset build reproducibility
# ---------------------------------------------------------------------------


def test_criterion_4_build_determinism(tmp_path, fixtures_dir):
    with budget(10.0):
        args = [
            "build",
            "--taxonomy", str(fixtures_dir / "taxonomy.txt"),
            "--scenes", str(fixtures_dir / "scenes_10.json"),
            "--seed", "3",
        ]
        assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
        assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
        assert main(args + ["--out", str(tmp_path / "c"), "--jobs", "4"]) == EXIT_OK
        first = (tmp_path / "a" / "dataset.jsonl").read_bytes()
        assert first == (tmp_path / "b" / "dataset.jsonl").read_bytes()
        assert first == (tmp_path / "c" / "dataset.jsonl").read_bytes()


# ---------------------------------------------------------------------------
# gate 5: statistics kernels against independent oracles
# ---------------------------------------------------------------------------


def test_criterion_5_stats_oracles():
    with budget(60.0):
        # logistic regression: 50 points from beta_true=(-0.5, 1.2)
        rng = np.random.default_rng(5)
        x = rng.normal(size=50)
        p_true = 1.0 / (1.0 + np.exp(-(-0.5 + 1.2 * x)))
        y = (rng.random(50) < p_true).astype(float)
        fit = stats.logistic_fit(x[:, None], y)
        assert fit.converged

        def negative_log_likelihood(beta):
            eta = beta[0] + beta[1] * x
            return float(
                np.sum(np.log1p(np.exp(-np.abs(eta))) + np.clip(eta, 0, None) - y * eta)
            )

        oracle = minimize(negative_log_likelihood, np.zeros(2), method="BFGS",
                          options={"gtol": 1e-12})
        assert np.abs(fit.coefficients - oracle.x).max() < 1e-4
        design = np.column_stack([np.ones(50), x])
        mu = 1.0 / (1.0 + np.exp(-(design @ fit.coefficients)))
        assert np.abs(design.T @ (y - mu)).max() < 1e-8

        # PCA explained variances against an eigendecomposition oracle
        m = np.random.default_rng(3).normal(size=(30, 5))
        pca_result = stats.pca(m, 3)
        eigenvalues = np.sort(np.linalg.eigvalsh(np.cov(m, rowvar=False, ddof=1)))[::-1]
        assert np.abs(pca_result.explained_variance - eigenvalues[:3]).max() < 1e-8

        # SVM primal objective against a dual solver on overlapping clusters
        rng = np.random.default_rng(9)
        xs = np.vstack([
            rng.normal(loc=(1.0, 0.0), scale=0.9, size=(20, 2)),
            rng.normal(loc=(-1.0, 0.0), scale=0.9, size=(20, 2)),
        ])
        ys = np.array([1.0] * 20 + [-1.0] * 20)
        ours = stats.svm_fit(xs, ys, c=1.0)
        dual = SVC(kernel="linear", C=1.0, tol=1e-8).fit(xs, ys)
        oracle_objective = stats.svm_objective(
            xs, ys, dual.coef_.ravel(), float(dual.intercept_[0]), 1.0
        )
        assert abs(ours.objective - oracle_objective) <= 0.01 * oracle_objective

        separable = np.vstack([
            rng.normal(loc=(4.0, 0.0), scale=0.3, size=(15, 2)),
            rng.normal(loc=(-4.0, 0.0), scale=0.3, size=(15, 2)),
        ])
        labels = np.array([1.0] * 15 + [-1.0] * 15)
        assert stats.svm_fit(separable, labels, c=1.0).svm_error == 0.0

        # rank correlation exact value
        assert stats.spearman(np.array([1, 2, 3, 4]), np.array([1, 3, 2, 4])) == 0.8

        # paired t-test against the textbook formula and a reference library
        a = np.array([2.1, 3.4, 1.9, 5.0, 4.2, 3.3, 2.8, 4.9])
        b = np.array([1.8, 3.0, 2.2, 4.1, 3.9, 3.5, 2.1, 4.0])
        result = stats.paired_t_test(a, b)
        d = a - b
        t_hand = d.mean() / (d.std(ddof=1) / math.sqrt(len(d)))
        t_ref, p_ref = scipy_stats.ttest_rel(a, b)
        assert abs(result.t - t_hand) < 1e-10
        assert abs(result.t - t_ref) < 1e-10
        assert abs(result.p - p_ref) < 1e-10

        # whitening: output covariance is the identity
        u = np.random.default_rng(10).normal(size=(40, 6))
        cov = np.cov(stats.whiten(u), rowvar=False, ddof=1)
        assert np.abs(cov - np.eye(6)).max() < 1e-4


# ---------------------------------------------------------------------------
# gate 6: representational similarity analysis properties
# ---------------------------------------------------------------------------


def test_criterion_6_rsa_properties():
    with budget(60.0):
        rng = np.random.default_rng(42)
        base = rng.normal(size=(60, 8))
        reference = stats.pairwise_cosine(base)

        assert stats.rsa(reference, reference).mean == 1.0
        # elementwise cube is strictly monotone, so ranks are unchanged
        assert stats.rsa(reference, reference ** 3).mean == 1.0

        first = stats.rsa(reference, reference ** 3, subsets=100, subset_size=40, seed=9)
        second = stats.rsa(reference, reference ** 3, subsets=100, subset_size=40, seed=9)
        assert first.mean == second.mean
        assert first.sd == second.sd
        assert first.n_subsets == 100

        # increasing noise must strictly erode agreement with the reference
        noise = rng.normal(size=(60, 8))
        means = []
        for sigma in (0.1, 0.6, 2.5):
            noisy = stats.pairwise_cosine(base + sigma * noise)
            means.append(stats.rsa(noisy, reference, subsets=100, subset_size=40, seed=0).mean)
        assert means[0] > means[1] > means[2]


# ---------------------------------------------------------------------------
# gate 7: analysis reports end to end on synthetic dumps
# ---------------------------------------------------------------------------

_N_PAIRS = 40
# planted effect with overlap so the logistic fit stays finite
_SIGNAL_DELTAS = [0.5] * 16 + [-0.1] * 4 + [-0.5] * 16 + [0.1] * 4
_FLAT_DELTAS = [0.5, -0.5] * (_N_PAIRS // 2)


def _question_records(instance_id: str, gold: str, ok: bool = True):
    flip = {"Yes": "No", "No": "Yes"}
    answer = gold if ok else flip[gold]
    records = [QuestionRecord(instance_id, "positive", gold, answer, 0.5, 0.5, False)]
    for k in (1, 2, 3, 4):
        records.append(QuestionRecord(instance_id, f"neg{k}", "No", "No", 0.1, 0.9, False))
    return records


def _meta(instance_id: str, depth: int = 0, parent: str | None = None) -> dict:
    return {
        "instance_id": instance_id,
        "substitution_depth": depth,
        "source_leaf": "dog",
        "target": "canine" if depth else "dog",
        "parent_instance_id": parent,
    }


def _odds_run(correct_mask) -> EvalRun:
    records, meta = [], []
    for i in range(_N_PAIRS):
        original, substituted = f"p{i:02d}", f"p{i:02d}@d1"
        records += _question_records(original, "No")
        meta.append(_meta(original))
        records += _question_records(substituted, "No", ok=correct_mask[i])
        meta.append(_meta(substituted, 1, original))
    return EvalRun("run-synth", "text", "mock-model", "0" * 8, "argmax", records, meta)


def _spans_dump(slot_rows, role: str, layer=None, n_layers=None) -> EmbeddingDump:
    rows, spans, labels = [], [], []
    for instance_id, slot, mention, vec in slot_rows:
        rows.append(vec)
        labels.append("dog")
        spans.append(
            {"instance_id": instance_id, "concept": "dog",
             "mention_index": mention, "slot": slot}
        )
    matrix = np.array(rows, dtype=np.float32)
    manifest = DumpManifest(
        model_id="mock-model",
        role=role,
        dims=matrix.shape,
        labels=labels,
        payload_digest=payload_digest(matrix),
        layer=layer,
        n_layers=n_layers,
        spans=spans,
    )
    return EmbeddingDump(manifest, matrix)


def _delta_dump(deltas, layer: int) -> EmbeddingDump:
    # unit-circle geometry realizes each requested delta exactly
    slot_rows = []
    for i, delta in enumerate(deltas):
        instance_id = f"p{i:02d}@d1"
        h = 0.5 + delta / 2.0
        g = 0.5 - delta / 2.0
        slot_rows.append((instance_id, "hyponym", 0, (1.0, 0.0)))
        slot_rows.append((instance_id, "hypernym", 0, (h, math.sqrt(1.0 - h * h))))
        for k in (1, 2, 3, 4):
            slot_rows.append((instance_id, f"neg{k}", 0, (g, math.sqrt(1.0 - g * g))))
    return _spans_dump(slot_rows, "layerwise_contextual", layer=layer, n_layers=2)


def _question_final_dump(matrix, groups) -> EmbeddingDump:
    matrix = np.asarray(matrix, dtype=np.float32)
    manifest = DumpManifest(
        model_id="mock-model",
        role="question_final",
        dims=matrix.shape,
        labels=[f"q{i:03d}" for i in range(len(matrix))],
        payload_digest=payload_digest(matrix),
        spans=[{"instance_id": f"q{i:03d}", "group": g} for i, g in enumerate(groups)],
    )
    return EmbeddingDump(manifest, matrix)


def _vision_dump(rows) -> EmbeddingDump:
    matrix = np.array([vec for _, _, vec in rows], dtype=np.float32)
    manifest = DumpManifest(
        model_id="viz-model",
        role="vision_patch",
        dims=matrix.shape,
        labels=[image_id for _, image_id, _ in rows],
        payload_digest=payload_digest(matrix),
        spans=[{"concept": c, "image_id": image_id} for c, image_id, _ in rows],
    )
    return EmbeddingDump(manifest, matrix)


def _unit(degrees: float):
    radians = math.radians(degrees)
    return (math.cos(radians), math.sin(radians))


def test_criterion_7_analysis_end_to_end():
    with budget(180.0):
        # odds report recovers a planted effect
        dumps = [_delta_dump(_SIGNAL_DELTAS, 0), _delta_dump(_FLAT_DELTAS, 1)]
        planted = layerwise_odds_report(dumps, _odds_run([i < 20 for i in range(_N_PAIRS)]))
        signal_row = planted.rows[0]
        assert signal_row.odds_ratio > 1.0
        assert signal_row.ci_low > 1.0
        assert signal_row.p < 0.05
        assert signal_row.converged

        # labels shuffled independently of the deltas: the interval should
        # cover 1 at roughly its nominal rate
        rng = random.Random(0)
        covered = 0
        for _ in range(20):
            perm = rng.sample(range(_N_PAIRS), _N_PAIRS)
            mask = [perm[i] < 20 for i in range(_N_PAIRS)]
            row = layerwise_odds_report(dumps, _odds_run(mask)).rows[0]
            if row.ci_low <= 1.0 <= row.ci_high:
                covered += 1
        assert covered >= 18

        # separability: disjoint Gaussians vs one distribution relabeled
        rng_np = np.random.default_rng(11)
        mu = np.zeros(6)
        mu[0] = 3.0
        separated = np.vstack([
            rng_np.normal(0.0, 0.3, (30, 6)) + mu,
            rng_np.normal(0.0, 0.3, (30, 6)) - mu,
        ])
        groups = ["hypernym"] * 30 + ["negative"] * 30
        report = separability_report(_question_final_dump(separated, groups))
        assert report.svm_error == 0.0

        identical = np.random.default_rng(12).normal(size=(60, 6))
        report = separability_report(_question_final_dump(identical, groups))
        assert report.svm_error > 0.3

        # visual report reproduces the hand-counted cohesion values
        dump = _vision_dump([
            ("a", "img-a1", _unit(5)),
            ("a", "img-a2", _unit(10)),
            ("b", "img-b1", _unit(40)),
            ("q", "img-q1", _unit(0)),
            ("q", "img-q2", _unit(0)),
            ("c", "img-c1", _unit(80)),
            ("c", "img-c2", _unit(90)),
            ("d", "img-d1", _unit(20)),
            ("d", "img-d2", _unit(30)),
        ])
        membership = {"h1": ["a", "b", "q"], "h2": ["c", "d"]}
        conditional = {
            ("a", "h1"): 0.95,
            ("b", "h1"): 0.85,
            ("c", "h2"): 0.30,
            ("d", "h2"): 0.55,
        }
        visual = visual_similarity_report(dump, membership, conditional)
        # hand count: a and b sit above the global median, c and d below
        assert visual.cohesion == {"h1": 1.0, "h2": 0.0}
        sims = sorted(row.viz_sim for row in visual.rows)
        assert visual.global_median == pytest.approx((sims[1] + sims[2]) / 2.0)


# ---------------------------------------------------------------------------
# gate 8: evaluation client against the bundled mock endpoint
# ---------------------------------------------------------------------------


def test_criterion_8_eval_client_integration(taxonomy, scenes, tmp_path):
    with budget(60.0):
        subset = {sid: scenes[sid] for sid in sorted(scenes)[:2]}
        instances, _ = build_dataset(subset, taxonomy, seed=0, quota=2)
        assert instances

        def config(server, **overrides):
            settings = {"max_in_flight": 4, "timeout": 5.0, "retries": 0}
            settings.update(overrides)
            return EndpointConfig(base_url=server.base_url, model_name="mock", **settings)

        with MockEndpoint(instances, behavior="gold") as server:
            gold = metrics_report(
                run_eval(instances, config(server), mode="text").instance_set()
            )
        assert gold.overall == 1.0
        assert gold.conditional == 1.0
        assert gold.hierarchical_consistency == 1.0

        with MockEndpoint(instances, behavior="always_yes") as server:
            yes = metrics_report(
                run_eval(instances, config(server), mode="text").instance_set()
            )
        assert yes.overall == 0.0
        assert yes.hierarchical_consistency == 0.0
        assert yes.conditional is None  # empty denominator reported absent

        # variant pooling: {Yes: 0.2, yes: 0.2} vs {No: 0.3}
        score = aggregate_yes_no([
            {"token": "Yes", "logprob": math.log(0.2)},
            {"token": "yes", "logprob": math.log(0.2)},
            {"token": "No", "logprob": math.log(0.3)},
        ])
        assert abs(score.p_yes - 0.4 / 0.7) < 1e-12
        assert abs(score.p_no - 0.3 / 0.7) < 1e-12
        assert score.answer == "Yes"

        # a mid-run transport fault must not change the final records
        checkpoint_path = tmp_path / "checkpoint.jsonl"
        n_questions = 5 * len(instances)
        with MockEndpoint(instances, behavior="gold", fail_after=n_questions // 3) as server:
            cfg = config(server, max_in_flight=2)
            with pytest.raises(EndpointError):
                run_eval(instances, cfg, mode="text", checkpoint_path=checkpoint_path)
            assert 0 < len(Checkpoint(checkpoint_path).done()) < n_questions
            server.heal()
            resumed = run_eval(instances, cfg, mode="text", checkpoint_path=checkpoint_path)
        with MockEndpoint(instances, behavior="gold") as server:
            clean = run_eval(instances, config(server), mode="text")
        assert resumed.records == clean.records
