import json
import math

import pytest

from taxqa.evalclient import (
    API_KEY_ENV,
    MODES,
    SLOTS,
    BothGroupsAbsentError,
    Checkpoint,
    EndpointConfig,
    EndpointError,
    EvalError,
    EvalRun,
    MissingImageError,
    NoLogprobsError,
    QuestionRecord,
    YesNoScore,
    _extract_top_logprobs,
    aggregate_yes_no,
    build_messages,
    build_prompt,
    decide,
    image_data_url,
    load_eval_run,
    question_for_slot,
    run_eval,
    save_eval_run,
    score_yes_no,
)
from taxqa.metrics import metrics_report
from taxqa.mock_endpoint import MockEndpoint, gold_prompt_index
from taxqa.questgen import build_dataset, generate_taxomps


def lp(token: str, p: float) -> dict:
    return {"token": token, "logprob": math.log(p)}


class TestAggregation:
    def test_two_yes_variants_against_one_no(self):
        score = aggregate_yes_no([lp("Yes", 0.2), lp("yes", 0.2), lp("No", 0.3)])
        assert abs(score.p_yes - 4.0 / 7.0) < 1e-12
        assert abs(score.p_no - 3.0 / 7.0) < 1e-12
        assert score.answer == "Yes"

    def test_all_four_variants_pooled(self):
        entries = [lp(" Yes", 0.1), lp("Yes", 0.1), lp(" yes", 0.1), lp("yes", 0.1),
                   lp("No", 0.2)]
        score = aggregate_yes_no(entries)
        assert score.p_yes == pytest.approx(0.4 / 0.6, abs=1e-12)
        assert set(score.variant_logprobs) == {" Yes", "Yes", " yes", "yes", "No"}

    def test_tie_goes_to_no(self):
        score = aggregate_yes_no([lp("Yes", 0.3), lp("No", 0.3)])
        assert score.p_yes == pytest.approx(0.5)
        assert score.answer == "No"

    def test_one_group_absent_takes_all_mass(self):
        assert aggregate_yes_no([lp("Yes", 0.01), lp("The", 0.9)]).p_yes == 1.0
        assert aggregate_yes_no([lp(" no", 0.01), lp("The", 0.9)]).p_yes == 0.0

    def test_both_groups_absent_raises(self):
        with pytest.raises(BothGroupsAbsentError):
            aggregate_yes_no([lp("The", 0.5), lp("A", 0.3)])

    def test_unrelated_tokens_ignored(self):
        with_noise = aggregate_yes_no(
            [lp("Yes", 0.2), lp("No", 0.1), lp("The", 0.5), lp("Maybe", 0.2)]
        )
        without = aggregate_yes_no([lp("Yes", 0.2), lp("No", 0.1)])
        assert with_noise.p_yes == pytest.approx(without.p_yes, abs=1e-15)


class TestDecide:
    def score(self, p_yes: float) -> YesNoScore:
        return YesNoScore(p_yes, 1 - p_yes, "Yes" if p_yes > 0.5 else "No", {})

    def test_argmax_passthrough(self):
        assert decide(self.score(0.7), "argmax") == "Yes"
        assert decide(self.score(0.3), "argmax") == "No"

    def test_sample_deterministic_per_seed_and_key(self):
        s = self.score(0.5)
        draws_a = [decide(s, "sample", seed=1, key=f"k{i}") for i in range(64)]
        draws_b = [decide(s, "sample", seed=1, key=f"k{i}") for i in range(64)]
        draws_c = [decide(s, "sample", seed=2, key=f"k{i}") for i in range(64)]
        assert draws_a == draws_b
        assert draws_a != draws_c
        assert {"Yes", "No"} == set(draws_a)

    def test_sample_respects_certainty(self):
        assert all(
            decide(self.score(1.0), "sample", seed=s, key="k") == "Yes" for s in range(20)
        )


class TestEndpointConfig:
    def test_top_k_floor(self):
        with pytest.raises(EvalError):
            EndpointConfig("http://x", "m", logprob_top_k=9)
        assert EndpointConfig("http://x", "m", logprob_top_k=10).logprob_top_k == 10

    def test_decision_vocabulary(self):
        with pytest.raises(EvalError):
            EndpointConfig("http://x", "m", decision="vote")

    def test_url_appends_standard_path(self):
        cfg = EndpointConfig("http://host:9000", "m")
        assert cfg.url() == "http://host:9000/v1/chat/completions"
        cfg = EndpointConfig("http://host:9000/custom/chat/completions", "m")
        assert cfg.url() == "http://host:9000/custom/chat/completions"

    def test_api_key_env_fallback(self, monkeypatch):
        monkeypatch.setenv(API_KEY_ENV, "sekret")
        assert EndpointConfig("http://x", "m").key() == "sekret"
        assert EndpointConfig("http://x", "m", api_key="direct").key() == "direct"
        monkeypatch.delenv(API_KEY_ENV)
        assert EndpointConfig("http://x", "m").key() is None


@pytest.fixture(scope="module")
def small_dataset(taxonomy, scenes):
    subset = {sid: scenes[sid] for sid in sorted(scenes)[:2]}
    instances, _ = build_dataset(subset, taxonomy, seed=0, quota=2)
    return instances


class TestPrompts:
    def test_slot_lookup(self, small_dataset):
        inst = small_dataset[0]
        assert question_for_slot(inst, "positive") is inst.positive
        for i in (1, 2, 3, 4):
            assert question_for_slot(inst, f"neg{i}") is inst.negatives[i - 1]
        with pytest.raises(EvalError):
            question_for_slot(inst, "neg5")

    def test_text_mode_prepends_description(self, small_dataset):
        inst = small_dataset[0]
        prompt = build_prompt(inst, "positive", "text")
        assert prompt.text == f"{inst.description}\n\n{inst.positive.text}"
        assert prompt.image_path is None

    def test_text_mode_without_description(self, taxonomy):
        probe = generate_taxomps(taxonomy, seed=0)[0]
        assert build_prompt(probe, "positive", "text").text == probe.positive.text

    def test_question_only_mode(self, small_dataset):
        inst = small_dataset[0]
        assert build_prompt(inst, "neg2", "question_only").text == inst.negatives[1].text

    def test_vqa_requires_image(self, small_dataset):
        inst = small_dataset[0]
        if inst.image is None:
            with pytest.raises(MissingImageError):
                build_prompt(inst, "positive", "vqa")

    def test_unknown_mode(self, small_dataset):
        with pytest.raises(EvalError):
            build_prompt(small_dataset[0], "positive", "spoken")

    def test_image_data_url(self, tmp_path):
        img = tmp_path / "pic.png"
        img.write_bytes(b"\x89PNG\r\n\x1a\nfake")
        url = image_data_url(img)
        assert url.startswith("data:image/png;base64,")
        with pytest.raises(MissingImageError):
            image_data_url(tmp_path / "missing.png")

    def test_messages_with_system_and_image(self, tmp_path):
        img = tmp_path / "pic.jpg"
        img.write_bytes(b"fake")
        cfg = EndpointConfig("http://x", "m", system_prompt="Answer Yes or No.")
        from taxqa.evalclient import Prompt

        messages = build_messages(cfg, Prompt("Is it a dog?", str(img)))
        assert messages[0] == {"role": "system", "content": "Answer Yes or No."}
        parts = messages[1]["content"]
        assert parts[0]["type"] == "image_url"
        assert parts[0]["image_url"]["url"].startswith("data:image/jpeg;base64,")
        assert parts[1] == {"type": "text", "text": "Is it a dog?"}

    def test_messages_plain_text(self):
        from taxqa.evalclient import Prompt

        cfg = EndpointConfig("http://x", "m")
        messages = build_messages(cfg, Prompt("Q?"))
        assert messages == [{"role": "user", "content": "Q?"}]


class TestExtraction:
    def test_malformed_bodies_raise(self):
        for body in (
            {},
            {"choices": []},
            {"choices": [{"logprobs": None}]},
            {"choices": [{"logprobs": {"content": []}}]},
            {"choices": [{"logprobs": {"content": [{"top_logprobs": []}]}}]},
        ):
            with pytest.raises(NoLogprobsError):
                _extract_top_logprobs(body)

    def test_good_body(self):
        body = {
            "choices": [
                {"logprobs": {"content": [{"top_logprobs": [lp("Yes", 0.9)]}]}}
            ]
        }
        assert _extract_top_logprobs(body) == [lp("Yes", 0.9)]


def make_cfg(server: MockEndpoint, **kw) -> EndpointConfig:
    kw.setdefault("retries", 1)
    kw.setdefault("backoff", 0.01)
    return EndpointConfig(server.base_url, "mock-model", **kw)


class TestScoreAgainstMock:
    def test_gold_behavior_single_request(self, small_dataset):
        inst = small_dataset[0]
        with MockEndpoint(small_dataset, behavior="gold") as server:
            prompt = build_prompt(inst, "positive", "text")
            score = score_yes_no(make_cfg(server), prompt)
        expected = inst.positive.gold
        assert score.answer == expected
        winner = score.p_yes if expected == "Yes" else score.p_no
        assert winner == pytest.approx(0.9, abs=1e-9)

    def test_silent_behavior_forces_abstention(self, small_dataset):
        inst = small_dataset[0]
        with MockEndpoint(small_dataset, behavior="silent") as server:
            with pytest.raises(BothGroupsAbsentError):
                score_yes_no(make_cfg(server), build_prompt(inst, "positive", "text"))

    def test_persistent_server_errors_exhaust_retries(self, small_dataset):
        inst = small_dataset[0]
        with MockEndpoint(small_dataset, behavior="gold", fail_after=0) as server:
            with pytest.raises(EndpointError):
                score_yes_no(
                    make_cfg(server, retries=2),
                    build_prompt(inst, "positive", "text"),
                )
            # initial attempt plus two retries
            assert server.stats.requests == 3

    def test_truncated_top_k_still_scoreable(self, small_dataset):
        inst = small_dataset[0]
        with MockEndpoint(small_dataset, behavior="gold", top_k_cap=3) as server:
            score = score_yes_no(make_cfg(server), build_prompt(inst, "positive", "text"))
        assert score.answer == inst.positive.gold


class TestRunEval:
    def test_gold_run_scores_perfectly(self, small_dataset):
        with MockEndpoint(small_dataset, behavior="gold") as server:
            run = run_eval(small_dataset, make_cfg(server), mode="text")
        assert len(run.records) == 5 * len(small_dataset)
        assert all(r.correct for r in run.records)
        report = metrics_report(run.instance_set())
        assert report.overall == 1.0
        assert report.conditional == 1.0
        assert report.hierarchical_consistency == 1.0

    def test_always_yes_run_scores_zero(self, small_dataset):
        with MockEndpoint(small_dataset, behavior="always_yes") as server:
            run = run_eval(small_dataset, make_cfg(server), mode="text")
        report = metrics_report(run.instance_set())
        assert report.overall == 0.0
        assert report.hierarchical_consistency == 0.0
        assert report.conditional is None
        positives = [r for r in run.records if r.slot == "positive"]
        assert all(r.answer == "Yes" for r in positives)

    def test_description_dependence_shows_in_question_only_mode(self, small_dataset):
        with MockEndpoint(small_dataset, behavior="needs_description") as server:
            text_run = run_eval(small_dataset, make_cfg(server), mode="text")
            qo_run = run_eval(small_dataset, make_cfg(server), mode="question_only")
        text_report = metrics_report(text_run.instance_set())
        qo_report = metrics_report(qo_run.instance_set())
        assert text_report.overall == 1.0
        assert qo_report.overall < text_report.overall

    def test_silent_run_records_abstentions_as_incorrect(self, small_dataset):
        subset = small_dataset[:3]
        with MockEndpoint(subset, behavior="silent") as server:
            run = run_eval(subset, make_cfg(server), mode="text")
        assert all(r.abstained and r.answer is None for r in run.records)
        assert not any(r.correct for r in run.records)
        assert metrics_report(run.instance_set()).overall == 0.0

    def test_concurrency_does_not_change_records(self, small_dataset):
        with MockEndpoint(small_dataset, behavior="gold") as server:
            serial = run_eval(small_dataset, make_cfg(server, max_in_flight=1), mode="text")
            parallel = run_eval(small_dataset, make_cfg(server, max_in_flight=8), mode="text")
        assert serial.records == parallel.records
        assert serial.dataset_digest == parallel.dataset_digest

    def test_checkpoint_resume_after_fault_matches_clean_run(self, small_dataset, tmp_path):
        ckpt = tmp_path / "checkpoint.jsonl"
        n_questions = 5 * len(small_dataset)
        fail_at = n_questions // 3
        with MockEndpoint(small_dataset, behavior="gold", fail_after=fail_at) as server:
            cfg = make_cfg(server, retries=0, max_in_flight=2)
            with pytest.raises(EndpointError):
                run_eval(small_dataset, cfg, mode="text", checkpoint_path=ckpt)
            done_before = len(Checkpoint(ckpt).done())
            assert 0 < done_before < n_questions
            requests_before = server.stats.requests
            server.heal()
            resumed = run_eval(small_dataset, cfg, mode="text", checkpoint_path=ckpt)
            # only the unscored keys hit the endpoint on resume
            assert server.stats.requests - requests_before == n_questions - done_before
        with MockEndpoint(small_dataset, behavior="gold") as server2:
            clean = run_eval(small_dataset, make_cfg(server2), mode="text")
        assert resumed.records == clean.records
        assert resumed.to_dict() == clean.to_dict()

    def test_completed_checkpoint_short_circuits(self, small_dataset, tmp_path):
        ckpt = tmp_path / "checkpoint.jsonl"
        with MockEndpoint(small_dataset, behavior="gold") as server:
            cfg = make_cfg(server)
            first = run_eval(small_dataset, cfg, mode="text", checkpoint_path=ckpt)
            count = server.stats.requests
            again = run_eval(small_dataset, cfg, mode="text", checkpoint_path=ckpt)
            assert server.stats.requests == count  # nothing re-queried
        assert first.records == again.records

    def test_unknown_mode_rejected(self, small_dataset):
        cfg = EndpointConfig("http://localhost:1", "m")
        with pytest.raises(EvalError):
            run_eval(small_dataset, cfg, mode="spoken")


class TestRunSerialization:
    def test_round_trip(self, small_dataset, tmp_path):
        with MockEndpoint(small_dataset, behavior="gold") as server:
            run = run_eval(small_dataset, make_cfg(server), mode="text", run_id="r1")
        path = tmp_path / "run.json"
        save_eval_run(path, run)
        back = load_eval_run(path)
        assert back.run_id == "r1"
        assert back.records == run.records
        assert back.instance_meta == run.instance_meta
        assert back.dataset_digest == run.dataset_digest
        assert metrics_report(back.instance_set()).overall == 1.0

    def test_missing_slots_detected(self):
        run = EvalRun(
            run_id="r",
            mode="text",
            model_name="m",
            dataset_digest="d",
            decision="argmax",
            records=[QuestionRecord("i1", "positive", "Yes", "Yes", 0.9, 0.1, False)],
            instance_meta=[],
        )
        with pytest.raises(EvalError):
            run.instance_set()

    def test_instance_meta_parent_links(self, small_dataset):
        from taxqa.evalclient import _instance_meta

        meta = {m["instance_id"]: m for m in _instance_meta(small_dataset)}
        subs = [i for i in small_dataset if i.substitution_depth > 0]
        assert subs
        for inst in subs:
            parent = meta[inst.instance_id]["parent_instance_id"]
            assert parent is not None
            assert meta[parent]["substitution_depth"] == 0


def test_gold_prompt_index_covers_all_modes(small_dataset):
    index = gold_prompt_index(small_dataset)
    for inst in small_dataset[:5]:
        for slot in SLOTS:
            q = question_for_slot(inst, slot)
            for mode in MODES:
                if mode == "vqa" and not inst.image:
                    continue
                assert index[build_prompt(inst, slot, mode).text] == q.gold
