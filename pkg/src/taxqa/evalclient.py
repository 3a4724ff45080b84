"""Evaluation client for chat-completion endpoints with constrained scoring.

Every question is sent as a single-token completion request with top-k
logprobs. The Yes/No decision is read off the returned distribution, never
off generated text: logprobs of surface variants of each answer word are
aggregated by log-sum-exp, the two group masses are renormalized against
each other, and the larger one wins (ties go to "No"). If no variant of
either word is in the top k the question counts as an abstention and is
scored incorrect.

Runs checkpoint each scored question to a JSONL file keyed by (instance_id,
slot), so an interrupted run resumes without re-querying. Final run records
are ordered by key, making the output independent of completion order.
"""
from __future__ import annotations

import base64
import hashlib
import json
import math
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import requests

from .metrics import InstanceResult, InstanceSet, instance_set_from_results
from .questgen import QAInstance, dataset_digest, parent_instance_id

YES_VARIANTS = ("Yes", "yes", " Yes", " yes")
NO_VARIANTS = ("No", "no", " No", " no")

API_KEY_ENV = "TAXQA_API_KEY"

MODES = ("text", "question_only", "vqa")

SLOTS = ("positive", "neg1", "neg2", "neg3", "neg4")


class EvalError(Exception):
    pass


class EndpointError(EvalError):
    """Transport failure or malformed endpoint response after retries."""


class NoLogprobsError(EndpointError):
    """The endpoint did not return top-k logprobs for the completion."""


class BothGroupsAbsentError(EvalError):
    """No Yes or No variant appeared in the top-k list."""


class MissingImageError(EvalError):
    pass


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model_name: str
    api_key: str | None = None
    max_in_flight: int = 4
    timeout: float = 60.0
    retries: int = 3
    backoff: float = 0.25
    logprob_top_k: int = 20
    system_prompt: str | None = None
    decision: str = "argmax"  # or "sample"
    decision_seed: int = 0

    def __post_init__(self):
        if self.logprob_top_k < 10:
            raise EvalError("logprob_top_k must be at least 10")
        if self.decision not in ("argmax", "sample"):
            raise EvalError(f"unknown decision rule {self.decision!r}")

    def url(self) -> str:
        if "chat/completions" in self.base_url:
            return self.base_url
        return self.base_url.rstrip("/") + "/v1/chat/completions"

    def key(self) -> str | None:
        return self.api_key or os.environ.get(API_KEY_ENV)


@dataclass(frozen=True)
class YesNoScore:
    p_yes: float
    p_no: float
    answer: str
    variant_logprobs: dict[str, float]


def aggregate_yes_no(top_logprobs: Iterable[Mapping]) -> YesNoScore:
    """Constrained decision from a top-k token logprob list.

    Variants absent from the list contribute zero probability; a group with
    no variants present gets mass 0 after renormalization. Raises
    BothGroupsAbsentError when neither group has any variant present.
    """
    found: dict[str, float] = {}
    for entry in top_logprobs:
        token = entry["token"]
        if token in YES_VARIANTS or token in NO_VARIANTS:
            lp = float(entry["logprob"])
            # a token appears at most once in a top-k list; keep the best
            # if a malformed server repeats it
            found[token] = max(lp, found.get(token, -math.inf))

    def group_mass(variants: Sequence[str]) -> float | None:
        lps = [found[v] for v in variants if v in found]
        if not lps:
            return None
        m = max(lps)
        return m + math.log(sum(math.exp(lp - m) for lp in lps))

    ly = group_mass(YES_VARIANTS)
    ln = group_mass(NO_VARIANTS)
    if ly is None and ln is None:
        raise BothGroupsAbsentError("no Yes/No variant in top-k logprobs")
    if ly is None:
        p_yes = 0.0
    elif ln is None:
        p_yes = 1.0
    else:
        m = max(ly, ln)
        ey, en = math.exp(ly - m), math.exp(ln - m)
        p_yes = ey / (ey + en)
    p_no = 1.0 - p_yes
    answer = "Yes" if p_yes > p_no else "No"
    return YesNoScore(p_yes, p_no, answer, found)


def decide(score: YesNoScore, decision: str = "argmax", seed: int = 0, key: str = "") -> str:
    """Map the renormalized distribution to an answer string."""
    if decision == "argmax":
        return score.answer
    rng = random.Random(hashlib.sha256(f"{seed}|{key}".encode()).digest())
    return "Yes" if rng.random() < score.p_yes else "No"


# ---------------------------------------------------------------------------
# prompts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Prompt:
    text: str
    image_path: str | None = None


def question_for_slot(instance: QAInstance, slot: str):
    if slot == "positive":
        return instance.positive
    if slot.startswith("neg") and slot[3:].isdigit():
        index = int(slot[3:]) - 1
        if 0 <= index < len(instance.negatives):
            return instance.negatives[index]
    raise EvalError(f"unknown slot {slot!r}")


def build_prompt(instance: QAInstance, slot: str, mode: str) -> Prompt:
    question = question_for_slot(instance, slot)
    if mode == "text":
        text = f"{instance.description}\n\n{question.text}" if instance.description else question.text
        return Prompt(text)
    if mode == "question_only":
        return Prompt(question.text)
    if mode == "vqa":
        if not instance.image:
            raise MissingImageError(f"{instance.instance_id}: no image for vqa mode")
        return Prompt(question.text, instance.image)
    raise EvalError(f"unknown mode {mode!r}")


_MEDIA_TYPES = {".png": "image/png", ".jpg": "image/jpeg", ".jpeg": "image/jpeg",
                ".gif": "image/gif", ".webp": "image/webp"}


def image_data_url(path: str | Path) -> str:
    path = Path(path)
    if not path.exists():
        raise MissingImageError(str(path))
    media = _MEDIA_TYPES.get(path.suffix.lower(), "application/octet-stream")
    data = base64.b64encode(path.read_bytes()).decode("ascii")
    return f"data:{media};base64,{data}"


def build_messages(cfg: EndpointConfig, prompt: Prompt) -> list[dict]:
    messages: list[dict] = []
    if cfg.system_prompt:
        messages.append({"role": "system", "content": cfg.system_prompt})
    if prompt.image_path is None:
        messages.append({"role": "user", "content": prompt.text})
    else:
        messages.append(
            {
                "role": "user",
                "content": [
                    {"type": "image_url", "image_url": {"url": image_data_url(prompt.image_path)}},
                    {"type": "text", "text": prompt.text},
                ],
            }
        )
    return messages


# ---------------------------------------------------------------------------
# transport
# ---------------------------------------------------------------------------


def _extract_top_logprobs(body: Mapping) -> list[Mapping]:
    try:
        content = body["choices"][0]["logprobs"]["content"]
        entries = content[0]["top_logprobs"]
    except (KeyError, IndexError, TypeError) as exc:
        raise NoLogprobsError(f"response lacks top-k logprobs: {exc}") from exc
    if not isinstance(entries, list) or not entries:
        raise NoLogprobsError("empty top_logprobs list")
    return entries


def score_yes_no(
    cfg: EndpointConfig, prompt: Prompt, session: requests.Session | None = None
) -> YesNoScore:
    """One constrained-scoring request with bounded retries and backoff."""
    payload = {
        "model": cfg.model_name,
        "messages": build_messages(cfg, prompt),
        "max_tokens": 1,
        "logprobs": True,
        "top_logprobs": cfg.logprob_top_k,
    }
    headers = {"Content-Type": "application/json"}
    key = cfg.key()
    if key:
        headers["Authorization"] = f"Bearer {key}"
    http = session or requests
    last_error: Exception | None = None
    for attempt in range(cfg.retries + 1):
        try:
            resp = http.post(cfg.url(), json=payload, headers=headers, timeout=cfg.timeout)
            if resp.status_code >= 500 or resp.status_code == 429:
                raise EndpointError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            if resp.status_code != 200:
                # client errors are not retried; the request will not improve
                raise EndpointError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            return aggregate_yes_no(_extract_top_logprobs(resp.json()))
        except (requests.RequestException, EndpointError) as exc:
            if isinstance(exc, NoLogprobsError):
                raise
            if isinstance(exc, EndpointError) and "HTTP 4" in str(exc) and "HTTP 429" not in str(exc):
                raise
            last_error = exc
            if attempt < cfg.retries:
                time.sleep(cfg.backoff * (2**attempt))
    raise EndpointError(f"request failed after {cfg.retries + 1} attempts: {last_error}")


# ---------------------------------------------------------------------------
# runs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuestionRecord:
    instance_id: str
    slot: str
    gold: str
    answer: str | None
    p_yes: float | None
    p_no: float | None
    abstained: bool

    @property
    def correct(self) -> bool:
        return self.answer == self.gold

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "slot": self.slot,
            "gold": self.gold,
            "answer": self.answer,
            "p_yes": self.p_yes,
            "p_no": self.p_no,
            "abstained": self.abstained,
        }


@dataclass
class EvalRun:
    run_id: str
    mode: str
    model_name: str
    dataset_digest: str
    decision: str
    records: list[QuestionRecord]
    instance_meta: list[dict]

    def instance_set(self) -> InstanceSet:
        by_instance: dict[str, dict[str, QuestionRecord]] = {}
        for rec in self.records:
            by_instance.setdefault(rec.instance_id, {})[rec.slot] = rec
        meta = {m["instance_id"]: m for m in self.instance_meta}
        results = []
        for iid in sorted(by_instance):
            slots = by_instance[iid]
            missing = [s for s in SLOTS if s not in slots]
            if missing:
                raise EvalError(f"{iid}: run is missing slots {missing}")
            m = meta.get(iid, {})
            results.append(
                InstanceResult(
                    instance_id=iid,
                    positive_correct=slots["positive"].correct,
                    negatives_correct=tuple(slots[f"neg{i}"].correct for i in (1, 2, 3, 4)),
                    substitution_depth=m.get("substitution_depth", 0),
                    source_leaf=m.get("source_leaf", ""),
                    target=m.get("target", ""),
                    parent_instance_id=m.get("parent_instance_id"),
                )
            )
        return instance_set_from_results(results)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "mode": self.mode,
            "model": self.model_name,
            "dataset_digest": self.dataset_digest,
            "decision": self.decision,
            "instances": self.instance_meta,
            "records": [r.to_dict() for r in self.records],
        }


def save_eval_run(path: str | Path, run: EvalRun) -> None:
    Path(path).write_text(
        json.dumps(run.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_eval_run(path: str | Path) -> EvalRun:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    records = [
        QuestionRecord(
            instance_id=r["instance_id"],
            slot=r["slot"],
            gold=r["gold"],
            answer=r["answer"],
            p_yes=r["p_yes"],
            p_no=r["p_no"],
            abstained=r["abstained"],
        )
        for r in doc["records"]
    ]
    return EvalRun(
        run_id=doc["run_id"],
        mode=doc["mode"],
        model_name=doc["model"],
        dataset_digest=doc["dataset_digest"],
        decision=doc.get("decision", "argmax"),
        records=records,
        instance_meta=doc.get("instances", []),
    )


def _instance_meta(instances: Sequence[QAInstance]) -> list[dict]:
    ids = {i.instance_id for i in instances}
    meta = []
    for inst in sorted(instances, key=lambda i: i.instance_id):
        parent = parent_instance_id(inst.instance_id)
        meta.append(
            {
                "instance_id": inst.instance_id,
                "scene_id": inst.scene_id,
                "substitution_depth": inst.substitution_depth,
                "source_leaf": inst.source_leaf,
                "target": inst.positive.target,
                "parent_instance_id": parent if parent != inst.instance_id and parent in ids else None,
            }
        )
    return meta


class Checkpoint:
    """Append-only JSONL of scored questions keyed by (instance_id, slot)."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._done: dict[tuple[str, str], QuestionRecord] = {}
        if self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                doc = json.loads(line)
                rec = QuestionRecord(
                    instance_id=doc["instance_id"],
                    slot=doc["slot"],
                    gold=doc["gold"],
                    answer=doc["answer"],
                    p_yes=doc["p_yes"],
                    p_no=doc["p_no"],
                    abstained=doc["abstained"],
                )
                self._done[(rec.instance_id, rec.slot)] = rec

    def done(self) -> dict[tuple[str, str], QuestionRecord]:
        return dict(self._done)

    def append(self, rec: QuestionRecord) -> None:
        line = json.dumps(rec.to_dict(), sort_keys=True)
        with self._lock:
            self._done[(rec.instance_id, rec.slot)] = rec
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()


def run_eval(
    instances: Sequence[QAInstance],
    cfg: EndpointConfig,
    mode: str = "text",
    checkpoint_path: str | Path | None = None,
    run_id: str = "run",
) -> EvalRun:
    """Score every question of every instance against the endpoint.

    Requests run under a bounded thread pool (cfg.max_in_flight). Abstentions
    are recorded, not retried. A transport failure aborts the run after the
    in-flight work settles; everything scored so far is already in the
    checkpoint, and a rerun with the same checkpoint path resumes.
    """
    if mode not in MODES:
        raise EvalError(f"unknown mode {mode!r}")
    work: list[tuple[str, str]] = [
        (inst.instance_id, slot)
        for inst in sorted(instances, key=lambda i: i.instance_id)
        for slot in SLOTS
    ]
    by_id = {inst.instance_id: inst for inst in instances}
    checkpoint = Checkpoint(checkpoint_path) if checkpoint_path else None
    done = checkpoint.done() if checkpoint else {}
    pending = [key for key in work if key not in done]

    session = requests.Session()

    def score_one(key: tuple[str, str]) -> QuestionRecord:
        iid, slot = key
        inst = by_id[iid]
        question = question_for_slot(inst, slot)
        prompt = build_prompt(inst, slot, mode)
        try:
            score = score_yes_no(cfg, prompt, session)
        except BothGroupsAbsentError:
            return QuestionRecord(iid, slot, question.gold, None, None, None, True)
        answer = decide(score, cfg.decision, cfg.decision_seed, f"{iid}|{slot}")
        return QuestionRecord(iid, slot, question.gold, answer, score.p_yes, score.p_no, False)

    # checkpoint as completions arrive; on the first failure cancel what has
    # not started and abort once in-flight work settles
    results: dict[tuple[str, str], QuestionRecord] = dict(done)
    failure: Exception | None = None
    if pending:
        with ThreadPoolExecutor(max_workers=cfg.max_in_flight) as pool:
            futures = [pool.submit(score_one, key) for key in pending]
            for fut in as_completed(futures):
                try:
                    rec = fut.result()
                except Exception as exc:
                    failure = exc if isinstance(exc, EvalError) else EndpointError(str(exc))
                    for other in futures:
                        other.cancel()
                    break
                results[(rec.instance_id, rec.slot)] = rec
                if checkpoint:
                    checkpoint.append(rec)
    if failure is not None:
        raise failure

    records = [results[key] for key in work]
    return EvalRun(
        run_id=run_id,
        mode=mode,
        model_name=cfg.model_name,
        dataset_digest=dataset_digest(sorted(instances, key=lambda i: i.instance_id)),
        decision=cfg.decision,
        records=records,
        instance_meta=_instance_meta(instances),
    )
