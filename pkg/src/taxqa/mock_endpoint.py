"""Deterministic chat-completions double for offline evaluation tests.

Serves the same wire shape the eval client speaks: POST to a path ending in
chat/completions with {model, messages, max_tokens, logprobs, top_logprobs}
returns a single-token choice with a top-k logprob list. Behaviors:

  gold               answers every known question with its gold label
  always_yes         puts most of the mass on " Yes" regardless of input
  needs_description  gold when a description precedes the question, else a
                     question-hash coin flip (chance-level)
  silent             returns filler tokens only, forcing abstention

The gold index maps every prompt shape (all eval modes) of every question
to its label, so one server instance can serve any mode. Responses are a
pure function of the request body; concurrency cannot change a run.
"""
from __future__ import annotations

import hashlib
import json
import math
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Iterable, Sequence

from .evalclient import MODES, SLOTS, build_prompt, question_for_slot
from .questgen import QAInstance

BEHAVIORS = ("gold", "always_yes", "needs_description", "silent")

# filler vocabulary so top-k lists look like a real distribution
_FILLER = ("The", " the", "A", " I", " It", " This", " That", " There", " Maybe", " Perhaps")


def _question_coin(question_text: str) -> str:
    digest = hashlib.sha256(question_text.encode("utf-8")).digest()
    return "Yes" if digest[0] % 2 == 0 else "No"


def gold_prompt_index(instances: Iterable[QAInstance]) -> dict[str, str]:
    """Map every prompt text (for every mode and slot) to its gold answer."""
    index: dict[str, str] = {}
    for inst in instances:
        for slot in SLOTS:
            question = question_for_slot(inst, slot)
            for mode in MODES:
                if mode == "vqa" and not inst.image:
                    continue
                text = build_prompt(inst, slot, mode).text
                index.setdefault(text, question.gold)
    return index


def _top_logprobs_for(answer: str, p: float = 0.9) -> list[dict]:
    """Distribution concentrating `p` on the answer, split over two variants."""
    yes_p = p if answer == "Yes" else (1.0 - p)
    no_p = 1.0 - yes_p
    entries = [
        {"token": " Yes", "logprob": math.log(yes_p * 0.7)},
        {"token": "Yes", "logprob": math.log(yes_p * 0.3)},
        {"token": " No", "logprob": math.log(no_p * 0.7)},
        {"token": "No", "logprob": math.log(no_p * 0.3)},
    ]
    entries.sort(key=lambda e: -e["logprob"])
    floor = entries[-1]["logprob"] - 2.0
    for i, tok in enumerate(_FILLER[: 20 - len(entries)]):
        entries.append({"token": tok, "logprob": floor - 0.1 * (i + 1)})
    return entries


def _silent_top_logprobs() -> list[dict]:
    return [
        {"token": tok, "logprob": -1.0 - 0.2 * i} for i, tok in enumerate(_FILLER)
    ]


def _user_text(messages: Sequence[dict]) -> str:
    for msg in reversed(messages):
        if msg.get("role") != "user":
            continue
        content = msg.get("content", "")
        if isinstance(content, str):
            return content
        parts = [c.get("text", "") for c in content if c.get("type") == "text"]
        return "\n".join(p for p in parts if p)
    return ""


@dataclass
class MockStats:
    requests: int = 0


class MockEndpoint:
    """Threaded HTTP server bound to 127.0.0.1 on an ephemeral port."""

    def __init__(
        self,
        instances: Iterable[QAInstance] = (),
        behavior: str = "gold",
        confidence: float = 0.9,
        fail_after: int | None = None,
        top_k_cap: int | None = None,
    ):
        if behavior not in BEHAVIORS:
            raise ValueError(f"unknown behavior {behavior!r}")
        self.behavior = behavior
        self.confidence = confidence
        self.index = gold_prompt_index(instances)
        self.fail_after = fail_after
        self.top_k_cap = top_k_cap
        self.stats = MockStats()
        self._lock = threading.Lock()
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # keep test output quiet
                pass

            def do_POST(self):
                outer._handle(self)

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> "MockEndpoint":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self) -> "MockEndpoint":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def heal(self) -> None:
        """Clear a fail_after fault so a resumed run can finish."""
        with self._lock:
            self.fail_after = None

    # -- request handling -----------------------------------------------------

    def _answer_for(self, text: str) -> str | None:
        if self.behavior == "always_yes":
            return "Yes"
        question = text.rsplit("\n\n", 1)[-1]
        if self.behavior == "needs_description":
            if "\n\n" in text and text in self.index:
                return self.index[text]
            return _question_coin(question)
        return self.index.get(text)

    def _handle(self, handler: BaseHTTPRequestHandler) -> None:
        if not handler.path.endswith("chat/completions"):
            handler.send_error(404, "unknown route")
            return
        with self._lock:
            self.stats.requests += 1
            if self.fail_after is not None and self.stats.requests > self.fail_after:
                handler.send_error(503, "injected fault")
                return
        length = int(handler.headers.get("Content-Length", "0"))
        try:
            body = json.loads(handler.rfile.read(length) or b"{}")
        except json.JSONDecodeError:
            handler.send_error(400, "bad json")
            return
        text = _user_text(body.get("messages", []))
        if self.behavior == "silent":
            entries = _silent_top_logprobs()
        else:
            answer = self._answer_for(text)
            if answer is None:
                answer = _question_coin(text.rsplit("\n\n", 1)[-1])
            entries = _top_logprobs_for(answer, self.confidence)
        top_k = body.get("top_logprobs", 20)
        if self.top_k_cap is not None:
            top_k = min(top_k, self.top_k_cap)
        entries = entries[:top_k]
        response = {
            "id": "mock-completion",
            "object": "chat.completion",
            "model": body.get("model", "mock"),
            "choices": [
                {
                    "index": 0,
                    "message": {"role": "assistant", "content": entries[0]["token"].strip()},
                    "logprobs": {
                        "content": [
                            {
                                "token": entries[0]["token"],
                                "logprob": entries[0]["logprob"],
                                "top_logprobs": entries,
                            }
                        ]
                    },
                    "finish_reason": "length",
                }
            ],
        }
        payload = json.dumps(response).encode("utf-8")
        handler.send_response(200)
        handler.send_header("Content-Type", "application/json")
        handler.send_header("Content-Length", str(len(payload)))
        handler.end_headers()
        handler.wfile.write(payload)
