"""In-context-learning evaluation: prompts, parsing, transports.

Prompts are byte-stable: a fixed task description, one demonstration per
inventory label (the first training record of that label by id order), the
full option list in inventory order, then the query utterance. Responses are
matched case-insensitively against the option strings, longest option first;
a matched span is consumed so a composite option like ``hotel&taxi`` does not
additionally fire its atom substrings.

Transports hide the wire: ``HttpChatTransport`` speaks chat-completion JSON
over HTTP with a bearer token from the environment, ``MockTransport`` replays
a fixture mapping sha256(prompt) -> completion and keeps evaluation runs
deterministic and network-free.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

from intentgraft.corpus import Corpus
from intentgraft.errors import TransportError, ValidationError
from intentgraft.metrics import MetricAccumulator, MetricReport
from intentgraft.rng import stream

TASK_DESCRIPTION = (
    "You are an intent classifier for a dialogue system. "
    "Read the utterance and answer with every matching intent label from the "
    "option list, separated by commas. Output labels only."
)

TOKEN_ENV_VAR = "ICL_API_TOKEN"


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.0
    max_tokens: int = 64


def prompt_sha256(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def build_prompt(train: Corpus, inventory: tuple[str, ...], query_text: str) -> str:
    """Deterministic prompt with one demonstration per label.

    Raises if any inventory label has no training record to demonstrate.
    """
    by_label: dict[str, str] = {}
    for rec in sorted(train.records, key=lambda r: r.id):
        for lab in rec.labels:
            by_label.setdefault(lab, rec.text)
    missing = [lab for lab in inventory if lab not in by_label]
    if missing:
        raise ValidationError(f"no training record for labels: {missing}")
    lines = [TASK_DESCRIPTION, "", "Examples:"]
    for lab in inventory:
        lines.append(f"[{lab}] {by_label[lab]}")
    lines.append("")
    lines.append("Options: " + ", ".join(inventory))
    lines.append("")
    lines.append(f"Utterance: {query_text}")
    lines.append("Labels:")
    return "\n".join(lines)


def parse_response(completion: str, options: tuple[str, ...]) -> set[str]:
    """Case-insensitive substring matching, longest options first.

    Matched spans are consumed, so when only a longer option appears verbatim
    its substring options do not fire. No match yields the empty set.
    """
    if not options:
        raise ValidationError("options must be non-empty")
    haystack = completion.lower()
    consumed = [False] * len(haystack)
    found: set[str] = set()
    for opt in sorted(options, key=lambda o: (-len(o), o)):
        needle = opt.lower()
        start = 0
        while True:
            pos = haystack.find(needle, start)
            if pos < 0:
                break
            span = range(pos, pos + len(needle))
            if not any(consumed[i] for i in span):
                found.add(opt)
                for i in span:
                    consumed[i] = True
            start = pos + 1
    return found


def sample_eval_subset(test: Corpus, n: int, seed: int) -> Corpus:
    """Uniform sample without replacement; corpus order is preserved."""
    if n > len(test.records):
        raise ValidationError(f"cannot sample {n} of {len(test.records)} records")
    rng = stream(seed, "icl/subset")
    picked = sorted(rng.choice(len(test.records), size=n, replace=False))
    records = tuple(test.records[i] for i in picked)
    return Corpus(name=test.name, split=test.split, records=records, inventory=test.inventory)


# ---------------------------------------------------------------------------
# Transports
# ---------------------------------------------------------------------------


class CompletionTransport(Protocol):
    def send(self, prompt: str, params: GenerationParams) -> str: ...


class MockTransport:
    """Replays completions keyed by sha256(prompt); optionally a fallback fn."""

    def __init__(
        self,
        responses: dict[str, str] | None = None,
        fallback: Callable[[str], str] | None = None,
    ):
        self.responses = dict(responses or {})
        self.fallback = fallback

    @classmethod
    def from_fixture_file(cls, path: str | Path) -> MockTransport:
        with open(path, encoding="utf-8") as f:
            return cls(responses=json.load(f))

    def send(self, prompt: str, params: GenerationParams) -> str:
        key = prompt_sha256(prompt)
        if key in self.responses:
            return self.responses[key]
        if self.fallback is not None:
            return self.fallback(prompt)
        raise TransportError(f"no recorded completion for prompt {key[:12]}...")


class HttpChatTransport:
    """Minimal chat-completion client; bearer token from ICL_API_TOKEN."""

    def __init__(
        self,
        url: str,
        model: str,
        timeout: float = 60.0,
        session=None,
        token_env: str = TOKEN_ENV_VAR,
    ):
        self.url = url
        self.model = model
        self.timeout = timeout
        self.token_env = token_env
        if session is None:
            import requests

            session = requests.Session()
        self.session = session

    def send(self, prompt: str, params: GenerationParams) -> str:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        try:
            resp = self.session.post(self.url, json=body, headers=headers, timeout=self.timeout)
        except Exception as e:  # noqa: BLE001 - network layer raises many types
            raise TransportError(f"request failed: {e}") from e
        if resp.status_code != 200:
            raise TransportError(f"completion endpoint returned {resp.status_code}")
        try:
            payload = resp.json()
            return payload["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError, ValueError) as e:
            raise TransportError(f"malformed completion response: {e}") from e


# ---------------------------------------------------------------------------
# Evaluation loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IclResult:
    report: MetricReport
    transcript: list[dict]
    failures: int


def run_icl_eval(
    transport: CompletionTransport,
    train: Corpus,
    test_subset: Corpus,
    inventory: tuple[str, ...],
    params: GenerationParams = GenerationParams(),
    max_in_flight: int = 1,
) -> IclResult:
    """Prompt, send, parse and score each instance; transcript in index order.

    Transport failures are recorded and skipped; if every instance fails the
    run errors out.
    """
    prompts = [build_prompt(train, inventory, rec.text) for rec in test_subset.records]

    def _send(prompt: str) -> tuple[str | None, str | None]:
        try:
            return transport.send(prompt, params), None
        except TransportError as e:
            return None, str(e)

    if max_in_flight > 1:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            results = list(pool.map(_send, prompts))
    else:
        results = [_send(p) for p in prompts]

    acc = MetricAccumulator.for_inventory(inventory)
    transcript: list[dict] = []
    failures = 0
    for idx, (rec, prompt, (completion, error)) in enumerate(
        zip(test_subset.records, prompts, results)
    ):
        gold = set(rec.labels)
        entry: dict = {
            "index": idx,
            "id": rec.id,
            "prompt_sha256": prompt_sha256(prompt),
            "prompt": prompt,
            "gold": sorted(gold),
        }
        if error is not None:
            failures += 1
            entry["error"] = error
        else:
            pred = parse_response(completion, inventory)
            acc.accumulate(pred, gold)
            entry["completion"] = completion
            entry["predicted"] = sorted(pred)
        transcript.append(entry)
    if failures == len(test_subset.records):
        raise TransportError("all instances failed; no metrics to report")
    return IclResult(report=acc.finalize(), transcript=transcript, failures=failures)
