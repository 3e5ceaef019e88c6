"""Policies: anything that turns a rendered context into response text.

Scripted policies are deterministic test doubles that read the context the
same way a model would (question line, tag history) and consult an answer
key for the lexical judge. ``RemotePolicy`` speaks the JSON ``/generate``
protocol.
"""

from __future__ import annotations

import hashlib
import random
import re
from dataclasses import dataclass
from typing import Mapping, Optional, Protocol, Sequence

import httpx

from . import grammar
from ._http import JsonEndpoint, TOKEN_ENV
from .corpus import tokenize
from .errors import ProtocolError
from .metrics import contains_answer, normalize_answer

RESPONSE_CAP = 500
DEFAULT_TEMPERATURE = 1.0


@dataclass(frozen=True)
class PolicyRequest:
    context_text: str
    temperature: float = DEFAULT_TEMPERATURE
    max_new_tokens: int = RESPONSE_CAP
    # per-episode seed; scripted policies mix it with their own, remote ones ignore it
    seed: int = 0

    def __post_init__(self):
        if not self.context_text:
            raise ValueError("context_text must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 1 <= self.max_new_tokens <= RESPONSE_CAP:
            raise ValueError(f"max_new_tokens must be in [1, {RESPONSE_CAP}]")


@dataclass(frozen=True)
class PolicyResponse:
    text: str
    token_logprobs: Optional[tuple[tuple[str, float], ...]] = None
    ref_logprobs: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.token_logprobs is not None and self.ref_logprobs is not None:
            if len(self.token_logprobs) != len(self.ref_logprobs):
                raise ProtocolError("logprobs and ref_logprobs differ in length")


class Policy(Protocol):
    def next_actions(self, request: PolicyRequest) -> PolicyResponse: ...


def next_actions(policy: Policy, request: PolicyRequest) -> PolicyResponse:
    return policy.next_actions(request)


# -- reading a rendered context ------------------------------------------------

_EVENT = re.compile(r"<(think|search|judge|answer|information)>(.*?)</\1>", re.S)
_QUESTION_MARK = "\nQuestion: "
# two or more capitalized words, allowing possessives like "Bob's"
_SPAN = re.compile(r"\b[A-Z][\w'’]*(?:\s+[A-Z][\w'’]*)+")
_YEAR = re.compile(r"\b(1[0-9]{3}|20[0-9]{2})\b")
_ATTRIBUTE = re.compile(
    r"^(?:what|when|where|who|which)\s+(?:is|was|are|were)\s+the\s+(.+?)\s+of\s+", re.I
)


@dataclass
class ContextView:
    question: str
    events: list[tuple[str, str]]

    @property
    def queries(self) -> list[str]:
        return [p for k, p in self.events if k == "search"]

    def pending_observation(self) -> Optional[str]:
        """Text of the latest observation if nothing has judged it yet.

        Returns "" when the latest search is unjudged but shows no text.
        """
        last_search = max((i for i, (k, _) in enumerate(self.events) if k == "search"), default=None)
        if last_search is None:
            return None
        tail = self.events[last_search + 1:]
        if any(k == "judge" for k, _ in tail):
            return None
        return next((p for k, p in tail if k == "information"), "")


def read_context(context: str) -> ContextView:
    head, sep, rest = context.partition(_QUESTION_MARK)
    if not sep:
        raise ValueError("context has no question line")
    question, _, history = rest.partition("\n")
    return ContextView(question.strip(), _EVENT.findall(history))


def proper_spans(text: str) -> list[str]:
    return [m.group(0) for m in _SPAN.finditer(text)]


def _blocks(observation: str) -> list[tuple[str, str]]:
    """Split a rendered observation into (title, body) pairs."""
    out = []
    for line in observation.split("\n"):
        m = re.match(r"\((.*?)\) (.*)", line)
        if m:
            out.append((m.group(1), m.group(2)))
        elif line.strip():
            out.append(("", line))
    return out


def question_keywords(question: str) -> str:
    return question.strip().rstrip("?").strip()


# -- scripted policies -----------------------------------------------------------

SCRIPTED_KINDS = ("oracle", "stubborn", "self_correcting", "answer_only")


class ScriptedPolicy:
    """Deterministic policy double.

    kind:
      oracle           judges truthfully, jumps straight to the gold string on "No"
      stubborn         judges truthfully, re-issues its first query on "No"
      self_correcting  judges truthfully (up to ``noise``), on "No" pivots to the first
                       new proper-noun span in the latest observation
      answer_only      answers ``canned_answer`` immediately

    ``noise`` in [0, 1] is the probability of flipping a judgment; when positive,
    query wording is also sampled (keyword order), so replicas with different
    seeds diverge.
    """

    def __init__(
        self,
        kind: str,
        seed: int = 0,
        answer_key: Optional[Mapping[str, Sequence[str]]] = None,
        noise: float = 0.0,
        canned_answer: str = "unknown",
    ):
        if kind not in SCRIPTED_KINDS:
            raise ValueError(f"unknown scripted policy kind {kind!r}")
        if not 0.0 <= noise <= 1.0:
            raise ValueError("noise must be in [0, 1]")
        self.kind = kind
        self.seed = seed
        self.answer_key = {k: list(v) for k, v in (answer_key or {}).items()}
        self.noise = noise if kind != "oracle" else 0.0
        self.canned_answer = canned_answer

    def _rng(self, request: PolicyRequest) -> random.Random:
        h = hashlib.sha256(f"{self.seed}:{request.seed}:{request.context_text}".encode("utf-8"))
        return random.Random(int.from_bytes(h.digest()[:8], "big"))

    def _phrase(self, query: str, rng: random.Random) -> str:
        if self.noise <= 0.0:
            return query
        words = query.split()
        rng.shuffle(words)
        return " ".join(words)

    def next_actions(self, request: PolicyRequest) -> PolicyResponse:
        if self.kind == "answer_only":
            return PolicyResponse(grammar.answer(self.canned_answer).render())
        view = read_context(request.context_text)
        gold = self.answer_key.get(view.question, [])
        rng = self._rng(request)
        actions: list[grammar.Action] = []

        if not view.queries:
            q = self._phrase(question_keywords(view.question), rng)
            actions += [grammar.think(f"I need to look up: {view.question}"), grammar.search(q)]
            return PolicyResponse(grammar.serialize_actions(actions))

        obs = view.pending_observation()
        if obs is not None:
            found = contains_answer(obs, gold) if obs else False
            verdict = found
            if self.noise > 0.0 and rng.random() < self.noise:
                verdict = not verdict
            actions.append(grammar.judge(verdict))
            if verdict:
                actions.append(grammar.answer(_extract_answer(obs, gold)))
                return PolicyResponse(grammar.serialize_actions(actions))
        actions += self._reformulate(view, obs or "", gold, rng)
        return PolicyResponse(grammar.serialize_actions(actions))

    def _reformulate(self, view: ContextView, obs: str, gold: list[str], rng) -> list[grammar.Action]:
        first = view.queries[0]
        if self.kind == "stubborn":
            return [grammar.search(first)]
        if self.kind == "oracle" and gold:
            return [grammar.search(gold[0])]
        span = _next_span(view, obs)
        if span is None:
            return [grammar.think("Nothing new to follow; retrying the original query."), grammar.search(first)]
        m = _ATTRIBUTE.match(view.question)
        query = f"{span} {m.group(1)}" if m else span
        return [
            grammar.think(f"The results point to {span}; searching for it next."),
            grammar.search(self._phrase(query, rng)),
        ]


def _next_span(view: ContextView, obs: str) -> Optional[str]:
    question_norm = normalize_answer(view.question)
    used = [set(tokenize(q)) for q in view.queries]
    for title, body in _blocks(obs):
        title_norm = normalize_answer(title)
        for span in proper_spans(body):
            norm = normalize_answer(span)
            if not norm or norm == title_norm or norm in question_norm:
                continue
            toks = set(tokenize(span))
            if any(toks <= u for u in used):
                continue
            return span
    return None


def _extract_answer(obs: str, gold: Sequence[str]) -> str:
    obs_norm = normalize_answer(obs)
    for g in gold:
        n = normalize_answer(g)
        if n and n in obs_norm:
            return g
    years = _YEAR.findall(obs)
    if years:
        return years[-1]
    spans = proper_spans(obs)
    return spans[-1] if spans else "unknown"


def make_scripted(kind: str, seed: int = 0, **kwargs) -> ScriptedPolicy:
    return ScriptedPolicy(kind, seed, **kwargs)


# -- remote ----------------------------------------------------------------------


class RemotePolicy:
    """Client for ``POST /generate``; the auth token comes from the environment."""

    def __init__(
        self,
        base_url: str,
        *,
        return_logprobs: bool = True,
        token_env: str = TOKEN_ENV,
        retries: int = 3,
        backoff: float = 0.5,
        max_concurrency: int = 8,
        timeout: float = 120.0,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        self.return_logprobs = return_logprobs
        self._endpoint = JsonEndpoint(
            base_url, token_env=token_env, timeout=timeout, retries=retries,
            backoff=backoff, max_concurrency=max_concurrency, transport=transport,
        )

    def wire_payload(self, request: PolicyRequest) -> dict:
        return {
            "prompt": request.context_text,
            "temperature": request.temperature,
            "max_new_tokens": request.max_new_tokens,
            "return_logprobs": self.return_logprobs,
        }

    def next_actions(self, request: PolicyRequest) -> PolicyResponse:
        body = self._endpoint.post("/generate", self.wire_payload(request))
        return parse_generate_response(body)

    def close(self):
        self._endpoint.close()


def parse_generate_response(body) -> PolicyResponse:
    if not isinstance(body, dict) or not isinstance(body.get("text"), str):
        raise ProtocolError("generate response must be an object with a string 'text'")
    lp = body.get("logprobs")
    ref = body.get("ref_logprobs")
    try:
        token_lp = None if lp is None else tuple((str(t), float(v)) for t, v in lp)
        ref_lp = None if ref is None else tuple(float(v) for v in ref)
    except (TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed logprobs: {exc}") from exc
    return PolicyResponse(body["text"], token_lp, ref_lp)
