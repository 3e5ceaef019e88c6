"""Closed-world benchmark construction with fictional entities.

Pipeline: sample seed questions, rewrite their entities into invented ones,
write support documents carrying the new facts, inject those into the corpus,
and audit that no invented name already occurs in the base documents.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional, Sequence

import httpx

from ._http import JsonEndpoint, TOKEN_ENV
from .corpus import Corpus, Document, inject_documents, tokenize
from .errors import ForgeValidationError, ProtocolError

Kind = Literal["original", "fictional"]


@dataclass(frozen=True)
class BenchSample:
    sample_id: str
    question: str
    gold: tuple[str, ...]
    kind: Kind = "original"
    support_doc_ids: tuple[str, ...] = ()
    entity_map: tuple[tuple[str, str], ...] = ()
    dataset: str = ""

    def __post_init__(self):
        object.__setattr__(self, "gold", tuple(self.gold))
        object.__setattr__(self, "support_doc_ids", tuple(self.support_doc_ids))
        object.__setattr__(self, "entity_map", tuple(tuple(p) for p in self.entity_map))
        if not self.gold:
            raise ValueError(f"sample {self.sample_id!r} has no gold answers")
        if self.kind not in ("original", "fictional"):
            raise ValueError(f"bad sample kind {self.kind!r}")
        if self.kind == "fictional" and (not self.support_doc_ids or not self.entity_map):
            raise ValueError(f"fictional sample {self.sample_id!r} needs support docs and an entity map")

    def to_json(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "question": self.question,
            "gold": list(self.gold),
            "kind": self.kind,
            "support_doc_ids": list(self.support_doc_ids),
            "entity_map": [list(p) for p in self.entity_map],
            "dataset": self.dataset,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BenchSample":
        return cls(
            obj["sample_id"], obj["question"], tuple(obj["gold"]), obj.get("kind", "original"),
            tuple(obj.get("support_doc_ids", ())), tuple(tuple(p) for p in obj.get("entity_map", ())),
            obj.get("dataset", ""),
        )


@dataclass(frozen=True)
class FictionalSample:
    sample: BenchSample
    documents: tuple[Document, ...]


def load_samples(path: str | Path) -> list[BenchSample]:
    with open(path, encoding="utf-8") as fh:
        return [BenchSample.from_json(json.loads(line)) for line in fh if line.strip()]


def save_samples(samples: Sequence[BenchSample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_json(), ensure_ascii=False, sort_keys=True) + "\n")


def _rng(*parts) -> random.Random:
    h = hashlib.sha256("/".join(str(p) for p in parts).encode("utf-8")).digest()
    return random.Random(int.from_bytes(h[:8], "big"))


def sample_seeds(dataset: Sequence[BenchSample], fraction: float, seed: int) -> list[BenchSample]:
    """Uniformly draw floor(fraction * n) samples without replacement."""
    if not dataset:
        raise ValueError("dataset is empty")
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    # the epsilon keeps 0.29 * 100 from flooring to 28
    n = math.floor(fraction * len(dataset) + 1e-9)
    if n == 0:
        raise ValueError(f"fraction {fraction} of {len(dataset)} samples selects nothing")
    return random.Random(seed).sample(list(dataset), n)


# -- entity detection and name synthesis ------------------------------------------

_LEADING_FUNCTION = {
    "what", "when", "where", "who", "whom", "which", "how", "why", "in", "on", "at", "the",
    "a", "an", "did", "does", "do", "is", "was", "are", "were", "of", "for",
}
_CAPWORD = re.compile(r"[A-Z][a-z'’]+")
_YEAR = re.compile(r"\b(1[5-9][0-9]{2}|20[0-9]{2})\b")


def detect_entities(text: str) -> list[str]:
    """Capitalized multi-word spans, leading question/function words stripped."""
    out = []
    for m in re.finditer(r"\b[A-Z][a-z'’]+(?:\s+[A-Z][a-z'’]+)+", text):
        words = m.group(0).split()
        while words and words[0].lower() in _LEADING_FUNCTION:
            words.pop(0)
        if len(words) >= 2:
            span = " ".join(words)
            if span not in out:
                out.append(span)
    return out


def detect_years(text: str) -> list[str]:
    seen = []
    for y in _YEAR.findall(text):
        if y not in seen:
            seen.append(y)
    return seen


_ONSETS = ["b", "c", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "kr", "st", "th", "sh"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ea", "io", "y"]
_CODAS = ["", "", "n", "r", "l", "s", "th", "x", "nd", "rk"]


def synth_word(rng: random.Random) -> str:
    n = rng.choice((2, 2, 3))
    word = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(n)) + rng.choice(_CODAS)
    return word.capitalize()


def _name_pattern(name: str) -> re.Pattern:
    return re.compile(r"(?<![\w])" + re.escape(name.lower()) + r"(?![\w])")


def count_occurrences(name: str, docs: Sequence[Document]) -> int:
    pat = _name_pattern(name)
    return sum(len(pat.findall((d.title + " " + d.text).lower())) for d in docs)


class NameRegistry:
    """Tracks the base vocabulary so synthesized names never collide with it."""

    def __init__(self, base_docs: Sequence[Document]):
        self._docs = list(base_docs)
        self._vocab = set()
        for d in self._docs:
            self._vocab.update(tokenize(d.title + " " + d.text))
        self._issued: set[str] = set()

    def accept(self, name: str) -> bool:
        toks = tokenize(name)
        if any(t in self._vocab for t in toks) or name.lower() in self._issued:
            return False
        if count_occurrences(name, self._docs):
            return False
        self._issued.add(name.lower())
        return True

    def synth(self, rng: random.Random, n_words: int, max_tries: int = 1000) -> str:
        for _ in range(max_tries):
            name = " ".join(synth_word(rng) for _ in range(n_words))
            if self.accept(name):
                return name
        raise ForgeValidationError("could not synthesize a collision-free name")


# -- rewriters ----------------------------------------------------------------------


@dataclass
class Rewrite:
    question: str
    gold: list[str]
    entity_map: list[tuple[str, str]]
    documents: list[tuple[str, str]]  # (title, text)


def _apply(text: str, mapping: Sequence[tuple[str, str]]) -> str:
    # longest first so "Taylor Swift Band" is replaced before "Taylor Swift"
    for old, new in sorted(mapping, key=lambda p: -len(p[0])):
        text = re.sub(r"(?<![\w])" + re.escape(old) + r"(?![\w])", new, text)
    return text


class TemplateRewriter:
    """Deterministic rewriter: swaps detected names and years, writes template documents."""

    kind = "template"

    def __init__(self, seed: int = 0, n_docs: int = 1):
        if n_docs < 1:
            raise ValueError("n_docs must be >= 1")
        self.seed = seed
        self.n_docs = n_docs

    def rewrite(self, sample: BenchSample, registry: NameRegistry) -> Rewrite:
        rng = _rng("template", self.seed, sample.sample_id)
        entities = detect_entities(sample.question)
        for g in sample.gold:
            for e in detect_entities(g):
                if e not in entities:
                    entities.append(e)
        if not entities:
            raise ForgeValidationError(f"sample {sample.sample_id!r}: no entity to fictionalize")
        entity_map = [(e, registry.synth(rng, len(e.split()))) for e in entities]
        years = detect_years(sample.question + " " + " ".join(sample.gold))
        year_map = []
        for y in years:
            new = y
            while new == y or any(new == v for _, v in year_map):
                new = str(rng.randint(1950, 2020))
            year_map.append((y, new))
        mapping = entity_map + year_map
        question = _apply(sample.question, mapping)
        gold = [_apply(g, mapping) for g in sample.gold]

        names = [new for _, new in entity_map]
        n_docs = min(self.n_docs, len(names))
        docs = []
        for k in range(n_docs):
            name = names[k]
            if k < n_docs - 1:
                text = (
                    f"{name} is a figure documented in regional records. "
                    f"{name} is closely associated with {names[k + 1]}."
                )
            else:
                text = (
                    f"{name} is a figure documented in regional records. "
                    f"Regarding the question \"{question}\", the recorded answer is {gold[0]}."
                )
            docs.append((name, text))
        return Rewrite(question, gold, entity_map, docs)


class RemoteRewriter:
    """Client for ``POST /rewrite``. Its output is validated like any other rewrite."""

    kind = "remote_llm"

    def __init__(self, base_url: str, *, seed: int = 0, token_env: str = TOKEN_ENV,
                 retries: int = 3, backoff: float = 0.5, timeout: float = 120.0,
                 transport: Optional[httpx.BaseTransport] = None):
        self.seed = seed
        self._endpoint = JsonEndpoint(base_url, token_env=token_env, timeout=timeout,
                                      retries=retries, backoff=backoff, transport=transport)

    def rewrite(self, sample: BenchSample, registry: NameRegistry) -> Rewrite:
        body = self._endpoint.post("/rewrite", {"question": sample.question, "gold": list(sample.gold)})
        try:
            rw = Rewrite(
                question=str(body["question"]),
                gold=[str(g) for g in body["gold"]],
                entity_map=[(str(a), str(b)) for a, b in body["entity_map"]],
                documents=[(str(d["title"]), str(d["text"])) for d in body["documents"]],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed rewrite response: {exc}") from exc
        for _, name in rw.entity_map:
            if not registry.accept(name):
                raise ForgeValidationError(f"rewriter proposed {name!r}, which collides with the base corpus")
        return rw


def fictionalize(sample: BenchSample, rewriter, registry: NameRegistry) -> FictionalSample:
    if sample.kind != "original":
        raise ValueError("only original samples can be fictionalized")
    rw = rewriter.rewrite(sample, registry)
    if not rw.gold or not rw.documents or not rw.entity_map:
        raise ForgeValidationError(f"sample {sample.sample_id!r}: rewrite is missing gold, documents or entities")
    sid = f"fh-{sample.sample_id}"
    docs = tuple(
        Document(f"{sid}-doc{k}", title, text, "injected") for k, (title, text) in enumerate(rw.documents)
    )
    if not any(g in d.text for g in rw.gold for d in docs):
        raise ForgeValidationError(f"sample {sample.sample_id!r}: no support document states the gold answer")
    fs = BenchSample(
        sid, rw.question, tuple(rw.gold), "fictional",
        tuple(d.doc_id for d in docs), tuple(rw.entity_map), sample.dataset or "fictional",
    )
    return FictionalSample(fs, docs)


def assemble_benchmark(
    base_corpus: Corpus,
    originals: Sequence[BenchSample],
    fictional: Sequence[FictionalSample],
) -> tuple[Corpus, list[BenchSample]]:
    for f in fictional:
        if not any(g in d.text for g in f.sample.gold for d in f.documents):
            raise ForgeValidationError(f"sample {f.sample.sample_id!r} failed the gold-in-document check")
    corpus = inject_documents(base_corpus, [d for f in fictional for d in f.documents])
    return corpus, list(originals) + [f.sample for f in fictional]


@dataclass
class AuditReport:
    counts: dict[str, int] = field(default_factory=dict)

    @property
    def clean(self) -> bool:
        return all(c == 0 for c in self.counts.values())

    def to_json(self) -> dict:
        return {"clean": self.clean, "counts": dict(sorted(self.counts.items()))}


def audit_leakage(base_corpus: Corpus, fictional: Sequence[BenchSample | FictionalSample]) -> AuditReport:
    """Count base-document occurrences of every invented entity name."""
    base = base_corpus.base_documents()
    report = AuditReport()
    for f in fictional:
        s = f.sample if isinstance(f, FictionalSample) else f
        for _, name in s.entity_map:
            report.counts[name] = count_occurrences(name, base)
    return report


def forge(
    dataset: Sequence[BenchSample],
    base_corpus: Corpus,
    fraction: float = 0.1,
    seed: int = 0,
    rewriter=None,
) -> tuple[Corpus, list[BenchSample], list[FictionalSample], AuditReport]:
    """The whole pipeline; with the template rewriter it is a pure function of its inputs."""
    rewriter = rewriter or TemplateRewriter(seed)
    seeds = sample_seeds(dataset, fraction, seed)
    registry = NameRegistry(base_corpus.base_documents())
    fictional = [fictionalize(s, rewriter, registry) for s in seeds]
    corpus, combined = assemble_benchmark(base_corpus, dataset, fictional)
    return corpus, combined, fictional, audit_leakage(base_corpus, fictional)
