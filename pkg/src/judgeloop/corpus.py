"""Closed-world document corpus and BM25 retrieval."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np

from . import _kernels
from .errors import CorpusError

Origin = Literal["base", "injected"]

K1 = 1.2
B = 0.75

_SPLIT = re.compile(r"[\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on anything that is not a letter or digit."""
    return [t for t in _SPLIT.split(text.lower()) if t]


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    text: str
    origin: Origin = "base"

    def __post_init__(self):
        if not self.doc_id:
            raise CorpusError("document id must be non-empty")
        if not self.text.strip():
            raise CorpusError(f"document {self.doc_id!r} has empty text")
        if self.origin not in ("base", "injected"):
            raise CorpusError(f"document {self.doc_id!r} has unknown origin {self.origin!r}")

    def to_json(self) -> dict:
        return {"id": self.doc_id, "title": self.title, "text": self.text, "origin": self.origin}

    @classmethod
    def from_json(cls, obj: dict) -> "Document":
        return cls(obj["id"], obj.get("title", ""), obj["text"], obj.get("origin", "base"))


@dataclass(frozen=True)
class Corpus:
    """An immutable, id-unique collection of documents."""

    documents: tuple[Document, ...]
    _by_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        by_id = {}
        for doc in self.documents:
            if doc.doc_id in by_id:
                raise CorpusError(f"duplicate doc_id {doc.doc_id!r}")
            by_id[doc.doc_id] = doc
        object.__setattr__(self, "documents", tuple(self.documents))
        object.__setattr__(self, "_by_id", by_id)

    def __len__(self):
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_id

    def get(self, doc_id: str) -> Document:
        return self._by_id[doc_id]

    def base_documents(self) -> list[Document]:
        return [d for d in self.documents if d.origin == "base"]


def inject_documents(corpus: Corpus, docs: Iterable[Document]) -> Corpus:
    """Return a new corpus with ``docs`` appended and marked as injected.

    The caller must rebuild the index afterwards.
    """
    added = []
    seen = set()
    for doc in docs:
        if doc.doc_id in corpus or doc.doc_id in seen:
            raise CorpusError(f"injected doc_id {doc.doc_id!r} collides with an existing document")
        seen.add(doc.doc_id)
        added.append(Document(doc.doc_id, doc.title, doc.text, "injected"))
    if not added:
        return corpus
    return Corpus(corpus.documents + tuple(added))


@dataclass(frozen=True)
class RetrievalResult:
    doc_id: str
    score: float
    rank: int


class Index:
    """Immutable in-memory BM25 inverted index.

    Collection statistics (document count, average length, document
    frequencies) come from the ``base`` documents when there are any, so
    injecting new documents never shifts the scores of base documents.
    Pass ``background="all"`` to use every document instead.
    """

    def __init__(self, corpus: Corpus, k1: float = K1, b: float = B, background: str = "base"):
        if len(corpus) == 0:
            raise CorpusError("cannot index an empty corpus")
        if background not in ("base", "all"):
            raise ValueError(f"background must be 'base' or 'all', got {background!r}")
        self.corpus = corpus
        self.k1 = float(k1)
        self.b = float(b)
        # documents ordered by id so that index order doubles as the tie-break
        self._docs = sorted(corpus.documents, key=lambda d: d.doc_id)
        self._ids = [d.doc_id for d in self._docs]

        vocab: dict[str, int] = {}
        per_term: list[list[tuple[int, int]]] = []
        doc_len = np.empty(len(self._docs), dtype=np.float64)
        for di, doc in enumerate(self._docs):
            counts: dict[str, int] = {}
            tokens = tokenize(doc.title + " " + doc.text)
            doc_len[di] = len(tokens)
            for tok in tokens:
                counts[tok] = counts.get(tok, 0) + 1
            for tok, c in counts.items():
                ti = vocab.setdefault(tok, len(vocab))
                if ti == len(per_term):
                    per_term.append([])
                per_term[ti].append((di, c))

        stats_mask = np.array(
            [background == "all" or d.origin == "base" for d in self._docs], dtype=bool
        )
        if not stats_mask.any():
            stats_mask[:] = True
        self.n_stats_docs = int(stats_mask.sum())
        self.avgdl = float(doc_len[stats_mask].mean())

        indptr = np.zeros(len(per_term) + 1, dtype=np.int64)
        for ti, plist in enumerate(per_term):
            indptr[ti + 1] = indptr[ti] + len(plist)
        post_doc = np.empty(indptr[-1], dtype=np.int64)
        post_tf = np.empty(indptr[-1], dtype=np.float64)
        df = np.zeros(len(per_term), dtype=np.float64)
        for ti, plist in enumerate(per_term):
            lo = indptr[ti]
            for j, (di, c) in enumerate(plist):
                post_doc[lo + j] = di
                post_tf[lo + j] = c
                if stats_mask[di]:
                    df[ti] += 1
        n = self.n_stats_docs
        self._idf = np.log1p((n - df + 0.5) / (df + 0.5))

        self._vocab = vocab
        self._indptr = indptr
        self._post_doc = post_doc
        self._post_tf = post_tf
        self._doc_len = doc_len
        self._df = df
        for arr in (indptr, post_doc, post_tf, doc_len, df, self._idf):
            arr.setflags(write=False)

    def __len__(self):
        return len(self._docs)

    def document(self, doc_id: str) -> Document:
        return self.corpus.get(doc_id)

    def document_frequency(self, term: str) -> int:
        ti = self._vocab.get(term)
        return 0 if ti is None else int(self._df[ti])

    def scores(self, query: str) -> np.ndarray:
        """BM25 score of every document (in doc_id order) for ``query``."""
        terms = sorted({self._vocab[t] for t in tokenize(query) if t in self._vocab})
        q = np.asarray(terms, dtype=np.int64)
        return _kernels.bm25_scores(
            q, self._indptr, self._post_doc, self._post_tf, self._idf,
            self._doc_len, self.avgdl, self.k1, self.b,
        )

    def retrieve(self, query: str, k: int) -> list[RetrievalResult]:
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        scores = self.scores(query)
        hits = np.flatnonzero(scores > 0.0)
        if hits.size == 0:
            return []
        # primary key: score descending; secondary: index order (= doc_id ascending)
        order = hits[np.lexsort((hits, -scores[hits]))][:k]
        return [
            RetrievalResult(self._ids[i], float(scores[i]), rank)
            for rank, i in enumerate(order, start=1)
        ]


def build_index(corpus: Corpus | Sequence[Document], **kwargs) -> Index:
    if not isinstance(corpus, Corpus):
        corpus = Corpus(tuple(corpus))
    return Index(corpus, **kwargs)


def retrieve(index: Index, query: str, k: int) -> list[RetrievalResult]:
    return index.retrieve(query, k)


def load_corpus(path: str | Path) -> Corpus:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                docs.append(Document.from_json(json.loads(line)))
            except (KeyError, json.JSONDecodeError) as exc:
                raise CorpusError(f"{path}:{lineno}: malformed corpus record ({exc})") from exc
    return Corpus(tuple(docs))


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in corpus:
            fh.write(json.dumps(doc.to_json(), ensure_ascii=False, sort_keys=True) + "\n")

