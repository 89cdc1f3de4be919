"""Search backends: a local BM25 inverted index and an external HTTP client.

Both present the same hit shape so the query pipeline can treat engines as
black boxes. Index statistics keep stopwords (document lengths stay honest);
query strings are stopword-stripped at search time, so stopword postings are
never consulted in practice.
"""

from __future__ import annotations

import json
import math
import os
import socket
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass, field

from .errors import (
    BackendTimeout,
    BackendUnavailable,
    DuplicateDoc,
    MalformedResponse,
)
from .profile import atomic_write, tokenize

BM25_K1 = 1.2
BM25_B = 0.75
SNIPPET_CHARS = 200


@dataclass
class Document:
    doc_id: str
    title: str
    body: str = ""


@dataclass
class Hit:
    """One scored result, shared by the local and external backends."""

    doc_id: str
    title: str
    snippet: str
    score: float


def _snippet(body: str) -> str:
    return " ".join(body.split())[:SNIPPET_CHARS]


@dataclass
class Index:
    """BM25 inverted index. Treat as immutable once built; rebuild to update."""

    n_docs: int = 0
    total_len: int = 0
    doc_len: dict[str, int] = field(default_factory=dict)
    postings: dict[str, dict[str, int]] = field(default_factory=dict)
    meta: dict[str, tuple[str, str]] = field(default_factory=dict)  # doc_id -> (title, snippet)

    @property
    def avgdl(self) -> float:
        return self.total_len / self.n_docs if self.n_docs else 0.0

    def add_document(self, doc: Document) -> None:
        if doc.doc_id in self.doc_len:
            raise DuplicateDoc(doc.doc_id)
        tokens = tokenize(f"{doc.title} {doc.body}", drop_stopwords=False)
        self.doc_len[doc.doc_id] = len(tokens)
        self.total_len += len(tokens)
        self.n_docs += 1
        for token in tokens:
            bucket = self.postings.setdefault(token, {})
            bucket[doc.doc_id] = bucket.get(doc.doc_id, 0) + 1
        self.meta[doc.doc_id] = (doc.title, _snippet(doc.body))


def build_index(corpus) -> Index:
    """Index a document iterable; raises DuplicateDoc on repeated ids."""
    index = Index()
    for doc in corpus:
        index.add_document(doc)
    return index


def bm25_idf(n_docs: int, df: int) -> float:
    return math.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))


def search(index: Index, query_string: str, k: int) -> list[tuple[str, float]]:
    """Exact BM25 (k1=1.2, b=0.75) over the query terms, top-k.

    Only documents containing at least one query term are returned, sorted by
    score descending then doc_id ascending. The query is tokenized with
    stopword removal, mirroring how the pipeline builds sub-queries.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if index.n_docs == 0:
        return []
    scores: dict[str, float] = {}
    avgdl = index.avgdl
    for term in tokenize(query_string):
        bucket = index.postings.get(term)
        if not bucket:
            continue
        idf = bm25_idf(index.n_docs, len(bucket))
        for doc_id in sorted(bucket):
            tf = bucket[doc_id]
            dl = index.doc_len[doc_id]
            denom = tf + BM25_K1 * (1.0 - BM25_B + BM25_B * dl / avgdl)
            scores[doc_id] = scores.get(doc_id, 0.0) + idf * (tf * (BM25_K1 + 1.0)) / denom
    ranked = sorted(scores.items(), key=lambda pair: (-pair[1], pair[0]))
    return ranked[:k]


# --- corpus loading -------------------------------------------------------


def read_corpus_dir(path: str) -> list[Document]:
    """Directory corpus: filename (sans extension) = doc_id, first line = title."""
    docs = []
    for name in sorted(os.listdir(path)):
        full = os.path.join(path, name)
        if not os.path.isfile(full) or name.startswith("."):
            continue
        with open(full, encoding="utf-8") as handle:
            lines = handle.read().splitlines()
        title = lines[0] if lines else ""
        body = "\n".join(lines[1:])
        docs.append(Document(doc_id=os.path.splitext(name)[0], title=title, body=body))
    return docs


def read_corpus_jsonl(path: str) -> list[Document]:
    """JSONL corpus: one {"doc_id", "title", "body"} record per line."""
    docs = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            docs.append(Document(doc_id=str(record["doc_id"]),
                                 title=str(record.get("title", "")),
                                 body=str(record.get("body", ""))))
    return docs


def read_corpus(path: str) -> list[Document]:
    return read_corpus_dir(path) if os.path.isdir(path) else read_corpus_jsonl(path)


def index_to_json(index: Index) -> str:
    body = {
        "n_docs": index.n_docs,
        "total_len": index.total_len,
        "doc_len": index.doc_len,
        "postings": index.postings,
        "meta": {d: list(tm) for d, tm in index.meta.items()},
    }
    return json.dumps(body, sort_keys=True, separators=(",", ":"))


def index_from_json(text) -> Index:
    data = json.loads(text) if isinstance(text, (str, bytes)) else text
    return Index(
        n_docs=int(data["n_docs"]),
        total_len=int(data["total_len"]),
        doc_len={d: int(v) for d, v in data["doc_len"].items()},
        postings={t: {d: int(tf) for d, tf in b.items()} for t, b in data["postings"].items()},
        meta={d: (tm[0], tm[1]) for d, tm in data["meta"].items()},
    )


def save_index(index: Index, path: str) -> None:
    atomic_write(path, index_to_json(index))


def load_index(path: str) -> Index:
    with open(path, encoding="utf-8") as handle:
        return index_from_json(handle.read())


# --- backend adapters ------------------------------------------------------


@dataclass
class LocalBackend:
    """BM25 index behind the common hit interface."""

    index: Index
    name: str = "local"

    def search(self, query_string: str, k: int) -> list[Hit]:
        hits = []
        for doc_id, score in search(self.index, query_string, k):
            title, snippet = self.index.meta.get(doc_id, ("", ""))
            hits.append(Hit(doc_id=doc_id, title=title, snippet=snippet, score=score))
        return hits


@dataclass
class ExternalBackend:
    """Client for an external search service speaking the documented wire schema.

    GET {endpoint}/search?q=...&k=... must return
    {"results": [{"id", "title", "snippet", "score"}, ...]}.
    One request per call; retries are the caller's policy.
    """

    endpoint: str
    deadline: float = 5.0
    name: str = "external"

    def search(self, query_string: str, k: int) -> list[Hit]:
        return external_search(self, query_string, k)


def external_search(client: ExternalBackend, query_string: str, k: int) -> list[Hit]:
    query = urllib.parse.urlencode({"q": query_string, "k": k})
    url = f"{client.endpoint.rstrip('/')}/search?{query}"
    try:
        with urllib.request.urlopen(url, timeout=client.deadline) as response:
            status = response.status
            payload = response.read()
    except socket.timeout as exc:
        raise BackendTimeout(f"no answer from {client.endpoint} within {client.deadline}s") from exc
    except urllib.error.HTTPError as exc:
        if exc.code >= 500:
            raise BackendUnavailable(f"{client.endpoint} answered {exc.code}") from exc
        raise MalformedResponse(f"{client.endpoint} answered {exc.code}") from exc
    except urllib.error.URLError as exc:
        if isinstance(exc.reason, socket.timeout):
            raise BackendTimeout(
                f"no answer from {client.endpoint} within {client.deadline}s") from exc
        raise BackendUnavailable(f"cannot reach {client.endpoint}: {exc.reason}") from exc

    if status >= 500:
        raise BackendUnavailable(f"{client.endpoint} answered {status}")
    try:
        data = json.loads(payload.decode("utf-8"))
        results = data["results"]
        hits = [
            Hit(doc_id=str(r["id"]), title=str(r.get("title", "")),
                snippet=str(r.get("snippet", "")), score=float(r["score"]))
            for r in results
        ]
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedResponse(f"bad body from {client.endpoint}: {exc}") from exc
    return hits[:k]
