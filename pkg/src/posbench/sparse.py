"""Self-contained BM25 retrieval: tokenizer, inverted index, scoring, top-k.

The scoring formula is Okapi BM25 with the non-negative idf variant
``ln(1 + (N - n_t + 0.5) / (n_t + 0.5))``, so very common terms never
contribute negative scores. Query terms are summed in sorted order with
repeated terms grouped (count times the single-occurrence weight), which
keeps scores bit-reproducible. Scoring depends only on term frequencies and
document length, never on token positions.
"""

from __future__ import annotations

import math
import re
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

_INDEX_MAGIC = b"PBIX"
_INDEX_VERSION = 1


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self) -> None:
        if self.k1 < 0:
            raise ValueError(f"k1 must be >= 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError(f"b must be in [0, 1], got {self.b}")


def tokenize(text: str) -> list[str]:
    """Lowercase and split into maximal alphanumeric runs. No stemming."""
    return _TOKEN_RE.findall(text.lower())


class InvertedIndex:
    """Immutable term -> postings index over a fixed corpus.

    Documents are numbered in ascending passage-id order, so postings lists
    are sorted by passage id and ties in search resolve by id without extra
    work.
    """

    def __init__(self, doc_ids: list[str], doc_length_arr: np.ndarray,
                 postings: dict[str, tuple[np.ndarray, np.ndarray]]) -> None:
        self.doc_ids = doc_ids
        self._id_to_idx = {pid: i for i, pid in enumerate(doc_ids)}
        self._doc_length_arr = doc_length_arr
        self._postings = postings
        self._norm_cache: dict[tuple[float, float], np.ndarray] = {}

    @property
    def doc_count(self) -> int:
        return len(self.doc_ids)

    @property
    def avg_doc_length(self) -> float:
        if not self.doc_ids:
            return 0.0
        return float(self._doc_length_arr.mean())

    @property
    def doc_lengths(self) -> dict[str, int]:
        return {pid: int(self._doc_length_arr[i]) for i, pid in enumerate(self.doc_ids)}

    @property
    def terms(self) -> list[str]:
        return list(self._postings)

    def postings_list(self, term: str) -> list[tuple[str, int]]:
        """Postings for a term as (passage_id, term_frequency) pairs."""
        entry = self._postings.get(term)
        if entry is None:
            return []
        idx, tf = entry
        return [(self.doc_ids[i], int(t)) for i, t in zip(idx.tolist(), tf.tolist())]

    def _length_norm(self, params: Bm25Params) -> np.ndarray:
        key = (params.k1, params.b)
        norm = self._norm_cache.get(key)
        if norm is None:
            avg = self.avg_doc_length
            rel = self._doc_length_arr / avg if avg > 0 else np.zeros_like(self._doc_length_arr)
            norm = params.k1 * (1.0 - params.b + params.b * rel)
            self._norm_cache[key] = norm
        return norm

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, InvertedIndex):
            return NotImplemented
        if self.doc_ids != other.doc_ids:
            return False
        if not np.array_equal(self._doc_length_arr, other._doc_length_arr):
            return False
        if set(self._postings) != set(other._postings):
            return False
        return all(
            np.array_equal(self._postings[t][0], other._postings[t][0])
            and np.array_equal(self._postings[t][1], other._postings[t][1])
            for t in self._postings)


def build_index(corpus: Iterable) -> InvertedIndex:
    """Index a corpus of Passage objects or (id, text) pairs."""
    docs: dict[str, str] = {}
    for item in corpus:
        if hasattr(item, "id") and hasattr(item, "text"):
            pid, text = item.id, item.text
        else:
            pid, text = item
        if pid in docs:
            raise ValueError(f"duplicate passage id {pid!r}")
        docs[pid] = text

    doc_ids = sorted(docs)
    lengths = np.zeros(len(doc_ids), dtype=np.float64)
    term_docs: dict[str, list[tuple[int, int]]] = {}
    for i, pid in enumerate(doc_ids):
        tokens = tokenize(docs[pid])
        lengths[i] = len(tokens)
        for term, tf in Counter(tokens).items():
            term_docs.setdefault(term, []).append((i, tf))

    postings = {}
    for term, entries in term_docs.items():
        idx = np.array([e[0] for e in entries], dtype=np.int32)
        tf = np.array([e[1] for e in entries], dtype=np.float64)
        postings[term] = (idx, tf)
    return InvertedIndex(doc_ids, lengths, postings)


def _idf(doc_count: int, doc_freq: int) -> float:
    return math.log(1.0 + (doc_count - doc_freq + 0.5) / (doc_freq + 0.5))


def bm25_score(query_terms: Sequence[str], passage_id: str, index: InvertedIndex,
               params: Bm25Params = Bm25Params()) -> float:
    """Score one document against a tokenized query.

    Terms absent from the document contribute 0; repeated query terms count
    once per occurrence.
    """
    doc_idx = index._id_to_idx.get(passage_id)
    if doc_idx is None:
        raise KeyError(f"unknown passage id {passage_id!r}")
    norm = float(index._length_norm(params)[doc_idx])
    score = 0.0
    for term, qtf in sorted(Counter(query_terms).items()):
        entry = index._postings.get(term)
        if entry is None:
            continue
        idx, tfs = entry
        pos = int(np.searchsorted(idx, doc_idx))
        if pos >= idx.size or idx[pos] != doc_idx:
            continue
        tf = float(tfs[pos])
        w = _idf(index.doc_count, idx.size) * (tf * (params.k1 + 1.0)) / (tf + norm)
        score += w * qtf
    return score


def search(query: str | Sequence[str], index: InvertedIndex,
           params: Bm25Params = Bm25Params(), k: int = 10) -> list[tuple[str, float]]:
    """Top-k documents by BM25, descending score, ties by ascending id.

    Documents sharing no term with the query are excluded. Accepts raw text
    (tokenized here) or a pre-tokenized term sequence.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    terms = tokenize(query) if isinstance(query, str) else list(query)
    n = index.doc_count
    if n == 0 or not terms:
        return []
    norm = index._length_norm(params)
    scores = np.zeros(n, dtype=np.float64)
    touched = np.zeros(n, dtype=bool)
    for term, qtf in sorted(Counter(terms).items()):
        entry = index._postings.get(term)
        if entry is None:
            continue
        idx, tf = entry
        w = _idf(n, idx.size) * (tf * (params.k1 + 1.0)) / (tf + norm[idx])
        if qtf != 1:
            w = w * float(qtf)
        scores[idx] += w
        touched[idx] = True

    cand = np.nonzero(touched)[0]
    if cand.size == 0:
        return []
    if cand.size > k:
        cscores = scores[cand]
        kth = np.partition(cscores, cand.size - k)[cand.size - k]
        above = cand[cscores > kth]
        equal = np.sort(cand[cscores == kth])
        sel = np.concatenate([above, equal[: k - above.size]])
    else:
        sel = cand
    ordered = sorted(sel.tolist(), key=lambda i: (-scores[i], i))
    return [(index.doc_ids[i], float(scores[i])) for i in ordered]


def save_index(index: InvertedIndex, path: str | Path) -> None:
    """Persist the index: little-endian binary with magic and version."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as f:
        f.write(_INDEX_MAGIC)
        f.write(struct.pack("<I", _INDEX_VERSION))
        f.write(struct.pack("<I", index.doc_count))
        for i, pid in enumerate(index.doc_ids):
            raw = pid.encode("utf-8")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", int(index._doc_length_arr[i])))
        terms = sorted(index._postings)
        f.write(struct.pack("<I", len(terms)))
        for term in terms:
            raw = term.encode("utf-8")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            idx, tf = index._postings[term]
            f.write(struct.pack("<I", idx.size))
            f.write(idx.astype("<i4").tobytes())
            f.write(tf.astype("<i4").tobytes())


def load_index(path: str | Path) -> InvertedIndex:
    with Path(path).open("rb") as f:
        magic = f.read(4)
        if magic != _INDEX_MAGIC:
            raise ValueError(f"{path}: not an index file (bad magic {magic!r})")
        (version,) = struct.unpack("<I", f.read(4))
        if version != _INDEX_VERSION:
            raise ValueError(f"{path}: unsupported index version {version}")
        (doc_count,) = struct.unpack("<I", f.read(4))
        doc_ids = []
        lengths = np.zeros(doc_count, dtype=np.float64)
        for i in range(doc_count):
            (slen,) = struct.unpack("<H", f.read(2))
            doc_ids.append(f.read(slen).decode("utf-8"))
            (lengths[i],) = struct.unpack("<I", f.read(4))
        (n_terms,) = struct.unpack("<I", f.read(4))
        postings = {}
        for _ in range(n_terms):
            (slen,) = struct.unpack("<H", f.read(2))
            term = f.read(slen).decode("utf-8")
            (df,) = struct.unpack("<I", f.read(4))
            idx = np.frombuffer(f.read(4 * df), dtype="<i4").astype(np.int32)
            tf = np.frombuffer(f.read(4 * df), dtype="<i4").astype(np.float64)
            postings[term] = (idx, tf)
    return InvertedIndex(doc_ids, lengths, postings)
