"""Benchmark construction from span-annotated QA data.

Parses SQuAD-v2-style JSON into (question, passage, answer_start) triples,
deduplicates passages into a retrieval corpus, buckets queries by the
character offset of their answer span, samples query subsets, and reads and
writes the on-disk benchmark bundle (corpus.jsonl / queries.jsonl /
qrels.txt / bins.json).

A "word" throughout this package is a maximal run of non-whitespace
characters; word counts, length filters, and chunk spans all use it.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from . import trec

SEGMENT_TAGS = ("beginning", "middle", "end")

_WORD_RE = re.compile(r"\S+")
_SENTENCE_END = ".!?"
_PARAGRAPH_GAP_RE = re.compile(r"\n[^\S\n]*\n")


class SquadParseError(ValueError):
    """Raised when SQuAD input is not valid JSON or violates the schema."""


class OffsetOutOfRangeError(ValueError):
    """An answer offset falls outside the bin scheme's range."""


@dataclass(frozen=True)
class Passage:
    """One unit of the retrieval corpus."""

    id: str
    text: str
    word_count: int = field(init=False)

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError(f"passage {self.id!r} has empty text")
        object.__setattr__(self, "word_count", len(self.text.split()))


@dataclass(frozen=True)
class PositionedQuery:
    """A question linked to its source passage, plus positional metadata.

    Exactly one of ``answer_start`` (character offset) or ``segment_tags``
    (subset of beginning/middle/end) is set, depending on the benchmark
    family.
    """

    id: str
    text: str
    relevant_passage_ids: tuple[str, ...]
    answer_start: int | None = None
    segment_tags: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if not self.relevant_passage_ids:
            raise ValueError(f"query {self.id!r} has no relevant passages")
        if self.answer_start is not None and self.segment_tags is not None:
            raise ValueError(f"query {self.id!r} carries both an offset and segment tags")
        if self.answer_start is not None and self.answer_start < 0:
            raise ValueError(f"query {self.id!r} has negative answer_start")
        if self.segment_tags is not None:
            if not self.segment_tags:
                raise ValueError(f"query {self.id!r} has empty segment tags")
            bad = set(self.segment_tags) - set(SEGMENT_TAGS)
            if bad:
                raise ValueError(f"query {self.id!r} has unknown segment tags {sorted(bad)}")


@dataclass(frozen=True)
class BinScheme:
    """Offset bins given by ordered integer edges.

    With ``inclusive_boundaries`` every bin is a closed interval, so an
    offset equal to an interior edge belongs to both adjacent bins;
    otherwise bins are half-open (last bin closed) and partition the range.
    """

    edges: tuple[int, ...]
    inclusive_boundaries: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "edges", tuple(int(e) for e in self.edges))
        if len(self.edges) < 2:
            raise ValueError("bin scheme needs at least two edges")
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise ValueError(f"bin edges must be strictly increasing: {self.edges}")
        if self.edges[0] < 0:
            raise ValueError("bin edges must be non-negative")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(f"{e}+" for e in self.edges[:-1])

    @classmethod
    def default(cls, max_edge: int, inclusive_boundaries: bool = True,
                interior: Sequence[int] = (0, 100, 200, 300, 400, 500)) -> "BinScheme":
        """Standard six-bin scheme, truncated if the data tops out early."""
        edges = [e for e in interior if e < max_edge] + [max_edge]
        if len(edges) < 2:
            edges = [0, max(max_edge, 1)]
        return cls(edges=tuple(edges), inclusive_boundaries=inclusive_boundaries)

    def to_json(self) -> dict:
        return {"edges": list(self.edges), "inclusive_boundaries": self.inclusive_boundaries}

    @classmethod
    def from_json(cls, data: dict) -> "BinScheme":
        return cls(edges=tuple(data["edges"]),
                   inclusive_boundaries=bool(data["inclusive_boundaries"]))


@dataclass
class Benchmark:
    """A self-contained evaluation unit: corpus + queries (+ bin scheme)."""

    name: str
    corpus: list[Passage]
    queries: list[PositionedQuery]
    bin_scheme: BinScheme | None = None

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        pids = {}
        for p in self.corpus:
            if p.id in pids:
                raise ValueError(f"duplicate passage id {p.id!r}")
            pids[p.id] = p
        seen_q = set()
        for q in self.queries:
            if q.id in seen_q:
                raise ValueError(f"duplicate query id {q.id!r}")
            seen_q.add(q.id)
            for pid in q.relevant_passage_ids:
                if pid not in pids:
                    raise ValueError(f"query {q.id!r} links to unknown passage {pid!r}")
            if q.answer_start is not None:
                linked = pids[q.relevant_passage_ids[0]]
                if q.answer_start >= len(linked.text):
                    raise ValueError(
                        f"query {q.id!r}: answer_start {q.answer_start} beyond passage "
                        f"length {len(linked.text)}")

    def passages_by_id(self) -> dict[str, Passage]:
        return {p.id: p for p in self.corpus}

    def qrels(self) -> trec.Qrels:
        return {q.id: set(q.relevant_passage_ids) for q in self.queries}


@dataclass(frozen=True)
class ChunkSpan:
    """A chunk's word-level location: words m..n (inclusive) of z total."""

    z: int
    m: int
    n: int

    def __post_init__(self) -> None:
        if not (0 <= self.m <= self.n < self.z):
            raise ValueError(f"invalid chunk span m={self.m} n={self.n} z={self.z}")


SquadTriple = tuple[str, str, int]


def parse_squad(raw_json: bytes | str) -> tuple[list[SquadTriple], int]:
    """Extract answerable (question, passage_text, answer_start) triples.

    Unanswerable questions (``is_impossible``) are removed. The first listed
    answer's offset is authoritative. Returns the triples plus the count of
    answerable records that had to be skipped for lacking any answer entry.
    """
    try:
        doc = json.loads(raw_json)
    except json.JSONDecodeError as e:
        raise SquadParseError(f"malformed JSON at line {e.lineno} column {e.colno}: {e.msg}") from e

    def fail(path: str, msg: str) -> SquadParseError:
        return SquadParseError(f"{path}: {msg}")

    if not isinstance(doc, dict) or not isinstance(doc.get("data"), list):
        raise fail("$", "expected object with a 'data' list")

    triples: list[SquadTriple] = []
    skipped = 0
    for ai, article in enumerate(doc["data"]):
        apath = f"data[{ai}]"
        paragraphs = article.get("paragraphs") if isinstance(article, dict) else None
        if not isinstance(paragraphs, list):
            raise fail(apath, "missing 'paragraphs' list")
        for pi, para in enumerate(paragraphs):
            ppath = f"{apath}.paragraphs[{pi}]"
            if not isinstance(para, dict) or not isinstance(para.get("context"), str):
                raise fail(ppath, "missing 'context' string")
            qas = para.get("qas")
            if not isinstance(qas, list):
                raise fail(ppath, "missing 'qas' list")
            context = para["context"]
            for qi, qa in enumerate(qas):
                qpath = f"{ppath}.qas[{qi}]"
                if not isinstance(qa, dict) or not isinstance(qa.get("question"), str):
                    raise fail(qpath, "missing 'question' string")
                if qa.get("is_impossible", False):
                    continue
                answers = qa.get("answers")
                if not isinstance(answers, list) or not answers:
                    skipped += 1
                    continue
                first = answers[0]
                if not isinstance(first, dict) or not isinstance(first.get("answer_start"), int):
                    raise fail(f"{qpath}.answers[0]", "missing integer 'answer_start'")
                triples.append((qa["question"], context, first["answer_start"]))
    return triples, skipped


def passage_id_for(text: str) -> str:
    return "p" + hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def dedupe_passages(triples: Iterable[SquadTriple], name: str = "squad-posq") -> Benchmark:
    """Build a Benchmark whose corpus holds each distinct passage text once.

    Dedup is exact string equality with no normalization; passage ids are
    content hashes and query ids follow input order, so rebuilding from the
    same triples is deterministic.
    """
    by_text: dict[str, str] = {}
    corpus: list[Passage] = []
    queries: list[PositionedQuery] = []
    for i, (question, passage_text, answer_start) in enumerate(triples):
        pid = by_text.get(passage_text)
        if pid is None:
            pid = passage_id_for(passage_text)
            by_text[passage_text] = pid
            corpus.append(Passage(id=pid, text=passage_text))
        queries.append(PositionedQuery(
            id=f"q{i:06d}",
            text=question,
            relevant_passage_ids=(pid,),
            answer_start=answer_start,
        ))
    return Benchmark(name=name, corpus=corpus, queries=queries)


def assign_bin(answer_start: int, scheme: BinScheme) -> tuple[str, ...]:
    """Bin labels containing the offset, in scheme order.

    Inclusive schemes put an offset equal to an interior edge in both
    adjacent bins; exclusive schemes yield exactly one label.
    """
    edges = scheme.edges
    if answer_start < 0 or answer_start > edges[-1]:
        raise OffsetOutOfRangeError(
            f"offset {answer_start} outside [0, {edges[-1]}]")
    labels = []
    for i, label in enumerate(scheme.labels):
        lo, hi = edges[i], edges[i + 1]
        if scheme.inclusive_boundaries:
            if lo <= answer_start <= hi:
                labels.append(label)
        else:
            last = i == len(edges) - 2
            if lo <= answer_start < hi or (last and answer_start == hi):
                labels.append(label)
    return tuple(labels)


def sample_tiny(benchmark: Benchmark, n: int, seed: int) -> Benchmark:
    """Uniform query sample without replacement; the corpus stays intact."""
    if n > len(benchmark.queries):
        raise ValueError(f"cannot sample {n} of {len(benchmark.queries)} queries")
    rng = random.Random(seed)
    sampled = rng.sample(benchmark.queries, n)
    return Benchmark(
        name=f"{benchmark.name}-tiny",
        corpus=benchmark.corpus,
        queries=sampled,
        bin_scheme=benchmark.bin_scheme,
    )


def filter_by_length(passages: Iterable[Passage], min_words: int, max_words: int) -> list[Passage]:
    """Keep passages with min_words <= word_count <= max_words (inclusive)."""
    if min_words > max_words:
        raise ValueError(f"min_words {min_words} > max_words {max_words}")
    return [p for p in passages if min_words <= p.word_count <= max_words]


def word_spans(text: str) -> list[tuple[int, int]]:
    """Character [start, end) span of every whitespace-delimited word."""
    return [(m.start(), m.end()) for m in _WORD_RE.finditer(text)]


def _boundary_levels(text: str, spans: list[tuple[int, int]]) -> list[int]:
    # Separator strength before word p (p >= 1): 0 paragraph break,
    # 1 newline, 2 sentence-final punctuation + space, 3 plain space.
    levels = []
    for p in range(1, len(spans)):
        gap = text[spans[p - 1][1]:spans[p][0]]
        if _PARAGRAPH_GAP_RE.search(gap):
            levels.append(0)
        elif "\n" in gap:
            levels.append(1)
        elif text[spans[p - 1][1] - 1] in _SENTENCE_END:
            levels.append(2)
        else:
            levels.append(3)
    return levels


def chunk_words(text: str, chunk_size: int) -> list[ChunkSpan]:
    """Split text into word-budgeted chunks at the strongest separators.

    Recursively splits on paragraph breaks, then newlines, then sentence
    ends, then spaces, until no chunk exceeds ``chunk_size`` words, greedily
    regrouping adjacent pieces that fit together. The returned spans are
    contiguous, non-overlapping, ordered, and cover every word.
    """
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    spans = word_spans(text)
    z = len(spans)
    if z == 0:
        return []
    levels = _boundary_levels(text, spans)

    def split(lo: int, hi: int, level: int) -> list[tuple[int, int]]:
        if hi - lo <= chunk_size:
            return [(lo, hi)]
        if level > 3:  # unreachable in practice: every word gap is at least a space
            return [(i, min(i + chunk_size, hi)) for i in range(lo, hi, chunk_size)]
        points = [p for p in range(lo + 1, hi) if levels[p - 1] == level]
        if not points:
            return split(lo, hi, level + 1)
        bounds = [lo, *points, hi]
        out: list[tuple[int, int]] = []
        acc: tuple[int, int] | None = None
        for a, b in zip(bounds, bounds[1:]):
            if b - a > chunk_size:
                if acc is not None:
                    out.append(acc)
                    acc = None
                out.extend(split(a, b, level + 1))
            elif acc is not None and b - acc[0] <= chunk_size:
                acc = (acc[0], b)
            else:
                if acc is not None:
                    out.append(acc)
                acc = (a, b)
        if acc is not None:
            out.append(acc)
        return out

    return [ChunkSpan(z=z, m=lo, n=hi - 1) for lo, hi in split(0, z, 0)]


def chunk_texts(text: str, chunks: Sequence[ChunkSpan]) -> list[str]:
    """Source text of each chunk, sliced on word boundaries."""
    spans = word_spans(text)
    return [text[spans[c.m][0]:spans[c.n][1]] for c in chunks]


def histogram_answer_starts(benchmark: Benchmark, bucket_width: int) -> list[tuple[int, int]]:
    """Counts of answer offsets per fixed-width bucket [k*w, (k+1)*w)."""
    if bucket_width < 1:
        raise ValueError("bucket_width must be >= 1")
    offsets = []
    for q in benchmark.queries:
        if q.answer_start is None:
            raise ValueError(f"query {q.id!r} has no answer_start (tag-style benchmark)")
        offsets.append(q.answer_start)
    if not offsets:
        return []
    counts: dict[int, int] = {}
    for off in offsets:
        bucket = (off // bucket_width) * bucket_width
        counts[bucket] = counts.get(bucket, 0) + 1
    top = max(counts)
    return [(b, counts.get(b, 0)) for b in range(0, top + bucket_width, bucket_width)]


def load_passages_jsonl(path: str | Path) -> list[Passage]:
    """Read a generic passage file: one {"id", "text"} object per line."""
    passages = []
    with Path(path).open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{lineno}: malformed JSON: {e.msg}") from e
            if "id" not in obj or "text" not in obj:
                raise ValueError(f"{path}:{lineno}: expected fields 'id' and 'text'")
            passages.append(Passage(id=str(obj["id"]), text=obj["text"]))
    return passages


def save_benchmark(benchmark: Benchmark, out_dir: str | Path) -> None:
    """Write the bundle: corpus.jsonl, queries.jsonl, qrels.txt, bins.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "corpus.jsonl").open("w", encoding="utf-8") as f:
        for p in benchmark.corpus:
            f.write(json.dumps({"id": p.id, "text": p.text}, ensure_ascii=False) + "\n")
    with (out / "queries.jsonl").open("w", encoding="utf-8") as f:
        for q in benchmark.queries:
            obj: dict = {"id": q.id, "text": q.text,
                         "relevant_passage_ids": list(q.relevant_passage_ids)}
            if q.answer_start is not None:
                obj["answer_start"] = q.answer_start
            if q.segment_tags is not None:
                obj["segment_tags"] = list(q.segment_tags)
            f.write(json.dumps(obj, ensure_ascii=False) + "\n")
    trec.write_qrels(benchmark.qrels(), out / "qrels.txt")
    if benchmark.bin_scheme is not None:
        (out / "bins.json").write_text(
            json.dumps(benchmark.bin_scheme.to_json(), indent=2) + "\n", encoding="utf-8")


def load_benchmark(bundle_dir: str | Path, name: str | None = None) -> Benchmark:
    bundle = Path(bundle_dir)
    corpus = load_passages_jsonl(bundle / "corpus.jsonl")
    queries = []
    with (bundle / "queries.jsonl").open("r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            queries.append(PositionedQuery(
                id=obj["id"],
                text=obj["text"],
                relevant_passage_ids=tuple(obj["relevant_passage_ids"]),
                answer_start=obj.get("answer_start"),
                segment_tags=tuple(obj["segment_tags"]) if "segment_tags" in obj else None,
            ))
    scheme = None
    bins_path = bundle / "bins.json"
    if bins_path.exists():
        scheme = BinScheme.from_json(json.loads(bins_path.read_text(encoding="utf-8")))
    return Benchmark(name=name or bundle.name, corpus=corpus, queries=queries, bin_scheme=scheme)
