"""TREC-format file I/O: ranked run files and relevance judgments (qrels).

Run files carry one line per retrieved document:

    <qid> Q0 <pid> <rank> <score> <tag>

with ranks starting at 1 and scores printed with 6 decimal places. Qrels
carry one line per relevant (query, passage) pair: ``<qid> 0 <pid> 1``.

In memory a run is ``dict[qid, list[(pid, rank, score)]]`` ordered by rank,
and qrels are ``dict[qid, set[pid]]``. Scores in a run must be
non-increasing with rank and ranks contiguous from 1; ``read_run`` enforces
both.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

Run = dict[str, list[tuple[str, int, float]]]
Qrels = dict[str, set[str]]


class RunFormatError(ValueError):
    """A run or qrels file violates the expected format."""


def from_ranked(ranked_by_query: dict[str, Sequence[tuple[str, float]]]) -> Run:
    """Assign contiguous 1-based ranks to per-query (pid, score) lists."""
    run: Run = {}
    for qid, ranked in ranked_by_query.items():
        run[qid] = [(pid, rank, float(score)) for rank, (pid, score) in enumerate(ranked, 1)]
    return run


def monotone_scores(entries: list[tuple[str, int, float]]) -> list[tuple[str, int, float]]:
    """Clamp scores so they never increase with rank; rank order is kept.

    Needed when a reranked head block is followed by first-stage tail scores
    on a different scale.
    """
    out = []
    floor = None
    for pid, rank, score in entries:
        if floor is not None and score > floor:
            score = floor
        floor = score
        out.append((pid, rank, score))
    return out


def write_run(run: Run, path: str | Path, tag: str = "posbench") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for qid in sorted(run):
            for pid, rank, score in sorted(run[qid], key=lambda e: e[1]):
                f.write(f"{qid} Q0 {pid} {rank} {score:.6f} {tag}\n")


def read_run(path: str | Path) -> Run:
    """Parse a run file, validating rank contiguity and score monotonicity."""
    run: Run = {}
    with Path(path).open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 6:
                raise RunFormatError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
            qid, _, pid, rank, score, _ = parts
            run.setdefault(qid, []).append((pid, int(rank), float(score)))
    for qid, entries in run.items():
        entries.sort(key=lambda e: e[1])
        for i, (pid, rank, score) in enumerate(entries, 1):
            if rank != i:
                raise RunFormatError(f"query {qid}: ranks not contiguous at {rank}")
            if i > 1 and score > entries[i - 2][2]:
                raise RunFormatError(f"query {qid}: score increases at rank {rank}")
    return run


def write_qrels(qrels: Qrels, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for qid in sorted(qrels):
            for pid in sorted(qrels[qid]):
                f.write(f"{qid} 0 {pid} 1\n")


def read_qrels(path: str | Path) -> Qrels:
    qrels: Qrels = {}
    with Path(path).open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise RunFormatError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            qid, _, pid, rel = parts
            if int(rel) > 0:
                qrels.setdefault(qid, set()).add(pid)
    return qrels
