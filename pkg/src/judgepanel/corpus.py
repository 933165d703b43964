"""TREC-style corpus files: qrels, runs, queries, and passages.

Parsers are pure functions over line streams. They accept either a whole
string or any iterable of lines (such as an open text file) and raise
:class:`ParseError` naming the offending line on malformed input. Writers
emit canonical, deterministically sorted text so that parse(write(x))
round-trips.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path


class ParseError(ValueError):
    """A malformed record in a corpus file, tagged with its line number."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class RelevanceLabel(IntEnum):
    """Graded relevance on the four-point TREC DL scale."""

    IRRELEVANT = 0
    RELATED = 1
    HIGHLY_RELEVANT = 2
    PERFECTLY_RELEVANT = 3

    @classmethod
    def from_int(cls, value: int, *, clamp: bool = False) -> "RelevanceLabel":
        """Validate an integer grade; with ``clamp`` map out-of-range values
        onto the nearest end of the scale (negatives to 0, >3 to 3)."""
        if clamp:
            value = min(max(int(value), 0), 3)
        try:
            return cls(value)
        except ValueError:
            raise ValueError(f"relevance label must be in 0..3, got {value!r}") from None


LABEL_VALUES = tuple(int(v) for v in RelevanceLabel)


@dataclass(frozen=True)
class Query:
    query_id: str
    text: str

    def __post_init__(self):
        if not self.query_id:
            raise ValueError("query_id must be non-empty")
        if not self.text:
            raise ValueError(f"query {self.query_id!r} has empty text")


@dataclass(frozen=True)
class Passage:
    doc_id: str
    text: str

    def __post_init__(self):
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        if not self.text:
            raise ValueError(f"passage {self.doc_id!r} has empty text")


@dataclass
class QrelsSet:
    """Relevance judgments keyed by (query_id, doc_id).

    ``source_tag`` records provenance: "human" for gold files, or a panel
    identifier for generated judgments.
    """

    entries: dict[tuple[str, str], RelevanceLabel] = field(default_factory=dict)
    source_tag: str = "human"

    def add(self, query_id: str, doc_id: str, label: int, *, clamp: bool = False) -> None:
        key = (query_id, doc_id)
        if key in self.entries:
            raise ValueError(f"duplicate qrels key {key}")
        self.entries[key] = RelevanceLabel.from_int(label, clamp=clamp)

    def __len__(self) -> int:
        return len(self.entries)

    def query_ids(self) -> list[str]:
        return sorted({qid for qid, _ in self.entries})

    def for_query(self, query_id: str) -> dict[str, RelevanceLabel]:
        return {did: lab for (qid, did), lab in self.entries.items() if qid == query_id}

    def label_histogram(self) -> dict[int, int]:
        hist = {v: 0 for v in LABEL_VALUES}
        for label in self.entries.values():
            hist[int(label)] += 1
        return hist


@dataclass
class RunRanking:
    """One retrieval system's ranked output: per query, (doc_id, score)
    pairs ordered by descending score with ties broken by doc_id."""

    run_tag: str
    rankings: dict[str, list[tuple[str, float]]] = field(default_factory=dict)

    def ranked_docs(self, query_id: str) -> list[str]:
        return [doc_id for doc_id, _ in self.rankings.get(query_id, [])]


@dataclass(frozen=True)
class DatasetStats:
    n_queries: int
    n_passages: int
    n_qrels: int
    label_histogram: dict[int, int]


def _iter_lines(stream: str | Iterable[str]) -> Iterator[tuple[int, str]]:
    lines = stream.splitlines() if isinstance(stream, str) else stream
    for line_no, raw in enumerate(lines, start=1):
        yield line_no, raw.rstrip("\r\n")


def parse_qrels(
    stream: str | Iterable[str],
    *,
    source_tag: str = "human",
    clamp: bool = False,
    lenient: bool = False,
) -> QrelsSet:
    """Parse a qrels stream: ``<qid> 0 <docid> <label>``, whitespace-separated.

    Labels outside 0..3 are an error unless ``clamp`` is set. With
    ``lenient``, malformed lines are skipped instead of raising; duplicate
    keys always raise.
    """
    qrels = QrelsSet(source_tag=source_tag)
    for line_no, line in _iter_lines(stream):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) < 4:
            if lenient:
                continue
            raise ParseError(f"expected at least 4 fields, got {len(fields)}: {line!r}", line_no)
        qid, _, doc_id, label_text = fields[0], fields[1], fields[2], fields[3]
        try:
            label = RelevanceLabel.from_int(int(label_text), clamp=clamp)
        except ValueError:
            if lenient:
                continue
            message = (
                f"label {label_text!r} is not an integer"
                if not label_text.lstrip("+-").isdigit()
                else f"label {label_text} outside 0..3"
            )
            raise ParseError(message, line_no) from None
        try:
            qrels.add(qid, doc_id, label)
        except ValueError as exc:
            raise ParseError(str(exc), line_no) from None
    return qrels


def write_qrels(qrels: QrelsSet) -> str:
    """Serialize to qrels text, sorted by (query_id, doc_id)."""
    lines = [
        f"{qid} 0 {doc_id} {int(label)}"
        for (qid, doc_id), label in sorted(qrels.entries.items())
    ]
    return "".join(line + "\n" for line in lines)


def parse_run(stream: str | Iterable[str], *, lenient: bool = False) -> RunRanking:
    """Parse a TREC run stream: ``<qid> Q0 <docid> <rank> <score> <tag>``.

    Per-query lists are sorted by descending score, ties broken by
    ascending doc_id, so shuffled input parses to the same ranking.
    """
    run_tag: str | None = None
    per_query: dict[str, dict[str, float]] = {}
    for line_no, line in _iter_lines(stream):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 6:
            if lenient:
                continue
            raise ParseError(f"expected 6 fields, got {len(fields)}: {line!r}", line_no)
        qid, _, doc_id, _, score_text, tag = fields
        try:
            score = float(score_text)
        except ValueError:
            if lenient:
                continue
            raise ParseError(f"score {score_text!r} is not a number", line_no) from None
        if not math.isfinite(score):
            if lenient:
                continue
            raise ParseError(f"score {score_text!r} is not finite", line_no)
        if run_tag is None:
            run_tag = tag
        elif tag != run_tag:
            raise ParseError(f"mixed run tags {run_tag!r} and {tag!r}", line_no)
        docs = per_query.setdefault(qid, {})
        if doc_id in docs:
            raise ParseError(f"duplicate doc {doc_id!r} for query {qid!r}", line_no)
        docs[doc_id] = score
    if run_tag is None:
        raise ParseError("empty run file")
    rankings = {
        qid: sorted(docs.items(), key=lambda item: (-item[1], item[0]))
        for qid, docs in per_query.items()
    }
    return RunRanking(run_tag=run_tag, rankings=rankings)


def write_run(run: RunRanking) -> str:
    """Serialize a run with 1-based ranks recomputed from the stored order."""
    out = []
    for qid in sorted(run.rankings):
        for rank, (doc_id, score) in enumerate(run.rankings[qid], start=1):
            out.append(f"{qid} Q0 {doc_id} {rank} {score} {run.run_tag}\n")
    return "".join(out)


def _parse_tsv(stream: str | Iterable[str], kind: str) -> dict[str, str]:
    records: dict[str, str] = {}
    for line_no, line in _iter_lines(stream):
        if not line.strip():
            continue
        parts = line.split("\t", 1)
        if len(parts) != 2:
            raise ParseError(f"expected '<id>\\t<text>', got {line!r}", line_no)
        rec_id, text = parts
        if not rec_id:
            raise ParseError(f"empty {kind} id", line_no)
        if not text:
            raise ParseError(f"empty text for {kind} {rec_id!r}", line_no)
        if rec_id in records:
            raise ParseError(f"duplicate {kind} id {rec_id!r}", line_no)
        records[rec_id] = text
    return records


def parse_queries(stream: str | Iterable[str]) -> dict[str, Query]:
    """Parse tab-separated ``<id>\\t<text>`` query records, keyed by id."""
    return {qid: Query(qid, text) for qid, text in _parse_tsv(stream, "query").items()}


def parse_passages(stream: str | Iterable[str]) -> dict[str, Passage]:
    """Parse tab-separated ``<id>\\t<text>`` passage records, keyed by id."""
    return {did: Passage(did, text) for did, text in _parse_tsv(stream, "passage").items()}


def _write_tsv(records: Iterable[tuple[str, str]]) -> str:
    out = []
    for rec_id, text in sorted(records):
        if "\n" in text or "\r" in text:
            raise ValueError(f"text for {rec_id!r} contains a newline; cannot serialize")
        out.append(f"{rec_id}\t{text}\n")
    return "".join(out)


def write_queries(queries: Mapping[str, Query] | Iterable[Query]) -> str:
    items = queries.values() if isinstance(queries, Mapping) else queries
    return _write_tsv((q.query_id, q.text) for q in items)


def write_passages(passages: Mapping[str, Passage] | Iterable[Passage]) -> str:
    items = passages.values() if isinstance(passages, Mapping) else passages
    return _write_tsv((p.doc_id, p.text) for p in items)


def load_qrels(path: str | Path, **kwargs) -> QrelsSet:
    with open(path, encoding="utf-8") as handle:
        return parse_qrels(handle, **kwargs)


def load_run(path: str | Path, **kwargs) -> RunRanking:
    with open(path, encoding="utf-8") as handle:
        return parse_run(handle, **kwargs)


def load_queries(path: str | Path) -> dict[str, Query]:
    with open(path, encoding="utf-8") as handle:
        return parse_queries(handle)


def load_passages(path: str | Path) -> dict[str, Passage]:
    with open(path, encoding="utf-8") as handle:
        return parse_passages(handle)


def dataset_stats(
    qrels: QrelsSet,
    queries: Mapping[str, Query] | Iterable[Query],
    passages: Mapping[str, Passage] | Iterable[Passage],
) -> DatasetStats:
    """Collection-level counts plus the label histogram of the qrels."""
    n_queries = len(queries) if isinstance(queries, Mapping) else sum(1 for _ in queries)
    n_passages = len(passages) if isinstance(passages, Mapping) else sum(1 for _ in passages)
    return DatasetStats(
        n_queries=n_queries,
        n_passages=n_passages,
        n_qrels=len(qrels),
        label_histogram=qrels.label_histogram(),
    )
