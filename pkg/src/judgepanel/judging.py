"""Single-judge orchestration: render a prompt family, call the provider,
and parse the model's text into a graded relevance label.

Three prompt families are supported:

* ``direct_grading`` -- one call, grade in 0..3;
* ``two_step``       -- a binary relevance verdict, then (only for passages
                        judged relevant) a grade in 1..3;
* ``multi_criteria`` -- four criterion grades (Exactness, Coverage,
                        Topicality, Contextual Fit) fused by a final call.

Every judgment is total: whatever the backend returns, the record carries a
label in 0..3, with ``parse_status`` recording how it was obtained.
"""

from __future__ import annotations

import json
import logging
import re
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .corpus import Passage, Query
from .provider import CompletionClient, JudgeEndpoint, ProviderError

logger = logging.getLogger(__name__)

FAMILY_DIRECT = "direct_grading"
FAMILY_TWO_STEP = "two_step"
FAMILY_MULTI_CRITERIA = "multi_criteria"
FAMILIES = (FAMILY_DIRECT, FAMILY_TWO_STEP, FAMILY_MULTI_CRITERIA)

_STAGE_COUNTS = {FAMILY_DIRECT: 1, FAMILY_TWO_STEP: 2, FAMILY_MULTI_CRITERIA: 5}

CRITERIA = ("Exactness", "Coverage", "Topicality", "Contextual Fit")

PARSE_CLEAN = "clean"
PARSE_LENIENT = "lenient"
PARSE_DEFAULTED = "defaulted"

DEFAULT_PASSAGE_BUDGET = 6000

_RETRY_REMINDER = "\n\nAnswer with a single integer."

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")
_BASE_PLACEHOLDERS = frozenset({"query", "passage"})


class PromptError(ValueError):
    """A template problem: unknown placeholder, wrong stage count, etc."""


@dataclass(frozen=True)
class PromptTemplate:
    family: str
    stage_texts: tuple[str, ...]

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise PromptError(f"unknown prompt family {self.family!r}")
        expected = _STAGE_COUNTS[self.family]
        if len(self.stage_texts) != expected:
            raise PromptError(
                f"{self.family} needs {expected} stage(s), got {len(self.stage_texts)}"
            )
        for index, text in enumerate(self.stage_texts):
            if not text.strip():
                raise PromptError(f"{self.family} stage {index} is empty")
            allowed = set(_BASE_PLACEHOLDERS)
            if self.family == FAMILY_MULTI_CRITERIA and index == expected - 1:
                allowed.add("criteria_scores")
            unknown = set(_PLACEHOLDER_RE.findall(text)) - allowed
            if unknown:
                raise PromptError(
                    f"{self.family} stage {index} uses undeclared placeholder(s): "
                    + ", ".join(sorted(unknown))
                )


@dataclass(frozen=True)
class JudgeConfig:
    judge_id: str
    endpoint: JudgeEndpoint
    template: PromptTemplate

    def __post_init__(self):
        if not self.judge_id:
            raise ValueError("judge_id must be non-empty")


@dataclass(frozen=True)
class JudgmentRecord:
    """One judge's verdict on one (query, passage) pair.

    ``parse_status`` reflects the stage that determined the final label;
    ``defaulted`` means the label came from the fallback rule (range
    minimum) after the parse retry was exhausted or the provider failed.
    ``stage_labels`` is present only for the multi-stage families.
    """

    query_id: str
    doc_id: str
    judge_id: str
    label: int
    raw_text: str
    parse_status: str
    stage_labels: tuple[int, ...] | None = None
    truncated: bool = False

    def to_json_obj(self) -> dict:
        obj = {
            "query_id": self.query_id,
            "doc_id": self.doc_id,
            "judge_id": self.judge_id,
            "label": self.label,
            "raw_text": self.raw_text,
            "parse_status": self.parse_status,
            "stage_labels": list(self.stage_labels) if self.stage_labels is not None else None,
            "truncated": self.truncated,
        }
        return obj

    @classmethod
    def from_json_obj(cls, obj: dict) -> "JudgmentRecord":
        stage_labels = obj.get("stage_labels")
        return cls(
            query_id=obj["query_id"],
            doc_id=obj["doc_id"],
            judge_id=obj["judge_id"],
            label=int(obj["label"]),
            raw_text=obj.get("raw_text", ""),
            parse_status=obj["parse_status"],
            stage_labels=tuple(stage_labels) if stage_labels is not None else None,
            truncated=bool(obj.get("truncated", False)),
        )


def render_prompt(
    stage_text: str,
    query: Query,
    passage: Passage,
    extra: dict[str, str] | None = None,
) -> str:
    """Substitute placeholder values into one template stage.

    Purely textual: no escaping, no re-scanning of inserted values. Raises
    :class:`PromptError` naming any placeholder without a value.
    """
    values = {"query": query.text, "passage": passage.text}
    if extra:
        values.update(extra)
    missing = sorted(set(_PLACEHOLDER_RE.findall(stage_text)) - set(values))
    if missing:
        raise PromptError("unresolved placeholder(s): " + ", ".join(missing))
    return _PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], stage_text)


_INTEGER_RE = re.compile(r"[+-]?\d+")
_NUMBER_TOKEN_RE = re.compile(r"[+-]?\d+(?:\.\d+)?")


def parse_label(text: str, lo: int = 0, hi: int = 3) -> tuple[int, str]:
    """Extract an integer grade in [lo, hi] from model output.

    Strict pass: the trimmed text is exactly one integer in range ->
    ``clean``. Lenient pass: the first standalone integer token in range,
    scanning left to right (decimals like ``2.5`` and embedded digits like
    ``v2`` do not count) -> ``lenient``. Otherwise ``(lo, "defaulted")``;
    the caller may retry before accepting the default.
    """
    stripped = text.strip()
    if _INTEGER_RE.fullmatch(stripped):
        value = int(stripped)
        if lo <= value <= hi:
            return value, PARSE_CLEAN
    for match in _NUMBER_TOKEN_RE.finditer(text):
        token = match.group()
        if "." in token:
            continue
        before = text[match.start() - 1] if match.start() > 0 else ""
        after = text[match.end()] if match.end() < len(text) else ""
        if before.isalnum() or before in "_.":
            continue
        if after.isalnum() or after == "_":
            continue
        value = int(token)
        if lo <= value <= hi:
            return value, PARSE_LENIENT
    return lo, PARSE_DEFAULTED


def _fit_passage(passage: Passage, budget: int | None) -> tuple[Passage, bool]:
    if budget is not None and len(passage.text) > budget:
        return Passage(passage.doc_id, passage.text[:budget]), True
    return passage, False


def _call_and_parse(
    client: CompletionClient,
    endpoint: JudgeEndpoint,
    prompt: str,
    lo: int,
    hi: int,
    fail_fast: bool,
) -> tuple[int, str, str]:
    """One provider call plus one reminder retry; returns (label, status, raw)."""
    try:
        result = client.complete(endpoint, prompt)
    except ProviderError:
        if fail_fast:
            raise
        return lo, PARSE_DEFAULTED, ""
    label, status = parse_label(result.text, lo, hi)
    if status != PARSE_DEFAULTED:
        return label, status, result.text
    try:
        retried = client.complete(endpoint, prompt + _RETRY_REMINDER)
    except ProviderError:
        if fail_fast:
            raise
        return lo, PARSE_DEFAULTED, result.text
    label, status = parse_label(retried.text, lo, hi)
    return label, status, retried.text


def judge_direct(
    client: CompletionClient,
    cfg: JudgeConfig,
    query: Query,
    passage: Passage,
    *,
    passage_budget: int | None = DEFAULT_PASSAGE_BUDGET,
    fail_fast: bool = False,
) -> JudgmentRecord:
    """Grade one pair with a single direct-grading call, label in 0..3."""
    passage, truncated = _fit_passage(passage, passage_budget)
    prompt = render_prompt(cfg.template.stage_texts[0], query, passage)
    label, status, raw = _call_and_parse(client, cfg.endpoint, prompt, 0, 3, fail_fast)
    return JudgmentRecord(
        query_id=query.query_id,
        doc_id=passage.doc_id,
        judge_id=cfg.judge_id,
        label=label,
        raw_text=raw,
        parse_status=status,
        truncated=truncated,
    )


def judge_two_step(
    client: CompletionClient,
    cfg: JudgeConfig,
    query: Query,
    passage: Passage,
    *,
    passage_budget: int | None = DEFAULT_PASSAGE_BUDGET,
    fail_fast: bool = False,
) -> JudgmentRecord:
    """Binary relevance verdict first; only passages judged relevant get the
    1..3 grading call. A verdict of 0 is final and skips stage two."""
    passage, truncated = _fit_passage(passage, passage_budget)
    binary_prompt = render_prompt(cfg.template.stage_texts[0], query, passage)
    verdict, verdict_status, verdict_raw = _call_and_parse(
        client, cfg.endpoint, binary_prompt, 0, 1, fail_fast
    )
    if verdict == 0:
        return JudgmentRecord(
            query_id=query.query_id,
            doc_id=passage.doc_id,
            judge_id=cfg.judge_id,
            label=0,
            raw_text=verdict_raw,
            parse_status=verdict_status,
            stage_labels=(verdict,),
            truncated=truncated,
        )
    grade_prompt = render_prompt(cfg.template.stage_texts[1], query, passage)
    grade, grade_status, grade_raw = _call_and_parse(
        client, cfg.endpoint, grade_prompt, 1, 3, fail_fast
    )
    return JudgmentRecord(
        query_id=query.query_id,
        doc_id=passage.doc_id,
        judge_id=cfg.judge_id,
        label=grade,
        raw_text=grade_raw,
        parse_status=grade_status,
        stage_labels=(verdict, grade),
        truncated=truncated,
    )


def format_criteria_scores(scores: Sequence[int]) -> str:
    return "\n".join(f"{name}: {score}" for name, score in zip(CRITERIA, scores))


def judge_multicriteria(
    client: CompletionClient,
    cfg: JudgeConfig,
    query: Query,
    passage: Passage,
    *,
    passage_budget: int | None = DEFAULT_PASSAGE_BUDGET,
    fail_fast: bool = False,
) -> JudgmentRecord:
    """Four independent criterion grades, then a final fusing call that sees
    the criterion scores alongside the query and passage.

    A criterion that fails to parse contributes its default (0) to the
    final stage rather than aborting the pair.
    """
    passage, truncated = _fit_passage(passage, passage_budget)
    scores: list[int] = []
    for stage_text in cfg.template.stage_texts[:-1]:
        prompt = render_prompt(stage_text, query, passage)
        score, _, _ = _call_and_parse(client, cfg.endpoint, prompt, 0, 3, fail_fast)
        scores.append(score)
    final_prompt = render_prompt(
        cfg.template.stage_texts[-1],
        query,
        passage,
        extra={"criteria_scores": format_criteria_scores(scores)},
    )
    label, status, raw = _call_and_parse(client, cfg.endpoint, final_prompt, 0, 3, fail_fast)
    return JudgmentRecord(
        query_id=query.query_id,
        doc_id=passage.doc_id,
        judge_id=cfg.judge_id,
        label=label,
        raw_text=raw,
        parse_status=status,
        stage_labels=(*scores, label),
        truncated=truncated,
    )


_JUDGE_FNS = {
    FAMILY_DIRECT: judge_direct,
    FAMILY_TWO_STEP: judge_two_step,
    FAMILY_MULTI_CRITERIA: judge_multicriteria,
}


def judge_pair(client, cfg, query, passage, **kwargs) -> JudgmentRecord:
    """Dispatch one pair to the judge function for the config's family."""
    return _JUDGE_FNS[cfg.template.family](client, cfg, query, passage, **kwargs)


def run_judge(
    client: CompletionClient,
    cfg: JudgeConfig,
    pairs: Sequence[tuple[Query, Passage]],
    *,
    passage_budget: int | None = DEFAULT_PASSAGE_BUDGET,
    fail_fast: bool = False,
    max_workers: int | None = None,
) -> list[JudgmentRecord]:
    """Judge a batch of pairs, one record each, sorted by (query_id, doc_id).

    A failing pair is recorded as defaulted and the batch continues unless
    ``fail_fast``. Only configuration problems (a broken template) abort.
    """
    if not pairs:
        raise ValueError("pairs must be non-empty")
    if max_workers is None:
        max_workers = 1 if cfg.endpoint.is_mock else cfg.endpoint.parallelism

    def one(pair: tuple[Query, Passage]) -> JudgmentRecord:
        query, passage = pair
        return judge_pair(
            client, cfg, query, passage,
            passage_budget=passage_budget, fail_fast=fail_fast,
        )

    if max_workers <= 1:
        records = [one(pair) for pair in pairs]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            records = list(pool.map(one, pairs))
    records.sort(key=lambda r: (r.query_id, r.doc_id))
    n_defaulted = sum(1 for r in records if r.parse_status == PARSE_DEFAULTED)
    logger.info(
        "judge %s: %d pairs judged, %d defaulted", cfg.judge_id, len(records), n_defaulted
    )
    return records


# ---------------------------------------------------------------------------
# Template files

def _builtin_manifest() -> dict[str, list[str]]:
    root = resources.files("judgepanel") / "templates"
    return json.loads((root / "manifest.json").read_text(encoding="utf-8"))


def load_template(family: str) -> PromptTemplate:
    """Load one of the packaged template families by name."""
    manifest = _builtin_manifest()
    if family not in manifest:
        raise PromptError(f"no packaged template family {family!r}; have {sorted(manifest)}")
    root = resources.files("judgepanel") / "templates"
    stages = tuple((root / name).read_text(encoding="utf-8") for name in manifest[family])
    return PromptTemplate(family=family, stage_texts=stages)


def load_template_files(family: str, stage_paths: Sequence[str | Path]) -> PromptTemplate:
    """Build a template from user-supplied stage files, in manifest order."""
    stages = tuple(Path(p).read_text(encoding="utf-8") for p in stage_paths)
    return PromptTemplate(family=family, stage_texts=stages)


def write_judgments(records: Iterable[JudgmentRecord]) -> str:
    """Serialize records as JSONL, the interchange format between judging
    and aggregation."""
    return "".join(
        json.dumps(record.to_json_obj(), sort_keys=True, ensure_ascii=False) + "\n"
        for record in records
    )


def parse_judgments(stream: str | Iterable[str]) -> list[JudgmentRecord]:
    lines = stream.splitlines() if isinstance(stream, str) else stream
    records = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append(JudgmentRecord.from_json_obj(json.loads(line)))
        except (ValueError, KeyError) as exc:
            raise ValueError(f"judgment line {line_no} is unreadable: {exc}") from exc
    return records


def load_judgments(path: str | Path) -> list[JudgmentRecord]:
    with open(path, encoding="utf-8") as handle:
        return parse_judgments(handle)
