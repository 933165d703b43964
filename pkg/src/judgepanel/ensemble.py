"""Judge panels and label fusion.

A panel is either several distinct prompts on one model (``multi-prompt``)
or several distinct models (``multi-model``). Per-judge labels for each
(query, passage) pair are fused by an aggregation policy:

* ``mv`` -- majority voting, with a tie-break over the set of labels that
  attain the maximum frequency: random draw (``rnd``), maximum (``max``),
  minimum (``min``), or the round-half-up mean (``avg``) of the tied labels;
* ``av`` -- average voting: the arithmetic mean of all judge labels,
  rounded half up to an integer grade (the fractional score is retained).

Random tie-breaks are reproducible and order-independent: the draw for a
pair is a pure function of (seed, query_id, doc_id).
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import random
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import QrelsSet, RelevanceLabel, write_qrels
from .judging import (
    DEFAULT_PASSAGE_BUDGET,
    JudgeConfig,
    JudgmentRecord,
    run_judge,
    write_judgments,
)
from .provider import CompletionClient

logger = logging.getLogger(__name__)

VARIANT_MULTI_PROMPT = "multi-prompt"
VARIANT_MULTI_MODEL = "multi-model"

MV_TIE_BREAKS = ("rnd", "max", "min", "avg")
POLICY_NAMES = ("mv-rnd", "mv-max", "mv-min", "mv-avg", "av")


def round_half_up(value: float) -> int:
    """Round with halves going toward the higher grade (0.5 -> 1, 2.5 -> 3)."""
    return math.floor(value + 0.5)


@dataclass(frozen=True)
class AggregationPolicy:
    kind: str  # "mv" | "av"
    tie_break: str | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind == "mv":
            if self.tie_break not in MV_TIE_BREAKS:
                raise ValueError(f"mv needs a tie_break in {MV_TIE_BREAKS}, got {self.tie_break!r}")
        elif self.kind == "av":
            if self.tie_break is not None:
                raise ValueError("av takes no tie_break")
        else:
            raise ValueError(f"unknown aggregation kind {self.kind!r}")

    @classmethod
    def from_string(cls, name: str, *, rng_seed: int = 0) -> "AggregationPolicy":
        """Parse a policy name: one of mv-rnd, mv-max, mv-min, mv-avg, av."""
        if name == "av":
            return cls(kind="av", rng_seed=rng_seed)
        if name.startswith("mv-"):
            return cls(kind="mv", tie_break=name[3:], rng_seed=rng_seed)
        raise ValueError(f"unknown policy {name!r}; expected one of {POLICY_NAMES}")

    def to_string(self) -> str:
        return "av" if self.kind == "av" else f"mv-{self.tie_break}"


@dataclass(frozen=True)
class Panel:
    panel_id: str
    variant: str
    judges: tuple[JudgeConfig, ...]

    def __post_init__(self):
        if self.variant not in (VARIANT_MULTI_PROMPT, VARIANT_MULTI_MODEL):
            raise ValueError(f"unknown panel variant {self.variant!r}")
        if not self.judges:
            raise ValueError("panel needs at least one judge")
        ids = [j.judge_id for j in self.judges]
        if len(set(ids)) != len(ids):
            raise ValueError("judge_id values must be unique within a panel")
        endpoints = {j.endpoint.endpoint_id for j in self.judges}
        if self.variant == VARIANT_MULTI_PROMPT:
            if len(endpoints) != 1:
                raise ValueError("multi-prompt panel must keep all judges on one endpoint")
            templates = [j.template.stage_texts for j in self.judges]
            if len(set(templates)) != len(templates):
                raise ValueError("multi-prompt panel needs pairwise-distinct templates")
        else:
            if len(endpoints) != len(self.judges):
                raise ValueError("multi-model panel needs pairwise-distinct endpoints")


@dataclass(frozen=True)
class AggregatedLabel:
    query_id: str
    doc_id: str
    final_label: RelevanceLabel
    fractional_score: float
    per_judge: dict[str, int] = field(hash=False, compare=True, default_factory=dict)
    tie_occurred: bool = False

    def to_json_obj(self) -> dict:
        return {
            "query_id": self.query_id,
            "doc_id": self.doc_id,
            "final_label": int(self.final_label),
            "fractional_score": self.fractional_score,
            "per_judge": dict(sorted(self.per_judge.items())),
            "tie_occurred": self.tie_occurred,
        }


def majority_vote(
    labels: Sequence[int],
    tie_break: str = "avg",
    rng: random.Random | None = None,
) -> tuple[int, bool]:
    """Most frequent label; ties over the mode set resolved per ``tie_break``.

    Returns (label, tie_occurred). ``rnd`` draws uniformly from the mode
    set and requires ``rng``.
    """
    if not labels:
        raise ValueError("labels must be non-empty")
    if tie_break not in MV_TIE_BREAKS:
        raise ValueError(f"unknown tie_break {tie_break!r}")
    counts = Counter(int(v) for v in labels)
    top = max(counts.values())
    modes = sorted(v for v, c in counts.items() if c == top)
    if len(modes) == 1:
        return modes[0], False
    if tie_break == "max":
        return modes[-1], True
    if tie_break == "min":
        return modes[0], True
    if tie_break == "avg":
        return round_half_up(sum(modes) / len(modes)), True
    if rng is None:
        raise ValueError("tie_break 'rnd' needs an rng")
    return rng.choice(modes), True


def average_vote(labels: Sequence[int]) -> tuple[float, int]:
    """Arithmetic mean of the labels and its round-half-up integer grade."""
    if not labels:
        raise ValueError("labels must be non-empty")
    mean = sum(int(v) for v in labels) / len(labels)
    return mean, round_half_up(mean)


def pair_rng(seed: int, query_id: str, doc_id: str) -> random.Random:
    """Generator for one pair's random tie-break, derived from (seed, pair
    key) so draws are identical regardless of processing order or host."""
    digest = hashlib.sha256(f"{seed}\x1f{query_id}\x1f{doc_id}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def aggregate_panel(
    judgment_sets: Sequence[Sequence[JudgmentRecord]],
    policy: AggregationPolicy,
    *,
    panel_id: str = "panel",
    strict: bool = False,
) -> tuple[QrelsSet, list[AggregatedLabel]]:
    """Fuse one judgment list per judge into a generated qrels set.

    Judges normally cover the same pairs; if they do not, the union is
    aggregated over the labels available for each pair (with a warning),
    or an error is raised under ``strict``. Pairs are processed in
    ascending (query_id, doc_id) order.
    """
    if not judgment_sets:
        raise ValueError("need at least one judgment set")
    per_pair: dict[tuple[str, str], dict[str, int]] = {}
    pair_sets = []
    for records in judgment_sets:
        seen = set()
        for record in records:
            key = (record.query_id, record.doc_id)
            seen.add(key)
            per_pair.setdefault(key, {})[record.judge_id] = int(record.label)
        pair_sets.append(seen)
    if any(s != pair_sets[0] for s in pair_sets[1:]):
        message = "judges cover different pair sets; aggregating over the union"
        if strict:
            raise ValueError(message)
        logger.warning(message)
    if not per_pair:
        raise ValueError("no judged pairs to aggregate")

    qrels = QrelsSet(source_tag=f"{panel_id}:{policy.to_string()}")
    aggregates: list[AggregatedLabel] = []
    for key in sorted(per_pair):
        query_id, doc_id = key
        per_judge = per_pair[key]
        labels = sorted(per_judge.values())
        fractional = sum(labels) / len(labels)
        if policy.kind == "av":
            fractional, final = average_vote(labels)
            tie = False
        else:
            rng = None
            if policy.tie_break == "rnd":
                rng = pair_rng(policy.rng_seed, query_id, doc_id)
            final, tie = majority_vote(labels, policy.tie_break, rng)
        qrels.add(query_id, doc_id, final)
        aggregates.append(
            AggregatedLabel(
                query_id=query_id,
                doc_id=doc_id,
                final_label=RelevanceLabel(final),
                fractional_score=fractional,
                per_judge=per_judge,
                tie_occurred=tie,
            )
        )
    return qrels, aggregates


def write_aggregates(aggregates: Iterable[AggregatedLabel]) -> str:
    return "".join(
        json.dumps(agg.to_json_obj(), sort_keys=True, ensure_ascii=False) + "\n"
        for agg in aggregates
    )


def blend_run(
    client: CompletionClient,
    panel: Panel,
    policy: AggregationPolicy,
    pairs,
    *,
    out_dir: str | Path | None = None,
    passage_budget: int | None = DEFAULT_PASSAGE_BUDGET,
    fail_fast: bool = False,
    strict: bool = False,
) -> tuple[QrelsSet, list[AggregatedLabel]]:
    """Run every panel judge over the pairs and fuse the results.

    With ``out_dir`` set, persists one judgment JSONL per judge under
    ``judgments/``, the blended qrels as ``blended.qrels``, and the
    per-pair aggregation sidecar as ``blended.sidecar.jsonl``.
    """
    judgment_sets = []
    for judge in panel.judges:
        records = run_judge(
            client, judge, pairs, passage_budget=passage_budget, fail_fast=fail_fast
        )
        judgment_sets.append(records)
        if out_dir is not None:
            judgments_dir = Path(out_dir) / "judgments"
            judgments_dir.mkdir(parents=True, exist_ok=True)
            path = judgments_dir / f"{judge.judge_id}.jsonl"
            path.write_text(write_judgments(records), encoding="utf-8")
    qrels, aggregates = aggregate_panel(
        judgment_sets, policy, panel_id=panel.panel_id, strict=strict
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "blended.qrels").write_text(write_qrels(qrels), encoding="utf-8")
        (out / "blended.sidecar.jsonl").write_text(write_aggregates(aggregates), encoding="utf-8")
    return qrels, aggregates
