"""End-to-end meta-evaluation: score system runs under gold and generated
qrels, correlate the two system rankings, and break residuals down by the
model family each system builds on."""

from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

from .corpus import ParseError, QrelsSet, RunRanking
from .metrics import (
    MetricsError,
    RankCorrelation,
    agreement_report,
    display_statistic,
    kendall_tau,
    mean_average_precision,
    mean_ndcg_at_k,
    spearman_rho,
)

logger = logging.getLogger(__name__)

METRIC_NDCG = "ndcg"
METRIC_MAP = "map"

BIAS_CATEGORIES = ("GPT", "T5", "GPT+T5", "other")


@dataclass(frozen=True)
class SystemScore:
    run_tag: str
    metric: str
    value_under_gold: float
    value_under_generated: float


@dataclass(frozen=True)
class ScatterPoint:
    run_tag: str
    x: float  # score under gold qrels
    y: float  # score under generated qrels
    category: str


def parse_metric(name: str) -> tuple[str, int]:
    """Parse a CLI metric name: "ndcg@10" -> ("ndcg", 10); "map" -> ("map", 0)."""
    if name == METRIC_MAP:
        return METRIC_MAP, 0
    if name.startswith("ndcg@"):
        try:
            k = int(name.split("@", 1)[1])
        except ValueError:
            raise ValueError(f"bad metric {name!r}") from None
        if k < 1:
            raise ValueError(f"bad metric {name!r}")
        return METRIC_NDCG, k
    raise ValueError(f"unknown metric {name!r}; expected ndcg@<k> or map")


def system_scores(
    runs: Sequence[RunRanking],
    gold: QrelsSet,
    generated: QrelsSet,
    metric: str = METRIC_NDCG,
    k: int = 10,
) -> list[SystemScore]:
    """Per-system metric values under gold and generated qrels, paired."""
    under_gold = evaluate_runs(runs, gold, metric, k)
    under_generated = evaluate_runs(runs, generated, metric, k)
    name = f"ndcg@{k}" if metric == METRIC_NDCG else metric
    return [
        SystemScore(
            run_tag=tag,
            metric=name,
            value_under_gold=under_gold[tag],
            value_under_generated=under_generated[tag],
        )
        for tag in sorted(under_gold)
    ]


def evaluate_runs(
    runs: Sequence[RunRanking],
    qrels: QrelsSet,
    metric: str = METRIC_NDCG,
    k: int = 10,
) -> dict[str, float]:
    """Mean metric per run over the qrels' query set."""
    if not runs:
        raise MetricsError("no runs to evaluate")
    qrels_queries = set(qrels.query_ids())
    scores: dict[str, float] = {}
    for run in runs:
        if not qrels_queries & set(run.rankings):
            raise MetricsError(f"run {run.run_tag!r} shares no query with the qrels")
        if metric == METRIC_NDCG:
            scores[run.run_tag] = mean_ndcg_at_k(run, qrels, k)
        elif metric == METRIC_MAP:
            scores[run.run_tag] = mean_average_precision(run, qrels)
        else:
            raise MetricsError(f"unknown metric {metric!r}")
    return scores


def system_ranking_correlation(
    gold: QrelsSet,
    generated: QrelsSet,
    runs: Sequence[RunRanking],
    metric: str = METRIC_NDCG,
    k: int = 10,
) -> RankCorrelation:
    """tau-b and rho between the system orderings induced by the two qrels."""
    if len(runs) < 2:
        raise MetricsError("need at least two runs for a ranking correlation")
    under_gold = evaluate_runs(runs, gold, metric, k)
    under_generated = evaluate_runs(runs, generated, metric, k)
    tags = sorted(under_gold)
    x = [under_gold[tag] for tag in tags]
    y = [under_generated[tag] for tag in tags]
    return RankCorrelation(
        tau=kendall_tau(x, y), rho=spearman_rho(x, y), n_systems=len(tags)
    )


# ---------------------------------------------------------------------------
# Bias by system category


def parse_categories(stream: str | Iterable[str]) -> dict[str, str]:
    """Read a two-column ``run_tag,category`` CSV (header optional).

    Categories are matched case-insensitively against GPT, T5, GPT+T5 and
    other; anything else is mapped to "other" with a warning.
    """
    canonical = {c.lower(): c for c in BIAS_CATEGORIES}
    lines = stream.splitlines() if isinstance(stream, str) else stream
    mapping: dict[str, str] = {}
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise ParseError(f"expected 'run_tag,category', got {raw!r}", line_no)
        tag, category = parts
        if line_no == 1 and tag.lower() == "run_tag":
            continue
        resolved = canonical.get(category.lower())
        if resolved is None:
            logger.warning("unknown category %r for run %r; using 'other'", category, tag)
            resolved = "other"
        mapping[tag] = resolved
    return mapping


def bias_scatter(
    gold_scores: Mapping[str, float],
    generated_scores: Mapping[str, float],
    categories: Mapping[str, str],
) -> list[ScatterPoint]:
    """One point per run: gold score on x, generated score on y.

    Runs missing from the category map fall into "other" with a warning,
    so every point carries a category.
    """
    if set(gold_scores) != set(generated_scores):
        raise MetricsError("gold and generated score maps cover different runs")
    points = []
    for tag in sorted(gold_scores):
        category = categories.get(tag)
        if category is None:
            logger.warning("run %r has no category; using 'other'", tag)
            category = "other"
        points.append(
            ScatterPoint(run_tag=tag, x=gold_scores[tag], y=generated_scores[tag], category=category)
        )
    return points


def category_residuals(points: Sequence[ScatterPoint]) -> dict[str, float]:
    """Mean generated-minus-gold score per category: positive means the
    generated judgments overestimate that category's systems."""
    sums: dict[str, list[float]] = {}
    for point in points:
        sums.setdefault(point.category, []).append(point.y - point.x)
    return {cat: sum(vals) / len(vals) for cat, vals in sorted(sums.items())}


def scatter_csv(points: Sequence[ScatterPoint]) -> str:
    lines = ["run_tag,category,gold_score,generated_score"]
    for point in sorted(points, key=lambda p: p.run_tag):
        lines.append(f"{point.run_tag},{point.category},{point.x!r},{point.y!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# One-row summary report


def report_row(
    gold: QrelsSet,
    generated: QrelsSet,
    runs: Sequence[RunRanking] | None = None,
    *,
    k: int = 10,
    alpha_level: str = "interval",
    label: str = "generated",
) -> dict:
    """Assemble the summary row for one generated qrels set: kappa, alpha,
    and (when runs are given) tau/rho under NDCG@k and MAP.

    Statistics are recomputed from the raw label files every time rather
    than read from sidecars.
    """
    agreement = agreement_report(gold, generated, alpha_level=alpha_level)
    row: dict = {
        "label": label,
        "n_pairs": agreement.matrix.n,
        "kappa": agreement.kappa,
        "alpha": agreement.alpha,
        "alpha_level": alpha_level,
    }
    if runs:
        ndcg = system_ranking_correlation(gold, generated, runs, METRIC_NDCG, k)
        ap = system_ranking_correlation(gold, generated, runs, METRIC_MAP, k)
        row.update(
            {
                "n_systems": ndcg.n_systems,
                f"tau_ndcg@{k}": ndcg.tau,
                "tau_map": ap.tau,
                f"rho_ndcg@{k}": ndcg.rho,
                "rho_map": ap.rho,
            }
        )
    return row


def render_report_row(row: Mapping) -> str:
    """Fixed-width text rendering of a report row."""
    parts = [f"{row['label']}"]
    for key, value in row.items():
        if key in ("label",):
            continue
        if isinstance(value, float):
            parts.append(f"{key}={display_statistic(value)}")
        else:
            parts.append(f"{key}={value}")
    return "  ".join(parts) + "\n"
