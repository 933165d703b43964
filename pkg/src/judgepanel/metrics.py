"""Meta-evaluation statistics.

Label agreement between a gold and a generated qrels set: confusion
matrices, per-level accuracy percentages, the binary collapse
({0,1} -> irrelevant, {2,3} -> relevant), unweighted Cohen's kappa, and
Krippendorff's alpha via the two-rater coincidence matrix with nominal,
ordinal, or interval distances (interval by default).

Ranking quality and system-ranking correlation: NDCG@k with linear gain
and log2(rank+1) discount, average precision / MAP with a graded relevance
threshold, tie-corrected Kendall's tau-b, and Spearman's rho on average
fractional ranks.

Display convention: percentages are shown truncated to two decimals (the
convention of the agreement tables this module mirrors); statistics are
shown rounded to four. Raw values are always retained.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .corpus import QrelsSet, RunRanking

logger = logging.getLogger(__name__)

N_LEVELS = 4


class MetricsError(ValueError):
    """Invalid input to a statistic (empty overlap, length mismatch...)."""


class UndefinedStatisticError(MetricsError):
    """The statistic is undefined on this input (e.g. a constant vector)."""


# ---------------------------------------------------------------------------
# Confusion matrices and percentages


@dataclass
class ConfusionMatrix:
    """4x4 grid of counts indexed [truth_label][predicted_label]."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (N_LEVELS, N_LEVELS):
            raise MetricsError(f"expected a 4x4 grid, got shape {self.counts.shape}")
        if (self.counts < 0).any():
            raise MetricsError("counts must be non-negative")

    def __eq__(self, other) -> bool:
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def to_csv(self) -> str:
        header = "truth\\pred," + ",".join(str(p) for p in range(N_LEVELS))
        rows = [
            f"{t}," + ",".join(str(int(c)) for c in self.counts[t])
            for t in range(N_LEVELS)
        ]
        return "\n".join([header, *rows]) + "\n"

    @classmethod
    def from_labels(cls, gold: Sequence[int], pred: Sequence[int]) -> "ConfusionMatrix":
        gold = np.asarray(gold, dtype=np.int64)
        pred = np.asarray(pred, dtype=np.int64)
        if gold.shape != pred.shape:
            raise MetricsError("gold and predicted label vectors differ in length")
        if gold.size == 0:
            raise MetricsError("label vectors are empty")
        for name, vec in (("gold", gold), ("predicted", pred)):
            if ((vec < 0) | (vec >= N_LEVELS)).any():
                raise MetricsError(f"{name} labels must be in 0..3")
        flat = np.bincount(gold * N_LEVELS + pred, minlength=N_LEVELS * N_LEVELS)
        return cls(flat.reshape(N_LEVELS, N_LEVELS))


@dataclass
class BinaryConfusion:
    """2x2 grid over {irrelevant, relevant}, rows = truth."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (2, 2):
            raise MetricsError(f"expected a 2x2 grid, got shape {self.counts.shape}")

    def __eq__(self, other) -> bool:
        return isinstance(other, BinaryConfusion) and np.array_equal(self.counts, other.counts)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def to_csv(self) -> str:
        header = "truth\\pred,irrelevant,relevant"
        names = ("irrelevant", "relevant")
        rows = [
            f"{names[t]},{int(self.counts[t][0])},{int(self.counts[t][1])}"
            for t in range(2)
        ]
        return "\n".join([header, *rows]) + "\n"


def confusion_matrix(gold: QrelsSet, pred: QrelsSet) -> ConfusionMatrix:
    """Count agreement over the (query_id, doc_id) keys both sets judge."""
    keys = sorted(set(gold.entries) & set(pred.entries))
    if not keys:
        raise MetricsError("gold and predicted qrels share no (query, doc) pairs")
    g = [int(gold.entries[k]) for k in keys]
    p = [int(pred.entries[k]) for k in keys]
    return ConfusionMatrix.from_labels(g, p)


def per_level_percentages(matrix: ConfusionMatrix) -> dict[int, float]:
    """Diagonal share of each truth row, in percent; empty rows are absent."""
    out: dict[int, float] = {}
    rows = matrix.row_sums()
    for level in range(N_LEVELS):
        if rows[level] > 0:
            out[level] = 100.0 * float(matrix.counts[level][level]) / float(rows[level])
    return out


def collapse_label(label: int) -> int:
    """Binary collapse: grades 0 and 1 are irrelevant, 2 and 3 relevant."""
    return 0 if int(label) <= 1 else 1


def binary_collapse(matrix: ConfusionMatrix) -> BinaryConfusion:
    blocks = np.zeros((2, 2), dtype=np.int64)
    for t in range(N_LEVELS):
        for p in range(N_LEVELS):
            blocks[collapse_label(t)][collapse_label(p)] += matrix.counts[t][p]
    return BinaryConfusion(blocks)


def binary_percentages(binary: BinaryConfusion) -> dict[int, float]:
    out: dict[int, float] = {}
    for level in range(2):
        row = int(binary.counts[level].sum())
        if row > 0:
            out[level] = 100.0 * float(binary.counts[level][level]) / float(row)
    return out


def display_percent(numerator: int, denominator: int) -> str:
    """Percentage truncated (not rounded) to two decimals, as the agreement
    tables print it; computed in integer arithmetic to avoid float drift."""
    if denominator <= 0:
        raise MetricsError("denominator must be positive")
    basis_points = (int(numerator) * 10000) // int(denominator)
    return f"{basis_points // 100}.{basis_points % 100:02d}"


def display_statistic(value: float) -> str:
    """Statistics are displayed rounded to four decimals."""
    return f"{value:.4f}"


# ---------------------------------------------------------------------------
# Chance-corrected agreement


def kappa_from_matrix(matrix: ConfusionMatrix, weights: str | None = None) -> float:
    """Cohen's kappa from a confusion matrix; unweighted by default.

    ``weights`` may be "linear" or "quadratic" for the weighted variants.
    When expected agreement is 1 (both raters constant and identical),
    kappa is defined as 1.
    """
    n = matrix.n
    if n == 0:
        raise MetricsError("empty confusion matrix")
    observed = matrix.counts.astype(float) / n
    expected = np.outer(matrix.row_sums(), matrix.col_sums()).astype(float) / (n * n)
    if weights is None:
        p_o = float(np.trace(observed))
        p_e = float(np.trace(expected))
        if p_e == 1.0:
            return 1.0
        return (p_o - p_e) / (1.0 - p_e)
    levels = np.arange(N_LEVELS, dtype=float)
    diff = np.abs(levels[:, None] - levels[None, :]) / (N_LEVELS - 1)
    if weights == "linear":
        w = diff
    elif weights == "quadratic":
        w = diff**2
    else:
        raise MetricsError(f"unknown kappa weights {weights!r}")
    expected_disagreement = float((w * expected).sum())
    if expected_disagreement == 0.0:
        return 1.0
    return 1.0 - float((w * observed).sum()) / expected_disagreement


def cohen_kappa(
    gold: Sequence[int], pred: Sequence[int], *, weights: str | None = None
) -> float:
    """Cohen's kappa between two equal-length label vectors over 0..3."""
    return kappa_from_matrix(ConfusionMatrix.from_labels(gold, pred), weights=weights)


ALPHA_LEVELS = ("nominal", "ordinal", "interval")


def _alpha_distances(level: str, marginals: np.ndarray) -> np.ndarray:
    values = np.arange(N_LEVELS, dtype=float)
    if level == "nominal":
        return 1.0 - np.eye(N_LEVELS)
    if level == "interval":
        return (values[:, None] - values[None, :]) ** 2
    if level == "ordinal":
        delta = np.zeros((N_LEVELS, N_LEVELS))
        for c in range(N_LEVELS):
            for k in range(N_LEVELS):
                if c == k:
                    continue
                lo, hi = min(c, k), max(c, k)
                between = float(marginals[lo : hi + 1].sum())
                delta[c][k] = (between - (marginals[c] + marginals[k]) / 2.0) ** 2
        return delta
    raise MetricsError(f"unknown alpha level {level!r}; expected one of {ALPHA_LEVELS}")


def alpha_from_matrix(matrix: ConfusionMatrix, level: str = "interval") -> float:
    """Krippendorff's alpha for two raters via the coincidence matrix.

    Each judged pair contributes both orderings to the coincidence matrix,
    so observed disagreement uses n = 2 * pairs pairable values and
    expected disagreement the n(n-1) permutation denominator.
    """
    coincidence = matrix.counts.astype(float) + matrix.counts.astype(float).T
    marginals = coincidence.sum(axis=1)
    n = float(marginals.sum())
    if n == 0:
        raise MetricsError("empty confusion matrix")
    delta = _alpha_distances(level, marginals)
    observed = float((coincidence * delta).sum()) / n
    expected = float((np.outer(marginals, marginals) * delta).sum()) / (n * (n - 1.0))
    if expected == 0.0:
        if observed == 0.0:
            return 1.0
        raise UndefinedStatisticError("zero expected disagreement with observed disagreement")
    return 1.0 - observed / expected


def krippendorff_alpha(
    gold: Sequence[int], pred: Sequence[int], level: str = "interval"
) -> float:
    """Two-rater Krippendorff's alpha over label vectors in 0..3."""
    return alpha_from_matrix(ConfusionMatrix.from_labels(gold, pred), level=level)


# ---------------------------------------------------------------------------
# Ranking metrics


def _gain(label: int, exponential: bool) -> float:
    return float(2**label - 1) if exponential else float(label)


def ndcg_at_k(
    query_id: str,
    ranked_doc_ids: Sequence[str],
    qrels: QrelsSet,
    k: int,
    *,
    exponential_gain: bool = False,
    strict: bool = False,
) -> float:
    """NDCG@k for one query's ranking; unjudged documents gain 0.

    The ideal ordering uses all judged labels for the query, sorted
    descending. Queries whose judged labels are all zero score 0 and are
    flagged in the log; a query absent from the qrels scores 0 too, or
    raises under ``strict``.
    """
    if k < 1:
        raise MetricsError("k must be >= 1")
    judged = qrels.for_query(query_id)
    if not judged:
        if strict:
            raise MetricsError(f"query {query_id!r} is absent from the qrels")
        logger.debug("query %r absent from qrels; NDCG contributes 0", query_id)
        return 0.0
    ideal = sorted((int(v) for v in judged.values()), reverse=True)[:k]
    idcg = sum(
        _gain(label, exponential_gain) / math.log2(rank + 1)
        for rank, label in enumerate(ideal, start=1)
    )
    if idcg == 0.0:
        logger.debug("query %r has only zero labels; NDCG contributes 0", query_id)
        return 0.0
    dcg = sum(
        _gain(int(judged.get(doc_id, 0)), exponential_gain) / math.log2(rank + 1)
        for rank, doc_id in enumerate(ranked_doc_ids[:k], start=1)
    )
    return dcg / idcg


def average_precision(
    query_id: str,
    ranked_doc_ids: Sequence[str],
    qrels: QrelsSet,
    *,
    relevant_min: int = 2,
) -> float | None:
    """AP for one query, treating labels >= ``relevant_min`` as relevant.

    The mean of precision-at-rank over relevant retrieved positions is
    divided by the total number of relevant documents in the qrels.
    Returns None when the query has no relevant document at all (the query
    is excluded from MAP).
    """
    judged = qrels.for_query(query_id)
    total_relevant = sum(1 for v in judged.values() if int(v) >= relevant_min)
    if total_relevant == 0:
        return None
    hits = 0
    precision_sum = 0.0
    for rank, doc_id in enumerate(ranked_doc_ids, start=1):
        if int(judged.get(doc_id, 0)) >= relevant_min:
            hits += 1
            precision_sum += hits / rank
    return precision_sum / total_relevant


def mean_average_precision(
    run: RunRanking, qrels: QrelsSet, *, relevant_min: int = 2
) -> float:
    """MAP over the qrels' queries that have at least one relevant document."""
    values = []
    for query_id in qrels.query_ids():
        ap = average_precision(
            query_id, run.ranked_docs(query_id), qrels, relevant_min=relevant_min
        )
        if ap is not None:
            values.append(ap)
    if not values:
        raise MetricsError(f"no query with a relevant document for run {run.run_tag!r}")
    return sum(values) / len(values)


def mean_ndcg_at_k(
    run: RunRanking, qrels: QrelsSet, k: int, *, exponential_gain: bool = False
) -> float:
    """Mean NDCG@k over the qrels' query set; unranked queries score 0."""
    query_ids = qrels.query_ids()
    if not query_ids:
        raise MetricsError("empty qrels")
    total = sum(
        ndcg_at_k(qid, run.ranked_docs(qid), qrels, k, exponential_gain=exponential_gain)
        for qid in query_ids
    )
    return total / len(query_ids)


# ---------------------------------------------------------------------------
# Rank correlation


def _check_correlation_input(x: Sequence[float], y: Sequence[float]) -> None:
    if len(x) != len(y):
        raise MetricsError("score vectors differ in length")
    if len(x) < 2:
        raise MetricsError("need at least two paired scores")
    if len(set(x)) == 1 or len(set(y)) == 1:
        raise UndefinedStatisticError("rank correlation is undefined on a constant vector")


def kendall_tau(x: Sequence[float], y: Sequence[float]) -> float:
    """Tie-corrected Kendall's tau-b between two aligned score vectors."""
    _check_correlation_input(x, y)
    n = len(x)
    concordant = discordant = 0
    for i in range(n):
        for j in range(i + 1, n):
            product = (x[i] - x[j]) * (y[i] - y[j])
            if product > 0:
                concordant += 1
            elif product < 0:
                discordant += 1
    n0 = n * (n - 1) // 2
    ties_x = sum(c * (c - 1) // 2 for c in Counter(x).values())
    ties_y = sum(c * (c - 1) // 2 for c in Counter(y).values())
    denominator = math.sqrt((n0 - ties_x) * (n0 - ties_y))
    if denominator == 0.0:
        raise UndefinedStatisticError("tau-b denominator is zero")
    return (concordant - discordant) / denominator


def average_ranks(values: Sequence[float]) -> list[float]:
    """1-based ranks with tied values receiving the mean of their positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman's rho: Pearson correlation of average fractional ranks."""
    _check_correlation_input(x, y)
    rx = average_ranks(x)
    ry = average_ranks(y)
    mx = sum(rx) / len(rx)
    my = sum(ry) / len(ry)
    cov = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    var_x = sum((a - mx) ** 2 for a in rx)
    var_y = sum((b - my) ** 2 for b in ry)
    if var_x == 0.0 or var_y == 0.0:
        raise UndefinedStatisticError("zero rank variance")
    return cov / math.sqrt(var_x * var_y)


@dataclass(frozen=True)
class RankCorrelation:
    tau: float
    rho: float
    n_systems: int

    def __post_init__(self):
        if self.n_systems < 2:
            raise MetricsError("rank correlation needs at least two systems")


# ---------------------------------------------------------------------------
# Agreement report


@dataclass
class AgreementReport:
    """Everything the label-level comparison produces for one generated set."""

    kappa: float
    alpha: float
    alpha_level: str
    matrix: ConfusionMatrix
    per_level_pct: dict[int, float]
    binary: BinaryConfusion
    binary_pct: dict[int, float]

    def to_json_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "alpha": self.alpha,
            "alpha_level": self.alpha_level,
            "n": self.matrix.n,
            "confusion": self.matrix.counts.tolist(),
            "per_level_pct": {str(k): v for k, v in sorted(self.per_level_pct.items())},
            "binary_confusion": self.binary.counts.tolist(),
            "binary_pct": {str(k): v for k, v in sorted(self.binary_pct.items())},
        }

    def to_text(self) -> str:
        level_names = ("irrelevant", "related", "high.rel", "perfect.rel")
        rows = self.matrix.row_sums()
        lines = [
            f"pairs compared: {self.matrix.n}",
            f"kappa: {display_statistic(self.kappa)}",
            f"alpha ({self.alpha_level}): {display_statistic(self.alpha)}",
            "per-level agreement:",
        ]
        for level in range(N_LEVELS):
            if rows[level] > 0:
                pct = display_percent(int(self.matrix.counts[level][level]), int(rows[level]))
                lines.append(f"  {level_names[level]:<12} {pct}%")
        lines.append("binary agreement:")
        binary_names = ("irrelevant", "relevant")
        for level in range(2):
            row = int(self.binary.counts[level].sum())
            if row > 0:
                pct = display_percent(int(self.binary.counts[level][level]), row)
                lines.append(f"  {binary_names[level]:<12} {pct}%")
        return "\n".join(lines) + "\n"


def agreement_report(
    gold: QrelsSet, pred: QrelsSet, *, alpha_level: str = "interval"
) -> AgreementReport:
    """Full label-level comparison of a generated qrels set against gold."""
    matrix = confusion_matrix(gold, pred)
    binary = binary_collapse(matrix)
    return AgreementReport(
        kappa=kappa_from_matrix(matrix),
        alpha=alpha_from_matrix(matrix, level=alpha_level),
        alpha_level=alpha_level,
        matrix=matrix,
        per_level_pct=per_level_percentages(matrix),
        binary=binary,
        binary_pct=binary_percentages(binary),
    )
