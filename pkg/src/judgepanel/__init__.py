"""judgepanel: ensemble LLM relevance judging for TREC-style collections,
with label-agreement and system-ranking meta-evaluation against gold
judgments."""

from .corpus import (
    DatasetStats,
    ParseError,
    Passage,
    QrelsSet,
    Query,
    RelevanceLabel,
    RunRanking,
    dataset_stats,
    parse_passages,
    parse_qrels,
    parse_queries,
    parse_run,
    write_qrels,
    write_run,
)
from .ensemble import (
    AggregatedLabel,
    AggregationPolicy,
    Panel,
    aggregate_panel,
    average_vote,
    blend_run,
    majority_vote,
)
from .harness import (
    ScatterPoint,
    SystemScore,
    bias_scatter,
    category_residuals,
    evaluate_runs,
    report_row,
    system_ranking_correlation,
    system_scores,
)
from .judging import (
    JudgeConfig,
    JudgmentRecord,
    PromptTemplate,
    judge_direct,
    judge_multicriteria,
    judge_two_step,
    load_template,
    parse_label,
    render_prompt,
    run_judge,
)
from .metrics import (
    AgreementReport,
    BinaryConfusion,
    ConfusionMatrix,
    RankCorrelation,
    agreement_report,
    average_precision,
    binary_collapse,
    cohen_kappa,
    confusion_matrix,
    kendall_tau,
    krippendorff_alpha,
    mean_average_precision,
    mean_ndcg_at_k,
    ndcg_at_k,
    per_level_percentages,
    spearman_rho,
)
from .provider import (
    CompletionClient,
    JudgeEndpoint,
    MockProfile,
    RawCompletion,
    ResponseCache,
    RetryPolicy,
    cached_complete,
    complete,
    mock_complete,
)

__version__ = "0.1.0"

__all__ = [
    "AggregatedLabel",
    "AggregationPolicy",
    "AgreementReport",
    "BinaryConfusion",
    "CompletionClient",
    "ConfusionMatrix",
    "DatasetStats",
    "JudgeConfig",
    "JudgeEndpoint",
    "JudgmentRecord",
    "MockProfile",
    "Panel",
    "ParseError",
    "Passage",
    "PromptTemplate",
    "QrelsSet",
    "Query",
    "RankCorrelation",
    "RawCompletion",
    "RelevanceLabel",
    "ResponseCache",
    "RetryPolicy",
    "RunRanking",
    "ScatterPoint",
    "SystemScore",
    "aggregate_panel",
    "agreement_report",
    "average_precision",
    "average_vote",
    "bias_scatter",
    "binary_collapse",
    "blend_run",
    "cached_complete",
    "category_residuals",
    "cohen_kappa",
    "complete",
    "confusion_matrix",
    "dataset_stats",
    "evaluate_runs",
    "judge_direct",
    "judge_multicriteria",
    "judge_two_step",
    "kendall_tau",
    "krippendorff_alpha",
    "load_template",
    "majority_vote",
    "mean_average_precision",
    "mean_ndcg_at_k",
    "mock_complete",
    "ndcg_at_k",
    "parse_label",
    "parse_passages",
    "parse_qrels",
    "parse_queries",
    "parse_run",
    "per_level_percentages",
    "render_prompt",
    "report_row",
    "run_judge",
    "spearman_rho",
    "system_ranking_correlation",
    "system_scores",
    "write_qrels",
    "write_run",
]
