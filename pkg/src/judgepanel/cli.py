"""Command-line interface.

Subcommands mirror the pipeline stages: ``stats`` (dataset statistics),
``judge`` (one judge over the pairs of a qrels file), ``blend`` (run a
panel and fuse its labels), ``agreement`` (gold vs generated label
comparison), ``rank-eval`` (system scores, ranking correlation, bias
scatter), ``report`` (one summary row).

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 provider failure under --strict.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import corpus, ensemble, harness, judging, metrics, provider

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PROVIDER = 3


class ConfigError(ValueError):
    """A problem in the panel configuration file."""


class _Parser(argparse.ArgumentParser):
    # Usage problems exit 1 (argparse defaults to 2, which we reserve for
    # data errors).
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Configuration file


def _build_endpoint(obj: dict) -> provider.JudgeEndpoint:
    try:
        return provider.JudgeEndpoint(
            endpoint_id=obj["endpoint_id"],
            base_url=obj["base_url"],
            model_name=obj["model_name"],
            temperature=float(obj.get("temperature", 0.0)),
            max_tokens=int(obj.get("max_tokens", 64)),
            auth_token_env=obj.get("auth_token_env"),
            completions_path=obj.get("completions_path", "/v1/chat/completions"),
            timeout=float(obj.get("timeout", 30.0)),
            parallelism=int(obj.get("parallelism", 4)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad endpoint entry {obj!r}: {exc}") from exc


def _build_template(spec) -> judging.PromptTemplate:
    if isinstance(spec, str):
        return judging.load_template(spec)
    if isinstance(spec, dict):
        try:
            return judging.load_template_files(spec["family"], spec["stages"])
        except (KeyError, OSError, judging.PromptError) as exc:
            raise ConfigError(f"bad template entry {spec!r}: {exc}") from exc
    raise ConfigError(f"template must be a family name or {{family, stages}}: {spec!r}")


def load_config(path: str | Path) -> dict:
    """Load a panel configuration file (JSON).

    Keys: panel_id, variant ("multi-prompt" | "multi-model"), endpoints,
    judges, policy, seed; optional cache path and passage_budget.
    """
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc

    try:
        endpoints = {}
        for entry in raw["endpoints"]:
            endpoint = _build_endpoint(entry)
            if endpoint.endpoint_id in endpoints:
                raise ConfigError(f"duplicate endpoint_id {endpoint.endpoint_id!r}")
            endpoints[endpoint.endpoint_id] = endpoint
        judges = []
        for entry in raw["judges"]:
            endpoint_id = entry["endpoint"]
            if endpoint_id not in endpoints:
                raise ConfigError(f"judge {entry.get('judge_id')!r} names unknown endpoint {endpoint_id!r}")
            judges.append(
                judging.JudgeConfig(
                    judge_id=entry["judge_id"],
                    endpoint=endpoints[endpoint_id],
                    template=_build_template(entry["template"]),
                )
            )
        panel = ensemble.Panel(
            panel_id=raw.get("panel_id", "panel"),
            variant=raw["variant"],
            judges=tuple(judges),
        )
        policy = ensemble.AggregationPolicy.from_string(
            raw.get("policy", "mv-avg"), rng_seed=int(raw.get("seed", 0))
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, judging.PromptError) as exc:
        raise ConfigError(f"config {path} is invalid: {exc}") from exc

    return {
        "panel": panel,
        "policy": policy,
        "seed": int(raw.get("seed", 0)),
        "cache": raw.get("cache"),
        "passage_budget": int(raw.get("passage_budget", judging.DEFAULT_PASSAGE_BUDGET)),
    }


def _make_client(config: dict) -> provider.CompletionClient:
    cache = provider.ResponseCache(config["cache"]) if config.get("cache") else None
    return provider.CompletionClient(cache=cache)


def _pairs_from_qrels(qrels, queries, passages):
    """The (query, passage) pairs named by a qrels file's keys."""
    pairs = []
    for qid, did in sorted(qrels.entries):
        if qid not in queries:
            raise corpus.ParseError(f"qrels references unknown query {qid!r}")
        if did not in passages:
            raise corpus.ParseError(f"qrels references unknown passage {did!r}")
        pairs.append((queries[qid], passages[did]))
    return pairs


def _load_runs(runs_dir: str | Path) -> list[corpus.RunRanking]:
    paths = sorted(p for p in Path(runs_dir).iterdir() if p.is_file())
    if not paths:
        raise corpus.ParseError(f"no run files in {runs_dir}")
    runs = []
    tags = set()
    for path in paths:
        run = corpus.load_run(path)
        if run.run_tag in tags:
            raise corpus.ParseError(f"duplicate run tag {run.run_tag!r} in {path}")
        tags.add(run.run_tag)
        runs.append(run)
    return sorted(runs, key=lambda r: r.run_tag)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _write_json(path: Path, obj) -> None:
    _write(path, json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Commands


def cmd_stats(args) -> int:
    qrels = corpus.load_qrels(args.qrels)
    queries = corpus.load_queries(args.queries)
    passages = corpus.load_passages(args.passages)
    stats = corpus.dataset_stats(qrels, queries, passages)
    hist = stats.label_histogram
    print(f"queries:  {stats.n_queries}")
    print(f"passages: {stats.n_passages}")
    print(f"qrels:    {stats.n_qrels}")
    print(
        "labels:   irrelevant={0} related={1} high.rel={2} perfect.rel={3}".format(
            hist[0], hist[1], hist[2], hist[3]
        )
    )
    if args.json:
        _write_json(
            Path(args.json),
            {
                "n_queries": stats.n_queries,
                "n_passages": stats.n_passages,
                "n_qrels": stats.n_qrels,
                "label_histogram": {str(k): v for k, v in hist.items()},
            },
        )
    return EXIT_OK


def _select_judge(panel: ensemble.Panel, judge_id: str | None) -> judging.JudgeConfig:
    if judge_id is None:
        if len(panel.judges) == 1:
            return panel.judges[0]
        raise ConfigError(
            "config defines several judges; pick one with --judge "
            f"({', '.join(j.judge_id for j in panel.judges)})"
        )
    for judge in panel.judges:
        if judge.judge_id == judge_id:
            return judge
    raise ConfigError(f"no judge {judge_id!r} in config")


def cmd_judge(args) -> int:
    config = load_config(args.config)
    judge = _select_judge(config["panel"], args.judge)
    qrels = corpus.load_qrels(args.qrels)
    queries = corpus.load_queries(args.queries)
    passages = corpus.load_passages(args.passages)
    pairs = _pairs_from_qrels(qrels, queries, passages)
    client = _make_client(config)
    records = judging.run_judge(
        client,
        judge,
        pairs,
        passage_budget=config["passage_budget"],
        fail_fast=args.strict,
    )
    out = Path(args.out) / f"{judge.judge_id}.jsonl"
    _write(out, judging.write_judgments(records))
    print(f"wrote {len(records)} judgments to {out}")
    return EXIT_OK


def _judgment_files(paths: list[str]) -> list[Path]:
    files: list[Path] = []
    for raw in paths:
        path = Path(raw)
        if path.is_dir():
            files.extend(sorted(path.glob("*.jsonl")))
        else:
            files.append(path)
    if not files:
        raise corpus.ParseError(f"no judgment files under {paths}")
    return files


def cmd_blend(args) -> int:
    if args.judgments:
        # Aggregate existing judgment files: no provider calls at all.
        policy = ensemble.AggregationPolicy.from_string(
            args.policy or "mv-avg", rng_seed=args.seed or 0
        )
        judgment_sets = [judging.load_judgments(p) for p in _judgment_files(args.judgments)]
        blended, aggregates = ensemble.aggregate_panel(
            judgment_sets, policy, panel_id=args.panel_id, strict=args.strict
        )
        out = Path(args.out)
        _write(out / "blended.qrels", corpus.write_qrels(blended))
        _write(out / "blended.sidecar.jsonl", ensemble.write_aggregates(aggregates))
    else:
        if not (args.config and args.qrels and args.queries and args.passages):
            raise ConfigError(
                "blend needs either --judgments or all of --config/--qrels/--queries/--passages"
            )
        config = load_config(args.config)
        policy = config["policy"]
        if args.policy:
            policy = ensemble.AggregationPolicy.from_string(args.policy, rng_seed=policy.rng_seed)
        if args.seed is not None:
            policy = ensemble.AggregationPolicy(
                kind=policy.kind, tie_break=policy.tie_break, rng_seed=args.seed
            )
        qrels = corpus.load_qrels(args.qrels)
        queries = corpus.load_queries(args.queries)
        passages = corpus.load_passages(args.passages)
        pairs = _pairs_from_qrels(qrels, queries, passages)
        client = _make_client(config)
        blended, aggregates = ensemble.blend_run(
            client,
            config["panel"],
            policy,
            pairs,
            out_dir=args.out,
            passage_budget=config["passage_budget"],
            fail_fast=args.strict,
            strict=args.strict,
        )
    ties = sum(1 for a in aggregates if a.tie_occurred)
    print(
        f"blended {len(blended)} pairs with {policy.to_string()} "
        f"({ties} ties) into {Path(args.out) / 'blended.qrels'}"
    )
    return EXIT_OK


def cmd_agreement(args) -> int:
    gold = corpus.load_qrels(args.qrels)
    generated = corpus.load_qrels(args.generated, source_tag="generated")
    report = metrics.agreement_report(gold, generated, alpha_level=args.alpha_level)
    print(report.to_text(), end="")
    if args.out:
        out = Path(args.out)
        _write_json(out / "agreement.json", report.to_json_dict())
        _write(out / "confusion.csv", report.matrix.to_csv())
        _write(out / "confusion_binary.csv", report.binary.to_csv())
    return EXIT_OK


def cmd_rank_eval(args) -> int:
    gold = corpus.load_qrels(args.qrels)
    generated = corpus.load_qrels(args.generated, source_tag="generated")
    runs = _load_runs(args.runs)
    metric, k = harness.parse_metric(args.metric)
    scores = harness.system_scores(runs, gold, generated, metric, k)
    correlation = harness.system_ranking_correlation(gold, generated, runs, metric, k)
    categories = {}
    if args.categories:
        with open(args.categories, encoding="utf-8") as handle:
            categories = harness.parse_categories(handle)
    points = harness.bias_scatter(
        {s.run_tag: s.value_under_gold for s in scores},
        {s.run_tag: s.value_under_generated for s in scores},
        categories,
    )
    residuals = harness.category_residuals(points)

    out = Path(args.out)
    score_lines = ["run_tag,metric,gold_score,generated_score"]
    for score in scores:
        score_lines.append(
            f"{score.run_tag},{score.metric},"
            f"{score.value_under_gold!r},{score.value_under_generated!r}"
        )
    _write(out / "system_scores.csv", "\n".join(score_lines) + "\n")
    _write_json(
        out / "correlation.json",
        {
            "metric": args.metric,
            "n_systems": correlation.n_systems,
            "tau": correlation.tau,
            "rho": correlation.rho,
            "category_residuals": residuals,
        },
    )
    _write(out / "bias_scatter.csv", harness.scatter_csv(points))
    print(
        f"{args.metric}: tau={metrics.display_statistic(correlation.tau)} "
        f"rho={metrics.display_statistic(correlation.rho)} over {correlation.n_systems} systems"
    )
    return EXIT_OK


def cmd_report(args) -> int:
    gold = corpus.load_qrels(args.qrels)
    generated = corpus.load_qrels(args.generated, source_tag="generated")
    runs = _load_runs(args.runs) if args.runs else None
    row = harness.report_row(
        gold, generated, runs, alpha_level=args.alpha_level, label=args.label
    )
    print(harness.render_report_row(row), end="")
    if args.out:
        _write_json(Path(args.out) / "report.json", row)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> _Parser:
    parser = _Parser(prog="judgepanel", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="dataset statistics")
    p.add_argument("--qrels", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--passages", required=True)
    p.add_argument("--json", help="also write the statistics as JSON")
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("judge", help="run one judge over the pairs of a qrels file")
    p.add_argument("--config", required=True)
    p.add_argument("--judge", help="judge_id from the config (optional if single)")
    p.add_argument("--qrels", required=True, help="pairs to judge (labels unused)")
    p.add_argument("--queries", required=True)
    p.add_argument("--passages", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--strict", action="store_true")
    p.set_defaults(fn=cmd_judge)

    p = sub.add_parser(
        "blend",
        help="fuse judgment files per a policy, or run a whole panel and fuse it",
    )
    p.add_argument(
        "--judgments", nargs="+",
        help="judgment JSONL files (or a directory of them) to aggregate",
    )
    p.add_argument("--config", help="panel config (required without --judgments)")
    p.add_argument("--qrels", help="pairs to judge (labels unused)")
    p.add_argument("--queries")
    p.add_argument("--passages")
    p.add_argument("--out", required=True)
    p.add_argument("--policy", choices=ensemble.POLICY_NAMES)
    p.add_argument("--seed", type=int)
    p.add_argument("--panel-id", default="panel", help="tag for aggregated output")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(fn=cmd_blend)

    p = sub.add_parser("agreement", help="label agreement of generated vs gold qrels")
    p.add_argument("--qrels", required=True, help="gold qrels")
    p.add_argument("--generated", required=True)
    p.add_argument("--alpha-level", choices=metrics.ALPHA_LEVELS, default="interval")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_agreement)

    p = sub.add_parser("rank-eval", help="system scores and ranking correlation")
    p.add_argument("--qrels", required=True, help="gold qrels")
    p.add_argument("--generated", required=True)
    p.add_argument("--runs", required=True, help="directory of TREC run files")
    p.add_argument("--metric", default="ndcg@10", help="ndcg@<k> or map")
    p.add_argument("--categories", help="run_tag,category CSV for the bias analysis")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_rank_eval)

    p = sub.add_parser("report", help="one summary row for a generated qrels set")
    p.add_argument("--qrels", required=True, help="gold qrels")
    p.add_argument("--generated", required=True)
    p.add_argument("--runs", help="directory of TREC run files (optional)")
    p.add_argument("--alpha-level", choices=metrics.ALPHA_LEVELS, default="interval")
    p.add_argument("--label", default="generated")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, judging.PromptError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except provider.CacheIOError as exc:
        print(f"cache error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except provider.ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (corpus.ParseError, metrics.MetricsError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
