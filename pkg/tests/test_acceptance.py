"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` (or ``-rA``) to see the
per-criterion lines.
"""

import itertools
import json
import random
import time
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest

from judgepanel import cli
from judgepanel.ensemble import POLICY_NAMES, AggregationPolicy, Panel, blend_run
from judgepanel.judging import FAMILY_DIRECT, JudgeConfig, load_template, run_judge
from judgepanel.metrics import (
    ConfusionMatrix,
    agreement_report,
    alpha_from_matrix,
    average_precision,
    binary_percentages,
    binary_collapse,
    cohen_kappa,
    display_percent,
    kappa_from_matrix,
    kendall_tau,
    krippendorff_alpha,
    ndcg_at_k,
    per_level_percentages,
    spearman_rho,
)
from judgepanel.provider import CompletionClient, JudgeEndpoint

from agreement_fixtures import (
    MATRIX_CRITERIA_JUDGE,
    MATRIX_EXPLAIN_JUDGE,
    MATRIX_MULTI_MODEL,
    MATRIX_MULTI_PROMPT,
    labels_from_matrix,
)
from conftest import synthetic_collection
from test_cli import write_collection, write_config, write_runs_dir
from test_ensemble import apply_policy, reference_aggregate
from test_metrics import (
    alpha_oracle,
    kappa_oracle,
    qrels_from,
    random_labels,
    random_vector_with_ties,
    rho_oracle,
    tau_oracle,
)


@contextmanager
def criterion(number, description):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {number}: FAIL — {description}")
        raise
    print(f"ACCEPTANCE {number}: PASS — {description}")


def test_criterion_1_kappa_reproduction():
    with criterion(1, "kappa from the reference matrices: 0.2553 and 0.2398 (±0.0005), <1s"):
        started = time.perf_counter()
        gold, pred = labels_from_matrix(MATRIX_MULTI_MODEL)
        assert abs(cohen_kappa(gold, pred) - 0.2553) < 0.0005
        gold, pred = labels_from_matrix(MATRIX_MULTI_PROMPT)
        assert abs(cohen_kappa(gold, pred) - 0.2398) < 0.0005
        assert time.perf_counter() - started < 1.0


def test_criterion_2_alpha_cross_check():
    with criterion(2, "interval alpha 0.4792 vs hand-derived coincidence oracle; nominal < 0.30"):
        matrix = ConfusionMatrix(np.array(MATRIX_MULTI_MODEL))
        interval = alpha_from_matrix(matrix, "interval")
        # Hand computation: D_o = 9004/8846, D_e = 152,914,160/78,242,870.
        d_o = Fraction(9004, 8846)
        d_e = Fraction(152_914_160, 78_242_870)
        hand_derived = float(1 - d_o / d_e)
        assert abs(interval - hand_derived) < 1e-12
        assert abs(interval - 0.4792) < 0.0005
        assert abs(interval - 0.4784) < 0.002  # the reference ordinal-family value
        assert alpha_from_matrix(matrix, "nominal") < 0.30


def test_criterion_3_percentage_reproduction():
    with criterion(3, "per-level and binary percentages match the reference tables"):
        criteria = ConfusionMatrix(np.array(MATRIX_CRITERIA_JUDGE))
        multi_model = ConfusionMatrix(np.array(MATRIX_MULTI_MODEL))
        multi_prompt = ConfusionMatrix(np.array(MATRIX_MULTI_PROMPT))
        explain = ConfusionMatrix(np.array(MATRIX_EXPLAIN_JUDGE))

        assert display_percent(int(criteria.counts[2][2]), int(criteria.row_sums()[2])) == "73.76"
        assert display_percent(int(multi_model.counts[3][3]), int(multi_model.row_sums()[3])) == "26.79"

        criteria_binary = binary_collapse(criteria)
        assert criteria_binary.counts.tolist() == [[1627, 1611], [151, 1034]]
        assert display_percent(1034, 1185) == "87.25"
        explain_binary = binary_collapse(explain)
        assert explain_binary.counts.tolist() == [[2945, 293], [700, 485]]
        assert display_percent(2945, 3238) == "90.95"
        assert display_percent(485, 1185) == "40.92"
        prompt_binary = binary_collapse(multi_prompt)
        assert prompt_binary.counts.tolist() == [[2356, 882], [331, 854]]
        assert display_percent(854, 1185) == "72.06"
        assert display_percent(2356, 3238) == "72.76"

        # Known typo in the reference irrelevant-row cell: the counts give
        # 1627/3238, whose rounded display is 50.25% (not 49.75%).
        irrelevant_pct = binary_percentages(criteria_binary)[0]
        assert round(irrelevant_pct, 2) == 50.25
        assert round(irrelevant_pct, 2) != 49.75


def test_criterion_4_aggregator_oracle():
    with criterion(4, "all five policies match brute force on all 1,364 multisets, <1s"):
        started = time.perf_counter()
        cases = [
            labels
            for size in range(1, 6)
            for labels in itertools.product(range(4), repeat=size)
        ]
        assert len(cases) == 1364
        for labels in cases:
            labels = list(labels)
            for policy_name in POLICY_NAMES:
                assert apply_policy(labels, policy_name, seed=11) == reference_aggregate(
                    labels, policy_name, seed=11
                )
            # Unanimity, boundedness, permutation invariance, tie ordering.
            from judgepanel.ensemble import majority_vote

            low, tie = majority_vote(labels, "min")
            mid = majority_vote(labels, "avg")[0]
            high = majority_vote(labels, "max")[0]
            assert min(labels) <= low <= mid <= high <= max(labels)
            if len(set(labels)) == 1:
                assert not tie and low == high == labels[0]
            reordered = list(reversed(labels))
            for policy_name in POLICY_NAMES:
                assert apply_policy(labels, policy_name, seed=2) == apply_policy(
                    reordered, policy_name, seed=2
                )
        assert time.perf_counter() - started < 1.0


def test_criterion_5_correlation_oracles():
    with criterion(5, "tau/rho vs brute force and kappa/alpha vs direct formulas, to 1e-12"):
        rng = random.Random(2024)
        for _ in range(200):
            x = random_vector_with_ties(rng)
            y = random_vector_with_ties(rng)
            while len(y) != len(x):
                y = random_vector_with_ties(rng)
            assert kendall_tau(x, y) == pytest.approx(tau_oracle(x, y), abs=1e-12)
            assert spearman_rho(x, y) == pytest.approx(rho_oracle(x, y), abs=1e-12)
        for _ in range(200):
            n = rng.randrange(2, 40)
            gold, pred = random_labels(rng, n), random_labels(rng, n)
            assert cohen_kappa(gold, pred) == pytest.approx(kappa_oracle(gold, pred), abs=1e-12)
            for level in ("nominal", "ordinal", "interval"):
                assert krippendorff_alpha(gold, pred, level) == pytest.approx(
                    alpha_oracle(gold, pred, level), abs=1e-12
                )


def test_criterion_6_ranking_metric_fixtures():
    with criterion(6, "NDCG descending=1.0, two-doc fixture 0.6309, AP fixture 1/3"):
        qrels = qrels_from({("q1", "d1"): 3, ("q1", "d2"): 2, ("q1", "d3"): 0})
        assert ndcg_at_k("q1", ["d1", "d2", "d3"], qrels, 10) == pytest.approx(1.0)

        two_doc = qrels_from({("q1", "d1"): 0, ("q1", "d2"): 3})
        assert ndcg_at_k("q1", ["d1", "d2"], two_doc, 2) == pytest.approx(0.6309, abs=1e-4)

        ap_qrels = qrels_from(
            {("q1", f"d{i}"): (2 if i == 3 else 0) for i in range(1, 6)}
        )
        ap = average_precision("q1", ["d1", "d2", "d3", "d4", "d5"], ap_qrels)
        assert ap == 1 / 3


def run_full_pipeline(tmp_path, out_name, *, urls, policy, seed):
    """judge x3 -> blend from judgment files -> agreement -> rank-eval,
    all through the CLI."""
    tmp_path.mkdir(parents=True, exist_ok=True)
    gold, paths = write_collection(tmp_path)
    config = write_config(tmp_path, urls=urls, policy=policy, seed=seed)
    runs_dir = write_runs_dir(tmp_path, gold)
    out = tmp_path / out_name
    for judge_id in ("j0", "j1", "j2"):
        assert cli.main(
            ["judge", "--config", str(config), "--judge", judge_id,
             "--qrels", str(paths["qrels"]), "--queries", str(paths["queries"]),
             "--passages", str(paths["passages"]), "--out", str(out / "judgments")]
        ) == 0
    assert cli.main(
        ["blend", "--judgments", str(out / "judgments"),
         "--policy", policy, "--seed", str(seed), "--panel-id", "trio",
         "--out", str(out)]
    ) == 0
    assert cli.main(
        ["agreement", "--qrels", str(paths["qrels"]),
         "--generated", str(out / "blended.qrels"), "--out", str(out / "agreement")]
    ) == 0
    assert cli.main(
        ["rank-eval", "--qrels", str(paths["qrels"]),
         "--generated", str(out / "blended.qrels"), "--runs", str(runs_dir),
         "--metric", "ndcg@10", "--out", str(out / "rank")]
    ) == 0
    produced = sorted(
        p.relative_to(out) for p in out.rglob("*") if p.is_file()
    )
    return out, produced


def test_criterion_7_pipeline_determinism(tmp_path):
    with criterion(7, "mock pipeline byte-identical across runs; gold-copy gives kappa=tau=rho=1"):
        urls = ["mock:digest?seed=1", "mock:digest?seed=2", "mock:malformed?rate=0.25&seed=3"]
        first, first_files = run_full_pipeline(
            tmp_path / "a", "out", urls=urls, policy="mv-rnd", seed=99
        )
        second, second_files = run_full_pipeline(
            tmp_path / "b", "out", urls=urls, policy="mv-rnd", seed=99
        )
        assert first_files == second_files and first_files
        for relative in first_files:
            assert (first / relative).read_bytes() == (second / relative).read_bytes(), relative

        gold_copy, _ = run_full_pipeline(
            tmp_path / "c", "out",
            urls=["mock:copy-gold", "mock:copy-gold?seed=2", "mock:copy-gold?seed=3"],
            policy="mv-avg", seed=7,
        )
        agreement = json.loads((gold_copy / "agreement" / "agreement.json").read_text())
        assert agreement["kappa"] == 1.0 and agreement["alpha"] == 1.0
        correlation = json.loads((gold_copy / "rank" / "correlation.json").read_text())
        assert correlation["tau"] == pytest.approx(1.0)
        assert correlation["rho"] == pytest.approx(1.0)


def test_criterion_8_throughput(benchmark_split):
    with criterion(8, "4,423 pairs x 3 mock judges < 5s; metrics suite < 1s"):
        gold, _, _, pairs = benchmark_split
        assert len(pairs) == 4423

        judges = [
            JudgeConfig(f"j{i}", JudgeEndpoint(f"e{i}", f"mock:digest?seed={i}", f"m{i}"),
                        load_template(FAMILY_DIRECT))
            for i in range(3)
        ]
        client = CompletionClient()
        started = time.perf_counter()
        judgment_sets = [run_judge(client, judge, pairs) for judge in judges]
        judging_time = time.perf_counter() - started
        assert judging_time < 5.0, f"judging took {judging_time:.2f}s"
        assert client.backend_calls == 3 * 4423

        from judgepanel.ensemble import aggregate_panel

        generated, _ = aggregate_panel(judgment_sets, AggregationPolicy.from_string("mv-avg"))
        started = time.perf_counter()
        report = agreement_report(gold, generated, alpha_level="interval")
        alpha_from_matrix(report.matrix, "nominal")
        alpha_from_matrix(report.matrix, "ordinal")
        per_level_percentages(report.matrix)
        binary_percentages(report.binary)
        metrics_time = time.perf_counter() - started
        assert metrics_time < 1.0, f"metrics took {metrics_time:.2f}s"
        assert report.matrix.n == 4423
        # Predictions cover every gold pair, so the comparison's truth rows
        # conserve the collection's label histogram.
        assert report.matrix.row_sums().tolist() == [2005, 1233, 808, 377]


def test_criterion_9_live_endpoint_smoke(tmp_path, live_chat_server):
    with criterion(9, "full pipeline over live chat-completion endpoint on a 10-query slice"):
        # End-to-end judgments that depend on specific hosted checkpoints and
        # the withheld ranking-system submissions are out of scope by design;
        # the statistics pipeline is pinned by criteria 1-3 instead. This
        # smoke test drives the real HTTP wire path against a live local
        # chat-completion server over a 10-query slice.
        gold, queries, passages, pairs = synthetic_collection(n_queries=10, docs_per_query=4)
        assert len(gold.query_ids()) == 10

        endpoints = [
            JudgeEndpoint(
                endpoint_id=f"live{i}",
                base_url=live_chat_server,
                model_name=f"live-model-{i}",
                completions_path="/v1/chat/completions",
            )
            for i in range(3)
        ]
        panel = Panel(
            "live-panel",
            "multi-model",
            tuple(
                JudgeConfig(f"j{i}", endpoint, load_template(FAMILY_DIRECT))
                for i, endpoint in enumerate(endpoints)
            ),
        )
        client = CompletionClient()
        generated, aggregates = blend_run(
            client,
            panel,
            AggregationPolicy.from_string("mv-avg"),
            pairs,
            out_dir=tmp_path / "live",
        )
        assert client.backend_calls == 3 * len(pairs)
        assert len(generated) == len(pairs)
        # The live server echoes the gold marker, so agreement is perfect.
        report = agreement_report(gold, generated)
        assert report.kappa == 1.0
        assert (tmp_path / "live" / "blended.qrels").exists()
