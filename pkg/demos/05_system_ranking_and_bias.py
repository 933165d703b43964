#!/usr/bin/env python3
"""Do generated judgments rank retrieval systems the way gold ones do?

Scores a set of synthetic runs under gold and generated qrels with NDCG@10
and MAP, correlates the two system orderings (Kendall's tau-b, Spearman's
rho), and breaks score residuals down by system category to expose judge
favoritism.
"""

import random

from judgepanel import (
    QrelsSet,
    RunRanking,
    bias_scatter,
    category_residuals,
    evaluate_runs,
    system_ranking_correlation,
)
from judgepanel.harness import scatter_csv

rng = random.Random(9)

# Gold judgments over 8 queries x 30 passages.
gold = QrelsSet(source_tag="human")
for qi in range(8):
    for di in range(30):
        gold.add(f"q{qi}", f"d{qi}_{di}", rng.choices(range(4), weights=(5, 3, 2, 1))[0])

# Six systems of decreasing quality: each ranks by gold label plus noise.
runs = []
for quality, tag in enumerate(["alpha", "bravo", "charlie", "delta", "echo", "foxtrot"]):
    noise = quality * 0.8
    rankings = {}
    for qid in gold.query_ids():
        scored = [
            (did, int(label) + rng.uniform(-noise, noise))
            for did, label in gold.for_query(qid).items()
        ]
        rankings[qid] = sorted(scored, key=lambda item: (-item[1], item[0]))
    runs.append(RunRanking(tag, rankings))

# A generated judge that slightly under-grades everything.
generated = QrelsSet(source_tag="stingy-judge")
for key, label in gold.entries.items():
    drop = rng.random() < 0.25
    generated.add(*key, max(0, int(label) - 1) if drop else int(label))

for metric, k in (("ndcg", 10), ("map", 0)):
    name = f"ndcg@{k}" if metric == "ndcg" else "map"
    under_gold = evaluate_runs(runs, gold, metric, k)
    under_generated = evaluate_runs(runs, generated, metric, k)
    print(f"\nsystem scores under {name}:")
    print(f"  {'system':<10} {'gold':>7} {'generated':>10}")
    for tag in sorted(under_gold, key=under_gold.get, reverse=True):
        print(f"  {tag:<10} {under_gold[tag]:7.4f} {under_generated[tag]:10.4f}")
    correlation = system_ranking_correlation(gold, generated, runs, metric, k)
    print(f"  tau-b = {correlation.tau:.4f}, rho = {correlation.rho:.4f}")

# Bias analysis: does the generated judge favor one family of systems?
categories = {
    "alpha": "GPT", "bravo": "GPT", "charlie": "T5",
    "delta": "GPT+T5", "echo": "other", "foxtrot": "other",
}
under_gold = evaluate_runs(runs, gold, "ndcg", 10)
under_generated = evaluate_runs(runs, generated, "ndcg", 10)
points = bias_scatter(under_gold, under_generated, categories)
print("\nper-category mean residual (generated minus gold NDCG@10):")
for category, residual in category_residuals(points).items():
    print(f"  {category:<8} {residual:+.4f}")
print("\nscatter CSV (feed to any plotting tool):")
print(scatter_csv(points))
