#!/usr/bin/env python3
"""Label-level agreement between generated and gold judgments.

Builds a gold set and a systematically noisy generated set, then walks
through the agreement report: confusion matrix, per-level percentages, the
binary collapse, Cohen's kappa, and Krippendorff's alpha at its three
levels of measurement.
"""

import random

from judgepanel import QrelsSet, agreement_report, cohen_kappa, krippendorff_alpha
from judgepanel.metrics import display_percent

rng = random.Random(5)

gold = QrelsSet(source_tag="human")
generated = QrelsSet(source_tag="demo-panel:av")
for qi in range(20):
    for di in range(40):
        qid, did = f"q{qi}", f"d{qi}_{di}"
        label = rng.choices(range(4), weights=(45, 28, 18, 9))[0]
        gold.add(qid, did, label)
        # The generated judge is right 60% of the time and otherwise drifts
        # by one grade -- ordinal noise, like a real graded-relevance judge.
        if rng.random() < 0.6:
            generated.add(qid, did, label)
        else:
            generated.add(qid, did, min(3, max(0, label + rng.choice((-1, 1)))))

report = agreement_report(gold, generated)

print("confusion matrix (rows truth 0..3, columns predicted 0..3):")
for row in report.matrix.counts:
    print("  " + " ".join(f"{int(c):5d}" for c in row))

print("\nper-level agreement (diagonal share of each truth row):")
names = ("irrelevant", "related", "high.rel", "perfect.rel")
for level, name in enumerate(names):
    row_total = int(report.matrix.row_sums()[level])
    diag = int(report.matrix.counts[level][level])
    print(f"  {name:<12} {display_percent(diag, row_total)}%")

binary = report.binary
print("\nbinary collapse ({0,1} irrelevant vs {2,3} relevant):")
print(f"  counts: {binary.counts.tolist()}")
for level, name in enumerate(("irrelevant", "relevant")):
    row_total = int(binary.counts[level].sum())
    print(f"  {name:<12} {display_percent(int(binary.counts[level][level]), row_total)}%")

print(f"\nCohen's kappa: {report.kappa:.4f} (chance-corrected agreement)")
print(f"Krippendorff's alpha (interval): {report.alpha:.4f}")

# Alpha's level of measurement matters: nominal treats a 0-vs-3 confusion
# the same as 0-vs-1; interval and ordinal penalize distant disagreements
# more, which rewards this judge's adjacent-grade noise.
gold_labels = [int(v) for _, v in sorted(gold.entries.items())]
generated_labels = [int(v) for _, v in sorted(generated.entries.items())]
for level in ("nominal", "ordinal", "interval"):
    value = krippendorff_alpha(gold_labels, generated_labels, level)
    print(f"  alpha[{level}] = {value:.4f}")

print(f"\nkappa from the raw label vectors: {cohen_kappa(gold_labels, generated_labels):.4f}")
