#!/usr/bin/env python3
"""Parsing and writing the TREC-style file formats.

Walks through the four on-disk formats the toolkit speaks -- qrels, run
files, and tab-separated query/passage collections -- and the dataset
statistics computed over them.
"""

from judgepanel import (
    dataset_stats,
    parse_passages,
    parse_qrels,
    parse_queries,
    parse_run,
    write_qrels,
)

# A qrels file maps (query id, passage id) to a graded relevance label:
# 0 irrelevant, 1 related, 2 highly relevant, 3 perfectly relevant.
# Format: <qid> 0 <docid> <label>, whitespace-separated.
qrels_text = """\
q1 0 d1 3
q1 0 d2 1
q1 0 d3 0
q2 0 d1 2
q2 0 d4 0
"""
qrels = parse_qrels(qrels_text)
print("parsed qrels entries:")
for (qid, did), label in sorted(qrels.entries.items()):
    print(f"  {qid} {did} -> {int(label)}")

# Writing is canonical (sorted by query then doc), so write/parse round-trips.
assert parse_qrels(write_qrels(qrels)).entries == qrels.entries
print("\nround-trip through write_qrels is exact")

# A run file is one system's ranked output:
# <qid> Q0 <docid> <rank> <score> <tag>. Parsing sorts by descending score
# with ties broken by doc id, so line order never matters.
run = parse_run(
    """\
q1 Q0 d2 1 7.25 demo-system
q1 Q0 d1 2 9.5 demo-system
q2 Q0 d4 1 1.0 demo-system
q2 Q0 d1 2 1.0 demo-system
"""
)
print(f"\nrun tag: {run.run_tag}")
print(f"q1 ranking (by score): {run.ranked_docs('q1')}")
print(f"q2 ranking (tie broken by doc id): {run.ranked_docs('q2')}")

# Queries and passages are tab-separated: <id>\t<text>.
queries = parse_queries("q1\twho invented the telescope\nq2\tboiling point of water\n")
passages = parse_passages(
    "d1\tLippershey applied for a telescope patent in 1608.\n"
    "d2\tTelescopes come in many sizes.\n"
    "d3\tThe capital of France is Paris.\n"
    "d4\tWater boils at 100 degrees Celsius at sea level.\n"
)

stats = dataset_stats(qrels, queries, passages)
print(
    f"\ncollection: {stats.n_queries} queries, {stats.n_passages} passages, "
    f"{stats.n_qrels} judged pairs"
)
print(f"label histogram: {stats.label_histogram}")

# Malformed input never crashes silently: every parse error names the line.
try:
    parse_qrels("q1 0 d1 3\nq2 0 d9 seven\n")
except ValueError as exc:
    print(f"\nmalformed input is diagnosed: {exc}")
