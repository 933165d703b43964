#!/usr/bin/env python3
"""The whole pipeline through the command-line interface.

Builds a small collection on disk, then drives: stats -> blend (a
three-judge mock panel) -> agreement -> rank-eval -> report. Everything
runs offline against deterministic mock endpoints; point the endpoints at
any chat-completion server by editing base_url in the panel config.
"""

import json
import random
import tempfile
from pathlib import Path

from judgepanel import Passage, QrelsSet, Query, RunRanking, cli
from judgepanel.corpus import write_passages, write_qrels, write_queries, write_run

root = Path(tempfile.mkdtemp(prefix="judgepanel-demo-"))
print(f"working in {root}\n")

# --- Collection files ----------------------------------------------------
rng = random.Random(3)
gold = QrelsSet(source_tag="human")
queries, passages = {}, {}
for qi in range(6):
    qid = f"q{qi}"
    queries[qid] = f"demo question number {qi}"
    for di in range(10):
        did = f"d{qi}_{di}"
        label = rng.randrange(4)
        gold.add(qid, did, label)
        # The [gold=N] marker is what the copy-gold mock profile echoes;
        # a real model only ever sees the passage text you give it.
        passages[did] = f"demo passage {qi}/{di} [gold={label}]"

(root / "gold.qrels").write_text(write_qrels(gold))
(root / "queries.tsv").write_text(write_queries({k: Query(k, v) for k, v in queries.items()}))
(root / "passages.tsv").write_text(write_passages({k: Passage(k, v) for k, v in passages.items()}))

# Three synthetic systems to rank.
runs_dir = root / "runs"
runs_dir.mkdir()
for quality, tag in enumerate(["good", "fair", "poor"]):
    rankings = {}
    for qid in gold.query_ids():
        noise = quality * 1.2
        scored = [
            (did, int(label) + rng.uniform(-noise, noise))
            for did, label in gold.for_query(qid).items()
        ]
        rankings[qid] = sorted(scored, key=lambda item: (-item[1], item[0]))
    (runs_dir / f"{tag}.run").write_text(write_run(RunRanking(tag, rankings)))

(root / "categories.csv").write_text("good,GPT\nfair,T5\npoor,other\n")

# --- Panel configuration -------------------------------------------------
config = {
    "panel_id": "demo-trio",
    "variant": "multi-model",
    "policy": "mv-avg",
    "seed": 42,
    "endpoints": [
        {"endpoint_id": "e0", "base_url": "mock:copy-gold", "model_name": "model-a"},
        {"endpoint_id": "e1", "base_url": "mock:digest?seed=1", "model_name": "model-b"},
        {"endpoint_id": "e2", "base_url": "mock:digest?seed=2", "model_name": "model-c"},
    ],
    "judges": [
        {"judge_id": "ja", "endpoint": "e0", "template": "direct_grading"},
        {"judge_id": "jb", "endpoint": "e1", "template": "two_step"},
        {"judge_id": "jc", "endpoint": "e2", "template": "multi_criteria"},
    ],
}
(root / "panel.json").write_text(json.dumps(config, indent=2))

# --- Drive the CLI --------------------------------------------------------
def run(*argv):
    print(f"$ judgepanel {' '.join(argv)}")
    code = cli.main(list(argv))
    assert code == 0, f"exit code {code}"
    print()

run("stats", "--qrels", str(root / "gold.qrels"),
    "--queries", str(root / "queries.tsv"), "--passages", str(root / "passages.tsv"))

run("blend", "--config", str(root / "panel.json"),
    "--qrels", str(root / "gold.qrels"), "--queries", str(root / "queries.tsv"),
    "--passages", str(root / "passages.tsv"), "--out", str(root / "out"))

run("agreement", "--qrels", str(root / "gold.qrels"),
    "--generated", str(root / "out" / "blended.qrels"), "--out", str(root / "out" / "agreement"))

run("rank-eval", "--qrels", str(root / "gold.qrels"),
    "--generated", str(root / "out" / "blended.qrels"), "--runs", str(runs_dir),
    "--metric", "ndcg@10", "--categories", str(root / "categories.csv"),
    "--out", str(root / "out" / "rank"))

run("report", "--qrels", str(root / "gold.qrels"),
    "--generated", str(root / "out" / "blended.qrels"), "--runs", str(runs_dir),
    "--label", "demo-trio+mv-avg", "--out", str(root / "out"))

print("files produced:")
for path in sorted(p for p in root.rglob("*") if p.is_file()):
    print(f"  {path.relative_to(root)}")
