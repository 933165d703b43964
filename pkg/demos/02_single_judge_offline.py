#!/usr/bin/env python3
"""One judge, three prompt families, no network.

Endpoints with a ``mock:`` base URL are deterministic offline backends, so
everything here is reproducible byte for byte. The same code path drives
real chat-completion servers when given an http(s) base URL.
"""

from judgepanel import (
    CompletionClient,
    JudgeConfig,
    JudgeEndpoint,
    Passage,
    Query,
    judge_direct,
    judge_multicriteria,
    judge_two_step,
    load_template,
    parse_label,
)

query = Query("q1", "boiling point of water")
passage = Passage("d4", "Water boils at 100 degrees Celsius at sea level.")

# parse_label turns arbitrary model text into a grade plus a parse status.
for text in ("2", "Score: 3. The passage answers the query.", "hard to say"):
    label, status = parse_label(text)
    print(f"parse_label({text!r}) -> label {label}, {status}")

# A mock endpoint that derives a pseudo-random label from (seed, prompt).
endpoint = JudgeEndpoint(
    endpoint_id="demo", base_url="mock:digest?seed=11", model_name="offline-judge"
)
client = CompletionClient()

# Direct grading: one call, one grade in 0..3.
cfg = JudgeConfig("direct-judge", endpoint, load_template("direct_grading"))
record = judge_direct(client, cfg, query, passage)
print(f"\ndirect grading -> label {record.label} ({record.parse_status})")

# Two-step: a binary relevance verdict first; only passages judged relevant
# get the 1..3 grading call, so irrelevant passages cost a single call.
cfg = JudgeConfig("two-step-judge", endpoint, load_template("two_step"))
record = judge_two_step(client, cfg, query, passage)
print(f"two-step       -> label {record.label}, stages {record.stage_labels}")

# Multi-criteria: Exactness, Coverage, Topicality and Contextual Fit are each
# graded separately, then a fifth call fuses them into the final grade.
cfg = JudgeConfig("criteria-judge", endpoint, load_template("multi_criteria"))
record = judge_multicriteria(client, cfg, query, passage)
print(f"multi-criteria -> label {record.label}, stages {record.stage_labels}")

print(f"\nbackend calls so far: {client.backend_calls} (1 + <=2 + 5)")

# A judge is total: even a backend that never produces a number yields a
# valid record, flagged as defaulted rather than crashing the batch.
broken = JudgeEndpoint(
    endpoint_id="broken", base_url="mock:malformed?rate=1.0", model_name="word-salad"
)
cfg = JudgeConfig("broken-judge", broken, load_template("direct_grading"))
record = judge_direct(client, cfg, query, passage)
print(f"\nmalformed backend -> label {record.label} ({record.parse_status})")
print(f"raw text was: {record.raw_text!r}")
