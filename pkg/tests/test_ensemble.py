import itertools
import math
import random
from fractions import Fraction

import pytest

from judgepanel.corpus import write_qrels
from judgepanel.ensemble import (
    POLICY_NAMES,
    AggregationPolicy,
    Panel,
    aggregate_panel,
    average_vote,
    blend_run,
    majority_vote,
    pair_rng,
    round_half_up,
)
from judgepanel.judging import (
    FAMILY_DIRECT,
    FAMILY_MULTI_CRITERIA,
    FAMILY_TWO_STEP,
    JudgeConfig,
    JudgmentRecord,
    load_template,
    run_judge,
)
from judgepanel.provider import CompletionClient, JudgeEndpoint

from conftest import make_pair


# ---------------------------------------------------------------------------
# Independent reference aggregator (kept deliberately simple-minded: list
# counting and exact rational arithmetic, no shared code with the module).


def reference_half_up(value: Fraction) -> int:
    return math.floor(value + Fraction(1, 2))


def reference_aggregate(labels, policy_name, seed=0):
    distinct = sorted(set(labels))
    frequencies = {v: list(labels).count(v) for v in distinct}
    top = max(frequencies.values())
    modes = [v for v in distinct if frequencies[v] == top]
    if policy_name == "av":
        return reference_half_up(Fraction(sum(labels), len(labels)))
    if len(modes) == 1:
        return modes[0]
    if policy_name == "mv-max":
        return max(modes)
    if policy_name == "mv-min":
        return min(modes)
    if policy_name == "mv-avg":
        return reference_half_up(Fraction(sum(modes), len(modes)))
    if policy_name == "mv-rnd":
        return random.Random(seed).choice(modes)
    raise AssertionError(policy_name)


def apply_policy(labels, policy_name, seed=0):
    if policy_name == "av":
        return average_vote(labels)[1]
    tie_break = policy_name[3:]
    rng = random.Random(seed) if tie_break == "rnd" else None
    return majority_vote(labels, tie_break, rng)[0]


# ---------------------------------------------------------------------------
# Vote functions


class TestRoundHalfUp:
    @pytest.mark.parametrize(
        "value,expected", [(0.5, 1), (1.5, 2), (2.5, 3), (0.49, 0), (1.0, 1), (5 / 3, 2)]
    )
    def test_halves_go_up(self, value, expected):
        assert round_half_up(value) == expected


class TestMajorityVote:
    def test_unique_mode_no_tie(self):
        for tie_break in ("rnd", "max", "min", "avg"):
            rng = random.Random(0)
            assert majority_vote([2, 2, 1], tie_break, rng) == (2, False)

    def test_two_way_tie(self):
        assert majority_vote([1, 3], "max") == (3, True)
        assert majority_vote([1, 3], "min") == (1, True)
        assert majority_vote([1, 3], "avg") == (2, True)
        label, tie = majority_vote([1, 3], "rnd", random.Random(5))
        assert tie and label in (1, 3)

    def test_all_distinct_all_tied(self):
        # Four singleton frequencies: the whole set is the mode set.
        assert majority_vote([0, 1, 2, 3], "avg") == (2, True)  # mean 1.5 rounds up
        assert majority_vote([0, 1, 2, 3], "min") == (0, True)
        assert majority_vote([0, 1, 2, 3], "max") == (3, True)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            majority_vote([], "avg")

    def test_unknown_tie_break(self):
        with pytest.raises(ValueError):
            majority_vote([1], "median")

    def test_rnd_requires_rng(self):
        with pytest.raises(ValueError):
            majority_vote([1, 2], "rnd", None)


class TestAverageVote:
    def test_unanimous(self):
        assert average_vote([2, 2, 2]) == (2.0, 2)

    def test_half_up(self):
        assert average_vote([0, 1]) == (0.5, 1)

    def test_thirds(self):
        fractional, label = average_vote([1, 2, 2])
        assert fractional == pytest.approx(5 / 3)
        assert label == 2

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            average_vote([])


class TestAggregatorOracle:
    def all_cases(self):
        for size in range(1, 6):
            yield from itertools.product(range(4), repeat=size)

    def test_exhaustive_against_reference(self):
        cases = list(self.all_cases())
        assert len(cases) == 4 + 16 + 64 + 256 + 1024 == 1364
        for labels in cases:
            for policy_name in POLICY_NAMES:
                expected = reference_aggregate(labels, policy_name, seed=17)
                actual = apply_policy(list(labels), policy_name, seed=17)
                assert actual == expected, (labels, policy_name)

    def test_unanimity(self):
        for value in range(4):
            for size in range(1, 6):
                labels = [value] * size
                for policy_name in POLICY_NAMES:
                    assert apply_policy(labels, policy_name) == value
                tie = majority_vote(labels, "avg")[1]
                assert tie is False

    def test_boundedness(self):
        for labels in self.all_cases():
            for policy_name in POLICY_NAMES:
                result = apply_policy(list(labels), policy_name, seed=3)
                assert min(labels) <= result <= max(labels), (labels, policy_name)

    def test_permutation_invariance(self):
        rng = random.Random(23)
        for labels in self.all_cases():
            shuffled = list(labels)
            rng.shuffle(shuffled)
            for policy_name in POLICY_NAMES:
                assert apply_policy(list(labels), policy_name, seed=5) == apply_policy(
                    shuffled, policy_name, seed=5
                )

    def test_tie_break_ordering(self):
        for labels in self.all_cases():
            low, tie = majority_vote(list(labels), "min")
            if not tie:
                continue
            mid = majority_vote(list(labels), "avg")[0]
            high = majority_vote(list(labels), "max")[0]
            drawn = majority_vote(list(labels), "rnd", random.Random(1))[0]
            assert low <= mid <= high
            assert drawn in set(labels)


# ---------------------------------------------------------------------------
# Policies and panels


class TestAggregationPolicy:
    def test_round_trip_names(self):
        for name in POLICY_NAMES:
            assert AggregationPolicy.from_string(name).to_string() == name

    def test_mv_requires_tie_break(self):
        with pytest.raises(ValueError):
            AggregationPolicy(kind="mv")

    def test_av_refuses_tie_break(self):
        with pytest.raises(ValueError):
            AggregationPolicy(kind="av", tie_break="max")

    def test_unknown_policy_name(self):
        with pytest.raises(ValueError):
            AggregationPolicy.from_string("mv-median")


def endpoint(endpoint_id, url):
    return JudgeEndpoint(endpoint_id=endpoint_id, base_url=url, model_name=endpoint_id)


def judge(judge_id, endpoint_obj, family=FAMILY_DIRECT):
    return JudgeConfig(judge_id, endpoint_obj, load_template(family))


def multi_model_panel(urls, families=None):
    families = families or [FAMILY_DIRECT] * len(urls)
    judges = tuple(
        judge(f"j{i}", endpoint(f"e{i}", url), family)
        for i, (url, family) in enumerate(zip(urls, families))
    )
    return Panel(panel_id="panel", variant="multi-model", judges=judges)


class TestPanelInvariants:
    def test_multi_prompt_shares_endpoint_distinct_templates(self):
        shared = endpoint("e0", "mock:digest?seed=1")
        panel = Panel(
            "p",
            "multi-prompt",
            (
                judge("j0", shared, FAMILY_DIRECT),
                judge("j1", shared, FAMILY_TWO_STEP),
                judge("j2", shared, FAMILY_MULTI_CRITERIA),
            ),
        )
        assert len(panel.judges) == 3

    def test_multi_prompt_rejects_second_endpoint(self):
        with pytest.raises(ValueError, match="one endpoint"):
            Panel(
                "p",
                "multi-prompt",
                (
                    judge("j0", endpoint("e0", "mock:digest?seed=1")),
                    judge("j1", endpoint("e1", "mock:digest?seed=2"), FAMILY_TWO_STEP),
                ),
            )

    def test_multi_prompt_rejects_duplicate_templates(self):
        shared = endpoint("e0", "mock:digest?seed=1")
        with pytest.raises(ValueError, match="distinct templates"):
            Panel("p", "multi-prompt", (judge("j0", shared), judge("j1", shared)))

    def test_multi_model_requires_distinct_endpoints(self):
        shared = endpoint("e0", "mock:digest?seed=1")
        with pytest.raises(ValueError, match="distinct endpoints"):
            Panel("p", "multi-model", (judge("j0", shared), judge("j1", shared, FAMILY_TWO_STEP)))

    def test_duplicate_judge_ids(self):
        with pytest.raises(ValueError, match="unique"):
            Panel(
                "p",
                "multi-model",
                (
                    judge("j0", endpoint("e0", "mock:digest?seed=1")),
                    judge("j0", endpoint("e1", "mock:digest?seed=2"), FAMILY_TWO_STEP),
                ),
            )

    def test_empty_panel(self):
        with pytest.raises(ValueError):
            Panel("p", "multi-model", ())


def records_for(judge_id, labeled_pairs):
    return [
        JudgmentRecord(qid, did, judge_id, label, str(label), "clean")
        for qid, did, label in labeled_pairs
    ]


class TestAggregatePanel:
    def test_single_judge_identity(self):
        pairs = [("q1", "d1", 2), ("q1", "d2", 0), ("q2", "d1", 3)]
        for name in POLICY_NAMES:
            policy = AggregationPolicy.from_string(name, rng_seed=4)
            qrels, aggregates = aggregate_panel([records_for("j0", pairs)], policy)
            assert {k: int(v) for k, v in qrels.entries.items()} == {
                ("q1", "d1"): 2,
                ("q1", "d2"): 0,
                ("q2", "d1"): 3,
            }
            assert all(not a.tie_occurred for a in aggregates)

    def test_unanimous_judges_reproduce_labels(self):
        pairs = [("q1", "d1", 1), ("q1", "d2", 3)]
        sets = [records_for(f"j{i}", pairs) for i in range(3)]
        for name in POLICY_NAMES:
            qrels, _ = aggregate_panel(sets, AggregationPolicy.from_string(name))
            assert {k: int(v) for k, v in qrels.entries.items()} == {
                ("q1", "d1"): 1,
                ("q1", "d2"): 3,
            }

    def test_matches_reference_per_pair(self):
        rng = random.Random(31)
        pairs = [(f"q{i % 4}", f"d{i}") for i in range(60)]
        sets = []
        for j in range(3):
            sets.append(
                records_for(f"j{j}", [(qid, did, rng.randrange(4)) for qid, did in pairs])
            )
        by_pair = {}
        for records in sets:
            for record in records:
                by_pair.setdefault((record.query_id, record.doc_id), []).append(record.label)
        for name in ("mv-avg", "mv-max", "mv-min", "av"):
            qrels, _ = aggregate_panel(sets, AggregationPolicy.from_string(name))
            for key, labels in by_pair.items():
                assert int(qrels.entries[key]) == reference_aggregate(labels, name), (key, name)

    def test_rnd_reproducible_and_order_independent(self):
        pairs = [(f"q{i % 3}", f"d{i}", i % 4) for i in range(30)]
        sets = [
            records_for("j0", pairs),
            records_for("j1", [(q, d, (v + 1) % 4) for q, d, v in pairs]),
        ]
        policy = AggregationPolicy.from_string("mv-rnd", rng_seed=99)
        first, _ = aggregate_panel(sets, policy)
        second, _ = aggregate_panel(list(reversed(sets)), policy)
        assert first.entries == second.entries
        shuffled = [list(reversed(records)) for records in sets]
        third, _ = aggregate_panel(shuffled, policy)
        assert first.entries == third.entries

    def test_rnd_draw_is_pair_local(self):
        # Removing other pairs does not change a pair's draw.
        sets = [
            records_for("j0", [("q1", "d1", 0), ("q1", "d2", 1)]),
            records_for("j1", [("q1", "d1", 3), ("q1", "d2", 2)]),
        ]
        policy = AggregationPolicy.from_string("mv-rnd", rng_seed=12)
        full, _ = aggregate_panel(sets, policy)
        solo, _ = aggregate_panel(
            [records_for("j0", [("q1", "d1", 0)]), records_for("j1", [("q1", "d1", 3)])],
            policy,
        )
        assert full.entries[("q1", "d1")] == solo.entries[("q1", "d1")]

    def test_tie_flag_recorded(self):
        sets = [
            records_for("j0", [("q1", "d1", 1)]),
            records_for("j1", [("q1", "d1", 3)]),
        ]
        _, aggregates = aggregate_panel(sets, AggregationPolicy.from_string("mv-avg"))
        assert aggregates[0].tie_occurred
        assert aggregates[0].per_judge == {"j0": 1, "j1": 3}

    def test_av_fractional_score(self):
        sets = [
            records_for("j0", [("q1", "d1", 1)]),
            records_for("j1", [("q1", "d1", 2)]),
            records_for("j2", [("q1", "d1", 2)]),
        ]
        qrels, aggregates = aggregate_panel(sets, AggregationPolicy.from_string("av"))
        assert aggregates[0].fractional_score == pytest.approx(5 / 3)
        assert int(qrels.entries[("q1", "d1")]) == 2

    def test_disjoint_coverage_unions_with_warning(self, caplog):
        sets = [
            records_for("j0", [("q1", "d1", 2)]),
            records_for("j1", [("q1", "d2", 3)]),
        ]
        with caplog.at_level("WARNING"):
            qrels, aggregates = aggregate_panel(sets, AggregationPolicy.from_string("mv-avg"))
        assert len(qrels) == 2
        assert any("different pair sets" in r.message for r in caplog.records)
        assert {a.doc_id: a.per_judge for a in aggregates} == {
            "d1": {"j0": 2},
            "d2": {"j1": 3},
        }

    def test_strict_coverage_errors(self):
        sets = [
            records_for("j0", [("q1", "d1", 2)]),
            records_for("j1", [("q1", "d2", 3)]),
        ]
        with pytest.raises(ValueError, match="different pair sets"):
            aggregate_panel(sets, AggregationPolicy.from_string("mv-avg"), strict=True)

    def test_source_tag_names_panel_and_policy(self):
        sets = [records_for("j0", [("q1", "d1", 2)])]
        qrels, _ = aggregate_panel(
            sets, AggregationPolicy.from_string("mv-max"), panel_id="trio"
        )
        assert qrels.source_tag == "trio:mv-max"

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            aggregate_panel([], AggregationPolicy.from_string("av"))


class TestBlendRun:
    def test_artifacts_on_disk(self, tmp_path):
        panel = multi_model_panel(
            ["mock:digest?seed=1", "mock:digest?seed=2", "mock:digest?seed=3"]
        )
        pairs = [make_pair(f"q{i % 2}", f"d{i}") for i in range(10)]
        policy = AggregationPolicy.from_string("mv-avg")
        qrels, aggregates = blend_run(
            CompletionClient(), panel, policy, pairs, out_dir=tmp_path
        )
        judgment_files = sorted(p.name for p in (tmp_path / "judgments").iterdir())
        assert judgment_files == ["j0.jsonl", "j1.jsonl", "j2.jsonl"]
        assert (tmp_path / "blended.qrels").read_text() == write_qrels(qrels)
        assert len((tmp_path / "blended.sidecar.jsonl").read_text().splitlines()) == 10
        assert len(qrels) == len(aggregates) == 10

    def test_byte_identical_across_runs(self, tmp_path):
        panel = multi_model_panel(
            ["mock:digest?seed=1", "mock:digest?seed=2", "mock:malformed?rate=0.2&seed=3"],
            families=[FAMILY_DIRECT, FAMILY_TWO_STEP, FAMILY_MULTI_CRITERIA],
        )
        pairs = [make_pair(f"q{i % 3}", f"d{i}") for i in range(12)]
        policy = AggregationPolicy.from_string("mv-rnd", rng_seed=8)
        for out in ("one", "two"):
            blend_run(CompletionClient(), panel, policy, pairs, out_dir=tmp_path / out)
        for name in ("blended.qrels", "blended.sidecar.jsonl", "judgments/j0.jsonl",
                     "judgments/j1.jsonl", "judgments/j2.jsonl"):
            assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()

    def test_min_policy_below_max_policy(self):
        rng = random.Random(77)
        for trial in range(5):
            urls = [f"mock:digest?seed={rng.randrange(1000)}" for _ in range(3)]
            panel = multi_model_panel(urls)
            pairs = [make_pair(f"q{i % 2}", f"d{i}") for i in range(15)]
            low, _ = blend_run(
                CompletionClient(), panel, AggregationPolicy.from_string("mv-min"), pairs
            )
            high, _ = blend_run(
                CompletionClient(), panel, AggregationPolicy.from_string("mv-max"), pairs
            )
            for key in low.entries:
                assert int(low.entries[key]) <= int(high.entries[key])
