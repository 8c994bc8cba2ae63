from __future__ import annotations

import numpy as np
import pytest

from intentgraft.corpus import Corpus, EntitySpan, FixtureSpec, Record, corpus_to_lines, generate_fixture
from intentgraft.errors import PlanError, ValidationError
from intentgraft.rng import stream
from intentgraft.transforms import (
    Difficulty,
    EntitySplit,
    TransformPlan,
    VersionTarget,
    apply_composite_split,
    apply_entity_split,
    apply_version_conflict,
    build_eval_labels,
    detect_composite_families,
    difficulty_filter,
    record_gold,
    registry_from_plan,
    run_transform,
    transform_stats,
    transformed_inventory,
    validate_plan,
)

from conftest import make_record, span


def _corpus(records, split="train", inventory=None):
    if inventory is None:
        seen = set()
        for r in records:
            seen.update(r.labels)
        inventory = tuple(sorted(seen))
    return Corpus(name="t", split=split, records=tuple(records), inventory=inventory)


def _uniform_corpus(label: str, n: int, split="train") -> Corpus:
    recs = [make_record(f"{split}{i}", f"{label} text {i}", [label]) for i in range(n)]
    return _corpus(recs, split=split)


class TestVersionConflict:
    def test_k1_is_deterministic_relabel(self):
        c = _uniform_corpus("a", 5)
        plan = TransformPlan(version_targets=(VersionTarget("a", k=1),), seed=0)
        out = apply_version_conflict(c, plan, stream(0, "t"))
        assert all(r.labels == ("a@v1",) for r in out.records)
        assert "a" not in out.inventory
        assert "a@v1" in out.inventory

    def test_uniform_sampling_within_3_sigma(self):
        # Binomial(10000, 0.5): sigma = 50, so counts must lie in 5000 +/- 150.
        c = _uniform_corpus("a", 10000)
        plan = TransformPlan(version_targets=(VersionTarget("a", k=2),), seed=123)
        out = apply_version_conflict(c, plan, stream(123, "t"))
        count_v1 = sum(1 for r in out.records if r.labels == ("a@v1",))
        assert abs(count_v1 - 5000) <= 150

    def test_non_targeted_labels_unchanged(self):
        recs = [make_record("r1", "x", ["a"]), make_record("r2", "y", ["b"])]
        plan = TransformPlan(version_targets=(VersionTarget("a"),), seed=0)
        out = apply_version_conflict(_corpus(recs), plan, stream(0, "t"))
        assert out.records[1].labels == ("b",)
        assert "b" in out.inventory

    def test_absent_target_errors(self):
        plan = TransformPlan(version_targets=(VersionTarget("ghost"),), seed=0)
        with pytest.raises(PlanError, match="ghost"):
            apply_version_conflict(_uniform_corpus("a", 3), plan, stream(0, "t"))

    def test_gold_carries_version_family(self):
        c = _uniform_corpus("a", 4)
        plan = TransformPlan(version_targets=(VersionTarget("a", k=3),), seed=1)
        out = apply_version_conflict(c, plan, stream(1, "t"))
        for r in out.records:
            assert r.gold == ("a@v1", "a@v2", "a@v3")
            assert r.labels[0] in r.gold


class TestEntitySplit:
    def _flight_corpus(self):
        t1 = "monday morning i would like to fly to boston"
        t2 = "i would like to find a flight to vegas"
        recs = [
            make_record("w1", t1, ["flight"], [span("time", t1, "monday morning")]),
            make_record("w2", t2, ["flight"]),
        ]
        return _corpus(recs)

    def test_applicable_sub_intent_follows_entity(self):
        c = self._flight_corpus()
        plan = TransformPlan(entity_splits=(EntitySplit("flight", "time"),), seed=0)
        out = apply_entity_split(c, plan, stream(0, "t"))
        with_rec, without_rec = out.records
        assert with_rec.gold == ("flight", "flight#with_time")
        assert without_rec.gold == ("flight", "flight#without_time")

    def test_training_label_is_fair_coin_over_sub_and_full(self):
        t = "fly on monday"
        recs = [
            make_record(f"r{i}", t, ["flight"], [span("time", t, "monday")]) for i in range(2000)
        ]
        plan = TransformPlan(entity_splits=(EntitySplit("flight", "time"),), seed=7)
        out = apply_entity_split(_corpus(recs), plan, stream(7, "t"))
        n_sub = sum(1 for r in out.records if r.labels == ("flight#with_time",))
        n_full = sum(1 for r in out.records if r.labels == ("flight",))
        assert n_sub + n_full == 2000
        # Binomial(2000, 0.5): sigma ~ 22.4, allow 3 sigma.
        assert abs(n_sub - 1000) <= 68

    def test_inventory_gains_both_sub_intents(self):
        c = self._flight_corpus()
        plan = TransformPlan(entity_splits=(EntitySplit("flight", "time"),), seed=0)
        out = apply_entity_split(c, plan, stream(0, "t"))
        assert {"flight", "flight#with_time", "flight#without_time"} <= set(out.inventory)


class TestCompositeSplit:
    def test_two_atom_choice_set(self):
        recs = [make_record(f"r{i}", "need hotel and taxi", ["hotel", "taxi"]) for i in range(3000)]
        plan = TransformPlan(composite_split=True, seed=5)
        out = apply_composite_split(_corpus(recs), plan, stream(5, "t"))
        counts: dict[str, int] = {}
        for r in out.records:
            assert len(r.labels) == 1
            counts[r.labels[0]] = counts.get(r.labels[0], 0) + 1
        assert set(counts) == {"hotel", "taxi", "hotel&taxi"}
        # Uniform over 3 choices: mean 1000, sigma ~ 25.8, allow 3 sigma.
        for label, n in counts.items():
            assert abs(n - 1000) <= 78, (label, n)

    def test_three_atom_choice_set_has_four_options(self):
        recs = [make_record(f"r{i}", "x", ["a", "b", "c"]) for i in range(4000)]
        plan = TransformPlan(composite_split=True, seed=9)
        out = apply_composite_split(_corpus(recs), plan, stream(9, "t"))
        seen = {r.labels[0] for r in out.records}
        assert seen == {"a", "b", "c", "a&b&c"}

    def test_single_label_records_unchanged(self):
        recs = [make_record("r1", "x", ["a"]), make_record("r2", "y", ["b", "c"])]
        plan = TransformPlan(composite_split=True, seed=0)
        out = apply_composite_split(_corpus(recs), plan, stream(0, "t"))
        assert out.records[0].labels == ("a",)
        assert out.records[0].gold is None


class TestBuildEvalLabels:
    def test_versioned_gold(self):
        c = _uniform_corpus("a", 2, split="test")
        reg = registry_from_plan(TransformPlan(version_targets=(VersionTarget("a"),)))
        out = build_eval_labels(c, reg)
        assert all(r.labels == ("a@v1", "a@v2") for r in out.records)

    def test_multilabel_gold_includes_composite(self):
        recs = [make_record("r1", "x", ["hotel", "taxi"])]
        c = _corpus(recs, split="test")
        reg = registry_from_plan(TransformPlan()).with_composites({"hotel&taxi": ("hotel", "taxi")})
        out = build_eval_labels(c, reg)
        assert out.records[0].labels == ("hotel", "hotel&taxi", "taxi")

    def test_untransformed_label_is_identity(self):
        c = _uniform_corpus("plain", 1, split="valid")
        out = build_eval_labels(c, registry_from_plan(TransformPlan()))
        assert out.records[0].labels == ("plain",)

    def test_split_gold_depends_on_entities(self):
        t1 = "fly monday"
        recs = [
            make_record("r1", t1, ["flight"], [span("time", t1, "monday")]),
            make_record("r2", "fly somewhere", ["flight"]),
        ]
        c = _corpus(recs, split="test")
        reg = registry_from_plan(TransformPlan(entity_splits=(EntitySplit("flight", "time"),)))
        out = build_eval_labels(c, reg)
        assert out.records[0].labels == ("flight", "flight#with_time")
        assert out.records[1].labels == ("flight", "flight#without_time")

    def test_unknown_versioned_label_errors(self):
        recs = [make_record("r1", "x", ["ghost@v1"])]
        c = _corpus(recs, split="test")
        with pytest.raises(ValidationError, match="no family"):
            build_eval_labels(c, registry_from_plan(TransformPlan()))


class TestDifficultyFilter:
    def _plan_and_corpus(self):
        # Frequencies: a=30, b=20, c=10, d=5; splits: s1=8, s2=4.
        recs = []
        for label, n in (("a", 30), ("b", 20), ("c", 10), ("d", 5)):
            recs += [make_record(f"{label}{i}", f"{label} text", [label]) for i in range(n)]
        for label, n in (("s1", 8), ("s2", 4)):
            t = f"{label} on monday"
            recs += [
                make_record(f"{label}{i}", t, [label], [span("time", t, "monday")])
                for i in range(n)
            ]
        plan = TransformPlan(
            version_targets=tuple(VersionTarget(x) for x in ("a", "b", "c", "d")),
            entity_splits=(EntitySplit("s1", "time"), EntitySplit("s2", "time")),
            difficulty=Difficulty(mode="easy", k=1),
            seed=0,
        )
        return plan, _corpus(recs)

    def test_easy_1_keeps_two_version_families_and_one_split(self):
        plan, corpus = self._plan_and_corpus()
        out = difficulty_filter(plan, corpus)
        assert tuple(t.intent for t in out.version_targets) == ("a", "b")
        assert tuple(t.intent for t in out.entity_splits) == ("s1",)
        assert out.difficulty is None

    def test_normal_mode_is_identity(self):
        plan, corpus = self._plan_and_corpus()
        out = difficulty_filter(plan, corpus, mode="normal")
        assert out.version_targets == plan.version_targets
        assert out.entity_splits == plan.entity_splits

    def test_k_exceeding_families_errors(self):
        plan, corpus = self._plan_and_corpus()
        with pytest.raises(PlanError, match="exceeds"):
            difficulty_filter(plan, corpus, mode="easy", k=3)  # needs 6 version targets

    def test_ties_break_lexicographically(self):
        recs = [make_record(f"x{i}", "x", ["x"]) for i in range(5)]
        recs += [make_record(f"y{i}", "y", ["y"]) for i in range(5)]
        plan = TransformPlan(
            version_targets=(VersionTarget("y"), VersionTarget("x")),
            difficulty=Difficulty(mode="hard", k=1),
            seed=0,
        )
        out = difficulty_filter(plan, _corpus(recs))
        assert {t.intent for t in out.version_targets} == {"x", "y"}  # 2k = 2 keeps both

    def test_hard_1_single_family_selection(self):
        recs = [make_record(f"x{i}", "x", ["x"]) for i in range(5)]
        recs += [make_record(f"y{i}", "y", ["y"]) for i in range(3)]
        plan = TransformPlan(
            version_targets=(VersionTarget("y"), VersionTarget("x"), VersionTarget("z")),
            difficulty=Difficulty(mode="hard", k=1),
            seed=0,
        )
        recs += [make_record("z0", "z", ["z"])]
        out = difficulty_filter(plan, _corpus(recs))
        assert {t.intent for t in out.version_targets} == {"x", "y"}


class TestTransformStats:
    def test_hand_built_micro_corpus(self):
        # 3 families: version target v (4 records), split target s (4 records,
        # half with entity), composite pair {h, t} (2 records); 2 plain records.
        t_s = "s on monday"
        recs = (
            [make_record(f"v{i}", "v text", ["v"]) for i in range(4)]
            + [make_record("s0", t_s, ["s"], [span("time", t_s, "monday")]),
               make_record("s1", t_s, ["s"], [span("time", t_s, "monday")]),
               make_record("s2", "s plain", ["s"]),
               make_record("s3", "s plain", ["s"])]
            + [make_record(f"ht{i}", "h and t", ["h", "t"]) for i in range(2)]
            + [make_record(f"p{i}", "p text", ["plain"]) for i in range(2)]
        )
        train = _corpus(recs)
        valid = _corpus([make_record("va", "v text", ["v"])], split="valid")
        test = _corpus([make_record("te", "p text", ["plain"])], split="test")
        plan = TransformPlan(
            version_targets=(VersionTarget("v", k=2),),
            entity_splits=(EntitySplit("s", "time"),),
            composite_split=True,
            seed=3,
        )
        res = run_transform(train, valid, test, plan)
        s = res.stats
        # Hand-computed: VC-N = 2 versioned labels; MF-N = 1 split + 1 composite
        # family; untransformed = {plain}; total = 2 + 2 + 1 = 5.
        assert s.vc_n == 2
        assert s.mf_n == 2
        assert s.untransformed == 1
        assert s.total_labels == 5
        # Ratios: 4/12 version records, 6/12 merge-friction records.
        assert s.vc_r == pytest.approx(100.0 * 4 / 12)
        assert s.mf_r == pytest.approx(100.0 * 6 / 12)
        assert s.record_counts == {"train": 12, "valid": 1, "test": 1}

    def test_atis_shaped_label_columns(self):
        # 25 version targets (k=2) + 10 splits + 6 untouched = VC-N 50, MF-N 10,
        # Total 66.
        recs = []
        version_intents = [f"vi{i:02d}" for i in range(25)]
        split_intents = [f"si{i:02d}" for i in range(10)]
        plain_intents = [f"pi{i}" for i in range(6)]
        for lab in version_intents:
            recs += [make_record(f"{lab}r{j}", f"{lab} text", [lab]) for j in range(3)]
        for lab in split_intents:
            t = f"{lab} on monday"
            recs.append(make_record(f"{lab}r0", t, [lab], [span("time", t, "monday")]))
            recs.append(make_record(f"{lab}r1", f"{lab} no entity", [lab]))
        for lab in plain_intents:
            recs.append(make_record(f"{lab}r0", f"{lab} text", [lab]))
        train = _corpus(recs)
        valid = _corpus([make_record("va", "pi0 text", ["pi0"])], split="valid")
        test = _corpus([make_record("te", "pi0 text", ["pi0"])], split="test")
        plan = TransformPlan(
            version_targets=tuple(VersionTarget(i) for i in version_intents),
            entity_splits=tuple(EntitySplit(i, "time") for i in split_intents),
            seed=0,
        )
        res = run_transform(train, valid, test, plan)
        assert res.stats.vc_n == 50
        assert res.stats.mf_n == 10
        assert res.stats.total_labels == 66

    def test_untransformed_corpus_has_zero_counts(self):
        train = _uniform_corpus("a", 3)
        reg = registry_from_plan(TransformPlan())
        s = transform_stats(train, train, reg)
        assert (s.vc_n, s.mf_n) == (0, 0)
        assert s.vc_r == 0.0 and s.mf_r == 0.0


@pytest.fixture(scope="module")
def result():
    spec = FixtureSpec(5, 2, 2, 2, 60, 12, seed=21)
    train, valid, test = generate_fixture(spec)
    plan = TransformPlan(
        version_targets=tuple(VersionTarget(i) for i in spec.versioned_intents),
        entity_splits=tuple(
            EntitySplit(i, FixtureSpec.pivot_entity_type(i)) for i in spec.split_intents
        ),
        composite_split=True,
        seed=21,
    )
    return (train, valid, test, plan, run_transform(train, valid, test, plan))


class TestPipelineInvariants:

    def test_pu_property_single_positive_label(self, result):
        *_, res = result
        for rec in res.train.records:
            assert len(rec.labels) == 1

    def test_training_label_in_gold_closure(self, result):
        *_, res = result
        for rec in res.train.records:
            if rec.gold is not None:
                assert rec.labels[0] in rec.gold

    def test_eval_gold_equals_expansion_closure(self, result):
        train, valid, test, plan, res = result
        for before, after in zip(test.records, res.test.records):
            assert set(after.labels) == record_gold(before, res.registry)

    def test_conservation_of_ids_texts_entities(self, result):
        train, _, _, _, res = result
        for before, after in zip(train.records, res.train.records):
            assert before.id == after.id
            assert before.text == after.text
            assert before.entities == after.entities

    def test_determinism_byte_identical(self, result):
        train, valid, test, plan, res = result
        res2 = run_transform(train, valid, test, plan)
        for a, b in ((res.train, res2.train), (res.valid, res2.valid), (res.test, res2.test)):
            assert corpus_to_lines(a) == corpus_to_lines(b)

    def test_shared_inventory_across_splits(self, result):
        *_, res = result
        assert res.train.inventory == res.valid.inventory == res.test.inventory


class TestPlanValidation:
    def test_missing_pivot_type_rejected(self):
        c = _uniform_corpus("flight", 3)
        plan = TransformPlan(entity_splits=(EntitySplit("flight", "time"),), seed=0)
        with pytest.raises(PlanError, match="time"):
            validate_plan(plan, c)

    def test_multilabel_without_composite_split_rejected(self):
        recs = [make_record("r1", "x", ["a", "b"])]
        plan = TransformPlan(seed=0)
        with pytest.raises(PlanError, match="composite_split"):
            validate_plan(plan, _corpus(recs))

    def test_targeted_intent_inside_multilabel_record_rejected(self):
        recs = [make_record("r1", "x", ["a", "b"])]
        plan = TransformPlan(version_targets=(VersionTarget("a"),), composite_split=True, seed=0)
        with pytest.raises(PlanError, match="multi-label"):
            validate_plan(plan, _corpus(recs))

    def test_plan_json_round_trip(self):
        plan = TransformPlan(
            version_targets=(VersionTarget("a", 2),),
            entity_splits=(EntitySplit("b", "e"),),
            composite_split=True,
            difficulty=Difficulty(mode="easy", k=2),
            seed=42,
        )
        assert TransformPlan.from_json(plan.to_json()) == plan

    def test_unknown_plan_keys_rejected(self):
        with pytest.raises(PlanError, match="unknown"):
            TransformPlan.from_json({"bogus": 1})
