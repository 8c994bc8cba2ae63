from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from intentgraft.errors import ParseError, ValidationError
from intentgraft.labels import (
    FamilyRegistry,
    LabelKind,
    ParsedLabel,
    SplitFamily,
    composite_label,
    expand,
    parse_label,
    versioned_label,
    with_label,
    without_label,
)
from intentgraft.transforms import EntitySplit, TransformPlan, VersionTarget, registry_from_plan


class TestGrammar:
    def test_versioned(self):
        p = parse_label("play_music@v2")
        assert (p.base, p.kind, p.version) == ("play_music", LabelKind.VERSIONED, 2)

    def test_sub_intent_with(self):
        p = parse_label("flight#with_time")
        assert (p.base, p.kind, p.entity) == ("flight", LabelKind.SUB_INTENT_WITH, "time")

    def test_sub_intent_without(self):
        p = parse_label("flight#without_time")
        assert p.kind is LabelKind.SUB_INTENT_WITHOUT

    def test_composite(self):
        p = parse_label("hotel&taxi")
        assert p.kind is LabelKind.COMPOSITE
        assert p.atoms == ("hotel", "taxi")

    def test_atomic(self):
        assert parse_label("weather").kind is LabelKind.ATOMIC

    def test_unrecognized_decoration_is_atomic(self):
        assert parse_label("a@version").kind is LabelKind.ATOMIC
        assert parse_label("a#b").kind is LabelKind.ATOMIC

    def test_unsorted_composite_rejected(self):
        with pytest.raises(ParseError, match="sorted"):
            parse_label("taxi&hotel")

    def test_duplicate_composite_atoms_rejected(self):
        with pytest.raises(ParseError, match="duplicate"):
            parse_label("hotel&hotel")

    def test_version_zero_rejected(self):
        with pytest.raises(ParseError, match=">= 1"):
            parse_label("a@v0")

    def test_composite_of_decorated_parts_rejected(self):
        with pytest.raises(ParseError, match="plain atoms"):
            parse_label("a&b@v1")

    def test_composite_label_sorts_and_dedups(self):
        assert composite_label({"taxi", "hotel"}) == "hotel&taxi"
        assert composite_label(["b", "a", "b", "c"]) == "a&b&c"
        with pytest.raises(ValidationError):
            composite_label({"solo"})


name_st = st.from_regex(r"[a-z][a-z0-9_]{0,8}", fullmatch=True)


class TestRoundTrip:
    @given(name_st, st.integers(min_value=1, max_value=9))
    def test_versioned_round_trip(self, base, k):
        s = versioned_label(base, k)
        assert parse_label(s).serialize() == s

    @given(name_st, name_st)
    def test_sub_intent_round_trip(self, base, entity):
        for s in (with_label(base, entity), without_label(base, entity)):
            assert parse_label(s).serialize() == s

    @given(st.sets(name_st, min_size=2, max_size=4))
    def test_composite_round_trip(self, atoms):
        s = composite_label(atoms)
        assert parse_label(s).serialize() == s


def _registry() -> FamilyRegistry:
    return FamilyRegistry(
        version_families={"pay": ("pay@v1", "pay@v2")},
        split_families={"flight": SplitFamily(base="flight", entity_type="time")},
        composite_families={"hotel&taxi": ("hotel", "taxi")},
    )


class TestExpand:
    def test_versioned_expands_to_family(self):
        assert expand("pay@v1", _registry()) == {"pay@v1", "pay@v2"}

    def test_composite_expands_to_atoms_plus_itself(self):
        assert expand("hotel&taxi", _registry()) == {"hotel", "taxi", "hotel&taxi"}

    def test_sub_intent_expands_to_self_plus_full(self):
        assert expand("flight#with_time", _registry()) == {"flight#with_time", "flight"}

    def test_atomic_without_family_is_identity(self):
        assert expand("weather", _registry()) == {"weather"}

    def test_unknown_versioned_label_errors(self):
        with pytest.raises(ValidationError, match="no family"):
            expand("ghost@v1", _registry())

    def test_unknown_composite_errors(self):
        with pytest.raises(ValidationError, match="no family"):
            expand("a&b", _registry())

    def test_result_always_contains_input(self):
        reg = _registry()
        for label in ("pay@v2", "flight#without_time", "hotel&taxi", "plain"):
            assert label in expand(label, reg)

    def test_version_family_members_share_closure(self):
        reg = _registry()
        assert expand("pay@v1", reg) == expand("pay@v2", reg)

    def test_three_atom_composite_never_yields_pairs(self):
        reg = FamilyRegistry(composite_families={"a&b&c": ("a", "b", "c")})
        assert expand("a&b&c", reg) == {"a", "b", "c", "a&b&c"}


class TestRegistryValidation:
    def test_version_plus_split_on_same_intent_rejected(self):
        with pytest.raises(ValidationError, match="belongs to both"):
            FamilyRegistry(
                version_families={"a": ("a@v1", "a@v2")},
                split_families={"a": SplitFamily(base="a", entity_type="e")},
            )

    def test_atom_shared_between_composites_allowed(self):
        reg = FamilyRegistry(
            composite_families={"hotel&taxi": ("hotel", "taxi"), "hotel&train": ("hotel", "train")}
        )
        assert len(reg.composite_families) == 2

    def test_atom_that_is_version_base_rejected(self):
        with pytest.raises(ValidationError, match="already belongs"):
            FamilyRegistry(
                version_families={"hotel": ("hotel@v1", "hotel@v2")},
                composite_families={"hotel&taxi": ("hotel", "taxi")},
            )

    def test_json_round_trip(self):
        reg = _registry()
        assert FamilyRegistry.from_json(reg.to_json()) == reg


class TestRegistryFromPlan:
    def test_version_plan(self):
        plan = TransformPlan(version_targets=(VersionTarget("a", 2),))
        reg = registry_from_plan(plan)
        assert reg.version_families == {"a": ("a@v1", "a@v2")}

    def test_split_plan(self):
        plan = TransformPlan(entity_splits=(EntitySplit("flight", "time"),))
        reg = registry_from_plan(plan)
        fam = reg.split_families["flight"]
        assert (fam.with_label, fam.without_label, fam.composite) == (
            "flight#with_time",
            "flight#without_time",
            "flight",
        )

    def test_overlapping_targets_rejected_at_plan_level(self):
        from intentgraft.errors import PlanError

        with pytest.raises(PlanError, match="both"):
            TransformPlan(
                version_targets=(VersionTarget("a"),),
                entity_splits=(EntitySplit("a", "e"),),
            )
