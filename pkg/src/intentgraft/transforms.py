"""Version-conflict and merge-friction transformations over intent corpora.

The training split is rewritten into positive-but-unlabeled form: every
record ends up with exactly one training label, sampled uniformly from the
record's ground-truth closure, while ``gold`` keeps the closure itself.
Validation and test splits are rewritten so their label sets equal the full
closure, which is what evaluation scores against.

Three transformations exist:

* version conflict: a targeted intent i is replaced by k versioned labels;
  each record gets one version uniformly at random.
* entity split: a targeted intent i is split on a pivot entity type e into
  i#with_e / i#without_e; the applicable sub-intent is decided by the
  record's entity spans, and the training label is a fair coin between the
  sub-intent and the full intent (which stays in the inventory and plays the
  composite role).
* composite split: a multi-label record with atom set {a1..an} becomes a
  single-label record whose label is uniform over the atoms plus their
  canonical composite a1&..&an.

All transformations preserve record ids, texts and entities; only labels and
the inventory change. Output is a pure function of (corpus, plan, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from intentgraft.corpus import Corpus, Record
from intentgraft.errors import PlanError, ValidationError
from intentgraft.labels import (
    FamilyRegistry,
    SplitFamily,
    composite_label,
    expand,
    versioned_label,
)
from intentgraft.rng import stream

DIFFICULTY_MODES = ("easy", "hard", "normal")


@dataclass(frozen=True)
class VersionTarget:
    intent: str
    k: int = 2

    def __post_init__(self) -> None:
        if self.k < 1:
            raise PlanError(f"version target {self.intent!r}: k must be >= 1, got {self.k}")


@dataclass(frozen=True)
class EntitySplit:
    intent: str
    entity_type: str


@dataclass(frozen=True)
class Difficulty:
    mode: str
    k: int

    def __post_init__(self) -> None:
        if self.mode not in DIFFICULTY_MODES:
            raise PlanError(f"difficulty mode must be one of {DIFFICULTY_MODES}, got {self.mode!r}")
        if self.k < 1:
            raise PlanError(f"difficulty k must be >= 1, got {self.k}")


@dataclass(frozen=True)
class TransformPlan:
    version_targets: tuple[VersionTarget, ...] = ()
    entity_splits: tuple[EntitySplit, ...] = ()
    composite_split: bool = False
    difficulty: Difficulty | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        v_intents = [t.intent for t in self.version_targets]
        s_intents = [t.intent for t in self.entity_splits]
        if len(set(v_intents)) != len(v_intents):
            raise PlanError("duplicate intents in version_targets")
        if len(set(s_intents)) != len(s_intents):
            raise PlanError("duplicate intents in entity_splits")
        overlap = set(v_intents) & set(s_intents)
        if overlap:
            raise PlanError(f"intents in both version_targets and entity_splits: {sorted(overlap)}")

    def to_json(self) -> dict:
        return {
            "version_targets": [{"intent": t.intent, "k": t.k} for t in self.version_targets],
            "entity_splits": [
                {"intent": t.intent, "entity_type": t.entity_type} for t in self.entity_splits
            ],
            "composite_split": self.composite_split,
            "difficulty": (
                {"mode": self.difficulty.mode, "k": self.difficulty.k} if self.difficulty else None
            ),
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> TransformPlan:
        known = {"version_targets", "entity_splits", "composite_split", "difficulty", "seed"}
        unknown = set(obj) - known
        if unknown:
            raise PlanError(f"unknown plan keys: {sorted(unknown)}")
        diff = obj.get("difficulty")
        return cls(
            version_targets=tuple(
                VersionTarget(intent=t["intent"], k=t.get("k", 2))
                for t in obj.get("version_targets", [])
            ),
            entity_splits=tuple(
                EntitySplit(intent=t["intent"], entity_type=t["entity_type"])
                for t in obj.get("entity_splits", [])
            ),
            composite_split=bool(obj.get("composite_split", False)),
            difficulty=Difficulty(mode=diff["mode"], k=diff["k"]) if diff else None,
            seed=int(obj.get("seed", 0)),
        )


@dataclass(frozen=True)
class TransformStats:
    """Table-style accounting of a transformed dataset.

    vc_n counts versioned labels (k per version family). mf_n counts
    merge-friction families, one per split or composite family.
    total_labels = vc_n + mf_n + untransformed original labels, where an
    original label counts as untransformed when it is neither a version
    target, a split target, nor an atom of a composite family. The ratios
    are percentages of training records whose training label belongs to the
    respective category.
    """

    vc_n: int
    vc_r: float
    mf_n: int
    mf_r: float
    total_labels: int
    untransformed: int
    record_counts: dict[str, int]

    def __post_init__(self) -> None:
        if self.vc_n + self.mf_n > self.total_labels:
            raise ValidationError("vc_n + mf_n exceeds total_labels")
        for r in (self.vc_r, self.mf_r):
            if not (0.0 <= r <= 100.0):
                raise ValidationError("ratios must be within [0, 100]")

    def to_json(self) -> dict:
        return {
            "vc_n": self.vc_n,
            "vc_r": round(self.vc_r, 2),
            "mf_n": self.mf_n,
            "mf_r": round(self.mf_r, 2),
            "total_labels": self.total_labels,
            "untransformed": self.untransformed,
            "record_counts": dict(sorted(self.record_counts.items())),
        }


# ---------------------------------------------------------------------------
# Plan validation, difficulty control, registry construction
# ---------------------------------------------------------------------------


def _intent_frequency(c: Corpus) -> dict[str, int]:
    freq: dict[str, int] = {}
    for rec in c.records:
        for lab in rec.labels:
            freq[lab] = freq.get(lab, 0) + 1
    return freq


def validate_plan(plan: TransformPlan, train: Corpus) -> None:
    """Check the plan fits the corpus it is about to transform."""
    freq = _intent_frequency(train)
    for t in plan.version_targets:
        if t.intent not in freq:
            raise PlanError(f"version target intent {t.intent!r} absent from corpus")
    for t in plan.entity_splits:
        if t.intent not in freq:
            raise PlanError(f"entity split intent {t.intent!r} absent from corpus")
        has_type = any(
            t.intent in rec.labels and rec.has_entity_type(t.entity_type) for rec in train.records
        )
        if not has_type:
            raise PlanError(
                f"pivot entity type {t.entity_type!r} never occurs on intent {t.intent!r}"
            )
    targeted = {t.intent for t in plan.version_targets} | {t.intent for t in plan.entity_splits}
    for rec in train.records:
        if len(rec.labels) > 1:
            bad = targeted.intersection(rec.labels)
            if bad:
                raise PlanError(
                    f"record {rec.id!r}: targeted intents {sorted(bad)} appear in a "
                    "multi-label record; version/split targets must be single-intent"
                )
            if not plan.composite_split:
                raise PlanError(
                    f"record {rec.id!r} has multiple labels but composite_split is disabled; "
                    "the training corpus cannot be reduced to single labels"
                )


def difficulty_filter(
    plan: TransformPlan,
    corpus: Corpus,
    mode: str | None = None,
    k: int | None = None,
) -> TransformPlan:
    """Restrict the plan to its highest-frequency transformation families.

    A difficulty group is two version families plus one merge-friction
    family, so level k keeps the top 2k version targets and the top k entity
    splits (descending intent frequency, ties broken lexicographically).
    Intents dropped from the plan pass through untransformed. Normal mode
    returns the plan unchanged.
    """
    if mode is None and plan.difficulty is None:
        return plan
    mode = mode if mode is not None else plan.difficulty.mode
    k = k if k is not None else (plan.difficulty.k if plan.difficulty else None)
    if mode == "normal":
        return replace(plan, difficulty=None)
    if k is None or k < 1:
        raise PlanError("difficulty k must be >= 1")
    freq = _intent_frequency(corpus)

    def top(items, n, what):
        if n > len(items):
            raise PlanError(f"difficulty k={k} exceeds available {what} ({len(items)})")
        ranked = sorted(items, key=lambda t: (-freq.get(t.intent, 0), t.intent))
        keep = {t.intent for t in ranked[:n]}
        return tuple(t for t in items if t.intent in keep)

    version_targets = plan.version_targets
    if version_targets:
        version_targets = top(version_targets, 2 * k, "version families")
    entity_splits = plan.entity_splits
    if entity_splits:
        entity_splits = top(entity_splits, k, "split families")
    return replace(plan, version_targets=version_targets, entity_splits=entity_splits, difficulty=None)


def registry_from_plan(plan: TransformPlan) -> FamilyRegistry:
    """Build the family registry the plan creates (composites come from data)."""
    return FamilyRegistry(
        version_families={
            t.intent: tuple(versioned_label(t.intent, i + 1) for i in range(t.k))
            for t in plan.version_targets
        },
        split_families={
            t.intent: SplitFamily(base=t.intent, entity_type=t.entity_type)
            for t in plan.entity_splits
        },
    )


def detect_composite_families(*corpora: Corpus) -> dict[str, tuple[str, ...]]:
    """Collect composite families from every multi-label record's atom set."""
    families: dict[str, tuple[str, ...]] = {}
    for c in corpora:
        for rec in c.records:
            atoms = sorted(set(rec.labels))
            if len(atoms) >= 2:
                families[composite_label(atoms)] = tuple(atoms)
    return families


def transformed_inventory(original: set[str], registry: FamilyRegistry) -> tuple[str, ...]:
    """Label space after transformation: version bases out, family labels in."""
    inv = set(original) - set(registry.version_families)
    inv |= registry.new_labels()
    return tuple(sorted(inv))


# ---------------------------------------------------------------------------
# The three transformations (train split, PU relabeling)
# ---------------------------------------------------------------------------


def apply_version_conflict(c: Corpus, plan: TransformPlan, rng: np.random.Generator) -> Corpus:
    """Relabel targeted intents with a uniformly sampled version label."""
    if c.split != "train":
        raise ValidationError("version conflict applies to the train split only")
    targets = {t.intent: t.k for t in plan.version_targets}
    freq = _intent_frequency(c)
    missing = [i for i in targets if i not in freq]
    if missing:
        raise PlanError(f"version target intents absent from corpus: {missing}")
    records = []
    for rec in c.records:
        if len(rec.labels) == 1 and rec.labels[0] in targets:
            base = rec.labels[0]
            k = targets[base]
            v = int(rng.integers(0, k)) + 1
            family = tuple(versioned_label(base, i + 1) for i in range(k))
            records.append(replace(rec, labels=(versioned_label(base, v),), gold=family))
        else:
            records.append(rec)
    inv = set(c.inventory) - set(targets)
    for base, k in targets.items():
        inv.update(versioned_label(base, i + 1) for i in range(k))
    return Corpus(name=c.name, split=c.split, records=tuple(records), inventory=tuple(sorted(inv)))


def apply_entity_split(c: Corpus, plan: TransformPlan, rng: np.random.Generator) -> Corpus:
    """Split targeted intents into with/without sub-intents on pivot entities."""
    if c.split != "train":
        raise ValidationError("entity split applies to the train split only")
    splits = {t.intent: SplitFamily(base=t.intent, entity_type=t.entity_type) for t in plan.entity_splits}
    records = []
    for rec in c.records:
        if len(rec.labels) == 1 and rec.labels[0] in splits:
            fam = splits[rec.labels[0]]
            applicable = fam.with_label if rec.has_entity_type(fam.entity_type) else fam.without_label
            choice = applicable if int(rng.integers(0, 2)) == 0 else fam.composite
            records.append(
                replace(rec, labels=(choice,), gold=tuple(sorted((applicable, fam.composite))))
            )
        else:
            records.append(rec)
    inv = set(c.inventory)
    for fam in splits.values():
        inv.update((fam.with_label, fam.without_label))
    return Corpus(name=c.name, split=c.split, records=tuple(records), inventory=tuple(sorted(inv)))


def apply_composite_split(c: Corpus, plan: TransformPlan, rng: np.random.Generator) -> Corpus:
    """Reduce multi-label records to one label drawn from atoms + composite."""
    if c.split != "train":
        raise ValidationError("composite split applies to the train split only")
    records = []
    new_composites: set[str] = set()
    for rec in c.records:
        atoms = sorted(set(rec.labels))
        if len(atoms) >= 2:
            comp = composite_label(atoms)
            new_composites.add(comp)
            choices = atoms + [comp]
            pick = choices[int(rng.integers(0, len(choices)))]
            records.append(replace(rec, labels=(pick,), gold=tuple(sorted(choices))))
        else:
            records.append(rec)
    inv = set(c.inventory) | new_composites
    return Corpus(name=c.name, split=c.split, records=tuple(records), inventory=tuple(sorted(inv)))


# ---------------------------------------------------------------------------
# Evaluation gold construction
# ---------------------------------------------------------------------------


def record_gold(rec: Record, registry: FamilyRegistry) -> set[str]:
    """Ground-truth closure for a record with original (pre-transform) labels."""
    labs = list(dict.fromkeys(rec.labels))
    if len(labs) >= 2:
        comp = composite_label(labs)
        if comp in registry.composite_families:
            return set(registry.composite_families[comp]) | {comp}
        return set(labs)
    lab = labs[0]
    if lab in registry.version_families:
        return set(registry.version_families[lab])
    if lab in registry.split_families:
        fam = registry.split_families[lab]
        applicable = fam.with_label if rec.has_entity_type(fam.entity_type) else fam.without_label
        return {applicable, fam.composite}
    return expand(lab, registry)


def build_eval_labels(
    c: Corpus, registry: FamilyRegistry, inventory: tuple[str, ...] | None = None
) -> Corpus:
    """Rewrite an evaluation split so each record's labels are its gold closure."""
    records = []
    for rec in c.records:
        gold = record_gold(rec, registry)
        records.append(replace(rec, labels=tuple(sorted(gold)), gold=None))
    if inventory is None:
        inventory = transformed_inventory(set(c.inventory), registry)
    return Corpus(name=c.name, split=c.split, records=tuple(records), inventory=inventory)


# ---------------------------------------------------------------------------
# Statistics and the end-to-end pipeline
# ---------------------------------------------------------------------------


def transform_stats(
    before: Corpus,
    after: Corpus,
    registry: FamilyRegistry,
    record_counts: dict[str, int] | None = None,
) -> TransformStats:
    vc_n = sum(len(fam) for fam in registry.version_families.values())
    mf_n = len(registry.split_families) + len(registry.composite_families)

    touched = set(registry.version_families) | set(registry.split_families)
    for atoms in registry.composite_families.values():
        touched.update(atoms)
    untransformed = sum(1 for lab in before.inventory if lab not in touched)

    vc_labels: set[str] = set()
    for fam in registry.version_families.values():
        vc_labels.update(fam)
    mf_labels: set[str] = set()
    for fam in registry.split_families.values():
        mf_labels.update(fam.members)
    for comp, atoms in registry.composite_families.items():
        mf_labels.add(comp)
        mf_labels.update(atoms)

    n = len(after.records)
    vc_records = sum(1 for rec in after.records if set(rec.labels) & vc_labels)
    mf_records = sum(1 for rec in after.records if set(rec.labels) & mf_labels)
    return TransformStats(
        vc_n=vc_n,
        vc_r=100.0 * vc_records / n if n else 0.0,
        mf_n=mf_n,
        mf_r=100.0 * mf_records / n if n else 0.0,
        total_labels=vc_n + mf_n + untransformed,
        untransformed=untransformed,
        record_counts=record_counts or {},
    )


@dataclass(frozen=True)
class TransformResult:
    train: Corpus
    valid: Corpus
    test: Corpus
    registry: FamilyRegistry
    stats: TransformStats
    plan: TransformPlan


def run_transform(train: Corpus, valid: Corpus, test: Corpus, plan: TransformPlan) -> TransformResult:
    """Apply the full plan: difficulty, PU relabeling, eval gold, statistics.

    Deterministic for fixed (corpora, plan): the three transformations
    consume one RNG stream sequentially in record order.
    """
    plan = difficulty_filter(plan, train)
    validate_plan(plan, train)
    registry = registry_from_plan(plan)
    if plan.composite_split:
        registry = registry.with_composites(detect_composite_families(train, valid, test))

    rng = stream(plan.seed, "transform")
    out = apply_version_conflict(train, plan, rng)
    out = apply_entity_split(out, plan, rng)
    if plan.composite_split:
        out = apply_composite_split(out, plan, rng)

    original = set(train.inventory) | set(valid.inventory) | set(test.inventory)
    inventory = transformed_inventory(original, registry)
    out = Corpus(name=out.name, split="train", records=out.records, inventory=inventory)
    valid_t = build_eval_labels(valid, registry, inventory)
    test_t = build_eval_labels(test, registry, inventory)

    counts = {"train": len(out), "valid": len(valid_t), "test": len(test_t)}
    stats = transform_stats(train, out, registry, record_counts=counts)
    return TransformResult(train=out, valid=valid_t, test=test_t, registry=registry, stats=stats, plan=plan)
