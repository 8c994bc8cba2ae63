"""Label grammar and the family relations produced by transformations.

Canonical label grammar (flat strings, used in interchange files and as model
indices):

    atomic          name
    versioned       name@v<k>          k >= 1
    sub-intent      name#with_<entity> | name#without_<entity>
    composite       atom1&atom2[&...]  atoms sorted, deduplicated, >= 2

``name``, ``entity`` and composite atoms are drawn from ``[A-Za-z0-9_.-]+``.
Strings with unrecognized decorations parse as atomic; malformed composites
(unsorted or duplicate atoms, non-atomic parts) are errors.

A FamilyRegistry records which labels belong together: version families
(semantically identical labels differing only in version tag), split families
(a full intent plus its with/without sub-intents keyed on a pivot entity
type) and composite families (a joint label plus its atomic parts). Family
*owned* labels are globally unique across the registry; the atoms referenced
by composite families may be shared between composite families (multi-intent
inventories reuse atoms) but may never double as version or split targets.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from intentgraft.errors import ParseError, ValidationError


class LabelKind(Enum):
    ATOMIC = "atomic"
    VERSIONED = "versioned"
    SUB_INTENT_WITH = "sub_intent_with"
    SUB_INTENT_WITHOUT = "sub_intent_without"
    COMPOSITE = "composite"


_NAME = r"[A-Za-z0-9_.\-]+"
_NAME_RE = re.compile(rf"^{_NAME}$")
_VERSION_RE = re.compile(rf"^({_NAME})@v([0-9]+)$")
_WITH_RE = re.compile(rf"^({_NAME})#with_({_NAME})$")
_WITHOUT_RE = re.compile(rf"^({_NAME})#without_({_NAME})$")


@dataclass(frozen=True)
class ParsedLabel:
    """Decomposition of a canonical label string."""

    base: str
    kind: LabelKind
    version: int | None = None
    entity: str | None = None
    atoms: tuple[str, ...] = ()

    def serialize(self) -> str:
        if self.kind is LabelKind.ATOMIC:
            return self.base
        if self.kind is LabelKind.VERSIONED:
            return f"{self.base}@v{self.version}"
        if self.kind is LabelKind.SUB_INTENT_WITH:
            return f"{self.base}#with_{self.entity}"
        if self.kind is LabelKind.SUB_INTENT_WITHOUT:
            return f"{self.base}#without_{self.entity}"
        return "&".join(self.atoms)


def parse_label(s: str) -> ParsedLabel:
    """Parse a label string; unrecognized decorations fall back to atomic."""
    if not s:
        raise ParseError("label must be non-empty")
    if "&" in s:
        atoms = s.split("&")
        if len(atoms) < 2 or any(not _NAME_RE.match(a) for a in atoms):
            raise ParseError(f"malformed composite label {s!r}: parts must be plain atoms")
        if len(set(atoms)) != len(atoms):
            raise ParseError(f"malformed composite label {s!r}: duplicate atoms")
        if list(atoms) != sorted(atoms):
            raise ParseError(f"malformed composite label {s!r}: atoms must be sorted")
        return ParsedLabel(base=s, kind=LabelKind.COMPOSITE, atoms=tuple(atoms))
    m = _VERSION_RE.match(s)
    if m:
        k = int(m.group(2))
        if k < 1:
            raise ParseError(f"malformed versioned label {s!r}: version index must be >= 1")
        return ParsedLabel(base=m.group(1), kind=LabelKind.VERSIONED, version=k)
    m = _WITH_RE.match(s)
    if m:
        return ParsedLabel(base=m.group(1), kind=LabelKind.SUB_INTENT_WITH, entity=m.group(2))
    m = _WITHOUT_RE.match(s)
    if m:
        return ParsedLabel(base=m.group(1), kind=LabelKind.SUB_INTENT_WITHOUT, entity=m.group(2))
    return ParsedLabel(base=s, kind=LabelKind.ATOMIC)


def versioned_label(base: str, k: int) -> str:
    return f"{base}@v{k}"


def with_label(base: str, entity: str) -> str:
    return f"{base}#with_{entity}"


def without_label(base: str, entity: str) -> str:
    return f"{base}#without_{entity}"


def composite_label(atoms: set[str] | tuple[str, ...] | list[str]) -> str:
    """Canonical composite for an atom set: sorted, deduplicated, arity >= 2."""
    unique = sorted(set(atoms))
    if len(unique) < 2:
        raise ValidationError(f"composite needs >= 2 distinct atoms, got {unique}")
    for a in unique:
        if not _NAME_RE.match(a):
            raise ValidationError(f"composite atom {a!r} is not a plain atom")
    return "&".join(unique)


@dataclass(frozen=True)
class SplitFamily:
    base: str
    entity_type: str

    @property
    def with_label(self) -> str:
        return with_label(self.base, self.entity_type)

    @property
    def without_label(self) -> str:
        return without_label(self.base, self.entity_type)

    @property
    def composite(self) -> str:
        # The original full intent keeps its name and plays the composite role.
        return self.base

    @property
    def members(self) -> tuple[str, ...]:
        return (self.with_label, self.without_label, self.composite)


@dataclass(frozen=True)
class FamilyRegistry:
    """Ground-truth relations among entangled labels.

    version_families: base intent -> ordered versioned labels
    split_families:   base intent -> SplitFamily
    composite_families: composite label -> sorted atom tuple
    """

    version_families: dict[str, tuple[str, ...]] = field(default_factory=dict)
    split_families: dict[str, SplitFamily] = field(default_factory=dict)
    composite_families: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        owned: dict[str, str] = {}

        def claim(label: str, family: str) -> None:
            if label in owned:
                raise ValidationError(
                    f"label {label!r} belongs to both family {owned[label]!r} and {family!r}"
                )
            owned[label] = family

        for base, members in self.version_families.items():
            if not members:
                raise ValidationError(f"version family {base!r} is empty")
            claim(base, f"version:{base}")
            for m in members:
                parsed = parse_label(m)
                if parsed.kind is not LabelKind.VERSIONED or parsed.base != base:
                    raise ValidationError(f"label {m!r} is not a version of {base!r}")
                claim(m, f"version:{base}")
        for base, fam in self.split_families.items():
            if fam.base != base:
                raise ValidationError(f"split family key {base!r} does not match {fam.base!r}")
            for m in fam.members:
                claim(m, f"split:{base}")
        for comp, atoms in self.composite_families.items():
            if composite_label(atoms) != comp:
                raise ValidationError(
                    f"composite family {comp!r} does not match its atoms {list(atoms)}"
                )
            claim(comp, f"composite:{comp}")
        # Atoms may repeat across composite families but not across kinds.
        for comp, atoms in self.composite_families.items():
            for a in atoms:
                if a in owned:
                    raise ValidationError(
                        f"composite atom {a!r} of {comp!r} already belongs to family {owned[a]!r}"
                    )

    # -- lookups -----------------------------------------------------------

    def families(self) -> list[tuple[str, str, tuple[str, ...]]]:
        """All families as (kind, key, members), deterministic order."""
        out: list[tuple[str, str, tuple[str, ...]]] = []
        for base in sorted(self.version_families):
            out.append(("version", base, self.version_families[base]))
        for base in sorted(self.split_families):
            out.append(("split", base, self.split_families[base].members))
        for comp in sorted(self.composite_families):
            atoms = self.composite_families[comp]
            out.append(("composite", comp, atoms + (comp,)))
        return out

    def new_labels(self) -> set[str]:
        """Labels the transformations introduce (not present pre-transform)."""
        out: set[str] = set()
        for members in self.version_families.values():
            out.update(members)
        for fam in self.split_families.values():
            out.update((fam.with_label, fam.without_label))
        out.update(self.composite_families)
        return out

    def with_composites(self, composites: dict[str, tuple[str, ...]]) -> FamilyRegistry:
        merged = dict(self.composite_families)
        merged.update(composites)
        return FamilyRegistry(
            version_families=dict(self.version_families),
            split_families=dict(self.split_families),
            composite_families=merged,
        )

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "version_families": {k: list(v) for k, v in sorted(self.version_families.items())},
            "split_families": {
                k: {
                    "with_label": f.with_label,
                    "without_label": f.without_label,
                    "composite_label": f.composite,
                    "entity_type": f.entity_type,
                }
                for k, f in sorted(self.split_families.items())
            },
            "composite_families": {k: list(v) for k, v in sorted(self.composite_families.items())},
        }

    @classmethod
    def from_json(cls, obj: dict) -> FamilyRegistry:
        return cls(
            version_families={k: tuple(v) for k, v in obj.get("version_families", {}).items()},
            split_families={
                k: SplitFamily(base=k, entity_type=v["entity_type"])
                for k, v in obj.get("split_families", {}).items()
            },
            composite_families={k: tuple(v) for k, v in obj.get("composite_families", {}).items()},
        )


def expand(label: str, registry: FamilyRegistry) -> set[str]:
    """Registry-level expansion closure of a single label.

    Versioned labels expand to their whole version family; sub-intents to
    {themselves, the full intent}; composites to their atoms plus themselves;
    atomics with no family to {themselves}. The result always contains the
    input label. Record-level gold construction (which sub-intent applies,
    which composite a multi-label set forms) lives in the transform module.
    """
    parsed = parse_label(label)
    if parsed.kind is LabelKind.VERSIONED:
        fam = registry.version_families.get(parsed.base)
        if fam is None or label not in fam:
            raise ValidationError(f"versioned label {label!r} has no family in the registry")
        return set(fam)
    if parsed.kind in (LabelKind.SUB_INTENT_WITH, LabelKind.SUB_INTENT_WITHOUT):
        fam = registry.split_families.get(parsed.base)
        if fam is None or label not in (fam.with_label, fam.without_label):
            raise ValidationError(f"sub-intent label {label!r} has no family in the registry")
        return {label, fam.composite}
    if parsed.kind is LabelKind.COMPOSITE:
        atoms = registry.composite_families.get(label)
        if atoms is None:
            raise ValidationError(f"composite label {label!r} has no family in the registry")
        return set(atoms) | {label}
    return {label}
