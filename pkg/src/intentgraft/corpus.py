"""Intent corpora: the canonical interchange format, validation, and fixtures.

Canonical format: UTF-8 JSON Lines, one record object per line with keys
``id`` (string), ``text`` (string), ``labels`` (array of strings) and
``entities`` (array of ``{"type", "start", "end"}`` objects). An optional
``gold`` array carries the full ground-truth label set on transformed training
records. An optional first line ``{"inventory": [...]}`` pins the label order;
otherwise the inventory is the sorted set of observed labels.

Character offsets are Unicode scalar-value offsets (Python string indices),
never bytes, so Chinese text indexes identically everywhere.

All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from intentgraft.errors import ParseError, ValidationError
from intentgraft.fileio import atomic_write_text
from intentgraft.rng import stream

SPLITS = ("train", "valid", "test")


@dataclass(frozen=True)
class EntitySpan:
    """A typed span over the record text; ``surface`` always equals the slice."""

    entity_type: str
    start: int
    end: int
    surface: str


@dataclass(frozen=True)
class Record:
    """One utterance with its labels and entity annotations.

    ``labels`` is the working label set: the original annotation before
    transformation, the single sampled training label after it, or the full
    gold closure on evaluation splits. ``gold`` is set by the transformation
    stage on training records and holds the closure the single label was
    sampled from.
    """

    id: str
    text: str
    labels: tuple[str, ...]
    entities: tuple[EntitySpan, ...] = ()
    gold: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("record id must be non-empty")
        if not self.text:
            raise ValidationError(f"record {self.id!r}: text must be non-empty")
        if not self.labels:
            raise ValidationError(f"record {self.id!r}: label list must be non-empty")
        deduped = tuple(dict.fromkeys(self.labels))
        if deduped != tuple(self.labels):
            object.__setattr__(self, "labels", deduped)
        for span in self.entities:
            if not (0 <= span.start < span.end <= len(self.text)):
                raise ValidationError(
                    f"record {self.id!r}: span [{span.start}, {span.end}) out of bounds "
                    f"for text of length {len(self.text)}"
                )
            if span.surface != self.text[span.start : span.end]:
                raise ValidationError(
                    f"record {self.id!r}: span surface {span.surface!r} does not match "
                    f"text slice {self.text[span.start:span.end]!r}"
                )

    def has_entity_type(self, entity_type: str) -> bool:
        return any(e.entity_type == entity_type for e in self.entities)


@dataclass(frozen=True)
class Corpus:
    name: str
    split: str
    records: tuple[Record, ...]
    inventory: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.split not in SPLITS:
            raise ValidationError(f"split must be one of {SPLITS}, got {self.split!r}")
        known = set(self.inventory)
        if len(known) != len(self.inventory):
            raise ValidationError("inventory contains duplicate labels")
        seen_ids: set[str] = set()
        for rec in self.records:
            if rec.id in seen_ids:
                raise ValidationError(f"duplicate record id {rec.id!r}")
            seen_ids.add(rec.id)
            for lab in rec.labels:
                if lab not in known:
                    raise ValidationError(f"record {rec.id!r}: label {lab!r} not in inventory")
            if rec.gold is not None:
                for lab in rec.gold:
                    if lab not in known:
                        raise ValidationError(f"record {rec.id!r}: gold label {lab!r} not in inventory")

    def __len__(self) -> int:
        return len(self.records)

    def label_index(self) -> dict[str, int]:
        return {lab: i for i, lab in enumerate(self.inventory)}


@dataclass(frozen=True)
class CorpusStats:
    record_count: int
    label_count: int
    label_frequency: dict[str, int]
    mean_labels_per_record: float

    def to_json(self) -> dict:
        return {
            "record_count": self.record_count,
            "label_count": self.label_count,
            "label_frequency": dict(sorted(self.label_frequency.items())),
            "mean_labels_per_record": self.mean_labels_per_record,
        }


def corpus_stats(c: Corpus) -> CorpusStats:
    freq: dict[str, int] = {lab: 0 for lab in c.inventory}
    total = 0
    for rec in c.records:
        for lab in rec.labels:
            freq[lab] += 1
            total += 1
    mean = total / len(c.records) if c.records else 0.0
    return CorpusStats(
        record_count=len(c.records),
        label_count=len(c.inventory),
        label_frequency=freq,
        mean_labels_per_record=mean,
    )


# ---------------------------------------------------------------------------
# Canonical format I/O
# ---------------------------------------------------------------------------


def _record_from_obj(obj: dict, line_no: int, path: str) -> Record:
    where = f"{path}:{line_no}"
    for key in ("id", "text", "labels"):
        if key not in obj:
            raise ParseError(f"{where}: missing required key {key!r}")
    if not isinstance(obj["labels"], list):
        raise ParseError(f"{where}: 'labels' must be an array")
    text = obj["text"]
    entities = []
    for ent in obj.get("entities", []):
        for key in ("type", "start", "end"):
            if key not in ent:
                raise ParseError(f"{where}: entity missing key {key!r}")
        start, end = ent["start"], ent["end"]
        if not (isinstance(start, int) and isinstance(end, int)):
            raise ParseError(f"{where}: entity offsets must be integers")
        if not (0 <= start < end <= len(text)):
            raise ValidationError(
                f"{where}: record {obj['id']!r}: span [{start}, {end}) out of bounds "
                f"for text of length {len(text)}"
            )
        entities.append(EntitySpan(ent["type"], start, end, text[start:end]))
    gold = obj.get("gold")
    return Record(
        id=str(obj["id"]),
        text=text,
        labels=tuple(str(x) for x in obj["labels"]),
        entities=tuple(entities),
        gold=tuple(str(x) for x in gold) if gold is not None else None,
    )


def load_corpus(path: str | Path, split: str, name: str | None = None) -> Corpus:
    """Load and fully validate a canonical-format corpus file.

    Raises ParseError with file:line context for malformed lines and
    ValidationError for invariant violations (out-of-bounds spans, duplicate
    ids with both offending line numbers, empty label lists).
    """
    path = Path(path)
    inventory: tuple[str, ...] | None = None
    records: list[Record] = []
    id_lines: dict[str, int] = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"{path}:{line_no}: invalid JSON: {e.msg}") from e
            if line_no == 1 and "inventory" in obj and "id" not in obj:
                inventory = tuple(str(x) for x in obj["inventory"])
                continue
            rec = _record_from_obj(obj, line_no, str(path))
            if rec.id in id_lines:
                raise ValidationError(
                    f"{path}: duplicate record id {rec.id!r} on lines "
                    f"{id_lines[rec.id]} and {line_no}"
                )
            id_lines[rec.id] = line_no
            records.append(rec)
    if inventory is None:
        seen: set[str] = set()
        for rec in records:
            seen.update(rec.labels)
            if rec.gold:
                seen.update(rec.gold)
        inventory = tuple(sorted(seen))
    return Corpus(name=name or path.stem, split=split, records=tuple(records), inventory=inventory)


def corpus_to_lines(c: Corpus) -> list[str]:
    lines = [json.dumps({"inventory": list(c.inventory)}, ensure_ascii=False)]
    for rec in c.records:
        obj: dict = {
            "id": rec.id,
            "text": rec.text,
            "labels": list(rec.labels),
            "entities": [
                {"type": e.entity_type, "start": e.start, "end": e.end} for e in rec.entities
            ],
        }
        if rec.gold is not None:
            obj["gold"] = list(rec.gold)
        lines.append(json.dumps(obj, ensure_ascii=False))
    return lines


def save_corpus(c: Corpus, path: str | Path) -> None:
    """Write the corpus in canonical format (inventory header always emitted)."""
    atomic_write_text(path, "\n".join(corpus_to_lines(c)) + "\n")


# ---------------------------------------------------------------------------
# Synthetic fixtures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FixtureSpec:
    """Shape of a synthetic corpus with per-family disjoint vocabularies.

    ``family_count`` base intents are generated; the first ``versioned_count``
    are meant to be version-conflict targets and the next
    ``entity_split_count`` embed a pivot-entity token in exactly half
    (rounded down) of their records. Each of the ``composite_pairs``
    additionally introduces a fresh pair of atomic intents whose records
    always carry both labels, the raw material for composite splitting.
    """

    family_count: int
    versioned_count: int
    entity_split_count: int
    composite_pairs: int
    records_per_intent: int
    vocab_per_family: int
    seed: int

    def __post_init__(self) -> None:
        counts = (
            self.family_count,
            self.versioned_count,
            self.entity_split_count,
            self.composite_pairs,
            self.records_per_intent,
            self.vocab_per_family,
        )
        if any(n < 0 for n in counts):
            raise ValidationError("fixture counts must be >= 0")
        if self.versioned_count + self.entity_split_count > self.family_count:
            raise ValidationError(
                "versioned_count + entity_split_count must not exceed family_count"
            )
        if self.family_count + self.composite_pairs > 0 and self.vocab_per_family < 2:
            raise ValidationError("vocab_per_family must be >= 2")

    @property
    def base_intents(self) -> tuple[str, ...]:
        return tuple(f"intent{i:02d}" for i in range(self.family_count))

    @property
    def versioned_intents(self) -> tuple[str, ...]:
        return self.base_intents[: self.versioned_count]

    @property
    def split_intents(self) -> tuple[str, ...]:
        return self.base_intents[self.versioned_count : self.versioned_count + self.entity_split_count]

    @property
    def composite_atoms(self) -> tuple[tuple[str, str], ...]:
        return tuple((f"duo{j:02d}x", f"duo{j:02d}y") for j in range(self.composite_pairs))

    @staticmethod
    def pivot_entity_type(intent: str) -> str:
        return f"etype_{intent}"


def default_fixture_spec(seed: int) -> FixtureSpec:
    """The bundled benchmark fixture: 12 families, ~5k train / ~1k test."""
    return FixtureSpec(
        family_count=9,
        versioned_count=6,
        entity_split_count=3,
        composite_pairs=3,
        records_per_intent=417,
        vocab_per_family=24,
        seed=seed,
    )


def _family_vocab(tag: str, size: int) -> list[str]:
    return [f"{tag}w{j:02d}" for j in range(size)]


def _make_text(rng: np.random.Generator, vocab: list[str]) -> list[str]:
    n_tokens = int(rng.integers(5, 10))
    idx = rng.integers(0, len(vocab), size=n_tokens)
    return [vocab[i] for i in idx]


def _generate_split(spec: FixtureSpec, split: str, per_intent: int) -> Corpus:
    rng = stream(spec.seed, f"fixture/{split}")
    drafts: list[tuple[list[str], tuple[str, ...], str | None]] = []

    for fi, intent in enumerate(spec.base_intents):
        vocab = _family_vocab(intent, spec.vocab_per_family)
        is_split = intent in spec.split_intents
        n_with = per_intent // 2 if is_split else 0
        for r in range(per_intent):
            tokens = _make_text(rng, vocab)
            pivot = None
            if is_split and r < n_with:
                pos = int(rng.integers(0, len(tokens) + 1))
                tokens.insert(pos, f"pivot_{intent}")
                pivot = intent
            drafts.append((tokens, (intent,), pivot))

    for atom_a, atom_b in spec.composite_atoms:
        vocab = _family_vocab(atom_a, spec.vocab_per_family) + _family_vocab(
            atom_b, spec.vocab_per_family
        )
        for _ in range(per_intent):
            drafts.append((_make_text(rng, vocab), (atom_a, atom_b), None))

    order = rng.permutation(len(drafts))
    records = []
    for out_idx, draft_idx in enumerate(order):
        tokens, labels, pivot = drafts[draft_idx]
        text = " ".join(tokens)
        entities: tuple[EntitySpan, ...] = ()
        if pivot is not None:
            surface = f"pivot_{pivot}"
            start = text.index(surface)
            entities = (
                EntitySpan(FixtureSpec.pivot_entity_type(pivot), start, start + len(surface), surface),
            )
        records.append(
            Record(id=f"{split}-{out_idx:05d}", text=text, labels=labels, entities=entities)
        )

    seen: set[str] = set()
    for rec in records:
        seen.update(rec.labels)
    return Corpus(
        name=f"fixture-{split}", split=split, records=tuple(records), inventory=tuple(sorted(seen))
    )


def generate_fixture(spec: FixtureSpec) -> tuple[Corpus, Corpus, Corpus]:
    """Synthesize (train, valid, test) corpora; pure in the spec, seed included.

    Token vocabularies are disjoint across intent families so a linear model
    can separate them perfectly; what remains hard is purely the label side.
    """
    per_valid = max(1, spec.records_per_intent // 10) if spec.records_per_intent else 0
    per_test = max(1, spec.records_per_intent // 5) if spec.records_per_intent else 0
    train = _generate_split(spec, "train", spec.records_per_intent)
    valid = _generate_split(spec, "valid", per_valid)
    test = _generate_split(spec, "test", per_test)
    return train, valid, test
