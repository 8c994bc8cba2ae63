from __future__ import annotations

import pytest

from intentgraft.corpus import Corpus, EntitySpan, Record


def make_record(rid: str, text: str, labels, entities=()) -> Record:
    return Record(id=rid, text=text, labels=tuple(labels), entities=tuple(entities))


def span(entity_type: str, text: str, surface: str) -> EntitySpan:
    start = text.index(surface)
    return EntitySpan(entity_type, start, start + len(surface), surface)


@pytest.fixture
def tiny_corpus() -> Corpus:
    records = (
        make_record("u1", "book a flight on monday", ["flight"],
                    [span("time", "book a flight on monday", "monday")]),
        make_record("u2", "find me a flight to boston", ["flight"]),
        make_record("u3", "play some jazz music", ["play_music"]),
        make_record("u4", "need a hotel and a taxi", ["hotel", "taxi"]),
    )
    return Corpus(
        name="tiny",
        split="train",
        records=records,
        inventory=("flight", "hotel", "play_music", "taxi"),
    )
