"""Micro precision/recall/F1 and exact-match ratio over label sets.

Counters per label: N_c (predicted and gold), N_p (predicted), N_g (gold).
Micro P = sum(N_c)/sum(N_p), micro R = sum(N_c)/sum(N_g), F1 their harmonic
mean, EM the fraction of instances whose predicted set equals the gold set.
Empty denominators yield 0 by convention. Accumulators merge associatively,
so partitions can be scored independently and combined in any order.
"""

from __future__ import annotations

from dataclasses import dataclass

from intentgraft.errors import ValidationError


@dataclass(frozen=True)
class MetricReport:
    precision: float
    recall: float
    f1: float
    em: float
    instances: int

    def to_json(self) -> dict:
        """Headline numbers as percentages with two decimals."""
        return {
            "precision": round(100.0 * self.precision, 2),
            "recall": round(100.0 * self.recall, 2),
            "f1": round(100.0 * self.f1, 2),
            "em": round(100.0 * self.em, 2),
            "instances": self.instances,
        }


@dataclass(frozen=True)
class LabelReport:
    label: str
    precision: float
    recall: float
    support: int

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "precision": self.precision,
            "recall": self.recall,
            "support": self.support,
        }


class MetricAccumulator:
    """Streaming counters over (prediction set, gold set) pairs."""

    def __init__(self, inventory: tuple[str, ...]):
        self.inventory = tuple(inventory)
        self._index = {lab: i for i, lab in enumerate(self.inventory)}
        self.n_correct = [0] * len(self.inventory)
        self.n_predicted = [0] * len(self.inventory)
        self.n_gold = [0] * len(self.inventory)
        self.instances = 0
        self.em_hits = 0

    @classmethod
    def for_inventory(cls, inventory: tuple[str, ...]) -> MetricAccumulator:
        return cls(inventory)

    def accumulate(self, pred: set[str], gold: set[str]) -> None:
        for lab in pred | gold:
            if lab not in self._index:
                raise ValidationError(f"label {lab!r} not in inventory")
        for lab in pred:
            i = self._index[lab]
            self.n_predicted[i] += 1
            if lab in gold:
                self.n_correct[i] += 1
        for lab in gold:
            self.n_gold[self._index[lab]] += 1
        self.instances += 1
        if pred == gold:
            self.em_hits += 1

    def merge(self, other: MetricAccumulator) -> None:
        if other.inventory != self.inventory:
            raise ValidationError("cannot merge accumulators over different inventories")
        for i in range(len(self.inventory)):
            self.n_correct[i] += other.n_correct[i]
            self.n_predicted[i] += other.n_predicted[i]
            self.n_gold[i] += other.n_gold[i]
        self.instances += other.instances
        self.em_hits += other.em_hits

    def finalize(self) -> MetricReport:
        if self.instances < 1:
            raise ValidationError("cannot finalize an empty accumulator")
        tp = sum(self.n_correct)
        p = tp / sum(self.n_predicted) if sum(self.n_predicted) else 0.0
        r = tp / sum(self.n_gold) if sum(self.n_gold) else 0.0
        f1 = 2.0 * p * r / (p + r) if p + r else 0.0
        return MetricReport(
            precision=p, recall=r, f1=f1, em=self.em_hits / self.instances, instances=self.instances
        )

    def per_label_report(self) -> list[LabelReport]:
        if self.instances < 1:
            raise ValidationError("cannot report on an empty accumulator")
        out = []
        for i, lab in enumerate(self.inventory):
            p = self.n_correct[i] / self.n_predicted[i] if self.n_predicted[i] else 0.0
            r = self.n_correct[i] / self.n_gold[i] if self.n_gold[i] else 0.0
            out.append(LabelReport(label=lab, precision=p, recall=r, support=self.n_gold[i]))
        return out


def score_pairs(
    pairs: list[tuple[set[str], set[str]]], inventory: tuple[str, ...]
) -> MetricReport:
    acc = MetricAccumulator(inventory)
    for pred, gold in pairs:
        acc.accumulate(pred, gold)
    return acc.finalize()
