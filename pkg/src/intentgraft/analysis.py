"""Prediction co-occurrence, density clustering, and family recovery scoring.

The co-occurrence matrix counts joint predictions: C[a][b] is the number of
instances where labels a and b were both predicted, C[a][a] the number where
a was predicted at all. The derived distance,

    d(a, b) = 1 - C[a][b] / max(1, min(C[a][a], C[b][b])),

is 0 for labels that always co-fire and 1 for labels that never do. DBSCAN
over this precomputed distance groups entangled labels; a family counts as
recovered when all of its members land in one non-noise cluster containing
no member of any other family.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from intentgraft.errors import ValidationError
from intentgraft.labels import FamilyRegistry

NOISE = -1


def cooccurrence(predictions: list[set[str]], inventory: tuple[str, ...]) -> np.ndarray:
    """Symmetric joint-prediction counts; diagonal is per-label counts."""
    index = {lab: i for i, lab in enumerate(inventory)}
    C = np.zeros((len(inventory), len(inventory)), dtype=np.int64)
    for pred in predictions:
        ids = sorted(index[lab] for lab in pred)
        for a_pos, a in enumerate(ids):
            C[a, a] += 1
            for b in ids[a_pos + 1 :]:
                C[a, b] += 1
                C[b, a] += 1
    return C


def cooccurrence_distance(C: np.ndarray) -> np.ndarray:
    """Distance in [0, 1] from co-occurrence; 0 diagonal, symmetric."""
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValidationError("co-occurrence matrix must be square")
    diag = np.diag(C).astype(np.float64)
    denom = np.maximum(1.0, np.minimum.outer(diag, diag))
    D = 1.0 - C.astype(np.float64) / denom
    D = np.clip(D, 0.0, 1.0)
    np.fill_diagonal(D, 0.0)
    return D


def dbscan(D: np.ndarray, eps: float = 0.5, min_pts: int = 2) -> np.ndarray:
    """Density clustering on a precomputed distance matrix.

    A point is core when its eps-neighborhood (itself included) has at least
    min_pts members. Clusters are the connected components of core points,
    with border points attached to the first core cluster that reaches them.
    Everything else is noise (-1). Cluster ids count up from 0 in
    first-encounter order over index order, so output is deterministic.
    """
    if not (0.0 < eps <= 1.0):
        raise ValidationError("eps must be in (0, 1]")
    if min_pts < 1:
        raise ValidationError("min_pts must be >= 1")
    n = D.shape[0]
    neighbors = [np.nonzero(D[i] <= eps)[0] for i in range(n)]
    core = np.array([len(nb) >= min_pts for nb in neighbors])
    labels = np.full(n, NOISE, dtype=np.int64)
    cluster = 0
    for i in range(n):
        if labels[i] != NOISE or not core[i]:
            continue
        labels[i] = cluster
        frontier = [i]
        while frontier:
            j = frontier.pop(0)
            for nb in neighbors[j]:
                if labels[nb] == NOISE:
                    labels[nb] = cluster
                    if core[nb]:
                        frontier.append(int(nb))
        cluster += 1
    return labels


@dataclass(frozen=True)
class FamilyOutcome:
    kind: str
    key: str
    members: tuple[str, ...]
    recovered: bool
    cluster_ids: tuple[int, ...]


@dataclass(frozen=True)
class RecoveryReport:
    rate: float
    families: tuple[FamilyOutcome, ...]

    def rate_for_kind(self, kind: str) -> float:
        hits = [f.recovered for f in self.families if f.kind == kind]
        if not hits:
            return 0.0
        return sum(hits) / len(hits)

    def to_json(self) -> dict:
        return {
            "rate": self.rate,
            "by_kind": {
                kind: self.rate_for_kind(kind)
                for kind in sorted({f.kind for f in self.families})
            },
            "families": [
                {
                    "kind": f.kind,
                    "key": f.key,
                    "members": list(f.members),
                    "recovered": f.recovered,
                    "cluster_ids": list(f.cluster_ids),
                }
                for f in self.families
            ],
        }


def family_recovery(
    assignment: np.ndarray, inventory: tuple[str, ...], registry: FamilyRegistry
) -> RecoveryReport:
    """Purity-based recovery: one family, one cluster, nothing else's in it."""
    index = {lab: i for i, lab in enumerate(inventory)}
    families = registry.families()
    if not families:
        raise ValidationError("registry has no families to score")

    label_families: dict[str, set[str]] = {}
    for kind, key, members in families:
        for m in members:
            label_families.setdefault(m, set()).add(f"{kind}:{key}")

    outcomes = []
    for kind, key, members in families:
        for m in members:
            if m not in index:
                raise ValidationError(f"family member {m!r} not in inventory")
        ids = tuple(int(assignment[index[m]]) for m in members)
        recovered = len(set(ids)) == 1 and ids[0] != NOISE
        if recovered:
            cluster_members = [
                inventory[i] for i in np.nonzero(assignment == ids[0])[0]
            ]
            this = f"{kind}:{key}"
            recovered = all(
                not (label_families.get(lab, set()) - {this}) for lab in cluster_members
            )
        outcomes.append(
            FamilyOutcome(kind=kind, key=key, members=members, recovered=recovered, cluster_ids=ids)
        )
    rate = sum(o.recovered for o in outcomes) / len(outcomes)
    return RecoveryReport(rate=rate, families=tuple(outcomes))


def embed_2d(D: np.ndarray) -> np.ndarray:
    """Classical MDS coordinates of the distance matrix, for plotting only.

    Double-centers the squared distances, takes the top-2 eigenpairs and
    fixes each axis sign so the largest-magnitude coordinate is positive.
    """
    n = D.shape[0]
    if n == 0:
        return np.zeros((0, 2))
    J = np.eye(n) - np.ones((n, n)) / n
    B = -0.5 * J @ (D**2) @ J
    eigval, eigvec = np.linalg.eigh(B)
    order = np.argsort(eigval)[::-1][:2]
    coords = np.zeros((n, 2))
    for axis, idx in enumerate(order):
        lam = max(eigval[idx], 0.0)
        col = eigvec[:, idx] * np.sqrt(lam)
        if len(col) and col[np.argmax(np.abs(col))] < 0:
            col = -col
        coords[:, axis] = col
    return coords
