"""The four training objectives and their analytic gradients.

Every loss takes a (batch, labels) logit matrix and returns the scalar batch
loss (sum over labels, mean over the batch) together with dL/dlogits of the
same shape. Gradients are exact for the unguarded formulas; the numerical
guards (logit clip at +/-30 before exponentials, log arguments floored at
1e-12) only engage far outside the region finite-difference checks probe.

Objectives:

* ``bce``: independent per-label binary cross entropy on sigmoid outputs.
* ``neg_sample``: BCE restricted to the positive label plus a sampled subset
  of negatives; all other labels are masked and receive exactly zero
  gradient.
* ``ls_focal``: soft-target focal BCE. Targets are label-smoothed
  (t = l*(1-beta) + beta/|L|) and weight the two focal branches:
  -[t * a_pos * (1-p)^gamma * log p + (1-t) * a_neg * p^gamma * log(1-p)].
* ``mlce``: multi-label cross entropy with a threshold score s0,
  log(e^s0 + sum_neg e^s_i) + log(e^-s0 + sum_pos e^-s_j), computed with
  log-sum-exp stabilization. Passing ``s0=None`` drops the threshold terms,
  giving log(1 + sum_neg e^s_i * sum_pos e^-s_j), which reduces to softmax
  cross entropy when there is a single positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from intentgraft.errors import ValidationError

LOGIT_CLIP = 30.0
LOG_FLOOR = 1e-12

LOSS_KINDS = ("bce", "neg_sample", "ls_focal", "mlce")


@dataclass(frozen=True)
class LossConfig:
    """Hyperparameters for one training objective.

    Defaults follow the reference configuration: gamma=4, alpha_neg=1e-5,
    alpha_pos=0.99999, s0=0, one sampled negative per instance.
    """

    kind: str = "bce"
    beta: float = 0.1
    gamma: float = 4.0
    alpha_pos: float = 0.99999
    alpha_neg: float = 1e-5
    s0: float = 0.0
    neg_count: int = 1

    def __post_init__(self) -> None:
        if self.kind not in LOSS_KINDS:
            raise ValidationError(f"loss kind must be one of {LOSS_KINDS}, got {self.kind!r}")
        if not (0.0 <= self.beta < 1.0):
            raise ValidationError("beta must be in [0, 1)")
        if self.gamma < 0.0:
            raise ValidationError("gamma must be >= 0")
        for a in (self.alpha_pos, self.alpha_neg):
            if not (0.0 <= a <= 1.0):
                raise ValidationError("alpha weights must be in [0, 1]")
        if self.neg_count < 1:
            raise ValidationError("neg_count must be >= 1")

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "beta": self.beta,
            "gamma": self.gamma,
            "alpha_pos": self.alpha_pos,
            "alpha_neg": self.alpha_neg,
            "s0": self.s0,
            "neg_count": self.neg_count,
        }

    @classmethod
    def from_json(cls, obj: dict) -> LossConfig:
        return cls(**obj)


def neg_count_from_proportion(theta: float, n_labels: int) -> int:
    """Convenience for proportion-style negative sampling: rounds theta*|L|."""
    if not (0.0 < theta <= 1.0):
        raise ValidationError("theta must be in (0, 1]")
    return max(1, round(theta * n_labels))


def sigmoid(logits: np.ndarray) -> np.ndarray:
    clipped = np.clip(logits, -LOGIT_CLIP, LOGIT_CLIP)
    return 1.0 / (1.0 + np.exp(-clipped))


def smooth_labels(targets: np.ndarray, beta: float, n_labels: int) -> np.ndarray:
    """Label smoothing: t = l*(1-beta) + beta/|L| elementwise."""
    if not (0.0 <= beta < 1.0):
        raise ValidationError("beta must be in [0, 1)")
    return targets * (1.0 - beta) + beta / n_labels


def _safe_log(x: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(x, LOG_FLOOR))


def loss_bce(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Plain multi-label BCE; gradient is (p - t) / batch."""
    batch = logits.shape[0]
    p = sigmoid(logits)
    per_elem = -(targets * _safe_log(p) + (1.0 - targets) * _safe_log(1.0 - p))
    loss = float(per_elem.sum() / batch)
    grad = (p - targets) / batch
    return loss, grad


def loss_neg_sample(
    logits: np.ndarray, targets: np.ndarray, mask: np.ndarray
) -> tuple[float, np.ndarray]:
    """BCE over the masked label subset only; unmasked labels get zero gradient."""
    batch = logits.shape[0]
    p = sigmoid(logits)
    per_elem = -(targets * _safe_log(p) + (1.0 - targets) * _safe_log(1.0 - p))
    loss = float((per_elem * mask).sum() / batch)
    grad = mask * (p - targets) / batch
    return loss, grad


def loss_ls_focal(
    logits: np.ndarray,
    soft_targets: np.ndarray,
    gamma: float,
    alpha_pos: float,
    alpha_neg: float,
) -> tuple[float, np.ndarray]:
    """Soft-target focal BCE; targets weight the two focal branches.

    d/ds[-t*a_pos*(1-p)^g*log p] = t*a_pos*[g*p*(1-p)^g*log p - (1-p)^(g+1)]
    d/ds[-(1-t)*a_neg*p^g*log(1-p)] = (1-t)*a_neg*[p^(g+1) - g*p^g*(1-p)*log(1-p)]
    """
    batch = logits.shape[0]
    t = soft_targets
    p = sigmoid(logits)
    one_m_p = 1.0 - p
    log_p = _safe_log(p)
    log_1mp = _safe_log(one_m_p)
    pow_neg = np.power(one_m_p, gamma)
    pow_pos = np.power(p, gamma)

    per_elem = -(t * alpha_pos * pow_neg * log_p + (1.0 - t) * alpha_neg * pow_pos * log_1mp)
    loss = float(per_elem.sum() / batch)

    grad_pos = t * alpha_pos * (gamma * p * pow_neg * log_p - pow_neg * one_m_p)
    grad_neg = (1.0 - t) * alpha_neg * (pow_pos * p - gamma * pow_pos * one_m_p * log_1mp)
    grad = (grad_pos + grad_neg) / batch
    return loss, grad


def loss_mlce(
    logits: np.ndarray, pos_mask: np.ndarray, s0: float | None = 0.0
) -> tuple[float, np.ndarray]:
    """Multi-label CE with threshold score; ``s0=None`` drops threshold terms.

    pos_mask is a boolean (batch, labels) matrix; its complement is the
    negative set, so together they partition the inventory.
    """
    if pos_mask.dtype != bool:
        raise ValidationError("pos_mask must be boolean")
    batch, _ = logits.shape
    s = np.clip(logits, -LOGIT_CLIP, LOGIT_CLIP)
    neg_mask = ~pos_mask

    neg_terms = np.where(neg_mask, s, -np.inf)
    pos_terms = np.where(pos_mask, -s, -np.inf)

    if s0 is not None:
        # log(e^s0 + sum_neg e^s_i) + log(e^-s0 + sum_pos e^-s_j), per row.
        neg_all = np.concatenate([np.full((batch, 1), s0), neg_terms], axis=1)
        pos_all = np.concatenate([np.full((batch, 1), -s0), pos_terms], axis=1)
        lse_neg = _logsumexp(neg_all)
        lse_pos = _logsumexp(pos_all)
        loss = float((lse_neg + lse_pos).sum() / batch)
        grad = np.exp(np.where(neg_mask, s - lse_neg[:, None], -np.inf))
        grad -= np.exp(np.where(pos_mask, -s - lse_pos[:, None], -np.inf))
        return loss, grad / batch

    # log(1 + sum_neg e^s_i * sum_pos e^-s_j) = softplus(lse_neg + lse_pos).
    lse_neg = _logsumexp(neg_terms)
    lse_pos = _logsumexp(pos_terms)
    z = lse_neg + lse_pos
    loss = float(np.logaddexp(0.0, z).sum() / batch)
    sig_z = 1.0 / (1.0 + np.exp(-np.clip(z, -700.0, 700.0)))
    grad = np.exp(np.where(neg_mask, s - lse_neg[:, None], -np.inf))
    grad -= np.exp(np.where(pos_mask, -s - lse_pos[:, None], -np.inf))
    grad *= sig_z[:, None]
    return loss, grad / batch


def _logsumexp(x: np.ndarray) -> np.ndarray:
    m = np.max(x, axis=1)
    finite = np.isfinite(m)
    m_safe = np.where(finite, m, 0.0)
    with np.errstate(divide="ignore"):
        out = m_safe + np.log(np.sum(np.exp(x - m_safe[:, None]), axis=1))
    return np.where(finite, out, -np.inf)


def sample_negatives(
    rng: np.random.Generator, positive: int, n_labels: int, count: int
) -> np.ndarray:
    """Uniform sample without replacement from the inventory minus the positive."""
    if count > n_labels - 1:
        raise ValidationError(f"cannot sample {count} negatives from {n_labels - 1} candidates")
    pool = np.concatenate([np.arange(positive), np.arange(positive + 1, n_labels)])
    picked = rng.choice(pool, size=count, replace=False)
    return np.sort(picked)
