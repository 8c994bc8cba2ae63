"""Multi-label linear classifier over hashed features.

Logits are ``W @ h + b`` with one row of W per inventory label; probabilities
are elementwise sigmoid and a label is predicted when its probability is
strictly greater than 0.5. Training runs deterministic mini-batch gradient
descent: given (data, configs, seed) the final parameters are bit-for-bit
reproducible (fixed shuffling stream, fixed per-batch reduction order,
single-threaded sparse products).

Modes: ``pu`` exposes each record's single training label; ``upper_bound``
exposes the full gold closure carried by the record (the oracle ceiling).

Model artifact: ``<stem>.json`` manifest (format version, inventory, encoder
and loss/train configs, payload checksum) next to ``<stem>.bin`` holding a
magic header plus W then b as little-endian float32.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from intentgraft.corpus import Corpus
from intentgraft.encoder import EncoderConfig, featurize, featurize_texts
from intentgraft.errors import DivergenceError, ValidationError
from intentgraft.fileio import atomic_write_bytes, atomic_write_text
from intentgraft.losses import (
    LossConfig,
    loss_bce,
    loss_ls_focal,
    loss_mlce,
    loss_neg_sample,
    sigmoid,
    smooth_labels,
)
from intentgraft.metrics import MetricAccumulator
from intentgraft.rng import stream

MAGIC = b"IGMODEL1"
FORMAT_VERSION = 1

OPTIMIZERS = ("sgd", "sgd_momentum", "adam")
TRAIN_MODES = ("pu", "upper_bound")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 512
    learning_rate: float = 2e-3
    optimizer: str = "adam"
    momentum: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    mode: str = "pu"

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValidationError("learning rate must be > 0")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.optimizer not in OPTIMIZERS:
            raise ValidationError(f"optimizer must be one of {OPTIMIZERS}")
        if self.mode not in TRAIN_MODES:
            raise ValidationError(f"mode must be one of {TRAIN_MODES}")

    def to_json(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "optimizer": self.optimizer,
            "momentum": self.momentum,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps,
            "seed": self.seed,
            "mode": self.mode,
        }

    @classmethod
    def from_json(cls, obj: dict) -> TrainConfig:
        return cls(**obj)


@dataclass(frozen=True)
class ModelParameters:
    weights: np.ndarray  # (labels, dim) float64
    bias: np.ndarray  # (labels,) float64
    inventory: tuple[str, ...]
    encoder_cfg: EncoderConfig

    def __post_init__(self) -> None:
        if self.weights.shape != (len(self.inventory), self.encoder_cfg.dim):
            raise ValidationError(
                f"weight shape {self.weights.shape} does not match "
                f"{len(self.inventory)} labels x dim {self.encoder_cfg.dim}"
            )
        if self.bias.shape != (len(self.inventory),):
            raise ValidationError("bias shape does not match inventory")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise ValidationError("parameters contain non-finite entries")


def forward(params: ModelParameters, feature) -> tuple[np.ndarray, np.ndarray]:
    """Logits and sigmoid probabilities for one FeatureVector or a CSR batch."""
    if sparse.issparse(feature):
        if feature.shape[1] != params.encoder_cfg.dim:
            raise ValidationError("feature dimension mismatch")
        logits = feature @ params.weights.T + params.bias[None, :]
    else:
        if feature.dim != params.encoder_cfg.dim:
            raise ValidationError("feature dimension mismatch")
        logits = params.weights[:, feature.indices] @ feature.values + params.bias
    return logits, sigmoid(logits)


def predict(params: ModelParameters, text: str) -> set[str]:
    """Labels whose probability strictly exceeds 0.5; may be empty."""
    _, probs = forward(params, featurize(text, params.encoder_cfg))
    return {params.inventory[i] for i in np.nonzero(probs > 0.5)[0]}


def predict_batch(params: ModelParameters, texts: list[str]) -> list[set[str]]:
    X = featurize_texts(texts, params.encoder_cfg)
    _, probs = forward(params, X)
    out = []
    for row in probs > 0.5:
        out.append({params.inventory[i] for i in np.nonzero(row)[0]})
    return out


# ---------------------------------------------------------------------------
# Optimizers (elementwise updates, deterministic)
# ---------------------------------------------------------------------------


class _Optimizer:
    def __init__(self, cfg: TrainConfig, shapes: list[tuple[int, ...]]):
        self.cfg = cfg
        self.t = 0
        if cfg.optimizer == "sgd_momentum":
            self.vel = [np.zeros(s) for s in shapes]
        elif cfg.optimizer == "adam":
            self.m = [np.zeros(s) for s in shapes]
            self.v = [np.zeros(s) for s in shapes]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        with np.errstate(over="ignore", invalid="ignore"):
            self._apply(params, grads)

    def _apply(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        cfg = self.cfg
        if cfg.optimizer == "sgd":
            for p, g in zip(params, grads):
                p -= cfg.learning_rate * g
        elif cfg.optimizer == "sgd_momentum":
            for p, g, v in zip(params, grads, self.vel):
                v *= cfg.momentum
                v += g
                p -= cfg.learning_rate * v
        else:
            b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
            correction1 = 1.0 - b1**self.t
            correction2 = 1.0 - b2**self.t
            for p, g, m, v in zip(params, grads, self.m, self.v):
                m *= b1
                m += (1.0 - b1) * g
                v *= b2
                v += (1.0 - b2) * np.square(g)
                p -= cfg.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + eps)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class TrainHistory:
    epochs: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    valid_f1: list[float] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"epochs": self.epochs, "train_loss": self.train_loss, "valid_f1": self.valid_f1}


def _target_matrix(c: Corpus, mode: str) -> np.ndarray:
    index = c.label_index()
    targets = np.zeros((len(c.records), len(c.inventory)))
    for i, rec in enumerate(c.records):
        labels = rec.gold if (mode == "upper_bound" and rec.gold is not None) else rec.labels
        for lab in labels:
            targets[i, index[lab]] = 1.0
    return targets


def _gold_sets(c: Corpus) -> list[set[str]]:
    return [set(rec.labels) for rec in c.records]


def train(
    train_corpus: Corpus,
    valid_corpus: Corpus,
    encoder_cfg: EncoderConfig,
    loss_cfg: LossConfig,
    train_cfg: TrainConfig,
) -> tuple[ModelParameters, TrainHistory]:
    """Mini-batch gradient descent; returns parameters and per-epoch history."""
    if train_corpus.inventory != valid_corpus.inventory:
        raise ValidationError("train and valid corpora must share one inventory")
    if not train_corpus.records:
        raise ValidationError("training corpus is empty")
    if train_cfg.mode == "pu":
        for rec in train_corpus.records:
            if len(rec.labels) != 1:
                raise ValidationError(
                    f"record {rec.id!r}: PU training requires exactly one label per record"
                )

    inventory = train_corpus.inventory
    n_labels = len(inventory)
    X = featurize_texts([r.text for r in train_corpus.records], encoder_cfg)
    targets = _target_matrix(train_corpus, train_cfg.mode)
    X_valid = featurize_texts([r.text for r in valid_corpus.records], encoder_cfg)
    valid_gold = _gold_sets(valid_corpus)

    W = np.zeros((n_labels, encoder_cfg.dim))
    b = np.zeros(n_labels)
    opt = _Optimizer(train_cfg, [W.shape, b.shape])
    shuffle_rng = stream(train_cfg.seed, "train/shuffle")
    negsample_rng = stream(train_cfg.seed, "train/negatives")

    n = X.shape[0]
    history = TrainHistory()
    for epoch in range(1, train_cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, train_cfg.batch_size):
            rows = order[start : start + train_cfg.batch_size]
            xb = X[rows]
            tb = targets[rows]
            # Divergence is detected by the explicit finiteness checks below,
            # not by floating-point warnings.
            with np.errstate(over="ignore", invalid="ignore"):
                logits = xb @ W.T + b[None, :]
                loss, dlogits = _batch_loss(logits, tb, loss_cfg, negsample_rng, n_labels)
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch {n_batches} "
                    f"(kind={loss_cfg.kind}, lr={train_cfg.learning_rate})"
                )
            dW = (xb.T @ dlogits).T
            db = dlogits.sum(axis=0)
            opt.step([W, b], [np.asarray(dW), db])
            epoch_loss += loss
            n_batches += 1

        if not (np.isfinite(W).all() and np.isfinite(b).all()):
            raise DivergenceError(
                f"non-finite parameters after epoch {epoch} "
                f"(kind={loss_cfg.kind}, lr={train_cfg.learning_rate})"
            )
        f1 = _micro_f1(W, b, inventory, X_valid, valid_gold)
        history.epochs.append(epoch)
        history.train_loss.append(epoch_loss / max(1, n_batches))
        history.valid_f1.append(f1)

    params = ModelParameters(weights=W, bias=b, inventory=inventory, encoder_cfg=encoder_cfg)
    return params, history


def _batch_loss(
    logits: np.ndarray,
    targets: np.ndarray,
    loss_cfg: LossConfig,
    rng: np.random.Generator,
    n_labels: int,
) -> tuple[float, np.ndarray]:
    if loss_cfg.kind == "bce":
        return loss_bce(logits, targets)
    if loss_cfg.kind == "ls_focal":
        soft = smooth_labels(targets, loss_cfg.beta, n_labels)
        return loss_ls_focal(logits, soft, loss_cfg.gamma, loss_cfg.alpha_pos, loss_cfg.alpha_neg)
    if loss_cfg.kind == "mlce":
        return loss_mlce(logits, targets > 0.5, loss_cfg.s0)
    # neg_sample: optimize positives plus a fresh uniform sample of negatives.
    mask = targets.copy()
    for i in range(logits.shape[0]):
        positives = np.nonzero(targets[i])[0]
        count = min(loss_cfg.neg_count, n_labels - len(positives))
        if count > 0:
            pool = np.setdiff1d(np.arange(n_labels), positives, assume_unique=True)
            mask[i, rng.choice(pool, size=count, replace=False)] = 1.0
    return loss_neg_sample(logits, targets, mask)


def _micro_f1(
    W: np.ndarray,
    b: np.ndarray,
    inventory: tuple[str, ...],
    X: sparse.csr_matrix,
    gold: list[set[str]],
) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        probs = sigmoid(X @ W.T + b[None, :])
    acc = MetricAccumulator.for_inventory(inventory)
    for row, gold_set in zip(probs > 0.5, gold):
        pred = {inventory[i] for i in np.nonzero(row)[0]}
        acc.accumulate(pred, gold_set)
    return acc.finalize().f1


# ---------------------------------------------------------------------------
# Artifact serialization
# ---------------------------------------------------------------------------


def save_model(
    params: ModelParameters,
    stem: str | Path,
    loss_cfg: LossConfig | None = None,
    train_cfg: TrainConfig | None = None,
) -> tuple[Path, Path]:
    """Write ``<stem>.json`` + ``<stem>.bin``; returns both paths."""
    stem = Path(stem)
    flat = np.concatenate(
        [params.weights.astype("<f4").ravel(), params.bias.astype("<f4").ravel()]
    )
    payload = flat.tobytes()
    bin_path = stem.with_suffix(".bin")
    json_path = stem.with_suffix(".json")
    atomic_write_bytes(bin_path, MAGIC + payload)
    manifest = {
        "format_version": FORMAT_VERSION,
        "inventory": list(params.inventory),
        "encoder": params.encoder_cfg.to_json(),
        "loss": loss_cfg.to_json() if loss_cfg else None,
        "train": train_cfg.to_json() if train_cfg else None,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "n_floats": int(flat.size),
    }
    atomic_write_text(json_path, json.dumps(manifest, ensure_ascii=False, indent=2, sort_keys=True) + "\n")
    return json_path, bin_path


def load_model(stem: str | Path) -> ModelParameters:
    """Load a model artifact, verifying magic header and payload checksum."""
    stem = Path(stem)
    json_path = stem.with_suffix(".json")
    bin_path = stem.with_suffix(".bin")
    with open(json_path, encoding="utf-8") as f:
        manifest = json.load(f)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValidationError(f"unsupported model format version {manifest.get('format_version')}")
    raw = bin_path.read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise ValidationError(f"{bin_path}: bad magic header")
    payload = raw[len(MAGIC) :]
    if hashlib.sha256(payload).hexdigest() != manifest["payload_sha256"]:
        raise ValidationError(f"{bin_path}: payload checksum mismatch")
    flat = np.frombuffer(payload, dtype="<f4")
    if flat.size != manifest["n_floats"]:
        raise ValidationError(f"{bin_path}: expected {manifest['n_floats']} floats, got {flat.size}")
    inventory = tuple(manifest["inventory"])
    encoder_cfg = EncoderConfig.from_json(manifest["encoder"])
    n_labels, dim = len(inventory), encoder_cfg.dim
    W = flat[: n_labels * dim].reshape(n_labels, dim).astype(np.float64)
    b = flat[n_labels * dim :].astype(np.float64)
    return ModelParameters(weights=W, bias=b, inventory=inventory, encoder_cfg=encoder_cfg)
