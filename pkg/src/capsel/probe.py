"""Linear softmax probe: the trainable head standing in for a full model.

The probe supplies the per-sample losses that drive selection and is the
thing actually finetuned each loop.  Embeddings stay fixed; only W and b
move.  Training is plain SGD with momentum over shuffled epochs, seeded
so every run is reproducible bit-for-bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import EmbeddingSet, LossProfile, ValidationError, make_rng
from .fileio import FormatError, LengthError

VCP_MAGIC = b"VCP1"


@dataclass(frozen=True)
class ProbeModel:
    """Linear classifier: logits = weights @ e + bias."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64, copy=True)
        b = np.array(self.bias, dtype=np.float64, copy=True).reshape(-1)
        if w.ndim != 2 or w.shape[0] < 2:
            raise ValidationError(f"weights must be CxD with C >= 2, got shape {w.shape}")
        if b.shape[0] != w.shape[0]:
            raise ValidationError(f"bias length {b.shape[0]} does not match {w.shape[0]} classes")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValidationError("probe parameters must be finite")
        w.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def class_count(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    @staticmethod
    def zeros(class_count: int, dim: int) -> "ProbeModel":
        if class_count < 2 or dim < 1:
            raise ValidationError("need class_count >= 2 and dim >= 1")
        return ProbeModel(np.zeros((class_count, dim)), np.zeros(class_count))


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 0.05
    batches_per_loop: int = 100
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValidationError("batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.batches_per_loop < 0:
            raise ValidationError("batches_per_loop must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValidationError("momentum must lie in [0, 1)")


def _logits(model: ProbeModel, vectors: np.ndarray) -> np.ndarray:
    return vectors @ model.weights.T + model.bias


def _cross_entropy(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1)) + logits.max(axis=1)
    return lse - logits[np.arange(logits.shape[0]), labels]


def forward_loss(model: ProbeModel, embedding, label: int) -> float:
    """Cross-entropy of one sample: -log softmax(We + b)[label]."""
    e = np.asarray(embedding, dtype=np.float64).reshape(-1)
    if e.shape[0] != model.dim:
        raise ValidationError(f"embedding dim {e.shape[0]} does not match probe dim {model.dim}")
    if not 0 <= label < model.class_count:
        raise ValidationError(f"label {label} outside [0, {model.class_count})")
    return float(_cross_entropy(_logits(model, e[None, :]), np.array([label]))[0])


def pool_losses(model: ProbeModel, pool: EmbeddingSet, scale=None) -> LossProfile:
    """Per-sample cross-entropy over the pool, as a normalized profile.

    An optional positive `scale` vector multiplies the raw losses before
    normalization (used to mark known-hard subpopulations).  A pool the
    model fits perfectly (all losses exactly 0) falls back to the
    uniform profile, where selection degrades to diversity-only.
    """
    if pool.dim != model.dim or pool.class_count != model.class_count:
        raise ValidationError(
            f"pool ({pool.class_count} classes, dim {pool.dim}) does not match probe "
            f"({model.class_count} classes, dim {model.dim})"
        )
    losses = _cross_entropy(_logits(model, pool.vectors.astype(np.float64)), pool.labels)
    losses = np.maximum(losses, 0.0)  # guard the exact-fit case against -1e-17 rounding
    if scale is not None:
        scale = np.asarray(scale, dtype=np.float64).reshape(-1)
        if scale.shape[0] != pool.count:
            raise ValidationError(f"{scale.shape[0]} scale entries for {pool.count} samples")
        if np.any(scale <= 0) or not np.all(np.isfinite(scale)):
            raise ValidationError("scale entries must be positive and finite")
        losses = losses * scale
    if losses.sum() <= 0.0:
        return LossProfile.uniform(pool.count)
    return LossProfile(losses)


def ce_gradients(model: ProbeModel, vectors: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy gradient over a batch: (dW, db, mean loss)."""
    logits = _logits(model, vectors)
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    probs = expd / expd.sum(axis=1, keepdims=True)
    m = vectors.shape[0]
    delta = probs.copy()
    delta[np.arange(m), labels] -= 1.0
    grad_w = delta.T @ vectors / m
    grad_b = delta.mean(axis=0)
    loss = float(_cross_entropy(logits, labels).mean())
    return grad_w, grad_b, loss


class SgdTrainer:
    """Stateful SGD-with-momentum over shuffled epochs of one subset.

    Exists so a caller can interleave evaluation between batches while
    the epoch shuffle and momentum state carry forward.  `train` wraps
    it for the plain run-B-batches case.
    """

    def __init__(self, model: ProbeModel, vectors, labels, config: TrainConfig):
        self.vectors = np.asarray(vectors, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] < 1:
            raise ValidationError("training subset must be a non-empty matrix")
        if self.labels.shape != (self.vectors.shape[0],):
            raise ValidationError("subset labels misaligned with vectors")
        if self.vectors.shape[1] != model.dim:
            raise ValidationError(f"subset dim {self.vectors.shape[1]} does not match probe dim {model.dim}")
        if self.labels.max() >= model.class_count or self.labels.min() < 0:
            raise ValidationError("subset labels outside the probe's classes")
        self.config = config
        self.weights = model.weights.copy()
        self.bias = model.bias.copy()
        self.vel_w = np.zeros_like(self.weights)
        self.vel_b = np.zeros_like(self.bias)
        self.rng = make_rng(config.seed)
        self.queue: list[np.ndarray] = []

    def _next_batch(self) -> np.ndarray:
        if not self.queue:
            order = self.rng.permutation(self.vectors.shape[0])
            size = self.config.batch_size
            self.queue = [order[i:i + size] for i in range(0, order.shape[0], size)]
        return self.queue.pop(0)

    def step(self) -> float:
        """One mini-batch update; returns the batch loss before the update."""
        batch = self._next_batch()
        model = ProbeModel(self.weights, self.bias)
        grad_w, grad_b, loss = ce_gradients(model, self.vectors[batch], self.labels[batch])
        self.vel_w = self.config.momentum * self.vel_w + grad_w
        self.vel_b = self.config.momentum * self.vel_b + grad_b
        self.weights -= self.config.learning_rate * self.vel_w
        self.bias -= self.config.learning_rate * self.vel_b
        return loss

    def snapshot(self) -> ProbeModel:
        return ProbeModel(self.weights, self.bias)


def train(model: ProbeModel, vectors, labels, config: TrainConfig):
    """Run exactly batches_per_loop SGD batches; returns (model, batch losses)."""
    trainer = SgdTrainer(model, vectors, labels, config)
    losses = [trainer.step() for _ in range(config.batches_per_loop)]
    return trainer.snapshot(), np.asarray(losses)


def evaluate(model: ProbeModel, pool: EmbeddingSet) -> float:
    """Top-1 accuracy; argmax ties resolve to the lowest class index."""
    if pool.dim != model.dim or pool.class_count != model.class_count:
        raise ValidationError("eval pool does not match probe shape")
    predicted = np.argmax(_logits(model, pool.vectors.astype(np.float64)), axis=1)
    return float(np.mean(predicted == pool.labels))


def save_probe(model: ProbeModel, path) -> None:
    """Write a VCP1 checkpoint: magic, u32 C, u32 d, then W and b as float32 LE."""
    payload = np.concatenate([model.weights.reshape(-1), model.bias])
    data = np.ascontiguousarray(payload, dtype="<f4")
    try:
        with open(path, "wb") as fh:
            fh.write(VCP_MAGIC)
            fh.write(struct.pack("<II", model.class_count, model.dim))
            fh.write(data.tobytes())
    except OSError as exc:
        raise OSError(f"failed writing probe checkpoint to {path}: {exc}") from exc


def load_probe(path) -> ProbeModel:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"failed reading probe checkpoint from {path}: {exc}") from exc
    if len(blob) < 12 or blob[:4] != VCP_MAGIC:
        raise FormatError(f"{path}: not a VCP1 checkpoint (bad magic)")
    c, d = struct.unpack("<II", blob[4:12])
    expected = 12 + 4 * (c * d + c)
    if len(blob) != expected:
        raise LengthError(f"{path}: header declares C={c} d={d} ({expected} bytes) but file has {len(blob)}")
    flat = np.frombuffer(blob[12:], dtype="<f4").astype(np.float64)
    return ProbeModel(flat[: c * d].reshape(c, d), flat[c * d:])
