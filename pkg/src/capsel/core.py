"""Shared domain types and vector kernels.

Everything downstream (selection, augmentation, probe training) works on
these containers.  All containers validate on construction and freeze
their arrays, so they can be shared read-only between workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ValidationError(ValueError):
    """An input violates a domain invariant (non-finite, zero norm, bad label)."""


def _frozen(arr: np.ndarray, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


def _check_finite(arr: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")


def _check_positive_norms(vectors: np.ndarray, name: str) -> None:
    norms = np.linalg.norm(vectors.astype(np.float64), axis=-1)
    if np.any(norms <= 0.0):
        raise ValidationError(f"{name} contains zero-norm rows")


@dataclass(frozen=True)
class EmbeddingSet:
    """A candidate pool: N image-embedding rows with integer class labels.

    Vectors are stored as float32 (the on-disk precision); numerical
    routines promote to float64 internally.
    """

    vectors: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        vectors = _frozen(self.vectors, np.float32)
        labels = _frozen(self.labels, np.int64)
        if vectors.ndim != 2 or vectors.shape[0] < 1 or vectors.shape[1] < 1:
            raise ValidationError(f"vectors must be a non-empty 2-d matrix, got shape {vectors.shape}")
        if labels.shape != (vectors.shape[0],):
            raise ValidationError(
                f"labels shape {labels.shape} does not match {vectors.shape[0]} vectors"
            )
        if self.class_count < 2:
            raise ValidationError("class_count must be at least 2")
        _check_finite(vectors, "vectors")
        _check_positive_norms(vectors, "vectors")
        if labels.min() < 0 or labels.max() >= self.class_count:
            raise ValidationError(
                f"labels must lie in [0, {self.class_count}), got range "
                f"[{labels.min()}, {labels.max()}]"
            )
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "labels", labels)

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class CaptionEmbeddings:
    """Text embeddings aligned row-for-row with an EmbeddingSet.

    ``prompt`` optionally holds a single target-domain phrase embedding
    used to steer selection toward a distribution shift.
    """

    vectors: np.ndarray
    prompt: np.ndarray | None = None

    def __post_init__(self):
        vectors = _frozen(self.vectors, np.float32)
        if vectors.ndim != 2 or vectors.shape[0] < 1 or vectors.shape[1] < 1:
            raise ValidationError(f"caption vectors must be a non-empty 2-d matrix, got shape {vectors.shape}")
        _check_finite(vectors, "caption vectors")
        _check_positive_norms(vectors, "caption vectors")
        object.__setattr__(self, "vectors", vectors)
        if self.prompt is not None:
            prompt = _frozen(np.asarray(self.prompt).reshape(-1), np.float32)
            if prompt.shape[0] != vectors.shape[1]:
                raise ValidationError(
                    f"prompt dim {prompt.shape[0]} does not match caption dim {vectors.shape[1]}"
                )
            _check_finite(prompt, "prompt")
            _check_positive_norms(prompt[None, :], "prompt")
            object.__setattr__(self, "prompt", prompt)

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def require_aligned(self, pool: EmbeddingSet) -> None:
        if self.count != pool.count or self.dim != pool.dim:
            raise ValidationError(
                f"captions ({self.count}x{self.dim}) not aligned with pool "
                f"({pool.count}x{pool.dim})"
            )


@dataclass(frozen=True)
class LossProfile:
    """Per-sample surrogate losses and their normalizer Z = sum(losses)."""

    losses: np.ndarray
    normalizer: float = field(init=False)

    def __post_init__(self):
        losses = _frozen(np.asarray(self.losses).reshape(-1), np.float64)
        _check_finite(losses, "losses")
        if losses.shape[0] < 1:
            raise ValidationError("loss profile must be non-empty")
        if np.any(losses < 0.0):
            raise ValidationError("losses must be non-negative")
        z = float(losses.sum())
        if z <= 0.0:
            raise ValidationError("loss normalizer must be positive; use uniform(n) for all-zero pools")
        object.__setattr__(self, "losses", losses)
        object.__setattr__(self, "normalizer", z)

    @property
    def count(self) -> int:
        return self.losses.shape[0]

    @property
    def probabilities(self) -> np.ndarray:
        """The loss-derived pool distribution: losses / normalizer."""
        return self.losses / self.normalizer

    @staticmethod
    def uniform(count: int) -> "LossProfile":
        return LossProfile(np.ones(count))


@dataclass(frozen=True)
class SelectionModel:
    """K learnable centroids in embedding space; each nominates one sample."""

    centroids: np.ndarray
    diversity_weight: float = 1.0

    def __post_init__(self):
        centroids = _frozen(self.centroids, np.float64)
        if centroids.ndim != 2 or centroids.shape[0] < 1:
            raise ValidationError(f"centroids must be a non-empty 2-d matrix, got shape {centroids.shape}")
        _check_finite(centroids, "centroids")
        _check_positive_norms(centroids, "centroids")
        if not np.isfinite(self.diversity_weight) or self.diversity_weight < 0.0:
            raise ValidationError("diversity_weight must be finite and non-negative")
        object.__setattr__(self, "centroids", centroids)

    @property
    def budget(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


@dataclass(frozen=True)
class OdsConfig:
    """Knobs for the centroid optimizer (Adam, stopped on relative change)."""

    learning_rate: float = 0.001
    max_iterations: int = 300
    convergence_window: int = 10
    convergence_tol: float = 1e-6
    ensemble_size: int = 5
    ridge: float = 1e-3
    diversity_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be positive")
        if self.convergence_window < 1:
            raise ValidationError("convergence_window must be positive")
        if self.convergence_tol <= 0:
            raise ValidationError("convergence_tol must be positive")
        if self.ensemble_size < 1:
            raise ValidationError("ensemble_size must be at least 1")
        if self.ridge <= 0:
            raise ValidationError("ridge must be positive")
        if self.diversity_weight < 0 or not np.isfinite(self.diversity_weight):
            raise ValidationError("diversity_weight must be finite and non-negative")


def make_rng(seed: int) -> np.random.Generator:
    """Seed-deterministic generator; identical seed gives an identical stream."""
    return np.random.default_rng(np.random.SeedSequence(seed))


def spawn_seeds(seed: int, count: int) -> list[np.random.SeedSequence]:
    """Derive ``count`` independent child seed sequences from one master seed."""
    return np.random.SeedSequence(seed).spawn(count)


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two vectors, in [-1, 1].

    Raises ValidationError on zero-norm or non-finite input; inputs are
    never modified.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    _check_finite(a, "a")
    _check_finite(b, "b")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na <= 0.0 or nb <= 0.0:
        raise ValidationError("cosine similarity is undefined for zero-norm vectors")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def softmax(values) -> np.ndarray:
    """Stable softmax: positive outputs summing to 1, shift-invariant."""
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    _check_finite(values, "softmax input")
    shifted = values - values.max()
    e = np.exp(shifted)
    return e / e.sum()


def unit_rows(matrix: np.ndarray) -> np.ndarray:
    """Row-normalize a matrix in float64 (rows must have positive norm)."""
    m = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms <= 0.0):
        raise ValidationError("cannot normalize zero-norm rows")
    return m / norms
