"""Deterministic synthetic datasets for desk-scale experiments.

Class clusters are isotropic Gaussians around unit-norm centers kept at
least a configurable angle apart.  Caption embeddings mimic text
embeddings by sharing the image dimension: class center plus small
noise.  An optional domain-shift vector displaces a flagged fraction of
training samples so out-of-distribution steering can be measured.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import CaptionEmbeddings, EmbeddingSet, ValidationError


class ConfigError(ValueError):
    """The dataset spec cannot be realized (e.g. infeasible separation)."""


@dataclass(frozen=True)
class SynthSpec:
    class_count: int = 5
    samples_per_class: int = 200
    eval_per_class: int = 40
    dim: int = 16
    cluster_spread: float = 0.4
    min_angle_deg: float = 40.0
    caption_noise: float = 0.05
    loss_boost_classes: tuple[int, ...] = ()
    boost_factor: float = 10.0
    shift: np.ndarray | None = None
    shift_fraction: float = 0.0
    equal_angle_deg: float | None = None
    close_pair_angle_deg: float | None = None
    class_share: tuple[float, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.class_count < 2:
            raise ConfigError("class_count must be at least 2")
        if self.samples_per_class < 1 or self.eval_per_class < 0:
            raise ConfigError("samples_per_class must be positive, eval_per_class non-negative")
        if self.dim < 1:
            raise ConfigError("dim must be positive")
        if self.cluster_spread <= 0:
            raise ConfigError("cluster_spread must be positive")
        if not 0.0 <= self.shift_fraction <= 1.0:
            raise ConfigError("shift_fraction must lie in [0, 1]")
        if self.boost_factor <= 0:
            raise ConfigError("boost_factor must be positive")
        if any(c < 0 or c >= self.class_count for c in self.loss_boost_classes):
            raise ConfigError("loss_boost_classes out of range")
        object.__setattr__(self, "loss_boost_classes", tuple(self.loss_boost_classes))
        if self.shift is not None:
            shift = np.asarray(self.shift, dtype=np.float64).reshape(-1)
            if shift.shape[0] != self.dim:
                raise ConfigError(f"shift dim {shift.shape[0]} does not match dim {self.dim}")
            if not np.all(np.isfinite(shift)):
                raise ConfigError("shift vector must be finite")
            object.__setattr__(self, "shift", shift)
        if self.shift_fraction > 0.0 and self.shift is None:
            raise ConfigError("shift_fraction > 0 requires a shift vector")
        if self.close_pair_angle_deg is not None:
            if not 0.0 < self.close_pair_angle_deg < 180.0:
                raise ConfigError("close_pair_angle_deg must lie in (0, 180)")
        if self.equal_angle_deg is not None:
            if not 0.0 < self.equal_angle_deg <= 90.0:
                raise ConfigError("equal_angle_deg must lie in (0, 90]")
            if self.dim < self.class_count + 1:
                raise ConfigError("equal-angle placement needs dim > class_count")
        if self.class_share is not None:
            share = tuple(float(s) for s in self.class_share)
            if len(share) != self.class_count:
                raise ConfigError("class_share needs one entry per class")
            if any(s <= 0 for s in share):
                raise ConfigError("class_share entries must be positive")
            total = sum(share)
            object.__setattr__(self, "class_share", tuple(s / total for s in share))


@dataclass(frozen=True)
class SynthData:
    train: EmbeddingSet
    eval_pool: EmbeddingSet
    captions: CaptionEmbeddings
    metadata: dict = field(repr=False)


def _rejection_centers(rng: np.random.Generator, spec: SynthSpec) -> np.ndarray:
    min_cos = np.cos(np.radians(spec.min_angle_deg))
    centers: list[np.ndarray] = []
    attempts = 0
    while len(centers) < spec.class_count:
        attempts += 1
        if attempts > 1000 * spec.class_count:
            raise ConfigError(
                f"cannot place {spec.class_count} centers at >= {spec.min_angle_deg} deg "
                f"separation in {spec.dim} dimensions"
            )
        candidate = rng.standard_normal(spec.dim)
        norm = np.linalg.norm(candidate)
        if norm <= 0:
            continue
        candidate /= norm
        if all(np.dot(candidate, c) <= min_cos for c in centers):
            centers.append(candidate)
    return np.stack(centers)


def _equiangular_centers(rng: np.random.Generator, spec: SynthSpec) -> np.ndarray:
    # every pair of centers at the same angle: centers sit on a cone around a
    # random axis, tangent directions orthonormal, so cos(theta) = cos^2(alpha)
    axis = rng.standard_normal(spec.dim)
    axis /= np.linalg.norm(axis)
    raw = rng.standard_normal((spec.dim, spec.class_count))
    raw -= np.outer(axis, axis @ raw)
    tangents, _ = np.linalg.qr(raw)
    alpha = np.arccos(np.sqrt(np.cos(np.radians(spec.equal_angle_deg))))
    return (np.cos(alpha) * axis[:, None] + np.sin(alpha) * tangents).T


def _slerp(a: np.ndarray, b: np.ndarray, angle: float) -> np.ndarray:
    """Point on the great circle from a toward b, at ``angle`` radians from a."""
    ortho = b - np.dot(a, b) * a
    ortho /= np.linalg.norm(ortho)
    return np.cos(angle) * a + np.sin(angle) * ortho


def _class_centers(rng: np.random.Generator, spec: SynthSpec) -> np.ndarray:
    if spec.equal_angle_deg is not None:
        out = _equiangular_centers(rng, spec)
    else:
        out = _rejection_centers(rng, spec)
    if spec.close_pair_angle_deg is not None:
        # pull class 1 along the geodesic toward class 0: one deliberately
        # confusable pair at an exact angle, angles to other centers barely move
        out[1] = _slerp(out[0], out[1], np.radians(spec.close_pair_angle_deg))
    return out


def _sample_pool(rng, centers, counts, spread) -> tuple[np.ndarray, np.ndarray]:
    c, d = centers.shape
    total = int(np.sum(counts))
    vectors = np.empty((total, d))
    labels = np.empty(total, dtype=np.int64)
    start = 0
    for k in range(c):
        block = slice(start, start + counts[k])
        vectors[block] = centers[k] + spread * rng.standard_normal((counts[k], d))
        labels[block] = k
        start += counts[k]
    return vectors, labels


def _train_counts(spec: SynthSpec) -> np.ndarray:
    total = spec.class_count * spec.samples_per_class
    if spec.class_share is None:
        return np.full(spec.class_count, spec.samples_per_class, dtype=np.int64)
    # floor allocation, remainder to the largest fractional parts; keeps the
    # pool size independent of the share mix
    raw = np.array(spec.class_share) * total
    counts = np.floor(raw).astype(np.int64)
    frac = raw - counts
    for k in np.argsort(-frac, kind="stable")[: total - counts.sum()]:
        counts[k] += 1
    if np.any(counts < 1):
        raise ConfigError("class_share leaves some class without samples")
    return counts


def synth_dataset(spec: SynthSpec) -> SynthData:
    """Generate train/eval pools plus captions; a pure function of the spec."""
    streams = np.random.SeedSequence(spec.seed).spawn(5)
    center_rng, train_rng, eval_rng, caption_rng, shift_rng = (
        np.random.default_rng(s) for s in streams
    )

    centers = _class_centers(center_rng, spec)
    train_counts = _train_counts(spec)
    train_vec, train_lab = _sample_pool(train_rng, centers, train_counts, spec.cluster_spread)
    n_train = train_vec.shape[0]

    shift_flags = np.zeros(n_train, dtype=bool)
    if spec.shift is not None and spec.shift_fraction > 0.0:
        n_shift = int(np.floor(spec.shift_fraction * n_train))
        chosen = shift_rng.choice(n_train, size=n_shift, replace=False)
        train_vec[chosen] += spec.shift
        shift_flags[chosen] = True

    captions = centers[train_lab] + spec.caption_noise * caption_rng.standard_normal(train_vec.shape)

    # the eval pool mirrors the train-pool class mixture so that eval accuracy
    # estimates performance on the deployment distribution, not a rebalanced one
    eval_per_class = max(spec.eval_per_class, 1)
    if spec.class_share is None:
        eval_counts = np.full(spec.class_count, eval_per_class, dtype=np.int64)
    else:
        eval_total = spec.class_count * eval_per_class
        raw = np.array(spec.class_share) * eval_total
        eval_counts = np.floor(raw).astype(np.int64)
        frac = raw - eval_counts
        for k in np.argsort(-frac, kind="stable")[: eval_total - eval_counts.sum()]:
            eval_counts[k] += 1
        eval_counts = np.maximum(eval_counts, 1)
    eval_vec, eval_lab = _sample_pool(eval_rng, centers, eval_counts, spec.cluster_spread)

    # the eval pool mirrors the train-pool domain mixture, so learning the
    # shifted subpopulation is rewarded rather than invisible at eval time
    eval_shift_flags = np.zeros(eval_vec.shape[0], dtype=bool)
    if spec.shift is not None and spec.shift_fraction > 0.0:
        n_shift_eval = int(np.floor(spec.shift_fraction * eval_vec.shape[0]))
        chosen = shift_rng.choice(eval_vec.shape[0], size=n_shift_eval, replace=False)
        eval_vec[chosen] += spec.shift
        eval_shift_flags[chosen] = True

    loss_scale = np.ones(n_train)
    for cls in spec.loss_boost_classes:
        loss_scale[train_lab == cls] = spec.boost_factor

    metadata = {
        "class_count": spec.class_count,
        "samples_per_class": spec.samples_per_class,
        "eval_per_class": eval_per_class,
        "dim": spec.dim,
        "cluster_spread": spec.cluster_spread,
        "min_angle_deg": spec.min_angle_deg,
        "caption_noise": spec.caption_noise,
        "seed": spec.seed,
        "centers": centers.tolist(),
        "loss_boost_classes": list(spec.loss_boost_classes),
        "boost_factor": spec.boost_factor,
        "loss_scale": loss_scale.tolist(),
        "shift": spec.shift.tolist() if spec.shift is not None else None,
        "shift_fraction": spec.shift_fraction,
        "shift_flags": shift_flags.astype(int).tolist(),
        "eval_shift_flags": eval_shift_flags.astype(int).tolist(),
        "close_pair_angle_deg": spec.close_pair_angle_deg,
        "class_share": list(spec.class_share) if spec.class_share is not None else None,
        "train_counts": train_counts.tolist(),
        "eval_counts": eval_counts.tolist(),
    }

    train = EmbeddingSet(train_vec, train_lab, spec.class_count)
    eval_pool = EmbeddingSet(eval_vec, eval_lab, spec.class_count)
    caption_set = CaptionEmbeddings(captions)
    return SynthData(train, eval_pool, caption_set, metadata)


def boosted_loss_scale(metadata: dict) -> np.ndarray | None:
    """Per-sample loss multipliers recorded by synth, or None if all ones."""
    scale = np.asarray(metadata.get("loss_scale", []), dtype=np.float64)
    if scale.size == 0 or np.all(scale == 1.0):
        return None
    if np.any(scale <= 0) or not np.all(np.isfinite(scale)):
        raise ValidationError("loss_scale entries must be positive and finite")
    return scale


def orthogonal_shift(centers_or_dim, magnitude: float, seed: int) -> np.ndarray:
    """A deterministic shift vector, orthogonalized against class centers when given.

    Used by the CLI (which cannot take a d-vector as a flag) and by tests
    to build out-of-distribution scenarios with a known direction.
    """
    if isinstance(centers_or_dim, (int, np.integer)):
        dim = int(centers_or_dim)
        centers = np.zeros((0, dim))
    else:
        centers = np.asarray(centers_or_dim, dtype=np.float64)
        dim = centers.shape[1]
    # extra entropy word keeps this stream disjoint from dataset substreams of the same seed
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x73686966]))
    v = rng.standard_normal(dim)
    if centers.shape[0] and centers.shape[0] < dim:
        # project out the span of the centers so the shift is a genuinely new direction
        q, _ = np.linalg.qr(centers.T)
        v = v - q @ (q.T @ v)
    norm = np.linalg.norm(v)
    if norm <= 0:
        raise ConfigError("degenerate shift direction; try another seed")
    return magnitude * v / norm
