"""Loss-weighted centroid selection.

A SelectionModel holds K centroids in embedding space.  The optimizer
pulls each centroid toward high-loss samples assigned to it (hard
nearest-centroid assignment, recomputed every iteration) while a
log-sum-exp penalty on pairwise centroid cosines pushes the centroids
apart.  After optimization each centroid nominates its nearest
not-yet-taken sample, giving K distinct indices.

All similarity is cosine, so only directions matter; centroid norms are
kept positive but carry no meaning.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    EmbeddingSet,
    LossProfile,
    OdsConfig,
    SelectionModel,
    ValidationError,
    softmax,
    unit_rows,
)


class OptimizationError(RuntimeError):
    """The optimizer hit a non-finite objective."""


@dataclass(frozen=True)
class Assignment:
    """Per-sample nearest centroid and the cosine to it."""

    nearest_centroid: np.ndarray
    similarity: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.nearest_centroid, dtype=np.int64)
        sim = np.asarray(self.similarity, dtype=np.float64)
        if idx.ndim != 1 or sim.shape != idx.shape:
            raise ValidationError("assignment arrays must be aligned 1-d vectors")
        if idx.size and idx.min() < 0:
            raise ValidationError("centroid indices must be non-negative")
        idx.flags.writeable = False
        sim.flags.writeable = False
        object.__setattr__(self, "nearest_centroid", idx)
        object.__setattr__(self, "similarity", sim)

    @property
    def count(self) -> int:
        return self.nearest_centroid.shape[0]


@dataclass(frozen=True)
class OdsTrace:
    """Objective value at each evaluated iterate."""

    objectives: np.ndarray
    converged: bool

    def __post_init__(self):
        obj = np.asarray(self.objectives, dtype=np.float64)
        obj.flags.writeable = False
        object.__setattr__(self, "objectives", obj)

    @property
    def iterations(self) -> int:
        return self.objectives.shape[0]


@dataclass(frozen=True)
class EnsembleStats:
    """Per-coordinate mean/variance over aligned ensemble members."""

    mean: np.ndarray
    variance: np.ndarray
    member_models: tuple

    def __post_init__(self):
        if np.any(self.variance < 0):
            raise ValidationError("variance must be non-negative")


def init_centroids(pool: EmbeddingSet, budget: int, rng: np.random.Generator,
                   diversity_weight: float = 1.0) -> SelectionModel:
    """Draw ``budget`` distinct pool embeddings (copies) as starting centroids."""
    if budget < 1:
        raise ValidationError("budget must be at least 1")
    if budget > pool.count:
        raise ValidationError(f"budget {budget} exceeds pool size {pool.count}")
    picks = rng.choice(pool.count, size=budget, replace=False)
    return SelectionModel(pool.vectors[picks].astype(np.float64), diversity_weight)


def _cosine_matrix(rows_a: np.ndarray, rows_b: np.ndarray) -> np.ndarray:
    return unit_rows(rows_a) @ unit_rows(rows_b).T


def assign(pool: EmbeddingSet, model: SelectionModel) -> Assignment:
    """Nearest centroid per sample by cosine; ties go to the lowest index."""
    if pool.dim != model.dim:
        raise ValidationError(f"pool dim {pool.dim} does not match centroid dim {model.dim}")
    sims = _cosine_matrix(pool.vectors, model.centroids)
    nearest = np.argmax(sims, axis=1)  # argmax takes the first maximum
    return Assignment(nearest, sims[np.arange(pool.count), nearest])


def _own_cosines(unit_pool, unit_centroids, nearest) -> np.ndarray:
    return np.einsum("ij,ij->i", unit_pool, unit_centroids[nearest])


def _check_inputs(pool, losses, model, assignment) -> None:
    if losses.count != pool.count:
        raise ValidationError(f"{losses.count} losses for {pool.count} samples")
    if pool.dim != model.dim:
        raise ValidationError(f"pool dim {pool.dim} does not match centroid dim {model.dim}")
    if assignment.count != pool.count:
        raise ValidationError(f"assignment covers {assignment.count} of {pool.count} samples")
    if assignment.nearest_centroid.max(initial=-1) >= model.budget:
        raise ValidationError("assignment references a centroid beyond the budget")


def _diversity_value(unit_centroids: np.ndarray) -> float:
    k = unit_centroids.shape[0]
    if k < 2:
        return 0.0
    sims = unit_centroids @ unit_centroids.T
    np.fill_diagonal(sims, -np.inf)  # drop j == k from the inner sum
    row_max = sims.max(axis=1)
    return float(np.sum(row_max + np.log(np.sum(np.exp(sims - row_max[:, None]), axis=1))))


def objective(pool: EmbeddingSet, losses: LossProfile, model: SelectionModel,
              assignment: Assignment) -> float:
    """Negative loss-weighted cosine fit plus the diversity penalty.

    The assignment is taken as given: cosines are evaluated against the
    assigned centroid even if it is no longer the nearest one.  The
    optimizer relies on this to measure the objective at perturbed
    centroids under a frozen assignment.
    """
    _check_inputs(pool, losses, model, assignment)
    unit_pool = unit_rows(pool.vectors)
    unit_centroids = unit_rows(model.centroids)
    fit = float(np.dot(losses.losses, _own_cosines(unit_pool, unit_centroids, assignment.nearest_centroid)))
    return -fit + model.diversity_weight * _diversity_value(unit_centroids)


def gradient(pool: EmbeddingSet, losses: LossProfile, model: SelectionModel,
             assignment: Assignment) -> np.ndarray:
    """Exact gradient of `objective` w.r.t. centroid entries, assignment held fixed."""
    _check_inputs(pool, losses, model, assignment)
    k, d = model.centroids.shape
    norms = np.linalg.norm(model.centroids, axis=1)
    unit_centroids = model.centroids / norms[:, None]
    unit_pool = unit_rows(pool.vectors)
    c = assignment.nearest_centroid
    weights = losses.losses

    own = _own_cosines(unit_pool, unit_centroids, c)
    # loss-weighted sums per centroid, scattered by assignment
    weighted_dirs = np.empty((k, d))
    for j in range(d):
        weighted_dirs[:, j] = np.bincount(c, weights=weights * unit_pool[:, j], minlength=k)
    weighted_cos = np.bincount(c, weights=weights * own, minlength=k)
    # d cos(e, t)/dt = (unit(e) - cos * unit(t)) / |t|
    grad = -(weighted_dirs - weighted_cos[:, None] * unit_centroids) / norms[:, None]

    if model.diversity_weight > 0.0 and k >= 2:
        sims = unit_centroids @ unit_centroids.T
        np.fill_diagonal(sims, -np.inf)
        row_max = sims.max(axis=1)
        expd = np.exp(sims - row_max[:, None])
        np.fill_diagonal(expd, 0.0)
        np.fill_diagonal(sims, 0.0)
        softw = expd / expd.sum(axis=1, keepdims=True)
        pair = softw + softw.T  # each pair (a,b) contributes through both row-softmaxes
        pulled = pair @ unit_centroids
        radial = np.sum(pair * sims, axis=1)
        grad += model.diversity_weight * (pulled - radial[:, None] * unit_centroids) / norms[:, None]
    return grad


def optimize(pool: EmbeddingSet, losses: LossProfile, budget: int, config: OdsConfig,
             rng: np.random.Generator) -> tuple[SelectionModel, OdsTrace]:
    """Adam on the centroid objective with per-iteration reassignment.

    Stops when the relative objective change across the convergence
    window drops below tolerance, or at max_iterations.  Returns the
    best iterate seen, so the optimized objective never exceeds the
    initial one.
    """
    if losses.count != pool.count:
        raise ValidationError(f"{losses.count} losses for {pool.count} samples")
    model = init_centroids(pool, budget, rng, config.diversity_weight)
    theta = model.centroids.copy()
    weight = config.diversity_weight

    beta1, beta2, eps = 0.9, 0.999, 1e-8
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    trace: list[float] = []
    best_obj = np.inf
    best_theta = theta.copy()
    converged = False

    for step in range(1, config.max_iterations + 1):
        current = SelectionModel(theta, weight)
        assignment = assign(pool, current)
        obj = objective(pool, losses, current, assignment)
        if not np.isfinite(obj):
            raise OptimizationError(f"non-finite objective at iteration {step}")
        trace.append(obj)
        if obj < best_obj:
            best_obj = obj
            best_theta = theta.copy()

        w = config.convergence_window
        if len(trace) > w:
            anchor = trace[-1 - w]
            if abs(trace[-1] - anchor) / max(abs(anchor), 1e-12) < config.convergence_tol:
                converged = True
                break

        g = gradient(pool, losses, current, assignment)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**step)
        v_hat = v / (1 - beta2**step)
        theta = theta - config.learning_rate * m_hat / (np.sqrt(v_hat) + eps)

    return SelectionModel(best_theta, weight), OdsTrace(np.asarray(trace), converged)


def _align_to_first(first: np.ndarray, other: np.ndarray) -> np.ndarray:
    """Permute ``other`` rows onto ``first`` rows by greedy best-cosine pairing."""
    k = first.shape[0]
    sims = _cosine_matrix(first, other)
    order = np.argsort(-sims, axis=None, kind="stable")  # best pairs first, row-major tie-break
    aligned = np.empty_like(other)
    used_first = np.zeros(k, dtype=bool)
    used_other = np.zeros(k, dtype=bool)
    matched = 0
    for flat in order:
        a, b = divmod(int(flat), k)
        if used_first[a] or used_other[b]:
            continue
        aligned[a] = other[b]
        used_first[a] = True
        used_other[b] = True
        matched += 1
        if matched == k:
            break
    return aligned


def ensemble_stats(members) -> EnsembleStats:
    """Align members 2..E onto member 1, then per-coordinate mean and variance."""
    members = tuple(members)
    if not members:
        raise ValidationError("ensemble must have at least one member")
    first = members[0]
    for m in members[1:]:
        if m.centroids.shape != first.centroids.shape:
            raise ValidationError(
                f"ensemble member shape {m.centroids.shape} does not match {first.centroids.shape}"
            )
    # deviations from member 1: identical members give exact zeros, so the
    # mean collapses to member 1 bit-for-bit instead of accumulating rounding
    deltas = np.stack(
        [np.zeros_like(first.centroids)]
        + [_align_to_first(first.centroids, m.centroids) - first.centroids for m in members[1:]]
    )
    delta_mean = deltas.mean(axis=0)
    return EnsembleStats(first.centroids + delta_mean, ((deltas - delta_mean) ** 2).mean(axis=0), members)


def debias(members, ridge: float = 1e-3) -> SelectionModel:
    """Shrink member 1 toward the aligned ensemble mean, coordinate-wise.

    The correction factor 1 / (variance + ridge) is clamped to 1 so the
    result always lies between member 1 and the mean.  A single-member
    ensemble is returned unchanged.
    """
    members = tuple(members)
    if ridge <= 0:
        raise ValidationError("ridge must be positive")
    if len(members) == 1:
        return members[0]
    stats = ensemble_stats(members)
    first = members[0].centroids
    gamma = np.minimum(1.0, 1.0 / (stats.variance + ridge))
    corrected = first - gamma * (first - stats.mean)
    return SelectionModel(corrected, members[0].diversity_weight)


def select(pool: EmbeddingSet, model: SelectionModel) -> np.ndarray:
    """One distinct sample index per centroid, greedy in centroid order."""
    if model.budget > pool.count:
        raise ValidationError(f"budget {model.budget} exceeds pool size {pool.count}")
    sims = _cosine_matrix(model.centroids, pool.vectors)
    chosen = np.empty(model.budget, dtype=np.int64)
    taken = np.zeros(pool.count, dtype=bool)
    for k in range(model.budget):
        row = np.where(taken, -np.inf, sims[k])
        pick = int(np.argmax(row))
        chosen[k] = pick
        taken[pick] = True
    return chosen


def selection_probability(pool: EmbeddingSet, losses: LossProfile,
                          model: SelectionModel) -> np.ndarray:
    """Pool-wide softmax of each sample's cosine to its own centroid.

    Complements the loss-derived distribution available as
    ``losses.probabilities``; both are diagnostic outputs.
    """
    _ = losses  # accepted so diagnostics can evaluate both distributions on one call
    assignment = assign(pool, model)
    return softmax(assignment.similarity)
