"""Caption-guided embedding augmentation.

Each selected image embedding is pulled toward its caption embedding by
a step proportional to a batch attention score: rows whose image and
caption already agree (high cosine) get the larger share of the move.
The same operation applied pool-wide with a prompt-blended caption
matrix steers selection toward a target domain before any centroids are
fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ValidationError, softmax


@dataclass(frozen=True)
class CeaConfig:
    """Step size and optional prompt blending for augmentation."""

    eta: float = 0.5
    prompt_weight: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.eta) or self.eta < 0:
            raise ValidationError("eta must be finite and non-negative")
        if not 0.0 <= self.prompt_weight <= 1.0:
            raise ValidationError("prompt_weight must lie in [0, 1]")


def _as_matrix(arr, name: str) -> np.ndarray:
    out = np.asarray(arr, dtype=np.float64)
    if out.ndim != 2 or out.shape[0] < 1:
        raise ValidationError(f"{name} must be a non-empty 2-d matrix, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValidationError(f"{name} contains non-finite values")
    return out


def attention_scores(image, text) -> np.ndarray:
    """Softmax over rows of the per-row image/caption cosine."""
    img = _as_matrix(image, "image")
    txt = _as_matrix(text, "text")
    if img.shape != txt.shape:
        raise ValidationError(f"image {img.shape} and text {txt.shape} shapes differ")
    img_norm = np.linalg.norm(img, axis=1)
    txt_norm = np.linalg.norm(txt, axis=1)
    if np.any(img_norm <= 0) or np.any(txt_norm <= 0):
        raise ValidationError("attention input rows must have positive norm")
    cos = np.einsum("ij,ij->i", img, txt) / (img_norm * txt_norm)
    return softmax(np.clip(cos, -1.0, 1.0))


def augment(image, text, scores, eta: float) -> np.ndarray:
    """Move each row from its image embedding toward its caption.

    Row i becomes e_i - eta * score_i * (e_i - t_i): a fraction
    eta * score_i of the way to the caption.  Fractions above 1
    (overshoot) are applied as-is; reports count them separately.
    Inputs are never modified.
    """
    img = _as_matrix(image, "image")
    txt = _as_matrix(text, "text")
    if img.shape != txt.shape:
        raise ValidationError(f"image {img.shape} and text {txt.shape} shapes differ")
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if s.shape[0] != img.shape[0]:
        raise ValidationError(f"{s.shape[0]} scores for {img.shape[0]} rows")
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ValidationError("scores must be non-negative and finite")
    if abs(s.sum() - 1.0) > 1e-6:
        raise ValidationError(f"scores must sum to 1, got {s.sum()!r}")
    if not np.isfinite(eta) or eta < 0:
        raise ValidationError("eta must be finite and non-negative")
    return img - (eta * s)[:, None] * (img - txt)


def blend_prompt(text, prompt, weight: float) -> np.ndarray:
    """Mix a single prompt vector into every caption row.

    weight 0 returns the captions untouched; weight 1 replaces every row
    with the prompt.
    """
    txt = _as_matrix(text, "text")
    if not 0.0 <= weight <= 1.0:
        raise ValidationError("prompt weight must lie in [0, 1]")
    if weight == 0.0:
        return txt.copy()
    if prompt is None:
        raise ValidationError("prompt blending requested but no prompt vector given")
    p = np.asarray(prompt, dtype=np.float64).reshape(-1)
    if p.shape[0] != txt.shape[1]:
        raise ValidationError(f"prompt dim {p.shape[0]} does not match caption dim {txt.shape[1]}")
    if not np.all(np.isfinite(p)):
        raise ValidationError("prompt contains non-finite values")
    return (1.0 - weight) * txt + weight * p


def overshoot_count(scores, eta: float) -> int:
    """How many rows would step past their caption (eta * score > 1)."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    return int(np.sum(eta * s > 1.0))
