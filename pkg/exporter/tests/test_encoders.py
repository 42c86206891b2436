import numpy as np
import pytest

from capsel_export.encoders import (
    DIM,
    EncoderInfo,
    hashed_text,
    image_encoder,
    list_encoders,
    patch_stats,
    register_text_encoder,
    text_encoder,
)
from capsel_export.errors import ExportError


def test_builtins_registered():
    names = list_encoders()
    assert "patch-stats-64" in names["image"]
    assert "hashed-text-64" in names["text"]
    assert image_encoder("patch-stats-64").dim == text_encoder("hashed-text-64").dim == DIM


def test_unknown_encoder_rejected():
    with pytest.raises(ExportError, match="unknown image encoder"):
        image_encoder("does-not-exist")


def test_duplicate_registration_rejected():
    with pytest.raises(ExportError, match="already registered"):
        register_text_encoder(EncoderInfo("hashed-text-64", DIM, hashed_text))


def test_patch_stats_shape_and_finiteness():
    rng = np.random.default_rng(3)
    batch = rng.integers(0, 256, size=(4, 17, 23, 3), dtype=np.uint8)
    out = patch_stats(batch)
    assert out.shape == (4, DIM)
    assert out.dtype == np.float32
    assert np.all(np.isfinite(out))


def test_patch_stats_black_image_keeps_positive_norm():
    # all stats vanish on a constant-zero image; the bias slot must not
    out = patch_stats(np.zeros((1, 8, 8, 3), dtype=np.uint8))
    assert float(np.linalg.norm(out[0])) >= 1.0


def test_patch_stats_deterministic():
    rng = np.random.default_rng(4)
    batch = rng.integers(0, 256, size=(2, 12, 9, 3), dtype=np.uint8)
    assert patch_stats(batch).tobytes() == patch_stats(batch.copy()).tobytes()


def test_patch_stats_rejects_bad_shape():
    with pytest.raises(ExportError, match="expects"):
        patch_stats(np.zeros((2, 8, 8), dtype=np.uint8))


def test_hashed_text_deterministic_and_batch_invariant():
    lines = ["a photo of a cat", "snowy mountain road", "a photo of a cat"]
    out = hashed_text(lines)
    assert out.shape == (3, DIM)
    assert out.tobytes() == hashed_text(list(lines)).tobytes()
    # identical captions hash identically, row order does not leak in
    assert np.array_equal(out[0], out[2])
    assert np.array_equal(out[1], hashed_text(["snowy mountain road"])[0])


def test_hashed_text_empty_line_still_has_norm():
    out = hashed_text([""])
    assert float(np.linalg.norm(out[0])) == 1.0


def test_hashed_text_distinguishes_captions():
    out = hashed_text(["a photo of a cat", "a photo of a dog"])
    assert not np.array_equal(out[0], out[1])
