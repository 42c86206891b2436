"""Encoder registry plus two built-in deterministic encoders.

The built-ins need no ML runtime: the image encoder summarizes pixel
statistics on a fixed grid, the text encoder feature-hashes tokens.
Both emit 64 dims with a constant bias slot, so every row has positive
norm and the engine's validation never rejects an exported file.
Real pretrained encoders plug in through register_*_encoder; anything
registered with deterministic=False is refused by manifests that
promise byte-identical re-export.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ExportError

DIM = 64
_LUMA = np.array([0.2126, 0.7152, 0.0722])
_GRID = 3
_HIST_BINS = 12
_TOKEN = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class EncoderInfo:
    """A named encoder: fn maps one batch to an (n, dim) float32 matrix.

    Image fns receive a uint8 (n, height, width, 3) array; text fns a
    list of strings.
    """

    name: str
    dim: int
    fn: Callable
    deterministic: bool = True


_IMAGE: dict[str, EncoderInfo] = {}
_TEXT: dict[str, EncoderInfo] = {}


def register_image_encoder(info: EncoderInfo) -> None:
    _register(_IMAGE, info)


def register_text_encoder(info: EncoderInfo) -> None:
    _register(_TEXT, info)


def _register(table: dict, info: EncoderInfo) -> None:
    if info.dim < 1:
        raise ExportError(f"encoder {info.name!r} declares dim {info.dim}")
    if info.name in table:
        raise ExportError(f"encoder name {info.name!r} already registered")
    table[info.name] = info


def image_encoder(name: str) -> EncoderInfo:
    return _lookup(_IMAGE, name, "image")


def text_encoder(name: str) -> EncoderInfo:
    return _lookup(_TEXT, name, "text")


def _lookup(table: dict, name: str, kind: str) -> EncoderInfo:
    try:
        return table[name]
    except KeyError:
        known = ", ".join(sorted(table)) or "none"
        raise ExportError(f"unknown {kind} encoder {name!r} (registered: {known})") from None


def list_encoders() -> dict[str, tuple[str, ...]]:
    return {"image": tuple(sorted(_IMAGE)), "text": tuple(sorted(_TEXT))}


# ------------------------------------------------------------ image built-in

def _cells(length: int) -> list[tuple[int, int]]:
    # contiguous index ranges of a 3-way split, uneven tail absorbed left to right
    splits = np.array_split(np.arange(length), _GRID)
    return [(int(s[0]), int(s[-1]) + 1) for s in splits]


def patch_stats(batch: np.ndarray) -> np.ndarray:
    """64 pixel-statistics features per image.

    Layout: bias, global RGB mean/std, 3x3 grid luma mean, 3x3 grid luma
    std, 3x3 grid RGB mean, 12-bin luma histogram.
    """
    if batch.ndim != 4 or batch.shape[-1] != 3:
        raise ExportError(f"image encoder expects (n, h, w, 3) pixels, got {batch.shape}")
    x = batch.astype(np.float64) / 255.0
    n, h, w, _ = x.shape
    luma = x @ _LUMA

    parts = [np.ones((n, 1))]
    parts.append(x.reshape(n, -1, 3).mean(axis=1))
    parts.append(x.reshape(n, -1, 3).std(axis=1))

    rows, cols = _cells(h), _cells(w)
    luma_mean, luma_std, rgb_mean = [], [], []
    for r0, r1 in rows:
        for c0, c1 in cols:
            cell_luma = luma[:, r0:r1, c0:c1].reshape(n, -1)
            luma_mean.append(cell_luma.mean(axis=1))
            luma_std.append(cell_luma.std(axis=1))
            rgb_mean.append(x[:, r0:r1, c0:c1].reshape(n, -1, 3).mean(axis=1))
    parts.append(np.stack(luma_mean, axis=1))
    parts.append(np.stack(luma_std, axis=1))
    parts.append(np.concatenate([m[:, None, :] for m in rgb_mean], axis=1).reshape(n, -1))

    flat = luma.reshape(n, -1)
    bins = np.minimum((flat * _HIST_BINS).astype(np.int64), _HIST_BINS - 1)
    hist = np.stack([np.bincount(b, minlength=_HIST_BINS) for b in bins]).astype(np.float64)
    parts.append(hist / flat.shape[1])

    out = np.concatenate(parts, axis=1)
    assert out.shape == (n, DIM)
    return out.astype(np.float32)


# ------------------------------------------------------------ text built-in

def _hash_terms(text: str):
    tokens = _TOKEN.findall(text.lower())
    yield from tokens
    for a, b in zip(tokens, tokens[1:]):
        yield a + " " + b


def hashed_text(lines) -> np.ndarray:
    """Signed feature hashing of unigrams and bigrams into 63 slots plus bias.

    blake2b keeps the hash stable across processes, unlike builtin hash().
    """
    out = np.zeros((len(lines), DIM), dtype=np.float64)
    out[:, 0] = 1.0
    for i, line in enumerate(lines):
        count = 0
        for term in _hash_terms(line):
            digest = hashlib.blake2b(term.encode("utf-8"), digest_size=8).digest()
            value = int.from_bytes(digest, "little")
            slot = 1 + value % (DIM - 1)
            sign = 1.0 if value >> 63 else -1.0
            out[i, slot] += sign
            count += 1
        if count:
            out[i, 1:] /= np.sqrt(count)
    return out.astype(np.float32)


register_image_encoder(EncoderInfo("patch-stats-64", DIM, patch_stats))
register_text_encoder(EncoderInfo("hashed-text-64", DIM, hashed_text))
