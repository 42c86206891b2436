"""Class-per-subfolder image datasets: scan order and pixel loading.

Dataset order is the sorted relative path (class folder, then file
name), and that order defines both embedding rows and caption lines.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ExportError

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass(frozen=True)
class ImageFolder:
    root: Path
    classes: tuple[str, ...]
    paths: tuple[Path, ...]
    labels: np.ndarray  # int64, aligned with paths


def scan_dataset(root) -> ImageFolder:
    root = Path(root)
    if not root.is_dir():
        raise ExportError(f"dataset directory not found: {root}")
    classes = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not classes:
        raise ExportError(f"no class subdirectories under {root}")
    paths: list[Path] = []
    labels: list[int] = []
    for index, name in enumerate(classes):
        files = sorted(p for p in (root / name).iterdir()
                       if p.suffix.lower() in IMAGE_SUFFIXES)
        paths.extend(files)
        labels.extend([index] * len(files))
    if not paths:
        raise ExportError(f"no images with suffixes {IMAGE_SUFFIXES} under {root}")
    return ImageFolder(root, tuple(classes), tuple(paths), np.array(labels, dtype=np.int64))


def load_batch(paths, resize: tuple[int, int]) -> np.ndarray:
    """Decode and resize a batch to uint8 (n, height, width, 3)."""
    height, width = resize
    out = np.empty((len(paths), height, width, 3), dtype=np.uint8)
    for i, path in enumerate(paths):
        try:
            with Image.open(path) as img:
                # fixed filter: resampling choice is part of the output contract
                resized = img.convert("RGB").resize((width, height), Image.BILINEAR)
        except (OSError, UnidentifiedImageError) as exc:
            raise ExportError(f"cannot read image {path}: {exc}") from exc
        out[i] = np.asarray(resized, dtype=np.uint8)
    return out
