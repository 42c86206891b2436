"""The two export operations: images -> VCF1+VCL1, captions -> VCF1.

Files are written with the engine's own writers so the byte format has a
single source of truth and every emitted file passes engine validation.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from capsel.fileio import write_embeddings, write_labels

from .dataset import load_batch, scan_dataset
from .encoders import image_encoder, text_encoder
from .errors import ExportError
from .manifest import ExportManifest


def export_image_embeddings(manifest: ExportManifest) -> tuple[Path, Path]:
    """Encode every image in dataset order; returns (embeddings, labels) paths."""
    folder = scan_dataset(manifest.dataset_dir)
    encoder = image_encoder(manifest.image_encoder)
    blocks = []
    for start in range(0, len(folder.paths), manifest.batch_size):
        chunk = folder.paths[start:start + manifest.batch_size]
        blocks.append(encoder.fn(load_batch(chunk, manifest.resize)))
    matrix = np.vstack(blocks)
    _check_rows(matrix, encoder.dim, f"image encoder {encoder.name!r}")

    manifest.output_dir.mkdir(parents=True, exist_ok=True)
    write_embeddings(matrix, manifest.embeddings_path)
    write_labels(folder.labels, manifest.labels_path)
    return manifest.embeddings_path, manifest.labels_path


def export_caption_embeddings(manifest: ExportManifest, captions_file,
                              prompt: str | None = None) -> tuple[Path, Path | None]:
    """Encode one caption per image, plus an optional single-row prompt file."""
    folder = scan_dataset(manifest.dataset_dir)
    captions_file = Path(captions_file)
    if not captions_file.is_file():
        raise ExportError(f"captions file not found: {captions_file}")
    lines = captions_file.read_text(encoding="utf-8").splitlines()
    if len(lines) != len(folder.paths):
        raise ExportError(
            f"{len(lines)} caption lines for {len(folder.paths)} images in {folder.root}"
        )
    blank = [i for i, line in enumerate(lines) if not line.strip()]
    if blank:
        raise ExportError(f"caption line {blank[0] + 1} is empty; every image needs a caption")

    encoder = text_encoder(manifest.text_encoder)
    blocks = [encoder.fn(lines[start:start + manifest.batch_size])
              for start in range(0, len(lines), manifest.batch_size)]
    matrix = np.vstack(blocks)
    _check_rows(matrix, encoder.dim, f"text encoder {encoder.name!r}")

    manifest.output_dir.mkdir(parents=True, exist_ok=True)
    write_embeddings(matrix, manifest.captions_path)

    prompt_path = None
    if prompt is not None:
        if not prompt.strip():
            raise ExportError("prompt string is empty")
        row = encoder.fn([prompt])
        _check_rows(row, encoder.dim, f"text encoder {encoder.name!r}")
        write_embeddings(row, manifest.prompt_path)
        prompt_path = manifest.prompt_path
    return manifest.captions_path, prompt_path


def _check_rows(matrix: np.ndarray, dim: int, source: str) -> None:
    # enforce the engine's invariants before writing, with a clearer message
    if matrix.ndim != 2 or matrix.shape[1] != dim:
        raise ExportError(f"{source} emitted shape {matrix.shape}, expected (*, {dim})")
    if not np.all(np.isfinite(matrix)):
        raise ExportError(f"{source} emitted non-finite values")
    if np.any(np.linalg.norm(matrix, axis=1) == 0.0):
        raise ExportError(f"{source} emitted a zero-norm row")
