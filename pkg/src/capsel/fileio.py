"""Binary matrix/label file formats and a CSV fallback.

VCF1 holds a float32 matrix, VCL1 an unsigned label vector.  Both are
little-endian with fixed-width headers so round trips are bit-exact
across platforms and languages:

    VCF1: magic "VCF1" | u32 n | u32 d | n*d float32, row-major
    VCL1: magic "VCL1" | u32 n | n u32 labels
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .core import CaptionEmbeddings, EmbeddingSet, ValidationError

VCF_MAGIC = b"VCF1"
VCL_MAGIC = b"VCL1"


class FormatError(ValueError):
    """File does not follow the declared layout (bad magic or header)."""


class LengthError(FormatError):
    """Header-declared payload size disagrees with the file contents."""


def _matrix_of(obj) -> np.ndarray:
    if isinstance(obj, (EmbeddingSet, CaptionEmbeddings)):
        return obj.vectors
    return np.asarray(obj)


def write_embeddings(obj, path) -> None:
    """Write a matrix (or EmbeddingSet/CaptionEmbeddings) as a VCF1 file."""
    matrix = _matrix_of(obj)
    if matrix.ndim == 1:
        matrix = matrix[None, :]
    if matrix.ndim != 2:
        raise ValidationError(f"expected a matrix, got shape {matrix.shape}")
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if not np.all(np.isfinite(matrix)):
        raise ValidationError(f"refusing to write non-finite values to {path}")
    n, d = matrix.shape
    try:
        with open(path, "wb") as fh:
            fh.write(VCF_MAGIC)
            fh.write(struct.pack("<II", n, d))
            fh.write(matrix.tobytes())
    except OSError as exc:
        raise OSError(f"failed writing embeddings to {path}: {exc}") from exc


def read_embeddings(path) -> np.ndarray:
    """Read a VCF1 file back into an (n, d) float32 matrix."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"failed reading embeddings from {path}: {exc}") from exc
    if len(blob) < 12 or blob[:4] != VCF_MAGIC:
        raise FormatError(f"{path}: not a VCF1 file (bad magic)")
    n, d = struct.unpack("<II", blob[4:12])
    expected = 12 + 4 * n * d
    if len(blob) != expected:
        raise LengthError(
            f"{path}: header declares {n}x{d} ({expected} bytes) but file has {len(blob)}"
        )
    if n < 1 or d < 1:
        raise FormatError(f"{path}: empty matrix ({n}x{d})")
    matrix = np.frombuffer(blob[12:], dtype="<f4").reshape(n, d)
    if not np.all(np.isfinite(matrix)):
        raise ValidationError(f"{path}: payload contains non-finite values")
    return matrix.copy()


def write_labels(labels, path) -> None:
    """Write integer labels as a VCL1 file."""
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ValidationError(f"labels must be 1-d, got shape {labels.shape}")
    if labels.size and labels.min() < 0:
        raise ValidationError("labels must be non-negative")
    payload = np.ascontiguousarray(labels, dtype="<u4")
    try:
        with open(path, "wb") as fh:
            fh.write(VCL_MAGIC)
            fh.write(struct.pack("<I", payload.shape[0]))
            fh.write(payload.tobytes())
    except OSError as exc:
        raise OSError(f"failed writing labels to {path}: {exc}") from exc


def read_labels(path) -> np.ndarray:
    """Read a VCL1 file back into an int64 label vector."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"failed reading labels from {path}: {exc}") from exc
    if len(blob) < 8 or blob[:4] != VCL_MAGIC:
        raise FormatError(f"{path}: not a VCL1 file (bad magic)")
    (n,) = struct.unpack("<I", blob[4:8])
    expected = 8 + 4 * n
    if len(blob) != expected:
        raise LengthError(
            f"{path}: header declares {n} labels ({expected} bytes) but file has {len(blob)}"
        )
    return np.frombuffer(blob[8:], dtype="<u4").astype(np.int64)


def write_embeddings_csv(obj, path) -> None:
    """CSV fallback for hand-authored fixtures: 'dim,<d>' header then one row per vector."""
    matrix = _matrix_of(obj)
    if matrix.ndim != 2:
        raise ValidationError(f"expected a matrix, got shape {matrix.shape}")
    with open(path, "w", newline="\n") as fh:
        fh.write(f"dim,{matrix.shape[1]}\n")
        for row in np.asarray(matrix, dtype=np.float64):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_embeddings_csv(path) -> np.ndarray:
    """Read the CSV fallback format into a float32 matrix."""
    with open(path) as fh:
        header = fh.readline().strip()
        parts = header.split(",")
        if len(parts) != 2 or parts[0] != "dim":
            raise FormatError(f"{path}: expected 'dim,<d>' header, got {header!r}")
        try:
            d = int(parts[1])
        except ValueError:
            raise FormatError(f"{path}: non-integer dim in header {header!r}") from None
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            values = line.split(",")
            if len(values) != d:
                raise LengthError(f"{path}:{lineno}: expected {d} values, got {len(values)}")
            rows.append([float(v) for v in values])
    if not rows:
        raise FormatError(f"{path}: no data rows")
    matrix = np.asarray(rows, dtype=np.float32)
    if not np.all(np.isfinite(matrix)):
        raise ValidationError(f"{path}: payload contains non-finite values")
    return matrix
