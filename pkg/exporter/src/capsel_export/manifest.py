"""Export manifest: what to encode, with which encoders, into which files."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .encoders import image_encoder, text_encoder
from .errors import ExportError


@dataclass(frozen=True)
class ExportManifest:
    dataset_dir: Path
    output_dir: Path
    image_encoder: str = "patch-stats-64"
    text_encoder: str = "hashed-text-64"
    resize: tuple[int, int] = (224, 224)
    batch_size: int = 32
    deterministic: bool = True

    def __post_init__(self):
        object.__setattr__(self, "dataset_dir", Path(self.dataset_dir))
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        if self.batch_size < 1:
            raise ExportError(f"batch_size must be positive, got {self.batch_size}")
        height, width = self.resize
        if height < 1 or width < 1:
            raise ExportError(f"resize must be positive, got {self.resize}")
        img = image_encoder(self.image_encoder)
        txt = text_encoder(self.text_encoder)
        if img.dim != txt.dim:
            raise ExportError(
                f"image encoder {img.name!r} emits {img.dim} dims but text encoder "
                f"{txt.name!r} emits {txt.dim}; the engine rejects mismatched dims"
            )
        if self.deterministic and not (img.deterministic and txt.deterministic):
            bad = img.name if not img.deterministic else txt.name
            raise ExportError(
                f"encoder {bad!r} cannot guarantee byte-identical re-export; "
                f"pass deterministic=False to use it anyway"
            )

    # fixed names inside output_dir; the engine's CLI takes them as-is
    @property
    def embeddings_path(self) -> Path:
        return self.output_dir / "embeddings.vcf"

    @property
    def labels_path(self) -> Path:
        return self.output_dir / "labels.vcl"

    @property
    def captions_path(self) -> Path:
        return self.output_dir / "captions.vcf"

    @property
    def prompt_path(self) -> Path:
        return self.output_dir / "prompt.vcf"
