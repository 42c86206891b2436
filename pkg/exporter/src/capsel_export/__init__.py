"""Offline bridge from image folders and caption files to engine-readable embedding files.

No selection logic lives here. The package scans a class-per-subfolder
image dataset, runs a registered (deterministic by default) encoder pair,
and writes VCF1/VCL1 files that the selection engine ingests unchanged.
"""

from .encoders import (
    EncoderInfo,
    image_encoder,
    list_encoders,
    register_image_encoder,
    register_text_encoder,
    text_encoder,
)
from .export import export_caption_embeddings, export_image_embeddings
from .manifest import ExportError, ExportManifest

__all__ = [
    "EncoderInfo",
    "ExportError",
    "ExportManifest",
    "export_caption_embeddings",
    "export_image_embeddings",
    "image_encoder",
    "list_encoders",
    "register_image_encoder",
    "register_text_encoder",
    "text_encoder",
]
