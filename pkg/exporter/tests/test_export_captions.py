"""Caption export: alignment with the image rows, prompt file, abort paths."""

import pytest

from capsel.core import CaptionEmbeddings, EmbeddingSet
from capsel.fileio import read_embeddings, read_labels

from capsel_export.errors import ExportError
from capsel_export.export import export_caption_embeddings, export_image_embeddings
from capsel_export.manifest import ExportManifest


def test_captions_align_with_exported_pool(smoke_dataset, smoke_captions, tmp_path):
    manifest = ExportManifest(smoke_dataset, tmp_path / "out", resize=(32, 32))
    export_image_embeddings(manifest)
    captions_path, prompt_path = export_caption_embeddings(manifest, smoke_captions)
    assert prompt_path is None

    pool = EmbeddingSet(read_embeddings(manifest.embeddings_path),
                        read_labels(manifest.labels_path), class_count=2)
    captions = CaptionEmbeddings(read_embeddings(captions_path))
    captions.require_aligned(pool)  # zero validation errors end to end


def test_prompt_written_as_single_row(smoke_dataset, smoke_captions, tmp_path):
    manifest = ExportManifest(smoke_dataset, tmp_path / "out")
    _, prompt_path = export_caption_embeddings(manifest, smoke_captions,
                                               prompt="It's a snowy day.")
    assert prompt_path == manifest.prompt_path
    row = read_embeddings(prompt_path)
    assert row.shape == (1, 64)
    captions = CaptionEmbeddings(read_embeddings(manifest.captions_path), prompt=row[0])
    assert captions.prompt is not None


def test_caption_reexport_byte_identical(smoke_dataset, smoke_captions, tmp_path):
    first = ExportManifest(smoke_dataset, tmp_path / "a")
    second = ExportManifest(smoke_dataset, tmp_path / "b")
    for manifest in (first, second):
        export_caption_embeddings(manifest, smoke_captions, prompt="a foggy road")
    assert first.captions_path.read_bytes() == second.captions_path.read_bytes()
    assert first.prompt_path.read_bytes() == second.prompt_path.read_bytes()


def test_caption_count_mismatch_aborts(smoke_dataset, tmp_path):
    short = tmp_path / "short.txt"
    short.write_text("\n".join(f"caption {i}" for i in range(9)) + "\n", encoding="utf-8")
    manifest = ExportManifest(smoke_dataset, tmp_path / "out")
    with pytest.raises(ExportError, match="9 caption lines for 10 images"):
        export_caption_embeddings(manifest, short)


def test_blank_caption_line_aborts(smoke_dataset, smoke_captions, tmp_path):
    lines = smoke_captions.read_text(encoding="utf-8").splitlines()
    lines[3] = "   "
    broken = tmp_path / "broken.txt"
    broken.write_text("\n".join(lines) + "\n", encoding="utf-8")
    manifest = ExportManifest(smoke_dataset, tmp_path / "out")
    with pytest.raises(ExportError, match="line 4 is empty"):
        export_caption_embeddings(manifest, broken)


def test_missing_captions_file_aborts(smoke_dataset, tmp_path):
    manifest = ExportManifest(smoke_dataset, tmp_path / "out")
    with pytest.raises(ExportError, match="captions file not found"):
        export_caption_embeddings(manifest, tmp_path / "absent.txt")


def test_empty_prompt_aborts(smoke_dataset, smoke_captions, tmp_path):
    manifest = ExportManifest(smoke_dataset, tmp_path / "out")
    with pytest.raises(ExportError, match="prompt string is empty"):
        export_caption_embeddings(manifest, smoke_captions, prompt="  ")
