# End-to-end bridge demo: encode a real image folder with capsel-export,
# then feed the emitted files straight into the selection engine.
#
# Needs the exporter package installed (pip install -e exporter/).

import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from capsel.core import CaptionEmbeddings, EmbeddingSet, LossProfile, OdsConfig
from capsel.fileio import read_embeddings, read_labels
from capsel.selection import optimize, select
from capsel_export import ExportManifest, export_caption_embeddings, export_image_embeddings


def make_images(root: Path, per_class=6):
    rng = np.random.default_rng(np.random.SeedSequence(17))
    captions = []
    for name, base in (("bright", 200), ("dark", 40)):
        folder = root / name
        folder.mkdir(parents=True)
        for i in range(per_class):
            noise = rng.integers(0, 56, size=(48, 48, 3), dtype=np.uint8)
            Image.fromarray((noise + base).astype(np.uint8)).save(folder / f"{i}.png")
            captions.append(f"a {name} scene number {i}")
    return captions


def main():
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        captions = make_images(root / "photos")
        captions_file = root / "captions.txt"
        captions_file.write_text("\n".join(captions) + "\n", encoding="utf-8")

        manifest = ExportManifest(root / "photos", root / "export", resize=(48, 48))
        export_image_embeddings(manifest)
        export_caption_embeddings(manifest, captions_file)

        pool = EmbeddingSet(read_embeddings(manifest.embeddings_path),
                            read_labels(manifest.labels_path), class_count=2)
        texts = CaptionEmbeddings(read_embeddings(manifest.captions_path))
        texts.require_aligned(pool)
        counts = np.bincount(pool.labels, minlength=2)
        print(f"exported {pool.count} images -> {pool.dim}-dim embeddings, "
              f"{counts[0]} bright / {counts[1]} dark")

        # pretend the dark class is hard: weight its losses 5x and pick 4
        losses = LossProfile(np.where(pool.labels == 1, 5.0, 1.0))
        model, _ = optimize(pool, losses, 4, OdsConfig(max_iterations=2000),
                            np.random.default_rng(np.random.SeedSequence(2)))
        picks = select(pool, model)
        print(f"selected rows {picks.tolist()}, labels {pool.labels[picks].tolist()} "
              f"(loss-weighted selection leans toward the dark class)")


if __name__ == "__main__":
    main()
