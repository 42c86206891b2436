import numpy as np
import pytest

pytest.importorskip("capsel_export", reason="exporter not installed; pip install -e exporter/")
from PIL import Image


@pytest.fixture()
def smoke_dataset(tmp_path):
    """Ten deterministic PNGs, five per class, with varied source sizes."""
    rng = np.random.default_rng(np.random.SeedSequence(99))
    root = tmp_path / "data"
    for name in ("cat", "dog"):
        folder = root / name
        folder.mkdir(parents=True)
        for i in range(5):
            height, width = 24 + 3 * i, 20 + 2 * i
            pixels = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
            Image.fromarray(pixels).save(folder / f"img_{i}.png")
    return root


@pytest.fixture()
def smoke_captions(smoke_dataset, tmp_path):
    """One caption per image in dataset order (cat/img_0..4, dog/img_0..4)."""
    lines = [f"a photo of a {name}, sample {i}" for name in ("cat", "dog") for i in range(5)]
    path = tmp_path / "captions.txt"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
