import numpy as np
import pytest
from PIL import Image


def write_png(path, array):
    Image.fromarray(array).save(path)
    return path


def make_dataset(root, n_entries, rng, size=64, classes=(("buildings", "destroyed"), ("greenhouse", "newly built")),
                 split="train", seed=0, extra_config=""):
    """Write a small on-disk dataset plus its manifest; returns the config path.

    Every entry gets a shared 1x1 pre/post image and a random mask holding a
    blob per class (always non-empty so template draws vary with the seed).
    """
    root.mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(exist_ok=True)
    tiny = np.full((8, 8, 3), 128, dtype=np.uint8)
    write_png(root / "pre.png", tiny)
    write_png(root / "post.png", tiny)

    lines = []
    for i in range(n_entries):
        image_id = f"img_{i:04d}"
        labels = np.zeros((size, size), dtype=np.uint8)
        for class_index in range(1, len(classes) + 1):
            side = int(rng.integers(2, max(3, size // 4)))
            y = int(rng.integers(0, size - side))
            x = int(rng.integers(0, size - side))
            labels[y:y + side, x:x + side] = class_index
        write_png(root / "masks" / f"{image_id}.png", labels)
        lines.append(f"    {image_id}, pre.png, post.png, masks/{image_id}.png")

    palette = "\n".join(
        f"{i + 1} = {category}, {change_type}" for i, (category, change_type) in enumerate(classes)
    )
    config = root / "dataset.ini"
    config.write_text(
        "[dataset]\n"
        f"split = {split}\n"
        "entries =\n" + "\n".join(lines) + "\n\n"
        "[palette]\n" + palette + "\n\n"
        "[templates]\n"
        f"seed = {seed}\n"
        + extra_config,
        encoding="utf-8",
    )
    return config


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
