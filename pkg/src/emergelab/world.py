"""Compositional object world: 64 object classes, procedural renderer, datasets.

Objects are defined by three relevant attributes (color, scale, shape), each
with four values. Three further latent factors (floor color, wall color,
orientation) vary freely within a class. Images are rendered as a 2-D glyph
on a two-band background, which preserves the factor structure at a fraction
of the cost of photorealistic rendering.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

N_COLORS = 4
N_SCALES = 4
N_SHAPES = 4
N_CLASSES = N_COLORS * N_SCALES * N_SHAPES

N_FLOOR_COLORS = 10
N_WALL_COLORS = 10
N_ORIENTATIONS = 15

ATTRIBUTES = ("color", "scale", "shape")

# Maximally separated RGB triples for the four object colors
# (red, yellow, turquoise, purple).
OBJECT_COLORS = np.array(
    [
        [1.00, 0.05, 0.05],
        [1.00, 1.00, 0.05],
        [0.05, 1.00, 1.00],
        [0.60, 0.05, 0.90],
    ]
)

# Muted background palettes so the glyph stays salient.
FLOOR_COLORS = np.array(
    [[0.25 + 0.05 * i, 0.20 + 0.03 * i, 0.15 + 0.04 * i] for i in range(N_FLOOR_COLORS)]
)
WALL_COLORS = np.array(
    [[0.15 + 0.04 * i, 0.20 + 0.05 * i, 0.30 + 0.03 * i] for i in range(N_WALL_COLORS)]
)

MAGIC_DATASET = b"EMRG1"


@dataclass(frozen=True)
class LatentFactors:
    """Generative factors of a single image."""

    floor_color: int
    wall_color: int
    object_color: int
    object_scale: int
    object_shape: int
    orientation: int

    def __post_init__(self):
        ranges = (
            ("floor_color", self.floor_color, N_FLOOR_COLORS),
            ("wall_color", self.wall_color, N_WALL_COLORS),
            ("object_color", self.object_color, N_COLORS),
            ("object_scale", self.object_scale, N_SCALES),
            ("object_shape", self.object_shape, N_SHAPES),
            ("orientation", self.orientation, N_ORIENTATIONS),
        )
        for name, value, limit in ranges:
            if not 0 <= value < limit:
                raise ValueError(f"{name}={value} out of range [0, {limit})")

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.floor_color,
                self.wall_color,
                self.object_color,
                self.object_scale,
                self.object_shape,
                self.orientation,
            ],
            dtype=np.uint8,
        )


def class_id_of(color: int, scale: int, shape: int) -> int:
    """Canonical class index: contiguous blocks of 16 per color value."""
    for name, value in (("color", color), ("scale", scale), ("shape", shape)):
        if not 0 <= value < 4:
            raise ValueError(f"{name}={value} out of range [0, 4)")
    return color * 16 + scale * 4 + shape


def attributes_of(class_id: int) -> tuple[int, int, int]:
    """Inverse of :func:`class_id_of`."""
    if not 0 <= class_id < N_CLASSES:
        raise ValueError(f"class_id={class_id} out of range [0, {N_CLASSES})")
    return class_id // 16, (class_id % 16) // 4, class_id % 4


def attribute_value(class_id: int, attribute: str) -> int:
    """Value of one named attribute for a class."""
    color, scale, shape = attributes_of(class_id)
    return {"color": color, "scale": scale, "shape": shape}[attribute]


def class_attribute_table() -> np.ndarray:
    """(64, 3) array of (color, scale, shape) per class."""
    return np.array([attributes_of(c) for c in range(N_CLASSES)])


def _glyph_mask(shape_idx: int, half_width: float, dy: np.ndarray, dx: np.ndarray) -> np.ndarray:
    if shape_idx == 0:  # square
        return (np.abs(dy) <= half_width) & (np.abs(dx) <= half_width)
    if shape_idx == 1:  # circle
        return dy ** 2 + dx ** 2 <= half_width ** 2
    if shape_idx == 2:  # triangle, apex up
        return (np.abs(dy) <= half_width) & (np.abs(dx) <= (dy + half_width) / 2)
    # diamond
    return np.abs(dy) + np.abs(dx) <= half_width


def render(latents: LatentFactors, height: int = 16, width: int = 16) -> np.ndarray:
    """Deterministic image for a set of latent factors.

    Top half wall color, bottom half floor color, centered glyph whose
    half-width scales with the scale index and whose horizontal position
    encodes orientation.
    """
    img = np.empty((height, width, 3))
    img[: height // 2] = WALL_COLORS[latents.wall_color]
    img[height // 2:] = FLOOR_COLORS[latents.floor_color]

    max_radius = min(height, width) / 2 - 2
    half_width = (latents.object_scale + 1) / 4 * max_radius
    offset = (latents.orientation - (N_ORIENTATIONS - 1) / 2) / (N_ORIENTATIONS - 1) * 3.0

    cy = (height - 1) / 2
    cx = (width - 1) / 2 + offset
    ys, xs = np.mgrid[0:height, 0:width]
    mask = _glyph_mask(latents.object_shape, half_width, ys - cy, xs - cx)
    img[mask] = OBJECT_COLORS[latents.object_color]
    return np.clip(img, 0.0, 1.0)


def sample_instance(
    class_id: int, rng: np.random.Generator, height: int = 16, width: int = 16
) -> tuple[np.ndarray, LatentFactors]:
    """Random instance of a class: relevant factors fixed, others uniform."""
    color, scale, shape = attributes_of(class_id)
    latents = LatentFactors(
        floor_color=int(rng.integers(N_FLOOR_COLORS)),
        wall_color=int(rng.integers(N_WALL_COLORS)),
        object_color=color,
        object_scale=scale,
        object_shape=shape,
        orientation=int(rng.integers(N_ORIENTATIONS)),
    )
    return render(latents, height, width), latents


@dataclass
class Dataset:
    """Immutable image dataset with a per-class train/test split."""

    images: np.ndarray  # (N, H, W, 3) float64 in [0, 1]
    class_ids: np.ndarray  # (N,) int64
    latents: np.ndarray  # (N, 6) uint8
    train_idx: np.ndarray  # indices into the arrays
    test_idx: np.ndarray

    height: int = field(init=False)
    width: int = field(init=False)

    def __post_init__(self):
        self.height = self.images.shape[1]
        self.width = self.images.shape[2]
        self.images.setflags(write=False)
        self.class_ids.setflags(write=False)

    def __len__(self) -> int:
        return len(self.images)

    def split_indices(self, split: str) -> np.ndarray:
        if split == "train":
            return self.train_idx
        if split == "test":
            return self.test_idx
        raise ValueError(f"unknown split {split!r}")

    def indices_by_class(self, split: str) -> list[np.ndarray]:
        """Per-class item indices within a split."""
        idx = self.split_indices(split)
        return [idx[self.class_ids[idx] == c] for c in range(N_CLASSES)]


def build_dataset(
    instances_per_class: int,
    height: int = 16,
    width: int = 16,
    seed: int = 0,
    train_fraction: float = 0.75,
) -> Dataset:
    """Reproducible dataset with ``instances_per_class`` images per class."""
    if instances_per_class < 4:
        raise ValueError("need at least 4 instances per class to split 0.75/0.25")
    rng = np.random.default_rng(seed)
    images, class_ids, latents = [], [], []
    train_idx, test_idx = [], []
    n_train = int(round(instances_per_class * train_fraction))
    n_train = min(max(n_train, 1), instances_per_class - 1)
    pos = 0
    for class_id in range(N_CLASSES):
        for k in range(instances_per_class):
            img, lat = sample_instance(class_id, rng, height, width)
            images.append(img)
            class_ids.append(class_id)
            latents.append(lat.as_array())
            (train_idx if k < n_train else test_idx).append(pos)
            pos += 1
    return Dataset(
        images=np.array(images),
        class_ids=np.array(class_ids, dtype=np.int64),
        latents=np.array(latents, dtype=np.uint8),
        train_idx=np.array(train_idx, dtype=np.int64),
        test_idx=np.array(test_idx, dtype=np.int64),
    )


def save_dataset(dataset: Dataset, path: str) -> None:
    """Write the binary dataset format (magic EMRG1, u8 pixels)."""
    with open(path, "wb") as f:
        f.write(MAGIC_DATASET)
        f.write(struct.pack("<III", len(dataset), dataset.height, dataset.width))
        pixels = np.round(dataset.images * 255).astype(np.uint8)
        for i in range(len(dataset)):
            f.write(struct.pack("<B", int(dataset.class_ids[i])))
            f.write(dataset.latents[i].tobytes())
            f.write(pixels[i].tobytes())


def ingest_external(path: str, train_fraction: float = 0.75) -> Dataset:
    """Read a dataset from the binary exchange format.

    Raises ValueError on a bad magic header, truncated payload, or labels
    outside the 64-class range.
    """
    with open(path, "rb") as f:
        data = f.read()
    if data[:5] != MAGIC_DATASET:
        raise ValueError("bad magic header, not an EMRG1 dataset file")
    if len(data) < 5 + 12:
        raise ValueError("truncated dataset header")
    count, height, width = struct.unpack_from("<III", data, 5)
    item_size = 1 + 6 + height * width * 3
    expected = 5 + 12 + count * item_size
    if len(data) < expected:
        raise ValueError(
            f"truncated dataset payload: expected {expected} bytes, got {len(data)}"
        )
    images = np.empty((count, height, width, 3))
    class_ids = np.empty(count, dtype=np.int64)
    latents = np.empty((count, 6), dtype=np.uint8)
    off = 17
    for i in range(count):
        class_id = data[off]
        if class_id >= N_CLASSES:
            raise ValueError(f"item {i}: class label {class_id} out of range")
        class_ids[i] = class_id
        latents[i] = np.frombuffer(data, dtype=np.uint8, count=6, offset=off + 1)
        pix = np.frombuffer(
            data, dtype=np.uint8, count=height * width * 3, offset=off + 7
        )
        images[i] = pix.reshape(height, width, 3) / 255.0
        off += item_size
    # Preserve per-class split structure: first fraction of each class trains.
    train_idx, test_idx = [], []
    seen: dict[int, int] = {}
    counts = np.bincount(class_ids, minlength=N_CLASSES)
    for i in range(count):
        c = int(class_ids[i])
        k = seen.get(c, 0)
        seen[c] = k + 1
        n_train = min(max(int(round(counts[c] * train_fraction)), 1), counts[c] - 1) if counts[c] > 1 else 1
        (train_idx if k < n_train else test_idx).append(i)
    return Dataset(
        images=images,
        class_ids=class_ids,
        latents=latents,
        train_idx=np.array(train_idx, dtype=np.int64),
        test_idx=np.array(test_idx, dtype=np.int64),
    )
