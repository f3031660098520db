"""Traffic-sign image corpus: loading, preprocessing, synthesis, splits.

Images are 34x34 grayscale in [0, 1]. A manifest-driven loader ingests any
17-class corpus from disk; a deterministic synthetic generator produces a
separable stand-in corpus with the same shape so every experiment runs
without redistributable sign photographs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

IMAGE_SIZE = 34
NUM_CLASSES = 17

# 17 sign classes as border/glyph combinations. Borders mimic sign plates
# (ring drawn dark on a light face), glyphs mimic pictograms.
_CLASS_SPECS: tuple[tuple[str, str], ...] = (
    ("circle", "hbar"),
    ("circle", "vbar"),
    ("circle", "cross"),
    ("circle", "saltire"),
    ("circle", "dot"),
    ("triangle", "hbar"),
    ("triangle", "vbar"),
    ("triangle", "dot"),
    ("square", "hbar"),
    ("square", "cross"),
    ("square", "saltire"),
    ("square", "dot"),
    ("diamond", "vbar"),
    ("diamond", "cross"),
    ("diamond", "dot"),
    ("vee", "hbar"),
    ("vee", "dot"),
)

CLASS_NAMES: tuple[str, ...] = tuple(f"{b}_{g}" for b, g in _CLASS_SPECS)

_SUPERSAMPLE = 2

# Border outer/inner thresholds in shape-function units, and how far a glyph
# may extend inside that border (unit coords).
_BORDER_PARAMS = {
    "circle": (0.92, 0.72, 0.52),
    "square": (0.88, 0.68, 0.52),
    "diamond": (1.18, 0.90, 0.46),
    "triangle": (0.46, 0.32, 0.26),
    "vee": (0.46, 0.32, 0.26),
}


@dataclass
class SignImage:
    """One preprocessed sample: 34x34 grayscale pixels in [0, 1] plus label."""

    pixels: np.ndarray
    label: int
    source_id: str = ""

    def __post_init__(self) -> None:
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.shape != (IMAGE_SIZE, IMAGE_SIZE):
            raise ValueError(
                f"pixels must be {IMAGE_SIZE}x{IMAGE_SIZE}, got {self.pixels.shape}"
            )
        if not np.all(np.isfinite(self.pixels)):
            raise ValueError(f"non-finite pixels in {self.source_id or 'image'}")
        if self.pixels.min() < 0.0 or self.pixels.max() > 1.0:
            raise ValueError(
                f"pixels must lie in [0, 1], got range "
                f"[{self.pixels.min()}, {self.pixels.max()}]"
            )
        if not (0 <= int(self.label) < NUM_CLASSES):
            raise ValueError(f"label must lie in [0, {NUM_CLASSES}), got {self.label}")
        self.label = int(self.label)


@dataclass
class Dataset:
    """An ordered collection of samples sharing one label vocabulary."""

    items: list[SignImage]
    class_names: tuple[str, ...] = CLASS_NAMES
    split_tag: str = "unsplit"

    def __len__(self) -> int:
        return len(self.items)

    def images(self) -> np.ndarray:
        """(N, 34, 34) float64 stack."""
        if not self.items:
            return np.zeros((0, IMAGE_SIZE, IMAGE_SIZE))
        return np.stack([it.pixels for it in self.items])

    def labels(self) -> np.ndarray:
        return np.asarray([it.label for it in self.items], dtype=np.int64)

    def subset(self, indices) -> "Dataset":
        return Dataset(
            items=[self.items[int(i)] for i in indices],
            class_names=self.class_names,
            split_tag=self.split_tag,
        )


def _resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with half-pixel-center alignment; identity when sizes match."""
    in_h, in_w = img.shape
    if (in_h, in_w) == (out_h, out_w):
        return img.copy()
    ys = np.clip((np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5, 0.0, in_h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5, 0.0, in_w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = img[np.ix_(y0, x0)] * (1.0 - wx) + img[np.ix_(y0, x1)] * wx
    bot = img[np.ix_(y1, x0)] * (1.0 - wx) + img[np.ix_(y1, x1)] * wx
    return top * (1.0 - wy) + bot * wy


def preprocess(raw: np.ndarray) -> np.ndarray:
    """[0, 255] image of any spatial size -> 34x34 grayscale in [0, 1].

    Color images are collapsed by an unweighted channel mean before the
    bilinear resize; the result is scaled by 1/255 and clipped.
    """
    arr = np.asarray(raw, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr.mean(axis=2)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D or 3-D image, got ndim={arr.ndim}")
    if arr.size == 0:
        raise ValueError("empty image")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    if arr.min() < -1e-9 or arr.max() > 255.0 + 1e-9:
        raise ValueError(
            f"pixel values must lie in [0, 255], got range [{arr.min()}, {arr.max()}]"
        )
    out = _resize_bilinear(arr, IMAGE_SIZE, IMAGE_SIZE) / 255.0
    return np.clip(out, 0.0, 1.0)


def load_dataset(manifest_path, root=None) -> Dataset:
    """Read a ``path,class`` manifest and preprocess every listed image.

    Paths are resolved against ``root`` (default: the manifest's directory).
    Unreadable files and out-of-range labels fail loudly with the row number.
    """
    manifest_path = Path(manifest_path)
    root = Path(root) if root is not None else manifest_path.parent
    items: list[SignImage] = []
    with open(manifest_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"path", "class"} <= set(reader.fieldnames):
            raise ValueError(
                f"manifest {manifest_path} must have 'path' and 'class' columns, "
                f"got {reader.fieldnames}"
            )
        for row_no, row in enumerate(reader, start=2):
            rel = row["path"]
            try:
                label = int(row["class"])
            except (TypeError, ValueError) as exc:
                raise ValueError(
                    f"{manifest_path}:{row_no}: class {row['class']!r} is not an integer"
                ) from exc
            if not (0 <= label < NUM_CLASSES):
                raise ValueError(
                    f"{manifest_path}:{row_no}: class {label} outside [0, {NUM_CLASSES})"
                )
            full = root / rel
            try:
                with Image.open(full) as im:
                    if im.mode not in ("L", "I", "F"):
                        im = im.convert("RGB")
                    raw = np.asarray(im, dtype=np.float64)
            except FileNotFoundError:
                raise FileNotFoundError(f"{manifest_path}:{row_no}: missing image {full}")
            except Exception as exc:
                raise ValueError(
                    f"{manifest_path}:{row_no}: unreadable image {full}: {exc}"
                ) from exc
            items.append(SignImage(preprocess(raw), label, source_id=str(rel)))
    return Dataset(items=items)


def write_dataset(dataset: Dataset, out_dir) -> Path:
    """Persist a dataset as 8-bit PNGs plus a ``manifest.csv``; returns the manifest path."""
    out_dir = Path(out_dir)
    rows = []
    for idx, item in enumerate(dataset.items):
        rel = Path("images") / f"class_{item.label:02d}" / f"{idx:05d}.png"
        full = out_dir / rel
        full.parent.mkdir(parents=True, exist_ok=True)
        quantized = np.round(item.pixels * 255.0).astype(np.uint8)
        Image.fromarray(quantized, mode="L").save(full)
        rows.append((rel.as_posix(), item.label))
    manifest = out_dir / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "class"])
        writer.writerows(rows)
    return manifest


def split(
    dataset: Dataset, sizes: tuple[int, int, int], seed: int
) -> tuple[Dataset, Dataset, Dataset]:
    """Deterministic shuffle into train/val/test of the requested sizes."""
    n_train, n_val, n_test = (int(s) for s in sizes)
    if min(n_train, n_val, n_test) < 0:
        raise ValueError(f"split sizes must be non-negative, got {sizes}")
    total = n_train + n_val + n_test
    if total > len(dataset):
        raise ValueError(
            f"split sizes {sizes} sum to {total} but the dataset has {len(dataset)}"
        )
    perm = np.random.default_rng(seed).permutation(len(dataset))
    train = dataset.subset(perm[:n_train])
    val = dataset.subset(perm[n_train : n_train + n_val])
    test = dataset.subset(perm[n_train + n_val : total])
    train.split_tag, val.split_tag, test.split_tag = "train", "val", "test"
    return train, val, test


def _border_field(kind: str, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    if kind == "circle":
        return np.hypot(u, v)
    if kind == "square":
        return np.maximum(np.abs(u), np.abs(v))
    if kind == "diamond":
        return np.abs(u) + np.abs(v)
    if kind == "triangle":
        s3 = np.sqrt(3.0)
        return np.maximum.reduce([-v, (s3 * u + v) / 2.0, (-s3 * u + v) / 2.0])
    if kind == "vee":
        s3 = np.sqrt(3.0)
        return np.maximum.reduce([v, (s3 * u - v) / 2.0, (-s3 * u - v) / 2.0])
    raise ValueError(f"unknown border kind: {kind!r}")


def _glyph_mask(kind: str, u: np.ndarray, v: np.ndarray, scale: float) -> np.ndarray:
    us, vs = u / scale, v / scale
    if kind == "hbar":
        return (np.abs(vs) <= 0.28) & (np.abs(us) <= 0.85)
    if kind == "vbar":
        return (np.abs(us) <= 0.28) & (np.abs(vs) <= 0.85)
    if kind == "cross":
        return ((np.abs(vs) <= 0.24) & (np.abs(us) <= 0.80)) | (
            (np.abs(us) <= 0.24) & (np.abs(vs) <= 0.80)
        )
    if kind == "saltire":
        diag = (np.abs(us - vs) <= 0.34) | (np.abs(us + vs) <= 0.34)
        return diag & (np.maximum(np.abs(us), np.abs(vs)) <= 0.75)
    if kind == "dot":
        return np.hypot(us, vs) <= 0.40
    raise ValueError(f"unknown glyph kind: {kind!r}")


def _render_sign(class_idx: int, rng: np.random.Generator) -> np.ndarray:
    """Rasterize one jittered sign at 2x supersampling, box-filter to 34x34."""
    border, glyph = _CLASS_SPECS[class_idx]
    outer, inner, glyph_scale = _BORDER_PARAMS[border]

    theta = np.deg2rad(rng.uniform(-6.0, 6.0))
    brightness = rng.uniform(0.90, 1.10)
    background = rng.uniform(0.80, 0.92)
    du = rng.uniform(-0.04, 0.04)
    dv = rng.uniform(-0.04, 0.04)

    n = IMAGE_SIZE * _SUPERSAMPLE
    c = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    u = c[None, :]
    v = -c[:, None]  # rows grow downward; flip so v points up
    ur = np.cos(theta) * u - np.sin(theta) * v - du
    vr = np.sin(theta) * u + np.cos(theta) * v - dv

    f = _border_field(border, ur, vr)
    img = np.full((n, n), background)
    img[f <= outer] = 0.12
    face = f <= inner
    img[face] = 0.97
    img[_glyph_mask(glyph, ur, vr, glyph_scale) & face] = 0.12

    img = img.reshape(IMAGE_SIZE, _SUPERSAMPLE, IMAGE_SIZE, _SUPERSAMPLE).mean((1, 3))
    return np.clip(img * brightness, 0.0, 1.0)


def synth_generate(n_per_class: int, seed: int) -> Dataset:
    """Deterministic 17-class synthetic corpus, ``n_per_class`` samples each.

    Samples are jittered in rotation (+/-6 deg), position, background level,
    and overall brightness, so classes are separable but not trivially
    constant. Same seed, same bits.
    """
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be >= 1, got {n_per_class}")
    rng = np.random.default_rng(seed)
    items = []
    for class_idx in range(NUM_CLASSES):
        for j in range(n_per_class):
            pixels = _render_sign(class_idx, rng)
            items.append(
                SignImage(pixels, class_idx, source_id=f"synth_c{class_idx:02d}_i{j:04d}")
            )
    return Dataset(items=items)
