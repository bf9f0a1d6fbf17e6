"""28x28 grayscale image sets: IDX files, synthetic digit/garment renderers, concepts."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
SIDE = 28
LOOPY_DIGITS = frozenset({0, 6, 8, 9})
LIGHTNESS_THRESHOLD = 0.3


class IDXFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ImageDataset:
    images: np.ndarray  # (n, 28, 28) in [0, 1]
    labels: np.ndarray  # (n,) ints 0-9
    source: str  # "digits" | "fashion"

    def __len__(self) -> int:
        return len(self.labels)

    def as_model_input(self) -> np.ndarray:
        """(n, 1, 28, 28) float64, the layout the conv models expect."""
        return self.images.reshape(-1, 1, SIDE, SIDE).astype(np.float64)


# ---------------------------------------------------------------------------
# IDX


def _read_idx(raw: bytes, magic: int, path) -> np.ndarray:
    if len(raw) < 4:
        raise IDXFormatError(f"{path}: truncated header")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise IDXFormatError(f"{path}: magic {found:#010x}, expected {magic:#010x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IDXFormatError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(dims))
    if len(raw) - header != count:
        raise IDXFormatError(f"{path}: expected {count} data bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_idx_images(images_path: str | Path, labels_path: str | Path, source: str = "digits") -> ImageDataset:
    pixels = _read_idx(Path(images_path).read_bytes(), IMAGE_MAGIC, images_path)
    labels = _read_idx(Path(labels_path).read_bytes(), LABEL_MAGIC, labels_path)
    if len(pixels) != len(labels):
        raise IDXFormatError(f"{len(pixels)} images but {len(labels)} labels")
    return ImageDataset(pixels.astype(np.float64) / 255.0, labels.astype(np.int64), source)


def idx_image_bytes(images: np.ndarray) -> bytes:
    arr = np.asarray(images)
    if arr.dtype != np.uint8:
        arr = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    n, h, w = arr.shape
    return struct.pack(">IIII", IMAGE_MAGIC, n, h, w) + arr.tobytes()


def idx_label_bytes(labels: np.ndarray) -> bytes:
    arr = np.asarray(labels).astype(np.uint8)
    return struct.pack(">II", LABEL_MAGIC, len(arr)) + arr.tobytes()


def write_idx(ds: ImageDataset, images_path: str | Path, labels_path: str | Path) -> None:
    Path(images_path).write_bytes(idx_image_bytes(ds.images))
    Path(labels_path).write_bytes(idx_label_bytes(ds.labels))


# ---------------------------------------------------------------------------
# concepts


def concept_loopiness(label: int) -> int:
    label = int(label)
    if not 0 <= label <= 9:
        raise ValueError(f"digit label out of range: {label}")
    return int(label in LOOPY_DIGITS)


def concept_lightness(image: np.ndarray, threshold: float = LIGHTNESS_THRESHOLD) -> float:
    """Fraction of pixels brighter than ``threshold``."""
    image = np.asarray(image)
    return float(np.count_nonzero(image > threshold)) / image.size


# ---------------------------------------------------------------------------
# synthetic renderers

_FONTS = (cv2.FONT_HERSHEY_SIMPLEX, cv2.FONT_HERSHEY_DUPLEX, cv2.FONT_HERSHEY_COMPLEX,
          cv2.FONT_HERSHEY_TRIPLEX, cv2.FONT_HERSHEY_PLAIN)
_CANVAS = 84


def _finish(canvas: np.ndarray, rng: np.random.Generator, angle: float, scale: float) -> np.ndarray:
    ys, xs = np.nonzero(canvas > 0.05)
    cy, cx = (ys.mean(), xs.mean()) if len(xs) else (_CANVAS / 2, _CANVAS / 2)
    m = cv2.getRotationMatrix2D((float(cx), float(cy)), angle, scale)
    m[0, 1] += rng.uniform(-0.15, 0.15)  # shear
    m[:, 2] += (_CANVAS / 2 - cx, _CANVAS / 2 - cy)
    m[:, 2] += rng.uniform(-3, 3, size=2)
    warped = cv2.warpAffine(canvas, m, (_CANVAS, _CANVAS), flags=cv2.INTER_LINEAR)
    small = cv2.resize(warped, (SIDE, SIDE), interpolation=cv2.INTER_AREA)
    return np.clip(small.astype(np.float64), 0.0, 1.0)


def render_digit(digit: int, rng: np.random.Generator) -> np.ndarray:
    canvas = np.zeros((_CANVAS, _CANVAS), dtype=np.uint8)
    font = _FONTS[int(rng.integers(len(_FONTS)))]
    thickness = int(rng.integers(5, 10))
    font_scale = 2.4 if font != cv2.FONT_HERSHEY_PLAIN else 4.8
    (tw, th), _ = cv2.getTextSize(str(digit), font, font_scale, thickness)
    org = ((_CANVAS - tw) // 2, (_CANVAS + th) // 2)
    cv2.putText(canvas, str(digit), org, font, font_scale, 255, thickness, cv2.LINE_AA)
    img = _finish(canvas.astype(np.float32) / 255.0, rng, rng.uniform(-14, 14), rng.uniform(0.85, 1.1))
    peak = img.max()
    return img / peak if peak > 0 else img


def synthetic_digits(n: int, seed: int) -> ImageDataset:
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, n)
    images = np.stack([render_digit(int(d), rng) for d in labels]) if n else np.zeros((0, SIDE, SIDE))
    return ImageDataset(images, labels.astype(np.int64), "digits")


# garment outlines in a unit box (x right, y down)
_GARMENTS = {
    0: [(0.3, 0.15), (0.7, 0.15), (0.95, 0.35), (0.85, 0.45), (0.72, 0.38), (0.72, 0.9),
        (0.28, 0.9), (0.28, 0.38), (0.15, 0.45), (0.05, 0.35)],  # t-shirt
    1: [(0.32, 0.05), (0.68, 0.05), (0.72, 0.95), (0.56, 0.95), (0.5, 0.3), (0.44, 0.95),
        (0.28, 0.95)],  # trouser
    2: [(0.3, 0.12), (0.7, 0.12), (0.92, 0.3), (0.98, 0.9), (0.84, 0.9), (0.74, 0.42),
        (0.74, 0.92), (0.26, 0.92), (0.26, 0.42), (0.16, 0.9), (0.02, 0.9), (0.08, 0.3)],  # pullover
    3: [(0.38, 0.05), (0.62, 0.05), (0.66, 0.35), (0.85, 0.95), (0.15, 0.95), (0.34, 0.35)],  # dress
    4: [(0.28, 0.08), (0.72, 0.08), (0.94, 0.25), (0.98, 0.95), (0.82, 0.95), (0.78, 0.45),
        (0.78, 0.97), (0.22, 0.97), (0.22, 0.45), (0.18, 0.95), (0.02, 0.95), (0.06, 0.25)],  # coat
    5: [(0.05, 0.6), (0.3, 0.55), (0.35, 0.7), (0.55, 0.5), (0.7, 0.65), (0.95, 0.7), (0.95, 0.8),
        (0.05, 0.8)],  # sandal
    6: [(0.32, 0.1), (0.5, 0.2), (0.68, 0.1), (0.9, 0.25), (0.95, 0.85), (0.8, 0.85), (0.75, 0.4),
        (0.75, 0.95), (0.25, 0.95), (0.25, 0.4), (0.2, 0.85), (0.05, 0.85), (0.1, 0.25)],  # shirt
    7: [(0.05, 0.5), (0.4, 0.45), (0.6, 0.55), (0.9, 0.6), (0.97, 0.75), (0.97, 0.8), (0.03, 0.8)],  # sneaker
    8: [(0.1, 0.35), (0.35, 0.35), (0.35, 0.15), (0.65, 0.15), (0.65, 0.35), (0.9, 0.35),
        (0.92, 0.9), (0.08, 0.9)],  # bag
    9: [(0.2, 0.1), (0.55, 0.1), (0.55, 0.55), (0.92, 0.68), (0.95, 0.9), (0.15, 0.9)],  # ankle boot
}


def render_garment(label: int, rng: np.random.Generator) -> np.ndarray:
    canvas = np.zeros((_CANVAS, _CANVAS), dtype=np.uint8)
    pts = np.array(_GARMENTS[label], dtype=np.float64)
    pts = pts + rng.normal(0, 0.02, size=pts.shape)
    pts = pts * (_CANVAS * 0.8) + _CANVAS * 0.1
    cv2.fillPoly(canvas, [np.round(pts * 8).astype(np.int32)], 255, cv2.LINE_AA, shift=3)
    base = rng.uniform(0.12, 1.0)
    shade = base * (1.0 + rng.uniform(-0.25, 0.25) * np.linspace(-1, 1, _CANVAS))[:, None]
    if rng.integers(0, 3) == 0:
        period = int(rng.integers(6, 14))
        stripes = (np.arange(_CANVAS) // period) % 2
        shade = shade * (1.0 - 0.35 * stripes)[:, None]
    img = (canvas.astype(np.float32) / 255.0) * np.clip(shade, 0.0, 1.0).astype(np.float32)
    return _finish(img, rng, rng.uniform(-6, 6), rng.uniform(0.85, 1.05))


def synthetic_fashion(n: int, seed: int) -> ImageDataset:
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, n)
    images = np.stack([render_garment(int(k), rng) for k in labels]) if n else np.zeros((0, SIDE, SIDE))
    return ImageDataset(images, labels.astype(np.int64), "fashion")
