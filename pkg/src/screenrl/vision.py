"""Widget extraction from grayscale screenshots.

Canny edge detection, connected-component boxes, and box geometry helpers
(IoU, greedy one-to-one matching). Screenshots are stored as binary PGM.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage


class ImageTooSmall(ValueError):
    pass


@dataclass(frozen=True)
class Image:
    """Row-major 8-bit grayscale image; ``data`` has shape (height, width)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"image must be a non-empty 2-D array, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("pixel values must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def pixels(self) -> np.ndarray:
        return self.data.ravel()

    @classmethod
    def from_rgb(cls, rgb: np.ndarray) -> "Image":
        rgb = np.asarray(rgb, dtype=np.float64)
        luma = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
        return cls(np.clip(np.rint(luma), 0, 255).astype(np.uint8))


@dataclass(frozen=True)
class EdgeMap:
    bits: np.ndarray  # bool, (height, width)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]


@dataclass(frozen=True, order=True)
class WidgetBox:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"degenerate box {self}")

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def x2(self) -> int:
        return self.x + self.w

    @property
    def y2(self) -> int:
        return self.y + self.h

    def inside(self, width: int, height: int) -> bool:
        return self.x >= 0 and self.y >= 0 and self.x2 <= width and self.y2 <= height

    def contains(self, other: "WidgetBox") -> bool:
        return (self.x <= other.x and self.y <= other.y
                and other.x2 <= self.x2 and other.y2 <= self.y2)

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.w, self.h)


def gaussian_kernel(size: int = 5, sigma: float = 1.4) -> np.ndarray:
    g = _gaussian_1d(size, sigma)
    return np.outer(g, g)


def _filter2d(a: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # correlation with reflected borders, output same shape as input
    kh, kw = kernel.shape
    padded = np.pad(a, ((kh // 2, kh // 2), (kw // 2, kw // 2)), mode="reflect")
    windows = sliding_window_view(padded, kernel.shape)
    return np.einsum("ijkl,kl->ij", windows, kernel)


def _separable(a: np.ndarray, col: np.ndarray, row: np.ndarray) -> np.ndarray:
    # equivalent to _filter2d(a, np.outer(col, row)) at a fraction of the cost
    r = len(col) // 2
    p = np.pad(a, r, mode="reflect")
    h, w = a.shape
    tmp = sum(c * p[i:i + h, :] for i, c in enumerate(col) if c != 0)
    return sum(c * tmp[:, j:j + w] for j, c in enumerate(row) if c != 0)


def _gaussian_1d(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    return g / g.sum()


_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.T
_SMOOTH = np.array([1.0, 2.0, 1.0])
_DIFF = np.array([-1.0, 0.0, 1.0])


def _non_max_suppression(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    # direction bins: 0 -> horizontal gradient, 1 -> 45deg, 2 -> vertical, 3 -> 135deg
    bins = np.zeros(mag.shape, dtype=np.int8)
    bins[(angle >= 22.5) & (angle < 67.5)] = 1
    bins[(angle >= 67.5) & (angle < 112.5)] = 2
    bins[(angle >= 112.5) & (angle < 157.5)] = 3

    p = np.pad(mag, 1, mode="constant")
    h, w = mag.shape

    def shifted(dy, dx):
        return p[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]

    # (forward neighbour, backward neighbour) along the gradient per bin; image rows grow downward
    offsets = {0: ((0, 1), (0, -1)), 1: ((1, 1), (-1, -1)), 2: ((1, 0), (-1, 0)), 3: ((1, -1), (-1, 1))}
    keep = np.zeros(mag.shape, dtype=bool)
    for b, (fwd, bwd) in offsets.items():
        sel = bins == b
        # asymmetric comparison thins two-pixel plateaus at symmetric steps to one pixel
        k = (mag >= shifted(*fwd)) & (mag > shifted(*bwd))
        keep |= sel & k
    return np.where(keep, mag, 0.0)


def canny_edges(img: Image, low: float = 50.0, high: float = 150.0,
                sigma: float = 1.4, kernel_size: int = 5) -> EdgeMap:
    if img.width < 3 or img.height < 3:
        raise ImageTooSmall(f"image {img.width}x{img.height} is too small for edge detection")
    if not 0 <= low <= high:
        raise ValueError("thresholds must satisfy 0 <= low <= high")
    a = img.data.astype(np.float64)
    g = _gaussian_1d(kernel_size, sigma)
    smooth = _separable(a, g, g)
    gx = _separable(smooth, _SMOOTH, _DIFF)
    gy = _separable(smooth, _DIFF, _SMOOTH)
    mag = np.hypot(gx, gy)
    thin = _non_max_suppression(mag, gx, gy)

    strong = thin >= high
    weak = thin >= low
    if not strong.any():
        return EdgeMap(np.zeros(a.shape, dtype=bool))
    labels, _ = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    seeds = np.unique(labels[strong])
    seeds = seeds[seeds > 0]
    return EdgeMap(np.isin(labels, seeds) & weak)


def iou(a: WidgetBox, b: WidgetBox) -> float:
    ix = min(a.x2, b.x2) - max(a.x, b.x)
    iy = min(a.y2, b.y2) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def extract_widget_boxes(edges: EdgeMap, min_area_fraction: float = 0.0005,
                         min_side: int = 4, merge_iou: float = 0.9) -> list[WidgetBox]:
    """Bounding boxes of 8-connected edge components, with noise filtering.

    Boxes smaller than ``min_area_fraction`` of the image or with a side shorter
    than ``min_side`` are dropped. A box lying inside another box whose IoU with
    it exceeds ``merge_iou`` is absorbed by the container.
    """
    if not 0 <= min_area_fraction <= 1:
        raise ValueError("min_area_fraction must lie in [0, 1]")
    if not edges.bits.any():
        return []
    labels, n = ndimage.label(edges.bits, structure=np.ones((3, 3), dtype=bool))
    min_area = min_area_fraction * edges.width * edges.height
    boxes = []
    for sl in ndimage.find_objects(labels):
        if sl is None:
            continue
        ys, xs = sl
        b = WidgetBox(xs.start, ys.start, xs.stop - xs.start, ys.stop - ys.start)
        if b.area < min_area or b.w < min_side or b.h < min_side:
            continue
        boxes.append(b)

    # largest first so containers are settled before their contents
    boxes.sort(key=lambda b: (-b.area, b.y, b.x))
    kept: list[WidgetBox] = []
    for b in boxes:
        if any(k.contains(b) and iou(k, b) > merge_iou for k in kept):
            continue
        kept.append(b)
    kept.sort(key=lambda b: (b.y, b.x))
    return kept


def match_widgets(a: list[WidgetBox], b: list[WidgetBox],
                  threshold: float = 0.8) -> list[tuple[int, int]]:
    """Greedy one-to-one matching in descending IoU order.

    Only pairs with IoU strictly above ``threshold`` are returned. Ties go to the
    smaller index in ``a``, then in ``b``.
    """
    if not 0 <= threshold <= 1:
        raise ValueError("threshold must lie in [0, 1]")
    cands = []
    for i, ba in enumerate(a):
        for j, bb in enumerate(b):
            v = iou(ba, bb)
            if v > threshold:
                cands.append((-v, i, j))
    cands.sort()
    used_a, used_b = set(), set()
    pairs = []
    for _, i, j in cands:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        pairs.append((i, j))
    return pairs


def detection_counts(detected: list[WidgetBox], truth: list[WidgetBox],
                     threshold: float = 0.8) -> tuple[int, int, int]:
    """(true positives, false positives, false negatives) at an IoU threshold."""
    tp = len(match_widgets(detected, truth, threshold))
    return tp, len(detected) - tp, len(truth) - tp


def f1_score(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


# --- corpus files -----------------------------------------------------------

def write_pgm(path: str | Path, img: Image) -> None:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.data.tobytes())


def read_pgm(path: str | Path) -> Image:
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    data = np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=pos)
    return Image(data.reshape(h, w).copy())


def write_boxes_sidecar(path: str | Path, boxes: list[tuple[WidgetBox, str]]) -> None:
    doc = [{"x": b.x, "y": b.y, "w": b.w, "h": b.h, "type": t} for b, t in boxes]
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def read_boxes_sidecar(path: str | Path) -> list[tuple[WidgetBox, str]]:
    doc = json.loads(Path(path).read_text())
    return [(WidgetBox(d["x"], d["y"], d["w"], d["h"]), d["type"]) for d in doc]
