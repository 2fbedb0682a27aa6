"""Widget, layout and page embeddings.

A widget is described by three concatenated parts: a down-sampled image
patch, a pooled location mask and a one-hot type. A page state is the mean
widget vector followed by a learned (or structural) layout embedding.
"""

from __future__ import annotations

import math
import random as _random
from dataclasses import dataclass, field

import numpy as np

from . import weights
from .layout import (COLUMN, GROUP, LINE, LayoutTree, characterize_layout, layout_similarity,
                     parse_forest, serialize_tree, tree_edit_distance)
from .vision import (Image, WidgetBox, canny_edges, extract_widget_boxes, match_widgets)

WIDGET_TYPES = (
    "Button", "TextView", "EditText", "CheckBox", "ImageButton", "ImageView", "RadioButton",
    "Switch", "SeekBar", "ProgressBar", "Spinner", "Toolbar", "ListItem", "Icon",
)
TYPE_ID = {name: i for i, name in enumerate(WIDGET_TYPES)}
N_TYPES = len(WIDGET_TYPES)


@dataclass(frozen=True)
class EmbeddingConfig:
    d_img: int = 64
    d_loc: int = 64
    d_layout: int = 32
    canny_low: float = 50.0
    canny_high: float = 150.0
    min_area_fraction: float = 0.0005
    min_side: int = 4
    gap_threshold: float = 0.05
    line_overlap: float = 0.5
    match_iou: float = 0.8
    widget_weight: float = 0.5
    layout_weight: float = 0.5
    same_page_threshold: float = 0.75

    def __post_init__(self):
        for name in ("d_img", "d_loc"):
            v = getattr(self, name)
            if v < 1 or math.isqrt(v) ** 2 != v:
                raise ValueError(f"{name} must be a positive perfect square, got {v}")

    @property
    def widget_dim(self) -> int:
        return self.d_img + self.d_loc + N_TYPES

    @property
    def state_dim(self) -> int:
        return self.widget_dim + self.d_layout


@dataclass(frozen=True)
class WidgetDescriptor:
    box: WidgetBox
    image_vec: np.ndarray
    loc_vec: np.ndarray
    type_id: int

    @property
    def type_name(self) -> str:
        return WIDGET_TYPES[self.type_id]

    @property
    def type_onehot(self) -> np.ndarray:
        v = np.zeros(N_TYPES)
        v[self.type_id] = 1.0
        return v


def widget_vector(w: WidgetDescriptor) -> np.ndarray:
    return np.concatenate([w.image_vec, w.loc_vec, w.type_onehot])


@dataclass(frozen=True)
class PageState:
    widgets: tuple[WidgetDescriptor, ...]
    layout: LayoutTree
    layout_string: str
    state_vec: np.ndarray
    width: int
    height: int
    widget_vectors: np.ndarray = field(repr=False, default=None)

    @property
    def boxes(self) -> list[WidgetBox]:
        return [w.box for w in self.widgets]


# --- widget features ---------------------------------------------------------

def _resample_bilinear(patch: np.ndarray, k: int) -> np.ndarray:
    h, w = patch.shape
    ys = np.clip((np.arange(k) + 0.5) * h / k - 0.5, 0, h - 1)
    xs = np.clip((np.arange(k) + 0.5) * w / k - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = patch[y0][:, x0] * (1 - fx) + patch[y0][:, x1] * fx
    bot = patch[y1][:, x0] * (1 - fx) + patch[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def _clip_box(img: Image, box: WidgetBox) -> tuple[int, int, int, int]:
    x0, y0 = max(0, box.x), max(0, box.y)
    x1, y1 = min(img.width, box.x2), min(img.height, box.y2)
    if x1 <= x0 or y1 <= y0:
        raise ValueError(f"box {box} has no area inside the {img.width}x{img.height} image")
    return x0, y0, x1, y1


def embed_widget_image(img: Image, box: WidgetBox, d_img: int = 64) -> np.ndarray:
    k = math.isqrt(d_img)
    if k * k != d_img:
        raise ValueError("d_img must be a perfect square")
    x0, y0, x1, y1 = _clip_box(img, box)
    patch = img.data[y0:y1, x0:x1].astype(np.float64)
    return (_resample_bilinear(patch, k) / 255.0).ravel()


def _pool_interval(lo: float, hi: float, extent: int, k: int) -> np.ndarray:
    edges = np.arange(k + 1) * extent / k
    overlap = np.clip(np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo), 0, None)
    return overlap / (edges[1:] - edges[:-1])


def embed_widget_location(box: WidgetBox, width: int, height: int, d_loc: int = 64) -> np.ndarray:
    """Average-pooled binary mask of the widget over a sqrt(d_loc) grid."""
    k = math.isqrt(d_loc)
    if k * k != d_loc:
        raise ValueError("d_loc must be a perfect square")
    rows = _pool_interval(box.y, box.y2, height, k)
    cols = _pool_interval(box.x, box.x2, width, k)
    return np.clip(np.outer(rows, cols), 0.0, 1.0).ravel()


def _trim_background(patch: np.ndarray) -> np.ndarray:
    """Drop border rows/columns that belong to the page background."""
    med = np.median(patch)
    t, b, l, r = 0, patch.shape[0], 0, patch.shape[1]
    for _ in range(3):
        if b - t > 4 and abs(np.median(patch[t, l:r]) - med) > 35:
            t += 1
        if b - t > 4 and abs(np.median(patch[b - 1, l:r]) - med) > 35:
            b -= 1
        if r - l > 4 and abs(np.median(patch[t:b, l]) - med) > 35:
            l += 1
        if r - l > 4 and abs(np.median(patch[t:b, r - 1]) - med) > 35:
            r -= 1
    return patch[t:b, l:r]


def widget_features(img: Image, box: WidgetBox) -> dict:
    x0, y0, x1, y1 = _clip_box(img, box)
    p = _trim_background(img.data[y0:y1, x0:x1].astype(np.float64))
    h, w = p.shape
    fill = float(np.median(p))
    dev = p - fill
    sides = [dev[:2, :], dev[-2:, :], dev[:, :2], dev[:, -2:]] if h > 4 and w > 4 else []
    ring = bool(sides) and all(s.mean() < -4.0 for s in sides)
    inner = dev[3:-3, 3:-3] if h > 6 and w > 6 else dev
    bright = inner > 4
    dark = inner < -4
    ih, iw = inner.shape

    cls = bright.astype(np.int8) - dark.astype(np.int8)
    alternations = float(np.mean((np.diff(cls, axis=1) != 0).sum(axis=1))) if iw > 1 else 0.0

    def span(mask, axis):
        idx = np.nonzero(mask.any(axis=axis))[0]
        return (int(idx[0]), int(idx[-1]) + 1) if idx.size else (0, 0)

    return {
        "w": w, "h": h, "aspect": w / h,
        "screen_w": img.width, "screen_h": img.height, "y": y0,
        "fill": fill, "ring": ring,
        "bright": float(bright.mean()) if bright.size else 0.0,
        "dark": float(dark.mean()) if dark.size else 0.0,
        "n_bright": int(bright.sum()), "n_dark": int(dark.sum()),
        "alternations": alternations,
        "bright_rows": span(bright, 1), "bright_cols": span(bright, 0),
        "dark_rows": span(dark, 1), "dark_cols": span(dark, 0),
        "inner_shape": (ih, iw),
    }


def classify_widget_type(img: Image, box: WidgetBox) -> tuple[int, np.ndarray]:
    """Rule table over aspect ratio, fill, border ring and interior motifs.

    Total: anything the rules do not recognise is an Icon.
    """
    f = widget_features(img, box)
    name = _classify(f)
    onehot = np.zeros(N_TYPES)
    onehot[TYPE_ID[name]] = 1.0
    return TYPE_ID[name], onehot


def _classify(f: dict) -> str:
    w, h, aspect = f["w"], f["h"], f["aspect"]
    ih, iw = f["inner_shape"]
    bright, dark = f["bright"], f["dark"]
    has_bright, has_dark = f["n_bright"] >= 6, f["n_dark"] >= 6
    small = max(w, h) <= 30

    if w >= 0.85 * f["screen_w"]:
        if has_dark:
            return "ListItem"
        return "Toolbar" if f["y"] < 0.2 * f["screen_h"] else "ListItem"
    if f["alternations"] >= 4:
        return "ImageView"
    if f["ring"]:
        if has_dark:
            return "Spinner"
        if 0.7 <= aspect <= 1.4:
            return "CheckBox" if small else "ImageButton"
        return "Button"
    if has_dark and not has_bright:
        r0, r1 = f["dark_rows"]
        c0, c1 = f["dark_cols"]
        if r1 - r0 >= 0.6 * ih and (c1 - c0) <= 0.7 * iw:
            return "Switch"
        if r0 >= 0.5 * ih:
            return "EditText"
        return "TextView"
    if has_bright and not has_dark:
        c0, c1 = f["bright_cols"]
        if aspect >= 4 and h <= 20:
            return "ProgressBar" if c0 == 0 else "SeekBar"
        if 0.7 <= aspect <= 1.4:
            # a plus sign covers far less of the interior than a disc
            return "Icon" if bright < 0.35 else "RadioButton"
    if not has_dark and not has_bright:
        if aspect >= 4 and h <= 20:
            return "ProgressBar"
        if 0.7 <= aspect <= 1.4 and min(w, h) >= 40:
            return "ImageView"  # plain filled block without border
    return "Icon"


def describe_widget(img: Image, box: WidgetBox, config: EmbeddingConfig) -> WidgetDescriptor:
    type_id, _ = classify_widget_type(img, box)
    return WidgetDescriptor(
        box=box,
        image_vec=embed_widget_image(img, box, config.d_img),
        loc_vec=embed_widget_location(box, img.width, img.height, config.d_loc),
        type_id=type_id,
    )


# --- layout encoders ---------------------------------------------------------

LAYOUT_ALPHABET = (GROUP, LINE, COLUMN, "{", "}")
_CHAR = {c: i for i, c in enumerate(LAYOUT_ALPHABET)}


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class LayoutEncoder:
    """Character-level LSTM followed by a linear projection.

    Weights: ``W`` (4H x (V + H)) gate weights in i, f, g, o order, ``b`` gate
    bias, ``Wo`` (D x H) and ``bo`` projection.
    """

    kind = "layout-lstm"

    def __init__(self, W, b, Wo, bo):
        self.W, self.b, self.Wo, self.bo = W, b, Wo, bo
        self.hidden = W.shape[0] // 4
        self.dim = Wo.shape[0]

    @classmethod
    def init(cls, hidden: int, dim: int, seed: int) -> "LayoutEncoder":
        rng = np.random.default_rng(seed)
        V = len(LAYOUT_ALPHABET)
        s = 1.0 / math.sqrt(hidden)
        W = rng.uniform(-s, s, (4 * hidden, V + hidden))
        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = 1.0
        Wo = rng.uniform(-s, s, (dim, hidden))
        bo = np.zeros(dim)
        return cls(W, b, Wo, bo)

    def params(self) -> list[np.ndarray]:
        return [self.W, self.b, self.Wo, self.bo]

    @staticmethod
    def encode_batch(strings: list[str]) -> tuple[np.ndarray, np.ndarray]:
        T = max([len(s) for s in strings] + [1])
        idx = np.zeros((len(strings), T), dtype=int)
        mask = np.zeros((len(strings), T))
        for i, s in enumerate(strings):
            for t, ch in enumerate(s):
                if ch not in _CHAR:
                    parse_forest(s)  # raises a descriptive error
                idx[i, t] = _CHAR[ch]
                mask[i, t] = 1.0
        return idx, mask

    def forward(self, strings: list[str], keep: bool = False):
        idx, mask = self.encode_batch(strings)
        B, T = idx.shape
        H, V = self.hidden, len(LAYOUT_ALPHABET)
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        cache = []
        eye = np.eye(V)
        for t in range(T):
            x = np.concatenate([eye[idx[:, t]], h], axis=1)
            z = x @ self.W.T + self.b
            i = _sigmoid(z[:, :H])
            f = _sigmoid(z[:, H:2 * H])
            g = np.tanh(z[:, 2 * H:3 * H])
            o = _sigmoid(z[:, 3 * H:])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            h_new = o * tc
            m = mask[:, t:t + 1]
            if keep:
                cache.append((x, i, f, g, o, c, tc, m))
            c = m * c_new + (1 - m) * c
            h = m * h_new + (1 - m) * h
        out = h @ self.Wo.T + self.bo
        return (out, (cache, h)) if keep else out

    def backward(self, grad_out: np.ndarray, state) -> list[np.ndarray]:
        cache, h_last = state
        H = self.hidden
        dW = np.zeros_like(self.W)
        db = np.zeros_like(self.b)
        dWo = grad_out.T @ h_last
        dbo = grad_out.sum(axis=0)
        dh = grad_out @ self.Wo
        dc = np.zeros_like(dh)
        for x, i, f, g, o, c_prev, tc, m in reversed(cache):
            # masked steps pass gradients straight through
            dh_step = dh * m
            dc_step = dc * m
            do = dh_step * tc
            dcn = dc_step + dh_step * o * (1 - tc ** 2)
            di = dcn * g
            df = dcn * c_prev
            dg = dcn * i
            dz = np.concatenate([di * i * (1 - i), df * f * (1 - f), dg * (1 - g ** 2), do * o * (1 - o)], axis=1)
            dW += dz.T @ x
            db += dz.sum(axis=0)
            dx = dz @ self.W
            dh = dx[:, len(LAYOUT_ALPHABET):] + dh * (1 - m)
            dc = dcn * f + dc * (1 - m)
        return [dW, db, dWo, dbo]

    def embed(self, s: str) -> np.ndarray:
        parse_forest(s)
        return self.forward([s])[0]

    def save(self, path) -> None:
        weights.save(path, self.kind, self.params())

    @classmethod
    def load(cls, path) -> "LayoutEncoder":
        kind, arrays = weights.load(path)
        if kind != cls.kind:
            raise weights.WeightsFormatError(f"expected {cls.kind} weights, found {kind}")
        return cls(*arrays)


class StructuralLayoutEncoder:
    """Training-free layout features: level counts, fan-out statistics, depth histogram."""

    kind = "layout-structural"

    def __init__(self, dim: int = 32):
        self.dim = dim

    def embed(self, s: str) -> np.ndarray:
        groups = parse_forest(s)
        lines = [ln for g in groups for ln in g.children]
        cols = [c for ln in lines for c in ln.children]
        lpg = [len(g.children) for g in groups] or [0]
        cpl = [len(ln.children) for ln in lines] or [0]
        feats = [len(groups), len(lines), len(cols),
                 float(np.mean(lpg)), max(lpg), float(np.std(lpg)),
                 float(np.mean(cpl)), max(cpl), float(np.std(cpl))]
        feats += [sum(1 for v in lpg if v == k) for k in range(1, 5)]
        feats += [sum(1 for v in cpl if v == k) for k in range(1, 7)]
        feats += [sum(len(ln.children) for ln in g.children) for g in groups[:6]]
        v = np.zeros(self.dim)
        n = min(self.dim, len(feats))
        v[:n] = np.asarray(feats[:n], dtype=float)
        return v


def random_layout_strings(n: int, seed: int, max_groups: int = 4, max_lines: int = 3,
                          max_cols: int = 4) -> list[str]:
    """``n`` distinct random layout strings."""
    rng = _random.Random(seed)
    out, seen = [], set()
    while len(out) < n:
        s = "".join(
            "G{" + "".join("L{" + "C" * rng.randint(1, max_cols) + "}"
                           for _ in range(rng.randint(1, max_lines))) + "}"
            for _ in range(rng.randint(1, max_groups)))
        if s not in seen:
            seen.add(s)
            out.append(s)
    return out


def layout_pairs(strings: list[str]) -> list[tuple[str, str, int]]:
    cache: dict[tuple[str, str], int] = {}
    pairs = []
    for a in strings:
        for b in strings:
            key = (a, b) if a <= b else (b, a)
            if key not in cache:
                cache[key] = tree_edit_distance(a, b)
            pairs.append((a, b, cache[key]))
    return pairs


def split_pairs(pairs: list, seed: int, ratios=(7, 1, 2)) -> tuple[list, list, list]:
    order = np.random.default_rng(seed).permutation(len(pairs))
    total = sum(ratios)
    n_train = len(pairs) * ratios[0] // total
    n_val = len(pairs) * ratios[1] // total
    pick = [pairs[i] for i in order]
    return pick[:n_train], pick[n_train:n_train + n_val], pick[n_train + n_val:]


def _pair_loss_grad(emb: np.ndarray, ia: np.ndarray, ib: np.ndarray, dist: np.ndarray,
                    want_grad: bool = True):
    diff = emb[ia] - emb[ib]
    pred = np.sqrt((diff ** 2).sum(axis=1))
    err = pred - dist
    loss = float(np.mean(err ** 2))
    if not want_grad:
        return loss, None
    coef = (2.0 * err / len(dist) / np.maximum(pred, 1e-12))[:, None] * diff
    g = np.zeros_like(emb)
    np.add.at(g, ia, coef)
    np.add.at(g, ib, -coef)
    return loss, g


def train_layout_encoder(pairs: list[tuple[str, str, float]], dim: int = 32, seed: int = 0,
                         epochs: int = 400, lr: float = 0.01,
                         val_pairs: list | None = None) -> LayoutEncoder:
    """Fit embeddings so that their Euclidean distance regresses the pair distance.

    Full-batch Adam over all strings appearing in ``pairs``; when ``val_pairs``
    are given, the weights with the lowest validation loss are returned.
    """
    if not pairs:
        raise ValueError("cannot train a layout encoder on an empty pair set")
    strings = sorted({s for a, b, _ in list(pairs) + list(val_pairs or []) for s in (a, b)})
    pos = {s: i for i, s in enumerate(strings)}

    def arrays(ps):
        return (np.array([pos[a] for a, _, _ in ps]), np.array([pos[b] for _, b, _ in ps]),
                np.array([float(d) for _, _, d in ps]))

    ia, ib, dist = arrays(pairs)
    enc = LayoutEncoder.init(dim, dim, seed)
    params = enc.params()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    best, best_loss = [p.copy() for p in params], math.inf
    val = arrays(val_pairs) if val_pairs else None
    for step in range(1, epochs + 1):
        emb, state = enc.forward(strings, keep=True)
        loss, g_emb = _pair_loss_grad(emb, ia, ib, dist)
        if not math.isfinite(loss):
            raise FloatingPointError("layout encoder training diverged")
        grads = enc.backward(g_emb, state)
        for k, (p, gk) in enumerate(zip(params, grads)):
            m[k] = beta1 * m[k] + (1 - beta1) * gk
            v[k] = beta2 * v[k] + (1 - beta2) * gk ** 2
            mh = m[k] / (1 - beta1 ** step)
            vh = v[k] / (1 - beta2 ** step)
            p -= lr * mh / (np.sqrt(vh) + eps)
        if val is not None:
            vloss, _ = _pair_loss_grad(enc.forward(strings), *val, want_grad=False)
            if vloss < best_loss:
                best_loss = vloss
                best = [p.copy() for p in params]
    if val is not None:
        enc = LayoutEncoder(*best)
    return enc


def default_layout_encoder(dim: int = 32, seed: int = 0, n_strings: int = 100,
                           epochs: int = 400) -> LayoutEncoder:
    strings = random_layout_strings(n_strings, seed)
    train, val, _ = split_pairs(layout_pairs(strings), seed)
    return train_layout_encoder(train, dim=dim, seed=seed, epochs=epochs, val_pairs=val)


# --- page state and similarity -----------------------------------------------

def page_state(img: Image, encoder, config: EmbeddingConfig = EmbeddingConfig()) -> PageState:
    edges = canny_edges(img, config.canny_low, config.canny_high)
    boxes = extract_widget_boxes(edges, config.min_area_fraction, config.min_side)
    tree = characterize_layout(boxes, img.width, img.height, config.gap_threshold, config.line_overlap)
    text = serialize_tree(tree)
    widgets = tuple(describe_widget(img, b, config) for b in boxes)
    if widgets:
        vecs = np.stack([widget_vector(w) for w in widgets])
        mean = vecs.mean(axis=0)
    else:
        vecs = np.zeros((0, config.widget_dim))
        mean = np.zeros(config.widget_dim)
    layout_vec = encoder.embed(text)
    if layout_vec.shape != (config.d_layout,):
        raise ValueError(f"encoder emits {layout_vec.shape[0]} dims, config expects {config.d_layout}")
    state = np.concatenate([mean, layout_vec])
    return PageState(widgets, tree, text, state, img.width, img.height, vecs)


def widget_similarity(a: PageState, b: PageState, iou_threshold: float = 0.8) -> float:
    pairs = match_widgets(a.boxes, b.boxes, iou_threshold)
    if not pairs:
        return 0.0
    dim = a.widget_vectors.shape[1]
    dists = [min(1.0, float(np.linalg.norm(a.widget_vectors[i] - b.widget_vectors[j])) / math.sqrt(dim))
             for i, j in pairs]
    return 1.0 - sum(dists) / len(dists)


def page_similarity(a: PageState, b: PageState, config: EmbeddingConfig = EmbeddingConfig()) -> float:
    sim_w = widget_similarity(a, b, config.match_iou)
    sim_l = layout_similarity(a.layout_string, b.layout_string)
    return config.widget_weight * sim_w + config.layout_weight * sim_l


def same_page(a: PageState, b: PageState, config: EmbeddingConfig = EmbeddingConfig()) -> bool:
    return page_similarity(a, b, config) >= config.same_page_threshold
