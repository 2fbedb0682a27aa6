"""Deterministic simulated GUI apps.

A :class:`SimApp` is a seeded screen graph. Screens hold typed widgets that
the renderer draws as grayscale pixels; actions are resolved back onto the
ground-truth widgets by hit-testing, so the exploring agent only ever sees
pixels. Coverage is measured against the app's ground truth.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .actions import Action, KIND_BY_NAME
from .embedding import WIDGET_TYPES, TYPE_ID
from .vision import Image, WidgetBox, iou

MARGIN = 8
MIN_GAP = 8

# (min w, max w, min h, max h) at the 320x480 base resolution; None width = full row
_SIZES = {
    "Button": (70, 140, 28, 40),
    "TextView": (100, 220, 20, 30),
    "EditText": (120, 240, 30, 40),
    "CheckBox": (18, 24, None, None),
    "ImageButton": (36, 48, None, None),
    "ImageView": (80, 160, 60, 110),
    "RadioButton": (18, 24, None, None),
    "Switch": (40, 52, 20, 26),
    "SeekBar": (120, 240, 13, 16),
    "ProgressBar": (120, 240, 10, 12),
    "Spinner": (100, 180, 30, 38),
    "Toolbar": (None, None, 40, 50),
    "ListItem": (None, None, 44, 60),
    "Icon": (24, 34, None, None),
}

# what a generated transition may be bound to, per widget type
NAV_TYPES = ("Button", "ImageButton", "ListItem", "Icon", "Spinner")
GUARDS = ("input", "permission", "offline")


class GenerationError(ValueError):
    pass


class EnvironmentCrashed(RuntimeError):
    pass


@dataclass(frozen=True)
class SimWidget:
    box: WidgetBox
    type_name: str
    style: int


@dataclass(frozen=True)
class Screen:
    id: int
    widgets: tuple[SimWidget, ...]
    background: int


@dataclass(frozen=True)
class Trigger:
    kind: str
    slot: int | None = None
    bucket: float | None = None

    def key(self) -> tuple:
        return (self.kind, -1 if self.slot is None else self.slot,
                0.0 if self.bucket is None else float(self.bucket))


@dataclass(frozen=True)
class Transition:
    source: int
    trigger: Trigger
    target: int
    guard: str | None = None


@dataclass(frozen=True)
class SimApp:
    seed: int
    width: int
    height: int
    screens: tuple[Screen, ...]
    start: int
    transitions: tuple[Transition, ...]
    crashes: tuple[tuple[int, Trigger], ...]
    _index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        idx = {(t.source, t.trigger.key()): k for k, t in enumerate(self.transitions)}
        crash_idx = {(s, trig.key()): k for k, (s, trig) in enumerate(self.crashes)}
        object.__setattr__(self, "_index", (idx, crash_idx))

    def transition_for(self, screen: int, trig: Trigger) -> int | None:
        return self._index[0].get((screen, trig.key()))

    def crash_for(self, screen: int, trig: Trigger) -> int | None:
        return self._index[1].get((screen, trig.key()))

    def reachable(self) -> set[int]:
        seen = {self.start}
        stack = [self.start]
        while stack:
            s = stack.pop()
            for t in self.transitions:
                if t.source == s and t.target not in seen:
                    seen.add(t.target)
                    stack.append(t.target)
        return seen

    # canonical JSON ------------------------------------------------------
    def to_dict(self) -> dict:
        def trig(t: Trigger):
            return {"kind": t.kind, "slot": t.slot, "bucket": t.bucket}

        return {
            "format": "screenrl-app/1",
            "seed": self.seed,
            "width": self.width,
            "height": self.height,
            "start": self.start,
            "screens": [
                {"id": s.id, "background": s.background,
                 "widgets": [{"x": w.box.x, "y": w.box.y, "w": w.box.w, "h": w.box.h,
                              "type": w.type_name, "style": w.style} for w in s.widgets]}
                for s in self.screens
            ],
            "transitions": [{"source": t.source, "trigger": trig(t.trigger),
                             "target": t.target, "guard": t.guard} for t in self.transitions],
            "crashes": [{"screen": s, "trigger": trig(t)} for s, t in self.crashes],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "SimApp":
        def trig(t):
            return Trigger(t["kind"], t["slot"], t["bucket"])

        screens = tuple(
            Screen(s["id"], tuple(SimWidget(WidgetBox(w["x"], w["y"], w["w"], w["h"]), w["type"], w["style"])
                                  for w in s["widgets"]), s["background"])
            for s in d["screens"])
        return cls(
            seed=d["seed"], width=d["width"], height=d["height"], screens=screens, start=d["start"],
            transitions=tuple(Transition(t["source"], trig(t["trigger"]), t["target"], t["guard"])
                              for t in d["transitions"]),
            crashes=tuple((c["screen"], trig(c["trigger"])) for c in d["crashes"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "SimApp":
        return cls.from_dict(json.loads(Path(path).read_text()))


# --- generation --------------------------------------------------------------

def _draw_size(rng, type_name: str, width: int) -> tuple[int, int]:
    wmin, wmax, hmin, hmax = _SIZES[type_name]
    if wmin is None:
        w = width - 2 * MARGIN
    else:
        w = int(rng.integers(wmin, wmax + 1))
    h = w if hmin is None else int(rng.integers(hmin, hmax + 1))
    return w, h


def _layout_screen(rng, sid: int, n_widgets: int, width: int, height: int,
                   need_nav: int) -> Screen:
    """Place widgets in rows, top to bottom, never overlapping."""
    types = []
    if rng.random() < 0.4:
        types.append("Toolbar")
    body = [t for t in WIDGET_TYPES if t != "Toolbar"]
    for _ in range(need_nav):
        types.append(str(rng.choice(NAV_TYPES)))
    while len(types) < n_widgets:
        types.append(str(rng.choice(body)))
    head, rest = types[:1] if types[0] == "Toolbar" else [], types[1:] if types[0] == "Toolbar" else types
    rest = [rest[i] for i in rng.permutation(len(rest))]
    types = head + rest

    widgets = []
    y = MARGIN
    i = 0
    while i < len(types):
        t = types[i]
        w, h = _draw_size(rng, t, width)
        row = [(t, w, h)]
        used = w
        i += 1
        # pack further narrow widgets into the same row
        while i < len(types) and _SIZES[types[i]][0] is not None and t not in ("Toolbar", "ListItem"):
            w2, h2 = _draw_size(rng, types[i], width)
            if used + MIN_GAP * 2 + w2 > width - 2 * MARGIN or rng.random() < 0.35:
                break
            row.append((types[i], w2, h2))
            used += MIN_GAP * 2 + w2
            i += 1
        row_h = max(h for _, _, h in row)
        if y + row_h > height - MARGIN:
            raise GenerationError(f"screen {sid}: {len(types)} widgets do not fit on {width}x{height}")
        slack = width - 2 * MARGIN - used
        if slack < 0:
            raise GenerationError(f"screen {sid}: a {t} does not fit across {width} px")
        x = MARGIN + int(rng.integers(0, slack + 1)) // 2 if len(row) == 1 else MARGIN
        gap = MIN_GAP * 2 + (slack // (len(row) - 1) if len(row) > 1 else 0)
        for t, w, h in row:
            yy = y + (row_h - h) // 2
            widgets.append(SimWidget(WidgetBox(x, yy, w, h), t, int(rng.integers(0, 2 ** 16))))
            x += w + gap
        # small gaps keep rows in one group, large gaps open a new group
        y += row_h + int(rng.choice([MIN_GAP, MIN_GAP + 4, 40, 56]))
    background = int(rng.integers(225, 246))
    return Screen(sid, tuple(widgets), background)


def _triggers_for(widget: SimWidget, slot: int) -> list[Trigger]:
    from .actions import WIDGET_KINDS_FOR_TYPE
    kinds = WIDGET_KINDS_FOR_TYPE.get(widget.type_name, ())
    return [Trigger(k, slot, None) for k in kinds]


def generate_app(seed: int, n_screens: int = 30, widgets_per_screen: tuple[int, int] = (3, 8),
                 edge_density: float = 0.3, crash_rate: float = 0.03, guard_rate: float = 0.25,
                 width: int = 320, height: int = 480) -> SimApp:
    """Seeded random app: a deep spanning tree of navigation plus extra edges.

    Every screen except the start hangs below one of the three most recently
    created screens, so some screens sit at the end of long action chains.
    A fraction ``guard_rate`` of tree edges only fire after a precondition
    (text entered on the source screen, permission granted, network off).
    """
    if n_screens < 2:
        raise GenerationError("need at least two screens")
    lo, hi = widgets_per_screen
    if not 1 <= lo <= hi:
        raise GenerationError("invalid widgets_per_screen range")
    if not (0 <= edge_density <= 1 and 0 <= crash_rate <= 1 and 0 <= guard_rate <= 1):
        raise GenerationError("rates must lie in [0, 1]")
    rng = np.random.default_rng(seed)

    parents = [-1] + [int(rng.integers(max(0, i - 3), i)) for i in range(1, n_screens)]
    n_children = [parents.count(i) for i in range(n_screens)]

    screens = []
    for sid in range(n_screens):
        need = n_children[sid] + 1
        n = max(int(rng.integers(lo, hi + 1)), need)
        for attempt in range(20):
            try:
                screens.append(_layout_screen(rng, sid, max(need, n - attempt), width, height, need))
                break
            except GenerationError:
                continue
        else:
            raise GenerationError(f"screen {sid}: widget packing infeasible on {width}x{height}")

    free: dict[int, list[Trigger]] = {}
    for s in screens:
        trigs = []
        for slot, w in enumerate(s.widgets):
            trigs.extend(_triggers_for(w, slot))
        free[s.id] = trigs

    def take_nav(sid: int) -> Trigger | None:
        cands = [t for t in free[sid] if t.kind == "click"
                 and screens[sid].widgets[t.slot].type_name in NAV_TYPES]
        if not cands:
            return None
        t = cands[int(rng.integers(len(cands)))]
        free[sid].remove(t)
        return t

    transitions = []
    for child in range(1, n_screens):
        p = parents[child]
        trig = take_nav(p)
        if trig is None:
            trig = Trigger("swipe", None, 1.0 if rng.random() < 0.5 else -1.0)
        guard = None
        if rng.random() < guard_rate:
            has_input = any(w.type_name == "EditText" for w in screens[p].widgets)
            options = [g for g in GUARDS if g != "input" or has_input]
            guard = options[int(rng.integers(len(options)))]
        transitions.append(Transition(p, trig, child, guard))

    used = {(t.source, t.trigger.key()) for t in transitions}
    for _ in range(int(round(edge_density * n_screens))):
        src = int(rng.integers(n_screens))
        dst = int(rng.integers(n_screens))
        if src == dst:
            continue
        trig = take_nav(src)
        if trig is None:
            trig = Trigger("swipe", None, 1.0 if rng.random() < 0.5 else -1.0)
        if (src, trig.key()) in used:
            continue
        used.add((src, trig.key()))
        transitions.append(Transition(src, trig, dst, None))

    crashes = []
    for s in screens:
        for trig in free[s.id]:
            if (s.id, trig.key()) not in used and rng.random() < crash_rate:
                crashes.append((s.id, trig))

    return SimApp(seed=seed, width=width, height=height, screens=tuple(screens), start=0,
                  transitions=tuple(transitions), crashes=tuple(crashes))


# --- rendering ---------------------------------------------------------------

def scaled_boxes(app: SimApp, screen_id: int, width: int, height: int) -> list[WidgetBox]:
    sx, sy = width / app.width, height / app.height
    out = []
    for w in app.screens[screen_id].widgets:
        b = w.box
        x0, y0 = int(round(b.x * sx)), int(round(b.y * sy))
        x1, y1 = int(round(b.x2 * sx)), int(round(b.y2 * sy))
        out.append(WidgetBox(x0, y0, max(1, x1 - x0), max(1, y1 - y0)))
    return out


def _draw_widget(canvas: np.ndarray, box: WidgetBox, type_name: str, style: int) -> None:
    rs = np.random.default_rng(style)
    fill = int(rs.integers(70, 141))
    d = int(rs.integers(11, 16))  # motif contrast, kept below the edge detector's low threshold
    x, y, w, h = box.as_tuple()
    p = canvas[y:y + h, x:x + w]
    p[:] = fill

    def ring():
        p[:2, :] = fill - d
        p[-2:, :] = fill - d
        p[:, :2] = fill - d
        p[:, -2:] = fill - d

    if type_name == "Button":
        ring()
        bh = max(2, h // 6)
        bw = max(4, w // 2)
        cy, cx = h // 2, w // 2
        p[cy - bh // 2:cy - bh // 2 + bh, cx - bw // 2:cx - bw // 2 + bw] = fill + d
    elif type_name == "TextView":
        sh = max(2, h // 6)
        lines = 1 if h < 26 else 2
        for k in range(lines):
            top = 4 + k * (sh + 4)
            ln = int(w * rs.uniform(0.45, 0.8))
            p[top:top + sh, 4:4 + ln] = fill - d
    elif type_name == "EditText":
        p[h - 6:h - 4, 4:w - 4] = fill - d
    elif type_name == "CheckBox":
        ring()
        for k in range(4, min(w, h) - 4):
            p[k, k] = fill + d
            p[k, min(w - 1, k + 1)] = fill + d
    elif type_name == "RadioButton":
        yy, xx = np.mgrid[0:h, 0:w]
        r = min(w, h) / 2 - 4
        disc = (yy - (h - 1) / 2) ** 2 + (xx - (w - 1) / 2) ** 2 <= r * r
        p[disc] = fill + d
    elif type_name == "ImageButton":
        ring()
        s = max(4, min(w, h) // 3)
        p[(h - s) // 2:(h - s) // 2 + s, (w - s) // 2:(w - s) // 2 + s] = fill + d
    elif type_name == "ImageView":
        yy, xx = np.mgrid[0:h, 0:w]
        period = int(rs.integers(6, 10))
        checker = ((yy // period) + (xx // period)) % 2 == 1
        p[checker] = fill + d // 2
        p[~checker] = fill - d // 2
    elif type_name == "Switch":
        tw = w // 2
        if rs.random() < 0.5:
            p[3:h - 3, 3:tw] = fill - d
        else:
            p[3:h - 3, w - tw:w - 3] = fill - d
    elif type_name == "SeekBar":
        pos = int(rs.uniform(0.2, 0.8) * w)
        p[3:h - 3, max(3, pos - 4):min(w - 3, pos + 4)] = fill + d
    elif type_name == "ProgressBar":
        pos = int(rs.uniform(0.2, 0.8) * w)
        p[2:h - 2, 3:pos] = fill + d
    elif type_name == "Spinner":
        ring()
        cx, cy = w - 12, h // 2
        for k in range(5):
            p[cy - 2 + k, cx - (4 - k):cx + (4 - k) + 1] = fill - d
    elif type_name == "Toolbar":
        p[h // 2 - 2:h // 2 + 2, 8:8 + min(w // 3, w - 16)] = fill + d
    elif type_name == "ListItem":
        s = max(4, h - 16)
        p[8:8 + s, 8:8 + s] = fill + d
        p[h // 2 - 2:h // 2 + 2, s + 16:min(w - 8, s + 16 + w // 2)] = fill - d
    elif type_name == "Icon":
        c = min(w, h) // 2
        p[c - 1:c + 1, 4:w - 4] = fill + d
        p[4:h - 4, c - 1:c + 1] = fill + d
    else:
        raise ValueError(f"unknown widget type {type_name}")


def render(app: SimApp, screen_id: int, width: int | None = None, height: int | None = None) -> Image:
    width = app.width if width is None else width
    height = app.height if height is None else height
    screen = app.screens[screen_id]
    canvas = np.full((height, width), screen.background, dtype=np.int16)
    for w, box in zip(screen.widgets, scaled_boxes(app, screen_id, width, height)):
        _draw_widget(canvas, box, w.type_name, w.style)
    return Image(np.clip(canvas, 0, 255).astype(np.uint8))


def ground_truth(app: SimApp, screen_id: int, width: int | None = None,
                 height: int | None = None) -> list[tuple[WidgetBox, str]]:
    width = app.width if width is None else width
    height = app.height if height is None else height
    boxes = scaled_boxes(app, screen_id, width, height)
    return [(b, w.type_name) for b, w in zip(boxes, app.screens[screen_id].widgets)]


# --- runtime -----------------------------------------------------------------

@dataclass(frozen=True)
class StepOutcome:
    kind: str  # moved | stayed | crashed | reset
    screen: int
    crash_id: int | None = None
    transition: int | None = None


class SimEnvironment:
    """Mutable single-session runtime over an immutable :class:`SimApp`."""

    HIT_IOU = 0.5

    def __init__(self, app: SimApp):
        self.app = app
        self._render_cache: dict[tuple[int, int, int], Image] = {}
        self.reset()

    def reset(self) -> StepOutcome:
        self.screen = self.app.start
        self.stack: list[int] = []
        self.landscape = False
        self.ratio = 1.0
        self.permission = False
        self.network = True
        self.inputs: set[int] = set()
        self.crashed = False
        return StepOutcome("reset", self.screen)

    @property
    def size(self) -> tuple[int, int]:
        w, h = self.app.width, self.app.height
        if self.landscape:
            w, h = h, w
        return int(round(w * self.ratio)), int(round(h * self.ratio))

    def screenshot(self) -> Image:
        w, h = self.size
        key = (self.screen, w, h)
        img = self._render_cache.get(key)
        if img is None:
            img = self._render_cache[key] = render(self.app, self.screen, w, h)
        return img

    def hit_test(self, target: WidgetBox) -> int | None:
        boxes = scaled_boxes(self.app, self.screen, *self.size)
        if target.w == 1 and target.h == 1:
            for slot, b in enumerate(boxes):
                if b.x <= target.x < b.x2 and b.y <= target.y < b.y2:
                    return slot
            return None
        best, best_iou = None, self.HIT_IOU
        for slot, b in enumerate(boxes):
            v = iou(target, b)
            if v > best_iou:
                best, best_iou = slot, v
        return best

    def _move(self, target: int, transition: int | None, push: bool = True) -> StepOutcome:
        if push:
            self.stack.append(self.screen)
        self.screen = target
        self.inputs = set()
        return StepOutcome("moved", target, transition=transition)

    def execute(self, action: Action) -> StepOutcome:
        if self.crashed:
            raise EnvironmentCrashed("app crashed; reset() before the next action")
        if not 0 <= self.screen < len(self.app.screens):
            raise ValueError(f"invalid screen id {self.screen}")
        kind = action.kind.name
        stay = StepOutcome("stayed", self.screen)

        if action.kind.category == "widget":
            if action.target_box is None:
                return stay
            slot = self.hit_test(action.target_box)
            if slot is None:
                return stay
            trig = Trigger(kind, slot, None)
        elif kind == "swipe":
            trig = Trigger(kind, None, float(action.parameter))
        else:
            trig = Trigger(kind, None, None)

        crash = self.app.crash_for(self.screen, trig)
        if crash is not None:
            self.crashed = True
            return StepOutcome("crashed", self.screen, crash_id=crash)

        if kind == "return":
            if not self.stack:
                return stay
            return self._move(self.stack.pop(), None, push=False)
        if kind == "orientation_switch":
            self.landscape = bool(action.parameter)
            return stay
        if kind == "window_size":
            self.ratio = float(action.parameter)
            return stay
        if kind == "access_grant":
            self.permission = True
            return stay
        if kind == "access_deny":
            self.permission = False
            return stay
        if kind == "network_switch":
            self.network = not self.network
            return stay
        if kind == "input" and trig.slot is not None:
            self.inputs.add(trig.slot)

        k = self.app.transition_for(self.screen, trig)
        if k is None:
            return stay
        t = self.app.transitions[k]
        if t.guard == "input" and not self.inputs:
            return stay
        if t.guard == "permission" and not self.permission:
            return stay
        if t.guard == "offline" and self.network:
            return stay
        return self._move(t.target, k)


# --- coverage ----------------------------------------------------------------

class CoverageMismatch(ValueError):
    pass


def coverage(app: SimApp, records: list[dict], app_digest: str | None = None) -> dict:
    """Ground-truth coverage of an episode log.

    ``records`` are step records carrying an ``env`` entry with the screen
    before and after the step, the fired transition and any crash id.
    """
    if app_digest is not None and app_digest != app.digest():
        raise CoverageMismatch(f"log was recorded against app {app_digest}, not {app.digest()}")
    n_screens = len(app.screens)
    n_trans = len(app.transitions)
    screens: set[int] = set()
    trans: set[int] = set()
    crashes: set[int] = set()
    screen_curve, trans_curve, crash_curve = [], [], []
    for r in records:
        env = r.get("env") or {}
        for key in ("screen", "next_screen"):
            s = env.get(key)
            if s is not None:
                if not 0 <= s < n_screens:
                    raise CoverageMismatch(f"screen {s} not in app")
                screens.add(s)
        t = env.get("transition")
        if t is not None:
            if not 0 <= t < n_trans:
                raise CoverageMismatch(f"transition {t} not in app")
            trans.add(t)
        c = env.get("crash_id")
        if c is not None:
            if not 0 <= c < len(app.crashes):
                raise CoverageMismatch(f"crash {c} not in app")
            crashes.add(c)
        screen_curve.append(len(screens) / n_screens)
        trans_curve.append(len(trans) / n_trans if n_trans else 0.0)
        crash_curve.append(len(crashes))
    return {
        "screen_coverage": len(screens) / n_screens if records else 0.0,
        "transition_coverage": (len(trans) / n_trans if n_trans else 0.0) if records else 0.0,
        "crashes": sorted(crashes),
        "screens_visited": sorted(screens),
        "transitions_fired": sorted(trans),
        "screen_curve": screen_curve,
        "transition_curve": trans_curve,
        "crash_curve": crash_curve,
    }
