"""The 17-kind action taxonomy, per-page applicability and action embedding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import PageState, widget_vector
from .vision import WidgetBox

MOBILE, WEB = "mobile", "web"
WIDGET, PAGE, SYSTEM = "widget", "page", "system"


@dataclass(frozen=True)
class ActionKind:
    id: int
    name: str
    category: str
    platforms: tuple[str, ...]


_TABLE = [
    ("click", WIDGET, (MOBILE, WEB)),
    ("input", WIDGET, (MOBILE, WEB)),
    ("drag", WIDGET, (MOBILE, WEB)),
    ("double_click", WIDGET, (MOBILE, WEB)),
    ("long_click", WIDGET, (MOBILE,)),
    ("mid_click", WIDGET, (WEB,)),
    ("right_click", WIDGET, (WEB,)),
    ("swipe", PAGE, (MOBILE, WEB)),
    ("split_screen", PAGE, (MOBILE, WEB)),
    ("orientation_switch", PAGE, (MOBILE,)),
    ("window_size", PAGE, (WEB,)),
    ("return", SYSTEM, (MOBILE, WEB)),
    ("back_switch", SYSTEM, (MOBILE, WEB)),
    ("access_grant", SYSTEM, (MOBILE, WEB)),
    ("access_deny", SYSTEM, (MOBILE, WEB)),
    ("network_switch", SYSTEM, (MOBILE, WEB)),
    ("phone_interrupt", SYSTEM, (MOBILE,)),
]
KINDS = tuple(ActionKind(i, n, c, p) for i, (n, c, p) in enumerate(_TABLE))
KIND_BY_NAME = {k.name: k for k in KINDS}
N_KINDS = len(KINDS)

CLICKABLE = ("Button", "ImageButton", "CheckBox", "RadioButton", "Switch", "ListItem", "Icon", "Spinner")
# widget type -> widget action kinds, before platform filtering
APPLICABILITY = {t: [] for t in (
    "Button", "TextView", "EditText", "CheckBox", "ImageButton", "ImageView", "RadioButton",
    "Switch", "SeekBar", "ProgressBar", "Spinner", "Toolbar", "ListItem", "Icon")}
for _t in CLICKABLE:
    APPLICABILITY[_t] += ["click", "double_click", "long_click", "mid_click", "right_click"]
APPLICABILITY["EditText"].append("input")
APPLICABILITY["SeekBar"].append("drag")
APPLICABILITY["ImageView"].append("drag")
for _t in APPLICABILITY:
    APPLICABILITY[_t].sort(key=lambda n: KIND_BY_NAME[n].id)
WIDGET_KINDS_FOR_TYPE = {t: tuple(v) for t, v in APPLICABILITY.items()}

INPUT_PAYLOADS = (
    "", "abc", "The quick brown fox jumps over the lazy dog", "12345",
    "user@example.com", "üñîçødé", "   ", "x" * 512,
)
SWIPE_DIRECTIONS = (1.0, -1.0)
WINDOW_RATIOS = (0.75, 1.0, 1.25)


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    target: int | None = None
    target_box: WidgetBox | None = None
    parameter: float | None = None
    payload: int | None = None

    def __post_init__(self):
        if (self.kind.category == WIDGET) != (self.target is not None or self.target_box is not None):
            raise ValueError(f"{self.kind.name}: widget actions need a target, others must not have one")

    @property
    def identity(self) -> tuple:
        return (self.kind.id, self.target, self.parameter, self.payload)

    def to_record(self) -> dict:
        param = self.parameter
        if self.kind.name == "input":
            param = self.payload
        rec = {"kind": self.kind.name, "target": self.target, "parameter": param}
        if self.target_box is not None and self.target is None:
            rec["point"] = [self.target_box.x, self.target_box.y]
        return rec


def kinds_for(platform: str) -> list[ActionKind]:
    if platform not in (MOBILE, WEB):
        raise ValueError(f"unknown platform {platform!r}")
    return [k for k in KINDS if platform in k.platforms]


def applicable_actions(page: PageState, platform: str = MOBILE,
                       applicability: dict | None = None) -> list[Action]:
    """Widget actions by (widget index, kind id), then page, then system actions."""
    allowed = {k.name for k in kinds_for(platform)}
    matrix = applicability or WIDGET_KINDS_FOR_TYPE
    out = []
    for i, w in enumerate(page.widgets):
        for name in sorted(matrix.get(w.type_name, ()), key=lambda n: KIND_BY_NAME[n].id):
            if name not in allowed:
                continue
            payload = i % len(INPUT_PAYLOADS) if name == "input" else None
            out.append(Action(KIND_BY_NAME[name], i, w.box, payload=payload))
    landscape = page.width > page.height
    for k in kinds_for(platform):
        if k.category != PAGE:
            continue
        if k.name == "swipe":
            out.extend(Action(k, parameter=d) for d in SWIPE_DIRECTIONS)
        elif k.name == "orientation_switch":
            out.append(Action(k, parameter=0.0 if landscape else 1.0))
        elif k.name == "window_size":
            out.extend(Action(k, parameter=r) for r in WINDOW_RATIOS)
        else:
            out.append(Action(k))
    out.extend(Action(k) for k in kinds_for(platform) if k.category == SYSTEM)
    return out


def action_dim(widget_dim: int) -> int:
    return N_KINDS + widget_dim + 1


def embed_action(a: Action, page: PageState) -> np.ndarray:
    wdim = page.widget_vectors.shape[1] if page.widget_vectors is not None else 0
    v = np.zeros(action_dim(wdim))
    v[a.kind.id] = 1.0
    if a.target is not None:
        if not 0 <= a.target < len(page.widgets):
            raise IndexError(f"target widget {a.target} out of range for a page with {len(page.widgets)} widgets")
        v[N_KINDS:N_KINDS + wdim] = widget_vector(page.widgets[a.target])
    if a.kind.name == "input" and a.payload is not None:
        v[-1] = a.payload / (len(INPUT_PAYLOADS) - 1)
    elif a.parameter is not None:
        v[-1] = a.parameter
    return v


def taxonomy_config() -> dict:
    return {
        "kinds": [{"id": k.id, "name": k.name, "category": k.category, "platforms": list(k.platforms)}
                  for k in KINDS],
        "applicability": {t: list(v) for t, v in WIDGET_KINDS_FOR_TYPE.items()},
        "input_payloads": len(INPUT_PAYLOADS),
    }
