"""Run orchestration, baselines and reporting."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .actions import KINDS, KIND_BY_NAME, MOBILE, PAGE, SWIPE_DIRECTIONS, WEB, WIDGET, WINDOW_RATIOS, \
    INPUT_PAYLOADS, Action, kinds_for
from .agent import AgentConfig, ExplorationMemory, PageCache, PageRegistry, QNetwork, explore
from .embedding import EmbeddingConfig, LayoutEncoder, StructuralLayoutEncoder, default_layout_encoder
from .simenv import SimApp, SimEnvironment, coverage, generate_app
from .vision import WidgetBox

POLICIES = ("dqn", "random", "monkey")


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class AppSpec:
    seed: int = 1
    screens: int = 30
    widgets_min: int = 3
    widgets_max: int = 8
    edge_density: float = 0.3
    crash_rate: float = 0.03
    guard_rate: float = 0.25


@dataclass(frozen=True)
class RunConfig:
    policy: str = "dqn"
    budget: int = 300
    seed: int = 0
    platform: str = MOBILE
    encoder: str = "lstm"
    encoder_seed: int = 0
    encoder_epochs: int = 300
    app: AppSpec = field(default_factory=AppSpec)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)

    def validate(self) -> None:
        problems = []
        if self.policy not in POLICIES:
            problems.append(f"policy: must be one of {POLICIES}, got {self.policy!r}")
        if self.budget < 0:
            problems.append("budget: must be non-negative")
        if self.platform not in (MOBILE, WEB):
            problems.append(f"platform: must be mobile or web, got {self.platform!r}")
        if self.encoder not in ("lstm", "structural"):
            problems.append(f"encoder: must be lstm or structural, got {self.encoder!r}")
        e, a = self.embedding, self.agent
        for name in ("match_iou", "same_page_threshold", "widget_weight", "layout_weight",
                     "gap_threshold", "line_overlap", "min_area_fraction"):
            v = getattr(e, name)
            if not 0 <= v <= 1:
                problems.append(f"embedding.{name}: must lie in [0, 1], got {v}")
        if not 0 <= e.canny_low <= e.canny_high:
            problems.append("embedding.canny_low: must satisfy 0 <= canny_low <= canny_high")
        if not 0 <= a.gamma <= 1:
            problems.append(f"agent.gamma: must lie in [0, 1], got {a.gamma}")
        if a.tau <= 0:
            problems.append("agent.tau: must be positive")
        if a.lr <= 0:
            problems.append("agent.lr: must be positive")
        if a.batch_size < 2 or a.batch_size % 2:
            problems.append("agent.batch_size: must be an even number >= 2")
        for name in ("epochs", "minibatch", "train_interval", "memory_capacity", "hidden", "depth"):
            if getattr(a, name) < 1:
                problems.append(f"agent.{name}: must be >= 1")
        if a.memory_capacity < a.batch_size:
            problems.append("agent.memory_capacity: must hold at least one batch")
        if not 0 <= a.system_weight <= 1:
            problems.append("agent.system_weight: must lie in [0, 1]")
        if self.app.screens < 2:
            problems.append("app.screens: need at least two screens")
        if problems:
            raise ConfigError(problems)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        problems = []

        def build(klass, data, path):
            if data is None:
                return klass()
            if not isinstance(data, dict):
                problems.append(f"{path}: expected an object")
                return klass()
            names = {f.name for f in dataclasses.fields(klass)}
            for k in data:
                if k not in names:
                    problems.append(f"{path}.{k}: unknown field" if path else f"{k}: unknown field")
            kwargs = {k: v for k, v in data.items() if k in names}
            try:
                return klass(**kwargs)
            except (TypeError, ValueError) as exc:
                problems.append(f"{path or 'config'}: {exc}")
                return klass()

        top = {k: v for k, v in d.items() if k not in ("app", "embedding", "agent")}
        nested = {
            "app": build(AppSpec, d.get("app"), "app"),
            "embedding": build(EmbeddingConfig, d.get("embedding"), "embedding"),
            "agent": build(AgentConfig, d.get("agent"), "agent"),
        }
        names = {f.name for f in dataclasses.fields(cls)}
        for k in top:
            if k not in names:
                problems.append(f"{k}: unknown field")
        if problems:
            raise ConfigError(problems)
        cfg = cls(**{k: v for k, v in top.items() if k in names}, **nested)
        cfg.validate()
        return cfg

    def with_overrides(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)


# --- encoders ------------------------------------------------------------------

_ENCODERS: dict[tuple, object] = {}


def get_encoder(kind: str, dim: int, seed: int, epochs: int = 300, cache_dir: str | Path | None = None):
    key = (kind, dim, seed, epochs)
    enc = _ENCODERS.get(key)
    if enc is not None:
        return enc
    if kind == "structural":
        enc = StructuralLayoutEncoder(dim)
    else:
        path = Path(cache_dir) / f"layout-lstm-d{dim}-s{seed}-e{epochs}.bin" if cache_dir else None
        if path is not None and path.exists():
            enc = LayoutEncoder.load(path)
        else:
            enc = default_layout_encoder(dim=dim, seed=seed, epochs=epochs)
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                enc.save(path)
    _ENCODERS[key] = enc
    return enc


_PAGE_CACHES: dict[tuple, PageCache] = {}


def page_cache_for(app: SimApp, encoder, config: EmbeddingConfig) -> PageCache:
    # page states are a pure function of pixels, so sessions on one app share them
    key = (app.digest(), id(encoder), config)
    pc = _PAGE_CACHES.get(key)
    if pc is None:
        if len(_PAGE_CACHES) > 8:
            _PAGE_CACHES.clear()
        pc = _PAGE_CACHES[key] = PageCache(encoder, config)
    return pc


# --- baselines -----------------------------------------------------------------

def random_policy(page, actions: list[Action], rng: np.random.Generator) -> int:
    """Uniform choice among the page's applicable actions."""
    return int(rng.integers(len(actions)))


def monkey_action(width: int, height: int, rng: np.random.Generator, platform: str = MOBILE) -> Action:
    """Blind event: random kind, random screen coordinate for widget kinds."""
    kinds = kinds_for(platform)
    k = kinds[int(rng.integers(len(kinds)))]
    if k.category == WIDGET:
        pt = WidgetBox(int(rng.integers(width)), int(rng.integers(height)), 1, 1)
        payload = int(rng.integers(len(INPUT_PAYLOADS))) if k.name == "input" else None
        return Action(k, target_box=pt, payload=payload)
    if k.name == "swipe":
        return Action(k, parameter=SWIPE_DIRECTIONS[int(rng.integers(2))])
    if k.name == "orientation_switch":
        return Action(k, parameter=float(rng.integers(2)))
    if k.name == "window_size":
        return Action(k, parameter=WINDOW_RATIOS[int(rng.integers(len(WINDOW_RATIOS)))])
    return Action(k)


def run_monkey(env: SimEnvironment, budget: int, seed: int, platform: str = MOBILE) -> list[dict]:
    rng = np.random.default_rng(seed)
    log = []
    screen = env.reset().screen
    for step in range(budget):
        img = env.screenshot()
        action = monkey_action(img.width, img.height, rng, platform)
        outcome = env.execute(action)
        rec_env = {"screen": screen, "next_screen": outcome.screen, "outcome": outcome.kind,
                   "transition": outcome.transition, "crash_id": outcome.crash_id}
        crashed = outcome.kind == "crashed"
        if crashed:
            screen = env.reset().screen
            rec_env["reset_screen"] = screen
        else:
            screen = outcome.screen
        log.append({"step": step, "page_entry_id": None, "is_new_page": None,
                    "action": action.to_record(), "category": action.kind.category,
                    "reward": None, "q_values_summary": None, "crash": crashed, "env": rec_env})
    return log


# --- runs ------------------------------------------------------------------------

def build_app(config: RunConfig, app: SimApp | None = None) -> SimApp:
    if app is not None:
        return app
    s = config.app
    return generate_app(s.seed, s.screens, (s.widgets_min, s.widgets_max), s.edge_density,
                        s.crash_rate, s.guard_rate)


def run(config: RunConfig, app: SimApp | None = None, encoder=None) -> tuple[dict, list[dict], QNetwork | None]:
    """One seeded session; returns (report, log records incl. header, network)."""
    config.validate()
    app = build_app(config, app)
    header = {"header": {"format": "screenrl-log/1", "app_digest": app.digest(), "app_seed": app.seed,
                         "policy": config.policy, "seed": config.seed, "budget": config.budget,
                         "platform": config.platform}}
    env = SimEnvironment(app)
    net = None
    agent_cfg = dataclasses.replace(config.agent, platform=config.platform, seed=config.seed)
    if config.budget == 0:
        records: list[dict] = []
    elif config.policy == "monkey":
        records = run_monkey(env, config.budget, config.seed, config.platform)
    else:
        if encoder is None:
            encoder = get_encoder(config.encoder, config.embedding.d_layout, config.encoder_seed,
                                  config.encoder_epochs)
        pages = page_cache_for(app, encoder, config.embedding)
        reg = PageRegistry(config.embedding)
        mem = ExplorationMemory(agent_cfg.memory_capacity)
        if config.policy == "dqn":
            from .actions import action_dim
            in_dim = config.embedding.state_dim + action_dim(config.embedding.widget_dim)
            net = QNetwork.init(in_dim, agent_cfg.hidden, agent_cfg.depth, seed=config.seed,
                                 scheme=agent_cfg.init)
            records = explore(env, net, reg, mem, config.budget, agent_cfg, pages)
        else:
            records = explore(env, None, reg, mem, config.budget, agent_cfg, pages, policy=random_policy)
    log = [header] + records
    return report_from_log(app, log), log, net


def split_log(log: list[dict]) -> tuple[dict, list[dict]]:
    if log and "header" in log[0]:
        return log[0]["header"], log[1:]
    return {}, list(log)


def report_from_log(app: SimApp, log: list[dict]) -> dict:
    """Summary of an episode log; a pure function of (app, log)."""
    header, records = split_log(log)
    steps = [r for r in records if "action" in r]
    cov = coverage(app, steps, header.get("app_digest"))
    entry_ids = {r["page_entry_id"] for r in steps if r.get("page_entry_id") is not None}
    entry_ids |= {r["next_entry_id"] for r in steps if r.get("next_entry_id") is not None}
    rewards = [r["reward"] for r in steps if r.get("reward") is not None]
    crash_steps = [{"step": r["step"], "crash_id": r["env"]["crash_id"]} for r in steps if r.get("crash")]
    return {
        "format": "screenrl-report/1",
        "app_digest": app.digest(),
        "policy": header.get("policy"),
        "seed": header.get("seed"),
        "steps": len(steps),
        "aborted": any(r.get("aborted") for r in records),
        "screens_total": len(app.screens),
        "transitions_total": len(app.transitions),
        "crashes_total": len(app.crashes),
        "screen_coverage": cov["screen_coverage"],
        "transition_coverage": cov["transition_coverage"],
        "screens_visited": cov["screens_visited"],
        "transitions_fired": cov["transitions_fired"],
        "crashes_found": cov["crashes"],
        "crash_events": crash_steps,
        "curves": {"screen": cov["screen_curve"], "transition": cov["transition_curve"],
                   "crashes": cov["crash_curve"]},
        "action_distribution": action_distribution(steps) if steps else {},
        "registry": {"pages": len(entry_ids),
                     "new_pages": sum(1 for r in steps if r.get("is_new_page")),
                     "mean_reward": float(np.mean(rewards)) if rewards else None},
    }


def dump_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def dump_log(log: list[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in log)


def read_log(path: str | Path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


# --- metrics ----------------------------------------------------------------------

class UniverseMismatch(ValueError):
    pass


def _check_universe(a, b, universe):
    if universe is not None:
        extra = (set(a) | set(b)) - set(universe)
        if extra:
            raise UniverseMismatch(f"items {sorted(extra)[:5]} are outside the coverage universe")


def cross_coverage(a, b, universe=None) -> float:
    """Fraction of ``a``'s covered items that ``b`` does not cover."""
    _check_universe(a, b, universe)
    a, b = set(a), set(b)
    if not a:
        return 0.0
    return len(a - b) / len(a)


def intersection_coverage(a, b, universe=None) -> int:
    _check_universe(a, b, universe)
    return len(set(a) & set(b))


def action_distribution(records: list[dict]) -> dict[str, float]:
    """Percentage of steps per action kind, in taxonomy order."""
    kinds = [r["action"]["kind"] for r in records if "action" in r]
    if not kinds:
        raise ValueError("action distribution of an empty log")
    counts = {k.name: 0 for k in KINDS}
    for k in kinds:
        counts[k] += 1
    return {k: 100.0 * v / len(kinds) for k, v in counts.items() if v}


def uniformity_pvalue(counts) -> float:
    return float(stats.chisquare(np.asarray(counts, dtype=float)).pvalue)


def paired_wilcoxon(x, y) -> float:
    """One-sided p-value that ``x`` tends to exceed ``y``."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if np.allclose(x, y):
        return 1.0
    return float(stats.wilcoxon(x, y, alternative="greater").pvalue)


# --- benchmark ---------------------------------------------------------------------

@dataclass(frozen=True)
class BenchSuite:
    app_seeds: tuple[int, ...] = tuple(range(1, 21))
    repetitions: int = 5
    policies: tuple[str, ...] = ("dqn", "random")
    base: RunConfig = field(default_factory=lambda: RunConfig(agent=AgentConfig(hidden=16)))

    @classmethod
    def from_dict(cls, d: dict) -> "BenchSuite":
        base = RunConfig.from_dict(d.get("base", {"agent": {"hidden": 16}}))
        return cls(tuple(d.get("app_seeds", range(1, 21))), int(d.get("repetitions", 5)),
                   tuple(d.get("policies", ("dqn", "random"))), base)


def bench(suite: BenchSuite, progress=None) -> tuple[list[dict], dict]:
    """Every (app, policy, repetition) run; returns per-run rows and a summary."""
    base = suite.base
    encoder = None
    if any(p != "monkey" for p in suite.policies):
        encoder = get_encoder(base.encoder, base.embedding.d_layout, base.encoder_seed, base.encoder_epochs)
    rows = []
    for app_seed in suite.app_seeds:
        app = build_app(dataclasses.replace(base, app=dataclasses.replace(base.app, seed=app_seed)))
        for policy in suite.policies:
            for rep in range(suite.repetitions):
                cfg = dataclasses.replace(base, policy=policy, seed=1000 * app_seed + rep)
                report, _, _ = run(cfg, app, encoder)
                rows.append({"app_seed": app_seed, "policy": policy, "rep": rep,
                             "screen_coverage": report["screen_coverage"],
                             "transition_coverage": report["transition_coverage"],
                             "crashes": len(report["crashes_found"]),
                             "crash_ids": report["crashes_found"],
                             "click_share": report["action_distribution"].get("click", 0.0)})
                if progress:
                    progress(rows[-1])
    return rows, summarize(rows, suite.policies)


def summarize(rows: list[dict], policies) -> dict:
    per_app: dict[str, dict[int, float]] = {p: {} for p in policies}
    crashes: dict[str, set] = {p: set() for p in policies}
    for p in policies:
        apps = sorted({r["app_seed"] for r in rows if r["policy"] == p})
        for a in apps:
            vals = [r["screen_coverage"] for r in rows if r["policy"] == p and r["app_seed"] == a]
            per_app[p][a] = float(np.median(vals))
            for r in rows:
                if r["policy"] == p and r["app_seed"] == a:
                    crashes[p] |= {(a, c) for c in r["crash_ids"]}
    out = {"policies": {}}
    for p in policies:
        vals = list(per_app[p].values())
        out["policies"][p] = {"median_screen_coverage": float(np.median(vals)) if vals else 0.0,
                              "distinct_crashes": len(crashes[p])}
    if "dqn" in policies and "random" in policies:
        apps = sorted(set(per_app["dqn"]) & set(per_app["random"]))
        x = [per_app["dqn"][a] for a in apps]
        y = [per_app["random"][a] for a in apps]
        md, mr = float(np.median(x)), float(np.median(y))
        out["dqn_vs_random"] = {
            "relative_gain": (md - mr) / mr if mr > 0 else math.inf,
            "wilcoxon_p": paired_wilcoxon(x, y) if len(apps) > 1 else 1.0,
            "apps": len(apps),
        }
    return out
