"""Curiosity-rewarded deep-Q exploration.

The reward favours transitions into pages whose actions are mostly unexplored,
discounted by how often the source page has been reached. A fully connected
Q-network scores <state, action> pairs; actions are drawn from a Boltzmann
distribution over category-weighted Q-values.
"""

from __future__ import annotations

import hashlib
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from . import weights
from .actions import SYSTEM, Action, applicable_actions, embed_action
from .embedding import EmbeddingConfig, PageState, page_state, widget_similarity
from .layout import count_nodes, layout_similarity
from .vision import Image


class TrainingDiverged(FloatingPointError):
    pass


class InsufficientMemory(ValueError):
    pass


# --- reward ------------------------------------------------------------------

def reward(m_next: int, n_next: int, N: int) -> float:
    """(1 - n/m) / sqrt(N): unexplored destination, rarely reached source."""
    if m_next < 1:
        raise ValueError("a page must offer at least one action")
    if not 0 <= n_next <= m_next:
        raise ValueError(f"executed count {n_next} outside [0, {m_next}]")
    if N < 1:
        raise ValueError("transition count must be at least 1")
    return (1.0 - n_next / m_next) / math.sqrt(N)


# --- page registry -----------------------------------------------------------

@dataclass
class RegistryEntry:
    page: PageState
    N: int
    applicable: frozenset
    executed: set = field(default_factory=set)

    @property
    def m(self) -> int:
        return len(self.applicable)

    @property
    def n(self) -> int:
        return len(self.executed)


class PageRegistry:
    """Distinct pages seen so far, matched by page similarity."""

    def __init__(self, config: EmbeddingConfig = EmbeddingConfig()):
        self.config = config
        self.entries: list[RegistryEntry] = []
        self._sim_cache: dict[tuple[int, int], float] = {}

    def __len__(self) -> int:
        return len(self.entries)

    def similarity(self, a: PageState, b: PageState) -> float:
        key = (id(a), id(b))
        if key in self._sim_cache:
            return self._sim_cache[key]
        cfg = self.config
        sim_w = widget_similarity(a, b, cfg.match_iou)
        na, nb = count_nodes(a.layout_string), count_nodes(b.layout_string)
        # tree edit distance is at least the node-count difference
        upper_l = 1.0 if max(na, nb) == 0 else 1.0 - abs(na - nb) / max(na, nb)
        if cfg.widget_weight * sim_w + cfg.layout_weight * upper_l < cfg.same_page_threshold:
            sim = -1.0  # cannot reach the threshold; exact value not needed
        else:
            sim = cfg.widget_weight * sim_w + cfg.layout_weight * layout_similarity(
                a.layout_string, b.layout_string)
        self._sim_cache[key] = sim
        return sim

    def register(self, page: PageState, actions: list[Action]) -> tuple[int, int, bool]:
        best, best_sim = None, -math.inf
        for k, e in enumerate(self.entries):
            sim = 1.0 if e.page is page else self.similarity(page, e.page)
            if sim >= self.config.same_page_threshold and sim > best_sim:
                best, best_sim = k, sim
        if best is not None:
            self.entries[best].N += 1
            return best, self.entries[best].N, False
        self.entries.append(RegistryEntry(page, 1, frozenset(a.identity for a in actions)))
        return len(self.entries) - 1, 1, True

    def mark_executed(self, entry_id: int, action: Action) -> None:
        e = self.entries[entry_id]
        if action.identity in e.applicable:
            e.executed.add(action.identity)

    def total_observations(self) -> int:
        return sum(e.N for e in self.entries)

    def stats(self) -> dict:
        return {
            "pages": len(self.entries),
            "observations": self.total_observations(),
            "mean_exploration_rate": float(np.mean([e.n / e.m for e in self.entries])) if self.entries else 0.0,
        }


def register_page(reg: PageRegistry, page: PageState, actions: list[Action]) -> tuple[int, int, bool]:
    return reg.register(page, actions)


# --- Q-network -----------------------------------------------------------------

class QNetwork:
    """Fully connected net, ReLU hidden layers, one linear output."""

    kind = "q-network"

    def __init__(self, layers: list[tuple[np.ndarray, np.ndarray]]):
        self.layers = layers

    @classmethod
    def init(cls, in_dim: int, hidden: int = 512, depth: int = 4, seed: int = 0,
             scheme: str = "glorot") -> "QNetwork":
        """Uniform init; ``scheme`` is he (6/fan_in), lecun (3/fan_in) or glorot."""
        rng = np.random.default_rng(seed)
        sizes = [in_dim] + [hidden] * depth + [1]
        layers = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            if scheme == "he":
                bound = math.sqrt(6.0 / fan_in)
            elif scheme == "lecun":
                bound = math.sqrt(3.0 / fan_in)
            elif scheme == "glorot":
                bound = math.sqrt(6.0 / (fan_in + fan_out))
            else:
                raise ValueError(f"unknown init scheme {scheme!r}")
            layers.append((rng.uniform(-bound, bound, (fan_in, fan_out)), np.zeros(fan_out)))
        return cls(layers)

    @classmethod
    def zeros(cls, in_dim: int, hidden: int = 512, depth: int = 4) -> "QNetwork":
        sizes = [in_dim] + [hidden] * depth + [1]
        return cls([(np.zeros((a, b)), np.zeros(b)) for a, b in zip(sizes[:-1], sizes[1:])])

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[0]

    def copy(self) -> "QNetwork":
        return QNetwork([(W.copy(), b.copy()) for W, b in self.layers])

    def forward(self, X: np.ndarray, keep: bool = False):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.in_dim:
            raise ValueError(f"input has {X.shape[1]} features, network expects {self.in_dim}")
        acts = [X]
        h = X
        for k, (W, b) in enumerate(self.layers):
            z = h @ W + b
            h = z if k == len(self.layers) - 1 else np.maximum(z, 0.0)
            acts.append(h)
        q = h[:, 0]
        return (q, acts) if keep else q

    def q_values(self, s: np.ndarray, A: np.ndarray) -> np.ndarray:
        A = np.atleast_2d(A)
        X = np.hstack([np.broadcast_to(s, (A.shape[0], s.shape[0])), A])
        return self.forward(X)

    def loss_and_grads(self, X: np.ndarray, targets: np.ndarray):
        """Mean squared error and its gradient for every weight and bias."""
        q, acts = self.forward(X, keep=True)
        err = q - targets
        loss = float(np.mean(err ** 2))
        delta = (2.0 / len(targets)) * err[:, None]
        grads = [None] * len(self.layers)
        for k in range(len(self.layers) - 1, -1, -1):
            W, _ = self.layers[k]
            grads[k] = (acts[k].T @ delta, delta.sum(axis=0))
            if k:
                delta = (delta @ W.T) * (acts[k] > 0)
        return loss, grads

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer]

    def save(self, path) -> None:
        weights.save(path, self.kind, self.params())

    def to_bytes(self) -> bytes:
        return weights.dump_arrays(self.kind, self.params())

    @classmethod
    def load(cls, path) -> "QNetwork":
        kind, arrays = weights.load(path)
        if kind != cls.kind:
            raise weights.WeightsFormatError(f"expected {cls.kind} weights, found {kind}")
        return cls([(arrays[i], arrays[i + 1]) for i in range(0, len(arrays), 2)])


def q_forward(net: QNetwork, s: np.ndarray, a: np.ndarray) -> float:
    return float(net.forward(np.concatenate([s, a])[None, :])[0])


def train(net: QNetwork, batch: list[tuple[np.ndarray, np.ndarray, float]], epochs: int = 5,
          lr: float = 0.01, minibatch: int = 64, rng: np.random.Generator | None = None) -> float:
    """Plain SGD on the MSE between Q(s, a) and the target; updates ``net`` in place.

    Returns the mean loss over the last epoch.
    """
    if not batch:
        raise ValueError("empty training batch")
    rng = rng or np.random.default_rng(0)
    X = np.stack([np.concatenate([s, a]) for s, a, _ in batch])
    y = np.array([t for _, _, t in batch], dtype=np.float64)
    last = math.nan
    for _ in range(epochs):
        order = rng.permutation(len(y))
        losses = []
        for start in range(0, len(y), minibatch):
            idx = order[start:start + minibatch]
            loss, grads = net.loss_and_grads(X[idx], y[idx])
            if not math.isfinite(loss):
                raise TrainingDiverged("Q-network loss is not finite")
            for (W, b), (gW, gb) in zip(net.layers, grads):
                W -= lr * gW
                b -= lr * gb
            losses.append(loss * len(idx))
        last = sum(losses) / len(y)
    if not math.isfinite(last):
        raise TrainingDiverged("Q-network loss is not finite")
    return last


# --- memory ------------------------------------------------------------------

@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    r: float
    next_actions: np.ndarray  # one action embedding per row

    def __post_init__(self):
        if len(self.next_actions) == 0:
            raise ValueError("next action set must not be empty")


class ExplorationMemory:
    def __init__(self, capacity: int = 10000):
        self.records: deque[Transition] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self.records)

    def add(self, t: Transition) -> None:
        self.records.append(t)


def sample_batch(mem: ExplorationMemory, n: int, rng: np.random.Generator) -> list[Transition]:
    """The ``n/2`` newest records plus ``n/2`` drawn without replacement from the rest."""
    if n % 2:
        raise ValueError("batch size must be even")
    if len(mem) < n:
        raise InsufficientMemory(f"memory holds {len(mem)} records, batch needs {n}")
    half = n // 2
    records = list(mem.records)
    older, recent = records[:-half], records[-half:]
    picks = rng.choice(len(older), size=half, replace=False)
    return recent + [older[i] for i in sorted(picks)]


def target_q(t: Transition, net: QNetwork, gamma: float) -> float:
    return t.r + gamma * float(np.max(net.q_values(t.s_next, t.next_actions)))


# --- selection ---------------------------------------------------------------

def softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - np.max(x))
    return z / z.sum()


def category_weights(actions: list[Action], system_weight: float = 0.5) -> np.ndarray:
    return np.array([system_weight if a.kind.category == SYSTEM else 1.0 for a in actions])


def select_action(q: np.ndarray, actions: list[Action], tau: float, rng: np.random.Generator,
                  system_weight: float = 0.5) -> tuple[int, np.ndarray]:
    """Sample an index from SoftMax(weight * Q / tau); returns (index, probabilities)."""
    if not actions:
        raise ValueError("no candidate actions")
    if tau <= 0:
        raise ValueError("temperature must be positive")
    probs = softmax(category_weights(actions, system_weight) * np.asarray(q, dtype=np.float64) / tau)
    idx = int(rng.choice(len(actions), p=probs))
    return idx, probs


# --- exploration loop ----------------------------------------------------------

class Environment(Protocol):
    def reset(self): ...
    def screenshot(self) -> Image: ...
    def execute(self, action: Action): ...


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.9
    tau: float = 1.0
    lr: float = 0.01
    batch_size: int = 64
    epochs: int = 5
    minibatch: int = 64
    train_interval: int = 10
    memory_capacity: int = 10000
    hidden: int = 512
    depth: int = 4
    init: str = "glorot"
    system_weight: float = 0.5
    platform: str = "mobile"
    seed: int = 0


class PageCache:
    """Memoises the pure screenshot -> page state mapping by pixel digest."""

    def __init__(self, encoder, config: EmbeddingConfig):
        self.encoder = encoder
        self.config = config
        self._pages: dict[str, PageState] = {}
        self._actions: dict[tuple[str, str], tuple[list[Action], np.ndarray]] = {}

    @staticmethod
    def digest(img: Image) -> str:
        h = hashlib.sha1(img.data.tobytes())
        h.update(f"{img.width}x{img.height}".encode())
        return h.hexdigest()

    def page(self, img: Image) -> tuple[str, PageState]:
        key = self.digest(img)
        p = self._pages.get(key)
        if p is None:
            p = self._pages[key] = page_state(img, self.encoder, self.config)
        return key, p

    def actions(self, key: str, page: PageState, platform: str) -> tuple[list[Action], np.ndarray]:
        k = (key, platform)
        hit = self._actions.get(k)
        if hit is None:
            acts = applicable_actions(page, platform)
            emb = np.stack([embed_action(a, page) for a in acts])
            emb.setflags(write=False)
            hit = self._actions[k] = (acts, emb)
        return hit


Policy = Callable[[PageState, list[Action], np.random.Generator], int]


def _outcome_info(outcome) -> dict:
    info = getattr(outcome, "__dict__", None)
    return dict(info) if info else {"kind": str(outcome)}


def explore(env: Environment, net: QNetwork | None, reg: PageRegistry, mem: ExplorationMemory,
            budget: int, config: AgentConfig, pages: PageCache,
            policy: Policy | None = None) -> list[dict]:
    """Run ``budget`` steps and return the step records.

    With ``policy=None`` actions come from the Q-network; otherwise ``policy``
    picks an index into the applicable actions and the network is untouched.
    """
    if budget <= 0:
        return []
    if policy is None and net is None:
        raise ValueError("DQN exploration needs a Q-network")
    rng = np.random.default_rng(config.seed)
    select_rng, train_rng, sample_rng = rng.spawn(3)
    log: list[dict] = []

    start = env.reset()
    screen = getattr(start, "screen", None)
    key, page = pages.page(env.screenshot())
    actions, A = pages.actions(key, page, config.platform)
    src, _, src_new = reg.register(page, actions)

    for step in range(budget):
        q_summary = None
        if policy is None:
            q = net.q_values(page.state_vec, A)
            idx, probs = select_action(q, actions, config.tau, select_rng, config.system_weight)
            q_summary = {"min": float(q.min()), "max": float(q.max()), "mean": float(q.mean()),
                         "chosen": float(q[idx]), "prob": float(probs[idx])}
        else:
            idx = policy(page, actions, select_rng)
        action = actions[idx]
        try:
            outcome = env.execute(action)
        except Exception as exc:  # environment failure: abort with a flagged partial log
            log.append({"step": step, "aborted": True, "error": f"{type(exc).__name__}: {exc}"})
            break
        crashed = getattr(outcome, "kind", None) == "crashed"
        info = _outcome_info(outcome)
        env_rec = {"screen": screen, "next_screen": info.get("screen"), "outcome": info.get("kind"),
                   "transition": info.get("transition"), "crash_id": info.get("crash_id")}
        if crashed:
            after = env.reset()
            env_rec["reset_screen"] = getattr(after, "screen", None)
            screen = env_rec["reset_screen"]
        else:
            screen = info.get("screen")

        key2, page2 = pages.page(env.screenshot())
        actions2, A2 = pages.actions(key2, page2, config.platform)
        dst, _, dst_new = reg.register(page2, actions2)
        d = reg.entries[dst]
        r = reward(d.m, d.n, reg.entries[src].N)
        mem.add(Transition(page.state_vec, A[idx], page2.state_vec, r, A2))
        reg.mark_executed(src, action)

        loss = None
        if policy is None and (step + 1) % config.train_interval == 0 and len(mem) >= config.batch_size:
            batch = sample_batch(mem, config.batch_size, sample_rng)
            # targets come from the network as it stands before this round of updates
            data = [(t.s, t.a, target_q(t, net, config.gamma)) for t in batch]
            try:
                loss = train(net, data, config.epochs, config.lr, config.minibatch, train_rng)
            except TrainingDiverged as exc:
                log.append({"step": step, "aborted": True, "error": f"TrainingDiverged: {exc}"})
                break

        rec = {"step": step, "page_entry_id": src, "is_new_page": src_new,
               "action": action.to_record(), "category": action.kind.category,
               "reward": r, "next_entry_id": dst, "layout": page.layout_string,
               "q_values_summary": q_summary, "crash": crashed, "env": env_rec}
        if loss is not None:
            rec["train_loss"] = loss
        log.append(rec)
        page, actions, A, key, src, src_new = page2, actions2, A2, key2, dst, dst_new
    return log
