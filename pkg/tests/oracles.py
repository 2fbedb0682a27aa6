"""Independent reference computations used only by the test-suite."""

from __future__ import annotations

import math
from collections import deque
from functools import lru_cache

LABELS = ("G", "L", "C")

# A forest is a tuple of trees; a tree is (label, forest).


@lru_cache(maxsize=None)
def forests(n: int, labels: tuple[str, ...] = LABELS) -> tuple:
    """Every ordered labelled forest with exactly ``n`` nodes."""
    if n == 0:
        return ((),)
    out = []
    for k in range(1, n + 1):
        for kids in forests(k - 1, labels):
            for lab in labels:
                for rest in forests(n - k, labels):
                    out.append(((lab, kids),) + rest)
    return tuple(out)


def size(f) -> int:
    return sum(1 + size(kids) for _, kids in f)


def to_string(f) -> str:
    return "".join(lab + ("{" + to_string(kids) + "}" if kids else "") for lab, kids in f)


def _neighbours(f, labels, allow_insert):
    """Forests one unit edit away from ``f``."""
    n = len(f)
    for k, (lab, kids) in enumerate(f):
        yield f[:k] + kids + f[k + 1:]  # delete, children take its place
        for other in labels:
            if other != lab:
                yield f[:k] + ((other, kids),) + f[k + 1:]
        for g in _neighbours(kids, labels, allow_insert):
            yield f[:k] + ((lab, g),) + f[k + 1:]
    if allow_insert:
        for i in range(n + 1):
            for j in range(i, n + 1):
                for lab in labels:
                    yield f[:i] + ((lab, f[i:j]),) + f[j:]


def bfs_distances(source, max_size: int, labels=LABELS) -> dict:
    """Shortest edit-script length from ``source`` to every forest of at most
    ``max_size`` nodes, by breadth-first search over single unit edits."""
    dist = {source: 0}
    q = deque([source])
    while q:
        f = q.popleft()
        d = dist[f] + 1
        for g in _neighbours(f, labels, size(f) < max_size):
            if g not in dist:
                dist[g] = d
                q.append(g)
    return dist


def spearman(x, y) -> float:
    """Spearman rank correlation with average ranks for ties."""
    def ranks(v):
        order = sorted(range(len(v)), key=lambda i: v[i])
        r = [0.0] * len(v)
        i = 0
        while i < len(order):
            j = i
            while j + 1 < len(order) and v[order[j + 1]] == v[order[i]]:
                j += 1
            for k in range(i, j + 1):
                r[order[k]] = (i + j) / 2 + 1
            i = j + 1
        return r

    rx, ry = ranks(list(x)), ranks(list(y))
    mx, my = sum(rx) / len(rx), sum(ry) / len(ry)
    cov = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    vx = math.sqrt(sum((a - mx) ** 2 for a in rx))
    vy = math.sqrt(sum((b - my) ** 2 for b in ry))
    return cov / (vx * vy)
