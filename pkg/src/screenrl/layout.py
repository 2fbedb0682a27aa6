"""Group/Line/Column layout hierarchy, brace strings and tree edit distance."""

from __future__ import annotations

from dataclasses import dataclass, field

from .vision import WidgetBox

ROOT, GROUP, LINE, COLUMN = "R", "G", "L", "C"
_LEVEL = {GROUP: LINE, LINE: COLUMN}


class MalformedLayoutString(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    label: str
    children: tuple["Node", ...] = ()
    widget: int | None = field(default=None, compare=False)

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children)

    def leaves(self) -> list["Node"]:
        if not self.children:
            return [self]
        out = []
        for c in self.children:
            out.extend(c.leaves())
        return out


@dataclass(frozen=True)
class LayoutTree:
    root: Node

    @property
    def groups(self) -> tuple[Node, ...]:
        return self.root.children

    def node_count(self) -> int:
        """Real nodes, root excluded."""
        return self.root.size() - 1

    def widget_order(self) -> list[int]:
        return [leaf.widget for leaf in self.root.leaves() if leaf.label == COLUMN]


def _components(n: int, linked) -> list[list[int]]:
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if linked(i, j):
                parent[find(i)] = find(j)
    comps: dict[int, list[int]] = {}
    for i in range(n):
        comps.setdefault(find(i), []).append(i)
    return list(comps.values())


def characterize_layout(boxes: list[WidgetBox], width: int, height: int,
                        gap_threshold: float = 0.05, line_overlap: float = 0.5) -> LayoutTree:
    """Build the four-level hierarchy root -> Group -> Line -> Column.

    Groups split the top-to-bottom sequence wherever the vertical gap exceeds
    ``gap_threshold * height``. Inside a group, boxes whose vertical extents
    overlap by at least ``line_overlap`` of the smaller height share a Line
    (transitively). Columns are the Line's boxes left to right.
    """
    for b in boxes:
        if not b.inside(width, height):
            raise ValueError(f"box {b} outside {width}x{height} screen")
    if not boxes:
        return LayoutTree(Node(ROOT))

    order = sorted(range(len(boxes)), key=lambda i: (boxes[i].as_tuple(), i))
    max_gap = gap_threshold * height
    groups: list[list[int]] = []
    bottom = None
    for i in order:
        b = boxes[i]
        if bottom is None or b.y - bottom > max_gap:
            groups.append([i])
            bottom = b.y2
        else:
            groups[-1].append(i)
            bottom = max(bottom, b.y2)

    def same_line(a: WidgetBox, b: WidgetBox) -> bool:
        overlap = min(a.y2, b.y2) - max(a.y, b.y)
        return overlap >= line_overlap * min(a.h, b.h)

    group_nodes = []
    for members in groups:
        comps = _components(len(members), lambda p, q: same_line(boxes[members[p]], boxes[members[q]]))
        lines = [[members[k] for k in comp] for comp in comps]
        lines.sort(key=lambda ln: (min(boxes[i].y for i in ln), min(boxes[i].x for i in ln)))
        line_nodes = []
        for ln in lines:
            ln.sort(key=lambda i: (boxes[i].x, boxes[i].y, boxes[i].as_tuple()))
            line_nodes.append(Node(LINE, tuple(Node(COLUMN, widget=i) for i in ln)))
        group_nodes.append(Node(GROUP, tuple(line_nodes)))
    return LayoutTree(Node(ROOT, tuple(group_nodes)))


def _emit(node: Node) -> str:
    if not node.children:
        return node.label
    return node.label + "{" + "".join(_emit(c) for c in node.children) + "}"


def serialize_tree(tree: LayoutTree) -> str:
    return "".join(_emit(c) for c in tree.root.children)


def parse_forest(text: str) -> tuple[Node, ...]:
    """Parse a brace string into its top-level nodes."""
    pos = 0

    def forest(depth: int) -> list[Node]:
        nonlocal pos
        out = []
        while pos < len(text) and text[pos] != "}":
            ch = text[pos]
            if ch not in (GROUP, LINE, COLUMN):
                raise MalformedLayoutString(f"unexpected {ch!r} at offset {pos} in {text!r}")
            pos += 1
            kids: list[Node] = []
            if pos < len(text) and text[pos] == "{":
                pos += 1
                kids = forest(depth + 1)
                if pos >= len(text) or text[pos] != "}":
                    raise MalformedLayoutString(f"unbalanced braces in {text!r}")
                pos += 1
                if not kids:
                    raise MalformedLayoutString(f"empty braces at offset {pos} in {text!r}")
            out.append(Node(ch, tuple(kids)))
        if depth == 0 and pos != len(text):
            raise MalformedLayoutString(f"unbalanced braces in {text!r}")
        return out

    return tuple(forest(0))


def parse_layout(text: str) -> LayoutTree:
    nodes = parse_forest(text)
    counter = iter(range(10 ** 9))

    def number(n: Node) -> Node:
        if n.label == COLUMN and not n.children:
            return Node(n.label, (), next(counter))
        return Node(n.label, tuple(number(c) for c in n.children))

    return LayoutTree(Node(ROOT, tuple(number(n) for n in nodes)))


# --- Zhang-Shasha ------------------------------------------------------------

def _postorder(root: Node) -> tuple[list[str], list[int]]:
    """Labels and leftmost-leaf indices in postorder."""
    labels: list[str] = []
    lml: list[int] = []

    def walk(n: Node) -> int:
        first = None
        for c in n.children:
            leftmost = walk(c)
            if first is None:
                first = leftmost
        idx = len(labels)
        labels.append(n.label)
        lml.append(idx if first is None else first)
        return lml[idx]

    walk(root)
    return labels, lml


def _keyroots(lml: list[int]) -> list[int]:
    seen = {}
    for i, l in enumerate(lml):
        seen[l] = i  # highest postorder index per leftmost leaf
    return sorted(seen.values())


def tree_distance(a: Node, b: Node) -> int:
    """Unit-cost ordered tree edit distance (Zhang & Shasha)."""
    la, ra = _postorder(a)
    lb, rb = _postorder(b)
    na, nb = len(la), len(lb)
    td = [[0] * nb for _ in range(na)]
    for i in _keyroots(ra):
        for j in _keyroots(rb):
            li, lj = ra[i], rb[j]
            m, n = i - li + 2, j - lj + 2
            fd = [[0] * n for _ in range(m)]
            for x in range(1, m):
                fd[x][0] = fd[x - 1][0] + 1
            for y in range(1, n):
                fd[0][y] = fd[0][y - 1] + 1
            for x in range(1, m):
                ix = li + x - 1
                row, prev = fd[x], fd[x - 1]
                for y in range(1, n):
                    jy = lj + y - 1
                    if ra[ix] == li and rb[jy] == lj:
                        cost = 0 if la[ix] == lb[jy] else 1
                        v = min(prev[y] + 1, row[y - 1] + 1, prev[y - 1] + cost)
                        row[y] = v
                        td[ix][jy] = v
                    else:
                        p = ra[ix] - li
                        q = rb[jy] - lj
                        row[y] = min(prev[y] + 1, row[y - 1] + 1, fd[p][q] + td[ix][jy])
    return td[na - 1][nb - 1]


def tree_edit_distance(a: str, b: str) -> int:
    ra = Node(ROOT, parse_forest(a))
    rb = Node(ROOT, parse_forest(b))
    return tree_distance(ra, rb)


def count_nodes(text: str) -> int:
    return sum(n.size() for n in parse_forest(text))


def layout_similarity(a: str, b: str) -> float:
    na, nb = count_nodes(a), count_nodes(b)
    if na == 0 and nb == 0:
        return 1.0
    d = tree_edit_distance(a, b)
    return min(1.0, max(0.0, 1.0 - d / max(na, nb)))
