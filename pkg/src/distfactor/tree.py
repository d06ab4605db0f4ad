"""Binary partition trees over a finite category set.

A tree file is a nested, whitespace-insensitive text structure::

    # comments run to end of line
    (
      (F:15-19 F:20-29)
      (M:15-19 M:20-29)
    )

Grammar::

    node  := LABEL | "(" node node ")"
    LABEL := one or more characters other than whitespace, "(", ")", "#"

The first child written inside a pair of parentheses is the left child.
Orientation matters: swapping children flips the sign of that node's logit.
"""

from __future__ import annotations

import hashlib
import re
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

ATTRIBUTE_SEP = ":"
_LABEL_RE = re.compile(r"[^\s()#]+")


class TreeParseError(ValueError):
    """Malformed tree text; carries 1-based line and column."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class UnknownCategoryError(KeyError):
    pass


@dataclass(frozen=True)
class CategorySpace:
    """Ordered, unique category descriptors.

    Each descriptor is a tuple of attribute labels, e.g. ``("F", "20-29")``.
    Its flat label joins the attributes with ``":"``.
    """

    categories: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        cats = tuple(tuple(str(a) for a in c) for c in self.categories)
        object.__setattr__(self, "categories", cats)
        if len(cats) < 2:
            raise ValueError("a category space needs at least 2 categories")
        labels = [ATTRIBUTE_SEP.join(c) for c in cats]
        if len(set(labels)) != len(labels):
            raise ValueError("category descriptors must be unique")
        for lab in labels:
            if not _LABEL_RE.fullmatch(lab):
                raise ValueError(f"category label {lab!r} contains whitespace, '(', ')' or '#'")

    @classmethod
    def from_labels(cls, labels: Sequence[str]) -> "CategorySpace":
        return cls(tuple(tuple(lab.split(ATTRIBUTE_SEP)) for lab in labels))

    @property
    def size(self) -> int:
        return len(self.categories)

    @property
    def labels(self) -> list[str]:
        return [ATTRIBUTE_SEP.join(c) for c in self.categories]

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise UnknownCategoryError(label) from None


@dataclass(frozen=True, eq=False)
class Node:
    """A tree node; ``categories`` holds category indices in the space."""

    categories: tuple[int, ...]
    left: "Node | None" = None
    right: "Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None and self.right is None

    def structure(self):
        """Nested tuple form, convenient for equality checks."""
        if self.is_leaf:
            return self.categories
        return (self.left.structure(), self.right.structure())


def node(*children) -> Node:
    """Build a tree from nested ints: ``node(0, node(1, 2))``."""
    if len(children) != 2:
        raise ValueError("internal nodes take exactly two children")
    kids = [c if isinstance(c, Node) else Node((int(c),)) for c in children]
    return Node(kids[0].categories + kids[1].categories, kids[0], kids[1])


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    message: str = ""
    node: Node | None = None

    def __bool__(self):
        return self.ok


@dataclass(frozen=True, eq=False)
class PartitionTree:
    """Full binary tree whose leaves are the single categories of ``space``.

    Construction validates the tree and caches node-by-category incidence
    matrices in canonical (breadth-first, left before right) order.
    """

    root: Node
    space: CategorySpace
    _internal: tuple[Node, ...] = field(init=False, repr=False)
    _leaves: tuple[Node, ...] = field(init=False, repr=False)

    def __post_init__(self):
        report = validate_tree(self.root, self.space)
        if not report:
            raise ValueError(f"invalid tree: {report.message}")
        internal, leaves = [], []
        queue = deque([self.root])
        while queue:
            nd = queue.popleft()
            if nd.is_leaf:
                leaves.append(nd)
            else:
                internal.append(nd)
                queue.append(nd.left)
                queue.append(nd.right)
        object.__setattr__(self, "_internal", tuple(internal))
        object.__setattr__(self, "_leaves", tuple(leaves))

        C = self.space.size
        left = np.zeros((len(internal), C))
        right = np.zeros((len(internal), C))
        for a, nd in enumerate(internal):
            left[a, list(nd.left.categories)] = 1.0
            right[a, list(nd.right.categories)] = 1.0
        left.flags.writeable = False
        right.flags.writeable = False
        object.__setattr__(self, "left_incidence", left)
        object.__setattr__(self, "right_incidence", right)

    @property
    def n_internal(self) -> int:
        return len(self._internal)

    @property
    def n_categories(self) -> int:
        return self.space.size

    def internal_nodes(self) -> tuple[Node, ...]:
        return self._internal

    def leaves(self) -> tuple[Node, ...]:
        return self._leaves

    def child_sizes(self) -> np.ndarray:
        """(N, 2) array of |A_l|, |A_r| per internal node."""
        return np.array([[len(n.left.categories), len(n.right.categories)] for n in self._internal])

    def structure(self):
        return self.root.structure()

    def digest(self) -> str:
        return hashlib.sha256(serialize_tree(self).encode("utf-8")).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, PartitionTree):
            return NotImplemented
        return self.space == other.space and self.structure() == other.structure()

    def __hash__(self):
        return hash((self.space, self.structure()))


def internal_nodes(tree: PartitionTree) -> tuple[Node, ...]:
    return tree.internal_nodes()


def validate_tree(tree: Node | PartitionTree, space: CategorySpace) -> ValidationReport:
    """Check the full-binary partition invariants against ``space``.

    Returns a report naming the first violated invariant and the node at
    fault; never raises for a structurally bad tree.
    """
    root = tree.root if isinstance(tree, PartitionTree) else tree
    if sorted(root.categories) != list(range(space.size)):
        return ValidationReport(False, "root subset is not the whole category space", root)
    stack = [root]
    while stack:
        nd = stack.pop()
        if (nd.left is None) != (nd.right is None):
            return ValidationReport(False, "internal node without exactly two children", nd)
        if nd.is_leaf:
            if len(nd.categories) != 1:
                return ValidationReport(False, "leaf does not hold exactly one category", nd)
            if not 0 <= nd.categories[0] < space.size:
                return ValidationReport(False, "leaf category outside the space", nd)
            continue
        l, r = set(nd.left.categories), set(nd.right.categories)
        if (
            not l
            or not r
            or l & r
            or l | r != set(nd.categories)
            or len(nd.left.categories) + len(nd.right.categories) != len(nd.categories)
        ):
            return ValidationReport(False, "children do not partition parent", nd)
        stack.append(nd.right)
        stack.append(nd.left)
    return ValidationReport(True)


# -- text format ------------------------------------------------------------

def serialize_tree(tree: PartitionTree) -> str:
    labels = tree.space.labels
    lines: list[str] = []

    def emit(nd: Node, depth: int):
        pad = "  " * depth
        if nd.is_leaf:
            lines.append(pad + labels[nd.categories[0]])
        elif nd.left.is_leaf and nd.right.is_leaf:
            lines.append(f"{pad}({labels[nd.left.categories[0]]} {labels[nd.right.categories[0]]})")
        else:
            lines.append(pad + "(")
            emit(nd.left, depth + 1)
            emit(nd.right, depth + 1)
            lines.append(pad + ")")

    emit(tree.root, 0)
    return "\n".join(lines) + "\n"


def _tokenize(text: str) -> Iterator[tuple[str, int, int]]:
    for lineno, line in enumerate(text.splitlines(), start=1):
        col = 0
        while col < len(line):
            ch = line[col]
            if ch == "#":
                break
            if ch.isspace():
                col += 1
            elif ch in "()":
                yield ch, lineno, col + 1
                col += 1
            else:
                m = _LABEL_RE.match(line, col)
                yield m.group(0), lineno, col + 1
                col = m.end()
    yield "", len(text.splitlines()) + 1, 1


def parse_tree(text: str, space: CategorySpace) -> PartitionTree:
    tokens = _tokenize(text)
    index = {lab: i for i, lab in enumerate(space.labels)}
    tok = next(tokens)

    def advance():
        nonlocal tok
        tok = next(tokens)

    def parse_node() -> Node:
        value, line, col = tok
        if value == "(":
            advance()
            left = parse_node()
            right = parse_node()
            if tok[0] != ")":
                raise TreeParseError(
                    f"expected ')' but found {tok[0]!r}" if tok[0] else "expected ')' but reached end of input",
                    tok[1], tok[2],
                )
            advance()
            return Node(left.categories + right.categories, left, right)
        if value == ")":
            raise TreeParseError("unexpected ')'", line, col)
        if value == "":
            raise TreeParseError("unexpected end of input", line, col)
        if value not in index:
            raise UnknownCategoryError(f"unknown category label {value!r} at line {line}, column {col}")
        advance()
        return Node((index[value],))

    root = parse_node()
    if tok[0] != "":
        raise TreeParseError(f"trailing content {tok[0]!r}", tok[1], tok[2])
    report = validate_tree(root, space)
    if not report:
        raise ValueError(f"invalid tree: {report.message}")
    return PartitionTree(root, space)


# -- common shapes ----------------------------------------------------------

def balanced_tree(space: CategorySpace) -> PartitionTree:
    """Halve the index range recursively (left half gets the smaller share)."""

    def build(idx: list[int]) -> Node:
        if len(idx) == 1:
            return Node((idx[0],))
        mid = len(idx) // 2
        left, right = build(idx[:mid]), build(idx[mid:])
        return Node(left.categories + right.categories, left, right)

    return PartitionTree(build(list(range(space.size))), space)


def caterpillar_tree(space: CategorySpace) -> PartitionTree:
    """Split off the first remaining category at every level."""

    def build(idx: list[int]) -> Node:
        if len(idx) == 1:
            return Node((idx[0],))
        left, right = Node((idx[0],)), build(idx[1:])
        return Node(left.categories + right.categories, left, right)

    return PartitionTree(build(list(range(space.size))), space)


def random_tree(space: CategorySpace, rng: np.random.Generator) -> PartitionTree:
    """Uniformly random split sizes and membership at every node."""

    def build(idx: list[int]) -> Node:
        if len(idx) == 1:
            return Node((idx[0],))
        perm = list(rng.permutation(idx))
        k = int(rng.integers(1, len(idx)))
        left, right = build(perm[:k]), build(perm[k:])
        return Node(left.categories + right.categories, left, right)

    return PartitionTree(build(list(range(space.size))), space)


def default_space(n_categories: int) -> CategorySpace:
    return CategorySpace.from_labels([f"c{j + 1}" for j in range(n_categories)])
