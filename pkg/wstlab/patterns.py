"""Canonical rooted-tree patterns and their Poisson(1) Galton-Watson reference law.

A pattern is a finite rooted tree up to root-preserving isomorphism. Its
canonical encoding is the AHU parenthesis string with children sorted by
encoding, and its automorphism count is collected in the same bottom-up pass.
"""
import itertools
import logging
import math
from collections import Counter
from collections.abc import Hashable, Iterable, Sequence
from dataclasses import dataclass, field
from functools import cache
from typing import NamedTuple

logger = logging.getLogger(__name__)


class PatternError(Exception):
    """Exception raised when a rooted tree or pattern is malformed."""

    pass


@dataclass(frozen=True)
class RootedTreePattern:
    """Canonical rooted tree together with the radius it represents.

    Patterns compare and hash by ``(encoding, radius)``.

    Attributes:
        encoding (str): AHU parenthesis string, children sorted.
        radius (int): Ball radius the pattern stands for.
        k (int): Number of vertices.
        t (int): Number of vertices at depth at most ``radius - 1``.
        stab (int): Number of root-preserving automorphisms.
        parent (tuple[int, ...]): Parent of every vertex in canonical BFS
            order; the root is vertex 0 with parent -1.
        depth (tuple[int, ...]): Depth of every vertex in the same order.
    """

    encoding: str
    radius: int
    k: int = field(compare=False)
    t: int = field(compare=False)
    stab: int = field(compare=False)
    parent: tuple[int, ...] = field(compare=False, repr=False)
    depth: tuple[int, ...] = field(compare=False, repr=False)

    @property
    def height(self) -> int:
        """Largest vertex depth."""
        return max(self.depth)

    @property
    def edges(self) -> list[tuple[int, int]]:
        """``(parent, child)`` pairs in BFS order."""
        return [(p, j) for j, p in enumerate(self.parent) if p >= 0]

    @classmethod
    def from_encoding(
        cls, encoding: str, radius: int | None = None
    ) -> "RootedTreePattern":
        """Rebuild a pattern from its parenthesis string."""
        children: list[list[int]] = []
        stack: list[int] = []
        for char in encoding:
            if char == "(":
                if children and not stack:
                    raise PatternError(
                        f"Encoding {encoding!r} holds more than one tree."
                    )
                children.append([])
                if stack:
                    children[stack[-1]].append(len(children) - 1)
                stack.append(len(children) - 1)
            elif char == ")":
                if not stack:
                    raise PatternError(f"Unbalanced encoding {encoding!r}.")
                stack.pop()
            else:
                raise PatternError(f"Unexpected character {char!r} in encoding.")
        if stack or not children:
            raise PatternError(f"Unbalanced encoding {encoding!r}.")
        return pattern_from_children(children, 0, radius)


def pattern_from_children(
    children: Sequence[Sequence[int]], root: int, radius: int | None
) -> RootedTreePattern:
    """Canonical pattern of the tree given by child lists (indices are local)."""
    order = [root]
    depth_of = {root: 0}
    for v in order:
        for w in children[v]:
            depth_of[w] = depth_of[v] + 1
            order.append(w)
    encoding: dict[int, str] = {}
    stab: dict[int, int] = {}
    for v in reversed(order):
        child_codes = sorted(encoding[w] for w in children[v])
        encoding[v] = "(" + "".join(child_codes) + ")"
        count = math.prod(stab[w] for w in children[v])
        for multiplicity in Counter(child_codes).values():
            count *= math.factorial(multiplicity)
        stab[v] = count
    height = max(depth_of.values())
    if radius is None:
        radius = height
    elif height > radius:
        raise PatternError(f"Tree of height {height} exceeds radius {radius}.")
    # canonical BFS: children visited in encoding order
    parent = [-1]
    depth = [0]
    queue = [(root, 0)]
    for v, position in queue:
        for w in sorted(children[v], key=encoding.__getitem__):
            parent.append(position)
            depth.append(depth[position] + 1)
            queue.append((w, len(parent) - 1))
    t = sum(1 for d in depth if d <= radius - 1)
    return RootedTreePattern(
        encoding=encoding[root],
        radius=radius,
        k=len(parent),
        t=t,
        stab=stab[root],
        parent=tuple(parent),
        depth=tuple(depth),
    )


def canonicalize(
    edges: Iterable[tuple[Hashable, Hashable]],
    root: Hashable,
    radius: int | None = None,
) -> RootedTreePattern:
    """Canonical pattern of a rooted tree given by an edge list.

    Args:
        edges (Iterable[tuple[Hashable, Hashable]]): Tree edges on arbitrary
            vertex labels. An empty list with any root is the single vertex.
        root (Hashable): The designated root.
        radius (int, optional): Radius the pattern represents; defaults to the
            height of the tree.

    Returns:
        RootedTreePattern: Equal for two inputs iff they are isomorphic by a
            root-preserving map.

    Raises:
        PatternError: If the edges do not form a tree containing the root, or
            the tree is taller than ``radius``.
    """
    edges = list(edges)
    index = {root: 0}
    adjacency: list[list[int]] = [[]]
    for a, b in edges:
        if a == b:
            raise PatternError(f"Self-loop at {a!r}.")
        for x in (a, b):
            if x not in index:
                index[x] = len(index)
                adjacency.append([])
        adjacency[index[a]].append(index[b])
        adjacency[index[b]].append(index[a])
    if len(edges) != len(index) - 1:
        raise PatternError(
            f"{len(edges)} edges on {len(index)} vertices is not a tree."
        )
    children: list[list[int]] = [[] for _ in index]
    seen = [False] * len(index)
    seen[0] = True
    queue = [0]
    for v in queue:
        for w in adjacency[v]:
            if not seen[w]:
                seen[w] = True
                children[v].append(w)
                queue.append(w)
    if len(queue) != len(index):
        raise PatternError("Edges do not connect every vertex to the root.")
    return pattern_from_children(children, 0, radius)


def brute_force_stab(pattern: RootedTreePattern) -> int:
    """Root-preserving automorphism count by permutation search (small trees only)."""
    if pattern.k > 9:
        raise PatternError("Brute-force automorphism counting is limited to k <= 9.")
    edges = {frozenset(e) for e in pattern.edges}
    count = 0
    for perm in itertools.permutations(range(1, pattern.k)):
        mapping = (0, *perm)
        if all(frozenset((mapping[a], mapping[b])) in edges for a, b in pattern.edges):
            count += 1
    return count


class ReferenceProbability(NamedTuple):
    """Reference probability of a pattern and whether it lies in the support."""

    probability: float
    in_support: bool


def pgw_reference_probability(pattern: RootedTreePattern) -> ReferenceProbability:
    """Probability of the pattern as the radius-r ball of the conditioned PGW tree.

    The Poisson(1) Galton-Watson tree conditioned to survive forever has
    ``P(ball = T) = exp(-t) (k - t) / |Stab_T|``. Patterns with no vertex at
    depth ``r`` (``k == t``) are outside the support. At radius zero ``t = 0``
    and ``k = 1``, giving probability one.
    """
    if pattern.radius >= 1 and pattern.k == pattern.t:
        return ReferenceProbability(0.0, False)
    value = math.exp(-pattern.t) * (pattern.k - pattern.t) / pattern.stab
    return ReferenceProbability(value, True)


@cache
def _shapes(height: int, max_size: int) -> tuple[tuple[str, int], ...]:
    """Encodings and sizes of all rooted trees of height at most ``height``."""
    if max_size < 1:
        return ()
    if height == 0 or max_size == 1:
        return (("()", 1),)
    subtrees = sorted(_shapes(height - 1, max_size - 1), key=lambda s: (s[1], s[0]))
    found: list[tuple[str, int]] = []

    def extend(start: int, remaining: int, chosen: list[tuple[str, int]]) -> None:
        codes = sorted(code for code, _ in chosen)
        found.append(("(" + "".join(codes) + ")", 1 + sum(size for _, size in chosen)))
        for i in range(start, len(subtrees)):
            code, size = subtrees[i]
            if size > remaining:
                break
            extend(i, remaining - size, [*chosen, subtrees[i]])

    extend(0, max_size - 1, [])
    return tuple(found)


def enumerate_patterns(radius: int, max_k: int) -> list[RootedTreePattern]:
    """Every pattern of the given radius with at most ``max_k`` vertices.

    Patterns whose height is below the radius are included; they carry zero
    reference probability when ``radius >= 1``.
    """
    if radius < 0 or max_k < 1:
        raise PatternError("Need radius >= 0 and max_k >= 1.")
    patterns = [
        RootedTreePattern.from_encoding(code, radius)
        for code, _ in _shapes(radius, max_k)
    ]
    return sorted(patterns, key=lambda p: (p.k, p.encoding))


def reference_mass(radius: int, max_k: int) -> tuple[float, float]:
    """Total reference probability of the patterns up to ``max_k`` vertices.

    Returns:
        tuple[float, float]: The enumerated mass and the missing tail mass.
    """
    mass = math.fsum(
        pgw_reference_probability(p).probability
        for p in enumerate_patterns(radius, max_k)
    )
    return mass, max(0.0, 1.0 - mass)


def star(children: int, radius: int = 1) -> RootedTreePattern:
    """Root with ``children`` leaf children."""
    return RootedTreePattern.from_encoding("(" + "()" * children + ")", radius)


def path(length: int, radius: int | None = None) -> RootedTreePattern:
    """Path of ``length`` edges rooted at one end."""
    encoding = "(" * (length + 1) + ")" * (length + 1)
    return RootedTreePattern.from_encoding(encoding, radius)
