"""Graphs, marked sets and the locality check for chains living on a graph."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError


def _edge(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u <= v else (v, u)


@dataclass(frozen=True)
class Graph:
    """Undirected graph on vertices ``0..n-1``.

    Edges are unordered pairs stored as ``(min, max)``; self-loops ``(x, x)``
    are explicit edges.
    """

    n: int
    edges: frozenset = field(default_factory=frozenset)
    name: str = ""

    def __post_init__(self):
        if self.n < 1:
            raise InvalidParameterError(f"vertex count must be positive, got {self.n}")
        normalized = set()
        for u, v in self.edges:
            u, v = int(u), int(v)
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise InvalidParameterError(f"edge ({u}, {v}) out of range for n={self.n}")
            normalized.add(_edge(u, v))
        object.__setattr__(self, "edges", frozenset(normalized))

    def has_edge(self, u: int, v: int) -> bool:
        return _edge(u, v) in self.edges

    def neighbors(self, x: int) -> list[int]:
        """Sorted neighbours of ``x``, including ``x`` itself when it has a self-loop."""
        out = set()
        for u, v in self.edges:
            if u == x:
                out.add(v)
            if v == x:
                out.add(u)
        return sorted(out)

    def degree(self, x: int) -> int:
        return len(self.neighbors(x))

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=bool)
        for u, v in self.edges:
            a[u, v] = a[v, u] = True
        return a

    def is_connected(self) -> bool:
        adj = self.adjacency()
        seen = np.zeros(self.n, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            x = stack.pop()
            for y in np.flatnonzero(adj[x]):
                if not seen[y]:
                    seen[y] = True
                    stack.append(int(y))
        return bool(seen.all())

    @property
    def self_loops(self) -> list[int]:
        return sorted(u for u, v in self.edges if u == v)


@dataclass(frozen=True)
class MarkedSet:
    """Sorted, duplicate-free set of marked vertices."""

    members: tuple
    n: int

    def __post_init__(self):
        members = tuple(sorted({int(x) for x in self.members}))
        for x in members:
            if not 0 <= x < self.n:
                raise InvalidParameterError(f"marked vertex {x} out of range for n={self.n}")
        object.__setattr__(self, "members", members)

    @classmethod
    def of(cls, members, n: int) -> "MarkedSet":
        if isinstance(members, MarkedSet):
            if members.n != n:
                raise InvalidParameterError("marked set built for a different vertex count")
            return members
        return cls(tuple(members), n)

    @property
    def m(self) -> int:
        return len(self.members)

    @property
    def mask(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[list(self.members)] = True
        return mask

    @property
    def unmarked(self) -> tuple:
        return tuple(x for x in range(self.n) if x not in set(self.members))

    def __contains__(self, x) -> bool:
        return int(x) in set(self.members)

    def __iter__(self):
        return iter(self.members)

    def __len__(self) -> int:
        return len(self.members)


def random_marked(n: int, m: int, rng: np.random.Generator) -> MarkedSet:
    if not 0 <= m <= n:
        raise InvalidParameterError(f"cannot mark {m} of {n} vertices")
    return MarkedSet(tuple(rng.choice(n, size=m, replace=False).tolist()), n)


# -- graph families ---------------------------------------------------------


def grid_index(i: int, j: int, side: int) -> int:
    return (i % side) * side + (j % side)


def grid_moves(side: int, torus: bool = True) -> list[list[int]]:
    """Per-vertex move targets: 4 directions plus staying put.

    On the torus every vertex gets exactly five moves (duplicates allowed
    when ``side == 2``). With open boundaries, moves leaving the grid are
    replaced by staying put, so each vertex still has five moves.
    """
    moves = []
    for i in range(side):
        for j in range(side):
            targets = [grid_index(i, j, side)]
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                a, b = i + di, j + dj
                if torus:
                    targets.append(grid_index(a, b, side))
                elif 0 <= a < side and 0 <= b < side:
                    targets.append(grid_index(a, b, side))
                else:
                    targets.append(grid_index(i, j, side))
            moves.append(targets)
    return moves


def make_grid_2d(side: int, torus: bool = True) -> Graph:
    """``side x side`` grid with a self-loop at every vertex.

    Vertex ``(i, j)`` has index ``i * side + j``. The default wraps around
    so the graph is 5-regular (counting the self-loop) and vertex-transitive.
    """
    if side < 2:
        raise InvalidParameterError(f"grid side must be >= 2, got {side}")
    edges = set()
    for x, targets in enumerate(grid_moves(side, torus)):
        for y in targets:
            edges.add(_edge(x, y))
    kind = "torus" if torus else "grid"
    return Graph(side * side, frozenset(edges), name=f"{kind}{side}x{side}")


def make_complete(n: int, with_self_loops: bool = True) -> Graph:
    if n < 2:
        raise InvalidParameterError(f"complete graph needs n >= 2, got {n}")
    edges = set(itertools.combinations(range(n), 2))
    if with_self_loops:
        edges |= {(x, x) for x in range(n)}
    return Graph(n, frozenset(edges), name=f"K{n}")


def make_cycle(n: int, with_self_loops: bool = True) -> Graph:
    if n < 3:
        raise InvalidParameterError(f"cycle needs n >= 3, got {n}")
    edges = {_edge(x, (x + 1) % n) for x in range(n)}
    if with_self_loops:
        edges |= {(x, x) for x in range(n)}
    return Graph(n, frozenset(edges), name=f"C{n}")


def make_path(n: int, with_self_loops: bool = False) -> Graph:
    if n < 2:
        raise InvalidParameterError(f"path needs n >= 2, got {n}")
    edges = {(x, x + 1) for x in range(n - 1)}
    if with_self_loops:
        edges |= {(x, x) for x in range(n)}
    return Graph(n, frozenset(edges), name=f"P{n}")


def make_hypercube(dim: int, with_self_loops: bool = True) -> Graph:
    if dim < 1:
        raise InvalidParameterError(f"hypercube dimension must be >= 1, got {dim}")
    n = 1 << dim
    edges = {_edge(x, x ^ (1 << b)) for x in range(n) for b in range(dim)}
    if with_self_loops:
        edges |= {(x, x) for x in range(n)}
    return Graph(n, frozenset(edges), name=f"Q{dim}")


def translate_grid(side: int, di: int, dj: int) -> np.ndarray:
    """Vertex permutation of the torus shifting every vertex by ``(di, dj)``."""
    return np.array(
        [grid_index(i + di, j + dj, side) for i in range(side) for j in range(side)]
    )


# -- locality ---------------------------------------------------------------


@dataclass
class LocalityReport:
    ok: bool
    violations: list

    def __bool__(self) -> bool:
        return self.ok


def validate_chain_locality(P, graph: Graph, atol: float = 0.0) -> LocalityReport:
    """Check that every positive transition ``x -> y`` (``x != y``) is an edge.

    ``P`` may be a :class:`~qwsearch.chain.MarkovChain` or a plain matrix.
    Transitions ``x -> x`` are always allowed since Shift is the identity on
    ``(x, x)``. Violations are reported as unordered pairs.
    """
    matrix = np.asarray(getattr(P, "P", P), dtype=float)
    if matrix.shape != (graph.n, graph.n):
        raise InvalidParameterError(
            f"chain dimension {matrix.shape} does not match graph with n={graph.n}"
        )
    adj = graph.adjacency()
    bad = (matrix > atol) & ~adj
    np.fill_diagonal(bad, False)
    violations = sorted({_edge(int(x), int(y)) for x, y in zip(*np.nonzero(bad))})
    return LocalityReport(ok=not violations, violations=violations)


# -- file format ------------------------------------------------------------


def parse_graph(text: str) -> Graph:
    """Parse ``n`` on the first data line followed by one ``u v`` pair per line."""
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    if not lines:
        raise InvalidParameterError("empty graph file")
    try:
        n = int(lines[0])
        edges = set()
        for line in lines[1:]:
            u, v = line.split()
            edges.add((int(u), int(v)))
    except ValueError as exc:
        raise InvalidParameterError(f"malformed graph file: {exc}") from None
    return Graph(n, frozenset(edges))


def load_graph(path) -> Graph:
    g = parse_graph(Path(path).read_text())
    return Graph(g.n, g.edges, name=Path(path).stem)


def format_graph(graph: Graph) -> str:
    lines = [str(graph.n)] + [f"{u} {v}" for u, v in sorted(graph.edges)]
    return "\n".join(lines) + "\n"


def save_graph(graph: Graph, path) -> None:
    Path(path).write_text(format_graph(graph))
