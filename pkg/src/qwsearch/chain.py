"""Markov chains, their absorbing and interpolated variants, and discriminants."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import (
    DomainError,
    ErgodicityError,
    InvalidParameterError,
    ReversibilityError,
    SingularityError,
)
from .graph import Graph, MarkedSet, grid_moves

ROW_TOL = 1e-12
STATIONARY_TOL = 1e-10
REVERSIBLE_TOL = 1e-10
TOP_GAP_TOL = 1e-10


def _as_matrix(P) -> np.ndarray:
    return np.asarray(getattr(P, "P", P), dtype=float)


def validate_stochastic(P, tol: float = ROW_TOL) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
        raise InvalidParameterError(f"transition matrix must be square, got shape {P.shape}")
    if not np.all(np.isfinite(P)):
        raise InvalidParameterError("transition matrix has non-finite entries")
    if P.min() < 0:
        raise InvalidParameterError("transition matrix has negative entries")
    worst = np.abs(P.sum(axis=1) - 1.0).max()
    if worst > tol:
        raise InvalidParameterError(f"rows must sum to 1 (worst deviation {worst:.3e})")
    return P


def _period(P: np.ndarray) -> int:
    """Period of an irreducible chain, from BFS levels of the positive digraph."""
    graph = (P > 0).astype(float)
    order, pred = breadth_first_order(graph, 0, directed=True, return_predecessors=True)
    level = np.full(P.shape[0], -1)
    level[0] = 0
    for x in order[1:]:
        level[x] = level[pred[x]] + 1
    g = 0
    for x, y in zip(*np.nonzero(P > 0)):
        g = math.gcd(g, int(level[x] + 1 - level[y]))
    return g


def check_ergodic(P) -> None:
    P = _as_matrix(P)
    ncomp, labels = connected_components(P > 0, directed=True, connection="strong")
    if ncomp > 1:
        comps = [np.flatnonzero(labels == c).tolist() for c in range(ncomp)]
        raise ErgodicityError(f"chain is reducible ({ncomp} strongly connected components)", comps)
    period = _period(P)
    if period != 1:
        raise ErgodicityError(f"chain is periodic with period {period}")


def stationary_distribution(P) -> np.ndarray:
    """Unique stationary distribution of an ergodic chain.

    Solves ``pi (P - I) = 0`` with one equation replaced by normalisation.
    """
    P = validate_stochastic(_as_matrix(P))
    check_ergodic(P)
    n = P.shape[0]
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    pi = np.linalg.solve(A, b)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    if np.abs(pi @ P - pi).max() > STATIONARY_TOL:
        raise ErgodicityError("stationary solve did not converge to a fixed point")
    return pi


class MarkovChain:
    """Row-stochastic transition matrix with a lazily cached stationary law."""

    def __init__(self, P, name: str = ""):
        self.P = validate_stochastic(P).copy()
        self.P.setflags(write=False)
        self.name = name

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @cached_property
    def pi(self) -> np.ndarray:
        pi = stationary_distribution(self.P)
        pi.setflags(write=False)
        return pi

    def is_reversible(self, tol: float = REVERSIBLE_TOL) -> bool:
        flow = self.pi[:, None] * self.P
        return bool(np.abs(flow - flow.T).max() <= tol)

    def require_reversible(self) -> None:
        if not self.is_reversible():
            label = f"chain {self.name}" if self.name else "chain"
            raise ReversibilityError(f"{label} violates detailed balance")

    def spectrum(self) -> np.ndarray:
        """Eigenvalues of the discriminant (real, ascending) for a reversible chain."""
        return np.linalg.eigvalsh(_sqrt_hadamard(self.P))

    def has_nonnegative_spectrum(self, tol: float = 1e-12) -> bool:
        return bool(self.spectrum()[0] >= -tol)

    def __repr__(self) -> str:
        return f"MarkovChain(n={self.n}{', ' + self.name if self.name else ''})"


def as_chain(P) -> MarkovChain:
    return P if isinstance(P, MarkovChain) else MarkovChain(P)


def lazify(P) -> MarkovChain:
    """``(I + P) / 2``: same stationary law, discriminant spectrum in ``[0, 1]``."""
    chain = as_chain(P)
    lazy = MarkovChain(0.5 * (np.eye(chain.n) + chain.P), name=f"lazy({chain.name})")
    if "pi" in chain.__dict__:
        lazy.__dict__["pi"] = chain.pi
    return lazy


def absorbing(P, marked) -> MarkovChain:
    """Replace every marked row by a unit self-loop."""
    chain = as_chain(P)
    M = MarkedSet.of(marked, chain.n)
    if M.m == 0:
        raise InvalidParameterError("absorbing chain needs a nonempty marked set")
    Q = chain.P.copy()
    idx = list(M.members)
    Q[idx, :] = 0.0
    Q[idx, idx] = 1.0
    return MarkovChain(Q, name=f"absorbing({chain.name})")


def sin2_theta(p_M: float, s: float) -> float:
    """``sin^2 theta(s) = p_M / (1 - s (1 - p_M))`` without domain restrictions."""
    return p_M / (1.0 - s * (1.0 - p_M))


def theta(p_M: float, s: float) -> float:
    """Angle of the interpolated stationary state between ``|U>`` and ``|M>``."""
    if not 0.0 < p_M <= 0.5:
        raise DomainError(f"theta needs 0 < p_M <= 1/2, got {p_M}")
    if not 0.0 <= s <= 1.0:
        raise DomainError(f"theta needs s in [0, 1], got {s}")
    return math.asin(math.sqrt(min(1.0, sin2_theta(p_M, s))))


def s_star(p_star: float) -> float:
    """Interpolation value balancing the marked and unmarked weight: ``1 - p/(1-p)``."""
    if not 0.0 < p_star <= 0.5:
        raise DomainError(f"s_star needs 0 < p* <= 1/2, got {p_star}")
    return 1.0 - p_star / (1.0 - p_star)


def _sqrt_hadamard(P: np.ndarray) -> np.ndarray:
    return np.sqrt(P * P.T)


@dataclass(frozen=True)
class SpectralData:
    """Eigenpairs of a symmetric matrix, ascending, with a fixed sign convention."""

    lambdas: np.ndarray
    vectors: np.ndarray

    @classmethod
    def of(cls, D: np.ndarray) -> "SpectralData":
        lam, vec = np.linalg.eigh(D)
        vec = vec.copy()
        for k in range(vec.shape[1]):
            col = np.abs(vec[:, k])
            j = int(np.flatnonzero(col >= col.max() - 1e-9)[0])
            if vec[j, k] < 0:
                vec[:, k] *= -1
        return cls(lam, vec)

    @property
    def n(self) -> int:
        return self.lambdas.size

    def overlaps(self, state: np.ndarray) -> np.ndarray:
        return self.vectors.T @ state

    def top_gap(self) -> float:
        return float(self.lambdas[-1] - self.lambdas[-2]) if self.n > 1 else math.inf


@dataclass(frozen=True)
class ProjectionPair:
    """Normalised projections of ``|pi>`` on unmarked and marked vertices."""

    U_state: np.ndarray
    M_state: np.ndarray
    p_U: float
    p_M: float


def projections(P, marked) -> ProjectionPair:
    chain = as_chain(P)
    M = MarkedSet.of(marked, chain.n)
    pi = chain.pi
    mask = M.mask
    p_M = float(pi[mask].sum())
    p_U = float(pi[~mask].sum())
    U = np.where(~mask, np.sqrt(pi), 0.0)
    Mst = np.where(mask, np.sqrt(pi), 0.0)
    if p_U > 0:
        U = U / math.sqrt(p_U)
    if p_M > 0:
        Mst = Mst / math.sqrt(p_M)
    return ProjectionPair(U, Mst, p_U, p_M)


class InterpolatedChain:
    """``P(s) = (1 - s) P + s P'`` for a reversible ergodic base chain.

    For ``s < 1`` the interpolated chain is checked to be ergodic and
    reversible with the closed-form stationary law on construction.
    """

    def __init__(self, base, marked, s: float, check: bool = True):
        if not 0.0 <= s <= 1.0:
            raise InvalidParameterError(f"interpolation parameter must be in [0, 1], got {s}")
        self.base = as_chain(base)
        self.marked = MarkedSet.of(marked, self.base.n)
        self.s = float(s)
        if check:
            self._check()

    @property
    def n(self) -> int:
        return self.base.n

    @cached_property
    def matrix(self) -> np.ndarray:
        P = self.base.P.copy()
        idx = list(self.marked.members)
        if idx:
            P[idx, :] *= 1.0 - self.s
            P[idx, idx] += self.s
        P.setflags(write=False)
        return P

    @cached_property
    def proj(self) -> ProjectionPair:
        return projections(self.base, self.marked)

    @property
    def p_M(self) -> float:
        return self.proj.p_M

    @property
    def p_U(self) -> float:
        return self.proj.p_U

    @property
    def sin2_theta(self) -> float:
        return sin2_theta(self.p_M, self.s)

    @property
    def theta(self) -> float:
        return math.asin(math.sqrt(min(1.0, self.sin2_theta)))

    @cached_property
    def pi(self) -> np.ndarray:
        return stationary_interpolated(self.base, self.marked, self.s)

    def chain(self) -> MarkovChain:
        return MarkovChain(self.matrix, name=f"{self.base.name}(s={self.s:g})")

    def _check(self) -> None:
        if self.s >= 1.0:
            return
        self.base.require_reversible()
        check_ergodic(self.matrix)
        pi = self.pi
        if np.abs(pi @ self.matrix - pi).max() > STATIONARY_TOL:
            raise ErgodicityError("closed-form pi(s) is not stationary for P(s)")
        flow = pi[:, None] * self.matrix
        if np.abs(flow - flow.T).max() > REVERSIBLE_TOL:
            raise ReversibilityError(f"P(s) is not reversible at s={self.s}")

    @cached_property
    def discriminant(self) -> np.ndarray:
        return discriminant(self)

    @cached_property
    def spectral(self) -> SpectralData:
        sd = SpectralData.of(self.discriminant)
        if self.s < 1.0 and sd.n > 1 and sd.top_gap() <= TOP_GAP_TOL:
            raise ErgodicityError(
                f"eigenvalue 1 of D(s) is not simple at s={self.s} (gap {sd.top_gap():.2e})"
            )
        return sd

    @property
    def U_state(self) -> np.ndarray:
        return self.proj.U_state

    @property
    def M_state(self) -> np.ndarray:
        return self.proj.M_state

    def __repr__(self) -> str:
        return f"InterpolatedChain(n={self.n}, m={self.marked.m}, s={self.s:g})"


def interpolate(P, marked, s: float, check: bool = True) -> InterpolatedChain:
    return InterpolatedChain(P, marked, s, check=check)


def stationary_interpolated(P, marked, s: float) -> np.ndarray:
    """Closed form ``pi(s) = [(1-s) pi_U, pi_M] / (1 - s (1 - p_M))``.

    The normaliser ``1 - s (1 - p_M)`` makes the vector sum to one and
    gives marked mass ``sin^2 theta(s)``.
    """
    chain = as_chain(P)
    M = MarkedSet.of(marked, chain.n)
    pi = chain.pi
    mask = M.mask
    p_M = float(pi[mask].sum())
    out = np.where(mask, pi, (1.0 - s) * pi)
    return out / (1.0 - s * (1.0 - p_M))


def discriminant(chain: InterpolatedChain) -> np.ndarray:
    """``D(s)_xy = sqrt(p_xy(s) p_yx(s))``.

    At ``s = 1`` this is ``D(P)_UU (+) I_M``. For ``s < 1`` the base chain
    must be reversible, otherwise the matrix is not similar to ``P(s)``.
    """
    if chain.s < 1.0:
        chain.base.require_reversible()
    return _sqrt_hadamard(chain.matrix)


def discriminant_derivative(chain: InterpolatedChain) -> np.ndarray:
    """Closed form ``dD/ds = {Pi_M, I - D(s)} / (2 (1 - s))``."""
    if chain.s >= 1.0:
        raise SingularityError("dD/ds is singular at s = 1")
    n = chain.n
    Pi_M = np.diag(chain.marked.mask.astype(float))
    K = np.eye(n) - chain.discriminant
    return (Pi_M @ K + K @ Pi_M) / (2.0 * (1.0 - chain.s))


# -- chain families ---------------------------------------------------------


def uniform_chain(n: int) -> MarkovChain:
    """``p_xy = 1/n`` for all pairs: the walk on the complete graph with loops."""
    if n < 2:
        raise InvalidParameterError(f"uniform chain needs n >= 2, got {n}")
    return MarkovChain(np.full((n, n), 1.0 / n), name=f"K{n}")


def grid_walk(side: int, torus: bool = True, lazy: bool = False) -> MarkovChain:
    """Random walk choosing uniformly among 4 directions and staying put."""
    moves = grid_moves(side, torus)
    n = side * side
    P = np.zeros((n, n))
    for x, targets in enumerate(moves):
        for y in targets:
            P[x, y] += 1.0 / len(targets)
    chain = MarkovChain(P, name=f"{'torus' if torus else 'grid'}{side}x{side}")
    return lazify(chain) if lazy else chain


def simple_random_walk(graph: Graph) -> MarkovChain:
    """Uniform step to a neighbour; self-loops count as one neighbour."""
    adj = graph.adjacency().astype(float)
    deg = adj.sum(axis=1)
    if np.any(deg == 0):
        raise InvalidParameterError("graph has isolated vertices")
    return MarkovChain(adj / deg[:, None], name=graph.name)


def random_reversible_chain(
    n: int, rng: np.random.Generator, extra_edges: float = 0.3, lazy: bool = True
) -> MarkovChain:
    """Random reversible chain on a random connected graph with self-loops.

    Symmetric positive edge weights on a random spanning tree plus a
    fraction of extra edges; ``P = W / rowsum(W)`` is reversible with
    ``pi`` proportional to the row sums.
    """
    W = np.zeros((n, n))
    perm = rng.permutation(n)
    for i in range(1, n):
        u, v = perm[i], perm[rng.integers(i)]
        W[u, v] = W[v, u] = rng.uniform(0.1, 1.0)
    extra = rng.random((n, n)) < extra_edges
    extra = np.triu(extra, 1)
    weights = rng.uniform(0.1, 1.0, (n, n))
    W = np.where(extra & (W == 0), np.triu(weights, 1), W)
    W = np.maximum(W, W.T)
    W[np.diag_indices(n)] = rng.uniform(0.1, 1.0, n)
    P = W / W.sum(axis=1, keepdims=True)
    chain = MarkovChain(P, name=f"random{n}")
    return lazify(chain) if lazy else chain


def random_marked_set(chain: MarkovChain, rng: np.random.Generator, max_p_M: float = 0.5):
    """Random nonempty marked set with ``p_M <= max_p_M`` (retries, then singleton)."""
    n = chain.n
    for _ in range(100):
        m = int(rng.integers(1, max(2, n // 3) + 1))
        members = rng.choice(n, size=m, replace=False)
        if chain.pi[members].sum() <= max_p_M:
            return MarkedSet(tuple(members.tolist()), n)
    return MarkedSet((int(np.argmin(chain.pi)),), n)


# -- file format ------------------------------------------------------------


def parse_chain(text: str) -> MarkovChain:
    """First data line ``n``, then ``n`` rows of ``n`` decimals."""
    rows = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append(line)
    if not rows:
        raise InvalidParameterError("empty chain file")
    try:
        n = int(rows[0])
        matrix = [[float(v) for v in row.replace(",", " ").split()] for row in rows[1:]]
    except ValueError as exc:
        raise InvalidParameterError(f"malformed chain file: {exc}") from None
    if len(matrix) != n or any(len(r) != n for r in matrix):
        raise InvalidParameterError(f"chain file must hold {n} rows of {n} entries")
    return MarkovChain(np.array(matrix))


def load_chain(path) -> MarkovChain:
    chain = parse_chain(Path(path).read_text())
    chain.name = Path(path).stem
    return chain


def format_chain(chain) -> str:
    P = _as_matrix(chain)
    lines = [str(P.shape[0])] + [" ".join(repr(float(v)) for v in row) for row in P]
    return "\n".join(lines) + "\n"


def parse_marked(text: str, n: int) -> MarkedSet:
    text = text.strip()
    if not text:
        return MarkedSet((), n)
    try:
        members = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise InvalidParameterError(f"marked set must be comma-separated indices: {text!r}") from None
    return MarkedSet(tuple(members), n)


def warn_large_p_M(p_M: float) -> None:
    if p_M > 0.5:
        warnings.warn(
            f"p_M = {p_M:.3g} > 1/2: sampling from pi already finds a marked vertex",
            stacklevel=3,
        )

