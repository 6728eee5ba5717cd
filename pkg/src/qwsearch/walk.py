"""Szegedy quantization ``W = V^dagger Shift V ref_X`` of an interpolated chain.

Pair-space index convention: ``|x>|y>`` is index ``x * n + y`` and a pair-space
vector reshaped to ``(n, n)`` has the vertex register on axis 0. The
reference coin state is basis vector 0.

Walk-space vectors are stored compactly as coefficient pairs ``(c1, c2)``
meaning ``V^dagger (A c1 + Shift A c2)`` with ``A|x> = |x>|p_x>``. Inner
products of such vectors only need ``n x n`` Gram blocks, which is what
lets the search simulation scale past the dense pair space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .chain import InterpolatedChain, MarkovChain, SpectralData
from .errors import (
    CapacityError,
    DegenerateBlockError,
    LocalityError,
    VerificationError,
)
from .graph import Graph, validate_chain_locality
from .ledger import CostLedger

UNITARY_TOL = 1e-9
DENSE_LIMIT = 100
LEMMA1_LIMIT = 16
FIXED_TOL = 1e-12


def _rows(chain) -> np.ndarray:
    if isinstance(chain, InterpolatedChain):
        return chain.matrix
    return np.asarray(getattr(chain, "P", chain), dtype=float)


def householder_block(u: np.ndarray) -> np.ndarray:
    """Real orthogonal, symmetric matrix whose first column is the unit vector ``u``."""
    n = u.size
    w = -u.astype(float).copy()
    w[0] += 1.0
    norm2 = w @ w
    if norm2 < 1e-30:
        return np.eye(n)
    return np.eye(n) - 2.0 * np.outer(w, w) / norm2


@dataclass(frozen=True)
class PairSpaceOperator:
    matrix: np.ndarray
    name: str = ""

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def unitarity_defect(self) -> float:
        A = self.matrix
        return float(np.abs(A.conj().T @ A - np.eye(self.dim)).max())

    def is_unitary(self, tol: float = UNITARY_TOL) -> bool:
        return self.unitarity_defect() <= tol

    def __matmul__(self, other):
        if isinstance(other, PairSpaceOperator):
            return PairSpaceOperator(self.matrix @ other.matrix, f"{self.name}*{other.name}")
        return self.matrix @ other


def _check_dense(n: int) -> None:
    if n > DENSE_LIMIT:
        raise CapacityError(f"dense pair space limited to n <= {DENSE_LIMIT}, got n={n}")


def build_isometry_V(chain) -> PairSpaceOperator:
    """Block-diagonal ``V`` with ``V|x>|0> = |x> sum_y sqrt(p_xy) |y>``."""
    P = _rows(chain)
    n = P.shape[0]
    _check_dense(n)
    blocks = [householder_block(np.sqrt(P[x])) for x in range(n)]
    return PairSpaceOperator(sla.block_diag(*blocks), "V")


def build_shift(graph: Graph) -> PairSpaceOperator:
    """Permutation ``|x>|y> -> |y>|x>`` on edges, identity elsewhere."""
    n = graph.n
    _check_dense(n)
    adj = graph.adjacency()
    perm = np.arange(n * n).reshape(n, n)
    target = np.where(adj, perm.T, perm).ravel()
    S = np.zeros((n * n, n * n))
    S[target, np.arange(n * n)] = 1.0
    return PairSpaceOperator(S, "Shift")


def reflection_X(n: int) -> PairSpaceOperator:
    _check_dense(n)
    d = -np.ones(n * n)
    d[:: n] = 1.0
    return PairSpaceOperator(np.diag(d), "ref_X")


def _require_local(chain, graph: Graph) -> None:
    report = validate_chain_locality(_rows(chain), graph)
    if not report.ok:
        raise LocalityError(
            f"chain uses {len(report.violations)} non-edge transitions", report.violations
        )


def build_walk_dense(chain, graph: Graph) -> PairSpaceOperator:
    """Dense ``W(s)`` on the pair space, checked for unitarity and Shift locality."""
    _require_local(chain, graph)
    P = _rows(chain)
    n = P.shape[0]
    V = build_isometry_V(P).matrix
    W = V.T @ build_shift(graph).matrix @ V @ reflection_X(n).matrix
    op = PairSpaceOperator(W, "W")
    if not op.is_unitary():
        raise VerificationError(f"W is not unitary (defect {op.unitarity_defect():.2e})")
    # Shift must only ever see edge-supported amplitudes on the walk space.
    support = (P > 0) | (P.T > 0) | np.eye(n, dtype=bool)
    basis = walk_space_pair_vectors(chain)
    pre_shift = (V @ reflection_X(n).matrix @ basis).reshape(n, n, -1)
    leak = np.abs(pre_shift[~support]).max(initial=0.0)
    if leak > 1e-9:
        raise LocalityError(f"walk-space amplitude {leak:.2e} on a non-edge before Shift")
    return op


# -- implicit pair-space action -----------------------------------------------


class ImplicitWalk:
    """Matrix-free ``V``, Shift, ``ref_X`` and ``W`` on ``(n, n)`` arrays."""

    def __init__(self, chain, graph: Graph | None = None):
        P = _rows(chain)
        self.n = P.shape[0]
        self.sqrtP = np.sqrt(P)
        w = -self.sqrtP.copy()
        w[:, 0] += 1.0
        self._w = w
        norm2 = (w * w).sum(axis=1)
        self._scale = np.where(norm2 > 1e-30, 2.0 / np.where(norm2 > 1e-30, norm2, 1.0), 0.0)
        if graph is None:
            self.adj = (P > 0) | (P.T > 0)
        else:
            _require_local(P, graph)
            self.adj = graph.adjacency()

    def V(self, psi: np.ndarray) -> np.ndarray:
        dots = (self._w * psi).sum(axis=1)
        return psi - self._w * (self._scale * dots)[:, None]

    # Householder blocks are symmetric and real, so V is its own adjoint.
    Vdag = V

    def shift(self, psi: np.ndarray) -> np.ndarray:
        return np.where(self.adj, psi.T, psi)

    def ref_X(self, psi: np.ndarray) -> np.ndarray:
        out = -psi
        out[:, 0] = psi[:, 0]
        return out

    def W(self, psi: np.ndarray, ledger: CostLedger | None = None) -> np.ndarray:
        if ledger is not None:
            ledger.walk()
        return self.Vdag(self.shift(self.V(self.ref_X(psi))))


# -- compact walk-space representation --------------------------------------


@dataclass
class WalkBlock:
    k: int
    lam: float
    phi: float
    fixed: bool


@dataclass
class WalkSpectralForm:
    """Two-dimensional block form of ``W(s)``.

    For each non-stationary eigenvector ``v_k`` of ``D(s)`` the block is
    spanned by ``a_k = v_k (x) 0`` and ``b_k = (W a_k - lambda_k a_k) / sin phi_k``;
    in that basis ``W`` is a rotation by ``phi_k = arccos lambda_k`` with
    eigenvectors ``Psi_k^+- = (a_k -+ i b_k) / sqrt(2)`` and eigenvalues
    ``exp(+-i phi_k)``. Eigenvalue-1 vectors (the stationary line, and at
    ``s = 1`` the whole marked block) form fixed 1-D blocks.
    """

    chain: InterpolatedChain
    spectral: SpectralData
    blocks: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.spectral.n

    @property
    def lambdas(self) -> np.ndarray:
        return self.spectral.lambdas

    @property
    def phis(self) -> np.ndarray:
        return np.array([b.phi for b in self.blocks])

    @property
    def fixed_mask(self) -> np.ndarray:
        return np.array([b.fixed for b in self.blocks])

    @property
    def dimension(self) -> int:
        return int(sum(1 if b.fixed else 2 for b in self.blocks))

    def block_records(self, residuals=None) -> list:
        out = []
        for b in self.blocks:
            rec = {"k": b.k, "lambda": float(b.lam), "phi": float(b.phi)}
            if residuals is not None:
                rec["residual"] = float(residuals.get(b.k, 0.0))
            out.append(rec)
        return out

    # Coefficients (c1, c2) of a_k and b_k in the (A, Shift A) frame.
    def a_coeffs(self, k: int):
        v = self.spectral.vectors[:, k]
        return v, np.zeros_like(v)

    def b_coeffs(self, k: int):
        b = self.blocks[k]
        v = self.spectral.vectors[:, k]
        sin = math.sin(b.phi)
        return -b.lam * v / sin, v / sin

    def eigenvector_coeffs(self, k: int, sign: int):
        """``Psi_k^{sign}`` as complex ``(c1, c2)`` coefficients."""
        a1, a2 = self.a_coeffs(k)
        if self.blocks[k].fixed:
            return a1.astype(complex), a2.astype(complex)
        b1, b2 = self.b_coeffs(k)
        c = -1j * sign
        r = 1.0 / math.sqrt(2.0)
        return r * (a1 + c * b1), r * (a2 + c * b2)

    def coeffs_to_pair(self, c1: np.ndarray, c2: np.ndarray, walk: ImplicitWalk) -> np.ndarray:
        """Materialize ``V^dagger (A c1 + Shift A c2)`` as an ``(n, n)`` array."""
        sq = walk.sqrtP
        frame = c1[:, None] * sq + (c2[:, None] * sq).T
        return walk.Vdag(frame)

    def basis_coeffs(self):
        """Real orthonormal walk-space basis: ``a_k`` for every block, ``b_k`` for 2-D ones."""
        out = []
        for b in self.blocks:
            out.append(self.a_coeffs(b.k))
            if not b.fixed:
                out.append(self.b_coeffs(b.k))
        return out


def build_walk_spectral(chain: InterpolatedChain) -> WalkSpectralForm:
    sd = chain.spectral
    blocks = []
    for k, lam in enumerate(sd.lambdas):
        lam = float(lam)
        if lam >= 1.0 - FIXED_TOL:
            blocks.append(WalkBlock(k, 1.0, 0.0, True))
            continue
        lam_c = max(-1.0, lam)
        phi = math.acos(lam_c)
        # |W a_k - <a_k, W a_k> a_k| = sin(phi_k)
        if math.sqrt(max(0.0, 1.0 - lam_c * lam_c)) < 1e-10:
            raise DegenerateBlockError(f"block {k} is one-dimensional (lambda={lam})")
        blocks.append(WalkBlock(k, lam, phi, False))
    return WalkSpectralForm(chain, sd, blocks)


def walk_space_pair_vectors(chain) -> np.ndarray:
    """Orthonormal walk-space basis as columns of an ``n^2 x d`` real matrix."""
    if not isinstance(chain, InterpolatedChain):
        raise TypeError("walk space needs an InterpolatedChain")
    form = build_walk_spectral(chain)
    walk = ImplicitWalk(chain)
    cols = [form.coeffs_to_pair(c1, c2, walk).ravel() for c1, c2 in form.basis_coeffs()]
    return np.array(cols).T


# -- verification ------------------------------------------------------------


def _krylov_closure(W: np.ndarray, X: np.ndarray, tol: float = 1e-9, max_iter: int = 64):
    basis = sla.orth(X, rcond=tol)
    for _ in range(max_iter):
        grown = sla.orth(np.hstack([basis, W @ basis, W.conj().T @ basis]), rcond=tol)
        if grown.shape[1] == basis.shape[1]:
            return grown
        basis = grown
    return basis


def verify_lemma1(chain: InterpolatedChain, graph: Graph, tol: float = 1e-8) -> dict:
    """Cross-check the analytic block form against the dense operator.

    Compares the eigenphase multiset of ``W`` restricted to the walk space
    with ``{0} U {+-phi_k}``, the principal angles between the block sum and
    the invariant closure of ``X`` under the dense ``W``, eigen-residuals of
    every ``Psi_k^+-``, and ``(Psi^+ + Psi^-)/sqrt(2) = v_k (x) 0``.
    """
    n = chain.n
    if n > LEMMA1_LIMIT:
        raise CapacityError(f"block verification limited to n <= {LEMMA1_LIMIT}")
    W = build_walk_dense(chain, graph).matrix
    form = build_walk_spectral(chain)
    walk = ImplicitWalk(chain, graph)
    Q = walk_space_pair_vectors(chain)
    ortho = float(np.abs(Q.T @ Q - np.eye(Q.shape[1])).max())

    H = Q.T @ W @ Q
    invariance = float(np.abs(W @ Q - Q @ H).max())
    dense_phases = np.sort(np.angle(np.linalg.eigvals(H)))
    analytic = []
    for b in form.blocks:
        analytic += [0.0] if b.fixed else [b.phi, -b.phi]
    analytic = np.sort(np.array(analytic))
    phase_error = float(np.abs(dense_phases - analytic).max())

    X = np.zeros((n * n, n))
    X[np.arange(n) * n, np.arange(n)] = 1.0
    closure = _krylov_closure(W, X)
    dims = (int(closure.shape[1]), int(Q.shape[1]))
    if dims[0] == dims[1]:
        angle = float(np.max(sla.subspace_angles(closure, Q)))
    else:
        angle = math.inf

    # Dense eigenprojectors from the (diagonal) complex Schur form of W.
    T, Z = sla.schur(W.astype(complex), output="complex")
    mu = np.diag(T)
    residuals = {}
    projector_error = 0.0
    identity_error = 0.0
    for b in form.blocks:
        a = form.coeffs_to_pair(*form.a_coeffs(b.k), walk).ravel()
        if b.fixed:
            residuals[b.k] = float(np.abs(W @ a - a).max())
            continue
        psis = {}
        for sign in (+1, -1):
            psi = form.coeffs_to_pair(*form.eigenvector_coeffs(b.k, sign), walk).ravel()
            target = np.exp(1j * sign * b.phi)
            res = float(np.abs(W @ psi - target * psi).max())
            residuals[b.k] = max(residuals.get(b.k, 0.0), res)
            cols = Z[:, np.abs(mu - target) < 1e-6]
            dense_psi = math.sqrt(2.0) * cols @ (cols.conj().T @ a)
            projector_error = max(projector_error, float(np.abs(dense_psi - psi).max()))
            psis[sign] = psi
        identity_error = max(
            identity_error, float(np.abs((psis[1] + psis[-1]) / math.sqrt(2.0) - a).max())
        )

    max_residual = max(residuals.values()) if residuals else 0.0
    checks = {
        "basis_orthonormal": ortho <= 1e-9,
        "invariant": invariance <= tol,
        "eigenphases": phase_error <= tol,
        "subspace": dims[0] == dims[1] and angle <= tol,
        "eigen_residuals": max_residual <= tol,
        "dense_projectors": projector_error <= tol,
        "psi_sum_identity": identity_error <= 1e-9,
    }
    return {
        "n": n,
        "s": chain.s,
        "walk_space_dim": dims[1],
        "dense_closure_dim": dims[0],
        "basis_orthonormality": ortho,
        "invariance_residual": invariance,
        "eigenphase_error": phase_error,
        "max_subspace_angle": angle,
        "max_eigen_residual": max_residual,
        "dense_projector_error": projector_error,
        "psi_sum_error": identity_error,
        "blocks": form.block_records(residuals),
        "checks": checks,
        "ok": all(checks.values()),
    }


def szegedy_square_check(chain: InterpolatedChain, graph: Graph) -> dict:
    """``(V W V^dagger)^2`` is unitary and matches ``W^2`` phases on the conjugated walk space."""
    if chain.n > 8:
        raise CapacityError("square check limited to n <= 8")
    W = build_walk_dense(chain, graph).matrix
    V = build_isometry_V(chain).matrix
    Sz = V @ W @ V.T
    Sz2 = Sz @ Sz
    Q = walk_space_pair_vectors(chain)
    VQ = V @ Q
    ph_sz = np.sort(np.angle(np.linalg.eigvals(VQ.T @ Sz2 @ VQ)))
    ph_w = np.sort(np.angle(np.linalg.eigvals(Q.T @ (W @ W) @ Q)))
    # phases near +-pi may wrap differently; compare on the unit circle
    diff = np.abs(np.exp(1j * ph_sz)[:, None] - np.exp(1j * ph_w)[None, :])
    matched = float(np.max(np.min(diff, axis=1)))
    defect = float(np.abs(Sz2.T @ Sz2 - np.eye(Sz2.shape[0])).max())
    return {"unitarity_defect": defect, "phase_mismatch": matched,
            "ok": defect <= UNITARY_TOL and matched <= 1e-8}


def chain_of(P) -> MarkovChain:
    return P if isinstance(P, MarkovChain) else MarkovChain(P)
