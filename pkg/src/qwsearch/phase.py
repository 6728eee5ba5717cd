"""Phase estimation on the walk operator: exact spectral backend and dense simulation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, InvalidStateError
from .ledger import CostLedger
from .walk import PairSpaceOperator, WalkSpectralForm

MAX_T_SPECTRAL = 24
MAX_T_DENSE = 6
MAX_N_DENSE = 6
MAX_JOINT_ENTRIES = 2**25


def delta_magnitude(phi: float, t: int) -> float:
    """``|delta| = |2^-t sum_{l<2^t} e^{i phi l}|``, the ``0^t`` amplitude for phase ``phi``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    N = 2**t
    half = math.sin(phi / 2.0)
    if abs(half) < 1e-15:
        return 1.0
    return abs(math.sin(N * phi / 2.0)) / (N * abs(half))


def ancilla_amplitudes(phis: np.ndarray, t: int) -> np.ndarray:
    """``f[m, j] = 2^-t sum_l exp(-2 pi i l m / 2^t) exp(i phis[j] l)``."""
    N = 2**t
    phis = np.atleast_1d(np.asarray(phis, dtype=float))
    l = np.arange(N)[:, None]
    seq = np.exp(1j * l * phis[None, :])
    return np.fft.fft(seq, axis=0) / N


@dataclass
class PhaseEstimationOutput:
    """Joint law of the ancilla outcome ``m`` and the vertex register.

    ``vertex_joint[m, x]`` is the probability of reading ``m`` on the
    ancillas and ``x`` on the vertex register; ``conditional`` optionally
    holds the (unnormalised) post-measurement walk states per ``m``.
    """

    t: int
    vertex_joint: np.ndarray
    eigen_weights: np.ndarray | None = None
    conditional: object = None
    info: dict = field(default_factory=dict)

    @property
    def ancilla_probs(self) -> np.ndarray:
        return self.vertex_joint.sum(axis=1)

    @property
    def vertex_probs(self) -> np.ndarray:
        return self.vertex_joint.sum(axis=0)

    @property
    def total(self) -> float:
        return float(self.vertex_joint.sum())

    def marked_probability(self, mask: np.ndarray) -> float:
        return float(self.vertex_joint[:, mask].sum())

    def ancilla_zero_given_unmarked(self, mask: np.ndarray) -> float:
        unmarked = self.vertex_joint[:, ~mask]
        tot = unmarked.sum()
        return float(unmarked[0].sum() / tot) if tot > 0 else math.nan


def total_variation(a: PhaseEstimationOutput, b: PhaseEstimationOutput) -> float:
    return 0.5 * float(np.abs(a.vertex_joint - b.vertex_joint).sum())


# -- spectral backend --------------------------------------------------------------


def walk_overlaps(form: WalkSpectralForm, c1: np.ndarray, c2: np.ndarray):
    """Overlaps ``<a_k|psi>`` and ``<b_k|psi>`` for ``psi = V^dagger (A c1 + Shift A c2)``."""
    D = form.chain.discriminant
    V = form.spectral.vectors
    lam = form.lambdas
    on_a = V.T @ (c1 + D @ c2)
    on_wa = V.T @ (D @ c1 + c2)
    on_b = np.zeros_like(on_a)
    moving = ~form.fixed_mask
    sin = np.sin(form.phis[moving])
    on_b[moving] = (on_wa[moving] - lam[moving] * on_a[moving]) / sin
    return on_a, on_b


def compact_norm2(form: WalkSpectralForm, c1: np.ndarray, c2: np.ndarray) -> float:
    D = form.chain.discriminant
    return float(np.real(np.vdot(c1, c1) + 2 * np.vdot(c1, D @ c2).real + np.vdot(c2, c2)))


def phase_estimation_spectral(form: WalkSpectralForm, t: int, c1, c2=None,
                              keep_states: bool = False) -> PhaseEstimationOutput:
    """Exact phase estimation of ``W(s)`` on a walk-space state.

    The input is ``V^dagger (A c1 + Shift A c2)`` (``c2`` defaults to 0, so
    ``c1`` alone means ``sum_x c1[x] |x>|0>``). It is expanded over the
    eigenvectors ``Psi_n``, ``Psi_k^+-``; each picks up the ancilla amplitudes
    of its eigenphase, and the vertex-register law is read off through the
    ``n x n`` Gram blocks of the ``(A, Shift A)`` frame.
    """
    if t < 0 or t > MAX_T_SPECTRAL:
        raise CapacityError(f"spectral phase estimation supports 0 <= t <= {MAX_T_SPECTRAL}")
    if 2**t * form.n > MAX_JOINT_ENTRIES:
        raise CapacityError(f"joint table 2^{t} x {form.n} exceeds {MAX_JOINT_ENTRIES} entries")
    c1 = np.asarray(c1, dtype=complex)
    c2 = np.zeros_like(c1) if c2 is None else np.asarray(c2, dtype=complex)
    on_a, on_b = walk_overlaps(form, c1, c2)
    norm2 = compact_norm2(form, c1, c2)
    captured = float(np.sum(np.abs(on_a) ** 2) + np.sum(np.abs(on_b) ** 2))
    if abs(captured - norm2) > 1e-9 * max(1.0, norm2):
        raise InvalidStateError(f"input has weight {norm2 - captured:.2e} outside the walk space")

    moving = ~form.fixed_mask
    phis = form.phis
    r = 1.0 / math.sqrt(2.0)
    beta_p = r * (on_a + 1j * on_b)  # <Psi+|psi>
    beta_m = r * (on_a - 1j * on_b)  # <Psi-|psi>
    f_p = ancilla_amplitudes(phis, t)
    f_m = ancilla_amplitudes(-phis, t)

    coef_a = np.where(moving, r * (beta_p * f_p + beta_m * f_m), on_a * f_p)
    coef_b = np.where(moving, -1j * r * (beta_p * f_p - beta_m * f_m), 0.0)

    lam = form.lambdas
    sin = np.where(moving, np.sin(phis), 1.0)
    V = form.spectral.vectors
    X = (coef_a - coef_b * np.where(moving, lam / sin, 0.0)) @ V.T
    Y = (coef_b * np.where(moving, 1.0 / sin, 0.0)) @ V.T
    D = form.chain.discriminant
    Pm = form.chain.matrix
    joint = np.abs(X) ** 2 + 2.0 * np.real(np.conj(X) * (Y @ D)) + (np.abs(Y) ** 2) @ Pm
    joint = np.clip(joint, 0.0, None)

    weights = np.where(moving, np.abs(beta_p) ** 2 + np.abs(beta_m) ** 2, np.abs(on_a) ** 2)
    out = PhaseEstimationOutput(t, joint, eigen_weights=weights)
    out.info["input_norm2"] = norm2
    if keep_states:
        out.conditional = (X, Y)
    return out


def eigen_input(form: WalkSpectralForm, k: int, sign: int = 1):
    """Compact coefficients of ``Psi_k^{sign}`` (or ``Psi_n`` for fixed blocks)."""
    return form.eigenvector_coeffs(k, sign)


# -- dense backend -------------------------------------------------------------------


def phase_estimation_dense(W: PairSpaceOperator, t: int, state: np.ndarray,
                           ledger: CostLedger | None = None) -> PhaseEstimationOutput:
    """Literal circuit: Hadamards, controlled ``W^(2^l)`` ladder, inverse QFT.

    ``state`` is a pair-space vector of length ``n^2``. The ancilla register
    value ``j`` has bit ``l`` controlling ``W^(2^l)``.
    """
    dim = W.dim
    n = int(round(math.sqrt(dim)))
    if n > MAX_N_DENSE or t > MAX_T_DENSE or t < 0:
        raise CapacityError(
            f"dense phase estimation limited to n <= {MAX_N_DENSE}, t <= {MAX_T_DENSE}"
        )
    N = 2**t
    psi = np.asarray(state, dtype=complex).reshape(dim)
    reg = np.tile(psi, (N, 1)) / math.sqrt(N)
    power = W.matrix.astype(complex)
    j = np.arange(N)
    for l in range(t):
        rows = (j >> l) & 1 == 1
        reg[rows] = reg[rows] @ power.T
        power = power @ power
    if ledger is not None:
        ledger.walk(N)
    reg = np.fft.fft(reg, axis=0) / math.sqrt(N)
    amp = reg.reshape(N, n, n)
    joint = (np.abs(amp) ** 2).sum(axis=2)
    out = PhaseEstimationOutput(t, joint)
    out.conditional = amp
    return out
