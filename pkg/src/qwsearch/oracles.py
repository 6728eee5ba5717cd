"""Check oracle and the ancilla circuit that builds ``V(P(s))`` from ``V(P)``.

Circuit registers are held as an array of shape ``(n, n, 2, 2)``:
vertex, coin, marking qubit, rotation qubit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chain import MarkedSet, as_chain, interpolate
from .errors import CircuitError, InvalidParameterError, VerificationError
from .ledger import CostLedger
from .walk import ImplicitWalk

ANCILLA_TOL = 1e-9


class CheckOracle:
    """``|x>|b> -> |x>|b xor [x in M]>``, extended by linearity."""

    def __init__(self, marked, n: int):
        self.marked = MarkedSet.of(marked, n)
        self.n = n

    def apply(self, state: np.ndarray, axis: int, ledger: CostLedger | None = None) -> np.ndarray:
        """Flip the qubit on ``axis`` wherever the vertex (axis 0) is marked."""
        if ledger is not None:
            ledger.check()
        out = state.copy()
        idx = list(self.marked.members)
        if idx:
            out[idx] = np.flip(state[idx], axis=axis)
        return out

    def matrix(self) -> np.ndarray:
        """Permutation matrix on the ``(vertex, qubit)`` space, index ``2 x + b``."""
        n = self.n
        out = np.zeros((2 * n, 2 * n))
        for x in range(n):
            for b in range(2):
                c = b ^ 1 if x in self.marked else b
                out[2 * x + c, 2 * x + b] = 1.0
        return out


def check_oracle(marked, n: int) -> CheckOracle:
    return CheckOracle(marked, n)


def _rotate(state: np.ndarray, angle, where: np.ndarray) -> np.ndarray:
    """Rotate the last axis by ``angle`` (scalar or per-vertex) where ``where`` holds.

    ``R(a)|0> = cos a |0> + sin a |1>``. ``where`` broadcasts against
    ``state[..., 0]``.
    """
    c = np.cos(angle)
    s = np.sin(angle)
    if np.ndim(angle):
        c = np.reshape(c, (-1,) + (1,) * (state.ndim - 2))
        s = np.reshape(s, (-1,) + (1,) * (state.ndim - 2))
    a0, a1 = state[..., 0], state[..., 1]
    r0 = c * a0 - s * a1
    r1 = s * a0 + c * a1
    out = state.copy()
    out[..., 0] = np.where(where, r0, a0)
    out[..., 1] = np.where(where, r1, a1)
    return out


@dataclass
class CircuitResult:
    amplitudes: np.ndarray
    ancilla_leak: float
    ledger: CostLedger

    @property
    def ancilla_fidelity(self) -> float:
        return 1.0 - self.ancilla_leak


class SimulationCircuit:
    """Implements ``V(P(s))`` with one ``V(P)`` path, two Checks and two ancillas.

    The two branch-conditional ``V(P)`` calls of the textbook description
    act on disjoint control conditions (marking qubit 0, or marking 1 and
    rotation 0), so they are fused into one ``V(P)`` controlled on
    ``not (marking and rotation)``.
    """

    def __init__(self, P, marked, s: float):
        chain = as_chain(P)
        if not 0.0 <= s <= 1.0:
            raise InvalidParameterError(f"s must lie in [0, 1], got {s}")
        self.n = chain.n
        self.P = chain.P
        self.s = float(s)
        self.check = CheckOracle(marked, self.n)
        self._walk = ImplicitWalk(chain.P)
        # atan2 of the two branch amplitudes stays accurate as s -> 1, where
        # asin(sqrt(s)) would lose half the digits of cos(alpha) = sqrt(1 - s).
        self.alpha = math.atan2(math.sqrt(self.s), math.sqrt(1.0 - self.s))
        pxx = np.diag(self.P)
        # atan2(0, 0) = 0 covers p_xx = 0, s = 0, where the sqrt(s) branch is empty.
        self.beta = np.arctan2(np.sqrt(self.s), np.sqrt((1.0 - self.s) * pxx))
        diag = np.zeros((self.n, self.n), dtype=bool)
        diag[np.arange(self.n), np.arange(self.n)] = True
        self._coin_is_vertex = diag

    # individual gates ----------------------------------------------------
    def _controlled_V(self, state):
        out = state.copy()
        for b, r in ((0, 0), (0, 1), (1, 0)):
            out[:, :, b, r] = self._walk.V(state[:, :, b, r])
        return out

    def _controlled_xor(self, state, inverse=False):
        n = self.n
        out = state.copy()
        sign = -1 if inverse else 1
        x = np.arange(n)[:, None]
        y = np.arange(n)[None, :]
        target = (y + sign * x) % n
        block = np.zeros((n, n), dtype=state.dtype)
        block[np.broadcast_to(x, (n, n)), target] = state[:, :, 1, 1]
        out[:, :, 1, 1] = block
        return out

    def _marked_rotation(self, state, angle):
        where = np.zeros((self.n, self.n, 2), dtype=bool)
        where[:, :, 1] = True
        return _rotate(state, angle, where)

    def _correction(self, state, sign):
        where = np.zeros((self.n, self.n, 2), dtype=bool)
        where[:, :, 1] = self._coin_is_vertex
        angles = sign * self.beta
        return _rotate(state, angles, where)

    # circuits ------------------------------------------------------------
    def forward(self, state: np.ndarray, ledger: CostLedger | None = None) -> np.ndarray:
        ledger = ledger if ledger is not None else CostLedger()
        state = self.check.apply(state, axis=2, ledger=ledger)
        state = self._marked_rotation(state, self.alpha)
        state = self._controlled_V(state)
        ledger.v_base()
        state = self._controlled_xor(state)
        state = self._correction(state, -1.0)
        state = self.check.apply(state, axis=2, ledger=ledger)
        ledger.update()
        return state

    def inverse(self, state: np.ndarray, ledger: CostLedger | None = None) -> np.ndarray:
        ledger = ledger if ledger is not None else CostLedger()
        state = self.check.apply(state, axis=2, ledger=ledger)
        state = self._correction(state, +1.0)
        state = self._controlled_xor(state, inverse=True)
        state = self._controlled_V(state)
        ledger.v_base()
        state = self._marked_rotation(state, -self.alpha)
        state = self.check.apply(state, axis=2, ledger=ledger)
        ledger.update()
        return state

    def initial_states(self) -> np.ndarray:
        """All ``|x>|0>|0>|0>`` stacked on a leading batch axis."""
        n = self.n
        psi = np.zeros((n, n, n, 2, 2))
        psi[np.arange(n), np.arange(n), 0, 0, 0] = 1.0
        return psi

    def run(self, ledger: CostLedger | None = None) -> CircuitResult:
        """Apply the circuit to each ``|x>|0>`` and return the induced coin amplitudes.

        Row ``x`` of ``amplitudes`` is the coin state produced from ``|x>|0>``
        with both ancillas projected on ``|0>``.
        """
        ledger = ledger if ledger is not None else CostLedger()
        amps = np.zeros((self.n, self.n))
        leak = 0.0
        for x, psi in enumerate(self.initial_states()):
            single = CostLedger()
            out = self.forward(psi, single)
            if x == 0:
                ledger += single
            amps[x] = out[x, :, 0, 0]
            rest = np.sum(np.abs(out) ** 2) - np.sum(np.abs(out[x, :, 0, 0]) ** 2)
            leak = max(leak, float(rest))
        if leak > ANCILLA_TOL:
            raise CircuitError(f"ancillas left entangled (weight {leak:.2e})")
        return CircuitResult(amps, leak, ledger)


def simulate_V_interpolated(P, marked, s: float) -> CircuitResult:
    """Run the Simulation circuit; ``amplitudes[x, y]`` should be ``sqrt(p_xy(s))``."""
    return SimulationCircuit(P, marked, s).run()


def circuit_equivalence(P, marked, s: float) -> dict:
    """Circuit output against the direct rows ``sqrt(P(s))`` and the reverse-circuit round trip."""
    circ = SimulationCircuit(P, marked, s)
    result = circ.run()
    direct = np.sqrt(interpolate(P, marked, s, check=False).matrix)
    deviation = float(np.abs(result.amplitudes - direct).max())
    roundtrip = 0.0
    for psi in circ.initial_states():
        back = circ.inverse(circ.forward(psi))
        roundtrip = max(roundtrip, float(np.abs(back - psi).max()))
    return {
        "s": float(s),
        "max_deviation": deviation,
        "ancilla_leak": result.ancilla_leak,
        "roundtrip_error": roundtrip,
        "check_calls": result.ledger.check_calls,
        "v_base_calls": result.ledger.v_base_calls,
        "ok": deviation <= 1e-10
        and result.ancilla_leak <= 1e-12
        and roundtrip <= 1e-10
        and result.ledger.check_calls == 2
        and result.ledger.v_base_calls == 1,
    }


# -- ledger audits -------------------------------------------------------------


def phase_estimation_ledger(t: int) -> CostLedger:
    """Closed-form cost of ``PhaseEstimation(W(s), t)``: ``2^t`` controlled walk steps."""
    led = CostLedger()
    led.walk(2**t)
    return led


def search_ledger(t: int, reached_phase_estimation: bool = True) -> CostLedger:
    """Closed-form cost of one ``QuantumWalkSearch`` run."""
    led = CostLedger()
    led.setup()
    led.check()
    if reached_phase_estimation:
        led += phase_estimation_ledger(t)
        led.check()
    return led


def ledger_formula_check(ledger: CostLedger, t: int, reached_phase_estimation: bool = True,
                         runs: int = 1, strict: bool = False) -> dict:
    """Compare a ledger against ``runs`` copies of the closed-form search cost."""
    expected = CostLedger()
    for _ in range(runs):
        expected += search_ledger(t, reached_phase_estimation)
    divergent = []
    for name in ("setup_calls", "update_calls", "check_calls", "shift_calls", "v_base_calls"):
        got, want = getattr(ledger, name), getattr(expected, name)
        if got != want:
            divergent.append({"counter": name, "observed": got, "expected": want})
    report = {"t": t, "runs": runs, "expected": expected.record(), "observed": ledger.record(),
              "divergent": divergent, "ok": not divergent}
    if strict and divergent:
        raise VerificationError(f"ledger audit failed: {divergent}")
    return report
