"""Oracle call counters for the Setup / Update / Check cost model."""

from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass
class CostLedger:
    """Integer counters of oracle invocations.

    ``update_calls`` counts every application of ``V``, ``V^dagger`` or
    Shift (each is one Update); ``shift_calls`` is the Shift subset of those.
    ``v_base_calls`` counts raw ``V(P)`` / ``V(P)^dagger`` calls made inside
    interpolated updates, for the composite ``C + U`` view.
    """

    setup_calls: int = 0
    update_calls: int = 0
    check_calls: int = 0
    shift_calls: int = 0
    v_base_calls: int = 0

    def setup(self, k: int = 1) -> None:
        self._bump("setup_calls", k)

    def update(self, k: int = 1) -> None:
        self._bump("update_calls", k)

    def check(self, k: int = 1) -> None:
        self._bump("check_calls", k)

    def shift(self, k: int = 1) -> None:
        self._bump("update_calls", k)
        self._bump("shift_calls", k)

    def v_base(self, k: int = 1) -> None:
        self._bump("v_base_calls", k)

    def walk(self, k: int = 1) -> None:
        """``k`` applications of ``W(s) = V(s)^dagger Shift V(s) ref``.

        Each costs 3 Updates (one of them a Shift) and, since every
        interpolated ``V(s)`` is simulated with 2 Checks and one ``V(P)``,
        4 Checks and 2 raw ``V(P)`` calls.
        """
        self.update(2 * k)
        self.shift(k)
        self.check(4 * k)
        self.v_base(2 * k)

    def _bump(self, name: str, k: int) -> None:
        if k < 0:
            raise ValueError("ledger counters are monotone")
        setattr(self, name, getattr(self, name) + int(k))

    def __add__(self, other: "CostLedger") -> "CostLedger":
        return CostLedger(**{k: v + getattr(other, k) for k, v in asdict(self).items()})

    def __iadd__(self, other: "CostLedger") -> "CostLedger":
        for k, v in asdict(other).items():
            setattr(self, k, getattr(self, k) + v)
        return self

    def record(self) -> dict:
        """Serialised form ``{setup, update, check, shift}``."""
        return {
            "setup": self.setup_calls,
            "update": self.update_calls,
            "check": self.check_calls,
            "shift": self.shift_calls,
        }

    def cost(self, S: float = 1.0, U: float = 1.0, C: float = 1.0) -> float:
        """Weighted cost ``setup * S + update * U + check * C``."""
        return self.setup_calls * S + self.update_calls * U + self.check_calls * C
