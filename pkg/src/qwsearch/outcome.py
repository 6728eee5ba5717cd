from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .ledger import CostLedger

NO_MARKED = "no marked vertex"


@dataclass
class SearchOutcome:
    """Result of one search procedure.

    ``result`` is the vertex found, or ``None`` for "no marked vertex".
    Exact-mode runs fill ``success_probability_exact`` and the two terms of
    the lower bound; sample-mode runs leave them ``None`` unless computed.
    """

    result: Optional[int]
    ledger: CostLedger = field(default_factory=CostLedger)
    success_probability_exact: Optional[float] = None
    eps1_term: Optional[float] = None
    eps2_term: Optional[float] = None
    steps: Optional[int] = None
    ancilla: Optional[int] = None
    trace: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def found(self) -> bool:
        return self.result is not None

    def result_label(self):
        return NO_MARKED if self.result is None else self.result
