"""Classical random-walk search and a Monte Carlo hitting-time estimator."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np

from .chain import MarkedSet, as_chain
from .ledger import CostLedger
from .outcome import SearchOutcome

STEP_CAP = 10**6


def _step(cum: np.ndarray, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(states.size)
    nxt = (u[:, None] >= cum[states]).sum(axis=1)
    return np.minimum(nxt, cum.shape[1] - 1)


def random_walk_search(P, marked, T, seed=None) -> SearchOutcome:
    """Sample from ``pi``, then alternate Check and one step of ``P`` for at most ``T`` steps.

    ``T=None`` or ``math.inf`` means no budget (capped at ``STEP_CAP``).
    """
    chain = as_chain(P)
    M = MarkedSet.of(marked, chain.n)
    if T is not None and T < 0:
        raise ValueError("step budget must be nonnegative")
    budget = STEP_CAP if T is None or T == math.inf else int(T)
    rng = np.random.default_rng(seed)
    rows = np.cumsum(chain.P, axis=1).tolist()
    last = chain.n - 1
    ledger = CostLedger()
    x = int(rng.choice(chain.n, p=chain.pi))
    ledger.setup()
    mask = M.mask
    for step in range(budget + 1):
        ledger.check()
        if mask[x]:
            return SearchOutcome(result=x, ledger=ledger, steps=step)
        if step == budget:
            break
        # same rule as _step, one walker at a time
        x = min(bisect.bisect_right(rows[x], rng.random()), last)
        ledger.update()
    return SearchOutcome(result=None, ledger=ledger, steps=budget)


@dataclass
class HittingEstimate:
    mean: float
    stderr: float
    trials: int
    capped: int
    start: str

    @property
    def flagged(self) -> bool:
        return self.capped > 0


def monte_carlo_hitting_time(
    P, marked, trials: int, seed=None, start: str = "unmarked", step_cap: int = STEP_CAP
) -> HittingEstimate:
    """Mean absorption time into ``M`` over independent walks.

    ``start="unmarked"`` draws the start from ``pi`` conditioned on ``U``,
    which estimates the hitting time without the ``p_U`` factor;
    ``start="stationary"`` draws from ``pi`` and estimates the full one.
    Walks still running after ``step_cap`` steps are counted in ``capped``
    and contribute ``step_cap`` to the mean.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    chain = as_chain(P)
    M = MarkedSet.of(marked, chain.n)
    mask = M.mask
    if mask.all():
        return HittingEstimate(0.0, 0.0, trials, 0, start)
    rng = np.random.default_rng(seed)
    weights = chain.pi.copy()
    if start == "unmarked":
        weights[mask] = 0.0
    elif start != "stationary":
        raise ValueError(f"unknown start {start!r}")
    weights /= weights.sum()
    cum = np.cumsum(chain.P, axis=1)
    states = rng.choice(chain.n, size=trials, p=weights)
    times = np.zeros(trials, dtype=np.int64)
    active = np.flatnonzero(~mask[states])
    steps = 0
    while active.size and steps < step_cap:
        states[active] = _step(cum, states[active], rng)
        times[active] += 1
        active = active[~mask[states[active]]]
        steps += 1
    capped = int(active.size)
    mean = float(times.mean())
    stderr = float(times.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.inf
    return HittingEstimate(mean, stderr, trials, capped, start)
