"""Phase-estimation search on the interpolated walk and its parameter-free wrappers.

Every search mode has two faces. ``mode="exact"`` propagates the
probabilities of each run analytically and never samples; ``mode="sample"``
draws outcomes from exactly the same per-run law with an explicit seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chain import (
    InterpolatedChain,
    MarkedSet,
    as_chain,
    projections,
    s_star,
    sin2_theta,
)
from .errors import (
    BudgetExceededError,
    DomainError,
    InvalidParameterError,
    VerificationError,
)
from .graph import Graph
from .hitting import hitting_time_spectral
from .ledger import CostLedger
from .oracles import search_ledger
from .outcome import SearchOutcome
from .phase import (
    PhaseEstimationOutput,
    delta_magnitude,
    phase_estimation_dense,
    phase_estimation_spectral,
)
from .walk import build_walk_dense, build_walk_spectral

EPS1 = 0.1
EPS2 = 0.05
REPETITIONS = 28
T_CAP = 24
PROBES_PER_LEVEL = 29
RETRY_BUDGET = 3
P_FLOOR = 2.0**-30
BOUND_SLACK = 1e-10
MODES = ("exact", "sample")


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise InvalidParameterError(f"mode must be one of {MODES}, got {mode!r}")


def t_for_hitting_time(ht: float, factor: float = 10.0) -> int:
    """Smallest ``t`` with ``2^t >= factor * sqrt(ht)``."""
    target = factor * math.sqrt(max(ht, 0.0))
    return max(0, math.ceil(math.log2(target))) if target > 1 else 0


@dataclass
class RunLaw:
    """Exact law of one search run at ``(p_star, t)``."""

    p_star: float
    s: float
    t: int
    p_M: float
    marked_given_walk: float
    eps1_term: float
    eps2_term: float
    ht_s: float
    phase: PhaseEstimationOutput | None = None
    zero_given_unmarked: float = math.nan

    @property
    def success(self) -> float:
        return self.p_M + (1.0 - self.p_M) * self.marked_given_walk

    @property
    def ht_bound_term(self) -> float:
        """``(pi^2 / 2) HT(s) / 2^(2t)``, an upper bound on the eps2 term."""
        return 0.5 * math.pi**2 * self.ht_s / 4.0**self.t

    @property
    def theorem_conditions(self) -> bool:
        return self.eps1_term >= EPS1 and self.ht_bound_term <= EPS2

    def run_ledger(self, reached_walk: bool = True) -> CostLedger:
        return search_ledger(self.t, reached_walk)


class QuantumWalkSearcher:
    """Search runs on a fixed ``(P, M)``, caching the exact law per ``(s, t)``.

    ``backend="dense"`` routes phase estimation through the literal circuit
    simulation and needs ``graph`` (and a small instance).
    """

    def __init__(self, P, marked, graph: Graph | None = None, backend: str = "spectral"):
        self.chain = as_chain(P)
        self.chain.require_reversible()
        self.marked = MarkedSet.of(marked, self.chain.n)
        if backend not in ("spectral", "dense"):
            raise InvalidParameterError(f"unknown backend {backend!r}")
        if backend == "dense" and graph is None:
            raise InvalidParameterError("dense backend needs the underlying graph")
        self.graph = graph
        self.backend = backend
        self.proj = projections(self.chain, self.marked)
        self._laws: dict = {}
        pi = self.chain.pi
        mask = self.marked.mask
        self._marked_law = np.where(mask, pi, 0.0)
        if self.proj.p_M > 0:
            self._marked_law = self._marked_law / self._marked_law.sum()

    @property
    def p_M(self) -> float:
        return self.proj.p_M

    @property
    def n(self) -> int:
        return self.chain.n

    # exact law -------------------------------------------------------------
    def law(self, p_star: float, t: int) -> RunLaw:
        if not 0.0 < p_star <= 0.5:
            raise DomainError(f"p_star must lie in (0, 1/2], got {p_star}")
        if int(t) != t or t < 0:
            raise InvalidParameterError(f"t must be a nonnegative integer, got {t}")
        t = int(t)
        s = s_star(p_star)
        key = (round(s, 15), t)
        if key in self._laws:
            return self._laws[key]
        law = self._compute_law(p_star, s, t)
        self._laws[key] = law
        return law

    def _compute_law(self, p_star: float, s: float, t: int) -> RunLaw:
        mask = self.marked.mask
        p_M = self.p_M
        if self.proj.p_U <= 0.0:
            return RunLaw(p_star, s, t, p_M, 0.0, 0.0, 0.0, 0.0)
        ich = InterpolatedChain(self.chain, self.marked, s)
        u = ich.U_state
        if self.backend == "dense":
            W = build_walk_dense(ich, self.graph)
            psi = np.zeros((self.n, self.n))
            psi[:, 0] = u
            phase = phase_estimation_dense(W, t, psi.ravel())
        else:
            phase = phase_estimation_spectral(build_walk_spectral(ich), t, u)
        marked_given_walk = phase.marked_probability(mask) / phase.total

        sd = ich.spectral
        alpha = sd.overlaps(u)
        if self.marked.m:
            s2 = sin2_theta(p_M, s)
            eps1 = s2 * (1.0 - s2)
            top = sd.n - 1
            eps2 = 0.0
            for k in range(sd.n):
                if k == top:
                    continue
                phi = math.acos(max(-1.0, min(1.0, float(sd.lambdas[k]))))
                eps2 += float(alpha[k]) ** 2 * delta_magnitude(phi, t) ** 2
            ht_s = hitting_time_spectral(ich)
        else:
            eps1 = eps2 = ht_s = 0.0
        law = RunLaw(p_star, s, t, p_M, marked_given_walk, eps1, eps2, ht_s, phase,
                     phase.ancilla_zero_given_unmarked(mask))
        if self.marked.m and marked_given_walk < eps1 - eps2 - BOUND_SLACK:
            raise VerificationError(
                f"success {marked_given_walk:.6g} below cos^2 sin^2 - sum |alpha|^2 delta^2 "
                f"= {eps1 - eps2:.6g} (p*={p_star}, t={t})"
            )
        return law

    # single run ------------------------------------------------------------
    def run(self, p_star: float, t: int, mode: str = "exact", seed=None) -> SearchOutcome:
        _check_mode(mode)
        law = self.law(p_star, t)
        info = {"s": law.s, "p_star": p_star, "t": law.t, "p_M": law.p_M,
                "ht_bound_term": law.ht_bound_term}
        if mode == "exact":
            return self._exact_outcome(law, info)
        return self._sample_outcome(law, _rng(seed), info)

    def _exact_outcome(self, law: RunLaw, info: dict) -> SearchOutcome:
        mask = self.marked.mask
        per_vertex = law.p_M * self._marked_law
        if law.phase is not None:
            walk = law.phase.vertex_probs / law.phase.total
            per_vertex = per_vertex + (1.0 - law.p_M) * np.where(mask, walk, 0.0)
        result = int(np.argmax(per_vertex)) if self.marked.m else None
        info["vertex_success"] = per_vertex.tolist()
        info["theorem_conditions"] = law.theorem_conditions
        if law.theorem_conditions and law.success < EPS1 - EPS2 - BOUND_SLACK:
            raise VerificationError(f"success {law.success:.6g} below {EPS1 - EPS2}")
        return SearchOutcome(
            result=result,
            ledger=law.run_ledger(law.phase is not None),
            success_probability_exact=min(1.0, max(0.0, law.success)),
            eps1_term=law.eps1_term,
            eps2_term=law.eps2_term,
            steps=law.t,
            info=info,
        )

    def _sample_outcome(self, law: RunLaw, rng: np.random.Generator, info: dict) -> SearchOutcome:
        ledger = CostLedger()
        ledger.setup()
        ledger.check()
        if self.marked.m and rng.random() < law.p_M:
            v = int(rng.choice(self.n, p=self._marked_law))
            info["branch"] = "initial"
            return SearchOutcome(v, ledger, eps1_term=law.eps1_term, eps2_term=law.eps2_term,
                                 steps=law.t, info=info)
        ledger.walk(2**law.t)
        ledger.check()
        joint = law.phase.vertex_joint
        flat = joint.ravel() / joint.sum()
        idx = int(rng.choice(flat.size, p=flat))
        m, x = divmod(idx, self.n)
        info["branch"] = "walk"
        info["vertex"] = x
        result = x if x in self.marked else None
        return SearchOutcome(result, ledger, eps1_term=law.eps1_term, eps2_term=law.eps2_term,
                             steps=law.t, ancilla=m, info=info)

    # repeated-doubling search ---------------------------------------------
    def auto(self, p_star: float, k: int = REPETITIONS, mode: str = "sample", seed=None,
             t_cap: int = T_CAP) -> SearchOutcome:
        _check_mode(mode)
        if self.marked.m == 0:
            raise InvalidParameterError("the doubling search assumes a nonempty marked set")
        if k < 1:
            raise InvalidParameterError("k must be positive")
        if mode == "exact":
            return self._auto_exact(p_star, k, t_cap)
        rng = _rng(seed)
        total = CostLedger()
        trace = []
        for t in range(1, t_cap + 1):
            level = CostLedger()
            for r in range(k):
                out = self.run(p_star, t, "sample", rng)
                level += out.ledger
                if out.found:
                    total += level
                    trace.append({"t": t, "runs": r + 1, "ledger": level.record()})
                    return SearchOutcome(out.result, total, steps=t, ancilla=out.ancilla,
                                         trace=trace, info={"p_star": p_star, "k": k})
            total += level
            trace.append({"t": t, "runs": k, "ledger": level.record()})
        raise BudgetExceededError(f"no marked vertex found up to t = {t_cap}", trace=trace)

    def _auto_exact(self, p_star: float, k: int, t_cap: int, tail: float = 1e-12) -> SearchOutcome:
        alive = 1.0
        expected_updates = 0.0
        trace = []
        for t in range(1, t_cap + 1):
            law = self.law(p_star, t)
            q = min(1.0, max(0.0, law.success))
            runs = k if q == 0.0 else (1.0 - (1.0 - q) ** k) / q
            per_run_updates = (1.0 - law.p_M) * 3 * 2**t
            expected_updates += alive * runs * per_run_updates
            stop = 1.0 - (1.0 - q) ** k
            trace.append({"t": t, "success_per_run": q, "level_stop": stop,
                          "reach_probability": alive})
            alive *= 1.0 - stop
            if alive < tail:
                break
        return SearchOutcome(
            result=self._likely_marked(),
            success_probability_exact=1.0 - alive,
            trace=trace,
            info={"p_star": p_star, "k": k, "expected_update_calls": expected_updates,
                  "termination_probability": 1.0 - alive},
        )

    def _likely_marked(self):
        return int(np.argmax(self._marked_law)) if self.marked.m else None

    # unknown p_M, lower bound p_min -------------------------------------------
    def pmin(self, p_min: float, ht_max: float | None = None, k: int = REPETITIONS,
             mode: str = "sample", seed=None, t_cap: int = T_CAP,
             max_rounds: int = 64) -> SearchOutcome:
        _check_mode(mode)
        cands = pmin_candidates(p_min)
        t_fixed = t_for_hitting_time(ht_max) if ht_max is not None else None
        info = {"p_min": p_min, "candidates": cands, "t_fixed": t_fixed}
        if p_min > self.p_M + 1e-15:
            info["precondition"] = f"broken: p_min={p_min} exceeds p_M={self.p_M}"
        if mode == "exact":
            return self._pmin_exact(cands, ht_max, t_fixed, k, t_cap, info)
        rng = _rng(seed)
        total = CostLedger()
        trace = []
        levels = [t_fixed] * max_rounds if t_fixed is not None else range(1, t_cap + 1)
        for rnd, t in enumerate(levels):
            for l, p in enumerate(cands, start=1):
                block = CostLedger()
                for r in range(k):
                    out = self.run(p, t, "sample", rng)
                    block += out.ledger
                    if out.found:
                        total += block
                        trace.append({"round": rnd, "t": t, "l": l, "p_star": p, "runs": r + 1,
                                      "ledger": block.record()})
                        return SearchOutcome(out.result, total, steps=t, trace=trace, info=info)
                total += block
                trace.append({"round": rnd, "t": t, "l": l, "p_star": p, "runs": k,
                              "ledger": block.record()})
        raise BudgetExceededError("p_min search exhausted its budget", trace=trace)

    def _pmin_exact(self, cands, ht_max, t_fixed, k, t_cap, info) -> SearchOutcome:
        if self.marked.m == 0:
            raise InvalidParameterError("the p_min search assumes a nonempty marked set")
        from .hitting import hitting_time_matrix

        ht = ht_max if ht_max is not None else hitting_time_matrix(self.chain, self.marked)
        t_star = t_for_hitting_time(ht)
        per_l = []
        for l, p in enumerate(cands, start=1):
            law = self.law(p, t_star)
            per_l.append({"l": l, "p_star": p, "t": t_star, "success": law.success,
                          "matching": 0.75 * p <= self.p_M * (1 + 1e-12)
                          and self.p_M <= 1.5 * p * (1 + 1e-12)})
        matching = [r for r in per_l if r["matching"]]
        best = max((r["success"] for r in matching), default=0.0)
        info.update({"t_theorem": t_star, "per_l": per_l})
        alive = 1.0
        expected_updates = 0.0
        trace = []
        levels = [t_fixed] * 64 if t_fixed is not None else range(1, t_cap + 1)
        for rnd, t in enumerate(levels):
            for l, p in enumerate(cands, start=1):
                law = self.law(p, t)
                q = min(1.0, max(0.0, law.success))
                runs = k if q == 0.0 else (1.0 - (1.0 - q) ** k) / q
                expected_updates += alive * runs * (1.0 - law.p_M) * 3 * 2**t
                alive *= (1.0 - q) ** k
            trace.append({"round": rnd, "t": t, "remaining": alive})
            if alive < 1e-12:
                break
        info["expected_update_calls"] = expected_updates
        info["termination_probability"] = 1.0 - alive
        return SearchOutcome(self._likely_marked(), success_probability_exact=best,
                             steps=t_star, trace=trace, info=info)

    # unknown p_M, hitting-time bound -------------------------------------------
    def htmax(self, ht_max: float, repetitions_per_probe: int = PROBES_PER_LEVEL,
              mode: str = "sample", seed=None, retries: int = RETRY_BUDGET,
              p_floor: float = P_FLOOR) -> SearchOutcome:
        _check_mode(mode)
        if ht_max <= 0:
            raise InvalidParameterError("ht_max must be positive")
        R = int(repetitions_per_probe)
        if R < 1:
            raise InvalidParameterError("repetitions_per_probe must be positive")
        t = htmax_bits(ht_max)
        depth_cap = math.ceil(math.log2(1.0 / p_floor))
        info = {"ht_max": ht_max, "t": t, "repetitions_per_probe": R, "depth_cap": depth_cap}
        if mode == "exact":
            return self._htmax_exact(t, R, depth_cap, info)
        rng = _rng(seed)
        total = CostLedger()
        trace = []
        a, b = 0.0, 1.0
        for depth in range(1, depth_cap + 1):
            p = 0.5 * (a + b)
            p_eff = min(p, 0.5)
            zeros = walked = 0
            row = {"depth": depth, "p_star": p, "p_effective": p_eff, "batches": 0}
            for attempt in range(retries + 1):
                row["batches"] += 1
                for _ in range(R):
                    out = self.run(p_eff, t, "sample", rng)
                    total += out.ledger
                    if out.found:
                        row.update({"zeros": zeros, "walked": walked, "found": out.result})
                        trace.append(row)
                        info["depth"] = depth
                        return SearchOutcome(out.result, total, steps=t, ancilla=out.ancilla,
                                             trace=trace, info=info)
                    if out.ancilla is not None:
                        walked += 1
                        zeros += out.ancilla == 0
                frac = zeros / walked if walked else 0.5
                if walked and abs(frac - 0.5) > 0.5 / math.sqrt(walked):
                    break
            minority = walked > 0 and frac < 0.5
            row.update({"zeros": zeros, "walked": walked, "minority_of_zeros": minority})
            trace.append(row)
            if minority:
                a = p
            else:
                b = p
        raise BudgetExceededError("dichotomy reached its depth cap", trace=trace)

    def _htmax_exact(self, t: int, R: int, depth_cap: int, info: dict) -> SearchOutcome:
        a, b = 0.0, 1.0
        alive = 1.0
        first = None
        trace = []
        for depth in range(1, depth_cap + 1):
            p = 0.5 * (a + b)
            p_eff = min(p, 0.5)
            law = self.law(p_eff, t)
            q = min(1.0, max(0.0, law.success))
            stop = 1.0 - (1.0 - q) ** R
            z = law.zero_given_unmarked
            minority = bool(z < 0.5)
            trace.append({"depth": depth, "p_star": p, "p_effective": p_eff,
                          "success_per_run": q, "probe_stop": stop,
                          "zero_fraction": z, "minority_of_zeros": minority})
            alive *= 1.0 - stop
            if first is None and stop >= 0.5:
                first = depth
            if alive < 1e-12 or math.isnan(z):
                break
            if minority:
                a = p
            else:
                b = p
        info["depth"] = first
        return SearchOutcome(self._likely_marked(), success_probability_exact=1.0 - alive,
                             steps=first, trace=trace, info=info)


# -- functional interface ------------------------------------------------------------


def pmin_candidates(p_min: float) -> list:
    """``(2/3) 2^-l`` for ``l = 1 .. floor(log2(1/p_min))`` (at least one value)."""
    if not 0.0 < p_min <= 1.0:
        raise DomainError(f"p_min must lie in (0, 1], got {p_min}")
    L = max(1, math.floor(math.log2(1.0 / p_min) + 1e-12))
    return [(2.0 / 3.0) * 2.0**-l for l in range(1, L + 1)]


def htmax_bits(ht_max: float) -> int:
    """``t = ceil(log2 sqrt(ht_max))``, never negative."""
    return max(0, math.ceil(math.log2(math.sqrt(ht_max)) - 1e-12))


def quantum_walk_search(P, marked, p_star: float, t: int, mode: str = "exact", seed=None,
                        graph: Graph | None = None, backend: str = "spectral") -> SearchOutcome:
    return QuantumWalkSearcher(P, marked, graph, backend).run(p_star, t, mode, seed)


def success_lower_bound(P, marked, p_star: float, t: int) -> dict:
    """The two terms ``cos^2 sin^2`` and ``sum |alpha_k|^2 delta_k^2`` plus the HT-based bound."""
    law = QuantumWalkSearcher(P, marked).law(p_star, t)
    return {"eps1_term": law.eps1_term, "eps2_term": law.eps2_term,
            "ht_bound_term": law.ht_bound_term, "ht_s": law.ht_s,
            "bound": law.eps1_term - law.eps2_term}


def quantum_walk_search_auto(P, marked, p_star: float, k: int = REPETITIONS, mode: str = "sample",
                             seed=None, t_cap: int = T_CAP) -> SearchOutcome:
    return QuantumWalkSearcher(P, marked).auto(p_star, k, mode, seed, t_cap)


def search_with_pmin(P, marked, p_min: float, ht_max: float | None = None, mode: str = "sample",
                     seed=None, k: int = REPETITIONS) -> SearchOutcome:
    return QuantumWalkSearcher(P, marked).pmin(p_min, ht_max, k, mode, seed)


def search_with_htmax(P, marked, ht_max: float, repetitions_per_probe: int = PROBES_PER_LEVEL,
                      mode: str = "sample", seed=None) -> SearchOutcome:
    return QuantumWalkSearcher(P, marked).htmax(ht_max, repetitions_per_probe, mode, seed)


# -- window of admissible estimates ------------------------------------------------------


def window_sin2(p_M: float, p_star: float) -> float:
    """``sin^2 theta`` at ``s_star(p_star)`` in closed form ``p_M (1-p*) / (p_M + (1-2 p_M) p*)``.

    Algebraically valid for any ``p* in (0, 1)``, including estimates above
    one half where ``s_star`` leaves ``[0, 1]``.
    """
    return p_M * (1.0 - p_star) / (p_M + (1.0 - 2.0 * p_M) * p_star)


@dataclass
class WindowReport:
    p_M: float
    epsilon1: float
    window: tuple
    rows: list = field(default_factory=list)
    ok: bool = True


def fact4_window_check(p_M: float, epsilon1: float, points: int = 20) -> WindowReport:
    """Sweep ``p*`` over ``[2 sqrt(eps1) p_M, 2 (1 - sqrt(eps1)) p_M]`` checking ``cos^2 sin^2 >= eps1``."""
    if not 0.0 < epsilon1 <= 0.25:
        raise DomainError(f"epsilon1 must lie in (0, 1/4], got {epsilon1}")
    if not 0.0 < p_M <= 0.5:
        raise DomainError(f"p_M must lie in (0, 1/2], got {p_M}")
    r = math.sqrt(epsilon1)
    lo, hi = 2.0 * r * p_M, 2.0 * (1.0 - r) * p_M
    report = WindowReport(p_M, epsilon1, (lo, hi))
    for p in np.linspace(lo, hi, points):
        p = float(p)
        s2 = window_sin2(p_M, p)
        row = {"p_star": p, "sin2": s2, "value": s2 * (1.0 - s2)}
        if p <= 0.5:
            direct = sin2_theta(p_M, s_star(p))
            row["closed_form_error"] = abs(direct - s2)
            if row["closed_form_error"] > 1e-12:
                raise VerificationError(f"closed form disagrees at p*={p}: {direct} vs {s2}")
        row["sin_bound"] = s2 >= epsilon1 - 1e-12  # p* <= 2(1 - sqrt eps1) p_M side
        row["cos_bound"] = 1.0 - s2 >= epsilon1 - 1e-12  # p* >= 2 sqrt(eps1) p_M side
        report.rows.append(row)
        if row["value"] < epsilon1 - 1e-12 or not (row["sin_bound"] and row["cos_bound"]):
            report.ok = False
            raise VerificationError(
                f"window violation: p_M={p_M}, p*={p}, cos^2 sin^2={row['value']}"
            )
    return report
