"""Invariant suites run by ``qwsearch verify-all``.

One suite per module invariant. Each suite is a function of a seeded
generator and a :class:`Context`; the context carries the primitives a
suite exercises so that faults can be injected into one of them without
touching the others.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .chain import (
    InterpolatedChain,
    as_chain,
    discriminant,
    discriminant_derivative,
    grid_walk,
    random_marked_set,
    random_reversible_chain,
    uniform_chain,
)
from .classical import monte_carlo_hitting_time
from .experiments import graph_from_chain
from .graph import (
    Graph,
    make_complete,
    make_cycle,
    make_grid_2d,
    make_hypercube,
    translate_grid,
    validate_chain_locality,
)
from .hitting import (
    extended_hitting_time,
    hitting_time_matrix,
    hitting_time_spectral,
    resolvent_A,
)
from .ledger import CostLedger
from .oracles import circuit_equivalence
from .phase import delta_magnitude, phase_estimation_dense, phase_estimation_spectral, total_variation
from .search import QuantumWalkSearcher
from .walk import (
    ImplicitWalk,
    build_isometry_V,
    build_shift,
    build_walk_dense,
    build_walk_spectral,
    reflection_X,
    szegedy_square_check,
    verify_lemma1,
    walk_space_pair_vectors,
)

FAULTS = ("discriminant",)


@dataclass
class Context:
    discriminant: Callable = discriminant
    faults: tuple = ()


def make_context(faults=()) -> Context:
    unknown = set(faults) - set(FAULTS)
    if unknown:
        raise ValueError(f"unknown fault(s) {sorted(unknown)}; known: {FAULTS}")
    ctx = Context(faults=tuple(faults))
    if "discriminant" in faults:
        def broken(chain):
            D = discriminant(chain).copy()
            D[0, 1] += 1e-3
            return D
        ctx.discriminant = broken
    return ctx


def support_graph(P) -> Graph:
    return graph_from_chain(as_chain(P))


def _random_case(rng, n_max=8, n_min=2):
    n = int(rng.integers(n_min, n_max + 1))
    chain = random_reversible_chain(n, rng)
    M = random_marked_set(chain, rng)
    return chain, M


# -- graph_core --------------------------------------------------------------------


def suite_grid_vertex_transitive(rng, ctx):
    worst = 0
    for side in (3, 4, 5):
        adj = make_grid_2d(side).adjacency()
        for di in range(side):
            for dj in range(side):
                perm = translate_grid(side, di, dj)
                worst += int(np.any(adj[np.ix_(perm, perm)] != adj))
    return {"ok": worst == 0, "mismatched_translations": worst}


def suite_chain_locality(rng, ctx):
    cases = [(make_grid_2d(4), grid_walk(4)), (make_complete(5), uniform_chain(5))]
    g = make_cycle(6)
    cases.append((g, as_chain(g.adjacency() / g.adjacency().sum(1, keepdims=True))))
    g = make_hypercube(3)
    cases.append((g, as_chain(g.adjacency() / g.adjacency().sum(1, keepdims=True))))
    clean = all(validate_chain_locality(P, G).ok for G, P in cases)
    P = np.array(cases[2][1].P)
    P[0] *= 0.9
    P[0, 3] += 0.1
    caught = validate_chain_locality(P, cases[2][0]).violations == [(0, 3)]
    return {"ok": clean and caught, "clean_cases_pass": clean, "injected_non_edge_caught": caught}


# -- markov_chain ----------------------------------------------------------------------


def suite_hitting_time_sin4_identity(rng, ctx, cases=40):
    """Stated identity for single marked vertices; for larger sets, the limit form."""
    worst_single = 0.0
    worst_limit = 0.0
    discrepancies = 0
    for _ in range(cases):
        chain, M = _random_case(rng, 12)
        ht = hitting_time_matrix(chain, M)
        ht_plus = extended_hitting_time(chain, M)
        for s in (0.0, 0.3, 0.6, 0.9, 0.99):
            ich = InterpolatedChain(chain, M, s)
            sin4 = ich.sin2_theta**2
            ht_s = hitting_time_spectral(ich)
            if M.m == 1:
                worst_single = max(worst_single, abs(ht_s - sin4 * ht) / (1 + ht))
            worst_limit = max(worst_limit, abs(ht_s - sin4 * ht_plus) / (1 + ht_plus))
        if M.m > 1 and abs(ht_plus - ht) > 1e-8 * (1 + ht):
            discrepancies += 1
    ok = worst_single <= 1e-8 and worst_limit <= 1e-8
    return {"ok": ok, "single_marked_error": worst_single, "limit_form_error": worst_limit,
            "multi_marked_cases_with_ht_plus_above_ht": discrepancies}


def suite_top_eigenvector(rng, ctx, cases=30):
    worst = 0.0
    for _ in range(cases):
        chain, M = _random_case(rng, 12)
        for s in (0.0, 0.5, 0.9):
            ich = InterpolatedChain(chain, M, s)
            v = ich.spectral.vectors[:, -1]
            v = v * np.sign(v.sum())
            th = ich.theta if ich.p_M <= 0.5 else math.asin(math.sqrt(min(1, ich.sin2_theta)))
            target = math.cos(th) * ich.U_state + math.sin(th) * ich.M_state
            worst = max(worst, float(np.linalg.norm(v - target)))
    return {"ok": worst <= 1e-8, "max_error": worst}


def suite_resolvent_orthogonality(rng, ctx, cases=30):
    worst_top = worst_pair = 0.0
    for _ in range(cases):
        chain, M = _random_case(rng, 12)
        for s in (0.0, 0.5, 0.9):
            ich = InterpolatedChain(chain, M, s)
            A = resolvent_A(ich)
            v = ich.spectral.vectors[:, -1]
            worst_top = max(worst_top, float(np.linalg.norm(A @ v)))
            th = ich.theta
            pair = math.sin(th) * A @ ich.M_state + math.cos(th) * A @ ich.U_state
            worst_pair = max(worst_pair, float(np.linalg.norm(pair)))
    return {"ok": worst_top <= 1e-8 and worst_pair <= 1e-7,
            "max_A_v_n": worst_top, "max_pair_residual": worst_pair}


def suite_discriminant_derivative(rng, ctx, cases=20, h=1e-6):
    worst_rel = 0.0
    worst_asym = 0.0
    for _ in range(cases):
        chain, M = _random_case(rng, 10)
        for s in (0.0, 0.25, 0.5, 0.75):
            ich = InterpolatedChain(chain, M, s)
            D = ctx.discriminant(ich)
            worst_asym = max(worst_asym, float(np.abs(D - D.T).max()))
            up = ctx.discriminant(InterpolatedChain(chain, M, s + h, check=False))
            if s > 0:
                down = ctx.discriminant(InterpolatedChain(chain, M, s - h, check=False))
                fd = (up - down) / (2 * h)
            else:
                fd = (up - D) / h
            exact = discriminant_derivative(ich)
            scale = max(1.0, float(np.abs(exact).max()))
            worst_rel = max(worst_rel, float(np.abs(fd - exact).max()) / scale)
    return {"ok": worst_rel <= 1e-6 and worst_asym <= 1e-12,
            "max_relative_error": worst_rel, "max_asymmetry": worst_asym}


def suite_monte_carlo_hitting_time(rng, ctx, trials=20_000):
    cases = [
        ("K8", uniform_chain(8), [0]),
        ("two-state", np.array([[0.5, 0.5], [0.5, 0.5]]), [1]),
        ("torus4", grid_walk(4), [5]),
    ]
    rows = []
    ok = True
    for name, P, M in cases:
        ht = hitting_time_matrix(P, M)
        est = monte_carlo_hitting_time(P, M, trials, seed=int(rng.integers(2**31)))
        z = abs(est.mean - ht) / est.stderr
        rows.append({"case": name, "exact": ht, "mean": est.mean, "stderr": est.stderr, "z": z})
        ok &= z <= 3.0 and est.capped == 0
    return {"ok": bool(ok), "cases": rows}


# -- szegedy_walk ----------------------------------------------------------------------


def suite_unitarity(rng, ctx, cases=10):
    worst = 0.0
    for _ in range(cases):
        chain, M = _random_case(rng, 8)
        G = support_graph(chain)
        ich = InterpolatedChain(chain, M, float(rng.uniform(0, 0.99)))
        for op in (build_isometry_V(ich), build_shift(G), reflection_X(chain.n),
                   build_walk_dense(ich, G)):
            worst = max(worst, op.unitarity_defect())
    return {"ok": worst <= 1e-9, "max_defect": worst}


def suite_szegedy_square(rng, ctx, cases=6):
    worst = 0.0
    ok = True
    for _ in range(cases):
        chain, M = _random_case(rng, 6)
        ich = InterpolatedChain(chain, M, float(rng.uniform(0, 0.9)))
        rep = szegedy_square_check(ich, support_graph(chain))
        worst = max(worst, rep["phase_mismatch"])
        ok &= rep["ok"]
    return {"ok": bool(ok), "max_phase_mismatch": worst}


def suite_walk_update_cost(rng, ctx):
    chain, M = _random_case(rng, 6)
    walk = ImplicitWalk(InterpolatedChain(chain, M, 0.5))
    ledger = CostLedger()
    psi = np.zeros((chain.n, chain.n))
    psi[0, 0] = 1.0
    for _ in range(5):
        psi = walk.W(psi, ledger)
    rec = ledger.record()
    ok = rec["update"] == 15 and rec["shift"] == 5
    return {"ok": ok, "ledger_after_5_steps": rec}


def suite_spectral_dense_agreement(rng, ctx, cases=6):
    worst = 0.0
    ok = True
    for _ in range(cases):
        chain, M = _random_case(rng, 8)
        ich = InterpolatedChain(chain, M, float(rng.uniform(0, 0.99)))
        rep = verify_lemma1(ich, support_graph(chain))
        worst = max(worst, rep["eigenphase_error"])
        ok &= rep["ok"]
    return {"ok": bool(ok), "max_eigenphase_error": worst}


# -- oracle_circuits -------------------------------------------------------------------


def _circuit_reports(rng, cases):
    out = []
    for _ in range(cases):
        chain, M = _random_case(rng, 8)
        s = float(rng.choice([0.0, 1.0])) if rng.random() < 0.2 else float(rng.uniform(0, 1))
        out.append(circuit_equivalence(chain, M, s))
    return out


def suite_circuit_equivalence(rng, ctx, cases=15):
    reps = _circuit_reports(rng, cases)
    worst = max(r["max_deviation"] for r in reps)
    counts = all(r["check_calls"] == 2 and r["v_base_calls"] == 1 for r in reps)
    return {"ok": worst <= 1e-10 and counts, "max_deviation": worst, "call_counts_ok": counts}


def suite_ancilla_cleanliness(rng, ctx, cases=15):
    worst = max(r["ancilla_leak"] for r in _circuit_reports(rng, cases))
    return {"ok": worst <= 1e-12, "max_leak": worst}


def suite_circuit_reversibility(rng, ctx, cases=15):
    worst = max(r["roundtrip_error"] for r in _circuit_reports(rng, cases))
    return {"ok": worst <= 1e-10, "max_roundtrip_error": worst}


# -- quantum_search --------------------------------------------------------------------


def suite_backend_equivalence(rng, ctx, cases=6):
    worst = 0.0
    for _ in range(cases):
        chain, M = _random_case(rng, 6)
        ich = InterpolatedChain(chain, M, float(rng.uniform(0, 0.95)))
        W = build_walk_dense(ich, support_graph(chain))
        form = build_walk_spectral(ich)
        Q = walk_space_pair_vectors(ich)
        coeffs = rng.normal(size=Q.shape[1]) + 1j * rng.normal(size=Q.shape[1])
        coeffs /= np.linalg.norm(coeffs)
        basis = form.basis_coeffs()
        c1 = sum(c * b[0] for c, b in zip(coeffs, basis))
        c2 = sum(c * b[1] for c, b in zip(coeffs, basis))
        for t in range(0, 6):
            a = phase_estimation_spectral(form, t, c1, c2)
            b = phase_estimation_dense(W, t, Q @ coeffs)
            worst = max(worst, total_variation(a, b))
    return {"ok": worst <= 1e-8, "max_total_variation": worst}


def suite_success_lower_bound(rng, ctx, cases=15):
    worst = math.inf
    for _ in range(cases):
        chain, M = _random_case(rng, 12)
        searcher = QuantumWalkSearcher(chain, M)
        p_star = float(rng.uniform(0.02, 0.5))
        for t in range(0, 8):
            law = searcher.law(p_star, t)  # raises on violation
            worst = min(worst, law.marked_given_walk - (law.eps1_term - law.eps2_term))
    return {"ok": worst >= -1e-10, "min_margin": worst}


def suite_delta_bound(rng, ctx, cases=15):
    worst_delta = -math.inf
    worst_ht = -math.inf
    for _ in range(cases):
        chain, M = _random_case(rng, 12)
        ich = InterpolatedChain(chain, M, float(rng.uniform(0, 0.99)))
        sd = ich.spectral
        alpha = sd.overlaps(ich.U_state)
        phis = np.arccos(np.clip(sd.lambdas[:-1], -1, 1))
        for t in range(0, 10):
            for phi in phis:
                d2 = delta_magnitude(float(phi), t) ** 2
                worst_delta = max(worst_delta, d2 - math.pi**2 / (4.0**t * phi**2))
        total = float(np.sum(alpha[:-1] ** 2 * 2.0 / phis**2))
        worst_ht = max(worst_ht, total - hitting_time_spectral(ich))
    return {"ok": worst_delta <= 1e-12 and worst_ht <= 1e-9,
            "max_delta_excess": worst_delta, "max_ht_excess": worst_ht}


def suite_normalization(rng, ctx, cases=10):
    worst = 0.0
    for _ in range(cases):
        chain, M = _random_case(rng, 12)
        ich = InterpolatedChain(chain, M, float(rng.uniform(0, 0.99)))
        form = build_walk_spectral(ich)
        for t in range(0, 9):
            worst = max(worst, abs(phase_estimation_spectral(form, t, ich.U_state).total - 1.0))
    return {"ok": worst <= 1e-10, "max_deviation": worst}


def suite_sampling_consistency(rng, ctx, samples=10_000):
    chain, M = np.array([[0.5, 0.5], [0.5, 0.5]]), [1]
    searcher = QuantumWalkSearcher(chain, M)
    t = 2
    law = searcher.law(0.5, t)
    exact = {}
    exact[("initial", 1)] = law.p_M
    joint = law.phase.vertex_joint / law.phase.total
    for m in range(joint.shape[0]):
        for x in range(joint.shape[1]):
            exact[(m, x)] = (1 - law.p_M) * joint[m, x]
    counts = dict.fromkeys(exact, 0)
    gen = np.random.default_rng(int(rng.integers(2**31)))
    for _ in range(samples):
        out = searcher.run(0.5, t, "sample", gen)
        key = ("initial", 1) if out.ancilla is None else (out.ancilla, out.info["vertex"])
        counts[key] += 1
    worst = 0.0
    for key, p in exact.items():
        sd = math.sqrt(max(samples * p * (1 - p), 1e-12))
        worst = max(worst, abs(counts[key] - samples * p) / sd if p > 0 else counts[key])
    return {"ok": worst <= 4.0, "max_sigma": worst}


# -- cli_experiments -------------------------------------------------------------------


def _search_lines(seed):
    from .experiments import ExperimentConfig, cmd_search, to_json_line

    cfg = ExperimentConfig(family="complete", size=8, marked=(0,), search="auto",
                           mode="sample", seeds=(seed, seed + 1))
    return [to_json_line(r) for r in cmd_search(cfg)]


def suite_determinism(rng, ctx):
    seed = int(rng.integers(1000))
    a, b = _search_lines(seed), _search_lines(seed)
    return {"ok": a == b, "records": len(a)}


def suite_record_attribution(rng, ctx):
    import json

    from .experiments import ExperimentConfig, cmd_search, to_json_line

    cfg = ExperimentConfig(family="grid", size=4, marked=(3,), search="fixed", mode="exact")
    recs = [json.loads(to_json_line(r)) for r in cmd_search(cfg)]
    ok = all("config" in r and "ledger" in r and r["config"]["family"] == "grid" for r in recs)
    return {"ok": ok, "records": len(recs)}


SUITES = {
    "graph_core.grid_vertex_transitive": suite_grid_vertex_transitive,
    "graph_core.chain_locality": suite_chain_locality,
    "markov_chain.hitting_time_sin4_identity": suite_hitting_time_sin4_identity,
    "markov_chain.top_eigenvector": suite_top_eigenvector,
    "markov_chain.resolvent_orthogonality": suite_resolvent_orthogonality,
    "markov_chain.discriminant_derivative": suite_discriminant_derivative,
    "markov_chain.monte_carlo_hitting_time": suite_monte_carlo_hitting_time,
    "szegedy_walk.unitarity": suite_unitarity,
    "szegedy_walk.szegedy_square": suite_szegedy_square,
    "szegedy_walk.walk_update_cost": suite_walk_update_cost,
    "szegedy_walk.spectral_dense_agreement": suite_spectral_dense_agreement,
    "oracle_circuits.circuit_equivalence": suite_circuit_equivalence,
    "oracle_circuits.ancilla_cleanliness": suite_ancilla_cleanliness,
    "oracle_circuits.circuit_reversibility": suite_circuit_reversibility,
    "quantum_search.backend_equivalence": suite_backend_equivalence,
    "quantum_search.success_lower_bound": suite_success_lower_bound,
    "quantum_search.delta_bound": suite_delta_bound,
    "quantum_search.normalization": suite_normalization,
    "quantum_search.sampling_consistency": suite_sampling_consistency,
    "cli_experiments.determinism": suite_determinism,
    "cli_experiments.record_attribution": suite_record_attribution,
}


@dataclass
class SuiteResult:
    name: str
    ok: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def record(self) -> dict:
        module, _, suite = self.name.partition(".")
        return {"suite": self.name, "module": module, "invariant": suite, "ok": self.ok,
                "details": self.details}


def run_suites(seed: int = 0, faults=(), only=None) -> list:
    """Run every suite with its own child generator; exceptions count as failures."""
    ctx = make_context(faults)
    names = list(SUITES) if only is None else list(only)
    children = np.random.SeedSequence(seed).spawn(len(SUITES))
    seeds = dict(zip(SUITES, children))
    results = []
    for name in names:
        rng = np.random.default_rng(seeds[name])
        start = time.perf_counter()
        try:
            details = SUITES[name](rng, ctx)
            ok = bool(details.pop("ok"))
        except Exception as exc:  # a crashing suite is a failing suite
            details = {"error": f"{type(exc).__name__}: {exc}"}
            ok = False
        results.append(SuiteResult(name, ok, details, time.perf_counter() - start))
    return results
