"""Experiment configuration and the drivers behind each CLI subcommand.

Drivers return plain lists of records (dicts); serialisation lives in
:mod:`qwsearch.cli`. Every record embeds the resolved configuration so a
row can always be traced back to the run that produced it.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .chain import (
    InterpolatedChain,
    MarkovChain,
    grid_walk,
    lazify,
    load_chain,
    projections,
    simple_random_walk,
    sin2_theta,
    uniform_chain,
)
from .classical import monte_carlo_hitting_time
from .errors import (
    BudgetExceededError,
    CapacityError,
    InvalidParameterError,
)
from .graph import (
    Graph,
    MarkedSet,
    make_complete,
    make_cycle,
    make_grid_2d,
    make_hypercube,
    random_marked,
)
from .hitting import extended_hitting_time, hitting_time_matrix, hitting_time_spectral
from .oracles import circuit_equivalence
from .outcome import NO_MARKED
from .search import EPS1, EPS2, QuantumWalkSearcher, t_for_hitting_time
from .walk import (
    LEMMA1_LIMIT,
    build_isometry_V,
    build_shift,
    build_walk_dense,
    reflection_X,
    verify_lemma1,
)

FAMILIES = ("grid", "complete", "cycle", "hypercube", "file")
SEARCHES = ("fixed", "auto", "pmin", "htmax")
DEFAULT_S_GRID = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99)
GRID_BENCH_COLUMNS = (
    "side", "n", "m", "seed", "ht", "t_min", "two_t", "update_calls",
    "p_success", "ratio_sqrt_ht", "ratio_n_log_n", "t_min_walk", "status",
)
BENCH_SIDE_LIMIT = 16
BENCH_T_CAP = 20


class ConfigError(InvalidParameterError):
    """A configuration field failed validation; the message names the field."""


@dataclass(frozen=True)
class ExperimentConfig:
    family: str = "complete"
    size: int = 4
    path: str | None = None
    torus: bool = True
    lazy: bool = False
    marked: tuple | None = None
    marked_count: int = 1
    marked_seed: int = 0
    s: float = 0.5
    s_grid: tuple = DEFAULT_S_GRID
    search: str = "fixed"
    p_star: float | None = None
    t: int | None = None
    T: float | None = None
    mode: str = "exact"
    backend: str = "spectral"
    seeds: tuple = (0,)
    k: int = 28
    p_min: float | None = None
    ht_max: float | None = None
    repetitions_per_probe: int = 29
    trials: int = 10_000

    def validate(self) -> "ExperimentConfig":
        def bad(name, msg):
            raise ConfigError(f"{name}: {msg}")

        if self.family not in FAMILIES:
            bad("family", f"must be one of {FAMILIES}, got {self.family!r}")
        if self.family == "file" and not self.path:
            bad("path", "required for family 'file'")
        if self.family != "file" and self.size < 1:
            bad("size", "must be positive")
        if self.marked is None and self.marked_count < 0:
            bad("marked_count", "must be nonnegative")
        if not 0.0 <= self.s <= 1.0:
            bad("s", "must lie in [0, 1]")
        if any(not 0.0 <= v <= 1.0 for v in self.s_grid):
            bad("s_grid", "values must lie in [0, 1]")
        if self.search not in SEARCHES:
            bad("search", f"must be one of {SEARCHES}")
        if self.p_star is not None and not 0.0 < self.p_star <= 0.5:
            bad("p_star", "must lie in (0, 1/2]")
        if self.t is not None and self.t < 0:
            bad("t", "must be nonnegative")
        if self.t is not None and self.T is not None:
            bad("T", "give either t or T, not both")
        if self.T is not None and self.T < 1:
            bad("T", "must be >= 1")
        if self.mode not in ("exact", "sample"):
            bad("mode", "must be 'exact' or 'sample'")
        if self.backend not in ("spectral", "dense"):
            bad("backend", "must be 'spectral' or 'dense'")
        if not self.seeds:
            bad("seeds", "need at least one seed")
        if self.k < 1:
            bad("k", "must be positive")
        if self.search == "pmin" and (self.p_min is None or not 0.0 < self.p_min <= 1.0):
            bad("p_min", "required in (0, 1] for the p_min search")
        if self.search == "htmax" and (self.ht_max is None or self.ht_max <= 0):
            bad("ht_max", "required and positive for the ht_max search")
        if self.ht_max is not None and self.ht_max <= 0:
            bad("ht_max", "must be positive")
        if self.repetitions_per_probe < 1:
            bad("repetitions_per_probe", "must be positive")
        if self.trials < 2:
            bad("trials", "need at least 2 Monte Carlo trials")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("marked", "s_grid", "seeds"):
            if d[key] is not None:
                d[key] = list(d[key])
        return d


@dataclass
class Instance:
    graph: Graph
    chain: MarkovChain
    marked: MarkedSet
    config: dict = field(default_factory=dict)

    @property
    def p_M(self) -> float:
        return projections(self.chain, self.marked).p_M


def graph_from_chain(chain: MarkovChain, name: str = "") -> Graph:
    support = (chain.P > 0) | (chain.P.T > 0)
    edges = frozenset((int(x), int(y)) for x, y in zip(*np.nonzero(np.triu(support))))
    return Graph(chain.n, edges, name=name or chain.name)


def build_family(config: ExperimentConfig) -> tuple:
    f, size = config.family, config.size
    if f == "grid":
        return make_grid_2d(size, config.torus), grid_walk(size, config.torus)
    if f == "complete":
        return make_complete(size), uniform_chain(size)
    if f == "cycle":
        g = make_cycle(size)
        return g, simple_random_walk(g)
    if f == "hypercube":
        g = make_hypercube(size)
        return g, simple_random_walk(g)
    chain = load_chain(config.path)
    return graph_from_chain(chain), chain


def resolve(config: ExperimentConfig) -> Instance:
    """Validate the config and build graph, chain and marked set.

    Field errors raise :class:`ConfigError`; invalid chain data (say a
    file whose rows do not sum to one) propagates as a validation error.
    """
    config.validate()
    try:
        graph, chain = build_family(config)
    except InvalidParameterError as exc:
        if config.family == "file":
            raise
        raise ConfigError(f"size: {exc}") from None
    if config.lazy:
        chain = lazify(chain)
    n = chain.n
    if config.marked is not None:
        try:
            marked = MarkedSet.of(config.marked, n)
        except (InvalidParameterError, ValueError) as exc:
            raise ConfigError(f"marked: {exc}") from None
    else:
        if config.marked_count > n:
            raise ConfigError(f"marked_count: {config.marked_count} exceeds n={n}")
        marked = random_marked(n, config.marked_count, np.random.default_rng(config.marked_seed))
    resolved = config.to_dict()
    resolved["marked"] = list(marked.members)
    resolved["n"] = n
    return Instance(graph, chain, marked, resolved)


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else str(x)


# -- ht ----------------------------------------------------------------------


def cmd_ht(config: ExperimentConfig) -> list:
    inst = resolve(config)
    P, M = inst.chain, inst.marked
    if M.m == 0:
        raise ConfigError("marked: hitting times need a nonempty marked set")
    ht = hitting_time_matrix(P, M)
    ht_full = hitting_time_matrix(P, M, include_p_U=True)
    p_M = inst.p_M
    records = []
    base = {"kind": "ht", "graph": inst.graph.name, "n": P.n, "m": M.m, "p_M": p_M,
            "config": inst.config}
    spec1 = hitting_time_spectral(InterpolatedChain(P, M, 1.0))
    records.append({**base, "row": "summary", "ht_matrix": ht, "ht_matrix_with_p_U": ht_full,
                    "ht_spectral": spec1, "ht_extended": extended_hitting_time(P, M)})
    for s in config.s_grid:
        ht_s = hitting_time_spectral(InterpolatedChain(P, M, s))
        sin4 = sin2_theta(p_M, s) ** 2
        records.append({**base, "row": "curve", "s": s, "ht_s": ht_s, "sin4": sin4,
                        "ratio": ht_s / sin4, "predicted": sin4 * ht,
                        "abs_error": abs(ht_s - sin4 * ht), "bound": 1e-8 * (1 + ht)})
    for seed in config.seeds:
        est = monte_carlo_hitting_time(P, M, config.trials, seed=seed)
        records.append({**base, "row": "monte_carlo", "seed": seed, "mean": est.mean,
                        "stderr": est.stderr, "trials": est.trials, "capped": est.capped,
                        "z_score": _num((est.mean - ht) / est.stderr if est.stderr else 0.0)})
    return records


# -- walk-verify ---------------------------------------------------------------


def cmd_walk_verify(config: ExperimentConfig) -> dict:
    inst = resolve(config)
    if inst.chain.n > LEMMA1_LIMIT:
        raise CapacityError(f"walk verification limited to n <= {LEMMA1_LIMIT}")
    ich = InterpolatedChain(inst.chain, inst.marked, config.s)
    lemma = verify_lemma1(ich, inst.graph)
    circuit = circuit_equivalence(inst.chain, inst.marked, config.s)
    n = inst.chain.n
    unitarity = {
        "V": build_isometry_V(ich).unitarity_defect(),
        "Shift": build_shift(inst.graph).unitarity_defect(),
        "ref_X": reflection_X(n).unitarity_defect(),
        "W": build_walk_dense(ich, inst.graph).unitarity_defect(),
    }
    unitary_ok = all(v <= 1e-9 for v in unitarity.values())
    lemma_brief = {k: v for k, v in lemma.items() if k != "blocks"}
    return {
        "kind": "walk-verify", "graph": inst.graph.name, "n": n, "m": inst.marked.m,
        "s": config.s, "config": inst.config,
        "lemma1": lemma_brief, "circuit": circuit, "unitarity": unitarity,
        "ok": bool(lemma["ok"] and circuit["ok"] and unitary_ok),
    }


# -- search ------------------------------------------------------------------------


def resolve_bits(config: ExperimentConfig, inst: Instance) -> int:
    if config.t is not None:
        return config.t
    if config.T is not None:
        return max(0, math.ceil(math.log2(config.T) - 1e-12))
    return t_for_hitting_time(hitting_time_matrix(inst.chain, inst.marked))


def cmd_search(config: ExperimentConfig) -> list:
    inst = resolve(config)
    p_M = inst.p_M
    p_star = config.p_star if config.p_star is not None else min(p_M, 0.5)
    if config.search in ("fixed", "auto") and p_star <= 0:
        raise ConfigError("p_star: p_M is 0, give p_star explicitly")
    searcher = QuantumWalkSearcher(inst.chain, inst.marked, inst.graph, config.backend)
    seeds = config.seeds if config.mode == "sample" else config.seeds[:1]
    base = {"kind": "search", "search": config.search, "graph": inst.graph.name,
            "n": inst.chain.n, "m": inst.marked.m, "mode": config.mode, "config": inst.config}
    records = []
    for seed in seeds:
        rec = dict(base, seed=seed)
        try:
            out = _dispatch(config, searcher, inst, p_star, seed, rec)
        except BudgetExceededError as exc:
            rec.update({"result": NO_MARKED, "error": str(exc), "trace": exc.trace,
                        "ledger": None, "p_success_exact": None,
                        "eps1_term": None, "eps2_term": None})
            records.append(rec)
            continue
        rec.update({
            "result": out.result_label(),
            "p_success_exact": _num(out.success_probability_exact),
            "eps1_term": _num(out.eps1_term),
            "eps2_term": _num(out.eps2_term),
            "ledger": out.ledger.record(),
        })
        if out.trace:
            rec["trace"] = out.trace
        extra = {k: v for k, v in out.info.items()
                 if k in ("expected_update_calls", "termination_probability", "per_l",
                          "precondition", "depth", "t_theorem", "theorem_conditions")}
        rec.update(extra)
        records.append(rec)
    return records


def _dispatch(config, searcher, inst, p_star, seed, rec):
    if config.search == "fixed":
        t = resolve_bits(config, inst)
        out = searcher.run(p_star, t, config.mode, seed)
        rec.update({"p_star": p_star, "t": t, "s": out.info["s"]})
        return out
    if config.search == "auto":
        out = searcher.auto(p_star, config.k, config.mode, seed)
        rec.update({"p_star": p_star, "t": out.steps if config.mode == "sample" else None,
                    "s": None})
        return out
    if config.search == "pmin":
        out = searcher.pmin(config.p_min, config.ht_max, config.k, config.mode, seed)
        rec.update({"p_star": None, "t": out.steps, "s": None})
        return out
    out = searcher.htmax(config.ht_max, config.repetitions_per_probe, config.mode, seed)
    rec.update({"p_star": None, "t": out.info["t"], "s": None})
    return out


# -- grid benchmark ---------------------------------------------------------------


def cmd_grid_bench(sides, m: int = 1, seeds=(0,), side_limit: int = BENCH_SIDE_LIMIT,
                   t_cap: int = BENCH_T_CAP) -> list:
    rows = []
    for side in sides:
        if side < 2:
            raise ConfigError(f"sides: each side must be >= 2, got {side}")
        n = side * side
        for seed in seeds:
            row = dict.fromkeys(GRID_BENCH_COLUMNS)
            row.update({"side": side, "n": n, "m": m, "seed": seed})
            if side > side_limit:
                row["status"] = f"skipped: side > {side_limit} exceeds exact capacity"
                rows.append(row)
                continue
            if not 1 <= m <= n:
                row["status"] = f"skipped: m={m} out of range"
                rows.append(row)
                continue
            chain = grid_walk(side)
            marked = random_marked(n, m, np.random.default_rng(seed))
            p_M = projections(chain, marked).p_M
            ht = hitting_time_matrix(chain, marked) if m < n else 0.0
            searcher = QuantumWalkSearcher(chain, marked)
            p_star = min(p_M, 0.5)
            row["ht"] = ht
            try:
                for t in range(t_cap + 1):
                    law = searcher.law(p_star, t)
                    if row["t_min_walk"] is None and law.marked_given_walk >= EPS1 - EPS2:
                        row["t_min_walk"] = t
                    if row["t_min"] is None and law.success >= EPS1 - EPS2:
                        row.update({
                            "t_min": t, "two_t": 2**t, "update_calls": 3 * 2**t,
                            "p_success": law.success,
                            "ratio_sqrt_ht": 2**t / math.sqrt(ht) if ht > 0 else None,
                            "ratio_n_log_n": ht / (n * math.log(n)),
                            "status": "ok",
                        })
                    if row["t_min"] is not None and row["t_min_walk"] is not None:
                        break
                if row["t_min"] is None:
                    row["status"] = f"no t <= {t_cap} reached success {EPS1 - EPS2}"
            except CapacityError as exc:
                row["status"] = f"skipped: {exc}"
            rows.append(row)
    return rows


def format_csv(rows, columns=GRID_BENCH_COLUMNS) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _csv_cell(row.get(k)) for k in columns})
    return buf.getvalue()


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def to_json_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def with_overrides(config: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(config, **kw)


__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "Instance",
    "cmd_grid_bench",
    "cmd_ht",
    "cmd_search",
    "cmd_walk_verify",
    "format_csv",
    "graph_from_chain",
    "resolve",
    "to_json_line",
]
