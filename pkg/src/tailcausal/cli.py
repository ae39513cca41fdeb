"""Command-line interface: simulation, CI testing, structure learning,
evaluation, experiment grids, and a river-network pruning pipeline.

Every command is deterministic given ``--seed``: per-cell RNG streams are
derived by hashing the seed together with the cell coordinates, so running
a sub-grid reproduces the corresponding rows of the full grid byte for
byte.  Exit codes: 0 success, 2 bad input (files, schemas, flags), 3
numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .graph import (
    Dag,
    RandomDagConfig,
    cpdag_from_dag,
    load_graph,
    parents,
    random_prune,
    random_rooted_dag,
    root,
    save_graph,
    shd,
    topological_order,
)
from .hr import HrScmParams, hr_scm_from_weighted_dag, validate_variogram
from .inference import (
    Dataset,
    InferenceError,
    ci_result_to_json,
    ci_test_avg,
    ci_test_random,
    empirical_variogram,
    known_margin_dataset,
    load_dataset_csv,
    to_exponential_margins,
)
from .learn import (
    GraphOracle,
    PcConfig,
    complete_dag,
    ext_pc,
    ext_prune,
    prune_consistency_harness,
    sample_oracle_average,
    write_trace_jsonl,
)
from .models import ModelSpec
from .scm import (
    Intervention,
    IntervenedScm,
    build_doa_example,
    build_doa_from_hr,
    load_scm,
    sample_doa,
    sample_intervened,
    sample_pareto_hr,
    sample_y1,
    sample_yk_hr,
    save_samples_csv,
)


class CliError(ValueError):
    """Bad command-line input (maps to exit code 2)."""


# ---------------------------------------------------------------------------
# deterministic seeding
# ---------------------------------------------------------------------------

def hash64(*parts) -> int:
    """64-bit hash of a tuple of ints/floats/strings, stable across runs.

    Used to derive independent per-cell RNG seeds from (seed, cell
    coordinates); the value depends only on the listed parts, never on
    which other cells are scheduled, so sub-grids reproduce full-grid rows.
    """
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        if isinstance(p, (bool, np.bool_)):
            token = f"b:{int(p)}"
        elif isinstance(p, (int, np.integer)):
            token = f"i:{int(p)}"
        elif isinstance(p, (float, np.floating)):
            token = f"f:{float(p)!r}"
        elif p is None:
            token = "n:"
        else:
            token = f"s:{p}"
        h.update(token.encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "big")


# ---------------------------------------------------------------------------
# experiment and river specifications
# ---------------------------------------------------------------------------

EXPERIMENT_KINDS = ("ci_calibration", "pc_shd", "prune_shd", "consistency")
EXPERIMENT_SOURCES = ("pareto", "doa")
ALPHA_GRID = tuple(round(0.01 * k, 2) for k in range(1, 11))
CSV_COLUMNS = ("kind", "source", "d", "e_n", "tau", "n", "reps", "metric",
               "value", "dhsic", "pcm")


@dataclass(frozen=True)
class ExperimentSpec:
    """A simulation-study grid: one kind swept over (source, d, E_N, tau)."""

    kind: str
    dims: tuple = (5, 10, 15)
    e_n: tuple = (2.0, 3.5, 5.0)
    taus: tuple = (0.5, 0.7, 0.9, 0.95, 0.975, 0.99, 0.995)
    sources: tuple = EXPERIMENT_SOURCES
    n: int = 10_000
    reps: int = 20
    alpha: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise CliError(f"unknown experiment kind {self.kind!r}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "e_n", tuple(float(v) for v in self.e_n))
        object.__setattr__(self, "taus", tuple(float(t) for t in self.taus))
        object.__setattr__(self, "sources", tuple(self.sources))
        if not self.dims or not self.e_n or not self.taus or not self.sources:
            raise CliError("dims, e_n, taus, and sources must be non-empty")
        if any(d < 2 for d in self.dims):
            raise CliError("dims must be >= 2")
        if any(not 0 < en for en in self.e_n):
            raise CliError("e_n values must be positive")
        if any(not 0 <= t < 1 for t in self.taus):
            raise CliError("taus must lie in [0, 1)")
        if any(s not in EXPERIMENT_SOURCES for s in self.sources):
            raise CliError(f"sources must be among {EXPERIMENT_SOURCES}")
        if self.n < 10 or self.reps < 1:
            raise CliError("n must be >= 10 and reps >= 1")
        if not 0 < self.alpha < 1:
            raise CliError("alpha must lie in (0, 1)")

    def scaled(self, scale: float) -> "ExperimentSpec":
        if scale <= 0:
            raise CliError("scale must be positive")
        if scale == 1.0:
            return self
        return replace(
            self,
            n=max(200, int(round(self.n * scale))),
            reps=max(2, int(round(self.reps * scale))),
        )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "dims": list(self.dims), "e_n": list(self.e_n),
            "taus": list(self.taus), "sources": list(self.sources),
            "n": self.n, "reps": self.reps, "alpha": self.alpha,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(obj: dict) -> "ExperimentSpec":
        known = {f: obj[f] for f in (
            "kind", "dims", "e_n", "taus", "sources", "n", "reps", "alpha",
            "seed") if f in obj}
        extra = set(obj) - set(known)
        if extra:
            raise CliError(f"unknown experiment-spec fields: {sorted(extra)}")
        if "kind" not in known:
            raise CliError("experiment spec needs a 'kind'")
        return ExperimentSpec(**known)


@dataclass(frozen=True)
class RiverSpec:
    """A river-network pruning run: data file, causal order, ground truth."""

    data: str
    order: tuple
    truth: str
    taus: tuple = (0.9, 0.95, 0.975)
    subsample_fraction: float = 0.25
    reps: int = 50
    alpha: float = 0.05
    fast: bool = True

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(int(v) for v in self.order))
        object.__setattr__(self, "taus", tuple(float(t) for t in self.taus))
        d = len(self.order)
        if sorted(self.order) != list(range(1, d + 1)):
            raise CliError("order must be a permutation of 1..d")
        if not self.taus or any(not 0 < t < 1 for t in self.taus):
            raise CliError("taus must be a non-empty subset of (0, 1)")
        if not 0 < self.subsample_fraction <= 1:
            raise CliError("subsample_fraction must lie in (0, 1]")
        if self.reps < 1:
            raise CliError("reps must be >= 1")
        if not 0 < self.alpha < 1:
            raise CliError("alpha must lie in (0, 1)")

    @staticmethod
    def from_dict(obj: dict) -> "RiverSpec":
        known = {f: obj[f] for f in (
            "data", "order", "truth", "taus", "subsample_fraction", "reps",
            "alpha", "fast") if f in obj}
        extra = set(obj) - set(known)
        if extra:
            raise CliError(f"unknown river-spec fields: {sorted(extra)}")
        for f in ("data", "order", "truth"):
            if f not in known:
                raise CliError(f"river spec needs {f!r}")
        return RiverSpec(**known)


# ---------------------------------------------------------------------------
# input loading helpers
# ---------------------------------------------------------------------------

def _read_json(path) -> dict:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as e:
            raise CliError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(obj, dict):
        raise CliError(f"{path}: expected a JSON object")
    return obj


def _load_model_arg(arg: str):
    """Classify a --model argument.

    Returns ('builtin', name), ('gamma', matrix), or ('scm', model) where
    the model is the saved extremal SCM (possibly intervened).
    """
    if arg.startswith("builtin:"):
        name = arg.split(":", 1)[1]
        if name not in ("tail", "vanishing", "exp_gauss"):
            raise CliError(f"unknown builtin model {name!r}")
        return "builtin", name
    obj = _read_json(arg)
    if "gamma" in obj and "structures" not in obj:
        return "gamma", validate_variogram(np.asarray(obj["gamma"], dtype=float)).gamma
    return "scm", load_scm(arg)


def _params_from_model_spec(spec: ModelSpec) -> HrScmParams:
    """Reconstruct variogram parameters from a linear-Gaussian model spec."""
    b: dict = {}
    nu2 = np.empty(spec.d - 1)
    for v in range(1, spec.d + 1):
        if v == spec.root:
            continue
        sf = spec.structures[v]
        noise = spec.noises[v]
        if sf.variant != "linear" or noise.family != "gaussian":
            raise CliError(
                "this model is not linear with Gaussian noise, so it has no "
                "variogram representation"
            )
        for p, w in zip(sf.parents, sf.weights):
            b[(p, v)] = w
        nu2[v - 2] = noise.params["var"]
    params = hr_scm_from_weighted_dag(spec.dag(), b, nu2)
    declared = np.array([spec.noises[v].params["mean"] for v in range(2, spec.d + 1)])
    if not np.allclose(declared, params.mu_eps, atol=1e-6):
        raise CliError(
            "model noise means are not moment-normalized for its weights"
        )
    return params


def _require_hr_params(kind: str, model_kind: str, payload):
    """A variogram matrix for kinds that only exist for the linear model."""
    if model_kind == "gamma":
        return payload, None
    if model_kind == "scm":
        m = payload
        if isinstance(m, IntervenedScm):
            raise CliError("use --kind intervened for an intervened model")
        params = _params_from_model_spec(m.spec)
        return params.gamma, params
    raise CliError(
        f"kind {kind!r} needs a variogram file or a linear-Gaussian model"
    )


def _model_hash(arg: str) -> str:
    h = hashlib.blake2b(digest_size=16)
    if arg.startswith("builtin:"):
        h.update(arg.encode())
    else:
        with open(arg, "rb") as fh:
            h.update(fh.read())
    return h.hexdigest()


def _write_meta(out_path: Path, meta: dict) -> None:
    with open(out_path.with_suffix(out_path.suffix + ".meta.json"), "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _emit(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _parse_do(items) -> Optional[Intervention]:
    if not items:
        return None
    xi = {}
    for item in items:
        node, _, value = item.partition("=")
        try:
            v, x = int(node), float(value)
        except ValueError as exc:
            raise CliError(f"bad --do {item!r}; expected NODE=VALUE") from exc
        if v in xi:
            raise CliError(f"node {v} given twice in --do")
        xi[v] = x
    return Intervention(xi)


def _cmd_simulate(args) -> int:
    if not args.out:
        raise CliError("simulate needs --out")
    rng = np.random.default_rng(args.seed)
    model_kind, payload = _load_model_arg(args.model)
    n = args.n
    if n < 1:
        raise CliError("n must be >= 1")

    if args.kind == "pareto":
        gamma, _ = _require_hr_params("pareto", model_kind, payload)
        x = sample_pareto_hr(gamma, n, rng)
    elif args.kind == "yk":
        if args.k is None:
            raise CliError("kind 'yk' needs --k")
        gamma, _ = _require_hr_params("yk", model_kind, payload)
        x = sample_yk_hr(gamma, args.k, n, rng)
    elif args.kind == "y1":
        if model_kind == "builtin":
            m = build_doa_example(payload, sigma2=args.sigma2).declared_limit
        elif model_kind == "scm":
            m = payload
            if isinstance(m, IntervenedScm):
                raise CliError("use --kind intervened for an intervened model")
        else:
            raise CliError("kind 'y1' needs a saved model, not a bare variogram")
        x = sample_y1(m, n, rng)
    elif args.kind == "doa":
        if model_kind == "builtin":
            doa = build_doa_example(payload, sigma2=args.sigma2)
        else:
            _, params = _require_hr_params("doa", model_kind, payload)
            if params is None:
                raise CliError("kind 'doa' needs a saved model, not a bare variogram")
            g_full = load_graph(args.full_graph) if args.full_graph else params.g_e
            if not isinstance(g_full, Dag):
                raise CliError("--full-graph must be a DAG")
            doa = build_doa_from_hr(params, g_full)
        x = sample_doa(doa, n, rng)
    elif args.kind == "intervened":
        if model_kind != "scm":
            raise CliError("kind 'intervened' needs a saved model file")
        iv = _parse_do(args.do)
        if iv is None and not isinstance(payload, IntervenedScm):
            raise CliError("kind 'intervened' needs --do NODE=VALUE or an "
                           "intervened model file")
        x = sample_intervened(payload, iv, n, rng)
    else:  # pragma: no cover - argparse restricts choices
        raise CliError(f"unknown kind {args.kind!r}")

    out = Path(args.out)
    save_samples_csv(out, x)
    _write_meta(out, {
        "command": "simulate", "kind": args.kind, "n": n, "seed": args.seed,
        "model": args.model, "model_hash": _model_hash(args.model),
        "columns": x.shape[1],
    })
    return 0


# ---------------------------------------------------------------------------
# ci-test / pc / prune / eval-shd
# ---------------------------------------------------------------------------

def _load_exp_dataset(args):
    data = load_dataset_csv(args.data)
    if args.margins == "known":
        return known_margin_dataset(data.x)
    return to_exponential_margins(data)


def _parse_cond_set(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    try:
        return tuple(int(tok) for tok in text.replace(" ", "").split(","))
    except ValueError as exc:
        raise CliError(f"bad conditioning set {text!r}") from exc


def _cmd_ci_test(args) -> int:
    e = _load_exp_dataset(args)
    s = _parse_cond_set(args.S)
    thr = args.exceedance_threshold
    if args.method == "random":
        k = args.k if args.k is not None else min(s) if s else None
        if k is None:
            raise CliError("the random-k test needs a non-empty conditioning set")
        r = ci_test_random(e, args.i, args.j, s, k, args.tau, threshold=thr)
    else:
        thresholds = None if thr is None else thr
        ev = empirical_variogram(e, args.tau, thresholds=thresholds)
        r = ci_test_avg(ev, int(ev.counts.min()), args.i, args.j, s)
    _emit(args, ci_result_to_json(r))
    return 0


def _build_oracle(args, d: int, trace):
    if getattr(args, "oracle", None):
        g = load_graph(args.oracle)
        if not isinstance(g, Dag):
            raise CliError("--oracle must point to a DAG file")
        if g.d != d:
            raise CliError(f"oracle graph has {g.d} nodes, expected {d}")
        return GraphOracle(g, trace=trace)
    if not getattr(args, "data", None):
        raise CliError("need --data or --oracle")
    e = _load_exp_dataset(args)
    if e.xstar.shape[1] != d:
        raise CliError(f"data has {e.xstar.shape[1]} columns, expected {d}")
    thr = args.exceedance_threshold
    return sample_oracle_average(
        e, args.tau, args.alpha,
        thresholds=None if thr is None else thr, trace=trace,
    )


def _cmd_pc(args) -> int:
    if args.oracle:
        d = load_graph(args.oracle).d
    else:
        if not args.data:
            raise CliError("need --data or --oracle")
        d = load_dataset_csv(args.data).x.shape[1]
    trace: list = []
    oracle = _build_oracle(args, d, trace)
    info: dict = {}
    est = ext_pc(oracle, d, PcConfig(alpha=args.alpha, tau=args.tau), info=info)
    if args.trace:
        write_trace_jsonl(args.trace, trace)
    if not args.out:
        raise CliError("pc needs --out")
    save_graph(est, args.out)
    _write_meta(Path(args.out), {
        "command": "pc", "alpha": args.alpha, "tau": args.tau,
        "v_conflicts": info["v_conflicts"], "queries": len(trace),
        "seed": args.seed,
    })
    return 0


def _cmd_prune(args) -> int:
    g = load_graph(args.graph)
    if not isinstance(g, Dag):
        raise CliError("--graph must be a DAG file")
    trace: list = []
    oracle = _build_oracle(args, g.d, trace)
    est = ext_prune(g, oracle, fast=args.fast)
    if args.trace:
        write_trace_jsonl(args.trace, trace)
    if not args.out:
        raise CliError("prune needs --out")
    save_graph(est, args.out)
    _write_meta(Path(args.out), {
        "command": "prune", "alpha": args.alpha, "tau": args.tau,
        "fast": args.fast, "queries": len(trace), "seed": args.seed,
    })
    return 0


def _cmd_eval_shd(args) -> int:
    a = load_graph(args.graph)
    b = load_graph(args.truth)
    if args.as_cpdag:
        a = cpdag_from_dag(a) if isinstance(a, Dag) else a
        b = cpdag_from_dag(b) if isinstance(b, Dag) else b
    _emit(args, json.dumps({"shd": shd(a, b)}))
    return 0


# ---------------------------------------------------------------------------
# experiment engine
# ---------------------------------------------------------------------------

def _relabel_root_first(g: Dag, g_e: Dag) -> tuple[Dag, Dag]:
    """Swap labels so the shared root becomes node 1 (SHD-preserving)."""
    r = root(g_e)
    if r is None or root(g) != r:
        raise CliError("graphs must share a root")
    if r == 1:
        return g, g_e
    swap = {r: 1, 1: r}

    def relabel(h: Dag) -> Dag:
        return Dag(h.d, [(swap.get(i, i), swap.get(j, j)) for i, j in h.edges])

    return relabel(g), relabel(g_e)


def _random_cell_model(d: int, e_n: float, seed_rep: int, rng) -> tuple[Dag, Dag, HrScmParams]:
    """A random rooted supergraph/extremal-graph pair plus SCM parameters.

    The full graph G comes from the random rooted-DAG sampler; the extremal
    graph prunes up to d of its redundant edges; edge weights are uniform
    on [0.3, 1] normalized to sum to one per node, and all noise variances
    are one.  Both graphs are relabeled so the root is node 1.
    """
    g = random_rooted_dag(RandomDagConfig(d, e_n, seed=hash64(seed_rep, "dag")))
    n_remove = int(rng.integers(0, d + 1))
    g_e = random_prune(g, n_remove, seed=hash64(seed_rep, "prune"))
    g, g_e = _relabel_root_first(g, g_e)
    b: dict = {}
    for v in range(2, d + 1):
        pa = sorted(parents(g_e, v))
        if not pa:
            continue
        w = rng.uniform(0.3, 1.0, size=len(pa))
        w = w / w.sum()
        for p, wp in zip(pa, w):
            b[(p, v)] = float(wp)
    params = hr_scm_from_weighted_dag(g_e, b, np.ones(d - 1))
    return g, g_e, params


def _cell_dataset(source: str, params: HrScmParams, g_full: Dag, n: int,
                  tau: float, rng):
    """Per-rep data: returns (exp-margin dataset, effective tau, thresholds).

    'pareto' draws the m = floor(n (1 - tau)) exceedances directly from the
    limit model with known margins and uses the zero threshold; 'doa' draws
    n pre-limit samples, rank-transforms, and thresholds at tau.
    """
    if source == "pareto":
        m = int(np.floor(n * (1.0 - tau) + 1e-9))
        if m < 25:
            raise InferenceError(f"tau {tau} leaves only {m} exceedances")
        y = sample_pareto_hr(params.gamma, m, rng)
        return known_margin_dataset(y), 0.0, 0.0
    x = sample_doa(build_doa_from_hr(params, g_full), n, rng)
    return to_exponential_margins(Dataset(x)), tau, None


def _row(kind, source, d, e_n, tau, n, reps, metric, value) -> dict:
    return {
        "kind": kind, "source": source, "d": d, "e_n": e_n,
        "tau": "NA" if tau is None else tau, "n": n, "reps": reps,
        "metric": metric, "value": value, "dhsic": None, "pcm": None,
    }


def _shd_cell(spec: ExperimentSpec, source: str, d: int, e_n: float,
              tau: float) -> list[dict]:
    vals = []
    for rep in range(spec.reps):
        seed_rep = hash64(spec.seed, d, e_n, tau, rep)
        rng = np.random.default_rng(seed_rep)
        g, g_e, params = _random_cell_model(d, e_n, seed_rep, rng)
        try:
            e, tau_eff, thr = _cell_dataset(source, params, g, spec.n, tau, rng)
            oracle = sample_oracle_average(e, tau_eff, spec.alpha, thresholds=thr)
            if spec.kind == "pc_shd":
                est = ext_pc(oracle, d, PcConfig(alpha=spec.alpha, tau=tau_eff))
                vals.append(shd(est, cpdag_from_dag(g_e)))
            else:
                est = ext_prune(g, oracle, fast=False)
                vals.append(shd(est, g_e))
        except InferenceError:
            return [_row(spec.kind, source, d, e_n, tau, spec.n, spec.reps,
                         "shd_mean", None)]
    return [_row(spec.kind, source, d, e_n, tau, spec.n, spec.reps,
                 "shd_mean", float(np.mean(vals)))]


def _null_triple(g_e: Dag) -> Optional[tuple]:
    """The first non-adjacent pair with its first separating set (size >= 1)."""
    from itertools import combinations

    from .graph import d_separated, skeleton

    adj = skeleton(g_e)
    d = g_e.d
    for i in range(1, d + 1):
        for j in range(i + 1, d + 1):
            if (i, j) in adj:
                continue
            rest = [v for v in range(1, d + 1) if v not in (i, j)]
            for size in range(1, len(rest) + 1):
                for s in combinations(rest, size):
                    if d_separated(g_e, {i}, {j}, s):
                        return i, j, s
    return None


def _ci_calibration_cell(spec: ExperimentSpec, source: str, d: int,
                         e_n: float, tau: float) -> list[dict]:
    p_rand, p_avg = [], []
    for rep in range(spec.reps):
        seed_rep = hash64(spec.seed, d, e_n, tau, rep)
        rng = np.random.default_rng(seed_rep)
        g, g_e, params = _random_cell_model(d, e_n, seed_rep, rng)
        triple = _null_triple(g_e)
        if triple is None:
            continue
        i, j, s = triple
        try:
            e, tau_eff, thr = _cell_dataset(source, params, g, spec.n, tau, rng)
            k = int(rng.choice(s))
            p_rand.append(ci_test_random(e, i, j, s, k, tau_eff, threshold=thr).p)
            ev = empirical_variogram(e, tau_eff, thresholds=thr)
            p_avg.append(ci_test_avg(ev, int(ev.counts.min()), i, j, s).p)
        except InferenceError:
            return [_row(spec.kind, source, d, e_n, tau, spec.n, spec.reps,
                         f"null_rejection_{m}@{a:g}", None)
                    for m in ("random", "avg") for a in ALPHA_GRID]
    rows = []
    for name, ps in (("random", p_rand), ("avg", p_avg)):
        for a in ALPHA_GRID:
            value = float(np.mean([p < a for p in ps])) if ps else None
            rows.append(_row(spec.kind, source, d, e_n, tau, spec.n,
                             spec.reps, f"null_rejection_{name}@{a:g}", value))
    return rows


def _consistency_cell(spec: ExperimentSpec, d: int, e_n: float) -> list[dict]:
    seed_cell = hash64(spec.seed, d, e_n, "consistency")
    rng = np.random.default_rng(seed_cell)
    _, _, params = _random_cell_model(d, e_n, seed_cell, rng)
    n_grid = (max(100, spec.n // 4), spec.n, 4 * spec.n)
    rows = prune_consistency_harness(params, n_grid, spec.reps, rng)
    return [_row(spec.kind, "pareto", d, e_n, None, r["n"], spec.reps,
                 "prune_error_rate", r["rate"]) for r in rows]


def _experiment_cells(spec: ExperimentSpec):
    if spec.kind == "consistency":
        for d in spec.dims:
            for en in spec.e_n:
                yield ("pareto", d, en, None)
    else:
        for source in spec.sources:
            for d in spec.dims:
                for en in spec.e_n:
                    for tau in spec.taus:
                        yield (source, d, en, tau)


def _run_cell(spec: ExperimentSpec, cell) -> list[dict]:
    source, d, e_n, tau = cell
    if spec.kind == "consistency":
        return _consistency_cell(spec, d, e_n)
    if spec.kind == "ci_calibration":
        return _ci_calibration_cell(spec, source, d, e_n, tau)
    return _shd_cell(spec, source, d, e_n, tau)


def _format_cell(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.10g" % float(v)


def run_experiment(spec: ExperimentSpec, out_dir, threads: int = 1) -> Path:
    """Run a grid and write experiment.csv (+ meta); returns the CSV path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = list(_experiment_cells(spec))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_run_cell, spec, c) for c in cells]
            blocks = [f.result() for f in futures]
    else:
        blocks = [_run_cell(spec, c) for c in cells]
    csv_path = out_dir / "experiment.csv"
    with open(csv_path, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for block in blocks:
            for row in block:
                fh.write(",".join(_format_cell(row[c]) for c in CSV_COLUMNS) + "\n")
    meta = {
        "command": "experiment", "spec": spec.to_dict(),
        "columns": list(CSV_COLUMNS), "rows": sum(len(b) for b in blocks),
        "note": "dhsic and pcm are placeholder columns for external "
                "competing methods and are always NA",
    }
    with open(out_dir / "experiment.meta.json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return csv_path


def _cmd_experiment(args) -> int:
    if not args.out:
        raise CliError("experiment needs --out (a directory)")
    if args.spec:
        obj = _read_json(args.spec)
        obj.setdefault("seed", args.seed)
        spec = ExperimentSpec.from_dict(obj)
    else:
        if not args.kind:
            raise CliError("need --spec or --kind")
        fields = {"kind": args.kind, "seed": args.seed}
        if args.dims:
            fields["dims"] = _parse_cond_set(args.dims)
        if args.e_n:
            fields["e_n"] = tuple(float(t) for t in args.e_n.split(","))
        if args.taus:
            fields["taus"] = tuple(float(t) for t in args.taus.split(","))
        if args.sources:
            fields["sources"] = tuple(args.sources.split(","))
        if args.n:
            fields["n"] = args.n
        if args.reps:
            fields["reps"] = args.reps
        if args.alpha is not None:
            fields["alpha"] = args.alpha
        spec = ExperimentSpec(**fields)
    run_experiment(spec.scaled(args.scale), args.out, threads=args.threads)
    return 0


# ---------------------------------------------------------------------------
# river pipeline
# ---------------------------------------------------------------------------

RIVER_COLUMNS = ("rep", "tau", "shd", "input_shd", "dhsic", "pcm")
RIVER_SUMMARY_COLUMNS = ("tau", "median_shd", "q25_shd", "q75_shd",
                         "input_shd", "dhsic", "pcm")


def make_river_fixture(out_dir, seed: int = 7, n: int = 3000) -> Path:
    """Write a synthetic 12-station river dataset with known flow graph.

    The truth is a main stem 1 -> 2 -> ... -> 12 with one braided channel
    4 -> 6, sampled from the pre-limit model whose extremes follow the flow
    graph.  n = 3000 keeps enough exceedances per station in a 25%
    subsample at the deepest default quantile to test against the largest
    Markov-blanket separator of the complete input graph.  Returns the
    path of the ready-to-run spec file.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    d = 12
    edges = [(v, v + 1) for v in range(1, d)] + [(4, 6)]
    truth = Dag(d, edges)
    b = {(i, j): 1.0 for i, j in edges if j != 6}
    b[(5, 6)] = 0.5
    b[(4, 6)] = 0.5
    params = hr_scm_from_weighted_dag(truth, b, np.ones(d - 1))
    rng = np.random.default_rng(seed)
    x = sample_doa(build_doa_from_hr(params, truth), n, rng)
    header = ",".join(f"s{j}" for j in range(1, d + 1))
    np.savetxt(out_dir / "discharge.csv", x, fmt="%.10g", delimiter=",",
               header=header, comments="")
    save_graph(truth, out_dir / "flow_graph.json")
    with open(out_dir / "order.json", "w") as fh:
        json.dump(list(topological_order(truth)), fh)
        fh.write("\n")
    spec = {
        "data": "discharge.csv", "order": list(topological_order(truth)),
        "truth": "flow_graph.json", "taus": [0.9, 0.95, 0.975],
        "subsample_fraction": 0.25, "reps": 50, "alpha": 0.05, "fast": True,
    }
    spec_path = out_dir / "spec.json"
    with open(spec_path, "w") as fh:
        json.dump(spec, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return spec_path


def run_river(spec: RiverSpec, base_dir, seed: int, out_dir) -> Path:
    """Run repeated subsample pruning on station data; returns summary path."""
    base_dir = Path(base_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = load_dataset_csv(base_dir / spec.data)
    d = data.x.shape[1]
    if len(spec.order) != d:
        raise CliError(
            f"order lists {len(spec.order)} stations but data has {d} columns"
        )
    truth = load_graph(base_dir / spec.truth)
    if not isinstance(truth, Dag) or truth.d != d:
        raise CliError("truth must be a DAG on the data's stations")
    g_input = complete_dag(spec.order)
    input_shd = shd(g_input, truth)
    n_sub = int(np.floor(spec.subsample_fraction * data.n))
    if n_sub < 20:
        raise CliError("subsample too small; need at least 20 rows")

    rows = []
    for rep in range(spec.reps):
        rng = np.random.default_rng(hash64(seed, "river", rep))
        idx = np.sort(rng.choice(data.n, size=n_sub, replace=False))
        e = to_exponential_margins(Dataset(data.x[idx]))
        for tau in spec.taus:
            oracle = sample_oracle_average(e, tau, spec.alpha)
            est = ext_prune(g_input, oracle, fast=spec.fast)
            rows.append({"rep": rep, "tau": tau, "shd": shd(est, truth),
                         "input_shd": input_shd, "dhsic": None, "pcm": None})

    with open(out_dir / "river_shd.csv", "w") as fh:
        fh.write(",".join(RIVER_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_format_cell(row[c]) for c in RIVER_COLUMNS) + "\n")
    summary_path = out_dir / "river_summary.csv"
    with open(summary_path, "w") as fh:
        fh.write(",".join(RIVER_SUMMARY_COLUMNS) + "\n")
        for tau in spec.taus:
            shds = [r["shd"] for r in rows if r["tau"] == tau]
            q25, med, q75 = np.percentile(shds, [25, 50, 75])
            vals = {"tau": tau, "median_shd": med, "q25_shd": q25,
                    "q75_shd": q75, "input_shd": input_shd,
                    "dhsic": None, "pcm": None}
            fh.write(",".join(_format_cell(vals[c])
                              for c in RIVER_SUMMARY_COLUMNS) + "\n")
    meta = {
        "command": "river", "seed": seed, "stations": d, "rows": data.n,
        "subsample_rows": n_sub, "reps": spec.reps, "taus": list(spec.taus),
        "alpha": spec.alpha, "fast": spec.fast, "input_shd": input_shd,
        "note": "dhsic and pcm are placeholder columns for external "
                "competing methods and are always NA",
    }
    with open(out_dir / "river.meta.json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return summary_path


def _cmd_river(args) -> int:
    if not args.out:
        raise CliError("river needs --out (a directory)")
    if args.make_fixture:
        make_river_fixture(args.out, seed=args.seed)
        return 0
    if not args.spec:
        raise CliError("need --spec (or --make-fixture)")
    spec = RiverSpec.from_dict(_read_json(args.spec))
    run_river(spec, Path(args.spec).parent, args.seed, args.out)
    return 0


# ---------------------------------------------------------------------------
# parser and entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0,
                        help="global RNG seed (default 0)")
    common.add_argument("--scale", type=float, default=0.2,
                        help="shrink factor for experiment n and reps "
                             "(default 0.2; use 1.0 for full size)")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads for experiment cells")
    common.add_argument("--out", default=None,
                        help="output file (or directory for experiment/river)")

    data_opts = argparse.ArgumentParser(add_help=False)
    data_opts.add_argument("--data", default=None, help="samples CSV")
    data_opts.add_argument("--margins", choices=("rank", "known"),
                           default="rank",
                           help="rank-transform the data (default) or treat "
                                "it as already exponential-margined")
    data_opts.add_argument("--tau", type=float, default=0.9,
                           help="exceedance quantile level (default 0.9)")
    data_opts.add_argument("--exceedance-threshold", type=float, default=None,
                           help="override the tau-quantile threshold, e.g. 0 "
                                "for exact standardized samples")

    p = argparse.ArgumentParser(
        prog="tailcausal",
        description="Causal discovery and simulation for multivariate extremes.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", parents=[common],
                        help="draw samples from a model")
    ps.add_argument("--kind", required=True,
                    choices=("pareto", "y1", "yk", "doa", "intervened"))
    ps.add_argument("--model", required=True,
                    help="model JSON, variogram JSON, or builtin:NAME")
    ps.add_argument("--n", type=int, required=True)
    ps.add_argument("--k", type=int, default=None,
                    help="conditioning coordinate for kind 'yk'")
    ps.add_argument("--sigma2", type=float, default=1.0,
                    help="noise variance for builtin models")
    ps.add_argument("--full-graph", default=None,
                    help="pre-limit supergraph JSON for kind 'doa'")
    ps.add_argument("--do", action="append", default=[],
                    metavar="NODE=VALUE",
                    help="extremal intervention for kind 'intervened'")
    ps.set_defaults(func=_cmd_simulate)

    pc = sub.add_parser("ci-test", parents=[common, data_opts],
                        help="one extremal conditional-independence test")
    pc.add_argument("--i", type=int, required=True)
    pc.add_argument("--j", type=int, required=True)
    pc.add_argument("--S", required=True,
                    help="comma-separated conditioning set, e.g. 2,3")
    pc.add_argument("--method", choices=("random", "avg"), default="avg")
    pc.add_argument("--k", type=int, default=None,
                    help="conditioning coordinate for the random-k method "
                         "(default: the smallest index in S)")
    pc.set_defaults(func=_cmd_ci_test)

    pp = sub.add_parser("pc", parents=[common, data_opts],
                        help="extremal PC algorithm")
    pp.add_argument("--alpha", type=float, default=0.01)
    pp.add_argument("--oracle", default=None,
                    help="ground-truth DAG JSON: use exact separation "
                         "instead of data")
    pp.add_argument("--trace", default=None, help="write CI queries as JSONL")
    pp.set_defaults(func=_cmd_pc)

    pr = sub.add_parser("prune", parents=[common, data_opts],
                        help="prune a known causal order or supergraph")
    pr.add_argument("--graph", required=True, help="input DAG JSON")
    pr.add_argument("--alpha", type=float, default=0.05)
    pr.add_argument("--oracle", default=None,
                    help="ground-truth DAG JSON: use exact separation "
                         "instead of data")
    pr.add_argument("--fast", action="store_true",
                    help="single Markov-blanket separator per edge "
                         "(may keep extra edges whose endpoints share a "
                         "child; the default full search is exact)")
    pr.add_argument("--trace", default=None, help="write CI queries as JSONL")
    pr.set_defaults(func=_cmd_prune)

    pe = sub.add_parser("eval-shd", parents=[common],
                        help="structural Hamming distance between two graphs")
    pe.add_argument("--graph", required=True)
    pe.add_argument("--truth", required=True)
    pe.add_argument("--as-cpdag", action="store_true",
                    help="compare completed equivalence classes")
    pe.set_defaults(func=_cmd_eval_shd)

    px = sub.add_parser("experiment", parents=[common],
                        help="simulation-study grid")
    px.add_argument("--spec", default=None, help="experiment spec JSON")
    px.add_argument("--kind", choices=EXPERIMENT_KINDS, default=None)
    px.add_argument("--dims", default=None, help="comma-separated d values")
    px.add_argument("--e-n", dest="e_n", default=None,
                    help="comma-separated expected neighborhood sizes")
    px.add_argument("--taus", default=None, help="comma-separated tau values")
    px.add_argument("--sources", default=None,
                    help="comma-separated subset of pareto,doa")
    px.add_argument("--n", type=int, default=None)
    px.add_argument("--reps", type=int, default=None)
    px.add_argument("--alpha", type=float, default=None)
    px.set_defaults(func=_cmd_experiment)

    pv = sub.add_parser("river", parents=[common],
                        help="repeated-subsample pruning of station data")
    pv.add_argument("--spec", default=None, help="river spec JSON")
    pv.add_argument("--make-fixture", action="store_true",
                    help="write the synthetic 12-station fixture into --out")
    pv.set_defaults(func=_cmd_river)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
