"""Structure learning in the tails.

Two complementary algorithms, each usable against either a d-separation
oracle (for faithful models) or a data-driven extremal conditional-
independence test:

* a PC-style search that learns the skeleton with conditioning sets of size
  >= 1 (rootedness rules out marginal independencies) and orients it into a
  CPDAG via v-structures and Meek's rules;
* a pruning pass that starts from a rooted supergraph and removes an edge
  whenever some set that d-separates the pair in the candidate graph also
  renders the pair conditionally independent in the tail.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Optional

import numpy as np
from scipy.stats import norm

from .graph import (
    Cpdag,
    Dag,
    _meek_closure,
    d_separated,
    is_rooted,
    markov_blanket,
    prunable_edges,
    root,
    topological_order,
)
from .hr import HrScmParams, extremal_partial_correlation
from .inference import (
    CiTestResult,
    ExpDataset,
    ci_test_avg,
    ci_test_random,
    empirical_variogram,
    known_margin_dataset,
)
from .scm import sample_pareto_hr


class LearnError(ValueError):
    """Invalid learning input (graph, query, or configuration)."""


# ---------------------------------------------------------------------------
# conditional-independence oracles
# ---------------------------------------------------------------------------

class SepsetMap:
    """Separating sets recorded during skeleton learning, per unordered pair."""

    def __init__(self):
        self._map: dict[frozenset[int], tuple[int, ...]] = {}

    def record(self, i: int, j: int, s) -> None:
        self._map[frozenset((i, j))] = tuple(sorted(int(v) for v in s))

    def get(self, i: int, j: int) -> Optional[tuple[int, ...]]:
        return self._map.get(frozenset((i, j)))

    def items(self):
        for pair, s in sorted(self._map.items(), key=lambda kv: sorted(kv[0])):
            i, j = sorted(pair)
            yield (i, j), s

    def __len__(self) -> int:
        return len(self._map)

    def __contains__(self, pair) -> bool:
        return frozenset(pair) in self._map


def _check_query(i: int, j: int, s: tuple[int, ...]) -> tuple[int, ...]:
    if i == j:
        raise LearnError("query nodes must be distinct")
    if i in s or j in s:
        raise LearnError("conditioning set must exclude the tested pair")
    if len(set(s)) != len(s):
        raise LearnError("conditioning set has duplicates")
    return tuple(sorted(int(v) for v in s))


class GraphOracle:
    """Answers extremal CI queries by d-separation in a fixed DAG.

    For a faithful model, Y_i and Y_j are conditionally independent in the
    tail given Y_S exactly when i and j are d-separated by S.
    """

    def __init__(self, g_e: Dag, trace: Optional[list] = None):
        self.g_e = g_e
        self.trace = trace

    def query(self, i: int, j: int, s) -> bool:
        s = _check_query(i, j, tuple(s))
        independent = d_separated(self.g_e, {i}, {j}, s)
        if self.trace is not None:
            self.trace.append(
                {"i": i, "j": j, "S": list(s), "p": None,
                 "decision": "independent" if independent else "dependent"}
            )
        return independent


class SampleOracle:
    """Answers CI queries by a test closure at significance level alpha.

    Declares independence when the two-sided p-value is >= alpha, i.e. when
    the scaled |z| statistic stays below the normal (1 - alpha/2)-quantile.
    Results are memoized on the unordered pair and the sorted conditioning
    set, so answers depend only on (i, j, S) and the fixed data behind the
    closure.
    """

    def __init__(
        self,
        test: Callable[[int, int, tuple[int, ...]], CiTestResult],
        alpha: float,
        trace: Optional[list] = None,
    ):
        if not 0.0 < alpha < 1.0:
            raise LearnError("alpha must lie in (0, 1)")
        self.test = test
        self.alpha = float(alpha)
        self.trace = trace
        self._cache: dict[tuple, CiTestResult] = {}

    def query(self, i: int, j: int, s) -> bool:
        s = _check_query(i, j, tuple(s))
        key = (min(i, j), max(i, j), s)
        result = self._cache.get(key)
        if result is None:
            result = self.test(key[0], key[1], s)
            self._cache[key] = result
        independent = result.p >= self.alpha
        if self.trace is not None:
            self.trace.append(
                {"i": i, "j": j, "S": list(s), "p": result.p,
                 "decision": "independent" if independent else "dependent"}
            )
        return independent


def _stable_pick(values: tuple[int, ...], i: int, j: int) -> int:
    """Deterministic, run-independent pick from values keyed by (i, j, values)."""
    key = f"{min(i, j)}|{max(i, j)}|{','.join(map(str, values))}".encode()
    h = int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big")
    return values[h % len(values)]


def sample_oracle_average(
    e: ExpDataset,
    tau: float,
    alpha: float,
    thresholds=None,
    trace: Optional[list] = None,
) -> SampleOracle:
    """Oracle backed by the averaged-variogram test on one fixed dataset."""
    ev = empirical_variogram(e, tau, thresholds=thresholds)
    n_eff = int(ev.counts.min())

    def test(i, j, s):
        return ci_test_avg(ev, n_eff, i, j, s)

    return SampleOracle(test, alpha, trace=trace)


def sample_oracle_random(
    e: ExpDataset,
    tau: float,
    alpha: float,
    threshold=None,
    trace: Optional[list] = None,
) -> SampleOracle:
    """Oracle backed by the single-conditioning-node test.

    The conditioning node k is picked from S by a stable hash of the query,
    so repeated runs on the same data give identical answers.
    """

    def test(i, j, s):
        k = _stable_pick(s, i, j)
        return ci_test_random(e, i, j, s, k, tau, threshold=threshold)

    return SampleOracle(test, alpha, trace=trace)


def write_trace_jsonl(path, trace) -> None:
    """One JSON object per CI query: {i, j, S, p, decision}."""
    with open(path, "w") as fh:
        for entry in trace:
            fh.write(json.dumps(entry) + "\n")


# ---------------------------------------------------------------------------
# PC-style search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PcConfig:
    """Knobs for the PC-style search.

    max_cond_size of None means no cap (conditioning sets are bounded by
    the shrinking adjacency sets anyway); tau is carried along for sample
    pipelines that build their oracle from raw data.
    """

    alpha: float = 0.01
    max_cond_size: Optional[int] = None
    tau: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise LearnError("alpha must lie in (0, 1)")
        if self.max_cond_size is not None and self.max_cond_size < 1:
            raise LearnError("max_cond_size must be >= 1")
        if self.tau is not None and not 0.0 <= self.tau < 1.0:
            raise LearnError("tau must lie in [0, 1)")


def ext_pc_skeleton(
    oracle, d: int, config: Optional[PcConfig] = None
) -> tuple[Cpdag, SepsetMap]:
    """Learn the skeleton by removing edges with separating sets of size >= 1.

    Starts from the complete graph.  For each set size in turn, ordered
    pairs (i, j) are scanned lexicographically; candidate sets are the
    subsets of the current neighbours of i (minus j), enumerated in
    lexicographic order.  The first set the oracle accepts removes the edge
    and is recorded.  Size-zero sets are never queried: a rooted graph
    admits no marginal independencies.
    """
    cfg = config or PcConfig()
    if d < 2:
        raise LearnError("need at least two nodes")
    adj = {v: set(range(1, d + 1)) - {v} for v in range(1, d + 1)}
    sepsets = SepsetMap()
    ell_max = d if cfg.max_cond_size is None else min(cfg.max_cond_size, d)
    for ell in range(1, ell_max + 1):
        if not any(len(adj[i] - {j}) >= ell for i in adj for j in adj[i]):
            break
        for i in range(1, d + 1):
            for j in sorted(adj[i]):
                if j not in adj[i]:  # removed earlier in this sweep
                    continue
                pool = sorted(adj[i] - {j})
                if len(pool) < ell:
                    continue
                for s in combinations(pool, ell):
                    if oracle.query(i, j, s):
                        adj[i].discard(j)
                        adj[j].discard(i)
                        sepsets.record(i, j, s)
                        break
    edges = sorted((i, j) for i in adj for j in adj[i] if i < j)
    return Cpdag(d, undirected=edges), sepsets


def ext_pc(
    oracle, d: int, config: Optional[PcConfig] = None, info: Optional[dict] = None
) -> Cpdag:
    """Full PC-style search: skeleton, v-structures, then Meek closure.

    Orients i -> k <- j whenever i and j are non-adjacent with common
    neighbour k outside their recorded separating set.  Under noisy tests
    two v-structures can disagree about one edge's direction; the first
    orientation written wins and the conflict is counted in info.

    If a dict is passed as info it is filled with the skeleton, the sepset
    map, and the v-structure conflict count.
    """
    skel, sepsets = ext_pc_skeleton(oracle, d, config)
    undirected = {tuple(e) for e in skel.undirected}
    adj = {v: set() for v in range(1, d + 1)}
    for a, b in undirected:
        adj[a].add(b)
        adj[b].add(a)

    directed: set[tuple[int, int]] = set()
    conflicts = 0
    for i in range(1, d + 1):
        for j in range(i + 1, d + 1):
            if j in adj[i]:
                continue
            s = sepsets.get(i, j)
            if s is None:
                continue
            for k in sorted(adj[i] & adj[j]):
                if k in s:
                    continue
                for a in (i, j):
                    if (k, a) in directed:
                        conflicts += 1
                    else:
                        directed.add((a, k))
                        undirected.discard(tuple(sorted((a, k))))

    directed, undirected = _meek_closure(d, directed, undirected)
    out = Cpdag(d, directed=sorted(directed), undirected=sorted(undirected))
    if info is not None:
        info.update({"skeleton": skel, "sepsets": sepsets, "v_conflicts": conflicts})
    return out


# ---------------------------------------------------------------------------
# pruning of a rooted supergraph
# ---------------------------------------------------------------------------

def _fast_separator(g_ij: Dag, i: int, j: int) -> tuple[int, ...]:
    """Markov blanket of j plus the root, in the candidate graph, minus i."""
    s = markov_blanket(g_ij, j) | {root(g_ij)}
    s.discard(i)
    return tuple(sorted(s))


def ext_prune(g: Dag, oracle, fast: bool = False) -> Dag:
    """Remove edges of a rooted DAG that vanish in the tail.

    Visits the initially-prunable edges (target keeps >= 2 parents) in
    lexicographic order.  Each still-prunable edge (i, j) is dropped from
    the working graph; the edge is removed for good if some set that
    d-separates i from j in that candidate graph also passes the CI oracle.
    With fast=True only one candidate set is tried: the Markov blanket of j
    in the candidate graph joined with the root, with i excluded.  That set
    is a valid separator except when i and j share a child, in which case
    the heuristic can keep an edge the full search removes; the full search
    is the reference behaviour.  The result is always rooted.
    """
    if not is_rooted(g):
        raise LearnError("input graph must be rooted")
    plan = sorted(prunable_edges(g))
    estar = set(g.edges)
    parents = {v: {a for a, b in estar if b == v} for v in range(1, g.d + 1)}
    for i, j in plan:
        if len(parents[j]) < 2:
            continue
        g_ij = Dag(g.d, sorted(estar - {(i, j)}))
        if fast:
            candidates = [_fast_separator(g_ij, i, j)]
        else:
            rest = [v for v in range(1, g.d + 1) if v != i and v != j]
            candidates = (
                s
                for size in range(1, len(rest) + 1)
                for s in combinations(rest, size)
                if d_separated(g_ij, {i}, {j}, s)
            )
        if any(oracle.query(i, j, s) for s in candidates):
            estar.discard((i, j))
            parents[j].discard(i)
    return Dag(g.d, sorted(estar))


# ---------------------------------------------------------------------------
# consistency harness
# ---------------------------------------------------------------------------

def minimal_z_gap(gamma, tol: float = 1e-9) -> float:
    """Smallest nonzero |arctanh(rho)| over all pairs and nonempty sets.

    This is the population separation between dependent and independent
    CI statements; it drives the significance-level schedule under which
    pruning is consistent.
    """
    gamma = np.asarray(gamma, dtype=float)
    d = gamma.shape[0]
    gap = np.inf
    for i in range(1, d + 1):
        for j in range(i + 1, d + 1):
            rest = [v for v in range(1, d + 1) if v != i and v != j]
            for size in range(1, len(rest) + 1):
                for s in combinations(rest, size):
                    rho = extremal_partial_correlation(gamma, i, j, s)
                    if abs(rho) > tol:
                        gap = min(gap, abs(np.arctanh(rho)))
    if not np.isfinite(gap):
        raise LearnError("model has no dependent CI statement")
    return float(gap)


def complete_dag(order) -> Dag:
    """The complete rooted DAG whose edges follow the given causal order."""
    order = [int(v) for v in order]
    if sorted(order) != list(range(1, len(order) + 1)):
        raise LearnError("order must be a permutation of 1..d")
    edges = [
        (order[a], order[b]) for a in range(len(order)) for b in range(a + 1, len(order))
    ]
    return Dag(len(order), edges)


def prune_consistency_harness(
    params: HrScmParams,
    n_grid,
    reps: int,
    rng: np.random.Generator,
    g_full: Optional[Dag] = None,
    fast: bool = False,
    alpha_fn: Optional[Callable[[int], float]] = None,
    oracle=None,
) -> list[dict]:
    """Empirical pruning error P(recovered graph != true graph) along n_grid.

    Each repetition draws n exact multivariate-Pareto samples from the
    model, builds the averaged-variogram oracle with all coordinates
    thresholded at zero, and prunes g_full (default: the complete DAG on a
    topological order of the true graph, searched in the reference full
    mode).  The significance level shrinks
    with n as 2 * (1 - Phi(sqrt(n) * gap / 2)) where gap is the population
    minimum |arctanh(rho)| over dependent statements; under this schedule
    the error rate should decrease toward zero.  Passing an oracle (e.g. a
    GraphOracle) bypasses data generation for that fixed answer source.
    """
    g_e = params.g_e
    truth = set(g_e.edges)
    if g_full is None:
        g_full = complete_dag(topological_order(g_e))
    gap = minimal_z_gap(params.gamma)
    if alpha_fn is None:
        def alpha_fn(n):
            # the 1e-300 guard only matters once the normal tail underflows,
            # matching the floor used for test p-values
            return float(max(2.0 * norm.sf(np.sqrt(n) * gap / 2.0), 1e-300))

    rows = []
    for n in n_grid:
        n = int(n)
        alpha = float(alpha_fn(n))
        errors = 0
        for _ in range(int(reps)):
            if oracle is not None:
                orc = oracle
            else:
                y = sample_pareto_hr(params.gamma, n, rng)
                e = known_margin_dataset(y)
                orc = sample_oracle_average(e, 0.0, alpha, thresholds=0.0)
            g_hat = ext_prune(g_full, orc, fast=fast)
            errors += int(set(g_hat.edges) != truth)
        rows.append(
            {"n": n, "alpha": alpha, "reps": int(reps), "errors": errors,
             "rate": errors / reps}
        )
    return rows
