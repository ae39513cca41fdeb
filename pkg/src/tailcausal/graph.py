"""Directed acyclic graphs and the primitives used by extremal structure learning.

Nodes are labeled 1..d throughout.  All graph values are immutable after
construction and every operation here is a pure function, so they are safe
to share across threads.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Iterable, Optional

import numpy as np


class GraphError(ValueError):
    """Invalid graph input (cycle, bad node, malformed edge set)."""


# ---------------------------------------------------------------------------
# core types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Dag:
    """A directed acyclic graph on nodes 1..d.

    ``edges`` holds ordered pairs (i, j) meaning i -> j.  Construction
    validates node ranges, forbids self-loops and duplicate edges, and
    rejects directed cycles.
    """

    d: int
    edges: tuple[tuple[int, int], ...]

    def __init__(self, d: int, edges: Iterable[tuple[int, int]] = ()):
        if d < 1:
            raise GraphError(f"node count must be >= 1, got {d}")
        canon = tuple(sorted((int(i), int(j)) for i, j in edges))
        object.__setattr__(self, "d", int(d))
        object.__setattr__(self, "edges", canon)
        seen = set()
        for i, j in canon:
            if not (1 <= i <= d and 1 <= j <= d):
                raise GraphError(f"edge ({i},{j}) out of range 1..{d}")
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            if (i, j) in seen:
                raise GraphError(f"duplicate edge ({i},{j})")
            seen.add((i, j))
        # acyclicity via Kahn's algorithm; also caches the topological order
        object.__setattr__(self, "_topo", _kahn_order(self.d, canon))

    @cached_property
    def _pa(self) -> dict[int, frozenset[int]]:
        pa: dict[int, set[int]] = {v: set() for v in range(1, self.d + 1)}
        for i, j in self.edges:
            pa[j].add(i)
        return {v: frozenset(s) for v, s in pa.items()}

    @cached_property
    def _ch(self) -> dict[int, frozenset[int]]:
        ch: dict[int, set[int]] = {v: set() for v in range(1, self.d + 1)}
        for i, j in self.edges:
            ch[i].add(j)
        return {v: frozenset(s) for v, s in ch.items()}

    @cached_property
    def _edge_set(self) -> frozenset[tuple[int, int]]:
        return frozenset(self.edges)

    def has_edge(self, i: int, j: int) -> bool:
        return (i, j) in self._edge_set

    def nodes(self) -> range:
        return range(1, self.d + 1)


@dataclass(frozen=True)
class Cpdag:
    """A completed partially directed acyclic graph (Markov equivalence class).

    ``directed`` holds ordered pairs i -> j, ``undirected`` unordered pairs
    stored as (min, max).  The two sets are disjoint at the skeleton level.
    """

    d: int
    directed: tuple[tuple[int, int], ...]
    undirected: tuple[tuple[int, int], ...]

    def __init__(self, d, directed=(), undirected=()):
        object.__setattr__(self, "d", int(d))
        object.__setattr__(
            self, "directed", tuple(sorted({(int(i), int(j)) for i, j in directed}))
        )
        object.__setattr__(
            self,
            "undirected",
            tuple(sorted({tuple(sorted((int(i), int(j)))) for i, j in undirected})),
        )
        dir_skel = {frozenset(e) for e in self.directed}
        und_skel = {frozenset(e) for e in self.undirected}
        if dir_skel & und_skel:
            raise GraphError("edge cannot be both directed and undirected")
        for i, j in self.directed + self.undirected:
            if not (1 <= i <= d and 1 <= j <= d) or i == j:
                raise GraphError(f"bad edge ({i},{j})")
        if len(dir_skel) < len(self.directed):
            raise GraphError("edge directed both ways")


@dataclass(frozen=True)
class RandomDagConfig:
    """Settings for random rooted-DAG generation.

    ``expected_neighbors`` is the target expected neighborhood size E_N used
    as edge-inclusion probability p = E_N/(d-1); ``max_prune`` is forwarded
    to :func:`random_prune` by experiment drivers.
    """

    d: int
    expected_neighbors: float
    max_prune: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise GraphError("d must be >= 1")
        if self.d > 1 and not (0 < self.expected_neighbors <= self.d - 1):
            raise GraphError(
                f"expected_neighbors must lie in (0, d-1], got {self.expected_neighbors}"
            )
        if self.max_prune < 0:
            raise GraphError("max_prune must be >= 0")


# ---------------------------------------------------------------------------
# basic queries
# ---------------------------------------------------------------------------

def _check_node(g: Dag, v: int) -> int:
    v = int(v)
    if not 1 <= v <= g.d:
        raise GraphError(f"node {v} out of range 1..{g.d}")
    return v


def parents(g: Dag, v: int) -> set[int]:
    """All i with an edge i -> v."""
    return set(g._pa[_check_node(g, v)])


def children(g: Dag, v: int) -> set[int]:
    """All j with an edge v -> j."""
    return set(g._ch[_check_node(g, v)])


def _reach(adj: dict[int, frozenset[int]], start: int) -> set[int]:
    out: set[int] = set()
    stack = [start]
    while stack:
        u = stack.pop()
        for w in adj[u]:
            if w not in out:
                out.add(w)
                stack.append(w)
    out.discard(start)
    return out


def descendants(g: Dag, v: int) -> set[int]:
    """Nodes reachable from v by a directed path (v excluded)."""
    return _reach(g._ch, _check_node(g, v))


def ancestors(g: Dag, v: int) -> set[int]:
    """Nodes from which v is reachable by a directed path (v excluded)."""
    return _reach(g._pa, _check_node(g, v))


def non_descendants(g: Dag, v: int) -> set[int]:
    """V minus v and its descendants."""
    v = _check_node(g, v)
    return set(g.nodes()) - {v} - descendants(g, v)


def _kahn_order(d: int, edges: tuple[tuple[int, int], ...]) -> tuple[int, ...]:
    indeg = {v: 0 for v in range(1, d + 1)}
    ch: dict[int, list[int]] = {v: [] for v in range(1, d + 1)}
    for i, j in edges:
        indeg[j] += 1
        ch[i].append(j)
    # smallest-node-first tie breaking keeps the order deterministic
    frontier = sorted(v for v, k in indeg.items() if k == 0)
    order: list[int] = []
    while frontier:
        v = frontier.pop(0)
        order.append(v)
        ready = []
        for w in ch[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                ready.append(w)
        frontier = sorted(frontier + ready)
    if len(order) != d:
        raise GraphError("graph has a directed cycle")
    return tuple(order)


def topological_order(g: Dag) -> tuple[int, ...]:
    """Nodes in a topological order (ancestors first; root first when rooted)."""
    return g._topo


def root(g: Dag) -> Optional[int]:
    """The node from which every node is reachable, or None if there is none."""
    sources = [v for v in g.nodes() if not g._pa[v]]
    if len(sources) != 1:
        return None
    s = sources[0]
    if len(_reach(g._ch, s)) == g.d - 1:
        return s
    return None


def is_rooted(g: Dag) -> bool:
    return root(g) is not None


# ---------------------------------------------------------------------------
# d-separation
# ---------------------------------------------------------------------------

def d_separated(g: Dag, a: Iterable[int], b: Iterable[int], s: Iterable[int]) -> bool:
    """True iff every path between the node sets a and b is blocked by s.

    A path is blocked when some chain/fork node on it lies in s, or some
    collider on it has neither itself nor any descendant in s.  Implemented
    with the reachability (Bayes-ball) scheme of Koller & Friedman, Alg 3.1;
    a brute-force path enumerator serves as the test oracle.
    """
    aset = {_check_node(g, v) for v in a}
    bset = {_check_node(g, v) for v in b}
    sset = {_check_node(g, v) for v in s}
    if aset & bset or aset & sset or bset & sset:
        raise GraphError("a, b, s must be pairwise disjoint")
    if not aset or not bset:
        return True

    # nodes with a descendant in s (or in s themselves): colliders open there
    an_s: set[int] = set(sset)
    stack = list(sset)
    while stack:
        v = stack.pop()
        for p in g._pa[v]:
            if p not in an_s:
                an_s.add(p)
                stack.append(p)

    # state (v, dir): dir = "up" means the trail entered v through an edge
    # leaving v (from a child), "down" through an edge entering v (from a
    # parent).
    q: deque[tuple[int, str]] = deque((v, "up") for v in sorted(aset))
    visited: set[tuple[int, str]] = set()
    while q:
        v, direction = q.popleft()
        if (v, direction) in visited:
            continue
        visited.add((v, direction))
        if v in bset:
            return False
        if direction == "up":
            if v not in sset:
                for p in g._pa[v]:
                    q.append((p, "up"))
                for c in g._ch[v]:
                    q.append((c, "down"))
        else:
            if v not in sset:
                for c in g._ch[v]:
                    q.append((c, "down"))
            if v in an_s:  # collider at v is open
                for p in g._pa[v]:
                    q.append((p, "up"))
    return True


def markov_blanket(g: Dag, j: int) -> set[int]:
    """Parents, children, and co-parents of children of j."""
    j = _check_node(g, j)
    mb = set(g._pa[j]) | set(g._ch[j])
    for c in g._ch[j]:
        mb |= g._pa[c]
    mb.discard(j)
    return mb


# ---------------------------------------------------------------------------
# skeleton / CPDAG machinery
# ---------------------------------------------------------------------------

def skeleton(g: Dag) -> set[tuple[int, int]]:
    """Edges with directions dropped, as (min, max) pairs."""
    return {tuple(sorted(e)) for e in g.edges}


def v_structures(g: Dag) -> set[tuple[int, int, int]]:
    """Triples (i, k, j), i < j, with i -> k <- j and i, j non-adjacent."""
    skel = skeleton(g)
    out = set()
    for k in g.nodes():
        for i, j in combinations(sorted(g._pa[k]), 2):
            if tuple(sorted((i, j))) not in skel:
                out.add((i, k, j))
    return out


def _meek_closure(
    d: int,
    directed: set[tuple[int, int]],
    undirected: set[tuple[int, int]],
) -> tuple[set[tuple[int, int]], set[tuple[int, int]]]:
    """Apply Meek's rules R1-R4 (Meek 1995) until no undirected edge orients."""

    adj: dict[int, set[int]] = {v: set() for v in range(1, d + 1)}
    for i, j in directed | undirected:
        adj[i].add(j)
        adj[j].add(i)

    def orient(i, j):
        undirected.discard(tuple(sorted((i, j))))
        directed.add((i, j))

    changed = True
    while changed:
        changed = False
        for i, j in sorted(undirected):
            for a, b in ((i, j), (j, i)):
                # R1: c -> a, a - b, c and b non-adjacent  =>  a -> b
                if any(
                    (c, a) in directed and b not in adj[c]
                    for c in adj[a]
                ):
                    orient(a, b)
                    changed = True
                    break
                # R2: a -> c -> b and a - b  =>  a -> b
                if any(
                    (a, c) in directed and (c, b) in directed
                    for c in adj[a] & adj[b]
                ):
                    orient(a, b)
                    changed = True
                    break
                # R3: a - c -> b, a - e -> b, c/e non-adjacent, a - b  =>  a -> b
                half = [
                    c
                    for c in adj[a] & adj[b]
                    if tuple(sorted((a, c))) in undirected and (c, b) in directed
                ]
                if any(
                    e not in adj[c] and e != c
                    for c in half
                    for e in half
                ):
                    orient(a, b)
                    changed = True
                    break
                # R4: a - c, c -> e -> b, c/b non-adjacent, a/e adjacent, a - b
                #     => a -> b  (vacuous without background knowledge; kept
                #     for completeness)
                fired = False
                for c in adj[a]:
                    if tuple(sorted((a, c))) not in undirected or b in adj[c]:
                        continue
                    for e in adj[c] & adj[b]:
                        if (c, e) in directed and (e, b) in directed and e in adj[a]:
                            orient(a, b)
                            changed = True
                            fired = True
                            break
                    if fired:
                        break
                if fired:
                    break
            if changed:
                break
    return directed, undirected


def cpdag_from_dag(g: Dag) -> Cpdag:
    """The CPDAG of g's Markov equivalence class.

    Orients the v-structures on the skeleton, then closes under Meek's
    rules.  Two DAGs map to the same CPDAG exactly when they share skeleton
    and v-structures.
    """
    skel = skeleton(g)
    directed: set[tuple[int, int]] = set()
    for i, k, j in v_structures(g):
        directed.add((i, k))
        directed.add((j, k))
    undirected = {e for e in skel if e not in {tuple(sorted(x)) for x in directed}}
    directed, undirected = _meek_closure(g.d, directed, undirected)
    return Cpdag(g.d, directed, undirected)


def _edge_types(g: Dag | Cpdag) -> dict[tuple[int, int], int]:
    """Map unordered pair (i<j) -> 0 absent / 1 i->j / 2 j->i / 3 undirected."""
    types: dict[tuple[int, int], int] = {}
    if isinstance(g, Dag):
        directed = g.edges
        undirected: tuple[tuple[int, int], ...] = ()
    else:
        directed = g.directed
        undirected = g.undirected
    for i, j in directed:
        types[tuple(sorted((i, j)))] = 1 if i < j else 2
    for i, j in undirected:
        types[(i, j)] = 3
    return types


def shd(g: Dag | Cpdag, h: Dag | Cpdag) -> int:
    """Structural Hamming distance: node pairs whose edge type differs.

    Edge types are absent / i->j / j->i / undirected; a reversal or an
    undirected-vs-directed mismatch each count as one discrepancy.
    """
    if g.d != h.d:
        raise GraphError(f"node-count mismatch: {g.d} vs {h.d}")
    tg, th = _edge_types(g), _edge_types(h)
    return sum(tg.get(p, 0) != th.get(p, 0) for p in set(tg) | set(th))


# ---------------------------------------------------------------------------
# random generation / pruning
# ---------------------------------------------------------------------------

def random_rooted_dag(cfg: RandomDagConfig) -> Dag:
    """Sample a rooted DAG with expected neighborhood size ~ expected_neighbors.

    A uniformly random permutation fixes the causal order; each
    order-respecting edge enters independently with probability
    p = E_N/(d-1); afterwards every non-first node without a parent gets one
    edge from a uniformly chosen predecessor, which guarantees a single root.
    """
    rng = np.random.default_rng(cfg.seed)
    d = cfg.d
    if d == 1:
        return Dag(1, ())
    perm = [int(v) for v in rng.permutation(d) + 1]
    p = cfg.expected_neighbors / (d - 1)
    edges: list[tuple[int, int]] = []
    for b in range(1, d):
        coins = rng.random(b) < p
        row = [(perm[a], perm[b]) for a in range(b) if coins[a]]
        if not row:
            a = int(rng.integers(b))
            row = [(perm[a], perm[b])]
        edges.extend(row)
    return Dag(d, edges)


def prunable_edges(g: Dag) -> set[tuple[int, int]]:
    """Edges (i, j) whose target keeps >= 2 parents: removal keeps g rooted."""
    if not is_rooted(g):
        raise GraphError("graph is not rooted")
    return {(i, j) for i, j in g.edges if len(g._pa[j]) >= 2}


def random_prune(g: Dag, max_remove: int, seed: int = 0) -> Dag:
    """Remove up to max_remove random edges so the result is still rooted.

    Each step removes a uniform pick among the currently prunable edges
    (those whose target has two or more parents — exactly the removals that
    preserve rootedness).
    """
    if not is_rooted(g):
        raise GraphError("graph is not rooted")
    rng = np.random.default_rng(seed)
    current = g
    for _ in range(int(max_remove)):
        cands = sorted(prunable_edges(current))
        if not cands:
            break
        pick = cands[int(rng.integers(len(cands)))]
        current = Dag(current.d, tuple(e for e in current.edges if e != pick))
    return current


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def graph_to_dict(g: Dag | Cpdag) -> dict:
    if isinstance(g, Dag):
        return {"d": g.d, "edges": [list(e) for e in g.edges]}
    return {
        "d": g.d,
        "edges": [list(e) for e in g.directed],
        "undirected": [list(e) for e in g.undirected],
    }


def graph_from_dict(obj: dict) -> Dag | Cpdag:
    try:
        d = int(obj["d"])
        edges = [(int(i), int(j)) for i, j in obj.get("edges", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise GraphError(f"malformed graph object: {exc}") from exc
    if "undirected" in obj:
        und = [(int(i), int(j)) for i, j in obj["undirected"]]
        return Cpdag(d, edges, und)
    return Dag(d, edges)


def save_graph(g: Dag | Cpdag, path) -> None:
    with open(path, "w") as fh:
        json.dump(graph_to_dict(g), fh, indent=1)
        fh.write("\n")


def load_graph(path) -> Dag | Cpdag:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as e:
            raise GraphError(f"{path}: invalid JSON: {e}") from e
    return graph_from_dict(obj)
