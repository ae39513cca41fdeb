"""Extremal SCMs and their pre-limit counterparts.

Covers construction (including root relabeling and Monte-Carlo
normalization), exact sampling of the root-conditioned vector and of the
multivariate Pareto distribution (Huesler-Reiss case), sampling of pre-limit
SCMs whose extremes the extremal SCM describes, extremal interventions with
minus-infinity propagation, and extremal-cause queries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping, Optional, Union

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from .graph import Dag, ancestors, parents, root, topological_order
from .hr import HrScmParams, Variogram, _as_matrix, sigma_k, validate_variogram
from .models import (
    ModelSpec,
    NoiseSpec,
    StructureFunction,
    model_spec_from_dict,
    model_spec_to_dict,
    noise_log_density,
    sample_noise,
)


class ScmError(ValueError):
    """Invalid model construction, intervention, or sampling request."""


# An extended sample row lives in (R u {-inf})^d; represented as a float
# array where -inf marks coordinates that are not extreme.
ExtendedSample = np.ndarray


# ---------------------------------------------------------------------------
# structure-function evaluation on sample blocks (extended reals)
# ---------------------------------------------------------------------------

def eval_structure_rows(sf: StructureFunction, x: np.ndarray) -> np.ndarray:
    """Vectorized Phi over rows of x (n, m), allowing -inf entries.

    Continuous extension per variant: linear is -inf iff a positive-weight
    parent is; neg_log_sum_exp and min are -inf iff any parent is;
    scaled_log_sum_exp and max are -inf iff all parents are.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != len(sf.parents):
        raise ScmError(f"expected (n, {len(sf.parents)}) parent block, got {x.shape}")
    if np.any(np.isposinf(x)) or np.any(np.isnan(x)):
        raise ScmError("parent values must lie in [-inf, inf)")
    neg = np.isneginf(x)
    if sf.variant == "max":
        return x.max(axis=1)
    if sf.variant == "min":
        return x.min(axis=1)
    if sf.variant == "linear":
        w = np.asarray(sf.weights)
        forced = (neg & (w > 0.0)[None, :]).any(axis=1)
        xc = np.where(neg, 0.0, x)  # -inf only at zero-weight slots here
        anchor = xc[:, 0]
        out = anchor + (xc - anchor[:, None]) @ w
        out[forced] = -np.inf
        return out
    if sf.variant == "neg_log_sum_exp":
        forced = neg.any(axis=1)
        anchor = np.where(forced, 0.0, x.min(axis=1))
        with np.errstate(invalid="ignore"):
            out = anchor - sf.theta * logsumexp(
                -(x - anchor[:, None]) / sf.theta, axis=1
            )
        out[forced] = -np.inf
        return out
    # scaled_log_sum_exp: exp(-inf) = 0 drops the non-extreme parents
    forced = neg.all(axis=1)
    anchor = np.where(forced, 0.0, x.max(axis=1))
    shifted = np.where(neg, -np.inf, x - anchor[:, None])
    out = anchor + logsumexp(shifted, axis=1, b=np.asarray(sf.ratios)[None, :])
    out[forced] = -np.inf
    return out


# ---------------------------------------------------------------------------
# extremal SCMs
# ---------------------------------------------------------------------------

def _swap_root_to_one(spec: ModelSpec) -> tuple[ModelSpec, np.ndarray]:
    """Relabel so the root becomes node 1 (a transposition); returns the
    relabeled spec and the permutation array perm with perm[internal-1] =
    original node."""
    r = spec.root
    lab = {r: 1, 1: r}
    rename = lambda v: lab.get(v, v)
    structures = {
        rename(v): StructureFunction(
            sf.variant,
            tuple(rename(p) for p in sf.parents),
            weights=sf.weights,
            theta=sf.theta,
            ratios=sf.ratios,
        )
        for v, sf in spec.structures.items()
    }
    noises = {rename(v): n for v, n in spec.noises.items()}
    perm = np.arange(1, spec.d + 1)
    perm[0], perm[r - 1] = r, 1
    return ModelSpec(d=spec.d, root=1, structures=structures, noises=noises), perm


@dataclass(frozen=True, eq=False)
class ExtremalScm:
    """An extremal SCM: rooted DAG, per-node structure function and noise.

    The root's noise is a standard exponential.  Models rooted elsewhere
    than node 1 are relabeled internally (the recorded permutation maps
    sample columns back to the original labels).
    """

    spec: ModelSpec
    certification: Optional[dict] = None

    def __post_init__(self):
        g = self.spec.dag()
        r = root(g)
        if r is None:
            raise ScmError("extremal SCMs need a rooted DAG (unique fully-reaching source)")
        if r != self.spec.root:
            raise ScmError(f"declared root {self.spec.root} but graph root is {r}")

    @cached_property
    def g_e(self) -> Dag:
        return self.spec.dag()

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def root(self) -> int:
        return self.spec.root

    @cached_property
    def _internal(self) -> tuple[ModelSpec, np.ndarray]:
        if self.spec.root == 1:
            return self.spec, np.arange(1, self.spec.d + 1)
        return _swap_root_to_one(self.spec)


def extremal_scm_from_hr(params: HrScmParams) -> ExtremalScm:
    """The linear extremal SCM with Gaussian noises induced by HR weights."""
    g = params.g_e
    structures, noises = {}, {}
    for v in range(2, g.d + 1):
        pa = tuple(sorted(parents(g, v)))
        structures[v] = StructureFunction(
            "linear", pa, weights=tuple(params.b[p - 1, v - 1] for p in pa)
        )
        noises[v] = NoiseSpec(
            "gaussian", {"mean": float(params.mu_eps[v - 2]), "var": float(params.nu2[v - 2])}
        )
    return ExtremalScm(ModelSpec(d=g.d, root=1, structures=structures, noises=noises))


def _sample_rooted(spec: ModelSpec, n: int, rng, root_values: np.ndarray) -> np.ndarray:
    """Recursive structural sampling with given root column (internal labels)."""
    x = np.empty((n, spec.d))
    x[:, spec.root - 1] = root_values
    for v in topological_order(spec.dag()):
        if v == spec.root:
            continue
        sf = spec.structures[v]
        block = x[:, [p - 1 for p in sf.parents]]
        x[:, v - 1] = eval_structure_rows(sf, block) + sample_noise(
            spec.noises[v], rng, size=n
        )
    return x


def sample_y1(m: ExtremalScm, n: int, rng) -> np.ndarray:
    """n i.i.d. draws of the vector conditioned on an extreme root: the root
    coordinate is standard exponential, every other node is Phi_v(parents)
    plus independent noise."""
    ispec, perm = m._internal
    x = _sample_rooted(ispec, int(n), rng, rng.exponential(1.0, size=int(n)))
    out = np.empty_like(x)
    out[:, perm - 1] = x  # internal column i holds original node perm[i]
    return out


def certify_moment_condition(m: ExtremalScm, rng, n: int = 10**5) -> dict:
    """Monte-Carlo check of E[exp(Y_v - Y_root)] = 1 for every non-root v;
    returns {v: (estimate, standard_error)}."""
    x = sample_y1(m, n, rng)
    rcol = x[:, m.root - 1]
    out = {}
    for v in range(1, m.d + 1):
        if v == m.root:
            continue
        z = np.exp(x[:, v - 1] - rcol)
        out[v] = (float(z.mean()), float(z.std(ddof=1) / np.sqrt(n)))
    return out


def mc_normalized_scm(spec: ModelSpec, rng, n: int = 10**6) -> ExtremalScm:
    """Enforce the per-node normalization E[exp(Y_v - Y_root)] = 1 by
    Monte Carlo, shifting each noise by the estimated negative log.

    Walks nodes in topological order so each node is normalized against the
    already-normalized upstream; the per-node estimates (before shifting)
    are stored as the model's certification.
    """
    g = spec.dag()
    if root(g) != spec.root:
        raise ScmError("need a rooted model specification")
    n = int(n)
    w = np.zeros((n, spec.d))  # root-anchored samples: root column is 0
    cert = {}
    noises = {}
    for v in topological_order(g):
        if v == spec.root:
            continue
        sf = spec.structures[v]
        phi = eval_structure_rows(sf, w[:, [p - 1 for p in sf.parents]])
        eps = sample_noise(spec.noises[v], rng, size=n)
        z = np.exp(phi + eps)
        c_hat = float(z.mean())
        se = float(z.std(ddof=1) / np.sqrt(n))
        shift = -np.log(c_hat)
        noises[v] = _shifted_noise(spec.noises[v], shift)
        cert[v] = {"estimate": c_hat, "se": se, "shift": shift}
        w[:, v - 1] = phi + eps + shift
    out_spec = ModelSpec(d=spec.d, root=spec.root, structures=dict(spec.structures), noises=noises)
    return ExtremalScm(out_spec, certification=cert)


def _shifted_noise(noise: NoiseSpec, shift: float) -> NoiseSpec:
    if shift == 0.0:
        return noise
    if noise.family == "gaussian":
        p = dict(noise.params)
        p["mean"] = float(p["mean"] + shift)
        return NoiseSpec("gaussian", p)
    return NoiseSpec(
        "custom",
        {
            "sampler": lambda rng, k, _b=noise, _s=shift: sample_noise(_b, rng, size=k) + _s,
            "log_density": lambda e, _b=noise, _s=shift: noise_log_density(_b, np.asarray(e) - _s),
        },
    )


# ---------------------------------------------------------------------------
# Huesler-Reiss exact samplers
# ---------------------------------------------------------------------------

def sample_yk_hr(g, k: int, n: int, rng) -> np.ndarray:
    """Exact draws of the vector conditioned on coordinate k being extreme:
    R 1 + W^k with R standard exponential, W^k_k = 0 and the other
    coordinates jointly Gaussian with mean -Gamma_{.,k}/2 and the margin
    covariance of k."""
    gm = _as_matrix(g)
    if isinstance(g, np.ndarray):
        validate_variogram(gm)
    d = gm.shape[0]
    if not 1 <= k <= d:
        raise ScmError(f"node {k} out of range 1..{d}")
    n = int(n)
    r = rng.exponential(1.0, size=n)
    y = np.tile(r[:, None], (1, d))
    if d > 1:
        rest = [i for i in range(d) if i != k - 1]
        mean = -gm[rest, k - 1] / 2.0
        cov = sigma_k(gm, k)
        chol = np.linalg.cholesky(cov)
        w = mean + rng.standard_normal((n, d - 1)) @ chol.T
        y[:, rest] += w
    return y


def sample_pareto_hr(g, n: int, rng) -> np.ndarray:
    """Exact multivariate Pareto samples for a HR model by rejection.

    Proposal: pick k uniformly, draw from the k-conditioned vector, accept
    with probability 1/#{i: y_i > 0}.  The proposal mixture has density
    lambda(y) * #{i: y_i > 0} / d on the support (each k-term contributes
    lambda restricted to {y_k > 0}), so the acceptance step tilts it back to
    the Pareto density; the expected acceptance rate is at least 1/d.
    """
    gm = _as_matrix(g)
    if isinstance(g, np.ndarray):
        validate_variogram(gm)
    d = gm.shape[0]
    n = int(n)
    chols = {}
    out = np.empty((n, d))
    got = 0
    while got < n:
        batch = max(64, int((n - got) * d * 1.2))
        ks = rng.integers(1, d + 1, size=batch)
        y = np.tile(rng.exponential(1.0, size=batch)[:, None], (1, d))
        for k in range(1, d + 1):
            rows = np.flatnonzero(ks == k)
            if rows.size == 0 or d == 1:
                continue
            if k not in chols:
                chols[k] = np.linalg.cholesky(sigma_k(gm, k))
            rest = [i for i in range(d) if i != k - 1]
            mean = -gm[rest, k - 1] / 2.0
            y[np.ix_(rows, rest)] += mean + rng.standard_normal(
                (rows.size, d - 1)
            ) @ chols[k].T
        n_pos = (y > 0).sum(axis=1)
        keep = rng.random(batch) * n_pos < 1.0
        take = np.flatnonzero(keep)[: n - got]
        out[got : got + take.size] = y[take]
        got += take.size
    return out


# ---------------------------------------------------------------------------
# pre-limit (domain-of-attraction) SCMs
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DoaScm:
    """A pre-limit SCM X_v = f_v(X_pa, eps_v) on a rooted DAG.

    ``functions[v]`` maps a parent block (n, |pa|) and a noise vector (n,)
    to (n,) values; ``noise_samplers[v]`` maps (rng, n) to (n,) draws (the
    root's sampler is its marginal law).  ``declared_limit`` is the extremal
    SCM of the model's extremes; limits are declared by the builder, not
    derived.
    """

    g: Dag
    functions: dict[int, Callable]
    noise_samplers: dict[int, Callable]
    declared_limit: Optional[ExtremalScm] = None

    def __post_init__(self):
        r = root(self.g)
        if r is None:
            raise ScmError("pre-limit SCMs need a rooted DAG")
        non_root = set(self.g.nodes()) - {r}
        if set(self.functions) != non_root or set(self.noise_samplers) != set(self.g.nodes()):
            raise ScmError("need f_v for every non-root node and a noise sampler for every node")


def sample_doa(m: DoaScm, n: int, rng) -> np.ndarray:
    """Recursive structural sampling of the pre-limit SCM."""
    n = int(n)
    r = root(m.g)
    x = np.empty((n, m.g.d))
    x[:, r - 1] = m.noise_samplers[r](rng, n)
    for v in topological_order(m.g):
        if v == r:
            continue
        pa = sorted(parents(m.g, v))
        x[:, v - 1] = m.functions[v](x[:, [p - 1 for p in pa]], m.noise_samplers[v](rng, n))
    return x


def _gaussian_sampler(mean: float, var: float) -> Callable:
    sd = float(np.sqrt(var))
    return lambda rng, n: rng.normal(mean, sd, size=n)


def build_doa_example(variant: str, sigma2: float = 1.0) -> DoaScm:
    """The three built-in pre-limit generators.

    tail: diamond SCM whose smoothed-max tail function survives in the
    limit (extremal graph = diamond, node-4 limit is a max).
    vanishing: diamond SCM whose second argument enters only through a
    bounded vanishing term (extremal graph drops that edge).
    exp_gauss: two-node SCM with exponential root and Gaussian additive
    noise.

    Gaussian noises default to mean -sigma2/2 so E[exp eps] = 1.
    """
    sd = float(np.sqrt(sigma2))
    mu = -sigma2 / 2.0
    gnoise = NoiseSpec("gaussian", {"mean": mu, "var": sigma2})

    if variant == "exp_gauss":
        g = Dag(2, [(1, 2)])
        limit = ExtremalScm(
            ModelSpec(
                d=2,
                root=1,
                structures={2: StructureFunction("linear", (1,), weights=(1.0,))},
                noises={2: gnoise},
            )
        )
        return DoaScm(
            g=g,
            functions={2: lambda xpa, e: xpa[:, 0] + e},
            noise_samplers={1: lambda rng, n: rng.exponential(1.0, size=n),
                            2: _gaussian_sampler(mu, sigma2)},
            declared_limit=limit,
        )

    diamond = Dag(4, [(1, 2), (1, 3), (2, 4), (3, 4)])
    samplers = {
        1: lambda rng, n: rng.exponential(1.0, size=n),
        2: _gaussian_sampler(mu, sigma2),
        3: _gaussian_sampler(mu, sigma2),
        4: _gaussian_sampler(mu, sigma2),
    }
    base = {
        2: lambda xpa, e: xpa[:, 0] + e,
        3: lambda xpa, e: xpa[:, 0] + e,
    }

    if variant == "tail":
        def f4(xpa, e):
            a, b = xpa[:, 0], xpa[:, 1]
            return 0.5 * (a + b + np.sqrt((a - b) ** 2 + 1.0 / (1.0 + a**2 + b**2))) + e

        # the smoothed max converges to max(y2, y3); matching the moment
        # condition absorbs log E[exp max(eps2, eps3)] = log(2 Phi(sd/sqrt 2))
        # into the limit noise mean
        c4 = -float(np.log(2.0 * norm.cdf(sd / np.sqrt(2.0))))
        limit = ExtremalScm(
            ModelSpec(
                d=4,
                root=1,
                structures={
                    2: StructureFunction("linear", (1,), weights=(1.0,)),
                    3: StructureFunction("linear", (1,), weights=(1.0,)),
                    4: StructureFunction("max", (2, 3)),
                },
                noises={2: gnoise, 3: gnoise,
                        4: NoiseSpec("gaussian", {"mean": mu + c4, "var": sigma2})},
            )
        )
        return DoaScm(
            g=diamond,
            functions={**base, 4: f4},
            noise_samplers=samplers,
            declared_limit=limit,
        )

    if variant == "vanishing":
        def f4(xpa, e):
            a, b = xpa[:, 0], xpa[:, 1]
            return a + 1.0 / (1.0 + a**2 + b**2) + e

        limit = ExtremalScm(
            ModelSpec(
                d=4,
                root=1,
                structures={
                    2: StructureFunction("linear", (1,), weights=(1.0,)),
                    3: StructureFunction("linear", (1,), weights=(1.0,)),
                    4: StructureFunction("linear", (2,), weights=(1.0,)),
                },
                noises={2: gnoise, 3: gnoise, 4: gnoise},
            )
        )
        return DoaScm(
            g=diamond,
            functions={**base, 4: f4},
            noise_samplers=samplers,
            declared_limit=limit,
        )

    raise ScmError(f"unknown variant {variant!r}; expected tail, vanishing, or exp_gauss")


def build_doa_from_hr(params: HrScmParams, g_full: Dag, bound_scale: float = 1.0) -> DoaScm:
    """Pre-limit SCM on a supergraph of the extremal DAG.

    On the extremal edges each node keeps its linear HR structure function;
    edges present only in ``g_full`` enter through a bounded vanishing term
    bound_scale / (1 + sum of squared parents), so they are genuine parents
    before the limit but disappear from the extremes.  The declared limit
    is the HR extremal SCM itself.
    """
    g_e = params.g_e
    if g_full.d != g_e.d:
        raise ScmError("graphs must share the node set")
    if not g_e._edge_set <= g_full._edge_set:
        raise ScmError("the pre-limit graph must contain every extremal edge")
    if root(g_full) != 1 or root(g_e) != 1:
        raise ScmError("both graphs must be rooted at node 1")
    limit = extremal_scm_from_hr(params)
    functions, samplers = {}, {1: lambda rng, n: rng.exponential(1.0, size=n)}
    for v in range(2, g_e.d + 1):
        pa_full = sorted(parents(g_full, v))
        pa_e = sorted(parents(g_e, v))
        w = np.array([params.b[p - 1, v - 1] for p in pa_e])
        core = np.array([pa_full.index(p) for p in pa_e])
        has_extra = len(pa_full) > len(pa_e)

        def f_v(xpa, e, _w=w, _core=core, _extra=has_extra):
            out = xpa[:, _core] @ _w + e
            if _extra:
                out = out + bound_scale / (1.0 + (xpa**2).sum(axis=1))
            return out

        functions[v] = f_v
        samplers[v] = _gaussian_sampler(float(params.mu_eps[v - 2]), float(params.nu2[v - 2]))
    return DoaScm(g=g_full, functions=functions, noise_samplers=samplers, declared_limit=limit)


# ---------------------------------------------------------------------------
# extremal interventions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Intervention:
    """An extremal intervention: forced extreme levels xi_v on targets."""

    assignments: tuple[tuple[int, float], ...]

    def __init__(self, xi):
        items = sorted(dict(xi).items()) if not isinstance(xi, Intervention) else list(xi.assignments)
        if not items:
            raise ScmError("intervention needs at least one target")
        object.__setattr__(
            self, "assignments", tuple((int(v), float(x)) for v, x in items)
        )

    @property
    def targets(self) -> frozenset:
        return frozenset(v for v, _ in self.assignments)

    @property
    def xi_map(self) -> dict[int, float]:
        return dict(self.assignments)

    def __eq__(self, other):
        return isinstance(other, Intervention) and self.assignments == other.assignments

    def __hash__(self):
        return hash(self.assignments)


@dataclass(frozen=True, eq=False)
class IntervenedScm:
    """An extremal SCM after an intervention.

    ``status[v]`` is 'target' (forced to xi_v), 'neg_inf' (no intervened
    ancestor-or-self: never extreme), or 'structural' (keeps its structure
    function, evaluated over the extended reals).
    """

    base: ExtremalScm
    intervention: Intervention
    status: dict[int, str]

    def __eq__(self, other):
        return (
            isinstance(other, IntervenedScm)
            and self.base is other.base
            and self.intervention == other.intervention
        )


def intervene(m: Union[ExtremalScm, IntervenedScm], iv: Intervention) -> IntervenedScm:
    """Apply an extremal intervention (merging with existing targets)."""
    if isinstance(m, IntervenedScm):
        merged = m.intervention.xi_map
        for v, x in Intervention(iv).assignments:
            if v in merged and merged[v] != x:
                raise ScmError(f"conflicting interventions on node {v}")
            merged[v] = x
        return intervene(m.base, Intervention(merged))
    iv = Intervention(iv)
    bad = [v for v in iv.targets if not 1 <= v <= m.d]
    if bad:
        raise ScmError(f"intervention targets out of range: {bad}")
    status = {}
    for v in range(1, m.d + 1):
        if v in iv.targets:
            status[v] = "target"
        elif not (({v} | ancestors(m.g_e, v)) & iv.targets):
            status[v] = "neg_inf"
        else:
            status[v] = "structural"
    return IntervenedScm(base=m, intervention=iv, status=status)


def sample_intervened(
    m: Union[ExtremalScm, IntervenedScm], iv: Optional[Intervention], n: int, rng
) -> ExtendedSample:
    """Sample the intervened extremal SCM; rows live in (R u {-inf})^d.

    Targets are constant at xi_v; nodes with no intervened ancestor-or-self
    are constant -inf; the rest evaluate their structure functions over the
    extended reals (so a min-type node with a non-extreme parent is -inf)."""
    if not isinstance(m, IntervenedScm):
        if iv is None:
            raise ScmError("need an intervention")
        m = intervene(m, iv)
    elif iv is not None:
        m = intervene(m, iv)
    base, spec = m.base, m.base.spec
    n = int(n)
    x = np.empty((n, base.d))
    for v in topological_order(base.g_e):
        st = m.status[v]
        if st == "target":
            x[:, v - 1] = m.intervention.xi_map[v]
        elif st == "neg_inf":
            x[:, v - 1] = -np.inf
        else:
            sf = spec.structures[v]
            phi = eval_structure_rows(sf, x[:, [p - 1 for p in sf.parents]])
            x[:, v - 1] = phi + sample_noise(spec.noises[v], rng, size=n)
    return x


def is_direct_extremal_cause(m: ExtremalScm, i: int, j: int) -> bool:
    """Whether an extremal intervention on i changes the law of j beyond
    what interventions on the other nodes achieve: holds exactly when i is
    a parent of j in the extremal DAG."""
    if i == j:
        raise ScmError("need distinct nodes")
    return m.g_e.has_edge(i, j)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def save_samples_csv(path, x: np.ndarray, prefix: str = "y") -> None:
    """CSV with one row per sample; -inf is written as the literal '-inf'."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    header = ",".join(f"{prefix}{j}" for j in range(1, x.shape[1] + 1))
    np.savetxt(path, x, fmt="%.10g", delimiter=",", header=header, comments="")


def load_samples_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))


def save_scm(path, m: Union[ExtremalScm, IntervenedScm]) -> None:
    base = m.base if isinstance(m, IntervenedScm) else m
    obj = model_spec_to_dict(base.spec)
    if isinstance(m, IntervenedScm):
        obj["interventions"] = [
            {"node": v, "xi": x} for v, x in m.intervention.assignments
        ]
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")


def load_scm(path) -> Union[ExtremalScm, IntervenedScm]:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as e:
            raise ScmError(f"{path}: invalid JSON: {e}") from e
    m = ExtremalScm(model_spec_from_dict(obj))
    if obj.get("interventions"):
        m = intervene(m, Intervention({e["node"]: e["xi"] for e in obj["interventions"]}))
    return m
