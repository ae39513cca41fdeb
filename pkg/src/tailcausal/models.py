"""Parametric extremal families: logistic, Dirichlet, and Huesler-Reiss.

Provides exponent-measure densities, the conditional densities of a single
coordinate given its graph parents, homogeneous structure functions, and the
matched noise laws.  For every family the conditional density of node v
given parents equals the noise density evaluated at the residual
y_v - Phi_v(y_pa); both routes are implemented and cross-checked in tests.

All density code works in log-space; the exported non-log functions just
exponentiate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad
from scipy.special import gammaln, logsumexp
from scipy.stats import norm

from .graph import Dag
from .hr import HrError, _as_matrix, fiedler_bapat

_GRID_LO, _GRID_HI, _GRID_N = -40.0, 40.0, 4096

VARIANTS = ("linear", "neg_log_sum_exp", "scaled_log_sum_exp", "max", "min")
FAMILIES = ("logistic", "dirichlet", "gaussian", "custom")


class ModelError(ValueError):
    """Invalid family parameter or model specification."""


# ---------------------------------------------------------------------------
# parameter types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogisticParams:
    theta: float

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ModelError(f"logistic dependence parameter must lie in (0,1), got {self.theta}")


@dataclass(frozen=True, eq=False)
class DirichletParams:
    alpha: tuple[float, ...]

    def __init__(self, alpha):
        alpha = tuple(float(a) for a in np.atleast_1d(alpha))
        if any(a <= 0 for a in alpha):
            raise ModelError("Dirichlet parameters must be positive")
        object.__setattr__(self, "alpha", alpha)

    @property
    def d(self) -> int:
        return len(self.alpha)


@dataclass(frozen=True, eq=False)
class StructureFunction:
    """A homogeneous structure function Phi(x + t) = Phi(x) + t.

    Variants: linear (convex weights), neg_log_sum_exp (smooth-min with
    temperature theta), scaled_log_sum_exp (smooth-max with positive
    ratios), max, min.
    """

    variant: str
    parents: tuple[int, ...]
    weights: Optional[tuple[float, ...]] = None
    theta: Optional[float] = None
    ratios: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
        if self.variant not in VARIANTS:
            raise ModelError(f"unknown structure variant {self.variant!r}")
        if not self.parents:
            raise ModelError("structure function needs at least one parent")
        m = len(self.parents)
        if self.variant == "linear":
            if self.weights is None or len(self.weights) != m:
                raise ModelError("linear variant needs one weight per parent")
            w = tuple(float(x) for x in self.weights)
            if abs(sum(w) - 1.0) > 1e-8:
                raise ModelError(f"linear weights must sum to 1, got {sum(w)}")
            if any(x < 0 for x in w):
                raise ModelError("linear weights must be nonnegative")
            object.__setattr__(self, "weights", w)
        elif self.variant == "neg_log_sum_exp":
            if self.theta is None or not 0.0 < self.theta < 1.0:
                raise ModelError("neg_log_sum_exp needs theta in (0,1)")
        elif self.variant == "scaled_log_sum_exp":
            if self.ratios is None or len(self.ratios) != m:
                raise ModelError("scaled_log_sum_exp needs one ratio per parent")
            r = tuple(float(x) for x in self.ratios)
            if any(x <= 0 for x in r):
                raise ModelError("ratios must be positive")
            object.__setattr__(self, "ratios", r)


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """A noise law: logistic / dirichlet / gaussian / custom.

    Parameter keys: logistic {theta, m}; dirichlet {alpha_v, alpha_sum};
    gaussian {mean, var}; custom {sampler, log_density} (callables).
    """

    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ModelError(f"unknown noise family {self.family!r}")
        p = dict(self.params)
        if self.family == "logistic":
            if not 0.0 < p.get("theta", -1.0) < 1.0 or p.get("m", 0) < 1:
                raise ModelError("logistic noise needs theta in (0,1) and m >= 1")
        elif self.family == "dirichlet":
            if p.get("alpha_v", 0.0) <= 0 or p.get("alpha_sum", 0.0) <= p.get("alpha_v", 0.0):
                raise ModelError("dirichlet noise needs 0 < alpha_v < alpha_sum")
        elif self.family == "gaussian":
            if p.get("var", 0.0) <= 0:
                raise ModelError("gaussian noise needs a positive variance")
        else:
            if not callable(p.get("sampler")) or not callable(p.get("log_density")):
                raise ModelError("custom noise needs sampler and log_density callables")
        object.__setattr__(self, "params", p)


# ---------------------------------------------------------------------------
# exponent-measure densities
# ---------------------------------------------------------------------------

def logistic_log_density(y, p: LogisticParams) -> float:
    """Log exponent-measure density of the extremal logistic model."""
    y = np.asarray(y, dtype=float)
    d, th = y.size, p.theta
    if d < 2:
        raise ModelError("need dimension >= 2")
    const = float(np.log(np.arange(1, d) / th - 1.0).sum())
    return float((th - d) * logsumexp(-y / th) - y.sum() / th + const)


def logistic_density(y, p: LogisticParams) -> float:
    return float(np.exp(logistic_log_density(y, p)))


def dirichlet_log_density(y, p: DirichletParams) -> float:
    """Log exponent-measure density of the extremal Dirichlet model."""
    y = np.asarray(y, dtype=float)
    a = np.asarray(p.alpha)
    d = y.size
    if d != p.d or d < 2:
        raise ModelError(f"need len(y) == len(alpha) >= 2, got {d} vs {p.d}")
    asum = a.sum()
    lse = logsumexp(np.log(a) + y)  # log sum_j alpha_j e^{y_j}
    # normalized so that every univariate margin is exp(-y); this also makes
    # the family exactly marginalization-consistent and conditional densities
    # proper probability densities
    out = (
        gammaln(1.0 + asum)
        + y.sum()
        - (d + 1.0) * lse
        + np.sum(np.log(a) - gammaln(a) + (a - 1.0) * (np.log(a) + y - lse))
    )
    return float(out)


def dirichlet_density(y, p: DirichletParams) -> float:
    return float(np.exp(dirichlet_log_density(y, p)))


# ---------------------------------------------------------------------------
# conditional densities (closed forms)
# ---------------------------------------------------------------------------

def logistic_log_conditional(y_v: float, y_pa, theta: float) -> float:
    """Log conditional density of a node given m parents, logistic model:
    (m/theta - 1) / s * (1 + 1/s)^(theta - m - 1), s = sum_i e^{(y_v-y_i)/theta}."""
    y_pa = np.asarray(y_pa, dtype=float)
    m = y_pa.size
    if not 0 < theta < 1 or m < 1:
        raise ModelError("need theta in (0,1) and at least one parent")
    log_s = logsumexp((y_v - y_pa) / theta)
    return float(np.log(m / theta - 1.0) - log_s + (theta - m - 1.0) * np.logaddexp(0.0, -log_s))


def logistic_conditional(y_v, y_pa, theta: float) -> float:
    return float(np.exp(logistic_log_conditional(y_v, y_pa, theta)))


def dirichlet_log_conditional(y_v: float, y_pa, alpha_v: float, alpha_pa) -> float:
    """Log conditional density for the Dirichlet model:
    C (1 + 1/s)^(-1-A) s^(-alpha_v), s = sum_j (alpha_j/alpha_v) e^{y_j - y_v},
    A the parameter sum over the node and its parents."""
    y_pa = np.asarray(y_pa, dtype=float)
    alpha_pa = np.asarray(alpha_pa, dtype=float)
    if alpha_v <= 0 or np.any(alpha_pa <= 0) or y_pa.size != alpha_pa.size:
        raise ModelError("invalid Dirichlet conditional parameters")
    a_sum = float(alpha_v + alpha_pa.sum())
    log_s = logsumexp(np.log(alpha_pa / alpha_v) + y_pa - y_v)
    log_c = _dirichlet_log_constant(float(alpha_v), a_sum)
    return float(log_c - (1.0 + a_sum) * np.logaddexp(0.0, -log_s) - alpha_v * log_s)


def dirichlet_conditional(y_v, y_pa, alpha_v, alpha_pa) -> float:
    return float(np.exp(dirichlet_log_conditional(y_v, y_pa, alpha_v, alpha_pa)))


def _bordered_solve(gamma_pa: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve [[-Gamma_pa/2, 1], [1^T, 0]] x = rhs (handles one parent)."""
    m = gamma_pa.shape[0]
    bordered = np.zeros((m + 1, m + 1))
    bordered[:m, :m] = -gamma_pa / 2.0
    bordered[:m, m] = 1.0
    bordered[m, :m] = 1.0
    return np.linalg.solve(bordered, rhs)


def hr_conditional_moments(g, v: int, pa) -> tuple[np.ndarray, float, float]:
    """Weights, noise mean and variance of the HR conditional of v given pa.

    The conditional density is Gaussian with mean
    [-Gamma_{v,pa}/2, 1] . inv([[-Gamma_pa/2, 1],[1,0]]) . [y_pa; 1]
    and variance 1/theta_vv on the margin {v} u pa; splitting the mean into
    its linear part and constant yields the structure weights and the noise
    mean."""
    gm = _as_matrix(g)
    pa = [int(x) for x in pa]
    if not pa or v in pa:
        raise ModelError("need a nonempty parent set not containing v")
    pidx = [x - 1 for x in pa]
    gamma_pa = gm[np.ix_(pidx, pidx)]
    left = np.concatenate([-gm[v - 1, pidx] / 2.0, [1.0]])
    sol = _bordered_solve(gamma_pa, left)  # bordered symmetric: solve once
    weights, const = sol[:-1], float(sol[-1])
    nodes = sorted({v, *pa})
    vth = fiedler_bapat(gm[np.ix_([x - 1 for x in nodes], [x - 1 for x in nodes])])
    var = 1.0 / float(vth.theta_I[nodes.index(v), nodes.index(v)])
    if var <= 0:
        raise HrError("nonpositive conditional variance (invalid variogram)")
    return weights, const, var


def hr_log_conditional(y_v: float, y_pa, g, v: int, pa) -> float:
    """Log conditional density for the HR model: Gaussian in y_v."""
    weights, const, var = hr_conditional_moments(g, v, pa)
    mean = float(weights @ np.asarray(y_pa, dtype=float)) + const
    return float(norm.logpdf(y_v, loc=mean, scale=np.sqrt(var)))


def hr_conditional(y_v, y_pa, g, v, pa) -> float:
    return float(np.exp(hr_log_conditional(y_v, y_pa, g, v, pa)))


# ---------------------------------------------------------------------------
# structure functions
# ---------------------------------------------------------------------------

def eval_structure_fn(f: StructureFunction, x) -> float:
    """Evaluate Phi at a finite parent vector (ordered like f.parents).

    Every variant is evaluated in an anchored form (differences from the
    first coordinate) so homogeneity Phi(x + t) = Phi(x) + t holds to
    floating-point exactness.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (len(f.parents),):
        raise ModelError(f"expected {len(f.parents)} parent values, got shape {x.shape}")
    a = float(x[0])
    if f.variant == "linear":
        w = np.asarray(f.weights)
        return a + float(w @ (x - a))
    if f.variant == "neg_log_sum_exp":
        return a - f.theta * float(logsumexp(-(x - a) / f.theta))
    if f.variant == "scaled_log_sum_exp":
        return a + float(logsumexp(x - a, b=np.asarray(f.ratios)))
    if f.variant == "max":
        return float(x.max())
    return float(x.min())


def hr_linear_structure(g, v: int, pa) -> tuple[np.ndarray, NoiseSpec]:
    """The linear structure weights and Gaussian noise of the HR conditional:
    weights -Gamma_{v,pa}/2 theta(pa) + p(pa), noise mean
    -Gamma_{v,pa}/2 . p(pa) + sigma2(pa), variance 1/theta_vv."""
    weights, const, var = hr_conditional_moments(g, v, pa)
    return weights, NoiseSpec("gaussian", {"mean": const, "var": var})


# ---------------------------------------------------------------------------
# noise laws
# ---------------------------------------------------------------------------

def _dirichlet_log_constant_closed_form(alpha_v: float, alpha_sum: float) -> float:
    """Closed form of the Dirichlet noise normalizer (a Beta integral);
    kept as an independent cross-check of the numeric route."""
    return float(
        gammaln(1.0 + alpha_sum) - gammaln(alpha_v) - gammaln(1.0 + alpha_sum - alpha_v)
    )


@lru_cache(maxsize=256)
def _dirichlet_log_constant(alpha_v: float, alpha_sum: float) -> float:
    """log C with C normalizing (1+e^e)^(-1-A) e^(alpha_v e), by quadrature."""
    val, err = quad(
        lambda e: np.exp(alpha_v * e - (1.0 + alpha_sum) * np.logaddexp(0.0, e)),
        -np.inf,
        np.inf,
    )
    if not np.isfinite(val) or val <= 0 or err > 1e-6 * val:
        raise ModelError("dirichlet noise normalization failed")
    return float(-np.log(val))


@lru_cache(maxsize=256)
def _dirichlet_table(alpha_v: float, alpha_sum: float):
    """Tabulated CDF on the standard grid, plus the analytic tail masses."""
    grid = np.linspace(_GRID_LO, _GRID_HI, _GRID_N)
    log_c = _dirichlet_log_constant(alpha_v, alpha_sum)
    pdf = np.exp(log_c + alpha_v * grid - (1.0 + alpha_sum) * np.logaddexp(0.0, grid))
    beta = 1.0 + alpha_sum - alpha_v
    mass_left = np.exp(log_c + alpha_v * _GRID_LO) / alpha_v
    mass_right = np.exp(log_c - beta * _GRID_HI) / beta
    cdf = mass_left + cumulative_trapezoid(pdf, grid, initial=0.0)
    total = cdf[-1] + mass_right
    if abs(total - 1.0) > 1e-4:
        raise ModelError(f"dirichlet CDF table mass off: {total}")
    return grid, cdf / total, mass_left / total, mass_right / total, log_c


def sample_noise(spec: NoiseSpec, rng: np.random.Generator, size=None):
    """Draw from the noise law; scalar when size is None."""
    squeeze = size is None
    n = 1 if squeeze else int(size)
    p = spec.params
    if spec.family == "gaussian":
        out = rng.normal(p["mean"], np.sqrt(p["var"]), size=n)
    elif spec.family == "logistic":
        th, m = p["theta"], p["m"]
        u = rng.random(n)
        # closed-form quantile of F(y) = (1 + e^{-y/theta})^(theta - m)
        out = -th * np.log(np.expm1(np.log(u) / (th - m)))
    elif spec.family == "dirichlet":
        grid, cdf, mass_left, mass_right, log_c = _dirichlet_table(
            float(p["alpha_v"]), float(p["alpha_sum"])
        )
        alpha_v = float(p["alpha_v"])
        beta = 1.0 + float(p["alpha_sum"]) - alpha_v
        u = rng.random(n)
        out = np.interp(u, cdf, grid)
        lo, hi = u < mass_left, u > 1.0 - mass_right
        if np.any(lo):  # invert the left-tail form C e^{alpha_v e}/alpha_v
            out[lo] = (np.log(u[lo] * alpha_v) - log_c) / alpha_v
        if np.any(hi):  # invert the right-tail survival C e^{-beta e}/beta
            out[hi] = -(np.log((1.0 - u[hi]) * beta) - log_c) / beta
    else:
        out = np.asarray(p["sampler"](rng, n), dtype=float)
    return float(out[0]) if squeeze else out


def noise_log_density(spec: NoiseSpec, e):
    """Log density of the noise law at e (scalar or array)."""
    e = np.asarray(e, dtype=float)
    p = spec.params
    if spec.family == "gaussian":
        out = norm.logpdf(e, loc=p["mean"], scale=np.sqrt(p["var"]))
    elif spec.family == "logistic":
        th, m = p["theta"], p["m"]
        out = (
            np.log(m / th - 1.0)
            - e / th
            + (th - m - 1.0) * np.logaddexp(0.0, -e / th)
        )
    elif spec.family == "dirichlet":
        a_v, a_sum = float(p["alpha_v"]), float(p["alpha_sum"])
        log_c = _dirichlet_log_constant(a_v, a_sum)
        out = log_c + a_v * e - (1.0 + a_sum) * np.logaddexp(0.0, e)
    else:
        out = np.asarray(p["log_density"](e), dtype=float)
    return float(out) if out.ndim == 0 else out


def noise_density(spec: NoiseSpec, e):
    return np.exp(noise_log_density(spec, e))


# ---------------------------------------------------------------------------
# model specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Structure functions and noise laws for every non-root node.

    The root's implicit noise is standard exponential.  The induced graph
    (edges parent -> node) must form a DAG; rootedness is checked by the
    samplers in the scm module, not here.
    """

    d: int
    root: int
    structures: dict[int, StructureFunction]
    noises: dict[int, NoiseSpec]

    def __post_init__(self):
        non_root = set(range(1, self.d + 1)) - {self.root}
        if set(self.structures) != non_root or set(self.noises) != non_root:
            raise ModelError("every non-root node needs a structure function and a noise law")
        if not 1 <= self.root <= self.d:
            raise ModelError("root out of range")
        self.dag()  # validates acyclicity and parent ranges

    def dag(self) -> Dag:
        edges = [
            (p, v) for v, sf in self.structures.items() for p in sf.parents
        ]
        return Dag(self.d, edges)


def joint_log_density_factorized(spec: ModelSpec, y) -> float:
    """Log of exp(-y_root) * prod_v lambda(y_v | y_pa(v)).

    Each conditional is the node's noise density at the structure-function
    residual y_v - Phi_v(y_pa), which agrees with the closed-form family
    conditionals.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (spec.d,):
        raise ModelError(f"point has shape {y.shape}, expected ({spec.d},)")
    out = -float(y[spec.root - 1])
    for v, sf in spec.structures.items():
        resid = y[v - 1] - eval_structure_fn(sf, y[[p - 1 for p in sf.parents]])
        out += float(noise_log_density(spec.noises[v], resid))
    return out


def joint_density_factorized(spec: ModelSpec, y) -> float:
    return float(np.exp(joint_log_density_factorized(spec, y)))


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def _structure_to_dict(sf: StructureFunction) -> dict:
    params: dict = {}
    if sf.variant == "linear":
        params["weights"] = list(sf.weights)
    elif sf.variant == "neg_log_sum_exp":
        params["theta"] = sf.theta
    elif sf.variant == "scaled_log_sum_exp":
        params["ratios"] = list(sf.ratios)
    return {"variant": sf.variant, "params": params}


def _structure_from_dict(obj: dict, parents) -> StructureFunction:
    params = obj.get("params", {})
    return StructureFunction(
        variant=obj["variant"],
        parents=tuple(parents),
        weights=tuple(params["weights"]) if "weights" in params else None,
        theta=params.get("theta"),
        ratios=tuple(params["ratios"]) if "ratios" in params else None,
    )


def model_spec_to_dict(spec: ModelSpec) -> dict:
    nodes = [{"node": spec.root, "root": True}]
    for v in sorted(spec.structures):
        noise = spec.noises[v]
        if noise.family == "custom":
            raise ModelError("custom noise laws are not serializable")
        nodes.append(
            {
                "node": v,
                "parents": list(spec.structures[v].parents),
                "structure": _structure_to_dict(spec.structures[v]),
                "noise": {"family": noise.family, "params": dict(noise.params)},
            }
        )
    return {"nodes": nodes}


def model_spec_from_dict(obj: dict) -> ModelSpec:
    try:
        nodes = obj["nodes"]
        roots = [e["node"] for e in nodes if e.get("root")]
        if len(roots) != 1:
            raise ModelError(f"model file must declare exactly one root, got {len(roots)}")
        structures, noises = {}, {}
        for e in nodes:
            if e.get("root"):
                continue
            v = int(e["node"])
            structures[v] = _structure_from_dict(e["structure"], e["parents"])
            noises[v] = NoiseSpec(e["noise"]["family"], dict(e["noise"]["params"]))
        return ModelSpec(d=len(nodes), root=int(roots[0]), structures=structures, noises=noises)
    except (KeyError, TypeError) as exc:
        raise ModelError(f"malformed model file: {exc}") from exc


def save_model_spec(spec: ModelSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_spec_to_dict(spec), fh, indent=1)
        fh.write("\n")


def load_model_spec(path) -> ModelSpec:
    with open(path) as fh:
        return model_spec_from_dict(json.load(fh))
