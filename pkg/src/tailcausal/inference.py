"""From raw data to extremal conditional-independence decisions.

Pipeline: empirical transform to standard-exponential margins, threshold
exceedances, the empirical extremal variogram (per-node and averaged), and
Fisher-z tests of the extremal partial correlation, either from a single
conditioning node's exceedances ("random" method) or from the averaged
variogram estimate ("average" method).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm, rankdata

from .hr import HrError, extremal_partial_correlation

_RHO_CLAMP = 1.0 - 1e-8
_P_FLOOR = 1e-300
_MIN_EXCEEDANCES = 10


class InferenceError(ValueError):
    """Invalid data, threshold level, or test request."""


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Dataset:
    """Raw observations, one row per sample."""

    x: np.ndarray
    columns: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        if x.shape[0] < 2:
            raise InferenceError("need at least two observations")
        if not np.isfinite(x).all():
            raise InferenceError("dataset contains non-finite entries")
        if self.columns is not None and len(self.columns) != x.shape[1]:
            raise InferenceError("column-name count mismatch")
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True, eq=False)
class ExpDataset:
    """Observations on standard-exponential margins.

    provenance is 'empirical-rank' when produced by the rank transform and
    'known-margin' when the caller asserts the margins (e.g. exact samples
    from a simulator, where thresholding relies on memorylessness rather
    than a rank fit).
    """

    xstar: np.ndarray
    provenance: str

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.xstar, dtype=float))
        if self.provenance not in ("empirical-rank", "known-margin"):
            raise InferenceError(f"unknown provenance {self.provenance!r}")
        if not np.isfinite(x).all():
            raise InferenceError("non-finite entries")
        object.__setattr__(self, "xstar", x)

    @property
    def n(self) -> int:
        return self.xstar.shape[0]

    @property
    def d(self) -> int:
        return self.xstar.shape[1]


def known_margin_dataset(x) -> ExpDataset:
    return ExpDataset(np.asarray(x, dtype=float), "known-margin")


def to_exponential_margins(data: Dataset) -> ExpDataset:
    """Per-column rank transform onto Exp(1): -log(1 - r/(n+1)) with average
    ranks for ties.  Exactly invariant under strictly increasing per-column
    transforms of the raw data."""
    x = data.x
    n = data.n
    out = np.empty_like(x)
    for col in range(data.d):
        if x[:, col].max() == x[:, col].min():
            raise InferenceError(f"column {col + 1} is constant")
        r = rankdata(x[:, col], method="average")
        out[:, col] = -np.log1p(-r / (n + 1.0))
    return ExpDataset(out, "empirical-rank")


# ---------------------------------------------------------------------------
# exceedances
# ---------------------------------------------------------------------------

def _threshold(values: np.ndarray, tau: float) -> float:
    """Empirical tau-quantile threshold keeping floor(n(1-tau)) strict
    exceedances (up to ties); -inf when everything is kept."""
    n = values.size
    # nudge before flooring so that e.g. 1000 * (1 - 0.9) = 99.999... keeps
    # the intended 100 exceedances
    m = int(np.floor(n * (1.0 - tau) + 1e-9))
    if m >= n:
        return -np.inf
    return float(np.partition(values, n - m - 1)[n - m - 1])


def exceedances(e: ExpDataset, tau: float) -> ExpDataset:
    """Rows whose maximum coordinate exceeds the empirical tau-quantile of
    the row maxima."""
    if not 0.0 <= tau < 1.0:
        raise InferenceError(f"need 0 <= tau < 1, got {tau}")
    row_max = e.xstar.max(axis=1)
    u = _threshold(row_max, tau)
    keep = row_max > u
    if keep.sum() < 2:
        raise InferenceError(f"tau={tau} leaves {int(keep.sum())} exceedances")
    return ExpDataset(e.xstar[keep], e.provenance)


# ---------------------------------------------------------------------------
# empirical extremal variogram
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EmpiricalVariogram:
    """Averaged and per-node empirical extremal variograms.

    gamma_hat_k[k-1] conditions on column k exceeding its tau-quantile;
    gamma_hat is the average over k; counts holds the per-k exceedance
    numbers."""

    gamma_hat: np.ndarray
    gamma_hat_k: np.ndarray
    tau: float
    counts: np.ndarray


def empirical_variogram(
    e: ExpDataset, tau: float, thresholds=None
) -> EmpiricalVariogram:
    """Per-k sample variances of coordinate differences over the rows where
    column k is large, averaged over k.

    By default column k's threshold is its empirical tau-quantile; passing
    explicit thresholds (scalar or per-column) overrides that — useful for
    exact simulator output where conditioning on a known level (e.g. 0) is
    exact by memorylessness.
    """
    if not 0.0 <= tau < 1.0:
        raise InferenceError(f"need 0 <= tau < 1, got {tau}")
    x, d = e.xstar, e.d
    if thresholds is not None:
        thresholds = np.broadcast_to(np.asarray(thresholds, dtype=float), (d,))
    per_k = np.zeros((d, d, d))
    counts = np.zeros(d, dtype=int)
    for k in range(d):
        u_k = _threshold(x[:, k], tau) if thresholds is None else thresholds[k]
        keep = x[:, k] > u_k
        counts[k] = keep.sum()
        if counts[k] < _MIN_EXCEEDANCES:
            raise InferenceError(
                f"column {k + 1} has {counts[k]} exceedances at tau={tau}; need {_MIN_EXCEEDANCES}"
            )
        rows = x[keep]
        for i in range(d):
            for j in range(i + 1, d):
                v = float(np.var(rows[:, i] - rows[:, j], ddof=1))
                per_k[k, i, j] = per_k[k, j, i] = v
    return EmpiricalVariogram(
        gamma_hat=per_k.mean(axis=0),
        gamma_hat_k=per_k,
        tau=float(tau),
        counts=counts,
    )


# ---------------------------------------------------------------------------
# Fisher-z CI tests
# ---------------------------------------------------------------------------

def fisher_z(rho: float) -> float:
    """0.5 log((1+rho)/(1-rho))."""
    rho = float(rho)
    if not abs(rho) < 1.0:
        raise InferenceError(f"need |rho| < 1, got {rho}")
    return float(np.arctanh(rho))


@dataclass(frozen=True)
class CiTestResult:
    i: int
    j: int
    s: tuple[int, ...]
    rho_hat: float
    z: float
    n_eff: int
    p: float
    method: str
    flagged: bool = False


def _clamp_rho(rho: float) -> tuple[float, bool]:
    if abs(rho) < _RHO_CLAMP:
        return float(rho), False
    return float(np.sign(rho) * _RHO_CLAMP), True


def _two_sided_p(z: float, dof: float) -> float:
    return max(float(2.0 * norm.sf(np.sqrt(dof) * abs(z))), _P_FLOOR)


def _validate_triple(d: int, i: int, j: int, s: Sequence[int]) -> tuple[int, ...]:
    s = tuple(sorted(int(v) for v in s))
    if len(set(s)) != len(s):
        raise InferenceError("conditioning set has duplicates")
    if i == j or i in s or j in s:
        raise InferenceError("i, j must be distinct and outside S")
    for v in (i, j, *s):
        if not 1 <= v <= d:
            raise InferenceError(f"node {v} out of range 1..{d}")
    if not s:
        raise InferenceError("conditioning set must be nonempty")
    return s


def ci_test_random(
    e: ExpDataset,
    i: int,
    j: int,
    s: Sequence[int],
    k: int,
    tau: float,
    threshold: Optional[float] = None,
) -> CiTestResult:
    """Extremal CI test from the exceedances of a single node k in S.

    Rows where column k exceeds its tau-quantile (or the explicit
    threshold) become approximate extremal-function samples after
    subtracting column k; the statistic is the Gaussian partial correlation
    of (i, j) given S without k, Fisher-transformed, standardized by
    sqrt(n_k - (|S|-1) - 3).
    """
    s = _validate_triple(e.d, i, j, s)
    if k not in s:
        raise InferenceError(f"conditioning anchor {k} must lie in S={s}")
    col = e.xstar[:, k - 1]
    u = _threshold(col, tau) if threshold is None else float(threshold)
    rows = e.xstar[col > u]
    n_k = rows.shape[0]
    if n_k <= len(s) + 2:
        raise InferenceError(f"{n_k} exceedances of node {k} cannot support |S|={len(s)}")
    w = rows - rows[:, [k - 1]]
    cond = [v for v in s if v != k]
    rho, flagged = _clamp_rho(_gaussian_partial_corr(w, i, j, cond))
    z = fisher_z(rho)
    p = _two_sided_p(z, n_k - (len(s) - 1) - 3)
    return CiTestResult(
        i=i, j=j, s=s, rho_hat=rho, z=z, n_eff=n_k, p=p, method="random", flagged=flagged
    )


def _gaussian_partial_corr(data: np.ndarray, i: int, j: int, cond: Sequence[int]) -> float:
    sub = data[:, [c - 1 for c in (i, j, *cond)]]
    cov = np.cov(sub.T)
    try:
        om = np.linalg.inv(cov)
    except np.linalg.LinAlgError:
        om = np.linalg.pinv(cov)
    denom = om[0, 0] * om[1, 1]
    if denom <= 0:
        return np.sign(-om[0, 1]) * 1.0  # degenerate; caller clamps and flags
    return float(-om[0, 1] / np.sqrt(denom))


def ci_test_avg(
    v: EmpiricalVariogram, n_eff: int, i: int, j: int, s: Sequence[int]
) -> CiTestResult:
    """Extremal CI test from the averaged empirical variogram: plug-in
    extremal partial correlation, standardized by sqrt(n_eff - |S| - 3)
    (the conjectured rate; the method tag distinguishes it)."""
    d = v.gamma_hat.shape[0]
    s = _validate_triple(d, i, j, s)
    n_eff = int(n_eff)
    if n_eff <= len(s) + 3:
        raise InferenceError(f"n_eff={n_eff} cannot support |S|={len(s)}")
    try:
        rho_raw = extremal_partial_correlation(v.gamma_hat, i, j, s)
    except (HrError, np.linalg.LinAlgError):
        return CiTestResult(
            i=i, j=j, s=s, rho_hat=0.0, z=0.0, n_eff=n_eff, p=1.0,
            method="average", flagged=True,
        )
    rho, flagged = _clamp_rho(rho_raw)
    z = fisher_z(rho)
    p = _two_sided_p(z, n_eff - len(s) - 3)
    return CiTestResult(
        i=i, j=j, s=s, rho_hat=rho, z=z, n_eff=n_eff, p=p, method="average", flagged=flagged
    )


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def load_dataset_csv(path) -> Dataset:
    """CSV with a header row, one observation per line."""
    with open(path) as fh:
        header = fh.readline().strip()
        x = np.loadtxt(fh, delimiter=",", ndmin=2)
    return Dataset(x, columns=tuple(h.strip() for h in header.split(",")))


def ci_result_to_json(r: CiTestResult) -> str:
    return json.dumps(
        {
            "i": r.i,
            "j": r.j,
            "S": list(r.s),
            "rho": r.rho_hat,
            "z": r.z,
            "n_eff": r.n_eff,
            "p": r.p,
            "method": r.method,
            "flagged": r.flagged,
        }
    )


def write_ci_results_jsonl(path, results: Sequence[CiTestResult]) -> None:
    with open(path, "w") as fh:
        for r in results:
            fh.write(ci_result_to_json(r) + "\n")
