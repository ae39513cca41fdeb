"""Huesler-Reiss parameter algebra.

The Huesler-Reiss family is parameterized either by a variogram matrix Gamma
(symmetric, zero diagonal, conditionally negative definite) or by a signed-
Laplacian precision matrix Theta (positive semidefinite, Theta @ 1 = 0, rank
d-1).  The two are linked through the inverse of the bordered matrix

    [[-Gamma/2, 1],      [[theta(I), p(I)],
     [1^T,      0]]  =    [p(I)^T,  sigma2(I)]]^-1 ,

a classical identity for distance matrices due to Fiedler and Bapat.  All
conversions here go through nonsingular (d-1)- or (|I|+1)-dimensional blocks;
the rank-deficient Theta is never pseudo-inverted.

Functions accept either the validated wrapper types or raw ndarrays; raw
arrays skip validation on purpose, so that noisy empirical variogram
estimates (which may violate conditional negative definiteness) can still be
pushed through the same algebra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, helmert

from .graph import Dag, parents, root

_CND_RTOL = 1e-9          # eigenvalue tolerance relative to spectral norm
_CONSISTENCY_RTOL = 1e-7  # agreement of the two closed forms inside fiedler_bapat


class HrError(ValueError):
    """Invalid Huesler-Reiss parameter input."""


def _as_matrix(g) -> np.ndarray:
    if isinstance(g, Variogram):
        return g.gamma
    if isinstance(g, Precision):
        return g.theta
    m = np.asarray(g, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise HrError(f"expected a square matrix, got shape {m.shape}")
    return m


@dataclass(frozen=True, eq=False)
class Variogram:
    """A validated variogram matrix; build through validate_variogram."""

    gamma: np.ndarray

    @property
    def d(self) -> int:
        return self.gamma.shape[0]


@dataclass(frozen=True, eq=False)
class Precision:
    """A validated signed-Laplacian precision matrix."""

    theta: np.ndarray

    @property
    def d(self) -> int:
        return self.theta.shape[0]


@dataclass(frozen=True, eq=False)
class MarginSummary:
    """Blocks of the inverted bordered matrix for an index set I."""

    theta_I: np.ndarray
    p_I: np.ndarray
    sigma2_I: float


@dataclass(frozen=True, eq=False)
class HrScmParams:
    """Parameters of a linear Huesler-Reiss extremal SCM on a rooted DAG.

    ``b[i-1, j-1]`` is the edge weight of i -> j, ``nu2[v-2]`` the noise
    variance and ``mu_eps[v-2]`` the noise mean of non-root node v; theta and
    gamma are the induced precision / variogram matrices.
    """

    g_e: Dag
    b: np.ndarray
    nu2: np.ndarray
    mu_eps: np.ndarray
    theta: np.ndarray
    gamma: np.ndarray


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def validate_variogram(gamma, rtol: float = _CND_RTOL) -> Variogram:
    """Check symmetry, zero diagonal, positivity, and conditional negative
    definiteness (eigenvalues of the projection onto {x : x.1 = 0})."""
    g = _as_matrix(gamma)
    d = g.shape[0]
    norm = float(np.linalg.norm(g, 2)) if d > 1 else 0.0
    if not np.allclose(g, g.T, atol=rtol * max(norm, 1.0)):
        raise HrError("variogram must be symmetric")
    if np.any(np.abs(np.diag(g)) > rtol * max(norm, 1.0)):
        raise HrError("variogram must have zero diagonal")
    if d > 1:
        off = g[~np.eye(d, dtype=bool)]
        if np.any(off <= 0):
            raise HrError("variogram off-diagonal entries must be positive")
        u = helmert(d)  # rows: orthonormal basis of the hyperplane 1-perp
        eig = np.linalg.eigvalsh(u @ g @ u.T)
        if eig.max() >= rtol * norm:
            raise HrError(
                f"variogram is not conditionally negative definite "
                f"(projected eigenvalue {eig.max():.3e})"
            )
    g = g.copy()
    np.fill_diagonal(g, 0.0)
    g = (g + g.T) / 2.0
    g.setflags(write=False)
    return Variogram(g)


def validate_precision(theta, rtol: float = _CND_RTOL) -> Precision:
    """Check symmetry, Theta @ 1 = 0, positive semidefiniteness, rank d-1."""
    t = _as_matrix(theta)
    d = t.shape[0]
    norm = float(np.linalg.norm(t, 2)) if d > 1 else 0.0
    scale = max(norm, 1.0)
    if not np.allclose(t, t.T, atol=rtol * scale):
        raise HrError("precision must be symmetric")
    if np.any(np.abs(t @ np.ones(d)) > np.sqrt(d) * rtol * scale * 10):
        raise HrError("precision rows must sum to zero")
    if d > 1:
        eig = np.linalg.eigvalsh(t)
        if eig[0] < -rtol * norm * 10:
            raise HrError("precision must be positive semidefinite")
        if eig[1] <= rtol * norm:
            raise HrError("precision must have rank d-1")
    t = (np.asarray(t, dtype=float) + t.T) / 2.0
    t.setflags(write=False)
    return Precision(t)


# ---------------------------------------------------------------------------
# the bordered-matrix identity
# ---------------------------------------------------------------------------

def fiedler_bapat(gamma_II) -> MarginSummary:
    """Invert [[-Gamma_II/2, 1], [1^T, 0]] and split it into blocks.

    Returns theta(I) (the |I| x |I| precision block), p(I) (the border
    column) and sigma2(I) (the corner scalar).  The blocks are cross-checked
    against the closed forms sigma2 = (2 * 1.Gamma^-1.1)^-1 and
    p = 2 sigma2 Gamma^-1 1, which hold whenever Gamma_II is nonsingular.
    """
    g = _as_matrix(gamma_II)
    m = g.shape[0]
    if m < 2:
        raise HrError("index set must have at least two elements")
    bordered = np.zeros((m + 1, m + 1))
    bordered[:m, :m] = -g / 2.0
    bordered[:m, m] = 1.0
    bordered[m, :m] = 1.0
    try:
        inv = np.linalg.inv(bordered)
    except np.linalg.LinAlgError as exc:
        raise HrError("singular bordered matrix (invalid variogram block)") from exc
    theta_I = (inv[:m, :m] + inv[:m, :m].T) / 2.0
    p_I = (inv[:m, m] + inv[m, :m]) / 2.0
    sigma2 = float(inv[m, m])

    # independent closed forms as a consistency diagnostic
    try:
        ginv1 = np.linalg.solve(g, np.ones(m))
    except np.linalg.LinAlgError as exc:
        raise HrError("singular variogram block") from exc
    sigma2_alt = 0.5 / float(np.ones(m) @ ginv1)
    p_alt = 2.0 * sigma2_alt * ginv1
    scale = max(abs(sigma2), abs(sigma2_alt), 1e-30)
    if abs(sigma2 - sigma2_alt) > _CONSISTENCY_RTOL * scale or not np.allclose(
        p_I, p_alt, atol=_CONSISTENCY_RTOL * max(1.0, np.abs(p_alt).max())
    ):
        raise HrError("bordered inverse failed its closed-form cross-check")
    return MarginSummary(theta_I, p_I, sigma2)


def precision_from_variogram(g) -> np.ndarray:
    """Theta = theta(V): the bordered inverse applied to the full index set."""
    return fiedler_bapat(_as_matrix(g)).theta_I


def sigma_k(g, k: int) -> np.ndarray:
    """Covariance of the extremal function W^k on the coordinates != k:
    Sigma^(k)[u, v] = (Gamma[u,k] + Gamma[v,k] - Gamma[u,v]) / 2."""
    gm = _as_matrix(g)
    d = gm.shape[0]
    if not 1 <= k <= d:
        raise HrError(f"k={k} out of range 1..{d}")
    idx = [v for v in range(d) if v != k - 1]
    col = gm[idx, k - 1]
    s = (col[:, None] + col[None, :] - gm[np.ix_(idx, idx)]) / 2.0
    return s


def variogram_from_precision(t, k: int = 1, check_all_k: bool = False) -> np.ndarray:
    """Gamma from Theta through Sigma^(k) = (Theta_{-k,-k})^-1.

    Uses k = 1 canonically; with check_all_k the result is recomputed for
    every k and required to agree (the variogram does not depend on k).
    """
    tm = _as_matrix(t)
    validate_precision(tm)
    d = tm.shape[0]
    ks = range(1, d + 1) if check_all_k else [k]
    out = None
    for kk in ks:
        idx = [v for v in range(d) if v != kk - 1]
        sub = tm[np.ix_(idx, idx)]
        try:
            sig = np.linalg.inv(sub)
        except np.linalg.LinAlgError as exc:
            raise HrError("precision block is singular (rank < d-1)") from exc
        full = np.zeros((d, d))
        full[np.ix_(idx, idx)] = sig
        dg = np.diag(full)
        gamma = dg[:, None] + dg[None, :] - 2.0 * full
        np.fill_diagonal(gamma, 0.0)
        if out is None:
            out = gamma
        elif not np.allclose(out, gamma, atol=1e-8 * max(1.0, np.abs(out).max())):
            raise HrError(f"variogram reconstruction disagrees between k=1 and k={kk}")
    return out


def extremal_partial_correlation(g, i: int, j: int, s) -> float:
    """rho_{ij|S} = -theta_ij / sqrt(theta_ii theta_jj) on the margin {i,j} u S."""
    s = sorted(set(int(v) for v in s))
    if i == j or i in s or j in s or not s:
        raise HrError("need i != j and a nonempty conditioning set disjoint from {i,j}")
    gm = _as_matrix(g)
    nodes = sorted({i, j, *s})
    idx = [v - 1 for v in nodes]
    summ = fiedler_bapat(gm[np.ix_(idx, idx)])
    a, b = nodes.index(i), nodes.index(j)
    denom = summ.theta_I[a, a] * summ.theta_I[b, b]
    if denom <= 0:
        raise HrError("nonpositive precision diagonal (degenerate margin)")
    return float(-summ.theta_I[a, b] / np.sqrt(denom))


# ---------------------------------------------------------------------------
# density
# ---------------------------------------------------------------------------

def _mvn_logpdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    m = len(mean)
    if m == 0:
        return 0.0
    try:
        chol = cho_factor(cov, lower=True)
    except np.linalg.LinAlgError as exc:
        raise HrError("covariance is not positive definite") from exc
    diff = x - mean
    maha = float(diff @ cho_solve(chol, diff))
    logdet = 2.0 * float(np.log(np.diag(chol[0])).sum())
    return -0.5 * (maha + logdet + m * np.log(2.0 * np.pi))


def hr_log_density(y, g) -> float:
    """log of the exponent measure density at y.

    Evaluated through the factorization lambda(y) = exp(-y_1) *
    N(y_{-1} - y_1 ; -Gamma_{-1,1}/2, Sigma^(1)), which fixes the
    normalizing constant explicitly; homogeneity lambda(y + t) =
    exp(-t) lambda(y) is exact.
    """
    gm = _as_matrix(g)
    y = np.asarray(y, dtype=float)
    d = gm.shape[0]
    if y.shape != (d,):
        raise HrError(f"point has shape {y.shape}, expected ({d},)")
    if d == 1:
        return float(-y[0])
    mean = -gm[1:, 0] / 2.0
    cov = sigma_k(gm, 1)
    return float(-y[0]) + _mvn_logpdf(y[1:] - y[0], mean, cov)


def hr_density(y, g) -> float:
    return float(np.exp(hr_log_density(y, g)))


# ---------------------------------------------------------------------------
# conditional-independence equivalences
# ---------------------------------------------------------------------------

def ci_equivalences_check(g, i: int, j: int, c, tol: float = 1e-8):
    """Evaluate the four equivalent zero-tests for extremal CI of i and j
    given C; returns four booleans (they should always agree).

    1. theta({i,j} u C)_ij = 0
    2. the bordered Schur complement
       -G_ij/2 - [-G_iC/2, 1] [[-G_CC/2, 1],[1,0]]^-1 [-G_Cj/2; 1] = 0
    3. rho_{ij|C} = 0
    4. Theta with rows {i} u C and columns {j} u C removed is singular
    """
    gm = _as_matrix(g)
    d = gm.shape[0]
    c = sorted(set(int(v) for v in c))
    if not c or i == j or i in c or j in c:
        raise HrError("need i != j and a nonempty disjoint conditioning set")

    nodes = sorted({i, j, *c})
    idx = [v - 1 for v in nodes]
    summ = fiedler_bapat(gm[np.ix_(idx, idx)])
    a, b = nodes.index(i), nodes.index(j)
    theta_scale = max(np.abs(summ.theta_I).max(), 1e-30)
    check1 = bool(abs(summ.theta_I[a, b]) <= tol * theta_scale)

    m = len(c)
    cidx = [v - 1 for v in c]
    bordered = np.zeros((m + 1, m + 1))
    bordered[:m, :m] = -gm[np.ix_(cidx, cidx)] / 2.0
    bordered[:m, m] = 1.0
    bordered[m, :m] = 1.0
    left = np.concatenate([-gm[i - 1, cidx] / 2.0, [1.0]])
    right = np.concatenate([-gm[cidx, j - 1] / 2.0, [1.0]])
    expr = -gm[i - 1, j - 1] / 2.0 - float(left @ np.linalg.solve(bordered, right))
    check2 = bool(abs(expr) <= tol * max(np.abs(gm).max(), 1.0))

    rho = extremal_partial_correlation(gm, i, j, c)
    check3 = bool(abs(rho) <= tol)

    theta = precision_from_variogram(gm)
    keep_rows = [v - 1 for v in range(1, d + 1) if v != i and v not in c]
    keep_cols = [v - 1 for v in range(1, d + 1) if v != j and v not in c]
    sub = theta[np.ix_(keep_rows, keep_cols)]
    sv = np.linalg.svd(sub, compute_uv=False)
    # singularity judged against the scale of the full precision matrix: the
    # submatrix may be ~0 as a whole, in which case it is certainly singular
    check4 = bool(sv.min() <= tol * max(sv.max(), np.abs(theta).max()))

    return check1, check2, check3, check4


# ---------------------------------------------------------------------------
# linear SCM construction
# ---------------------------------------------------------------------------

def _weights_matrix(g_e: Dag, b) -> np.ndarray:
    d = g_e.d
    if isinstance(b, dict):
        mat = np.zeros((d, d))
        for (i, j), w in b.items():
            mat[int(i) - 1, int(j) - 1] = float(w)
    else:
        mat = np.array(b, dtype=float)
        if mat.shape != (d, d):
            raise HrError(f"weight matrix must be {d}x{d}, got {mat.shape}")
    support = {(i, j) for i, j in zip(*np.nonzero(mat))}
    allowed = {(i - 1, j - 1) for i, j in g_e.edges}
    if not support <= allowed:
        raise HrError("weights must be supported on the edges of the DAG")
    return mat


def hr_scm_from_weighted_dag(g_e: Dag, b, nu2) -> HrScmParams:
    """Parameters of the linear HR extremal SCM with weights b on g_e.

    The graph must be rooted at node 1 (relabel first otherwise).  Each
    non-root node's incoming weights must sum to one.  Builds the reduced
    structure matrix L = (I - B^T) without its root row, the precision
    Theta = L^T D^-1 L (a positive semidefinite signed Laplacian), the
    induced variogram, and the noise means mu_eps = -L Gamma[:, 1] / 2.
    """
    r = root(g_e)
    if r is None:
        raise HrError("graph is not rooted")
    if r != 1:
        raise HrError("root must be node 1; relabel the graph first")
    d = g_e.d
    mat = _weights_matrix(g_e, b)
    nu2 = np.asarray(nu2, dtype=float).reshape(-1)
    if nu2.shape != (d - 1,):
        raise HrError(f"need {d - 1} noise variances for nodes 2..{d}")
    if np.any(nu2 <= 0):
        raise HrError("noise variances must be positive")
    for v in range(2, d + 1):
        pa = parents(g_e, v)
        w_sum = mat[:, v - 1].sum()
        if pa and abs(w_sum - 1.0) > 1e-9:
            raise HrError(f"weights into node {v} sum to {w_sum}, expected 1")

    lmat = (np.eye(d) - mat.T)[1:, :]          # rows: nodes 2..d
    theta = lmat.T @ np.diag(1.0 / nu2) @ lmat
    theta = (theta + theta.T) / 2.0
    validate_precision(theta)                   # PSD signed Laplacian, rank d-1
    gamma = variogram_from_precision(theta)
    mu_eps = -0.5 * lmat @ gamma[:, 0]
    return HrScmParams(
        g_e=g_e, b=mat, nu2=nu2, mu_eps=mu_eps, theta=theta, gamma=gamma
    )
