import numpy as np
import pytest
from scipy.integrate import dblquad, quad

from tailcausal.graph import Dag
from tailcausal.hr import (
    HrError,
    ci_equivalences_check,
    extremal_partial_correlation,
    fiedler_bapat,
    hr_density,
    hr_log_density,
    hr_scm_from_weighted_dag,
    precision_from_variogram,
    sigma_k,
    validate_precision,
    validate_variogram,
    variogram_from_precision,
)
from oracles import gaussian_partial_corr, random_variogram

RNG = np.random.default_rng(2024)

# the worked diamond: 1 -> 2, 1 -> 3, 2 -> 4, 3 -> 4 with weights 1/2 into
# node 4 and unit noise variances
DIAMOND = Dag(4, [(1, 2), (1, 3), (2, 4), (3, 4)])
B_HALF = {(1, 2): 1.0, (1, 3): 1.0, (2, 4): 0.5, (3, 4): 0.5}
THETA_HAND = np.array(
    [
        [2.0, -1.0, -1.0, 0.0],
        [-1.0, 1.25, 0.25, -0.5],
        [-1.0, 0.25, 1.25, -0.5],
        [0.0, -0.5, -0.5, 1.0],
    ]
)
GAMMA_HAND = np.array(
    [
        [0.0, 1.0, 1.0, 1.5],
        [1.0, 0.0, 2.0, 1.5],
        [1.0, 2.0, 0.0, 1.5],
        [1.5, 1.5, 1.5, 0.0],
    ]
)


def diamond_params():
    return hr_scm_from_weighted_dag(DIAMOND, B_HALF, np.ones(3))


# ---------------------------------------------------------------- validation

def test_validate_variogram_accepts_unit_offdiag():
    g = np.ones((3, 3)) - np.eye(3)
    assert validate_variogram(g).d == 3


def test_validate_variogram_rejects_bad_inputs():
    with pytest.raises(HrError):
        validate_variogram(np.zeros((3, 3)))
    with pytest.raises(HrError):
        validate_variogram(np.array([[0.0, 1.0], [2.0, 0.0]]))
    with pytest.raises(HrError):
        validate_variogram(np.array([[0.5, 1.0], [1.0, 0.0]]))
    bad = np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 10.0], [1.0, 10.0, 0.0]])
    with pytest.raises(HrError):
        validate_variogram(bad)  # violates conditional negative definiteness


def test_validate_variogram_accepts_constructed_instances():
    assert validate_variogram(diamond_params().gamma).d == 4
    for _ in range(20):
        v = validate_variogram(random_variogram(6, RNG))
        assert v.gamma.diagonal().max() == 0.0


def test_validate_precision():
    p = validate_precision(THETA_HAND)
    assert p.d == 4
    with pytest.raises(HrError):
        validate_precision(np.zeros((3, 3)))  # rank 0, not d-1
    with pytest.raises(HrError):
        validate_precision(np.eye(3))  # rows do not sum to zero


# ------------------------------------------------------------- bordered blocks

def test_fiedler_bapat_two_node_closed_form():
    # hand inverse of [[0, -g/2, 1], [-g/2, 0, 1], [1, 1, 0]]
    for g in (0.8, 2.5):
        summ = fiedler_bapat(np.array([[0.0, g], [g, 0.0]]))
        assert np.allclose(summ.theta_I, np.array([[1, -1], [-1, 1]]) / g, atol=1e-12)
        assert np.allclose(summ.p_I, [0.5, 0.5], atol=1e-12)
        assert abs(summ.sigma2_I - g / 4.0) < 1e-12


def test_fiedler_bapat_rows_sum_to_zero():
    for d in (2, 3, 5, 8):
        summ = fiedler_bapat(random_variogram(d, RNG))
        assert np.allclose(summ.theta_I @ np.ones(d), 0.0, atol=1e-9)
        assert abs(summ.p_I.sum() - 1.0) < 1e-9
        assert summ.sigma2_I > 0


def test_fiedler_bapat_rejects_tiny_index_set():
    with pytest.raises(HrError):
        fiedler_bapat(np.zeros((1, 1)))


# ------------------------------------------------------- precision <-> variogram

def test_round_trip_random():
    for d in (2, 3, 5, 8, 12):
        for _ in range(5):
            gamma = random_variogram(d, RNG)
            theta = precision_from_variogram(gamma)
            back = variogram_from_precision(theta)
            assert np.abs(back - gamma).max() < 1e-8


def test_worked_diamond_precision_entries():
    params = diamond_params()
    assert abs(params.theta[0, 0] - 2.0) < 1e-12
    assert abs(params.theta[0, 3] - 0.0) < 1e-12
    assert abs(params.theta[1, 3] - (-0.5)) < 1e-12
    assert np.abs(params.theta - THETA_HAND).max() < 1e-12
    assert np.abs(params.gamma - GAMMA_HAND).max() < 1e-10


def test_variogram_from_precision_k_independent():
    theta = precision_from_variogram(random_variogram(6, RNG))
    base = variogram_from_precision(theta, check_all_k=True)
    for k in range(2, 7):
        assert np.allclose(base, variogram_from_precision(theta, k=k), atol=1e-8)


def test_variogram_from_precision_rejects_rank_deficient():
    with pytest.raises(HrError):
        variogram_from_precision(np.zeros((4, 4)))


# ------------------------------------------------------------------- sigma_k

def test_sigma_k():
    g = np.array([[0.0, 1.7], [1.7, 0.0]])
    assert np.allclose(sigma_k(g, 1), [[1.7]])
    gamma = random_variogram(5, RNG)
    for k in (1, 3, 5):
        s = sigma_k(gamma, k)
        idx = [v for v in range(5) if v != k - 1]
        assert np.allclose(np.diag(s), gamma[idx, k - 1])
        # matches the inverse of the precision block
        theta = precision_from_variogram(gamma)
        sub = theta[np.ix_(idx, idx)]
        assert np.allclose(s, np.linalg.inv(sub), atol=1e-8)
        assert np.linalg.eigvalsh(s).min() > 0


# ------------------------------------------------- extremal partial correlation

def test_partial_correlation_worked_diamond():
    gamma = diamond_params().gamma
    assert abs(extremal_partial_correlation(gamma, 1, 4, {2, 3})) < 1e-12
    assert abs(extremal_partial_correlation(gamma, 2, 3, {1})) < 1e-12
    # conditioning on the collider 4 couples nodes 2 and 3
    assert abs(extremal_partial_correlation(gamma, 2, 3, {1, 4}) - (-0.2)) < 1e-12


def test_partial_correlation_equals_gaussian_partial_corr_of_w():
    for _ in range(10):
        gamma = random_variogram(6, RNG)
        i, j = 1, 4
        s = {2, 3, 6}
        rho = extremal_partial_correlation(gamma, i, j, s)
        for k in s:
            coords = [v for v in range(1, 7) if v != k]
            cov = sigma_k(gamma, k)
            pos = {v: coords.index(v) for v in coords}
            oracle = gaussian_partial_corr(
                cov, pos[i], pos[j], [pos[v] for v in s if v != k]
            )
            assert abs(rho - oracle) < 1e-8


def test_partial_correlation_input_checks():
    gamma = random_variogram(4, RNG)
    with pytest.raises(HrError):
        extremal_partial_correlation(gamma, 1, 2, set())
    with pytest.raises(HrError):
        extremal_partial_correlation(gamma, 1, 2, {2})


# -------------------------------------------------------------------- density

def test_hr_density_homogeneity():
    for d in (2, 3, 5):
        gamma = random_variogram(d, RNG)
        for _ in range(20):
            y = RNG.normal(size=d) * 3
            t = float(RNG.normal()) * 2
            lhs = hr_log_density(y + t, gamma)
            rhs = -t + hr_log_density(y, gamma)
            assert abs(lhs - rhs) < 1e-10


def test_hr_density_marginal_mass_d2():
    gamma = np.array([[0.0, 1.3], [1.3, 0.0]])
    for y1 in (-0.5, 0.0, 1.2):
        val, _ = quad(lambda y2: hr_density([y1, y2], gamma), -40, 40)
        assert abs(val - np.exp(-y1)) < 1e-8


def test_hr_density_marginal_mass_d3():
    gamma = validate_variogram(random_variogram(3, np.random.default_rng(5))).gamma
    y1 = 0.7
    val, _ = dblquad(
        lambda y3, y2: hr_density([y1, y2, y3], gamma), -35, 35, -35, 35
    )
    assert abs(val - np.exp(-y1)) < 1e-5


def test_hr_density_matches_bordered_quadratic_form():
    # second route: lambda(y) = c * exp(-(y,1) M^-1 (y,1) / 2) with
    # M = [[-Gamma/2, 1], [1^T, 0]]; the ratio of the two routes must be a
    # constant in y
    for d in (2, 4):
        gamma = random_variogram(d, RNG)
        m = np.zeros((d + 1, d + 1))
        m[:d, :d] = -gamma / 2.0
        m[:d, d] = 1.0
        m[d, :d] = 1.0
        minv = np.linalg.inv(m)
        consts = []
        for _ in range(8):
            y = RNG.normal(size=d) * 2
            v = np.concatenate([y, [1.0]])
            log_quad = -0.5 * float(v @ minv @ v)
            consts.append(hr_log_density(y, gamma) - log_quad)
        assert np.ptp(consts) < 1e-9


# -------------------------------------------------------- the four CI routes

def test_ci_equivalences_worked_diamond():
    gamma = diamond_params().gamma
    assert ci_equivalences_check(gamma, 1, 4, {2, 3}) == (True,) * 4
    assert ci_equivalences_check(gamma, 2, 3, {1}) == (True,) * 4
    assert ci_equivalences_check(gamma, 2, 3, {1, 4}) == (False,) * 4


def test_ci_equivalences_agree_on_random_instances():
    for _ in range(15):
        gamma = random_variogram(5, RNG)
        checks = ci_equivalences_check(gamma, 1, 3, {2, 4})
        assert checks == (False,) * 4  # generic instances are dependent


# ----------------------------------------------------------- SCM construction

def test_hr_scm_chain():
    for s2 in (0.6, 1.0, 2.3):
        params = hr_scm_from_weighted_dag(Dag(2, [(1, 2)]), {(1, 2): 1.0}, [s2])
        assert abs(params.gamma[0, 1] - s2) < 1e-12
        assert abs(params.mu_eps[0] + s2 / 2.0) < 1e-12


def test_hr_scm_worked_diamond_noise_means():
    params = diamond_params()
    assert np.allclose(params.mu_eps, [-0.5, -0.5, -0.25], atol=1e-12)


def test_hr_scm_laplacian_rows():
    params = hr_scm_from_weighted_dag(
        DIAMOND, {(1, 2): 1.0, (1, 3): 1.0, (2, 4): 0.3, (3, 4): 0.7}, np.ones(3)
    )
    assert np.abs(params.theta @ np.ones(4)).max() < 1e-12


def test_hr_scm_input_checks():
    with pytest.raises(HrError):
        hr_scm_from_weighted_dag(
            DIAMOND, {(1, 2): 1.0, (1, 3): 1.0, (2, 4): 0.5, (3, 4): 0.6}, np.ones(3)
        )
    with pytest.raises(HrError):
        hr_scm_from_weighted_dag(
            Dag(4, [(1, 3), (2, 4), (3, 4)]), {(1, 3): 1.0, (3, 4): 1.0}, np.ones(3)
        )
    with pytest.raises(HrError):  # rooted, but not at node 1
        hr_scm_from_weighted_dag(
            Dag(2, [(2, 1)]), {(2, 1): 1.0}, [1.0]
        )
    with pytest.raises(HrError):  # weight off the edge support
        hr_scm_from_weighted_dag(
            DIAMOND, {(1, 2): 1.0, (1, 3): 1.0, (2, 4): 0.5, (3, 4): 0.5, (1, 4): 0.1},
            np.ones(3),
        )
    with pytest.raises(HrError):
        hr_scm_from_weighted_dag(DIAMOND, B_HALF, [1.0, -1.0, 1.0])


def test_hr_scm_nonadjacent_no_shared_child_gives_zero_precision():
    # in the pruned diamond 1->2, 1->3, 2->4: nodes 3 and 4 are non-adjacent
    # with no common child, so theta_34 = 0
    g = Dag(4, [(1, 2), (1, 3), (2, 4)])
    params = hr_scm_from_weighted_dag(
        g, {(1, 2): 1.0, (1, 3): 1.0, (2, 4): 1.0}, np.ones(3)
    )
    assert abs(params.theta[2, 3]) < 1e-12
    assert ci_equivalences_check(params.gamma, 3, 4, {1, 2}) == (True,) * 4
