import json

import numpy as np
import pytest
from scipy.stats import kstest

from tailcausal.hr import extremal_partial_correlation
from tailcausal.inference import (
    CiTestResult,
    Dataset,
    EmpiricalVariogram,
    ExpDataset,
    InferenceError,
    ci_result_to_json,
    ci_test_avg,
    ci_test_random,
    empirical_variogram,
    exceedances,
    fisher_z,
    known_margin_dataset,
    load_dataset_csv,
    to_exponential_margins,
    write_ci_results_jsonl,
)
from tailcausal.scm import sample_pareto_hr, sample_yk_hr

from test_hr import GAMMA_HAND, diamond_params


# ---------------------------------------------------------------------------
# margins
# ---------------------------------------------------------------------------

def test_dataset_validation():
    with pytest.raises(InferenceError):
        Dataset(np.array([[1.0, 2.0]]))  # single row
    with pytest.raises(InferenceError):
        Dataset(np.array([[1.0], [np.nan]]))
    with pytest.raises(InferenceError):
        Dataset(np.eye(3), columns=("a",))
    with pytest.raises(InferenceError):
        ExpDataset(np.eye(2), "whatever")


def test_margins_n2_exact():
    e = to_exponential_margins(Dataset(np.array([[0.0, 5.0], [3.0, 1.0]])))
    assert np.allclose(sorted(e.xstar[:, 0]), [-np.log(2 / 3), -np.log(1 / 3)])
    assert np.allclose(sorted(e.xstar[:, 1]), [-np.log(2 / 3), -np.log(1 / 3)])


def test_margins_close_to_exponential():
    rng = np.random.default_rng(0)
    x = rng.exponential(1.0, size=(10_000, 2))
    e = to_exponential_margins(Dataset(x))
    assert e.provenance == "empirical-rank"
    for col in range(2):
        assert kstest(e.xstar[:, col], "expon").statistic < 0.02
    # and the transform barely moves data already on the right scale
    assert np.corrcoef(x[:, 0], e.xstar[:, 0])[0, 1] > 0.99


def test_margins_monotone_invariance():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(500, 3))
    base = to_exponential_margins(Dataset(x)).xstar
    warped = np.column_stack([np.exp(x[:, 0]), x[:, 1] ** 3, 2 * x[:, 2] - 7])
    assert np.array_equal(to_exponential_margins(Dataset(warped)).xstar, base)


def test_margins_constant_column():
    with pytest.raises(InferenceError):
        to_exponential_margins(Dataset(np.ones((5, 2))))


# ---------------------------------------------------------------------------
# exceedances
# ---------------------------------------------------------------------------

def test_exceedances_counts_and_support():
    rng = np.random.default_rng(2)
    e = known_margin_dataset(rng.exponential(1.0, size=(1000, 3)))
    assert exceedances(e, 0.0).n == 1000
    sub = exceedances(e, 0.9)
    assert sub.n == 100
    u = np.sort(e.xstar.max(axis=1))[-101]
    assert np.all(sub.xstar.max(axis=1) > u)
    with pytest.raises(InferenceError):
        exceedances(e, 0.9995)
    with pytest.raises(InferenceError):
        exceedances(e, 1.0)


# ---------------------------------------------------------------------------
# empirical variogram
# ---------------------------------------------------------------------------

def test_empirical_variogram_on_exact_conditioned_samples():
    params = diamond_params()
    n = 100_000
    y = sample_yk_hr(params.gamma, 2, n, np.random.default_rng(3))
    ev = empirical_variogram(known_margin_dataset(y), 0.0)
    assert ev.counts[1] == n
    est = ev.gamma_hat_k[1]
    assert np.allclose(np.diag(est), 0.0)
    assert np.allclose(est, est.T)
    for i in range(4):
        for j in range(4):
            if i == j:
                continue
            se = params.gamma[i, j] * np.sqrt(2.0 / (n - 1))
            assert abs(est[i, j] - params.gamma[i, j]) < 4.0 * se


def test_empirical_variogram_consistency_rate():
    params = diamond_params()
    errs = []
    for n, seed in ((2500, 4), (40_000, 5)):
        y = sample_yk_hr(params.gamma, 1, n, np.random.default_rng(seed))
        est = empirical_variogram(known_margin_dataset(y), 0.0).gamma_hat_k[0]
        errs.append(np.abs(est - params.gamma).max())
    assert errs[1] < errs[0]


def test_empirical_variogram_permutation_equivariance():
    rng = np.random.default_rng(6)
    x = rng.exponential(1.0, size=(400, 3))
    base = empirical_variogram(known_margin_dataset(x), 0.5)
    perm = [2, 0, 1]
    permuted = empirical_variogram(known_margin_dataset(x[:, perm]), 0.5)
    assert np.allclose(permuted.gamma_hat, base.gamma_hat[np.ix_(perm, perm)])


def test_empirical_variogram_explicit_thresholds():
    params = diamond_params()
    y = sample_pareto_hr(params.gamma, 20_000, np.random.default_rng(7))
    ev = empirical_variogram(known_margin_dataset(y), 0.0, thresholds=0.0)
    assert np.all(ev.counts >= 10)
    m = ev.counts.min()
    for i in range(4):
        for j in range(i + 1, 4):
            se = params.gamma[i, j] * np.sqrt(2.0 / (m - 1))
            assert abs(ev.gamma_hat[i, j] - params.gamma[i, j]) < 5.0 * se


def test_empirical_variogram_insufficient_exceedances():
    e = known_margin_dataset(np.random.default_rng(8).exponential(size=(30, 2)))
    with pytest.raises(InferenceError):
        empirical_variogram(e, 0.9)  # 3 exceedances < 10


# ---------------------------------------------------------------------------
# fisher z
# ---------------------------------------------------------------------------

def test_fisher_z_values():
    assert fisher_z(0.0) == 0.0
    assert np.isclose(fisher_z(0.5), 0.5 * np.log(3.0))
    assert np.isclose(fisher_z(-0.3), -fisher_z(0.3))
    for rho in (-0.9, -0.2, 0.0, 0.45, 0.99):
        assert abs(np.tanh(fisher_z(rho)) - rho) < 1e-12
    with pytest.raises(InferenceError):
        fisher_z(1.0)


# ---------------------------------------------------------------------------
# CI tests
# ---------------------------------------------------------------------------

def test_ci_random_null_calibration():
    # exact conditioned samples, null pair (1,4 | {2,3}) in the diamond
    params = diamond_params()
    rng = np.random.default_rng(100)
    reps, rejections = 500, 0
    for _ in range(reps):
        k = int(rng.integers(2, 4))
        y = sample_yk_hr(params.gamma, k, 200, rng)
        r = ci_test_random(known_margin_dataset(y), 1, 4, (2, 3), k, 0.0)
        rejections += r.p <= 0.05
    rate = rejections / reps
    assert 0.02 < rate < 0.08, rate


def test_ci_random_consistency_and_power():
    params = diamond_params()
    rng = np.random.default_rng(9)
    y = sample_yk_hr(params.gamma, 3, 10_000, rng)
    ds = known_margin_dataset(y)
    r = ci_test_random(ds, 1, 2, (3,), 3, 0.0)
    truth = extremal_partial_correlation(params.gamma, 1, 2, (3,))
    assert abs(r.rho_hat - truth) < 0.02
    assert r.p <= 1e-6 and r.method == "random" and not r.flagged
    null = ci_test_random(ds, 2, 3, (1, 4), 4, 0.0)
    assert abs(null.rho_hat - extremal_partial_correlation(params.gamma, 2, 3, (1, 4))) < 0.05


def test_ci_random_single_conditioner_is_plain_correlation():
    params = diamond_params()
    y = sample_yk_hr(params.gamma, 3, 5000, np.random.default_rng(10))
    r = ci_test_random(known_margin_dataset(y), 1, 2, (3,), 3, 0.0)
    w = y - y[:, [2]]
    manual = np.corrcoef(w[:, 0], w[:, 1])[0, 1]
    assert np.isclose(r.rho_hat, manual, atol=1e-12)
    assert r.n_eff == 5000


def test_ci_random_threshold_override_and_validation():
    params = diamond_params()
    y = sample_pareto_hr(params.gamma, 3000, np.random.default_rng(11))
    ds = known_margin_dataset(y)
    r = ci_test_random(ds, 1, 4, (2, 3), 2, 0.5, threshold=0.0)
    assert r.n_eff == int((y[:, 1] > 0).sum())
    with pytest.raises(InferenceError):
        ci_test_random(ds, 1, 4, (2, 3), 1, 0.5)  # k not in S
    with pytest.raises(InferenceError):
        ci_test_random(ds, 2, 4, (2, 3), 2, 0.5)  # i inside S
    with pytest.raises(InferenceError):
        ci_test_random(ds, 1, 4, (), 2, 0.5)  # empty S
    with pytest.raises(InferenceError):
        ci_test_random(ds, 1, 4, (2, 3), 2, 0.5, threshold=20.0)  # no rows


def test_ci_random_flags_degenerate_correlation():
    rng = np.random.default_rng(12)
    col = rng.exponential(size=300)
    x = np.column_stack([col, col, rng.exponential(size=300)])
    r = ci_test_random(known_margin_dataset(x), 1, 2, (3,), 3, 0.0)
    assert r.flagged and abs(r.rho_hat) == 1.0 - 1e-8
    assert r.p >= 1e-300


def test_ci_avg_null_conservative_and_powerful():
    # averaged-variogram test: level at or below nominal under the null
    # (the conjectured standardization is conservative), high power under
    # the alternative, and never anti-conservative
    params = diamond_params()
    rng = np.random.default_rng(13)
    tau = 1 - 500 / 4000
    null_rej, power = 0, 0
    reps = 120
    for _ in range(reps):
        y = sample_pareto_hr(params.gamma, 4000, rng)
        ev = empirical_variogram(known_margin_dataset(y), tau)
        null_rej += ci_test_avg(ev, 500, 1, 4, (2, 3)).p <= 0.05
        power += ci_test_avg(ev, 500, 1, 2, (3,)).p <= 0.05
    assert null_rej / reps <= 0.065
    assert power / reps > 0.9


def test_ci_avg_power_at_least_random():
    # weak-signal pair (2,3 | {1,4}), true correlation -0.2
    params = diamond_params()
    rng = np.random.default_rng(42)
    tau = 1 - 150 / 1200
    pow_random, pow_avg = 0, 0
    reps = 60
    for _ in range(reps):
        y = sample_pareto_hr(params.gamma, 1200, rng)
        ds = known_margin_dataset(y)
        k = int(rng.choice([1, 4]))
        pow_random += ci_test_random(ds, 2, 3, (1, 4), k, tau).p <= 0.05
        ev = empirical_variogram(ds, tau)
        pow_avg += ci_test_avg(ev, 150, 2, 3, (1, 4)).p <= 0.05
    assert pow_avg >= pow_random


def test_ci_avg_plug_in_matches_hr_route():
    rng = np.random.default_rng(14)
    y = sample_pareto_hr(GAMMA_HAND, 5000, rng)
    ev = empirical_variogram(known_margin_dataset(y), 0.9)
    r = ci_test_avg(ev, ev.counts.min(), 1, 2, (3, 4))
    direct = extremal_partial_correlation(ev.gamma_hat, 1, 2, (3, 4))
    assert np.isclose(r.rho_hat, direct, atol=1e-12)


def test_ci_avg_flagged_fallback():
    # a wildly invalid variogram estimate must degrade to p = 1, flagged
    bad = np.zeros((3, 3))
    ev = EmpiricalVariogram(
        gamma_hat=bad, gamma_hat_k=np.zeros((3, 3, 3)), tau=0.5, counts=np.full(3, 50)
    )
    r = ci_test_avg(ev, 50, 1, 2, (3,))
    assert r.flagged and r.p == 1.0 and r.method == "average"


def test_ci_avg_rank_invariance_end_to_end():
    rng = np.random.default_rng(15)
    x = rng.pareto(2.0, size=(800, 3)) + 1.0
    shifted = x.copy()
    shifted[:, 1] += 100.0
    a = empirical_variogram(to_exponential_margins(Dataset(x)), 0.8)
    b = empirical_variogram(to_exponential_margins(Dataset(shifted)), 0.8)
    assert np.array_equal(a.gamma_hat, b.gamma_hat)
    ra = ci_test_avg(a, 100, 1, 2, (3,))
    rb = ci_test_avg(b, 100, 1, 2, (3,))
    assert ra == rb


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def test_csv_ingestion(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("a,b\n1.0,2.0\n3.0,4.0\n")
    ds = load_dataset_csv(path)
    assert ds.columns == ("a", "b")
    assert np.allclose(ds.x, [[1.0, 2.0], [3.0, 4.0]])


def test_ci_result_jsonl(tmp_path):
    r = CiTestResult(
        i=1, j=4, s=(2, 3), rho_hat=0.1, z=0.1003, n_eff=500, p=0.02, method="average"
    )
    line = json.loads(ci_result_to_json(r))
    assert set(line) == {"i", "j", "S", "rho", "z", "n_eff", "p", "method", "flagged"}
    assert line["S"] == [2, 3]
    assert line["flagged"] is False
    path = tmp_path / "out.jsonl"
    write_ci_results_jsonl(path, [r, r])
    assert len(path.read_text().splitlines()) == 2
