import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nishimc.errors import BadF, InsufficientData
from nishimc.observables import (
    cavity_derivative_check,
    concentration_fit,
    empirical_covariance,
    lag1_autocorr,
    nishimori_check,
    normality_test,
    pair_cov,
    replica_pairs,
    rescale,
)


def test_rescale_values():
    s = rescale({(1, 2): 0.5}, 0.2, 100)
    assert s.xi[(1, 2)] == pytest.approx(3.0, abs=1e-14)
    s0 = rescale({(1, 2): 0.2}, 0.2, 100)
    assert s0.xi[(1, 2)] == 0.0


def test_rescale_minus_variant():
    # xi^- = xi - eps_a eps_b / sqrt(N)
    N, qbar = 64, 0.3
    q, eps = 0.4, (1.0, -1.0)
    qm = q - eps[0] * eps[1] / N
    s = rescale({(1, 2): q}, qbar, N, q_minus={(1, 2): qm})
    direct = s.xi[(1, 2)] - eps[0] * eps[1] / np.sqrt(N)
    assert s.xi_minus[(1, 2)] == pytest.approx(direct, abs=1e-12)


@settings(max_examples=60)
@given(st.floats(-1, 1), st.floats(-1, 1), st.integers(2, 10_000))
def test_rescale_round_trip(q, qbar, N):
    s = rescale({(1, 2): q}, qbar, N)
    back = qbar + s.xi[(1, 2)] / np.sqrt(N)
    assert abs(back - q) < 1e-14


def _synthetic_samples(rng, n_inst, n_rep, Sigma_vals, samples_per_inst=1):
    """Gaussian xi with the exchangeable covariance (A on diag, B share, C disjoint)."""
    A, B, C = Sigma_vals
    pairs = replica_pairs(n_rep, include_star=False)
    P = len(pairs)
    Sig = np.empty((P, P))
    for i, p in enumerate(pairs):
        for j, q in enumerate(pairs):
            k = len(set(p) & set(q))
            Sig[i, j] = A if k == 2 else (B if k == 1 else C)
    assert np.all(np.linalg.eigvalsh(Sig) > 0)
    L = np.linalg.cholesky(Sig)
    samples, ids = [], []
    N = 400
    for inst in range(n_inst):
        for _ in range(samples_per_inst):
            xi = L @ rng.standard_normal(P)
            q = {p: 0.1 + x / np.sqrt(N) for p, x in zip(pairs, xi)}
            samples.append(rescale(q, 0.1, N))
            ids.append(inst)
    return samples, np.array(ids)


def test_empirical_covariance_synthetic_oracle(rng):
    A, B, C = 2.0, 0.5, 0.2
    samples, ids = _synthetic_samples(rng, 4000, 4, (A, B, C))
    est = empirical_covariance(samples, 4, instance_ids=ids)
    assert abs(est.var - A) < 3 * est.var_se
    assert abs(est.cov_share - B) < 3 * est.cov_share_se
    assert abs(est.cov_disjoint - C) < 3 * est.cov_disjoint_se
    assert est.var_se > 0 and est.cov_share_se > 0


def test_empirical_covariance_constant_degenerate():
    samples = [rescale({(1, 2): 0.1}, 0.1, 100) for _ in range(40)]
    est = empirical_covariance(samples, 2)
    assert est.var == 0.0 and est.var_se == 0.0


def test_empirical_covariance_needs_data():
    with pytest.raises(InsufficientData):
        empirical_covariance([rescale({(1, 2): 0.1}, 0.0, 4)], 2)
    with pytest.raises(InsufficientData):
        empirical_covariance([rescale({}, 0.0, 4)] * 5, 1)


def test_pair_cov_consistency(rng):
    samples, ids = _synthetic_samples(rng, 3000, 3, (2.0, 0.5, 0.45))
    c12_13, se = pair_cov(samples, (1, 2), (1, 3), instance_ids=ids)
    assert abs(c12_13 - 0.5) < 3 * se
    c12_23, se2 = pair_cov(samples, (1, 2), (2, 3), instance_ids=ids)
    # replica permutation invariance: both estimate the same B
    assert abs(c12_13 - c12_23) < 3 * np.hypot(se, se2)


def test_nishimori_gap_zero_on_matched(rng):
    samples, ids = [], []
    for inst in range(300):
        base = rng.normal(0.3, 0.05)
        q = {(0, 1): base + rng.normal(0, 0.02), (0, 2): base + rng.normal(0, 0.02),
             (1, 2): base + rng.normal(0, 0.02)}
        samples.append(rescale(q, 0.3, 100))
        ids.append(inst)
    chk = nishimori_check(samples, instance_ids=np.array(ids), include_squares=True)
    assert abs(chk.gap) < 3 * chk.se
    assert abs(chk.gap_sq) < 3 * chk.se_sq


def test_nishimori_gap_detects_violation(rng):
    samples, ids = [], []
    for inst in range(300):
        q = {(0, 1): rng.normal(0.35, 0.02), (0, 2): rng.normal(0.35, 0.02),
             (1, 2): rng.normal(0.20, 0.02)}  # deliberately broken
        samples.append(rescale(q, 0.3, 100))
        ids.append(inst)
    chk = nishimori_check(samples, instance_ids=np.array(ids))
    assert abs(chk.gap) > 3 * chk.se


def test_normality_accepts_gaussian(rng):
    x = rng.normal(0, np.sqrt(2.0), size=100_000)
    rep = normality_test(x, 2.0)
    assert rep.ks_p > 0.01
    assert abs(rep.skew) < 3 * rep.skew_se
    assert abs(rep.exkurt) < 3 * rep.exkurt_se


def test_normality_rejects_exponential(rng):
    x = rng.exponential(1.0, size=20_000) - 1.0
    rep = normality_test(x, 1.0)
    assert rep.ks_p < 1e-6
    assert rep.skew > 5 * rep.skew_se


def test_normality_degenerate_and_small():
    rep = normality_test(np.full(500, 1.3), 1.0)
    assert rep.degenerate and np.isnan(rep.ks_p)
    with pytest.raises(InsufficientData):
        normality_test(np.arange(50), 1.0)


def test_ks_calibration(rng):
    # under the null the 1%-level rejection rate stays near 1%
    rejections = sum(
        normality_test(rng.normal(0, 1, size=800), 1.0).ks_p < 0.01
        for _ in range(120)
    )
    # binomial(120, 0.01): mean 1.2, sd 1.09; allow mean + ~3.5 sd
    assert rejections <= 5


def test_jackknife_se_scale(rng):
    # jackknife SE of skewness ~ sqrt(6/n) for Gaussian data
    x = rng.normal(0, 1, size=4000)
    rep = normality_test(x, 1.0)
    assert rep.skew_se == pytest.approx(np.sqrt(6 / 4000), rel=0.35)
    assert rep.exkurt_se == pytest.approx(np.sqrt(24 / 4000), rel=0.35)


def test_concentration_exact_line():
    Ns = [250, 500, 1000, 2000]
    slope2, slope4 = concentration_fit(Ns, [1.0 / n for n in Ns],
                                       [5.0 / n**2 for n in Ns])
    assert slope2 == pytest.approx(-1.0, abs=1e-12)
    assert slope4 == pytest.approx(-2.0, abs=1e-12)


def test_concentration_validation():
    with pytest.raises(InsufficientData):
        concentration_fit([100, 200], [0.1, 0.05])
    with pytest.raises(InsufficientData):
        concentration_fit([100, 200, 400], [0.1, -0.05, 0.01])


def test_concentration_iid_prior_case(rng):
    # lambda = 0: q_1* is a mean of N iid prior products; slope is exactly -1
    Ns = [100, 200, 400, 800]
    m2 = []
    for N in Ns:
        draws = rng.choice([-1, 1], size=(4000, N)).mean(axis=1)
        m2.append(np.mean(draws**2))
    slope2, _ = concentration_fit(Ns, m2)
    assert abs(slope2 + 1.0) < 0.1


def test_lag1_autocorr_iid(rng):
    series = [rng.normal(size=200) for _ in range(10)]
    assert abs(lag1_autocorr(series)) < 0.05
    assert np.isnan(lag1_autocorr([np.ones(5)]))


def test_cavity_check_zero_coupling(rad):
    res = cavity_derivative_check(rad, 4, 0.0, 0.3, 0.5, 1e-3, 10, "q12")
    assert res.fd == 0.0 and res.rhs == 0.0


def test_cavity_check_identity_q12(rad):
    res = cavity_derivative_check(rad, 4, 1.0, 0.3, 0.5, 1e-3, 800, "q12", seed=5)
    assert abs(res.diff) < 4 * res.se


def test_cavity_check_identity_q1star(bern):
    res = cavity_derivative_check(bern, 4, 1.3, 0.2, 0.4, 1e-3, 800, "q1star", seed=9)
    assert abs(res.diff) < 4 * res.se


def test_cavity_check_wrong_q_still_holds(rad):
    # the derivative rule is valid for any interpolation level, not just qbar
    from nishimc.scalar import solve_fixed_point

    qbar = solve_fixed_point(rad, 1.0).qbar
    res = cavity_derivative_check(rad, 4, 1.0, qbar + 0.3, 0.5, 1e-3, 800,
                                  "q12", seed=7)
    assert abs(res.diff) < 4 * res.se


def test_cavity_check_validation(rad):
    with pytest.raises(BadF):
        cavity_derivative_check(rad, 4, 1.0, 0.3, 0.5, 1e-3, 5, "q13")
    with pytest.raises(ValueError):
        cavity_derivative_check(rad, 4, 1.0, 0.3, 0.9999, 1e-3, 5, "q12")
