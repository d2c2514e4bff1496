import numpy as np
import pytest

from nishimc.covariance import (
    build_M,
    build_cavity_system,
    cavity_index_set,
    constant_overlap_trajectory,
    covariance_closed_form,
    mus,
    solve_covariance_general_n,
    theory_at,
)
from nishimc.errors import CriticalPoint, Singular
from nishimc.scalar import F, solve_fixed_point


def on_model_tuples(n_tuples, seed=1234, lam_max=2.5):
    """Random coefficient triples with the on-model ordering 0 <= a3 <= a2 <= a1
    and mu1 < 0.95 (mu2 <= mu1 then holds automatically)."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n_tuples:
        a1 = rng.uniform(0.05, 1.3)
        a2 = rng.uniform(0, 1) * a1
        a3 = rng.uniform(0, 1) * a2
        lam = rng.uniform(0.05, lam_max)
        if lam * (a1 - 2 * a2 + a3) < 0.95:
            out.append((a1, a2, a3, lam))
    return out


def test_build_M_spot_values():
    assert np.array_equal(build_M(1, 0, 0), np.eye(3))
    expect = np.array([[0, -2, 0], [1, -1, -2], [0, 4, -6]])
    assert np.array_equal(build_M(0, 1, 0), expect)


def test_mus_are_eigenvalues_of_lam_M():
    # mu1 is a double eigenvalue, so eigensolvers only resolve it to ~sqrt(eps)
    for a1, a2, a3, lam in on_model_tuples(25, seed=7):
        mu1, mu2 = mus(a1, a2, a3, lam)
        eig = np.linalg.eigvals(lam * build_M(a1, a2, a3))
        for mu in (mu1, mu2):
            assert min(abs(eig - mu)) < 5e-7


def test_closed_form_spot_value():
    cov = covariance_closed_form(1.0, 0.0, 0.0, 0.5)
    assert abs(cov.A - 2.0) < 1e-12
    assert abs(cov.B) < 1e-12 and abs(cov.C) < 1e-12
    assert cov.invertible


def test_closed_form_critical_pole():
    with pytest.raises(CriticalPoint):
        covariance_closed_form(1.0, 0.0, 0.0, 1.0)


def test_closed_form_matches_linear_solve():
    for a1, a2, a3, lam in on_model_tuples(50):
        cov = covariance_closed_form(a1, a2, a3, lam)
        oracle = np.linalg.solve(np.eye(3) - lam * build_M(a1, a2, a3),
                                 np.array([a1, a2, a3]))
        assert abs(cov.A - oracle[0]) < 1e-10
        assert abs(cov.B - oracle[1]) < 1e-10
        assert abs(cov.C - oracle[2]) < 1e-10


def test_index_set_shapes():
    rows = cavity_index_set(4)
    assert len(rows) == 11  # C(5,2) + 1
    assert rows[-1] == (5, 6)
    sysn = build_cavity_system(4, 0.5, 0.3, 0.1)
    assert sysn.Amat.shape == (11, 6)
    assert sysn.Bmat.shape == (11, 11)


def test_amat_index_rule():
    sysn = build_cavity_system(2, 1.0, 0.0, 0.0)
    # first row is the (1,2) pair: a1 on the matching column, zeros elsewhere
    assert np.allclose(np.asarray(sysn.Amat[0], dtype=float), [1.0])
    sys3 = build_cavity_system(3, 1.0, 2.0, 3.0)
    cols = sys3.col_pairs
    row12 = {c: float(v) for c, v in zip(cols, sys3.Amat[0])}
    assert row12[(1, 2)] == 1.0 and row12[(1, 3)] == 2.0 and row12[(2, 3)] == 2.0
    row45 = {c: float(v) for c, v in zip(cols, sys3.Amat[-1])}
    assert set(row45.values()) == {3.0}


def test_n2_system_reduces_to_M():
    a1, a2, a3 = 0.7, 0.3, 0.1
    B = np.asarray(build_cavity_system(2, a1, a2, a3).Bmat, dtype=float)
    # rows: (1,2), (1,3), (2,3), (3,4); collapse the two exchangeable psi columns
    reduced = np.array([
        [B[0, 0], B[0, 1] + B[0, 2], B[0, 3]],
        [B[1, 0], B[1, 1] + B[1, 2], B[1, 3]],
        [B[3, 0], B[3, 1] + B[3, 2], B[3, 3]],
    ])
    assert np.allclose(reduced, build_M(a1, a2, a3), atol=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_general_n_matches_closed_form(n):
    for a1, a2, a3, lam in on_model_tuples(20, seed=100 + n):
        cf = covariance_closed_form(a1, a2, a3, lam)
        gn = solve_covariance_general_n(build_cavity_system(n, a1, a2, a3), lam)
        assert abs(gn.A - cf.A) < 1e-10
        assert abs(gn.B - cf.B) < 1e-10
        assert abs(gn.C - cf.C) < 1e-10


def test_general_n_lambda_to_zero():
    gn = solve_covariance_general_n(build_cavity_system(4, 0.7, 0.3, 0.1), 1e-12)
    assert abs(gn.A - 0.7) < 1e-9
    assert abs(gn.B - 0.3) < 1e-9
    assert abs(gn.C - 0.1) < 1e-9


def test_general_n_spot_value():
    gn = solve_covariance_general_n(build_cavity_system(3, 1.0, 0.0, 0.0), 0.5)
    assert abs(gn.A - 2.0) < 1e-12
    assert abs(gn.B) < 1e-12 and abs(gn.C) < 1e-12


def test_general_n_singular_detection():
    sysn = build_cavity_system(3, 0.9, 0.2, 0.05)
    eigs = np.linalg.eigvals(np.asarray(sysn.Bmat, dtype=float))
    real = sorted(e.real for e in eigs if abs(e.imag) < 1e-12 and e.real > 0)
    lam_bad = 1.0 / real[-1]
    with pytest.raises(Singular):
        solve_covariance_general_n(sysn, lam_bad)


def test_trajectory_endpoints(rad):
    th = solve_fixed_point(rad, 1.5)
    h, q = constant_overlap_trajectory(rad, 1.5, 1.5)
    assert abs(h) < 1e-9
    assert abs(q - th.qbar) < 1e-9
    h0, q0 = constant_overlap_trajectory(rad, 1.5, 0.0)
    assert abs(h0 - 1.5 * th.qbar) < 1e-8
    assert abs(q0 - F(rad, h0)) < 1e-10
    assert abs(q0 - th.qbar) < 1e-8


def test_trajectory_midpoint(rad):
    th = solve_fixed_point(rad, 1.5)
    _, q = constant_overlap_trajectory(rad, 1.5, 0.75)
    assert abs(q - th.qbar) < 1e-8


def test_trajectory_constant_along_grid(rad):
    th = solve_fixed_point(rad, 1.5)
    for lam_p in np.linspace(0.0, 1.5, 10):
        _, q = constant_overlap_trajectory(rad, 1.5, float(lam_p))
        assert abs(q - th.qbar) < 1e-8


def test_theory_at_bundle(rad):
    th, cov = theory_at(rad, 0.5)
    assert th.qbar == pytest.approx(0.0, abs=1e-10)
    assert cov.A == pytest.approx(2.0, abs=1e-10)
