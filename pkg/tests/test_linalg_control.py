import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bayestab.errors import CareNoSolution, InputError, NumericalFailure
from bayestab.linalg_control import (
    lqr,
    lqr_gain,
    matrix_exponential,
    operator_norm,
    riccati_operator,
    solve_care,
    solve_lyapunov,
    spectral_abscissa,
)

from oracles import lyapunov_quadrature, random_stable, scalar_care


# -- spectral abscissa ------------------------------------------------------

def test_abscissa_of_benchmark_truth(truth):
    eig = np.linalg.eigvals(truth.A)
    assert spectral_abscissa(truth.A) > 0
    assert np.sum(eig.real > 0) == 2


def test_abscissa_negative_identity():
    assert spectral_abscissa(-np.eye(3)) == pytest.approx(-1.0, abs=1e-14)


def test_abscissa_companion():
    # lambda^2 + 3 lambda + 2 = (lambda + 1)(lambda + 2)
    assert spectral_abscissa([[0, 1], [-2, -3]]) == pytest.approx(-1.0, abs=1e-12)


def test_abscissa_rejects_nonfinite():
    with pytest.raises(InputError):
        spectral_abscissa([[np.nan, 0], [0, 1]])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), p=st.integers(1, 5))
def test_abscissa_similarity_invariant(seed, p):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((p, p))
    T = np.eye(p) + 0.3 * rng.standard_normal((p, p)) / np.sqrt(p)
    if np.linalg.cond(T) > 10:
        return
    similar = T @ M @ np.linalg.inv(T)
    assert spectral_abscissa(similar) == pytest.approx(spectral_abscissa(M), abs=1e-8)


# -- operator norm ----------------------------------------------------------

@pytest.mark.parametrize("M, expected", [
    (np.eye(4), 1.0),
    (np.diag([3.0, -5.0]), 5.0),
    ([[0.0, 2.0], [0.0, 0.0]], 2.0),
])
def test_operator_norm(M, expected):
    assert operator_norm(M) == pytest.approx(expected, abs=1e-14)


# -- Riccati operator and CARE ----------------------------------------------

def test_riccati_operator_only_q_survives():
    out = riccati_operator(np.zeros((2, 2)), np.zeros((2, 1)), np.eye(2), np.eye(1),
                           np.zeros((2, 2)))
    np.testing.assert_array_equal(out, np.eye(2))


def test_riccati_operator_scalar():
    assert riccati_operator(0, 1, 1, 1, 1)[0, 0] == 0.0


def test_riccati_operator_singular_r():
    with pytest.raises(InputError):
        riccati_operator(np.eye(2), np.ones((2, 2)), np.eye(2), np.zeros((2, 2)), np.eye(2))


@pytest.mark.parametrize("a, b, q, r", [
    (0.0, 1.0, 1.0, 1.0),
    (1.0, 1.0, 1.0, 1.0),
    (-2.0, 0.5, 3.0, 0.7),
    (5.0, 2.0, 0.1, 4.0),
])
def test_scalar_care_closed_form(a, b, q, r):
    sol = solve_care(a, b, q, r)
    assert sol.P[0, 0] == pytest.approx(scalar_care(a, b, q, r), rel=1e-12)


def test_scalar_care_hand_values():
    assert solve_care(0, 1, 1, 1).P[0, 0] == pytest.approx(1.0, abs=1e-10)
    assert solve_care(1, 1, 1, 1).P[0, 0] == pytest.approx(1 + np.sqrt(2), abs=1e-10)
    K = lqr_gain(0, 1, 1, 1)
    assert K[0, 0] == pytest.approx(-1.0, abs=1e-10)
    assert spectral_abscissa(0 + 1 * K) == pytest.approx(-1.0, abs=1e-10)


def test_care_on_truth(truth):
    Q, R = np.eye(3), np.eye(2)
    sol = solve_care(truth.A, truth.B, Q, R)
    assert operator_norm(riccati_operator(truth.A, truth.B, Q, R, sol.P)) <= 1e-8
    assert sol.residual_norm <= 1e-9
    np.testing.assert_allclose(sol.P, sol.P.T, atol=1e-12 * operator_norm(sol.P))
    assert np.min(np.linalg.eigvalsh(sol.P)) >= -1e-8 * operator_norm(sol.P)
    K = lqr_gain(truth.A, truth.B, Q, R)
    assert spectral_abscissa(truth.A + truth.B @ K) < 0
    # independent reference: scipy's ordered-Schur solver
    ref = scipy.linalg.solve_continuous_are(truth.A, truth.B, Q, R)
    np.testing.assert_allclose(sol.P, ref, atol=1e-10)


def test_zero_input_matrix_is_rejected(truth):
    with pytest.raises(CareNoSolution):
        lqr_gain(truth.A, np.zeros((3, 2)), np.eye(3), np.eye(2))


def test_uncontrollable_marginal_mode():
    # eigenvalue 0 that B cannot reach: Hamiltonian has imaginary-axis eigenvalues
    with pytest.raises(NumericalFailure):
        solve_care(np.diag([0.0, -1.0]), [[0.0], [1.0]], np.eye(2), np.eye(1))


def test_residual_above_tolerance_raises():
    # nearly uncontrollable pair, ||P|| ~ 1e5: float64 cannot reach 1e-9 absolute
    rng = np.random.default_rng(42498)
    A, B = rng.standard_normal((3, 3)), rng.standard_normal((3, 1))
    X = rng.standard_normal((3, 3))
    Y = rng.standard_normal((1, 1))
    Q, R = X @ X.T + 0.1 * np.eye(3), Y @ Y.T + 0.1 * np.eye(1)
    with pytest.raises(NumericalFailure, match="residual"):
        solve_care(A, B, Q, R)
    assert solve_care(A, B, Q, R, tol=1e-4).residual_norm <= 1e-4


def _random_stabilizable(rng, p, q):
    # redraw nearly uncontrollable pairs; their ||P|| makes 1e-9 absolute unreachable
    while True:
        A = rng.standard_normal((p, p))
        B = rng.standard_normal((p, q))
        if operator_norm(scipy.linalg.solve_continuous_are(A, B, np.eye(p), np.eye(q))) <= 50:
            return A, B


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), p=st.integers(1, 5), q=st.integers(1, 3))
def test_care_invariants_random(seed, p, q):
    rng = np.random.default_rng(seed)
    A, B = _random_stabilizable(rng, p, q)
    X = rng.standard_normal((p, p))
    Q = X @ X.T + 0.1 * np.eye(p)
    Y = rng.standard_normal((q, q))
    R = Y @ Y.T + 0.1 * np.eye(q)
    ref = scipy.linalg.solve_continuous_are(A, B, Q, R)
    try:
        K, sol = lqr(A, B, Q, R)
    except NumericalFailure:
        # absolute tolerance out of reach only for badly conditioned draws
        assert operator_norm(ref) > 1e3
        return
    scale = operator_norm(sol.P)
    assert operator_norm(riccati_operator(A, B, Q, R, sol.P)) <= 1e-9
    assert np.max(np.abs(sol.P - sol.P.T)) <= 1e-12 * scale
    assert np.min(np.linalg.eigvalsh(sol.P)) >= -1e-8 * scale
    assert spectral_abscissa(A + B @ K) < 0
    np.testing.assert_allclose(sol.P, ref, rtol=1e-6, atol=1e-8 * scale)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), alpha=st.floats(0.01, 100.0))
def test_care_joint_scaling(seed, alpha):
    rng = np.random.default_rng(seed)
    A, B = _random_stabilizable(rng, 3, 2)
    P1 = solve_care(A, B, np.eye(3), np.eye(2)).P
    P2 = solve_care(A, B, alpha * np.eye(3), alpha * np.eye(2)).P
    np.testing.assert_allclose(P2, alpha * P1, rtol=1e-8, atol=1e-10 * alpha)
    np.testing.assert_allclose(lqr_gain(A, B, alpha * np.eye(3), alpha * np.eye(2)),
                               lqr_gain(A, B, np.eye(3), np.eye(2)), atol=1e-9)


# -- Lyapunov -----------------------------------------------------------------

def test_lyapunov_identity():
    np.testing.assert_allclose(solve_lyapunov(-np.eye(4), np.eye(4)), 0.5 * np.eye(4),
                               atol=1e-15)


def test_lyapunov_scalar_closed_loop():
    # a=0, b=1, K=-1 gives D=-1; W = q + K r K = 2 -> M = 1.  With D=-1/2 -> M = 2.
    assert solve_lyapunov([[-0.5]], [[2.0]])[0, 0] == pytest.approx(2.0, abs=1e-14)
    assert solve_lyapunov([[-1.0]], [[2.0]])[0, 0] == pytest.approx(1.0, abs=1e-14)


def test_lyapunov_equals_care_solution(truth):
    # P is the Lyapunov integral of Q + K^T R K along its own closed loop
    K, sol = lqr(truth.A, truth.B, np.eye(3), np.eye(2))
    M = solve_lyapunov(truth.A + truth.B @ K, np.eye(3) + K.T @ K)
    np.testing.assert_allclose(M, sol.P, atol=1e-10)


def test_lyapunov_rejects_unstable():
    with pytest.raises(InputError):
        solve_lyapunov(np.eye(2), np.eye(2))


def test_lyapunov_matches_quadrature():
    rng = np.random.default_rng(7)
    for _ in range(10):
        p = int(rng.integers(3, 6))
        D = random_stable(rng, p)
        X = rng.standard_normal((p, p))
        W = X @ X.T
        M = solve_lyapunov(D, W)
        ref = lyapunov_quadrature(D, W)
        assert np.linalg.norm(M - ref) <= 1e-6 * np.linalg.norm(ref)
        assert np.min(np.linalg.eigvalsh(M)) >= -1e-10


# -- matrix exponential ---------------------------------------------------------

def test_expm_zero():
    np.testing.assert_array_equal(matrix_exponential(np.zeros((3, 3))), np.eye(3))


def test_expm_diagonal():
    np.testing.assert_allclose(matrix_exponential(np.diag([-1.0, 2.0]), 1.0),
                               np.diag([np.exp(-1), np.exp(2)]), rtol=1e-14)


def test_expm_nilpotent():
    np.testing.assert_allclose(matrix_exponential([[0, 1], [0, 0]], 3.0),
                               [[1, 3], [0, 1]], atol=1e-14)


@pytest.mark.parametrize("scale", [1e-3, 0.1, 1.0, 4.0, 30.0])
def test_expm_against_scipy(scale):
    rng = np.random.default_rng(int(scale * 1000))
    M = rng.standard_normal((5, 5))
    M *= scale / np.linalg.norm(M, 1)
    ref = scipy.linalg.expm(M)
    assert np.linalg.norm(matrix_exponential(M) - ref) <= 1e-10 * np.linalg.norm(ref)


def test_expm_overflow():
    with pytest.raises(NumericalFailure):
        matrix_exponential(np.eye(2) * 1e4)


@settings(max_examples=50, deadline=None)
@given(M=arrays(float, (3, 3), elements=st.floats(-1, 1)),
       s=st.floats(0, 1), t=st.floats(0, 1))
def test_expm_semigroup(M, s, t):
    M = M * (2.0 / max(1.0, np.linalg.norm(M, 2)))
    lhs = matrix_exponential(M, s + t)
    rhs = matrix_exponential(M, s) @ matrix_exponential(M, t)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * max(1.0, np.max(np.abs(lhs)))
