"""Dense small-matrix control numerics.

Spectral abscissa, matrix exponential, Lyapunov and Riccati solvers and the
LQR gain built on top of them.  Everything here is a pure function of its
inputs and works on plain ``numpy`` arrays.

The Riccati solver runs the matrix sign-function iteration on the
Hamiltonian, extracts ``P`` from the stable invariant subspace by least
squares and polishes it with Newton (Kleinman) steps.  It only needs linear
solves, and the returned residual certifies the answer.
"""

from dataclasses import dataclass

import numpy as np

from .errors import CareNoSolution, IndefiniteSolution, InputError, NumericalFailure

__all__ = [
    "CareSolution",
    "spectral_abscissa",
    "eigenvalues",
    "riccati_operator",
    "solve_care",
    "lqr_gain",
    "lqr",
    "solve_lyapunov",
    "matrix_exponential",
    "operator_norm",
]

CARE_TOL = 1e-9
CARE_MAX_ITER = 100
# Relative step size below which the sign iteration is considered converged.
_SIGN_STEP_TOL = 1e-10
_MAX_NEWTON_STEPS = 5


@dataclass(frozen=True)
class CareSolution:
    """Stabilizing solution of the continuous-time algebraic Riccati equation."""

    P: np.ndarray
    residual_norm: float
    iterations: int


def _as_matrix(M, name="M", square=False):
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2 or 0 in M.shape:
        raise InputError(f"{name} must be a non-empty 2-D matrix, got shape {M.shape}")
    if square and M.shape[0] != M.shape[1]:
        raise InputError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InputError(f"{name} has non-finite entries")
    return M


def eigenvalues(M):
    """All eigenvalues of a square matrix (LAPACK Hessenberg-QR)."""
    M = _as_matrix(M, square=True)
    try:
        return np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigenvalue iteration did not converge: {exc}") from exc


def spectral_abscissa(M):
    """Largest real part among the eigenvalues of ``M``.

    Negative exactly when ``M`` is Hurwitz-stable.
    """
    return float(np.max(eigenvalues(M).real))


def operator_norm(M):
    """Largest singular value of ``M``."""
    M = _as_matrix(M)
    return float(np.linalg.norm(M, 2))


def riccati_operator(A, B, Q, R, M):
    """Evaluate ``A^T M + M A - M B R^{-1} B^T M + Q``."""
    A = _as_matrix(A, "A", square=True)
    B = _as_matrix(B, "B")
    Q = _as_matrix(Q, "Q", square=True)
    R = _as_matrix(R, "R", square=True)
    M = _as_matrix(M, "M", square=True)
    p, q = B.shape
    if A.shape[0] != p or Q.shape[0] != p or M.shape[0] != p or R.shape[0] != q:
        raise InputError("inconsistent dimensions in riccati_operator")
    return A.T @ M + M @ A - M @ B @ _solve_r(R, B.T) @ M + Q


def _solve_r(R, rhs):
    try:
        if np.linalg.cond(R) > 1 / np.finfo(float).eps:
            raise np.linalg.LinAlgError("R is singular")
        return np.linalg.solve(R, rhs)
    except np.linalg.LinAlgError as exc:
        raise InputError(f"R is singular: {exc}") from exc


def solve_lyapunov(D, W):
    """Solve ``D^T M + M D + W = 0`` for Hurwitz ``D``.

    The solution equals the integral of ``expm(D^T t) W expm(D t)`` over
    ``[0, inf)``.  Solved through the Kronecker form, which is cheap at the
    dimensions this package deals with.
    """
    D = _as_matrix(D, "D", square=True)
    W = _as_matrix(W, "W", square=True)
    p = D.shape[0]
    if W.shape[0] != p:
        raise InputError("D and W must have the same size")
    if spectral_abscissa(D) >= 0:
        raise InputError("solve_lyapunov requires a Hurwitz matrix D")
    eye = np.eye(p)
    L = np.kron(eye, D.T) + np.kron(D.T, eye)
    vec_m = np.linalg.solve(L, -W.reshape(-1, order="F"))
    M = vec_m.reshape(p, p, order="F")
    return 0.5 * (M + M.T)


def _sign_iteration(H, max_iter):
    """Newton iteration for sign(H) with determinant scaling."""
    n = H.shape[0]
    Z = H.copy()
    for it in range(1, max_iter + 1):
        try:
            Z_inv = np.linalg.inv(Z)
        except np.linalg.LinAlgError as exc:
            raise CareNoSolution("Hamiltonian has eigenvalues on the imaginary axis") from exc
        _, logdet = np.linalg.slogdet(Z)
        c = np.exp(logdet / n)
        if not np.isfinite(c) or c == 0:
            c = 1.0
        Z_next = 0.5 * (Z / c + c * Z_inv)
        if not np.all(np.isfinite(Z_next)):
            raise CareNoSolution("sign iteration diverged")
        step = np.linalg.norm(Z_next - Z, 1)
        Z = Z_next
        if step <= _SIGN_STEP_TOL * np.linalg.norm(Z, 1):
            return Z, it
    raise CareNoSolution(f"sign iteration did not converge in {max_iter} iterations")


def solve_care(A, B, Q, R, tol=CARE_TOL, max_iter=CARE_MAX_ITER):
    """Stabilizing PSD solution of ``A^T P + P A - P B R^{-1} B^T P + Q = 0``.

    Raises
    ------
    CareNoSolution
        The sign iteration fails or the extracted solution does not stabilize
        ``A - B R^{-1} B^T P``; downstream this reads as "not stabilizable".
    NumericalFailure
        The final residual exceeds ``tol``.
    IndefiniteSolution
        ``P`` has an eigenvalue below ``-1e-6 * ||P||``.
    """
    A = _as_matrix(A, "A", square=True)
    B = _as_matrix(B, "B")
    Q = _as_matrix(Q, "Q", square=True)
    R = _as_matrix(R, "R", square=True)
    p, q = B.shape
    if A.shape[0] != p or Q.shape[0] != p or R.shape[0] != q:
        raise InputError("inconsistent dimensions in solve_care")

    G = B @ _solve_r(R, B.T)
    G = 0.5 * (G + G.T)
    H = np.block([[A, -G], [-Q, -A.T]])
    S, iterations = _sign_iteration(H, max_iter)

    # Columns of [I; P] span the stable subspace, i.e. the null space of S + I.
    eye = np.eye(p)
    lhs = np.vstack([S[:p, p:], S[p:, p:] + eye])
    rhs = -np.vstack([S[:p, :p] + eye, S[p:, :p]])
    P, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    P = 0.5 * (P + P.T)
    if not np.all(np.isfinite(P)):
        raise CareNoSolution("stable subspace is not a graph over the state space")

    def residual(P):
        return operator_norm(A.T @ P + P @ A - P @ G @ P + Q)

    # One Newton step always; further ones only while above tol and improving.
    res = np.inf
    for step in range(_MAX_NEWTON_STEPS):
        closed = A - G @ P
        if spectral_abscissa(closed) >= 0:
            raise CareNoSolution("extracted solution is not stabilizing")
        P_new = solve_lyapunov(closed, Q + P @ G @ P)
        res_new = residual(P_new)
        if step > 0 and res_new >= res:
            break
        P, res = P_new, res_new
        if res <= tol:
            break

    if spectral_abscissa(A - G @ P) >= 0:
        raise CareNoSolution("extracted solution is not stabilizing")
    if res > tol:
        raise NumericalFailure(f"CARE residual {res:.3e} exceeds tolerance {tol:.1e}")
    scale = operator_norm(P)
    if np.min(np.linalg.eigvalsh(P)) < -1e-6 * scale:
        raise IndefiniteSolution("Riccati solution is indefinite")
    return CareSolution(P=P, residual_norm=res, iterations=iterations)


def lqr(A, B, Q, R, tol=CARE_TOL, max_iter=CARE_MAX_ITER):
    """Return ``(K, CareSolution)`` with ``K = -R^{-1} B^T P``."""
    sol = solve_care(A, B, Q, R, tol=tol, max_iter=max_iter)
    B = np.asarray(B, dtype=float).reshape(sol.P.shape[0], -1)
    K = -_solve_r(_as_matrix(R, "R", square=True), B.T @ sol.P)
    return K, sol


def lqr_gain(A, B, Q, R, tol=CARE_TOL, max_iter=CARE_MAX_ITER):
    """State feedback ``K = -R^{-1} B^T P`` from the stabilizing CARE solution."""
    return lqr(A, B, Q, R, tol=tol, max_iter=max_iter)[0]


# Pade coefficients and theta thresholds (Higham 2005) for degrees 3..13.
_PADE_COEFFS = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0,
         670442572800.0, 33522128640.0, 1323241920.0, 40840800.0, 960960.0,
         16380.0, 182.0, 1.0),
}
_PADE_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068e0,
    13: 5.371920351148152e0,
}


def _pade_uv(X, m):
    b = _PADE_COEFFS[m]
    eye = np.eye(X.shape[0])
    X2 = X @ X
    if m == 13:
        X4 = X2 @ X2
        X6 = X4 @ X2
        U = X @ (X6 @ (b[13] * X6 + b[11] * X4 + b[9] * X2)
                 + b[7] * X6 + b[5] * X4 + b[3] * X2 + b[1] * eye)
        V = (X6 @ (b[12] * X6 + b[10] * X4 + b[8] * X2)
             + b[6] * X6 + b[4] * X4 + b[2] * X2 + b[0] * eye)
        return U, V
    powers = [eye, X2]
    while len(powers) < (m + 1) // 2:
        powers.append(powers[-1] @ X2)
    U = X @ sum(b[2 * k + 1] * powers[k] for k in range(len(powers)))
    V = sum(b[2 * k] * powers[k] for k in range(len(powers)))
    return U, V


def matrix_exponential(M, t=1.0):
    """``expm(M * t)`` by scaling and squaring with a diagonal Pade approximant."""
    X = _as_matrix(M, square=True) * float(t)
    norm1 = np.linalg.norm(X, 1)
    if norm1 == 0:
        return np.eye(X.shape[0])
    squarings = 0
    for m in (3, 5, 7, 9):
        if norm1 <= _PADE_THETA[m]:
            break
    else:
        m = 13
        squarings = max(0, int(np.ceil(np.log2(norm1 / _PADE_THETA[13]))))
        X = X / 2.0 ** squarings
    U, V = _pade_uv(X, m)
    E = np.linalg.solve(V - U, V + U)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(squarings):
            E = E @ E
    if not np.all(np.isfinite(E)):
        raise NumericalFailure("matrix exponential overflowed")
    return E
