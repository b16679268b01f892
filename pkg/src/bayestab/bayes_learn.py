"""Gaussian posterior over the stacked dynamics ``theta = [A, B]^T``.

With observations ``z = [x; u]`` the belief after a trajectory is

    V  = I + sum_k z_k z_k^T dt
    mu = V^{-1} sum_k z_k (x_{k+1} - x_k)^T

and every column of ``theta`` is independently ``N(mu[:, i], V^{-1})``.  Both
sums use the left grid point, the Ito-consistent discretization.
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .errors import InputError, NumericalFailure
from .linalg_control import operator_norm

__all__ = [
    "Posterior",
    "ParameterSample",
    "accumulate_precision",
    "accumulate_mean",
    "build_posterior",
    "sample_parameters",
    "estimation_error",
    "stack_parameters",
]


@dataclass(frozen=True)
class ParameterSample:
    A_hat: np.ndarray
    B_hat: np.ndarray

    @property
    def theta(self):
        """Stacked ``[A_hat, B_hat]^T`` of shape ``(p + q, p)``."""
        return stack_parameters(self.A_hat, self.B_hat)

    def to_dict(self):
        return {"A_hat": self.A_hat.tolist(), "B_hat": self.B_hat.tolist()}


@dataclass(frozen=True)
class Posterior:
    """Matrix-normal belief: columns of ``theta`` ~ ``N(mean[:, i], precision^{-1})``."""

    mean: np.ndarray
    precision: np.ndarray
    precision_chol: np.ndarray
    p: int
    tau: float = 0.0

    @property
    def q(self):
        return self.mean.shape[0] - self.p

    @property
    def covariance(self):
        """Shared column covariance ``V^{-1}``."""
        eye = np.eye(self.precision.shape[0])
        L_inv = solve_triangular(self.precision_chol, eye, lower=True)
        return L_inv.T @ L_inv

    def to_dict(self):
        return {
            "p": self.p,
            "q": self.q,
            "tau": self.tau,
            "mean": self.mean.tolist(),
            "precision": self.precision.tolist(),
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def stack_parameters(A, B):
    return np.vstack([np.asarray(A, dtype=float).T, np.asarray(B, dtype=float).T])


def _check_usable(traj):
    if traj.overflowed:
        raise InputError("cannot learn from an overflowed trajectory")


def accumulate_precision(traj):
    """``I + dt * sum_k z_k z_k^T`` over the left grid points."""
    _check_usable(traj)
    Z = traj.observations
    V = np.eye(Z.shape[1]) + traj.dt * (Z.T @ Z)
    return 0.5 * (V + V.T)


def _cross_moment(traj):
    Z = traj.observations
    return Z.T @ np.diff(traj.states, axis=0)


def accumulate_mean(traj, V):
    """``V^{-1} sum_k z_k (x_{k+1} - x_k)^T``."""
    _check_usable(traj)
    S = _cross_moment(traj)
    try:
        return np.linalg.solve(V, S)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("precision matrix is singular") from exc


def build_posterior(traj):
    V = accumulate_precision(traj)
    mean = accumulate_mean(traj, V)
    try:
        L = cholesky(V, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("precision matrix is not positive definite") from exc
    p = traj.states.shape[1]
    for arr in (mean, V, L):
        arr.setflags(write=False)
    return Posterior(mean=mean, precision=V, precision_chol=L, p=p,
                     tau=float(traj.dt * traj.n_steps))


def sample_parameters(post, rng):
    """Draw ``theta = mean + L^{-T} W`` with ``W`` standard normal, ``V = L L^T``."""
    W = rng.standard_normal(post.mean.shape)
    theta = post.mean + solve_triangular(post.precision_chol, W, lower=True, trans="T")
    p = post.p
    return ParameterSample(A_hat=theta[:p].T.copy(), B_hat=theta[p:].T.copy())


def estimation_error(sample, truth):
    """Operator norm of ``[A_hat, B_hat]^T - [A, B]^T``."""
    if sample.A_hat.shape != truth.A.shape or sample.B_hat.shape != truth.B.shape:
        raise InputError("sample and truth dimensions differ")
    return operator_norm(sample.theta - stack_parameters(truth.A, truth.B))
