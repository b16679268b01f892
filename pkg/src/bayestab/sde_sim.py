"""Euler-Maruyama simulation of ``dx = (A x + B u) dt + C dW``.

The input is a period-switched linear feedback plus a piecewise-constant
Gaussian dither.  The horizon and the dither piece length must be integer
multiples of the integration step.  Grid point ``k`` of ``N`` uses feedback
``(k * n) // N``, i.e. the period whose half-open interval contains ``t_k``;
when ``tau / n`` is off the grid a switch takes effect at the first grid
point after the boundary.
"""

import csv
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ConfigError, InputError

__all__ = [
    "DynamicsModel",
    "DitherSignal",
    "PolicySchedule",
    "Trajectory",
    "make_dither",
    "simulate",
    "grid_steps",
    "write_trajectory_csv",
]

DEFAULT_DT = 1e-3
DEFAULT_OVERFLOW_BOUND = 1e8


def _finite_matrix(M, name):
    M = np.array(M, dtype=float, ndmin=2)
    if M.ndim != 2:
        raise InputError(f"{name} must be 2-D, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InputError(f"{name} has non-finite entries")
    M.setflags(write=False)
    return M


@dataclass(frozen=True)
class DynamicsModel:
    """True or estimated linear system: drift ``A`` (p x p), input ``B`` (p x q),
    noise scaling ``C`` (p x d)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray = None

    def __post_init__(self):
        A = _finite_matrix(self.A, "A")
        B = _finite_matrix(self.B, "B")
        p = A.shape[0]
        C = np.eye(p) if self.C is None else self.C
        C = _finite_matrix(C, "C")
        if A.shape != (p, p) or B.shape[0] != p or C.shape[0] != p:
            raise InputError(
                f"inconsistent model dimensions A{A.shape} B{B.shape} C{C.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def p(self):
        return self.A.shape[0]

    @property
    def q(self):
        return self.B.shape[1]

    @property
    def d(self):
        return self.C.shape[1]


@dataclass(frozen=True)
class DitherSignal:
    """Piecewise-constant excitation: ``values[k]`` holds on ``[k eps, (k+1) eps)``."""

    epsilon: float
    values: np.ndarray
    horizon: float

    @property
    def n_pieces(self):
        return self.values.shape[0]

    def at(self, t):
        k = min(int(math.floor(t / self.epsilon)), self.n_pieces - 1)
        return self.values[k]


@dataclass(frozen=True)
class PolicySchedule:
    """Feedback ``feedbacks[j]`` is applied on the j-th period of length
    ``period_length``; ``dither_scale * dither`` is added on top."""

    feedbacks: np.ndarray
    period_length: float
    dither_scale: float = 0.0
    dither: DitherSignal = None

    def __post_init__(self):
        K = np.array(self.feedbacks, dtype=float)
        if K.ndim == 2:
            K = K[None]
        if K.ndim != 3 or K.shape[0] < 1:
            raise InputError("feedbacks must be a non-empty stack of q x p matrices")
        if self.dither_scale < 0:
            raise InputError("dither_scale must be non-negative")
        K.setflags(write=False)
        object.__setattr__(self, "feedbacks", K)

    @property
    def n_periods(self):
        return self.feedbacks.shape[0]


@dataclass(frozen=True)
class Trajectory:
    """States on the grid ``0, dt, ..., tau`` and left-point inputs.

    ``inputs[k]`` is the input held on ``[t_k, t_{k+1})``, so there is one
    input fewer than states.  An overflowed run ends at the first state whose
    norm exceeded the bound.
    """

    dt: float
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    overflowed: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_steps(self):
        return self.inputs.shape[0]

    @property
    def observations(self):
        """Left-point observation vectors ``z_k = [x_k; u_k]``, one row per step."""
        return np.hstack([self.states[:-1], self.inputs])


def grid_steps(length, dt, what="length"):
    """Number of ``dt`` steps in ``length``; raise if not an integer multiple."""
    if dt <= 0:
        raise ConfigError("dt must be positive")
    ratio = length / dt
    steps = int(round(ratio))
    if abs(ratio - steps) > 1e-9 * max(1.0, abs(ratio)):
        raise ConfigError(f"{what}={length!r} is not an integer multiple of dt={dt!r}")
    return steps


def make_dither(epsilon, horizon, rng, q=1):
    """Draw ``ceil(horizon / epsilon)`` i.i.d. standard normal q-vectors."""
    if epsilon <= 0:
        raise InputError("epsilon must be positive")
    ratio = horizon / epsilon
    n_pieces = int(math.ceil(ratio - 1e-9 * max(1.0, ratio)))
    values = rng.standard_normal((max(n_pieces, 0), q))
    values.setflags(write=False)
    return DitherSignal(epsilon=float(epsilon), values=values, horizon=float(horizon))


@numba.njit(cache=True)
def _euler_maruyama(A, B, C, K, dither, steps_per_piece,
                    increments, x0, dt, bound):
    p = A.shape[0]
    q = B.shape[1]
    d = C.shape[1]
    n_steps = increments.shape[0]
    n_periods = K.shape[0]
    n_pieces = dither.shape[0]
    states = np.empty((n_steps + 1, p))
    inputs = np.empty((n_steps, q))
    x = x0.copy()
    u = np.empty(q)
    norm2 = 0.0
    for i in range(p):
        states[0, i] = x[i]
        norm2 += x[i] * x[i]
    if not norm2 <= bound * bound:
        return states, inputs, 0
    for k in range(n_steps):
        j = min((k * n_periods) // n_steps, n_periods - 1)
        m = min(k // steps_per_piece, n_pieces - 1)
        for a in range(q):
            s = 0.0
            for b in range(p):
                s += K[j, a, b] * x[b]
            if n_pieces > 0:
                s += dither[m, a]
            u[a] = s
            inputs[k, a] = s
        norm2 = 0.0
        for i in range(p):
            drift = 0.0
            for b in range(p):
                drift += A[i, b] * x[b]
            for a in range(q):
                drift += B[i, a] * u[a]
            noise = 0.0
            for c in range(d):
                noise += C[i, c] * increments[k, c]
            states[k + 1, i] = x[i] + drift * dt + noise
            norm2 += states[k + 1, i] * states[k + 1, i]
        for i in range(p):
            x[i] = states[k + 1, i]
        # written so that NaN also trips the bound
        if not norm2 <= bound * bound:
            return states, inputs, k + 1
    return states, inputs, n_steps


def simulate(model, schedule, dt=DEFAULT_DT, tau=1.0, x0=None, rng=None,
             overflow_bound=DEFAULT_OVERFLOW_BOUND):
    """Integrate the controlled SDE on ``[0, tau]`` with Euler-Maruyama.

    The input at grid index ``k`` is ``K_j x_k + sigma * eta(k dt)`` where ``j``
    is the period containing ``k dt``.  Brownian increments are
    ``sqrt(dt)``-scaled standard normals drawn from ``rng`` as one
    ``(n_steps, d)`` block, so a given seed always yields the same path.

    If the state norm exceeds ``overflow_bound`` the run stops there and the
    returned trajectory has ``overflowed=True``.
    """
    if rng is None:
        raise InputError("simulate needs an explicit random generator")
    if tau < 0:
        raise ConfigError("tau must be non-negative")
    p, q = model.p, model.q
    K = schedule.feedbacks
    if K.shape[1:] != (q, p):
        raise InputError(f"feedbacks must be {q} x {p}, got {K.shape[1:]}")
    n = schedule.n_periods
    n_steps = grid_steps(tau, dt, "tau")
    if n_steps and abs(schedule.period_length * n - tau) > 1e-9 * max(1.0, tau):
        raise ConfigError("period_length * n_periods must equal tau")

    dither = schedule.dither
    if dither is None or schedule.dither_scale == 0:
        dither_values = np.zeros((0, q))
        steps_per_piece = 1
    else:
        if dither.values.shape[1] != q:
            raise InputError("dither dimension does not match the input dimension")
        steps_per_piece = grid_steps(dither.epsilon, dt, "epsilon")
        if n_steps and dither.n_pieces * steps_per_piece < n_steps:
            raise ConfigError("dither signal is shorter than the horizon")
        dither_values = schedule.dither_scale * dither.values

    x0 = np.zeros(p) if x0 is None else np.asarray(x0, dtype=float).reshape(p)
    increments = math.sqrt(dt) * rng.standard_normal((n_steps, model.d))
    states, inputs, last = _euler_maruyama(
        model.A, model.B, model.C, np.ascontiguousarray(K), np.ascontiguousarray(dither_values), steps_per_piece, increments, x0,
        float(dt), float(overflow_bound))
    overflowed = last < n_steps or not np.all(np.isfinite(states[last]))
    if overflowed:
        states = states[:last + 1]
        inputs = inputs[:last]
    times = dt * np.arange(states.shape[0])
    return Trajectory(dt=float(dt), times=times, states=states, inputs=inputs,
                      overflowed=bool(overflowed))


def write_trajectory_csv(traj, path_or_file):
    """Columnar CSV ``t, x1..xp, u1..uq``; the last row has empty inputs."""
    p = traj.states.shape[1]
    q = traj.inputs.shape[1] if traj.inputs.ndim == 2 else 0
    header = ["t"] + [f"x{i + 1}" for i in range(p)] + [f"u{i + 1}" for i in range(q)]

    def emit(fh):
        writer = csv.writer(fh)
        writer.writerow(header)
        for k, t in enumerate(traj.times):
            row = [repr(float(t))] + [repr(float(v)) for v in traj.states[k]]
            if k < traj.n_steps:
                row += [repr(float(v)) for v in traj.inputs[k]]
            else:
                row += [""] * q
            writer.writerow(row)

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            emit(fh)
