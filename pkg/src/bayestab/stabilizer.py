"""Learning-to-stabilize loop and its success/accuracy diagnostics.

``run_algorithm1`` drives the plant for ``tau`` time units with random
feedbacks (one per period) plus dither, forms the Gaussian posterior from the
trajectory, draws one model from it and returns the LQR gain designed for
that draw.  Success is judged on the *true* closed loop.
"""

import enum
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .bayes_learn import build_posterior, estimation_error, sample_parameters
from .errors import ConfigError, InputError, NumericalFailure
from .linalg_control import lqr, lqr_gain, operator_norm, spectral_abscissa
from .sde_sim import (
    DEFAULT_DT,
    DEFAULT_OVERFLOW_BOUND,
    PolicySchedule,
    grid_steps,
    make_dither,
    simulate,
)

__all__ = [
    "FailureReason",
    "StabilizationConfig",
    "StabilizationOutcome",
    "Theorem2Diagnostic",
    "sample_feedback",
    "run_algorithm1",
    "is_stabilizing",
    "theorem2_check",
    "make_streams",
]


class FailureReason(str, enum.Enum):
    NONE = "none"
    CARE_FAILED = "care_failed"
    OVERFLOW = "overflow"
    UNSTABLE_CLOSED_LOOP = "unstable_closed_loop"


@dataclass(frozen=True)
class StabilizationConfig:
    tau: float = 8.0
    n_periods: int = 4
    sigma_L: float = 1.0
    sigma_eta: float = 1.0
    epsilon: float = 0.2
    dt: float = DEFAULT_DT
    q_weight: np.ndarray = None
    r_weight: np.ndarray = None
    seed: int = 0
    overflow_bound: float = DEFAULT_OVERFLOW_BOUND

    def weights(self, p, q):
        """``(Q, R)`` with identity defaults; a scalar ``r_weight`` means ``r * I``."""
        Q = np.eye(p) if self.q_weight is None else _weight(self.q_weight, p, "q_weight")
        R = np.eye(q) if self.r_weight is None else _weight(self.r_weight, q, "r_weight")
        return Q, R

    def validate(self, p, q):
        if self.tau < 0:
            raise ConfigError("tau must be non-negative")
        if self.n_periods < 1:
            raise ConfigError("n_periods must be at least 1")
        if self.sigma_L < 0 or self.sigma_eta < 0:
            raise ConfigError("sigma_L and sigma_eta must be non-negative")
        if self.epsilon <= 0 or self.dt <= 0:
            raise ConfigError("epsilon and dt must be positive")
        if self.tau > 0:
            if not self.epsilon < self.tau / (q * self.n_periods):
                raise ConfigError(
                    f"epsilon={self.epsilon} must be below tau/(q n)="
                    f"{self.tau / (q * self.n_periods):.6g}")
            grid_steps(self.tau, self.dt, "tau")
            grid_steps(self.epsilon, self.dt, "epsilon")
        Q, R = self.weights(p, q)
        for name, W in (("q_weight", Q), ("r_weight", R)):
            if not np.allclose(W, W.T) or np.min(np.linalg.eigvalsh(W)) <= 0:
                raise ConfigError(f"{name} must be symmetric positive definite")
        return self

    def with_r(self, r):
        return replace(self, r_weight=float(r))


def _weight(W, size, name):
    W = np.asarray(W, dtype=float)
    if W.ndim == 0:
        return float(W) * np.eye(size)
    if W.shape != (size, size):
        raise ConfigError(f"{name} must be {size} x {size}, got {W.shape}")
    return W


@dataclass(frozen=True)
class StabilizationOutcome:
    sample: object
    gain: np.ndarray
    success: bool
    failure_reason: FailureReason
    estimation_error: float
    closed_loop_abscissa: float
    sampled_abscissa: float
    trajectory_summary: tuple
    precision_trace: float = math.nan
    posterior: object = field(default=None, compare=False, repr=False)

    def to_dict(self):
        def num(v):
            return None if v is None or not math.isfinite(v) else float(v)

        max_norm, final_norm = self.trajectory_summary
        return {
            "success": bool(self.success),
            "failure_reason": self.failure_reason.value,
            "estimation_error": num(self.estimation_error),
            "closed_loop_abscissa": num(self.closed_loop_abscissa),
            "sampled_abscissa": num(self.sampled_abscissa),
            "gain": None if self.gain is None else self.gain.tolist(),
            "sample": None if self.sample is None else self.sample.to_dict(),
            "trajectory_summary": {"max_norm": num(max_norm), "final_norm": num(final_norm)},
            "precision_trace": num(self.precision_trace),
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def make_streams(rng):
    """Four independent generators (feedbacks, dither, noise, posterior draw).

    Separate streams keep a longer run's random inputs a prefix-extension of a
    shorter run with the same seed.
    """
    if isinstance(rng, np.random.Generator):
        return rng, rng, rng, rng
    seq = rng if isinstance(rng, np.random.SeedSequence) else np.random.SeedSequence(rng)
    return tuple(np.random.Generator(np.random.Philox(s)) for s in seq.spawn(4))


def sample_feedback(sigma_L, p, q, rng):
    """``q x p`` matrix with i.i.d. ``N(0, sigma_L^2)`` entries."""
    if sigma_L < 0:
        raise InputError("sigma_L must be non-negative")
    return sigma_L * rng.standard_normal((q, p))


def is_stabilizing(truth, K):
    K = np.asarray(K, dtype=float)
    if K.shape != (truth.q, truth.p):
        raise InputError(f"gain must be {truth.q} x {truth.p}, got {K.shape}")
    alpha = spectral_abscissa(truth.A + truth.B @ K)
    return alpha < 0, alpha


def run_algorithm1(truth, cfg, rng=None, sampler=None):
    """One pass of the Bayesian stabilization procedure.

    ``rng`` may be a seed, a ``SeedSequence`` or a ``Generator``; ``None``
    uses ``cfg.seed``.  ``sampler(posterior, rng)`` replaces the posterior
    draw, which lets tests plug in the true parameters.

    CARE failures and overflowed trajectories come back as failed outcomes,
    never as exceptions.
    """
    p, q = truth.p, truth.q
    cfg.validate(p, q)
    Q, R = cfg.weights(p, q)
    g_feedback, g_dither, g_noise, g_sample = make_streams(cfg.seed if rng is None else rng)

    feedbacks = np.stack([sample_feedback(cfg.sigma_L, p, q, g_feedback)
                          for _ in range(cfg.n_periods)])
    dither = make_dither(cfg.epsilon, cfg.tau, g_dither, q=q)
    schedule = PolicySchedule(feedbacks=feedbacks, period_length=cfg.tau / cfg.n_periods,
                              dither_scale=cfg.sigma_eta, dither=dither)
    traj = simulate(truth, schedule, dt=cfg.dt, tau=cfg.tau, rng=g_noise,
                    overflow_bound=cfg.overflow_bound)
    norms = np.linalg.norm(traj.states, axis=1)
    summary = (float(norms.max()), float(norms[-1]))

    if traj.overflowed:
        return StabilizationOutcome(
            sample=None, gain=None, success=False, failure_reason=FailureReason.OVERFLOW,
            estimation_error=math.nan, closed_loop_abscissa=math.nan,
            sampled_abscissa=math.nan, trajectory_summary=summary)

    post = build_posterior(traj)
    sample = (sampler or sample_parameters)(post, g_sample)
    err = estimation_error(sample, truth)
    common = dict(sample=sample, estimation_error=err, trajectory_summary=summary,
                  precision_trace=float(np.trace(post.precision)), posterior=post)
    try:
        gain, _ = lqr(sample.A_hat, sample.B_hat, Q, R)
    except NumericalFailure:
        return StabilizationOutcome(
            gain=None, success=False, failure_reason=FailureReason.CARE_FAILED,
            closed_loop_abscissa=math.nan, sampled_abscissa=math.nan, **common)

    stable, alpha = is_stabilizing(truth, gain)
    return StabilizationOutcome(
        gain=gain, success=bool(stable),
        failure_reason=FailureReason.NONE if stable else FailureReason.UNSTABLE_CLOSED_LOOP,
        closed_loop_abscissa=alpha,
        sampled_abscissa=spectral_abscissa(sample.A_hat + sample.B_hat @ gain),
        **common)


@dataclass(frozen=True)
class Theorem2Diagnostic:
    """Sufficient-accuracy margins around the true optimal closed loop.

    ``mu`` is the spectral abscissa of ``A + B K(A, B)``; the accuracy
    conditions are ``||A_hat - A|| <= -c mu / sqrt(p)`` and
    ``||B_hat - B|| <= -c mu / (sqrt(p) ||K(A, B)||)``.
    """

    c: float
    mu: float
    margin_hypothesis: bool
    error_A: float
    bound_A: float
    error_B: float
    bound_B: float
    gain_norm: float

    @property
    def condition_A(self):
        return self.error_A <= self.bound_A

    @property
    def condition_B(self):
        return self.error_B <= self.bound_B

    def to_dict(self):
        return {
            "c": self.c, "mu": self.mu, "margin_hypothesis": self.margin_hypothesis,
            "error_A": self.error_A, "bound_A": self.bound_A, "condition_A": self.condition_A,
            "error_B": self.error_B, "bound_B": self.bound_B, "condition_B": self.condition_B,
            "gain_norm": self.gain_norm,
        }


def theorem2_check(truth, sample, c=1.0, Q=None, R=None):
    if c <= 0:
        raise InputError("c must be positive")
    p, q = truth.p, truth.q
    Q = np.eye(p) if Q is None else np.asarray(Q, dtype=float)
    R = np.eye(q) if R is None else np.asarray(R, dtype=float)
    K_star = lqr_gain(truth.A, truth.B, Q, R)
    mu = spectral_abscissa(truth.A + truth.B @ K_star)
    k_norm = operator_norm(K_star)
    bound_A = -c * mu / math.sqrt(p)
    return Theorem2Diagnostic(
        c=float(c), mu=mu, margin_hypothesis=mu <= -1,
        error_A=operator_norm(sample.A_hat - truth.A), bound_A=bound_A,
        error_B=operator_norm(sample.B_hat - truth.B), bound_B=bound_A / k_norm,
        gain_norm=k_norm)
