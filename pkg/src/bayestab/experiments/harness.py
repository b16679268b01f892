"""Monte Carlo sweeps over the stabilization procedure.

Every replicate draws its randomness from
``SeedSequence(base_seed, spawn_key=(grid_index, replicate_index))`` so the
aggregated numbers do not depend on execution order or worker count.
"""

import csv
import logging
import math
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import InputError
from ..sde_sim import DynamicsModel
from ..stabilizer import FailureReason, StabilizationConfig, run_algorithm1

log = logging.getLogger(__name__)

__all__ = [
    "CSV_COLUMNS",
    "SWEEP_VARIABLES",
    "SweepSpec",
    "SweepResult",
    "default_truth",
    "fig1_spec",
    "fig2_spec",
    "fig3_spec",
    "fig4_spec",
    "figure_spec",
    "run_sweep",
    "write_csv",
    "read_csv",
]

CSV_COLUMNS = (
    "sweep_id", "tau", "sigma_L", "sigma_eta", "n", "r", "replicates",
    "success_rate", "n_care_failed", "n_overflow", "n_unstable",
    "err_mean", "err_median", "err_q25", "err_q75", "abscissa_median", "seed",
)
_INT_COLUMNS = {"n", "replicates", "n_care_failed", "n_overflow", "n_unstable", "seed"}

# Name of each sweepable quantity -> StabilizationConfig attribute.
SWEEP_VARIABLES = {
    "tau": "tau",
    "sigma_L": "sigma_L",
    "sigma_eta": "sigma_eta",
    "n": "n_periods",
    "r": "r_weight",
}

FIG_TAUS = tuple(float(t) for t in range(2, 11))
FIG_SIGMA_LS = (0.5, 0.75, 1.0, 1.25)
FIG_SIGMA_ETAS = (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0)
FIG3_TAUS = (4.0, 6.0, 8.0, 10.0)
FIG4_RS = tuple(float(r) for r in np.logspace(-1, 1, 9))
N_VALUES = (1, 2, 3, 4)


def default_truth():
    """The 3-state, 2-input explosive benchmark system with ``C = I``."""
    A = [[-0.46, 0.06, 0.11],
         [-0.45, 0.27, 0.27],
         [0.20, 0.18, 0.19]]
    B = [[-0.40, 0.44],
         [0.08, -0.48],
         [-0.43, -0.49]]
    return DynamicsModel(A=A, B=B, C=np.eye(3))


def config_r(cfg):
    """Scalar ``r`` with ``R = r I``; NaN when ``R`` is not a multiple of identity."""
    R = cfg.r_weight
    if R is None:
        return 1.0
    R = np.asarray(R, dtype=float)
    if R.ndim == 0:
        return float(R)
    r = float(R[0, 0])
    return r if np.array_equal(R, r * np.eye(R.shape[0])) else math.nan


@dataclass
class SweepSpec:
    """A grid of configurations sharing one x-axis variable.

    ``panel`` names the quantity that separates sub-plots (or ``None``).
    """

    sweep_id: str
    variable: str
    grid: list
    replicates: int = 100
    base_seed: int = 0
    truth: DynamicsModel = field(default_factory=default_truth)
    panel: str = None

    def __post_init__(self):
        if not self.grid:
            raise InputError("sweep grid is empty")
        if self.replicates < 1:
            raise InputError("replicates must be at least 1")
        if self.variable not in SWEEP_VARIABLES:
            raise InputError(f"unknown sweep variable {self.variable!r}")


@dataclass
class SweepResult:
    sweep_id: str
    variable: str
    tau: float
    sigma_L: float
    sigma_eta: float
    n: int
    r: float
    replicates: int
    success_rate: float
    failure_breakdown: dict
    err_mean: float
    err_median: float
    err_q25: float
    err_q75: float
    abscissa_median: float
    abscissa_q25: float = math.nan
    abscissa_q75: float = math.nan
    sampled_abscissa_median: float = math.nan
    seed: int = 0
    wall_time: float = 0.0

    @property
    def n_success(self):
        return self.failure_breakdown.get(FailureReason.NONE.value, 0)

    def value(self, name):
        return {"n": self.n}.get(name, getattr(self, name))

    def to_row(self):
        b = self.failure_breakdown
        row = {
            "sweep_id": self.sweep_id, "tau": self.tau, "sigma_L": self.sigma_L,
            "sigma_eta": self.sigma_eta, "n": self.n, "r": self.r,
            "replicates": self.replicates, "success_rate": self.success_rate,
            "n_care_failed": b.get(FailureReason.CARE_FAILED.value, 0),
            "n_overflow": b.get(FailureReason.OVERFLOW.value, 0),
            "n_unstable": b.get(FailureReason.UNSTABLE_CLOSED_LOOP.value, 0),
            "err_mean": self.err_mean, "err_median": self.err_median,
            "err_q25": self.err_q25, "err_q75": self.err_q75,
            "abscissa_median": self.abscissa_median, "seed": self.seed,
        }
        return {k: (repr(float(v)) if isinstance(v, float) else str(v)) for k, v in row.items()}


def _stats(values):
    values = np.asarray([v for v in values if math.isfinite(v)], dtype=float)
    if values.size == 0:
        return math.nan, math.nan, math.nan, math.nan
    q25, med, q75 = np.quantile(values, [0.25, 0.5, 0.75])
    return float(values.mean()), float(med), float(q25), float(q75)


def _aggregate(spec, index, cfg, records, wall_time):
    reasons = Counter(rec[0] for rec in records)
    breakdown = {reason.value: reasons.get(reason.value, 0) for reason in FailureReason}
    err_mean, err_median, err_q25, err_q75 = _stats(rec[1] for rec in records)
    _, abs_median, abs_q25, abs_q75 = _stats(
        rec[2] for rec in records if rec[0] == FailureReason.NONE.value)
    _, sampled_median, _, _ = _stats(rec[3] for rec in records)
    return SweepResult(
        sweep_id=spec.sweep_id, variable=spec.variable, tau=float(cfg.tau),
        sigma_L=float(cfg.sigma_L), sigma_eta=float(cfg.sigma_eta), n=int(cfg.n_periods),
        r=config_r(cfg), replicates=spec.replicates,
        success_rate=breakdown[FailureReason.NONE.value] / spec.replicates,
        failure_breakdown=breakdown, err_mean=err_mean, err_median=err_median,
        err_q25=err_q25, err_q75=err_q75, abscissa_median=abs_median,
        abscissa_q25=abs_q25, abscissa_q75=abs_q75,
        sampled_abscissa_median=sampled_median, seed=spec.base_seed, wall_time=wall_time)


def _run_point(truth, cfg, base_seed, grid_index, replicates):
    records = []
    for rep in range(replicates):
        seq = np.random.SeedSequence(base_seed, spawn_key=(grid_index, rep))
        out = run_algorithm1(truth, cfg, seq)
        records.append((out.failure_reason.value, out.estimation_error,
                        out.closed_loop_abscissa, out.sampled_abscissa))
    return records


def _run_point_timed(args):
    start = time.perf_counter()
    records = _run_point(*args)
    return records, time.perf_counter() - start


def run_sweep(spec, parallelism=1):
    """Run every grid point of ``spec`` and return one ``SweepResult`` each."""
    truth = spec.truth
    for cfg in spec.grid:
        cfg.validate(truth.p, truth.q)
    tasks = [(truth, cfg, spec.base_seed, i, spec.replicates) for i, cfg in enumerate(spec.grid)]
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            outputs = list(pool.map(_run_point_timed, tasks))
    else:
        outputs = [_run_point_timed(t) for t in tasks]
    results = []
    for (_, cfg, _, i, _), (records, wall) in zip(tasks, outputs):
        res = _aggregate(spec, i, cfg, records, wall)
        log.info("%s[%d] %s=%s n=%d success=%.2f (%.1fs)", spec.sweep_id, i, spec.variable,
                 res.value(spec.variable), res.n, res.success_rate, wall)
        results.append(res)
    return results


def _grid(base, **axes):
    """Cartesian product of ``axes`` (attribute -> values) applied to ``base``."""
    configs = [base]
    for attr, values in axes.items():
        configs = [replace(cfg, **{attr: v}) for cfg in configs for v in values]
    return configs


def _base(replicates, base_seed, dt):
    return StabilizationConfig(sigma_eta=1.0, dt=dt), dict(replicates=replicates,
                                                          base_seed=base_seed)


def fig1_spec(replicates=100, base_seed=0, dt=1e-3):
    """Estimation error vs ``tau``: panels over sigma_L, series over n."""
    base, kw = _base(replicates, base_seed, dt)
    grid = _grid(base, sigma_L=FIG_SIGMA_LS, n_periods=N_VALUES, tau=FIG_TAUS)
    return SweepSpec("fig1", "tau", grid, panel="sigma_L", **kw)


def fig2_spec(replicates=100, base_seed=0, dt=1e-3):
    """Success rate vs ``tau``: same grid as fig1."""
    spec = fig1_spec(replicates, base_seed, dt)
    spec.sweep_id = "fig2"
    return spec


def fig3_spec(replicates=100, base_seed=0, dt=1e-3):
    """Success rate vs sigma_eta with sigma_L = 1: panels over tau, series over n."""
    base, kw = _base(replicates, base_seed, dt)
    grid = _grid(replace(base, sigma_L=1.0), tau=FIG3_TAUS, n_periods=N_VALUES,
                 sigma_eta=FIG_SIGMA_ETAS)
    return SweepSpec("fig3", "sigma_eta", grid, panel="tau", **kw)


def fig4_spec(replicates=100, base_seed=0, dt=1e-3):
    """Success rate and sampled closed-loop abscissa vs ``r`` (``R = r I``)."""
    base, kw = _base(replicates, base_seed, dt)
    base = replace(base, sigma_L=1.0, sigma_eta=1.0, tau=10.0, n_periods=4)
    grid = [base.with_r(r) for r in FIG4_RS]
    return SweepSpec("fig4", "r", grid, **kw)


_FIGURES = {1: fig1_spec, 2: fig2_spec, 3: fig3_spec, 4: fig4_spec}


def figure_spec(fig, **kwargs):
    try:
        return _FIGURES[int(fig)](**kwargs)
    except KeyError:
        raise InputError(f"unknown figure {fig!r}; expected one of 1-4") from None


def write_csv(results, path):
    """One row per grid point, fixed header, floats written with ``repr``."""
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, quoting=csv.QUOTE_MINIMAL)
            writer.writeheader()
            for res in results:
                writer.writerow(res.to_row())
    except OSError as exc:
        raise OSError(f"cannot write sweep CSV to {path}: {exc}") from exc


def read_csv(path):
    """Parse a sweep CSV back into a list of ``{column: value}`` dicts."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise InputError(f"{path}: unexpected CSV header {reader.fieldnames}")
        for raw in reader:
            row = {}
            for key, value in raw.items():
                if key == "sweep_id":
                    row[key] = value
                elif key in _INT_COLUMNS:
                    row[key] = int(value)
                else:
                    row[key] = float(value)
            rows.append(row)
    return rows
