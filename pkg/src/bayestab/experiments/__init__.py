"""Monte Carlo sweeps, result files, figures and the command line."""

from .harness import (
    CSV_COLUMNS,
    SweepResult,
    SweepSpec,
    default_truth,
    fig1_spec,
    fig2_spec,
    fig3_spec,
    fig4_spec,
    read_csv,
    run_sweep,
    write_csv,
)
from .plotting import render_plot
