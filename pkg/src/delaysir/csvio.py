"""CSV output in a fixed, round-trippable format.

Floats are written with ``repr`` (shortest string that parses back to the
same double); every file has a header row and ends with a newline.
"""

import csv

import numpy as np

from .dde_core import Trajectory

TRAJECTORY_HEADER = ("t", "S", "I", "R")
METRICS_HEADER = ("param_value", "peak_value", "peak_time", "local_maxima_count", "sustain_duration")
STEADY_HEADER = ("kind", "S_star", "I_star", "R_star", "endemic_exists")
ENSEMBLE_HEADER = ("t", "S_mean", "I_mean", "R_mean", "S_se", "I_se", "R_se")
COMPARE_HEADER = ("t", "I_mean", "I_se", "I_dde", "z")
DEXP_HEADER = ("t", "phi", "psi", "rho")


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ""
    return str(value)


def write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow([_cell(v) for v in row])


def read_table(path):
    """Header and rows of a CSV file, cells as strings."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def read_columns(path):
    """Numeric CSV as a dict of float arrays keyed by header name."""
    header, rows = read_table(path)
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return {name: data[:, j] for j, name in enumerate(header)}


def write_trajectory(path, traj):
    rows = np.column_stack([traj.times, traj.states])
    write_rows(path, TRAJECTORY_HEADER, rows.tolist())


def read_trajectory(path):
    """Times and states from a trajectory CSV (derivatives are not stored, so zeros)."""
    cols = read_columns(path)
    states = np.column_stack([cols["S"], cols["I"], cols["R"]])
    return Trajectory(cols["t"], states, np.zeros_like(states))


def write_metrics(path, entries):
    """``entries`` is a sequence of ``(param_value, TrajectoryMetrics)``."""
    rows = [
        (v, m.peak_value, m.peak_time, m.local_maxima_count, m.sustain_duration)
        for v, m in entries
    ]
    write_rows(path, METRICS_HEADER, rows)


def write_steady(path, points, exists):
    rows = [
        (pt.kind.value, pt.s_star, pt.i_star, pt.r_star, exists)
        for pt in points
    ]
    write_rows(path, STEADY_HEADER, rows)


def write_ensemble(path, stats):
    rows = np.column_stack([stats.times, stats.mean, stats.stderr])
    write_rows(path, ENSEMBLE_HEADER, rows.tolist())


def write_comparison(path, times, mean_i, se_i, dde_i):
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se_i > 0, (mean_i - dde_i) / se_i, np.nan)
    rows = np.column_stack([times, mean_i, se_i, dde_i, z])
    write_rows(path, COMPARE_HEADER, rows.tolist())


def write_dexp(path, t, phi, psi, rho):
    write_rows(path, DEXP_HEADER, np.column_stack([t, phi, psi, rho]).tolist())
