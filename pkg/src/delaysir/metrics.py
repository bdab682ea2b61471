"""Shape metrics for trajectories: peaks, oscillation count, plateau length."""

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

DEFAULT_PROMINENCE = 0.005
DEFAULT_SUSTAIN = 0.95

_COMPONENTS = {"S": 0, "I": 1, "R": 2}


@dataclass(frozen=True)
class TrajectoryMetrics:
    peak_value: float
    peak_time: float
    local_maxima_count: int
    sustain_duration: float
    first_peak_time: float


def _time_above(times, values, level):
    """Measure of ``{t : v(t) >= level}`` under linear interpolation."""
    t0, t1 = times[:-1], times[1:]
    v0, v1 = values[:-1], values[1:]
    dt = t1 - t0
    both = (v0 >= level) & (v1 >= level)
    total = dt[both].sum()
    cross = (v0 >= level) != (v1 >= level)
    if np.any(cross):
        a, b, w = v0[cross], v1[cross], dt[cross]
        frac = (level - a) / (b - a)
        above = np.where(a >= level, frac, 1.0 - frac)
        total += (above * w).sum()
    return float(total)


def series_metrics(times, values, prominence=DEFAULT_PROMINENCE, sustain=DEFAULT_SUSTAIN):
    """Metrics of a sampled series.

    Local maxima are interior points where the forward differences change
    sign from positive to negative (plateaus count once), keeping only those
    with topographic prominence of at least ``prominence`` times the global
    maximum; endpoints never count. ``sustain_duration`` is the time spent at
    or above ``sustain`` times the peak value.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size == 0 or times.shape != values.shape:
        raise ValueError("need a non-empty series with matching times")
    k = int(np.argmax(values))
    peak_value = float(values[k])
    floor = prominence * abs(peak_value)
    peaks, _ = find_peaks(values, prominence=floor if floor > 0 else None)
    if times.size == 1:
        duration = 0.0
    else:
        duration = _time_above(times, values, sustain * peak_value)
    first = float(times[peaks[0]]) if peaks.size else float(times[k])
    return TrajectoryMetrics(peak_value, float(times[k]), int(peaks.size), duration, first)


def detect_peaks(traj, component="I", prominence=DEFAULT_PROMINENCE, sustain=DEFAULT_SUSTAIN):
    """:func:`series_metrics` of one compartment of a trajectory."""
    values = traj.states[:, _COMPONENTS[component]]
    return series_metrics(traj.times, values, prominence, sustain)
