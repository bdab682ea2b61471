"""Fixed-step RK4 for three-component systems with two constant delays.

Only the second component (the infective count ``I``) is read with delay.
The history convention is ``I(t) = 0`` for ``t < 0`` with a finite jump to
the initial value at ``t = 0``. That jump makes the solution non-smooth at
the propagated breakpoints ``a*tau1 + b*tau2``; each grid step is split at
any breakpoint it contains so that every RK4 substep integrates a smooth
right-hand side. Delayed reads come from a cubic Hermite dense output of the
completed substeps, kept in a ring buffer one maximum delay deep.

Model right-hand sides are numba-compiled functions with the signature::

    f(t, y, i_tau1, i_tau2, params, out)

writing ``dy/dt`` into ``out`` (all arrays of float64).
"""

import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from numba import njit

from .errors import DomainError, IntegrationError, StepSizeError

NEGATIVE_FLOOR = -1e-9
BREAKPOINT_ORDER = 5

# two times closer than this fraction of h are treated as equal
_SNAP = 1e-7

_STATUS_NONFINITE = 1
_STATUS_NEGATIVE = 2


@dataclass(frozen=True)
class EpidemicState:
    s: float
    i: float
    r: float

    def as_array(self):
        return np.array([self.s, self.i, self.r], dtype=float)

    @classmethod
    def from_array(cls, values):
        s, i, r = (float(v) for v in values)
        return cls(s, i, r)


@dataclass(frozen=True)
class StepConfig:
    """Step size ``h`` and horizon ``t_end``.

    ``record_every`` thins the stored trajectory to every n-th grid node,
    which keeps long horizons within memory. The history used for delayed
    reads is unaffected.
    """

    h: float
    t_end: float
    record_every: int = 1


@dataclass(frozen=True)
class DelayedRHS:
    """A compiled right-hand side together with its parameter vector."""

    func: Any
    params: np.ndarray


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Solution on an evenly spaced grid with derivatives for Hermite sampling."""

    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        states = np.array(self.states, dtype=float).reshape(-1, 3)
        derivs = np.array(self.derivs, dtype=float).reshape(-1, 3)
        if not (times.ndim == 1 and len(times) == len(states) == len(derivs)):
            raise ValueError("times, states and derivs must align")
        if len(times) > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        for arr in (times, states, derivs):
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "derivs", derivs)

    def __len__(self):
        return len(self.times)

    @property
    def S(self):
        return self.states[:, 0]

    @property
    def I(self):  # noqa: E743
        return self.states[:, 1]

    @property
    def R(self):
        return self.states[:, 2]

    @property
    def total(self):
        return self.states.sum(axis=1)

    def state(self, k):
        return EpidemicState.from_array(self.states[k])


@njit(cache=True)
def _hermite(s, t0, t1, y0, y1, f0, f1):
    h = t1 - t0
    th = (s - t0) / h
    th2 = th * th
    th3 = th2 * th
    return (
        (2.0 * th3 - 3.0 * th2 + 1.0) * y0
        + (th3 - 2.0 * th2 + th) * h * f0
        + (-2.0 * th3 + 3.0 * th2) * y1
        + (th3 - th2) * h * f1
    )


@njit(cache=True)
def _delayed_i(s, side, i0, cursor, nseg, ht0, ht1, hy0, hy1, hf0, hf1, tol):
    """History value of I at ``s``; returns ``(value, cursor)``.

    ``side`` breaks ties at segment boundaries: +1 takes the segment to the
    right of ``s``, -1 the one to the left. At ``s = 0`` this selects between
    the zero pre-history and the initial value.
    """
    if s < -tol:
        return 0.0, cursor
    if s <= tol:
        if side < 0:
            return 0.0, cursor
        return i0, cursor
    cap = ht0.size
    oldest = max(0, nseg - cap)
    m = min(max(cursor, oldest), nseg - 1)
    while m < nseg - 1:
        end = ht1[m % cap]
        if s > end + tol or (side > 0 and s >= end - tol):
            m += 1
        else:
            break
    while m > oldest:
        start = ht0[m % cap]
        if s < start - tol or (side < 0 and s <= start + tol):
            m -= 1
        else:
            break
    j = m % cap
    if abs(s - ht0[j]) <= tol:
        return hy0[j], m
    if abs(s - ht1[j]) <= tol:
        return hy1[j], m
    return _hermite(s, ht0[j], ht1[j], hy0[j], hy1[j], hf0[j], hf1[j]), m


@njit(cache=True)
def _integrate_kernel(f, prm, y_init, tau1, tau2, h, n_steps, stride, bps, cap):
    tol = _SNAP * h
    n_out = n_steps // stride + 1
    times = np.empty(n_out)
    states = np.empty((n_out, 3))
    derivs = np.empty((n_out, 3))

    ht0 = np.empty(cap)
    ht1 = np.empty(cap)
    hy0 = np.empty(cap)
    hy1 = np.empty(cap)
    hf0 = np.empty(cap)
    hf1 = np.empty(cap)
    nseg = 0
    cur1 = 0
    cur2 = 0

    y = y_init.copy()
    i0 = y_init[1]
    k1 = np.empty(3)
    k2 = np.empty(3)
    k3 = np.empty(3)
    k4 = np.empty(3)
    fend = np.empty(3)
    ytmp = np.empty(3)
    ynew = np.empty(3)

    # derivative at t = 0 from the right
    d1 = y[1]
    d2 = y[1]
    if tau1 > 0.0:
        d1, cur1 = _delayed_i(-tau1, 1, i0, cur1, nseg, ht0, ht1, hy0, hy1, hf0, hf1, tol)
    if tau2 > 0.0:
        d2, cur2 = _delayed_i(-tau2, 1, i0, cur2, nseg, ht0, ht1, hy0, hy1, hf0, hf1, tol)
    f(0.0, y, d1, d2, prm, k1)
    times[0] = 0.0
    states[0, :] = y
    derivs[0, :] = k1

    nbp = bps.size
    bp = 0
    for k in range(n_steps):
        a = k * h
        end = (k + 1) * h
        while bp < nbp and bps[bp] <= a + tol:
            bp += 1
        while True:
            if bp < nbp and bps[bp] < end - tol:
                b = bps[bp]
                bp += 1
            else:
                b = end
            dt = b - a
            tm = a + 0.5 * dt

            for c in range(3):
                ytmp[c] = y[c] + 0.5 * dt * k1[c]
            d1 = ytmp[1]
            d2 = ytmp[1]
            if tau1 > 0.0:
                d1, cur1 = _delayed_i(tm - tau1, 0, i0, cur1, nseg, ht0, ht1, hy0, hy1, hf0, hf1, tol)
            if tau2 > 0.0:
                d2, cur2 = _delayed_i(tm - tau2, 0, i0, cur2, nseg, ht0, ht1, hy0, hy1, hf0, hf1, tol)
            f(tm, ytmp, d1, d2, prm, k2)

            for c in range(3):
                ytmp[c] = y[c] + 0.5 * dt * k2[c]
            if tau1 == 0.0:
                d1 = ytmp[1]
            if tau2 == 0.0:
                d2 = ytmp[1]
            f(tm, ytmp, d1, d2, prm, k3)

            for c in range(3):
                ytmp[c] = y[c] + dt * k3[c]
            d1 = ytmp[1]
            d2 = ytmp[1]
            if tau1 > 0.0:
                d1, cur1 = _delayed_i(b - tau1, -1, i0, cur1, nseg, ht0, ht1, hy0, hy1, hf0, hf1, tol)
            if tau2 > 0.0:
                d2, cur2 = _delayed_i(b - tau2, -1, i0, cur2, nseg, ht0, ht1, hy0, hy1, hf0, hf1, tol)
            f(b, ytmp, d1, d2, prm, k4)

            for c in range(3):
                ynew[c] = y[c] + dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c])

            for c in range(3):
                if not math.isfinite(ynew[c]):
                    return times, states, derivs, _STATUS_NONFINITE, b
            for c in range(3):
                if ynew[c] < NEGATIVE_FLOOR:
                    return times, states, derivs, _STATUS_NEGATIVE, b

            # left-sided derivative at b closes the Hermite segment
            if tau1 == 0.0:
                d1 = ynew[1]
            if tau2 == 0.0:
                d2 = ynew[1]
            f(b, ynew, d1, d2, prm, fend)

            j = nseg % cap
            ht0[j] = a
            ht1[j] = b
            hy0[j] = y[1]
            hy1[j] = ynew[1]
            hf0[j] = k1[1]
            hf1[j] = fend[1]
            nseg += 1

            for c in range(3):
                y[c] = ynew[c]
            jump = (tau1 > 0.0 and abs(b - tau1) <= tol) or (tau2 > 0.0 and abs(b - tau2) <= tol)
            if jump:
                d1 = y[1]
                d2 = y[1]
                if tau1 > 0.0:
                    d1, cur1 = _delayed_i(b - tau1, 1, i0, cur1, nseg, ht0, ht1, hy0, hy1, hf0, hf1, tol)
                if tau2 > 0.0:
                    d2, cur2 = _delayed_i(b - tau2, 1, i0, cur2, nseg, ht0, ht1, hy0, hy1, hf0, hf1, tol)
                f(b, y, d1, d2, prm, k1)
            else:
                for c in range(3):
                    k1[c] = fend[c]
            a = b
            if b == end:
                break

        if (k + 1) % stride == 0:
            row = (k + 1) // stride
            times[row] = end
            states[row, :] = y
            derivs[row, :] = k1
    return times, states, derivs, 0, 0.0


def breakpoints(tau1, tau2, t_end, order=BREAKPOINT_ORDER):
    """Sorted derivative-discontinuity times ``a*tau1 + b*tau2`` in ``(0, t_end]``."""
    delays = [d for d in {tau1, tau2} if d > 0.0]
    points = set()
    if len(delays) == 1:
        points.update(n * delays[0] for n in range(1, order + 1))
    elif len(delays) == 2:
        d1, d2 = delays
        for a in range(order + 1):
            for b in range(order + 1 - a):
                if a + b:
                    points.add(a * d1 + b * d2)
    return np.array(sorted(p for p in points if p <= t_end), dtype=float)


def check_step(h, delays):
    """Raise :class:`StepSizeError` unless ``h <= min nonzero delay / 10``."""
    if not (math.isfinite(h) and h > 0):
        raise StepSizeError(f"step size must be finite and > 0, got {h!r}")
    positive = [d for d in delays if d > 0.0]
    if positive and h > min(positive) / 10.0 * (1.0 + 1e-12):
        raise StepSizeError(
            f"step size {h!r} exceeds min nonzero delay / 10 = {min(positive) / 10.0!r}"
        )


def integrate(model, init, delays, cfg):
    """Integrate ``model`` from ``init`` over ``[0, cfg.t_end]``.

    ``delays`` is ``(tau1, tau2)``; the model receives ``I(t - tau1)`` and
    ``I(t - tau2)``. A zero delay passes the current stage value of ``I``, so
    with both delays zero this is plain RK4. The grid is ``k * h`` and extends
    to the first recorded node at or beyond ``t_end``.
    """
    tau1, tau2 = (float(d) for d in delays)
    for name, d in (("tau1", tau1), ("tau2", tau2)):
        if not math.isfinite(d) or d < 0:
            raise DomainError(f"{name} must be finite and >= 0, got {d!r}")
    y0 = init.as_array() if isinstance(init, EpidemicState) else np.asarray(init, dtype=float)
    if y0.shape != (3,) or not np.all(np.isfinite(y0)) or np.any(y0 < 0):
        raise DomainError(f"initial state must be three finite values >= 0, got {y0!r}")
    check_step(cfg.h, (tau1, tau2))
    if not (math.isfinite(cfg.t_end) and cfg.t_end >= 0):
        raise DomainError(f"t_end must be finite and >= 0, got {cfg.t_end!r}")
    stride = int(cfg.record_every)
    if stride < 1:
        raise DomainError(f"record_every must be >= 1, got {cfg.record_every!r}")

    h = float(cfg.h)
    n_steps = max(math.ceil(cfg.t_end / h - 1e-9), 0)
    n_steps = -(-n_steps // stride) * stride
    bps = breakpoints(tau1, tau2, n_steps * h)
    cap = int(math.ceil(max(tau1, tau2) / h)) * 2 + bps.size + 16

    times, states, derivs, status, when = _integrate_kernel(
        model.func, np.asarray(model.params, dtype=float), y0, tau1, tau2, h,
        n_steps, stride, bps, cap,
    )
    if status == _STATUS_NONFINITE:
        raise IntegrationError(f"state became non-finite at t = {when!r}", when)
    if status == _STATUS_NEGATIVE:
        raise IntegrationError(
            f"a compartment fell below {NEGATIVE_FLOOR} at t = {when!r}", when
        )
    return Trajectory(times, states, derivs)


def sample(traj, t, component=None):
    """State at time ``t`` by cubic Hermite interpolation on the grid.

    Exact at grid nodes. Before the first node only the infective history is
    defined (``I = 0``), so ``t < times[0]`` requires ``component="I"``.
    With ``component`` set to one of ``"S"``, ``"I"``, ``"R"`` a float is
    returned instead of an :class:`EpidemicState`.
    """
    index = _COMPONENTS.get(component) if component is not None else None
    if component is not None and index is None:
        raise DomainError(f"component must be one of S, I, R; got {component!r}")
    times = traj.times
    if t < times[0]:
        if index == 1:
            return 0.0
        raise DomainError(f"only I has a history before t = {times[0]!r}; got t = {t!r}")
    if t > times[-1]:
        raise DomainError(f"t = {t!r} is beyond the trajectory horizon {times[-1]!r}")
    k = int(np.searchsorted(times, t, side="right")) - 1
    if times[k] == t or k == len(times) - 1:
        values = traj.states[k]
    else:
        t0, t1 = times[k], times[k + 1]
        values = [
            _hermite(t, t0, t1, traj.states[k, c], traj.states[k + 1, c],
                     traj.derivs[k, c], traj.derivs[k + 1, c])
            for c in range(3)
        ]
    if index is not None:
        return float(values[index])
    return EpidemicState.from_array(values)


_COMPONENTS = {"S": 0, "I": 1, "R": 2}
