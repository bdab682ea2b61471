"""Delay exponential function and the recovery-age distribution built on it.

The delay exponential ``dexp(-mu t; -mu tau)`` solves ``y'(t) = -mu y(t - tau)``
with ``y(0) = 1`` and zero pre-history. It is a proper survival function
only when ``0 <= mu * tau <= 1/e``.

Two evaluation routes are provided:

* :func:`dexp_eval` sums the defining power series directly (compensated
  summation) and watches for cancellation.
* A re-centred form expands around the last breakpoint ``k tau <= t``::

      dexp(t) = sum_j (-mu x)^j / j! * dexp((k - j) tau),   x = t - k tau

  Its terms shrink like ``1/j!`` so it stays accurate where the direct
  series cancels catastrophically. Node values ``dexp(k tau)`` come from the
  same identity at ``x = tau``. Vectorised helpers and the sampler use it.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit

from .errors import DomainError, NumericalError, PrecisionLossError

E_INV = math.exp(-1.0)

# ratio max|term| / |sum| above which the direct series is not trusted
CANCELLATION_LIMIT = 1e12

# above this ratio the default route prefers the re-centred expansion
_DIRECT_LIMIT = 1e4

# relative slack on the mu*tau <= 1/e bound so that mu = e^-1 / tau is accepted
_BOUND_RTOL = 1e-12

# truncation of the re-centred expansion; terms are bounded by 1/j!
_RECENTRED_TERMS = 26

_MAX_INTERVALS = 5_000_000
_NODE_FLOOR = 1e-18

_INV_FACTORIAL = [1.0 / math.factorial(n) for n in range(171)]


@dataclass(frozen=True)
class DexpParams:
    """Rate ``mu`` (1/time) and delay ``tau`` (time) of one delay exponential."""

    mu: float
    tau: float

    def __post_init__(self):
        for name in ("mu", "tau"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise DomainError(f"{name} must be finite and >= 0, got {value!r}")


@dataclass(frozen=True)
class SurvivalVerdict:
    """Outcome of :func:`validate_survival`; truthy when valid."""

    valid: bool
    product: float
    bound: float = E_INV
    reason: str = ""

    def __bool__(self):
        return self.valid


def validate_survival(p):
    """Check ``0 <= mu * tau <= 1/e``, the range where dexp is a survival function."""
    product = p.mu * p.tau
    if product > E_INV * (1.0 + _BOUND_RTOL):
        return SurvivalVerdict(
            False, product, reason=f"mu*tau = {product!r} exceeds 1/e = {E_INV!r}"
        )
    return SurvivalVerdict(True, product)


def _require_survival(p):
    verdict = validate_survival(p)
    if not verdict:
        raise DomainError(verdict.reason)


# --------------------------------------------------------------------------
# direct series


def _series_term(n, x):
    """Return ``x**n / n!`` for ``x >= 0``."""
    if n == 0:
        return 1.0
    if x == 0.0:
        return 0.0
    if n <= 170:
        try:
            return math.pow(x, n) * _INV_FACTORIAL[n]
        except OverflowError:
            pass
    log_term = n * math.log(x) - math.lgamma(n + 1)
    # an overflowing term marks the sum as hopeless; callers see max|term| = inf
    return math.exp(log_term) if log_term < 709.0 else math.inf


def _direct_series(t, mu, tau):
    """Neumaier-compensated sum of the series; returns ``(value, max|term|)``."""
    n_max = math.floor(t / tau)
    if n_max > _MAX_INTERVALS:
        raise DomainError(f"t / tau = {t / tau:.3g} delay intervals is too many to sum")
    total = 0.0
    comp = 0.0
    biggest = 0.0
    for n in range(n_max + 1):
        x = mu * (t - n * tau)
        term = _series_term(n, max(x, 0.0))
        if n % 2:
            term = -term
        biggest = max(biggest, abs(term))
        s = total + term
        if abs(total) >= abs(term):
            comp += (total - s) + term
        else:
            comp += (term - s) + total
        total = s
    if not math.isfinite(biggest):
        return math.nan, math.inf
    return total + comp, biggest


def dexp_eval(t, p, *, strict=False):
    """Evaluate the delay exponential ``dexp(-mu t; -mu tau)`` at ``t``.

    Returns 0 for ``t < 0``. With ``tau == 0`` the exact limit ``exp(-mu t)``
    is returned. Otherwise the power series is summed with compensation. If
    the largest term exceeds the result by more than a factor 1e4 the value
    is recomputed from the re-centred expansion. With ``strict`` set the
    series result is kept up to a ratio of ``CANCELLATION_LIMIT`` and
    :class:`PrecisionLossError` is raised beyond it.
    """
    t = float(t)
    if not math.isfinite(t):
        raise DomainError(f"t must be finite, got {t!r}")
    if t < 0:
        return 0.0
    if p.tau == 0.0:
        return math.exp(-p.mu * t)
    if p.mu == 0.0:
        return 1.0
    value, biggest = _direct_series(t, p.mu, p.tau)
    if biggest <= _DIRECT_LIMIT * abs(value):
        return value
    if strict:
        if biggest <= CANCELLATION_LIMIT * abs(value):
            return value
        ratio = biggest / abs(value) if value else math.inf
        raise PrecisionLossError(
            f"dexp series at t={t!r} (mu={p.mu!r}, tau={p.tau!r}) cancels: "
            f"max|term|/|sum| = {ratio:.3g} > {CANCELLATION_LIMIT:.0e}"
        )
    nodes = _nodes(p.mu, p.tau, _intervals(t, p.tau) + 1)
    return float(_recentred(t, p.mu, p.tau, nodes))


# --------------------------------------------------------------------------
# re-centred expansion


@njit(cache=True)
def _node_values(mu, tau, count):
    """``dexp(k tau)`` for ``k = 0 .. count-1`` via the re-centred identity."""
    nodes = np.zeros(count)
    if count == 0:
        return nodes
    nodes[0] = 1.0
    z = -mu * tau
    coef = np.empty(_RECENTRED_TERMS)
    coef[0] = 1.0
    for j in range(1, _RECENTRED_TERMS):
        coef[j] = coef[j - 1] * z / j
    for k in range(count - 1):
        jmax = min(k, _RECENTRED_TERMS - 1)
        total = 0.0
        comp = 0.0
        for j in range(jmax, -1, -1):
            term = coef[j] * nodes[k - j]
            s = total + term
            if abs(total) >= abs(term):
                comp += (total - s) + term
            else:
                comp += (term - s) + total
            total = s
        nodes[k + 1] = total + comp
    return nodes


@njit(cache=True)
def _recentred(t, mu, tau, nodes):
    """Re-centred evaluation; 0 past the end of the node table or for t < 0."""
    if t < 0.0:
        return 0.0
    if tau == 0.0:
        return math.exp(-mu * t)
    k = int(math.floor(t / tau))
    if k >= nodes.size:
        return 0.0
    x = t - k * tau
    if x < 0.0:
        x = 0.0
    z = -mu * x
    jmax = min(k, _RECENTRED_TERMS - 1)
    coef = 1.0
    total = 0.0
    comp = 0.0
    for j in range(jmax + 1):
        term = coef * nodes[k - j]
        s = total + term
        if abs(total) >= abs(term):
            comp += (total - s) + term
        else:
            comp += (term - s) + total
        total = s
        coef *= z / (j + 1)
    return total + comp


@njit(cache=True)
def _recentred_many(ts, mu, tau, nodes):
    out = np.empty(ts.size)
    for n in range(ts.size):
        out[n] = _recentred(ts[n], mu, tau, nodes)
    return out


def _intervals(t, tau):
    count = math.floor(t / tau) + 1
    if count > _MAX_INTERVALS:
        raise DomainError(f"t / tau = {t / tau:.3g} delay intervals is too many to evaluate")
    return count


@lru_cache(maxsize=64)
def _cached_nodes(mu, tau, size):
    nodes = _node_values(mu, tau, size)
    nodes.setflags(write=False)
    return nodes


def _nodes(mu, tau, count):
    """Node table with at least ``count`` entries (sizes rounded up to 2**k)."""
    size = 1 << max(int(count - 1).bit_length(), 4)
    return _cached_nodes(float(mu), float(tau), size)


def tail_nodes(p, floor=_NODE_FLOOR):
    """Node table extended until ``dexp(k tau)`` drops below ``floor``.

    Used where evaluation must reach arbitrarily deep into the tail, such as
    inverse-CDF sampling. Requires ``mu > 0`` and ``tau > 0``.
    """
    size = 64
    while True:
        nodes = _nodes(p.mu, p.tau, size)
        if nodes[-1] < floor:
            return nodes
        if size > _MAX_INTERVALS:
            raise DomainError(
                f"dexp(mu={p.mu!r}, tau={p.tau!r}) decays too slowly per delay interval "
                "to tabulate its tail"
            )
        size *= 2


def dexp_curve(t, p):
    """Vectorised delay exponential over an array of times (re-centred route)."""
    ts = np.asarray(t, dtype=float)
    flat = np.ravel(ts)
    if not np.all(np.isfinite(flat)):
        raise DomainError("times must be finite")
    if p.tau == 0.0:
        out = np.where(flat < 0, 0.0, np.exp(-p.mu * np.maximum(flat, 0.0)))
        return out.reshape(ts.shape)
    count = _intervals(float(flat.max(initial=0.0)), p.tau) + 1
    nodes = _nodes(p.mu, p.tau, count)
    return _recentred_many(flat, p.mu, p.tau, nodes).reshape(ts.shape)


# --------------------------------------------------------------------------
# survival, density, infectivity


def survival_phi(t, p):
    """Probability of not having recovered by infection age ``t``."""
    _require_survival(p)
    if t < 0:
        raise DomainError(f"survival age must be >= 0, got {t!r}")
    return dexp_eval(t, p)


def density_psi(t, p):
    """Recovery-age density ``-d phi/dt``; zero on ``[0, tau)``."""
    _require_survival(p)
    if t < 0:
        raise DomainError(f"density age must be >= 0, got {t!r}")
    if t < p.tau:
        return 0.0
    return p.mu * dexp_eval(t - p.tau, p)


def infectivity_rho(t, mu, tau1, tau2):
    """Age-of-infection infectivity ``Theta(t - tau1) phi(t - tau1) / phi(t)``.

    ``phi`` is the delay exponential survival with rate ``mu`` and delay
    ``tau2``. Raises :class:`DomainError` if ``phi(t)`` underflows to zero.
    """
    if not math.isfinite(tau1) or tau1 < 0:
        raise DomainError(f"tau1 must be finite and >= 0, got {tau1!r}")
    p = DexpParams(mu, tau2)
    _require_survival(p)
    if t < 0:
        raise DomainError(f"infection age must be >= 0, got {t!r}")
    if t < tau1:
        return 0.0
    denom = dexp_eval(t, p)
    if denom <= 0.0:
        raise DomainError(f"phi({t!r}) underflowed to {denom!r}; infectivity undefined")
    return dexp_eval(t - tau1, p) / denom


def survival_curve(t, p):
    """Vectorised :func:`survival_phi`."""
    _require_survival(p)
    return dexp_curve(t, p)


def density_curve(t, p):
    """Vectorised :func:`density_psi`."""
    _require_survival(p)
    ts = np.asarray(t, dtype=float)
    return np.where(ts < p.tau, 0.0, p.mu * dexp_curve(ts - p.tau, p))


def infectivity_curve(t, mu, tau1, tau2):
    """Vectorised :func:`infectivity_rho`."""
    p = DexpParams(mu, tau2)
    _require_survival(p)
    ts = np.asarray(t, dtype=float)
    num = dexp_curve(ts - tau1, p)
    den = dexp_curve(ts, p)
    on = ts >= tau1
    if np.any(on & (den <= 0.0)):
        raise DomainError("phi underflowed to zero; infectivity undefined")
    return np.where(on, num / np.where(den > 0.0, den, 1.0), 0.0)


# --------------------------------------------------------------------------
# sampling

_BISECTION_TOL = 1e-10
_MAX_BISECTIONS = 200
_MAX_DOUBLINGS = 200


@njit(cache=True)
def _inverse_survival(u, mu, tau, nodes):
    """Smallest ``t`` with ``phi(t) < u`` to 1e-10; -1 on failure."""
    if u >= 1.0:
        return tau
    lo = tau
    width = 1.0 / mu
    hi = tau + width
    n = 0
    while _recentred(hi, mu, tau, nodes) >= u:
        lo = hi
        width *= 2.0
        hi = tau + width
        n += 1
        if n > _MAX_DOUBLINGS:
            return -1.0
    for _ in range(_MAX_BISECTIONS):
        if hi - lo <= _BISECTION_TOL:
            return 0.5 * (lo + hi)
        mid = 0.5 * (lo + hi)
        if _recentred(mid, mu, tau, nodes) >= u:
            lo = mid
        else:
            hi = mid
    return -1.0


@njit(cache=True)
def _draw_recovery_age(rng, mu, tau, nodes):
    u = 1.0 - rng.random()
    return _inverse_survival(u, mu, tau, nodes)


def recovery_sampler_table(p):
    """Node table suitable for :func:`_draw_recovery_age` under ``p``."""
    if p.tau == 0.0:
        return np.ones(1)
    return tail_nodes(p)


def sample_recovery_age(rng, p):
    """Draw one recovery age by inverting ``phi`` with bisection.

    ``rng`` is a caller-owned :class:`numpy.random.Generator`. Samples are
    always ``>= tau`` because ``phi`` equals 1 on ``[0, tau]``.
    """
    _require_survival(p)
    if p.mu <= 0.0:
        raise DomainError("recovery sampling needs mu > 0")
    age = _draw_recovery_age(rng, p.mu, p.tau, recovery_sampler_table(p))
    if age < 0.0:
        raise NumericalError(
            f"recovery-age bisection did not converge for mu={p.mu!r}, tau={p.tau!r}"
        )
    return age


def sample_recovery_ages(rng, p, size):
    """Draw ``size`` independent recovery ages (see :func:`sample_recovery_age`)."""
    _require_survival(p)
    if p.mu <= 0.0:
        raise DomainError("recovery sampling needs mu > 0")
    nodes = recovery_sampler_table(p)
    out = np.empty(size)
    for n in range(size):
        out[n] = _draw_recovery_age(rng, p.mu, p.tau, nodes)
    if np.any(out < 0.0):
        raise NumericalError(
            f"recovery-age bisection did not converge for mu={p.mu!r}, tau={p.tau!r}"
        )
    return out
