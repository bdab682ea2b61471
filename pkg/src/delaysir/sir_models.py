"""Constant-rate SIR model with delayed infectivity and delayed recovery.

    dS/dt = lam - omega e^{-gamma tau1} S I(t - tau1) - gamma S
    dI/dt = omega e^{-gamma tau1} S I(t - tau1) - mu e^{-gamma tau2} I(t - tau2) - gamma I
    dR/dt = mu e^{-gamma tau2} I(t - tau2) - gamma R

The ``e^{-gamma tau}`` factors are the probability of surviving the death
process across each delay.
"""

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .dde_core import DelayedRHS, EpidemicState, StepConfig, integrate
from .delay_exponential import DexpParams, validate_survival
from .errors import DomainError

DEFAULT_N_SUB = 50


@dataclass(frozen=True)
class ModelParams:
    """The six model constants.

    Construction only checks that every value is finite and non-negative and
    that ``mu * tau2 <= 1/e``. Zero birth, death or contact rates are allowed
    here because the stochastic oracle uses them for degenerate checks; the
    deterministic analysis calls :meth:`require_positive_rates`.
    """

    lam: float
    gamma: float
    omega: float
    mu: float
    tau1: float
    tau2: float

    def __post_init__(self):
        for name in ("lam", "gamma", "omega", "mu", "tau1", "tau2"):
            raw = getattr(self, name)
            try:
                value = float(raw)
            except (TypeError, ValueError):
                raise DomainError(f"{_public_name(name)} must be a number, got {raw!r}") from None
            if not math.isfinite(value) or value < 0:
                raise DomainError(f"{_public_name(name)} must be finite and >= 0, got {raw!r}")
            object.__setattr__(self, name, value)
        verdict = validate_survival(DexpParams(self.mu, self.tau2))
        if not verdict:
            raise DomainError(f"mu*tau2 invalid: {verdict.reason}")

    def require_positive_rates(self):
        for name in ("lam", "gamma", "omega"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{_public_name(name)} must be > 0")
        return self

    @property
    def recovery(self):
        """Recovery-age distribution parameters ``(mu, tau2)``."""
        return DexpParams(self.mu, self.tau2)

    @property
    def infection_coefficient(self):
        """``omega e^{-gamma tau1}``: contact rate times survival over the infectivity delay."""
        return self.omega * theta_survival(self, self.tau1)

    @property
    def recovery_coefficient(self):
        """``mu e^{-gamma tau2}``."""
        return self.mu * theta_survival(self, self.tau2)


def _public_name(field):
    return "lambda" if field == "lam" else field


def theta_survival(p, dt):
    """Probability of surviving the death process over an interval ``dt``."""
    if dt < 0:
        raise DomainError(f"dt must be >= 0, got {dt!r}")
    return math.exp(-p.gamma * dt)


# --------------------------------------------------------------------------
# right-hand side


@njit(cache=True)
def sir_rhs(t, y, i_tau1, i_tau2, prm, out):
    """Compiled right-hand side; ``prm = (lam, gamma, infection_coef, recovery_coef)``."""
    lam = prm[0]
    gamma = prm[1]
    infection = prm[2] * y[0] * i_tau1
    recovery = prm[3] * i_tau2
    out[0] = lam - infection - gamma * y[0]
    out[1] = infection - recovery - gamma * y[1]
    out[2] = recovery - gamma * y[2]


def _rhs_params(p):
    return np.array([p.lam, p.gamma, p.infection_coefficient, p.recovery_coefficient])


def sir_model(p):
    """The model as a :class:`DelayedRHS` for :func:`dde_core.integrate`."""
    return DelayedRHS(sir_rhs, _rhs_params(p))


def rhs_full(now, i_tau1, i_tau2, p):
    """Time derivative ``(dS, dI, dR)`` given the current state and delayed ``I`` reads."""
    out = np.empty(3)
    sir_rhs(0.0, now.as_array(), float(i_tau1), float(i_tau2), _rhs_params(p), out)
    return EpidemicState.from_array(out)


def step_size(p, n_sub=DEFAULT_N_SUB):
    """Grid step: the smallest nonzero delay over ``n_sub``, or ``1/n_sub`` with no delays."""
    if n_sub < 10:
        raise DomainError(f"n_sub must be >= 10, got {n_sub!r}")
    positive = [d for d in (p.tau1, p.tau2) if d > 0]
    return (min(positive) if positive else 1.0) / n_sub


def simulate(p, init, t_end, n_sub=DEFAULT_N_SUB, record_every=1):
    """Integrate the model from ``init`` over ``[0, t_end]``."""
    cfg = StepConfig(step_size(p, n_sub), t_end, record_every)
    return integrate(sir_model(p), init, (p.tau1, p.tau2), cfg)


# --------------------------------------------------------------------------
# steady states


class SteadyKind(str, enum.Enum):
    DISEASE_FREE = "disease-free"
    ENDEMIC = "endemic"


@dataclass(frozen=True)
class SteadyState:
    s_star: float
    i_star: float
    r_star: float
    kind: SteadyKind

    def as_state(self):
        return EpidemicState(self.s_star, self.i_star, self.r_star)


def steady_disease_free(p):
    p.require_positive_rates()
    return SteadyState(p.lam / p.gamma, 0.0, 0.0, SteadyKind.DISEASE_FREE)


def endemic_margin(p):
    """``lam omega e^{-gamma tau1} - gamma (mu e^{-gamma tau2} + gamma)``; positive iff endemic."""
    return p.lam * p.infection_coefficient - p.gamma * (p.recovery_coefficient + p.gamma)


def endemic_exists(p):
    return endemic_margin(p) > 0


def endemic_formula(p):
    """Closed-form endemic point, returned even where it is not admissible.

    ``R*`` is taken from the recovered-balance identity
    ``R* = mu e^{-gamma tau2} I* / gamma`` and checked against the expanded
    closed form to 1e-12 of the magnitude of its terms.
    """
    p.require_positive_rates()
    beta = p.infection_coefficient
    nu = p.recovery_coefficient
    s_star = (nu + p.gamma) / beta
    i_star = p.lam / (nu + p.gamma) - p.gamma / beta
    r_star = nu * i_star / p.gamma
    first = p.lam * nu / (p.gamma * nu + p.gamma ** 2)
    second = nu / beta
    r_expanded = first - second
    if abs(r_star - r_expanded) > 1e-12 * (abs(first) + abs(second)):
        raise ArithmeticError(
            f"endemic R* forms disagree: {r_star!r} vs {r_expanded!r}"
        )
    return SteadyState(s_star, i_star, r_star, SteadyKind.ENDEMIC)


def steady_endemic(p):
    """Endemic fixed point, or ``None`` unless ``endemic_margin(p) > 0``."""
    if not endemic_exists(p.require_positive_rates()):
        return None
    return endemic_formula(p)


def steady_residual(point, p):
    """Relative residual of the right-hand side at a fixed point.

    Each equation's residual is divided by the sum of the magnitudes of its
    terms, so the result is scale-free.
    """
    s, i, r = point.s_star, point.i_star, point.r_star
    d = rhs_full(EpidemicState(s, i, r), i, i, p)
    infection = p.infection_coefficient * s * i
    recovery = p.recovery_coefficient * i
    scales = (
        p.lam + abs(infection) + p.gamma * abs(s),
        abs(infection) + abs(recovery) + p.gamma * abs(i),
        abs(recovery) + p.gamma * abs(r),
    )
    return max(abs(v) / sc if sc > 0 else abs(v) for v, sc in zip((d.s, d.i, d.r), scales))


def population_closed_form(p, n0, t):
    """Total population ``lam/gamma + (N0 - lam/gamma) e^{-gamma t}``."""
    t = np.asarray(t, dtype=float)
    if p.gamma == 0:
        return n0 + p.lam * t
    eq = p.lam / p.gamma
    return eq + (n0 - eq) * np.exp(-p.gamma * t)


# --------------------------------------------------------------------------
# reductions


class Reduction(str, enum.Enum):
    FULL = "full"
    DELAY_INFECTIVITY = "delay-infectivity"
    DELAY_RECOVERY = "delay-recovery"
    STANDARD = "standard"


def make_reduction(p, which):
    """Zero the delays that the named reduction removes.

    ``delay-infectivity`` keeps only ``tau1``; ``delay-recovery`` keeps only
    ``tau2``; ``standard`` drops both and gives the classical SIR model with
    vital dynamics.
    """
    which = Reduction(which)
    if which is Reduction.FULL:
        return p
    if which is Reduction.DELAY_INFECTIVITY:
        return replace(p, tau2=0.0)
    if which is Reduction.DELAY_RECOVERY:
        return replace(p, tau1=0.0)
    return replace(p, tau1=0.0, tau2=0.0)
