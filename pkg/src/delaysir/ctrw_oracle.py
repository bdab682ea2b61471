"""Agent-based Monte Carlo of the age-structured infection process.

Infected individuals carry an infection age and a recovery age drawn from
the delay exponential distribution when they are infected. They infect
susceptibles at rate ``omega * rho(age)``. Everyone dies at per-capita rate
``gamma`` and births arrive as a Poisson stream of rate ``lam``. Averaging
many runs gives a finite-population check on the delay equations.

Time advances in small fixed steps ``dt``. Each step applies, in order:

1. births ``~ Poisson(lam dt)`` join S;
2. every individual dies with probability ``1 - e^{-gamma dt}``;
3. infecteds whose age reaches their recovery age during the step move to R;
4. each susceptible is infected with probability ``1 - e^{-Lambda dt}``
   where ``Lambda = omega * sum(rho(age_j))`` over current infecteds;
   new infecteds start at age 0 with a fresh recovery age;
5. all infection ages advance by ``dt``.

Susceptible and recovered individuals carry no state, so they are held as
counts and their deaths are binomial draws. Ages are stored as whole numbers
of steps.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .dde_core import EpidemicState
from .delay_exponential import (
    _draw_recovery_age,
    dexp_curve,
    recovery_sampler_table,
)
from .errors import DomainError
from .sir_models import ModelParams

DT_SAFETY = 20

# smallest survival level the inverse-CDF sampler can target (u >= 2**-53)
_SAMPLER_FLOOR = 1e-18


@dataclass
class Population:
    """Mutable simulation state.

    ``infection_steps[j]`` is the age of infected ``j`` in steps and
    ``recovery_age[j]`` the age at which it will recover.
    """

    susceptible: int
    recovered: int
    infection_steps: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    recovery_age: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def infected(self):
        return int(self.infection_steps.size)

    def counts(self):
        return self.susceptible, self.infected, self.recovered


@dataclass(frozen=True)
class OracleConfig:
    params: ModelParams
    dt: float
    s0: int
    i0: int
    r0: int
    t_end: float
    replicates: int = 1
    seed: int = 0

    def __post_init__(self):
        for name in ("s0", "i0", "r0"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 0:
                raise DomainError(f"{name} must be a non-negative integer")
        if int(self.replicates) != self.replicates or self.replicates < 1:
            raise DomainError("replicates must be a positive integer")
        if not (math.isfinite(self.t_end) and self.t_end >= 0):
            raise DomainError(f"t_end must be finite and >= 0, got {self.t_end!r}")
        limit = max_step(self.params, self.s0 + self.i0 + self.r0)
        if not (self.dt > 0 and self.dt <= limit * (1.0 + 1e-12)):
            raise DomainError(f"dt = {self.dt!r} must be in (0, {limit!r}]")

    @property
    def n_steps(self):
        return math.ceil(self.t_end / self.dt - 1e-9)

    @property
    def times(self):
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True)
class EnsembleStats:
    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    replicates: int

    def state(self, k):
        return EpidemicState.from_array(self.mean[k])


def max_step(p, n0):
    """Largest admissible ``dt``: 1/20 of the shortest delay or rate timescale."""
    scales = [d for d in (p.tau1, p.tau2) if d > 0]
    if p.mu > 0:
        scales.append(1.0 / p.mu)
    if p.omega > 0 and n0 > 0:
        scales.append(1.0 / (p.omega * n0))
    if not scales:
        return math.inf
    return min(scales) / DT_SAFETY


def recovery_hazard(age, p):
    """Instantaneous recovery rate ``psi(a) / phi(a)`` at infection age ``a``."""
    if age < 0:
        raise DomainError(f"age must be >= 0, got {age!r}")
    if age < p.tau2:
        return 0.0
    phi = dexp_curve(np.array([age, age - p.tau2]), p.recovery)
    if phi[0] <= 0.0:
        raise DomainError(f"phi({age!r}) underflowed; hazard undefined")
    return p.mu * phi[1] / phi[0]


# --------------------------------------------------------------------------
# stepping kernel


class _Tables:
    """Per-parameter lookup tables shared by every step of a run."""

    def __init__(self, p, dt):
        self.p = p
        self.dt = dt
        if p.mu > 0:
            self.recovery_nodes = recovery_sampler_table(p.recovery)
            # recovery ages never exceed the end of the sampler's table
            tail = (self.recovery_nodes.size * p.tau2 if p.tau2 > 0
                    else -math.log(_SAMPLER_FLOOR) / p.mu)
            self.max_age_steps = int(math.ceil(tail / dt)) + 2
        else:
            self.recovery_nodes = np.ones(1)
            self.max_age_steps = None
        self.rho = np.zeros(0)

    def infectivity(self, age_steps):
        """``rho`` at ages ``0, dt, 2 dt, ...`` with at least ``age_steps + 1`` entries."""
        if self.rho.size <= age_steps:
            size = max(64, 1 << int(age_steps).bit_length())
            ages = np.arange(size) * self.dt
            p = self.p
            num = dexp_curve(ages - p.tau1, p.recovery)
            den = dexp_curve(ages, p.recovery)
            with np.errstate(divide="ignore", invalid="ignore"):
                rho = np.where(ages >= p.tau1, num / den, 0.0)
            # phi underflows only at ages no infected can reach
            rho[~np.isfinite(rho)] = 0.0
            self.rho = rho
        return self.rho


@njit(cache=True)
def _advance(n_steps, susceptible, recovered, ages, rec_age, n_inf, rho, dt,
             lam, gamma, omega, mu, tau2, nodes, rng, out):
    """Run ``n_steps`` steps in place; returns the new scalar state.

    ``ages``/``rec_age`` hold ``n_inf`` live infecteds and may be reallocated.
    ``rho`` must cover every age an infected can reach within the run.
    Row ``k + 1`` of ``out`` receives the counts after step ``k``.
    """
    p_death = 1.0 - math.exp(-gamma * dt)
    birth_mean = lam * dt
    for k in range(n_steps):
        # 1. births
        if birth_mean > 0.0:
            susceptible += rng.poisson(birth_mean)
        # 2. deaths; S and R by count, I by uniformly chosen victims
        if p_death > 0.0:
            if susceptible > 0:
                susceptible -= rng.binomial(susceptible, p_death)
            if recovered > 0:
                recovered -= rng.binomial(recovered, p_death)
            if n_inf > 0:
                dead = rng.binomial(n_inf, p_death)
                for _ in range(dead):
                    j = int(rng.integers(0, n_inf))
                    n_inf -= 1
                    ages[j] = ages[n_inf]
                    rec_age[j] = rec_age[n_inf]
        # 3. recoveries, 4a. force of infection from the survivors
        force = 0.0
        j = 0
        while j < n_inf:
            if (ages[j] + 1) * dt >= rec_age[j]:
                recovered += 1
                n_inf -= 1
                ages[j] = ages[n_inf]
                rec_age[j] = rec_age[n_inf]
            else:
                force += rho[ages[j]]
                j += 1
        # 4b. infections
        if force > 0.0 and susceptible > 0:
            new = rng.binomial(susceptible, 1.0 - math.exp(-omega * force * dt))
            if new > 0:
                susceptible -= new
                if n_inf + new > ages.size:
                    size = max(2 * ages.size, n_inf + new)
                    grown_ages = np.empty(size, dtype=np.int64)
                    grown_rec = np.empty(size)
                    grown_ages[:n_inf] = ages[:n_inf]
                    grown_rec[:n_inf] = rec_age[:n_inf]
                    ages = grown_ages
                    rec_age = grown_rec
                for _ in range(new):
                    ages[n_inf] = 0
                    rec_age[n_inf] = _sample_age(rng, mu, tau2, nodes)
                    n_inf += 1
        # 5. ageing
        for j in range(n_inf):
            ages[j] += 1
        out[k + 1, 0] = susceptible
        out[k + 1, 1] = n_inf
        out[k + 1, 2] = recovered
    return susceptible, recovered, ages, rec_age, n_inf


@njit(cache=True)
def _sample_age(rng, mu, tau2, nodes):
    if mu <= 0.0:
        return math.inf
    return _draw_recovery_age(rng, mu, tau2, nodes)


def _run(pop, tables, n_steps, rng):
    """Advance ``pop`` by ``n_steps`` steps; returns the counts after each step."""
    p = tables.p
    out = np.zeros((n_steps + 1, 3), dtype=np.int64)
    out[0] = pop.counts()
    ages = np.array(pop.infection_steps, dtype=np.int64)
    rec_age = np.array(pop.recovery_age, dtype=float)
    s, r, n_inf = pop.susceptible, pop.recovered, ages.size
    # an infected leaves I no later than ceil(recovery_age / dt) steps of age
    need = int(np.max(ages, initial=0)) + n_steps + 1
    if tables.max_age_steps is not None:
        existing = np.ceil(rec_age / tables.dt).max(initial=0.0) + 1
        need = min(need, int(max(tables.max_age_steps, existing)))
    rho = tables.infectivity(need)
    s, r, ages, rec_age, n_inf = _advance(
        n_steps, s, r, ages, rec_age, n_inf, rho, tables.dt,
        p.lam, p.gamma, p.omega, p.mu, p.tau2, tables.recovery_nodes, rng, out,
    )
    pop.susceptible, pop.recovered = int(s), int(r)
    pop.infection_steps = ages[:n_inf].copy()
    pop.recovery_age = rec_age[:n_inf].copy()
    return out


def initial_population(cfg, rng):
    """``s0`` susceptibles, ``r0`` recovered and ``i0`` infecteds of age 0."""
    p = cfg.params
    if p.mu > 0:
        nodes = recovery_sampler_table(p.recovery)
        rec = np.array([_draw_recovery_age(rng, p.mu, p.tau2, nodes) for _ in range(cfg.i0)])
    else:
        rec = np.full(cfg.i0, math.inf)
    return Population(int(cfg.s0), int(cfg.r0), np.zeros(cfg.i0, dtype=np.int64), rec)


def step_population(pop, p, dt, rng):
    """Advance ``pop`` by one step of length ``dt`` in place and return it."""
    if not dt > 0:
        raise DomainError(f"dt must be > 0, got {dt!r}")
    _run(pop, _Tables(p, dt), 1, rng)
    return pop


def replicate_rng(seed, index):
    """Independent generator for replicate ``index`` of base ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def run_replicate(cfg, index):
    """Counts ``(S, I, R)`` at every multiple of ``dt`` for one replicate."""
    rng = replicate_rng(cfg.seed, index)
    pop = initial_population(cfg, rng)
    return _run(pop, _Tables(cfg.params, cfg.dt), cfg.n_steps, rng)


def _replicate_batch(cfg, indices):
    total = None
    square = None
    for index in indices:
        counts = run_replicate(cfg, index).astype(float)
        if total is None:
            total = np.zeros_like(counts)
            square = np.zeros_like(counts)
        total += counts
        square += counts * counts
    return total, square


def ensemble_mean(cfg, workers=1):
    """Pointwise mean and standard error of the counts over ``cfg.replicates`` runs.

    Replicate ``k`` always uses the stream from ``(cfg.seed, k)``, so results
    do not depend on ``workers``.
    """
    n = cfg.replicates
    if n < 2:
        raise DomainError("ensemble statistics need at least 2 replicates")
    indices = list(range(n))
    if workers > 1:
        chunks = [indices[w::workers] for w in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_replicate_batch, [cfg] * len(chunks), chunks))
        total = sum(part[0] for part in parts)
        square = sum(part[1] for part in parts)
    else:
        total, square = _replicate_batch(cfg, indices)
    mean = total / n
    var = np.maximum(square - n * mean * mean, 0.0) / (n - 1)
    return EnsembleStats(cfg.times, mean, np.sqrt(var / n), n)
