"""Scenario configuration documents (JSON).

A document looks like::

    {
      "model": {"lambda": 0.5, "gamma": 0.001, "omega": 0.02,
                "mu": "critical", "tau1": 1.0, "tau2": 0.1},
      "initial": {"s": 498, "i": 2, "r": 0},
      "run": {"t_end": 1000, "n_sub": 50},
      "sweep": {"param": "tau1", "values": [0.5, 1.0]},
      "oracle": {"dt": 0.005, "replicates": 200, "seed": 1}
    }

``"mu": "critical"`` means ``mu = e^{-1} / tau2``, the largest admissible
recovery rate for the given delay.
"""

import json
import math
from dataclasses import dataclass, replace

from .dde_core import EpidemicState
from .delay_exponential import E_INV
from .errors import ConfigError, DelaySIRError
from .metrics import DEFAULT_PROMINENCE, DEFAULT_SUSTAIN
from .sir_models import DEFAULT_N_SUB, ModelParams

DEFAULT_T_END = 1000.0

SWEEP_PARAMS = ("tau1", "tau2", "mu", "omega", "gamma", "lambda")

_MODEL_KEYS = ("lambda", "gamma", "omega", "mu", "tau1", "tau2")
_FIELD = {"lambda": "lam"}
_SECTIONS = {"model", "initial", "run", "sweep", "oracle", "metrics"}


@dataclass(frozen=True)
class SweepSpec:
    param: str
    values: tuple


@dataclass(frozen=True)
class OracleSpec:
    dt: float = None
    replicates: int = 200
    seed: int = 0
    t_end: float = None


@dataclass(frozen=True)
class MetricsSpec:
    prominence: float = DEFAULT_PROMINENCE
    sustain: float = DEFAULT_SUSTAIN


@dataclass(frozen=True)
class ScenarioConfig:
    params: ModelParams
    initial: EpidemicState
    t_end: float = DEFAULT_T_END
    n_sub: int = DEFAULT_N_SUB
    record_every: int = 1
    sweep: SweepSpec = None
    oracle: OracleSpec = None
    metrics: MetricsSpec = MetricsSpec()

    def swept(self):
        """``(value, ModelParams)`` for every sweep value, or the base alone."""
        if self.sweep is None:
            return [(None, self.params)]
        return [(v, with_param(self.params, self.sweep.param, v)) for v in self.sweep.values]


def with_param(p, name, value):
    """Copy of ``p`` with one parameter replaced (``lambda`` names ``lam``)."""
    if name not in SWEEP_PARAMS:
        raise ConfigError(f"sweep.param must be one of {', '.join(SWEEP_PARAMS)}, got {name!r}")
    try:
        return replace(p, **{_FIELD.get(name, name): value})
    except DelaySIRError as exc:
        raise ConfigError(f"sweep value {name}={value!r}: {exc}") from None


def _section(doc, name, required):
    if name not in doc:
        if required:
            raise ConfigError(f"missing section {name!r}")
        return None
    sec = doc[name]
    if not isinstance(sec, dict):
        raise ConfigError(f"section {name!r} must be an object")
    return sec


def _number(sec, where, key, default=None):
    if key not in sec:
        if default is None:
            raise ConfigError(f"missing field {where}.{key} ({key!r})")
        return default
    value = sec[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}.{key} ({key!r}) must be a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{where}.{key} ({key!r}) must be finite")
    return float(value)


def _integer(sec, where, key, default=None, minimum=0):
    value = _number(sec, where, key, default)
    if value != int(value) or value < minimum:
        raise ConfigError(f"{where}.{key} ({key!r}) must be an integer >= {minimum}, got {sec.get(key)!r}")
    return int(value)


def _check_keys(sec, where, allowed):
    extra = sorted(set(sec) - set(allowed))
    if extra:
        raise ConfigError(f"unknown field(s) in {where}: {', '.join(map(repr, extra))}")


def _model(sec):
    _check_keys(sec, "model", _MODEL_KEYS)
    values = {}
    for key in ("lambda", "gamma", "omega", "tau1", "tau2"):
        values[key] = _number(sec, "model", key)
        if values[key] < 0:
            raise ConfigError(f"model.{key} ({key!r}) must be >= 0, got {sec[key]!r}")
    if sec.get("mu") == "critical":
        if values["tau2"] <= 0:
            raise ConfigError("model.mu ('mu') = 'critical' needs tau2 > 0")
        values["mu"] = E_INV / values["tau2"]
    else:
        values["mu"] = _number(sec, "model", "mu")
        if values["mu"] < 0:
            raise ConfigError(f"model.mu ('mu') must be >= 0, got {sec['mu']!r}")
    for key in ("lambda", "gamma", "omega"):
        if values[key] <= 0:
            raise ConfigError(f"model.{key} ({key!r}) must be > 0, got {sec[key]!r}")
    if values["mu"] * values["tau2"] > E_INV * (1 + 1e-12):
        raise ConfigError(
            f"model.mu * model.tau2 ('mu', 'tau2') = {values['mu'] * values['tau2']!r} exceeds 1/e"
        )
    try:
        return ModelParams(**{_FIELD.get(k, k): v for k, v in values.items()})
    except DelaySIRError as exc:
        raise ConfigError(f"model: {exc}") from None


def parse_document(doc):
    """Validate an already-decoded document into a :class:`ScenarioConfig`."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    extra = sorted(set(doc) - _SECTIONS)
    if extra:
        raise ConfigError(f"unknown section(s): {', '.join(map(repr, extra))}")
    params = _model(_section(doc, "model", True))

    init = _section(doc, "initial", True)
    _check_keys(init, "initial", ("s", "i", "r"))
    initial = EpidemicState(*(_number(init, "initial", k) for k in ("s", "i", "r")))
    if min(initial.s, initial.i, initial.r) < 0:
        raise ConfigError("initial counts must be >= 0")

    run = _section(doc, "run", False) or {}
    _check_keys(run, "run", ("t_end", "n_sub", "record_every"))
    t_end = _number(run, "run", "t_end", DEFAULT_T_END)
    if t_end <= 0:
        raise ConfigError(f"run.t_end ('t_end') must be > 0, got {t_end!r}")
    n_sub = _integer(run, "run", "n_sub", DEFAULT_N_SUB, minimum=10)
    record_every = _integer(run, "run", "record_every", 1, minimum=1)

    sweep = None
    sec = _section(doc, "sweep", False)
    if sec is not None:
        _check_keys(sec, "sweep", ("param", "values"))
        name = sec.get("param")
        if name not in SWEEP_PARAMS:
            raise ConfigError(f"sweep.param ('param') must be one of {', '.join(SWEEP_PARAMS)}, got {name!r}")
        raw = sec.get("values")
        if not isinstance(raw, list) or not raw:
            raise ConfigError("sweep.values ('values') must be a non-empty list")
        values = tuple(_number({"values": v}, "sweep", "values") for v in raw)
        sweep = SweepSpec(name, values)
        for v in values:
            with_param(params, name, v).require_positive_rates()

    oracle = None
    sec = _section(doc, "oracle", False)
    if sec is not None:
        _check_keys(sec, "oracle", ("dt", "replicates", "seed", "t_end"))
        oracle = OracleSpec(
            dt=_number(sec, "oracle", "dt", 0.0) or None,
            replicates=_integer(sec, "oracle", "replicates", 200, minimum=2),
            seed=_integer(sec, "oracle", "seed", 0),
            t_end=_number(sec, "oracle", "t_end", 0.0) or None,
        )

    metrics = MetricsSpec()
    sec = _section(doc, "metrics", False)
    if sec is not None:
        _check_keys(sec, "metrics", ("prominence", "sustain"))
        metrics = MetricsSpec(
            _number(sec, "metrics", "prominence", DEFAULT_PROMINENCE),
            _number(sec, "metrics", "sustain", DEFAULT_SUSTAIN),
        )

    return ScenarioConfig(params, initial, t_end, n_sub, record_every, sweep, oracle, metrics)


def parse_config(text):
    """Parse a JSON configuration document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from None
    return parse_document(doc)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
