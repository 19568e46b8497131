"""Experiment configuration: the ``ExperimentConfig`` value type and the flat config-file parser.

Config files hold one ``section.key = value`` assignment per line; ``#``
starts a comment.  Lists are comma separated and point lists separate
points with ``;``::

    experiment_id = sinusoid_demo
    seed = 20240601
    trials = 10000
    field.kind = sinusoidal
    field.amplitude = 1.0
    field.frequency = 1.0, 0.5
    field.phases = 0, 0.7, 1.4, 2.1, 2.8, 3.5, 4.2, 4.9, 5.6
    field.a = 1.0
    partition.l = 4
    partition.m = 3
    deployment.mode = grid
    deployment.n = 6
    noise.family = uniform
    noise.b = 0.5
    eval.grid = 3
"""

from dataclasses import dataclass, field, replace
import functools

import numpy as np

from . import _rng
from .coding import Schedule
from .errors import ConfigError, DimensionMismatch, DivisibilityError, ModelError
from .fields import KINDS, ConstantField, FieldModel, LipschitzLinearField, PiecewiseStepField, SinusoidalField, check_points
from .geometry import CellPartition, deploy_grid, deploy_iid_uniform, sensors_per_subcell
from .sensing import NoiseModel, ThresholdModel


@dataclass(frozen=True)
class DeploymentSpec:
    mode: str = "grid"
    n: int = None
    N: int = None
    seed: int = None

    def __post_init__(self):
        if self.mode not in ("grid", "iid_uniform"):
            raise ModelError(f"unknown deployment mode {self.mode!r}")
        if self.mode == "iid_uniform" and self.N is None:
            raise ModelError("iid_uniform deployment needs deployment.N")


def grid_points(d, per_axis):
    axis = np.linspace(0.0, 1.0, per_axis) if per_axis > 1 else np.array([0.5])
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([g.ravel() for g in mesh[::-1]], axis=1)[:, ::-1]


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    field: FieldModel
    partition: CellPartition
    deployment: DeploymentSpec = DeploymentSpec(n=1)
    noise: NoiseModel = NoiseModel()
    threshold_correlation: str = "iid_per_snapshot"
    eval_points: np.ndarray = None
    eval_snapshots: tuple = None
    trials: int = 1000
    seed: int = 0
    clamp: bool = False
    experiment_id: str = "experiment"
    seed_generated: bool = False
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.field.d != self.partition.d:
            raise DimensionMismatch(f"field has d={self.field.d}, partition has d={self.partition.d}")
        pts = grid_points(self.partition.d, 3) if self.eval_points is None else self.eval_points
        object.__setattr__(self, "eval_points", check_points(pts, self.partition.d))
        snaps = tuple(range(1, self.field.T + 1)) if self.eval_snapshots is None else tuple(self.eval_snapshots)
        for t in snaps:
            self.field._t0(t)
        object.__setattr__(self, "eval_snapshots", snaps)
        if not (isinstance(self.trials, (int, np.integer)) and self.trials >= 1):
            raise ModelError("trials must be a positive integer")
        self.schedule  # M | T
        self.sensors_per_subcell

    @property
    def c(self):
        return self.field.a + self.noise.b

    @property
    def threshold(self):
        return ThresholdModel(self.c, self.threshold_correlation)

    @property
    def schedule(self):
        return Schedule(self.partition.M, self.field.T)

    @property
    def sensors_per_subcell(self):
        dep, P = self.deployment, self.partition
        if dep.mode != "grid":
            return None
        if dep.n is not None:
            if dep.N is not None and dep.N != dep.n * P.L * P.M:
                raise DivisibilityError(f"deployment.N={dep.N} != n*L*M={dep.n * P.L * P.M}")
            return dep.n
        if dep.N is None:
            raise ModelError("grid deployment needs deployment.n or deployment.N")
        return sensors_per_subcell(dep.N, P.L, P.M)

    @property
    def N(self):
        n = self.sensors_per_subcell
        return n * self.partition.L * self.partition.M if n is not None else self.deployment.N

    def build_deployment(self):
        return _build_deployment(self.partition, self.deployment, self.sensors_per_subcell, self.seed)

    def replace(self, **changes):
        return replace(self, **changes)


@functools.lru_cache(maxsize=16)
def _build_deployment(partition, spec, n, seed):
    if spec.mode == "grid":
        return deploy_grid(partition, n)
    dseed = spec.seed if spec.seed is not None else _rng.stream(seed, _rng.DEPLOYMENT)
    return deploy_iid_uniform(partition, spec.N, dseed)


# ---------------------------------------------------------------- parsing

KNOWN_KEYS = {
    "experiment_id", "seed", "trials",
    "field.kind", "field.d", "field.T", "field.a", "field.values", "field.slope", "field.offsets",
    "field.amplitude", "field.frequency", "field.phases", "field.normal", "field.threshold",
    "field.levels",
    "partition.d", "partition.l", "partition.m",
    "deployment.mode", "deployment.n", "deployment.N", "deployment.seed",
    "noise.family", "noise.b", "noise.correlation",
    "threshold.correlation",
    "eval.points", "eval.grid", "eval.snapshots",
    "reconstruction.clamp",
    "scaling.N", "scaling.L_rule", "scaling.l", "scaling.trials",
    "equivalence.c", "equivalence.points", "equivalence.trials",
    "deploy.N", "deploy.delta", "deploy.trials",
}


def parse_text(text):
    """``{key: (raw value, line number)}`` from config text."""
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS and not key.startswith("noise.params."):
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in entries:
            raise ConfigError(f"duplicate key {key!r} (first set on line {entries[key][1]})", lineno)
        entries[key] = (value, lineno)
    return entries


class _Reader:
    def __init__(self, entries):
        self.entries = entries

    def line(self, key):
        return self.entries[key][1] if key in self.entries else None

    def has(self, key):
        return key in self.entries

    def _convert(self, key, fn, what):
        value, lineno = self.entries[key]
        try:
            return fn(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected {what}, got {value!r}", lineno) from None

    def str(self, key, default=None):
        return self.entries[key][0] if key in self.entries else default

    def int(self, key, default=None):
        if key not in self.entries:
            return default
        return self._convert(key, _to_int, "an integer")

    def float(self, key, default=None):
        if key not in self.entries:
            return default
        return self._convert(key, float, "a number")

    def floats(self, key, default=None):
        if key not in self.entries:
            return default
        return self._convert(key, lambda v: tuple(float(s) for s in v.split(",")), "a comma-separated list of numbers")

    def ints(self, key, default=None):
        if key not in self.entries:
            return default
        return self._convert(key, lambda v: tuple(_to_int(s) for s in v.split(",")), "a comma-separated list of integers")

    def bool(self, key, default=False):
        if key not in self.entries:
            return default
        return self._convert(key, _to_bool, "true or false")

    def section_line(self, prefix):
        lines = [ln for k, (_, ln) in self.entries.items() if k.startswith(prefix)]
        return min(lines) if lines else None


def _to_int(s):
    f = float(s)
    if not f.is_integer():
        raise ValueError(s)
    return int(f)


def _to_bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(s)


def _per_snapshot(values, T):
    if values is None:
        return None
    if len(values) == 1 and T is not None:
        return values * T
    if T is not None and len(values) != T:
        raise ValueError(f"expected {T} per-snapshot values, got {len(values)}")
    return values


def _build_field(r):
    if r.section_line("field.") is None:
        # equivalence and deployment runs need no field; c defaults to 1
        return ConstantField((0.0,), r.int("partition.d", 1), 1.0)
    kind = r.str("field.kind", "constant")
    if kind not in KINDS:
        raise ConfigError(f"unknown field kind {kind!r}", r.line("field.kind"))
    T, a = r.int("field.T"), r.float("field.a")
    required = {"constant": ["field.values"], "lipschitz_linear": ["field.slope", "field.offsets"],
                "sinusoidal": ["field.amplitude", "field.frequency", "field.phases"],
                "piecewise_step": ["field.normal", "field.threshold", "field.levels"]}[kind]
    for key in required:
        if not r.has(key):
            raise ConfigError(f"field kind {kind!r} needs {key}", r.line("field.kind"))
    if kind == "constant":
        return ConstantField(_per_snapshot(r.floats("field.values"), T), r.int("field.d", 1), a)
    if kind == "lipschitz_linear":
        return LipschitzLinearField(r.floats("field.slope"), _per_snapshot(r.floats("field.offsets"), T), a)
    if kind == "sinusoidal":
        return SinusoidalField(r.float("field.amplitude"), r.floats("field.frequency"),
                               _per_snapshot(r.floats("field.phases"), T), a)
    return PiecewiseStepField(r.floats("field.normal"), r.float("field.threshold"),
                              r.floats("field.levels"), T or 1, a)


def _points(text):
    pts = [tuple(float(v) for v in p.split(",")) for p in text.split(";") if p.strip()]
    if not pts or len({len(p) for p in pts}) != 1:
        raise ValueError(text)
    return np.asarray(pts)


def _guard(r, prefix, build):
    try:
        return build()
    except (DivisibilityError, DimensionMismatch):
        raise
    except ConfigError:
        raise
    except (ModelError, ValueError) as exc:
        raise ConfigError(str(exc), r.section_line(prefix)) from None


def config_from_entries(entries, seed_override=None):
    r = _Reader(entries)
    fld = _guard(r, "field.", lambda: _build_field(r))
    d = r.int("partition.d", fld.d)
    if d != fld.d:
        raise DimensionMismatch(f"partition.d={d} but the field has d={fld.d}")
    partition = _guard(r, "partition.", lambda: CellPartition(d, r.int("partition.l", 1), r.int("partition.m", 1)))
    dep = _guard(r, "deployment.", lambda: DeploymentSpec(
        r.str("deployment.mode", "grid"), r.int("deployment.n"), r.int("deployment.N"), r.int("deployment.seed")))
    if dep.mode == "grid" and dep.n is None and dep.N is None:
        dep = replace(dep, n=1)
    params = {k[len("noise.params."):]: r.float(k) for k in entries if k.startswith("noise.params.")}
    noise = _guard(r, "noise.", lambda: NoiseModel(r.str("noise.family", "zero"), r.float("noise.b", 0.0),
                                                   params, r.str("noise.correlation", "iid_per_snapshot")))
    thr = r.str("threshold.correlation", "iid_per_snapshot")
    _guard(r, "threshold.", lambda: ThresholdModel(1.0, thr))

    if r.has("eval.points"):
        pts = r._convert("eval.points", _points, "';'-separated points")
    else:
        per_axis = r.int("eval.grid", 3)
        if per_axis < 1:
            raise ConfigError("eval.grid must be positive", r.line("eval.grid"))
        pts = grid_points(d, per_axis)
    snaps = None
    if r.has("eval.snapshots") and r.str("eval.snapshots").strip().lower() != "all":
        snaps = r.ints("eval.snapshots")

    seed = seed_override if seed_override is not None else r.int("seed")
    generated = seed is None
    if generated:
        seed = _rng.fresh_seed()
    extras = {k: v for k, (v, _) in entries.items() if k.split(".")[0] in ("scaling", "equivalence", "deploy")}
    kwargs = dict(field=fld, partition=partition, deployment=dep, noise=noise, threshold_correlation=thr,
                  eval_points=pts, eval_snapshots=snaps, trials=r.int("trials", 1000), seed=int(seed),
                  clamp=r.bool("reconstruction.clamp"), experiment_id=r.str("experiment_id", "experiment"),
                  seed_generated=generated, extras=extras)
    return _guard(r, "eval.", lambda: ExperimentConfig(**kwargs))


def load_config(path, seed_override=None):
    with open(path, encoding="utf-8") as fh:
        return config_from_entries(parse_text(fh.read()), seed_override)


def loads_config(text, seed_override=None):
    return config_from_entries(parse_text(text), seed_override)
