"""Deterministic bounded field snapshots on the unit hypercube.

Each field kind knows how to evaluate itself and how to compute its local
and global moduli of continuity in closed form.  ``grid_local_modulus`` and
``grid_global_modulus`` are brute-force oracles usable with any field,
including user subclasses that only implement ``values``.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import BadSnapshot, DimensionMismatch, ModelError, OutOfDomain

TWO_PI = 2.0 * math.pi


def check_point(x, d):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (d,):
        raise DimensionMismatch(f"expected a point in R^{d}, got shape {x.shape}")
    if not np.all(np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise OutOfDomain(f"point {x.tolist()} lies outside [0,1]^{d}")
    return x


def check_points(points, d):
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1 and d == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[1] != d:
        raise DimensionMismatch(f"expected points of shape (P, {d}), got {pts.shape}")
    if np.any(pts < 0.0) or np.any(pts > 1.0) or not np.all(np.isfinite(pts)):
        raise OutOfDomain("some points lie outside the unit hypercube")
    return pts


def max_linear(w, delta, lo, hi):
    """Maximum of ``w . y`` over the Euclidean ball ``|y| <= delta`` cut by the box ``lo <= y <= hi``.

    ``lo <= 0 <= hi`` componentwise.  The maximizer has the form
    ``clip(lam * w, lo, hi)``; ``lam`` is found by bisection on the norm.
    """
    w = np.asarray(w, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if delta <= 0.0 or not np.any(w):
        return 0.0
    corner = np.where(w > 0, hi, np.where(w < 0, lo, 0.0))
    if np.linalg.norm(corner) <= delta:
        return float(w @ corner)
    lam_lo, lam_hi = 0.0, delta / np.linalg.norm(w)
    while np.linalg.norm(np.clip(lam_hi * w, lo, hi)) < delta:
        lam_hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lam_lo + lam_hi)
        if mid in (lam_lo, lam_hi):
            break
        if np.linalg.norm(np.clip(mid * w, lo, hi)) < delta:
            lam_lo = mid
        else:
            lam_hi = mid
    return float(w @ np.clip(lam_lo * w, lo, hi))


def _local_span(w, x, delta):
    """(max decrease, max increase) of ``w . x'`` for ``x'`` in the delta-ball around ``x`` within G."""
    lo, hi = -x, 1.0 - x
    up = max_linear(w, delta, lo, hi)
    down = max_linear(-np.asarray(w, dtype=float), delta, lo, hi)
    return down, up


def _global_span(w, delta):
    d = len(w)
    return max_linear(w, delta, -np.ones(d), np.ones(d))


class FieldModel:
    """Base class: a sequence of ``T`` snapshots ``s_t : [0,1]^d -> [-a, a]``.

    Subclasses implement ``_values(points, t0)`` with a zero-based snapshot
    index; public methods take one-based snapshot indices.
    """

    kind = "custom"
    d: int
    a: float

    @property
    def T(self):
        raise NotImplementedError

    def _values(self, points, t0):
        raise NotImplementedError

    def sup_norm(self):
        raise NotImplementedError

    def _finish(self):
        if self.d < 1:
            raise ModelError("dimension d must be a positive integer")
        if self.T < 1:
            raise ModelError("a field needs at least one snapshot")
        sup = self.sup_norm()
        if self.a is None:
            object.__setattr__(self, "a", float(sup))
        if not self.a > 0:
            raise ModelError("dynamic range a must be positive")
        if sup > self.a * (1 + 1e-12):
            raise ModelError(f"field sup-norm {sup} exceeds the dynamic range a={self.a}")

    def _t0(self, t):
        if not (isinstance(t, (int, np.integer)) and 1 <= t <= self.T):
            raise BadSnapshot(f"snapshot {t!r} outside 1..{self.T}")
        return int(t) - 1

    def evaluate(self, x, t):
        x = check_point(x, self.d)
        return float(self._values(x[None, :], self._t0(t))[0])

    def values(self, points, t):
        """Vectorized evaluation at ``points`` of shape (P, d)."""
        return self._values(check_points(points, self.d), self._t0(t))

    def values_all(self, points):
        """Field values at every point and snapshot, shape (P, T)."""
        pts = check_points(points, self.d)
        return np.stack([self._values(pts, t0) for t0 in range(self.T)], axis=1)

    def local_modulus(self, delta, x, t):
        raise NotImplementedError

    def global_modulus(self, delta, t):
        raise NotImplementedError

    def lipschitz_form(self):
        """``(Delta, gamma)`` with ``global_modulus(delta) <= Delta * delta**gamma``, or None."""
        return None


def _check_delta(delta):
    if not delta >= 0:
        raise ModelError(f"delta must be nonnegative, got {delta}")
    return float(delta)


@dataclass(frozen=True)
class ConstantField(FieldModel):
    values_per_snapshot: tuple
    d: int = 1
    a: float = None
    kind = "constant"

    def __post_init__(self):
        object.__setattr__(self, "values_per_snapshot",
                           tuple(float(v) for v in self.values_per_snapshot))
        self._finish()

    @property
    def T(self):
        return len(self.values_per_snapshot)

    def sup_norm(self):
        return max(abs(v) for v in self.values_per_snapshot)

    def _values(self, points, t0):
        return np.full(points.shape[0], self.values_per_snapshot[t0])

    def local_modulus(self, delta, x, t):
        _check_delta(delta)
        check_point(x, self.d)
        self._t0(t)
        return 0.0

    def global_modulus(self, delta, t):
        _check_delta(delta)
        self._t0(t)
        return 0.0

    def lipschitz_form(self):
        return (0.0, 1.0)


@dataclass(frozen=True)
class LipschitzLinearField(FieldModel):
    """``s_t(x) = slope . x + offsets[t]``."""

    slope: tuple
    offsets: tuple
    a: float = None
    kind = "lipschitz_linear"

    def __post_init__(self):
        object.__setattr__(self, "slope", tuple(float(v) for v in self.slope))
        object.__setattr__(self, "offsets", tuple(float(v) for v in self.offsets))
        self._finish()

    @property
    def d(self):
        return len(self.slope)

    @property
    def T(self):
        return len(self.offsets)

    def sup_norm(self):
        w = np.asarray(self.slope)
        hi = np.maximum(w, 0).sum()
        lo = np.minimum(w, 0).sum()
        return max(max(abs(o + hi), abs(o + lo)) for o in self.offsets)

    def _values(self, points, t0):
        return points @ np.asarray(self.slope) + self.offsets[t0]

    def local_modulus(self, delta, x, t):
        delta = _check_delta(delta)
        x = check_point(x, self.d)
        self._t0(t)
        return max(_local_span(self.slope, x, delta))

    def global_modulus(self, delta, t):
        delta = _check_delta(delta)
        self._t0(t)
        return _global_span(self.slope, delta)

    def lipschitz_form(self):
        return (float(np.linalg.norm(self.slope)), 1.0)


def _sin_range(lo, hi):
    """min and max of sin over the interval [lo, hi]."""
    if hi - lo >= TWO_PI:
        return -1.0, 1.0
    vals = [math.sin(lo), math.sin(hi)]
    smin, smax = min(vals), max(vals)
    peak = math.pi / 2 + TWO_PI * math.ceil((lo - math.pi / 2) / TWO_PI)
    if peak <= hi:
        smax = 1.0
    trough = -math.pi / 2 + TWO_PI * math.ceil((lo + math.pi / 2) / TWO_PI)
    if trough <= hi:
        smin = -1.0
    return smin, smax


@dataclass(frozen=True)
class SinusoidalField(FieldModel):
    """``s_t(x) = amplitude * sin(2 pi frequency . x + phases[t])``."""

    amplitude: float
    frequency: tuple
    phases: tuple
    a: float = None
    kind = "sinusoidal"

    def __post_init__(self):
        object.__setattr__(self, "amplitude", float(self.amplitude))
        object.__setattr__(self, "frequency", tuple(float(v) for v in self.frequency))
        object.__setattr__(self, "phases", tuple(float(v) for v in self.phases))
        self._finish()

    @property
    def d(self):
        return len(self.frequency)

    @property
    def T(self):
        return len(self.phases)

    def sup_norm(self):
        return abs(self.amplitude)

    def _values(self, points, t0):
        theta = TWO_PI * (points @ np.asarray(self.frequency)) + self.phases[t0]
        return self.amplitude * np.sin(theta)

    def local_modulus(self, delta, x, t):
        delta = _check_delta(delta)
        x = check_point(x, self.d)
        t0 = self._t0(t)
        down, up = _local_span(self.frequency, x, delta)
        theta0 = TWO_PI * float(np.dot(self.frequency, x)) + self.phases[t0]
        smin, smax = _sin_range(theta0 - TWO_PI * down, theta0 + TWO_PI * up)
        s0 = math.sin(theta0)
        return abs(self.amplitude) * max(smax - s0, s0 - smin, 0.0)

    def global_modulus(self, delta, t):
        # Tight whenever a steepest-slope segment of length delta fits inside G.
        delta = _check_delta(delta)
        self._t0(t)
        width = TWO_PI * _global_span(self.frequency, delta)
        return 2.0 * abs(self.amplitude) * math.sin(min(width, math.pi) / 2.0)

    def lipschitz_form(self):
        return (TWO_PI * abs(self.amplitude) * float(np.linalg.norm(self.frequency)), 1.0)


@dataclass(frozen=True)
class PiecewiseStepField(FieldModel):
    """``levels[0]`` where ``normal . x < threshold``, ``levels[1]`` elsewhere; constant in time."""

    normal: tuple
    threshold: float
    levels: tuple
    n_snapshots: int = 1
    a: float = None
    kind = "piecewise_step"

    def __post_init__(self):
        object.__setattr__(self, "normal", tuple(float(v) for v in self.normal))
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        if len(self.levels) != 2:
            raise ModelError("a step field has exactly two levels")
        if not np.any(self.normal):
            raise ModelError("step normal must be nonzero")
        self._finish()

    @property
    def d(self):
        return len(self.normal)

    @property
    def T(self):
        return int(self.n_snapshots)

    @property
    def jump(self):
        return abs(self.levels[1] - self.levels[0])

    def sup_norm(self):
        return max(abs(v) for v in self.levels)

    def _values(self, points, t0):
        side = points @ np.asarray(self.normal) >= self.threshold
        return np.where(side, self.levels[1], self.levels[0])

    def _splits_domain(self):
        w = np.asarray(self.normal)
        return np.minimum(w, 0).sum() < self.threshold <= np.maximum(w, 0).sum()

    def local_modulus(self, delta, x, t):
        delta = _check_delta(delta)
        x = check_point(x, self.d)
        self._t0(t)
        if delta == 0.0:
            return 0.0
        proj = float(np.dot(self.normal, x))
        down, up = _local_span(self.normal, x, delta)
        crosses = proj + up >= self.threshold if proj < self.threshold else proj - down < self.threshold
        return self.jump if crosses else 0.0

    def global_modulus(self, delta, t):
        delta = _check_delta(delta)
        self._t0(t)
        return self.jump if delta > 0 and self._splits_domain() else 0.0


def _lattice(center, half_width, x, delta, points_per_axis, chunk=2_000_000):
    """Yield chunks of lattice points in the box ``center +/- half_width`` cut to G and the delta-ball around ``x``."""
    d = x.size
    axes = [np.linspace(max(0.0, center[k] - half_width), min(1.0, center[k] + half_width),
                        points_per_axis) for k in range(d)]
    rest = int(np.prod([len(a) for a in axes[1:]])) if d > 1 else 1
    step = max(1, chunk // rest)
    for start in range(0, len(axes[0]), step):
        grids = np.meshgrid(axes[0][start:start + step], *axes[1:], indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        yield pts[np.linalg.norm(pts - x, axis=1) <= delta]


def grid_local_modulus(field_model, delta, x, t, points_per_axis=1001):
    """Brute-force local modulus: lattice search in the delta-ball, refined once around the argmax."""
    delta = _check_delta(delta)
    x = check_point(x, field_model.d)
    if delta == 0.0:
        return 0.0
    s0 = field_model.values(x[None, :], t)[0]
    best, arg = 0.0, x

    def scan(center, half_width):
        nonlocal best, arg
        for pts in _lattice(center, half_width, x, delta, points_per_axis):
            if len(pts) == 0:
                continue
            diff = np.abs(field_model.values(pts, t) - s0)
            i = int(np.argmax(diff))
            if diff[i] > best:
                best, arg = float(diff[i]), pts[i]

    scan(x, delta)
    scan(arg.copy(), 2.0 * delta / (points_per_axis - 1))
    return best


def grid_global_modulus(field_model, delta, t, centers_per_axis=201, points_per_axis=1001):
    """Brute-force global modulus: max of the local oracle over a lattice of centers."""
    d = field_model.d
    axis = np.linspace(0.0, 1.0, centers_per_axis)
    centers = np.stack([g.ravel() for g in np.meshgrid(*([axis] * d), indexing="ij")], axis=1)
    return max(grid_local_modulus(field_model, delta, c, t, points_per_axis) for c in centers)


KINDS = {
    "constant": ConstantField,
    "lipschitz_linear": LipschitzLinearField,
    "sinusoidal": SinusoidalField,
    "piecewise_step": PiecewiseStepField,
}


def evaluate(field_model, x, t):
    return field_model.evaluate(x, t)


def local_modulus(field_model, delta, x, t):
    return field_model.local_modulus(delta, x, t)


def global_modulus(field_model, delta, t):
    return field_model.global_modulus(delta, t)
