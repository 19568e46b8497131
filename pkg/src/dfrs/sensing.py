"""Noisy observations and the two one-bit quantizers.

All noise samples are produced by inverse transforms of ``Generator.random``
draws, so a sensor's stream is fixed by the generator state and its row
position.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import special

from . import _rng
from .errors import DimensionMismatch, ModelError, OutOfRange

NOISE_FAMILIES = ("zero", "uniform", "rademacher", "asymmetric_two_point",
                  "truncated_gaussian", "raised_cosine")
CORRELATIONS = ("iid_per_snapshot", "fixed_per_sensor", "antithetic_pair")
MAX_EXPANSION_BITS = 64


def _solve_raised_cosine(w):
    """theta in [-pi, pi] with theta + sin(theta) = w, elementwise (three Halley steps)."""
    sgn = np.sign(w)
    w = np.abs(w)
    # series starts: 2 theta - theta^3 / 6 near 0, pi - cbrt(6 (pi - w)) near pi
    theta = np.where(w < 2.0, 0.5 * w + w ** 3 / 96.0,
                     math.pi - np.cbrt(6.0 * np.maximum(math.pi - w, 0.0)))
    floor = 0.5 * w
    theta = np.clip(theta, floor, math.pi)
    for _ in range(3):
        s, c = np.sin(theta), np.cos(theta)
        f, f1 = theta + s - w, 1.0 + c
        step = np.divide(2.0 * f * f1, 2.0 * f1 * f1 + f * s, out=np.zeros_like(theta), where=f1 > 0)
        theta = np.clip(theta - step, floor, math.pi)
    return sgn * theta


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean additive noise supported on [-b, b].

    ``params`` by family: asymmetric_two_point takes ``p`` (probability of
    ``+u``) and ``u``, the negative atom being ``-p u / (1 - p)``;
    truncated_gaussian takes ``sigma`` and optional truncation limits ``lo``
    and ``hi`` (default ``-b``, ``b``), and is recentred to zero mean.
    """

    family: str = "zero"
    b: float = 0.0
    params: dict = field(default_factory=dict)
    correlation: str = "iid_per_snapshot"

    def __post_init__(self):
        if self.family not in NOISE_FAMILIES:
            raise ModelError(f"unknown noise family {self.family!r}")
        if self.correlation not in CORRELATIONS:
            raise ModelError(f"unknown noise correlation {self.correlation!r}")
        if not self.b >= 0:
            raise ModelError("noise bound b must be nonnegative")
        if self.family != "zero" and self.b == 0:
            raise ModelError(f"{self.family} noise needs b > 0")
        unknown = set(self.params) - set(self._defaults())
        if unknown:
            raise ModelError(f"unknown parameters for {self.family}: {sorted(unknown)}")
        lo, hi = self.support
        if lo < -self.b * (1 + 1e-12) or hi > self.b * (1 + 1e-12):
            raise ModelError(f"{self.family} noise support [{lo}, {hi}] exceeds [-b, b]")

    def _defaults(self):
        b = self.b
        return {
            "zero": {},
            "uniform": {},
            "rademacher": {},
            "asymmetric_two_point": {"p": 0.2, "u": b},
            "truncated_gaussian": {"sigma": b / 2, "lo": -b, "hi": b},
            "raised_cosine": {},
        }[self.family]

    def param(self, name):
        return float(self.params.get(name, self._defaults()[name]))

    @property
    def atoms(self):
        """(plus value, minus value, P(plus)) for the two-point family."""
        p, u = self.param("p"), self.param("u")
        if not 0 < p < 1:
            raise ModelError("asymmetric_two_point needs 0 < p < 1")
        return u, -p * u / (1 - p), p

    def _gauss(self):
        sigma, lo, hi = self.param("sigma"), self.param("lo"), self.param("hi")
        if not (sigma > 0 and lo < hi):
            raise ModelError("truncated_gaussian needs sigma > 0 and lo < hi")
        alpha, beta = lo / sigma, hi / sigma
        phi_a, phi_b = special.ndtr(alpha), special.ndtr(beta)
        mass = phi_b - phi_a
        mean = sigma * (math.exp(-alpha**2 / 2) - math.exp(-beta**2 / 2)) / (math.sqrt(2 * math.pi) * mass)
        return sigma, phi_a, mass, mean

    @property
    def support(self):
        f, b = self.family, self.b
        if f == "zero":
            return 0.0, 0.0
        if f == "asymmetric_two_point":
            plus, minus, _ = self.atoms
            return minus, plus
        if f == "truncated_gaussian":
            _, _, _, mean = self._gauss()
            return self.param("lo") - mean, self.param("hi") - mean
        return -b, b

    def from_uniform(self, u):
        """Map Unif[0,1) draws to noise samples (inverse-cdf transform)."""
        u = np.asarray(u, dtype=float)
        f, b = self.family, self.b
        if f == "zero":
            return np.zeros_like(u)
        if f == "uniform":
            return b * (2.0 * u - 1.0)
        if f == "rademacher":
            return np.where(u < 0.5, b, -b)
        if f == "asymmetric_two_point":
            plus, minus, p = self.atoms
            return np.where(u < p, plus, minus)
        if f == "truncated_gaussian":
            sigma, phi_a, mass, mean = self._gauss()
            z = sigma * special.ndtri(np.clip(phi_a + u * mass, 1e-300, 1.0 - 1e-16))
            return np.clip(z, self.param("lo"), self.param("hi")) - mean
        return b / math.pi * _solve_raised_cosine(math.pi * (2.0 * u - 1.0))

    def pdf(self, z):
        """Density for the continuous families (used for Fisher information)."""
        z = np.asarray(z, dtype=float)
        f, b = self.family, self.b
        if f == "uniform":
            return np.where(np.abs(z) <= b, 0.5 / b, 0.0)
        if f == "raised_cosine":
            return np.where(np.abs(z) <= b, (1.0 + np.cos(math.pi * z / b)) / (2.0 * b), 0.0)
        if f == "truncated_gaussian":
            sigma, _, mass, mean = self._gauss()
            y = z + mean
            inside = (y >= self.param("lo")) & (y <= self.param("hi"))
            return np.where(inside, np.exp(-0.5 * (y / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi) * mass), 0.0)
        raise ModelError(f"{f} noise has no density")

    def cdf(self, z):
        z = np.asarray(z, dtype=float)
        f, b = self.family, self.b
        if f == "zero":
            return (z >= 0).astype(float)
        if f == "uniform":
            return np.clip((z + b) / (2 * b), 0.0, 1.0)
        if f == "rademacher":
            return np.where(z < -b, 0.0, np.where(z < b, 0.5, 1.0))
        if f == "asymmetric_two_point":
            plus, minus, p = self.atoms
            return np.where(z < minus, 0.0, np.where(z < plus, 1 - p, 1.0))
        if f == "truncated_gaussian":
            sigma, phi_a, mass, mean = self._gauss()
            y = np.clip(z + mean, self.param("lo"), self.param("hi"))
            return (special.ndtr(y / sigma) - phi_a) / mass
        t = np.clip(z / b, -1.0, 1.0) * math.pi
        return (t + math.pi + np.sin(t)) / (2 * math.pi)

    def sample(self, N, T, rng):
        """Noise matrix of shape (N, T) honouring the snapshot-correlation mode."""
        if self.family == "zero":
            return np.zeros((N, T))  # degenerate law, consumes no draws
        rng = _rng.as_generator(rng)
        if self.correlation == "iid_per_snapshot":
            return self.from_uniform(rng.random((N, T)))
        if self.correlation == "fixed_per_sensor":
            return np.repeat(self.from_uniform(rng.random((N, 1))), T, axis=1)
        base = self.from_uniform(rng.random((N, (T + 1) // 2)))
        z = np.empty((N, T))
        z[:, 0::2] = base
        z[:, 1::2] = -base[:, : T // 2]
        return z


@dataclass(frozen=True)
class ThresholdModel:
    """Comparator thresholds Unif[-c, c], independent across sensors."""

    c: float
    correlation: str = "iid_per_snapshot"

    def __post_init__(self):
        if not self.c > 0:
            raise ModelError("threshold range c must be positive")
        if self.correlation not in ("iid_per_snapshot", "fixed_per_sensor"):
            raise ModelError(f"unknown threshold correlation {self.correlation!r}")

    def sample(self, N, T, rng):
        rng = _rng.as_generator(rng)
        if self.correlation == "iid_per_snapshot":
            u = rng.random((N, T))
        else:
            u = np.repeat(rng.random((N, 1)), T, axis=1)
        u *= 2.0 * self.c
        u -= self.c
        return u


@dataclass(frozen=True, eq=False)
class ObservationBatch:
    Y: np.ndarray  # (sensors, snapshots)
    c: float
    field_kind: str = ""
    seed: object = None


def dynamic_range(field_model, noise):
    return field_model.a + noise.b


def observe(field_model, dep, noise, seed):
    """Y_it = s_t(x_i) + Z_it for every sensor of ``dep`` and every snapshot."""
    if field_model.d != dep.partition.d:
        raise DimensionMismatch(f"field has d={field_model.d}, partition has d={dep.partition.d}")
    s = field_model.values_all(dep.positions)
    Z = noise.sample(dep.N, field_model.T, _rng.as_generator(seed))
    return ObservationBatch(s + Z, dynamic_range(field_model, noise), field_model.kind, seed)


def quantize_threshold(Y, R):
    """1(Y > R); ties go to 0."""
    bits = np.asarray(Y) > np.asarray(R)
    return int(bits) if bits.ndim == 0 else bits.astype(np.uint8)


def expansion_bit(ytilde, alpha):
    """The ``alpha``-th binary digit of ``ytilde`` in [0, 1]; 1 is read as 0.111..."""
    ytilde = np.asarray(ytilde, dtype=float)
    alpha = np.asarray(alpha)
    digit = np.fmod(np.floor(np.ldexp(ytilde, alpha)), 2.0)
    bits = np.where(ytilde >= 1.0, 1, digit).astype(np.uint8)
    return int(bits) if bits.ndim == 0 else bits


def quantize_bit_expansion(Y, c, rng):
    """Report a geometrically chosen binary digit of (Y + c) / (2c)."""
    Y = np.asarray(Y, dtype=float)
    if np.any(np.abs(Y) > c):
        raise OutOfRange(f"observation outside [-{c}, {c}]")
    rng = _rng.as_generator(rng)
    alpha = np.minimum(rng.geometric(0.5, size=Y.shape), MAX_EXPANSION_BITS)
    return expansion_bit((Y + c) / (2.0 * c), alpha)


def conditional_prob(y, c):
    """P(B = 1 | Y = y) = (y + c) / (2c)."""
    y = np.asarray(y, dtype=float)
    if np.any(np.abs(y) > c):
        raise OutOfRange(f"y outside [-{c}, {c}]")
    p = (y + c) / (2.0 * c)
    return float(p) if p.ndim == 0 else p


@dataclass(frozen=True, eq=False)
class EquivalenceResult:
    y: np.ndarray
    expected: np.ndarray
    p_threshold: np.ndarray
    p_expansion: np.ndarray
    trials: int

    @property
    def tolerance(self):
        """Per-point 4-sigma binomial tolerance about the expected curve."""
        return 4.0 * np.sqrt(self.expected * (1 - self.expected) / self.trials)

    @property
    def max_deviation(self):
        return float(np.max(np.abs(self.p_threshold - self.p_expansion)))

    @property
    def threshold(self):
        """Worst-case 4-sigma scale sqrt(0.25 / trials) used for the curve comparison."""
        return 4.0 * math.sqrt(0.25 / self.trials)

    @property
    def within_tolerance(self):
        tol = self.tolerance
        return bool(np.all(np.abs(self.p_threshold - self.expected) <= tol)
                    and np.all(np.abs(self.p_expansion - self.expected) <= tol))


def equivalence_test(c, y_grid, trials, seed):
    """Empirical P(B=1 | Y=y) for both quantizers on independent streams per grid point."""
    y_grid = np.asarray(y_grid, dtype=float)
    p_th = np.empty(y_grid.size)
    p_ex = np.empty(y_grid.size)
    for i, y in enumerate(y_grid):
        R = ThresholdModel(c).sample(trials, 1, _rng.stream(seed, _rng.EQUIVALENCE, i, 0))
        p_th[i] = np.mean(quantize_threshold(np.full((trials, 1), y), R))
        p_ex[i] = np.mean(quantize_bit_expansion(np.full(trials, y), c,
                                                 _rng.stream(seed, _rng.EQUIVALENCE, i, 1)))
    return EquivalenceResult(y_grid, conditional_prob(y_grid, c), p_th, p_ex, trials)


def empirical_bit_mean(s, noise, c, trials, seed):
    """Mean of threshold-quantized bits for signal ``s`` under ``noise``; returns (mean, expected, sigma)."""
    rng = _rng.as_generator(seed)
    Y = s + noise.sample(trials, 1, rng)
    R = ThresholdModel(c).sample(trials, 1, rng)
    mean = float(np.mean(quantize_threshold(Y, R)))
    p = (s + c) / (2.0 * c)
    return mean, p, math.sqrt(p * (1 - p) / trials)
