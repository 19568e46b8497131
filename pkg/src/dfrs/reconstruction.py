"""Fusion-center estimators.

The default estimator averages the n bits received for supercell j at
snapshot t and maps the mean affinely onto [-c, c]; the field estimate is the
resulting piecewise-constant function.  A second estimator inverts a known
dither law through mu(s) = 1 - 2 P_X(-s).
"""

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import _rng
from .coding import decode, encode, read_batch, write_batch
from .errors import ModelError, NonMonotoneDither, OutOfRange, WrongCount
from .fields import check_point, check_points
from .sensing import observe, quantize_threshold


def estimate_supercell(bits, n, c):
    """2c * mean(bits) - c over exactly ``n`` received bits."""
    bits = np.asarray(bits).ravel()
    if bits.size != n:
        raise WrongCount(f"expected {n} bits, received {bits.size}")
    return 2.0 * c * (bits.sum(dtype=float) / n) - c


@dataclass(frozen=True, eq=False)
class FieldEstimate:
    partition: object
    s_hat: np.ndarray  # (T, L), unclamped
    c: float
    clamp: bool = False
    a: float = None
    counts: np.ndarray = None  # bits received per (t, j)

    def __post_init__(self):
        s_hat = np.asarray(self.s_hat, dtype=float)
        if s_hat.ndim != 2 or s_hat.shape[1] != self.partition.L:
            raise ModelError(f"s_hat must have shape (T, {self.partition.L}), got {s_hat.shape}")
        if self.clamp and self.a is None:
            raise ModelError("clamping needs the dynamic range a")
        object.__setattr__(self, "s_hat", s_hat)

    @property
    def T(self):
        return self.s_hat.shape[0]

    @property
    def empty_cells(self):
        """(t, j) pairs, one-based, that received no bits."""
        if self.counts is None:
            return []
        return [(t + 1, j + 1) for t, j in zip(*np.nonzero(self.counts == 0))]

    def supercell_values(self, t):
        if not 1 <= t <= self.T:
            raise ModelError(f"snapshot {t} outside 1..{self.T}")
        row = self.s_hat[t - 1]
        return np.clip(row, -self.a, self.a) if self.clamp else row

    def reconstruct(self, x, t):
        x = check_point(x, self.partition.d)
        return float(self.supercell_values(t)[self.partition.supercell_index(x) - 1])

    def reconstruct_points(self, points, t):
        j, _ = self.partition.locate(check_points(points, self.partition.d))
        return self.supercell_values(t)[j - 1]


def reconstruct(estimate, x, t):
    return estimate.reconstruct(x, t)


# ---------------------------------------------------------------- known dither

@dataclass(frozen=True, eq=False)
class DitherCdf:
    """Known dither law X with continuous positive density on (-a_prime, a_prime)."""

    cdf: object
    a: float
    a_prime: float
    check_points: int = 2001

    def __post_init__(self):
        if not 0 < self.a < self.a_prime:
            raise ModelError(f"need 0 < a < a_prime, got a={self.a}, a_prime={self.a_prime}")
        s = np.linspace(-self.a, self.a, self.check_points)
        if not np.all(np.diff(self.mu(s)) > 0):
            raise NonMonotoneDither("mu(s) = 1 - 2 P_X(-s) is not strictly increasing on [-a, a]")

    @classmethod
    def uniform(cls, c, a):
        """X ~ Unif[-c, c]; then mu(s) = s / c."""
        return cls(lambda z: np.clip((np.asarray(z) + c) / (2.0 * c), 0.0, 1.0), a, c)

    @classmethod
    def from_distribution(cls, dist, a, a_prime):
        """Any object with a ``cdf`` method, e.g. a frozen scipy distribution."""
        return cls(dist.cdf, a, a_prime)

    def mu(self, s):
        return 1.0 - 2.0 * np.asarray(self.cdf(-np.asarray(s, dtype=float)), dtype=float)

    @property
    def mu_limit(self):
        return float(self.mu(self.a_prime))

    def inverse(self, v, xtol=1e-12):
        eps = np.finfo(float).eps * max(1.0, self.a_prime)
        lo, hi = -self.a_prime + eps, self.a_prime - eps
        f_lo, f_hi = float(self.mu(lo)) - v, float(self.mu(hi)) - v
        if f_lo >= 0:
            return lo
        if f_hi <= 0:
            return hi
        return optimize.bisect(lambda s: float(self.mu(s)) - v, lo, hi, xtol=xtol, maxiter=200)


def reconstruct_known_dither(pbar, dither):
    """g(2 pbar - 1) with g = mu^-1 on |v| <= mu(a'), 0 beyond."""
    if not 0.0 <= pbar <= 1.0:
        raise OutOfRange(f"bit mean must lie in [0, 1], got {pbar}")
    v = 2.0 * pbar - 1.0
    if abs(v) > dither.mu_limit:
        return 0.0
    return dither.inverse(v)


# ---------------------------------------------------------------- end to end

def trial_bits(cfg, dep, trial, s=None):
    """All (N, T) comparator bits of one trial; noise is drawn before thresholds.

    ``s`` optionally supplies the precomputed noiseless values (N, T).
    """
    rng = _rng.trial_stream(cfg.seed, trial)
    if s is None:
        Y = observe(cfg.field, dep, cfg.noise, rng).Y
    elif cfg.noise.family == "zero":
        Y = s
    else:
        Y = s + cfg.noise.sample(dep.N, cfg.field.T, rng)
    R = cfg.threshold.sample(dep.N, cfg.field.T, rng)
    return quantize_threshold(Y, R)


def fuse(messages, partition, T, c, n=None, clamp=False, a=None):
    """Fusion center: per-(t, j) average of decoded bits, independent of arrival order."""
    L, M = partition.L, partition.M
    sums = np.zeros((T, L))
    counts = np.zeros((T, L), dtype=np.int64)
    for msg in messages:
        dec = decode(msg, M, T)
        for t, bit in dec.bits.items():
            sums[t - 1, dec.supercell - 1] += bit
            counts[t - 1, dec.supercell - 1] += 1
    if n is not None and np.any(counts != n):
        bad = np.argwhere(counts != n)[0]
        raise WrongCount(f"supercell {bad[1] + 1} at snapshot {bad[0] + 1} received "
                         f"{counts[tuple(bad)]} bits, expected {n}")
    s_hat = _affine(sums, counts, c)
    return FieldEstimate(partition, s_hat, c, clamp, a, counts)


def _affine(sums, counts, c):
    mean = np.divide(sums, counts, out=np.full(sums.shape, 0.5), where=counts > 0)
    return 2.0 * c * mean - c


def full_pipeline(cfg, trial=0, shuffle=False):
    """observe, quantize, encode, serialize, deserialize, decode and fuse, for one trial."""
    dep = cfg.build_deployment()
    P, T = cfg.partition, cfg.field.T
    bits = trial_bits(cfg, dep, trial)
    messages = [encode(bits[i], int(dep.subcell[i]), P.M, T, int(dep.supercell[i]), P.L, sensor_id=i)
                for i in range(dep.N)]
    wire = write_batch(messages)
    received = read_batch(wire, P.L, P.M, T)
    if shuffle:
        order = _rng.stream(cfg.seed, _rng.AUX, trial).permutation(len(received))
        received = [received[i] for i in order]
    return fuse(received, P, T, cfg.c, dep.n, cfg.clamp, cfg.field.a)


class TrialRunner:
    """Vectorized equivalent of ``full_pipeline(cfg, trial).s_hat`` restricted to ``snapshots``."""

    def __init__(self, cfg, dep, snapshots):
        self.cfg, self.dep, self.snapshots = cfg, dep, tuple(snapshots)
        self.s = cfg.field.values_all(dep.positions)
        P = cfg.partition
        j0 = dep.supercell - 1
        self.groups = []
        for t in self.snapshots:
            take = dep.subcell == (t - 1) % P.M + 1
            take = slice(None) if take.all() else np.flatnonzero(take)
            self.groups.append((take, j0[take], np.bincount(j0[take], minlength=P.L)))

    def __call__(self, trial):
        """Shape (len(snapshots), L), unclamped."""
        bits = trial_bits(self.cfg, self.dep, trial, self.s)
        L, c = self.cfg.partition.L, self.cfg.c
        out = np.empty((len(self.snapshots), L))
        for r, (t, (take, j, counts)) in enumerate(zip(self.snapshots, self.groups)):
            sums = np.bincount(j, weights=bits[take, t - 1], minlength=L)
            out[r] = _affine(sums, counts, c)
        return out


def supercell_estimates(cfg, dep, trial, snapshots):
    return TrialRunner(cfg, dep, snapshots)(trial)
