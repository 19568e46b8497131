"""Supercell/subcell hypercube partition, sensor deployment and deployment large deviations.

Indices are one-based throughout.  Supercell ``j`` and within-supercell
subcell ``k`` use row-major order with the first axis varying fastest; a
coordinate equal to 1.0 is clamped into the last cell so the partition
covers the closed cube.  The global subcell label used for empirical types
is ``(j - 1) * M + k``.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import stats

from ._rng import as_generator
from .errors import DivisibilityError, ModelError
from .fields import check_point, check_points


@dataclass(frozen=True)
class CellPartition:
    d: int
    l: int
    m: int

    def __post_init__(self):
        for name in ("d", "l", "m"):
            v = getattr(self, name)
            if not (isinstance(v, (int, np.integer)) and v >= 1):
                raise ModelError(f"partition.{name} must be a positive integer, got {v!r}")

    @property
    def L(self):
        return self.l ** self.d

    @property
    def M(self):
        return self.m ** self.d

    @property
    def supercell_side(self):
        return 1.0 / self.l

    @property
    def subcell_side(self):
        return 1.0 / (self.l * self.m)

    @property
    def supercell_diagonal(self):
        return math.sqrt(self.d) / self.l

    def _coords(self, pts):
        scaled = pts * self.l
        sup = np.minimum(np.floor(scaled), self.l - 1).astype(np.int64)
        sub = np.minimum(np.floor((scaled - sup) * self.m), self.m - 1).astype(np.int64)
        return sup, sub

    def locate(self, points):
        """Vectorized (supercell, subcell) labels for points of shape (P, d)."""
        pts = check_points(points, self.d)
        sup, sub = self._coords(pts)
        lw = self.l ** np.arange(self.d)
        mw = self.m ** np.arange(self.d)
        return 1 + sup @ lw, 1 + sub @ mw

    def supercell_index(self, x):
        return int(self.locate(check_point(x, self.d)[None, :])[0][0])

    def subcell_index(self, x):
        j, k = self.locate(check_point(x, self.d)[None, :])
        return int(j[0]), int(k[0])

    def supercell_origin(self, j):
        if not 1 <= j <= self.L:
            raise ModelError(f"supercell {j} outside 1..{self.L}")
        digits = [(j - 1) // self.l ** i % self.l for i in range(self.d)]
        return np.asarray(digits, dtype=float) / self.l

    def subcell_origin(self, j, k):
        if not 1 <= k <= self.M:
            raise ModelError(f"subcell {k} outside 1..{self.M}")
        digits = [(k - 1) // self.m ** i % self.m for i in range(self.d)]
        return self.supercell_origin(j) + np.asarray(digits, dtype=float) * self.subcell_side


def supercell_index(partition, x):
    return partition.supercell_index(x)


def subcell_index(partition, x):
    return partition.subcell_index(x)


@dataclass(frozen=True, eq=False)
class Deployment:
    positions: np.ndarray
    partition: CellPartition
    supercell: np.ndarray
    subcell: np.ndarray
    mode: str = "grid"
    n: int = None

    @classmethod
    def from_positions(cls, partition, positions, mode="custom"):
        pts = check_points(positions, partition.d)
        j, k = partition.locate(pts)
        dep = cls(pts, partition, j, k, mode)
        counts = empirical_type(dep)
        if np.all(counts == counts[0]):
            object.__setattr__(dep, "n", int(counts[0]))
        return dep

    @property
    def N(self):
        return len(self.positions)

    @property
    def global_subcell(self):
        return (self.supercell - 1) * self.partition.M + self.subcell

    def members(self, j, k):
        """Zero-based sensor indices located in subcell ``k`` of supercell ``j``."""
        return np.flatnonzero((self.supercell == j) & (self.subcell == k))

    def is_uniform(self):
        return self.n is not None


def _lattice_offsets(n, d):
    q = math.ceil(round(n ** (1.0 / d), 12))
    while q ** d < n:
        q += 1
    idx = np.indices((q,) * d).reshape(d, -1).T[:, ::-1][:n]
    return (idx + 0.5) / q


def deploy_grid(partition, n):
    """Exactly ``n`` sensors per subcell on a cell-centred lattice; sensors ordered by (j, k, rank)."""
    if not (isinstance(n, (int, np.integer)) and n >= 1):
        raise ModelError(f"sensors per subcell must be a positive integer, got {n!r}")
    P = partition
    local = _lattice_offsets(int(n), P.d) * P.subcell_side
    blocks, js, ks = [], [], []
    for j in range(1, P.L + 1):
        for k in range(1, P.M + 1):
            blocks.append(P.subcell_origin(j, k) + local)
            js.append(np.full(n, j))
            ks.append(np.full(n, k))
    positions = np.clip(np.concatenate(blocks), 0.0, 1.0)
    j_arr, k_arr = np.concatenate(js), np.concatenate(ks)
    located = P.locate(positions)
    assert np.array_equal(located[0], j_arr) and np.array_equal(located[1], k_arr)
    return Deployment(positions, P, j_arr, k_arr, "grid", int(n))


def deploy_iid_uniform(partition, N, seed):
    if not (isinstance(N, (int, np.integer)) and N >= 1):
        raise ModelError(f"number of sensors must be a positive integer, got {N!r}")
    rng = as_generator(seed)
    positions = rng.random((int(N), partition.d))
    j, k = partition.locate(positions)
    dep = Deployment(positions, partition, j, k, "iid_uniform")
    counts = empirical_type(dep)
    if np.all(counts == counts[0]):
        object.__setattr__(dep, "n", int(counts[0]))
    return dep


def sensors_per_subcell(N, L, M):
    if N % (L * M):
        raise DivisibilityError(f"N={N} is not a multiple of L*M={L * M}")
    return N // (L * M)


def empirical_type(dep):
    """Sensor counts per global subcell, length L*M."""
    K = dep.partition.L * dep.partition.M
    return np.bincount(dep.global_subcell - 1, minlength=K)


@dataclass(frozen=True)
class NearUniformSpec:
    gamma: float
    epsilon: float = 0.05
    N_star: int = 1

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ModelError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not 0.0 < self.epsilon < 1.0:
            raise ModelError(f"epsilon must lie in (0, 1), got {self.epsilon}")

    @property
    def delta(self):
        return 1.0 - self.gamma


def check_near_uniform(dep, spec):
    """True iff every subcell holds at least gamma * N / (LM) sensors."""
    counts = empirical_type(dep)
    return bool(np.all(counts >= spec.gamma * dep.N / counts.size))


@dataclass(frozen=True)
class SanovBound:
    bound: float
    divergence: float  # D(P*||U) in bits; inf when the complement is empty
    degenerate: bool
    p_star: np.ndarray = None

    def __float__(self):
        return self.bound


def kl_bits(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    nz = p > 0
    return float(np.sum(p[nz] * np.log2(p[nz] / q[nz])))


def i_projection(K, delta):
    """KL-closest pmf to uniform on K symbols outside the box [(1-delta)/K, (1+delta)/K]^K.

    Returns ``(p_star, divergence_bits)`` or ``(None, inf)`` when every pmf lies in the box.
    """
    if K < 1:
        raise ModelError("need at least one subcell")
    if not delta > 0:
        raise ModelError(f"delta must be positive, got {delta}")
    u = np.full(K, 1.0 / K)
    best = (None, math.inf)
    if K < 2:
        return best
    for pinned in ((1.0 - delta) / K, (1.0 + delta) / K):
        # The box boundary is only reachable from outside if it is not a simplex edge.
        if not 0.0 < pinned < 1.0:
            continue
        p = np.full(K, (1.0 - pinned) / (K - 1))
        p[0] = pinned
        div = kl_bits(p, u)
        if div < best[1]:
            best = (p, div)
    return best


def sanov_bound(N, L, M, delta):
    """min(1, (N+1)^{LM} 2^{-N D(P*||U)}) for the event that some subcell count leaves N(1 +/- delta)/(LM)."""
    if N < 1:
        raise ModelError("N must be positive")
    K = L * M
    p_star, div = i_projection(K, delta)
    if p_star is None:
        return SanovBound(0.0, math.inf, True, None)
    log2_bound = K * math.log2(N + 1) - N * div
    return SanovBound(min(1.0, 2.0 ** min(log2_bound, 0.0)), div, False, p_star)


def sanov_sample_size(L, M, delta, epsilon):
    """Smallest N* such that the Sanov bound is at most epsilon for every N > N*."""
    K = L * M
    _, div = i_projection(K, delta)
    if not math.isfinite(div):
        return 0
    target = math.log2(epsilon)

    def log2_bound(N):
        return K * math.log2(N + 1) - N * div

    # log2_bound rises until N + 1 = K / (D ln 2), falls afterwards, and is >= 0 on the rise
    lo = max(1, math.ceil(K / (div * math.log(2)) - 1))
    hi = lo
    while log2_bound(hi) > target:
        hi *= 2
    while lo < hi:
        mid = (lo + hi) // 2
        if log2_bound(mid) <= target:
            hi = mid
        else:
            lo = mid + 1
    return lo - 1


def exact_two_cell_failure(N, gamma):
    """P(min subcell count < gamma N / 2) for N iid uniform sensors over two subcells."""
    thresh = gamma * N / 2.0
    below = math.ceil(thresh) - 1  # largest integer count strictly below the threshold
    if below < 0:
        return 0.0
    p = stats.binom.cdf(below, N, 0.5)
    # P(X <= below) + P(N - X <= below), the events are disjoint while below < N / 2
    return float(min(1.0, 2.0 * p))


def empirical_failure_rate(partition, N, gamma, trials, seed):
    """Fraction of ``trials`` iid-uniform deployments of N sensors failing the near-uniform check."""
    rng = as_generator(seed)
    spec = NearUniformSpec(gamma)
    fails = sum(not check_near_uniform(deploy_iid_uniform(partition, N, rng), spec)
                for _ in range(trials))
    return fails / trials
