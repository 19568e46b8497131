"""Monte Carlo verification of the reconstruction scheme against its analytic bounds."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import math
import time

import numpy as np
from scipy import integrate, stats

from . import _rng
from .config import DeploymentSpec
from .errors import DivisibilityError, ModelError, NoClosedForm, NonRegularPdf
from .fields import check_point
from .geometry import CellPartition
from .reconstruction import TrialRunner
from .sensing import NOISE_FAMILIES, NoiseModel


def theorem1_bound(field_model, L, M, N, c, x, t):
    """(local, global) MSE bound: modulus^2 at the supercell diagonal plus LMc^2/N."""
    d = field_model.d
    diag = math.sqrt(d) * L ** (-1.0 / d)
    var = L * M * c * c / N
    local = field_model.local_modulus(diag, x, t) ** 2 + var
    glob = field_model.global_modulus(diag, t) ** 2 + var
    return local, max(glob, local)


def variance_bound(L, M, N, c):
    return L * M * c * c / N


# ---------------------------------------------------------------- Monte Carlo engine

def _chunk_estimates(cfg, start, stop):
    dep = cfg.build_deployment()
    j = cfg.partition.locate(cfg.eval_points)[0] - 1
    run = TrialRunner(cfg, dep, cfg.eval_snapshots)
    out = np.empty((stop - start, len(cfg.eval_snapshots), len(j)))
    for r, trial in enumerate(range(start, stop)):
        out[r] = run(trial)[:, j]
    if cfg.clamp:
        np.clip(out, -cfg.field.a, cfg.field.a, out=out)
    return out


def simulate_estimates(cfg, workers=1):
    """Per-trial estimates at the evaluation grid, shape (trials, snapshots, points).

    Trial k always uses the stream derived from (seed, k), and chunks are
    concatenated in trial order, so the array does not depend on ``workers``.
    """
    trials = cfg.trials
    workers = max(1, min(int(workers), trials))
    if workers == 1:
        return _chunk_estimates(cfg, 0, trials)
    edges = np.linspace(0, trials, 4 * workers + 1).astype(int)
    spans = [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_chunk_estimates, [cfg] * len(spans), *zip(*spans)))
    return np.concatenate(parts, axis=0)


def _truth(cfg):
    return np.stack([cfg.field.values(cfg.eval_points, t) for t in cfg.eval_snapshots])


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    experiment_id: str
    points: np.ndarray       # (P, d)
    snapshots: tuple
    trials: int
    mse: np.ndarray          # (snapshots, P)
    mse_stderr: np.ndarray
    bias: np.ndarray
    var: np.ndarray
    bias_stderr: np.ndarray
    bound_local: np.ndarray
    bound_global: np.ndarray
    variance_bound: float
    modulus_local: np.ndarray
    seed: int
    N: int
    L: int
    M: int
    c: float
    wall_time: float
    metadata: dict = field(default_factory=dict)

    def rows(self):
        """(t, x, trials, mse, stderr, bias, var, local, global) per grid point."""
        for r, t in enumerate(self.snapshots):
            for p, x in enumerate(self.points):
                yield (t, x, self.trials, self.mse[r, p], self.mse_stderr[r, p], self.bias[r, p],
                       self.var[r, p], self.bound_local[r, p], self.bound_global[r, p])

    @property
    def worst_mse(self):
        return float(self.mse.max())

    def within_bound(self, k=3.0):
        return bool(np.all(self.mse <= self.bound_local + k * self.mse_stderr))


def summarize(cfg, shat, wall_time=0.0):
    err = shat - _truth(cfg)[None]
    n_tr = err.shape[0]
    sq = err * err
    mse = sq.mean(axis=0)
    bias = err.mean(axis=0)
    var = ((err - bias) ** 2).mean(axis=0)
    ddof = 1 if n_tr > 1 else 0
    mse_se = sq.std(axis=0, ddof=ddof) / math.sqrt(n_tr)
    bias_se = err.std(axis=0, ddof=ddof) / math.sqrt(n_tr)
    P, N = cfg.partition, cfg.N
    shape = mse.shape
    b_loc, b_glob, w_loc = np.empty(shape), np.empty(shape), np.empty(shape)
    diag = P.supercell_diagonal
    for r, t in enumerate(cfg.eval_snapshots):
        for p, x in enumerate(cfg.eval_points):
            b_loc[r, p], b_glob[r, p] = theorem1_bound(cfg.field, P.L, P.M, N, cfg.c, x, t)
            w_loc[r, p] = cfg.field.local_modulus(diag, x, t)
    return ExperimentResult(cfg.experiment_id, cfg.eval_points, cfg.eval_snapshots, n_tr, mse, mse_se,
                            bias, var, bias_se, b_loc, b_glob, variance_bound(P.L, P.M, N, cfg.c), w_loc,
                            cfg.seed, N, P.L, P.M, cfg.c, wall_time,
                            {"seed_generated": cfg.seed_generated, "deployment": cfg.deployment.mode})


def mse_monte_carlo(cfg, workers=1):
    """Empirical pointwise MSE, bias and variance of the field estimate over ``cfg.trials`` trials."""
    start = time.perf_counter()
    shat = simulate_estimates(cfg, workers)
    return summarize(cfg, shat, time.perf_counter() - start)


def worst_case_mse(cfg, families=NOISE_FAMILIES, workers=1):
    """Max empirical MSE over the grid and the given noise families.

    This lower-bounds the worst case over the whole feasible noise class.
    Returns (value, family, t, x).
    """
    best = (-1.0, None, None, None)
    for fam in families:
        noise = NoiseModel(fam, cfg.noise.b if fam != "zero" else 0.0, {}, cfg.noise.correlation)
        res = mse_monte_carlo(cfg.replace(noise=noise), workers)
        r, p = np.unravel_index(np.argmax(res.mse), res.mse.shape)
        if res.mse[r, p] > best[0]:
            best = (float(res.mse[r, p]), fam, res.snapshots[r], res.points[p])
    return best


# ---------------------------------------------------------------- scaling

def ols_slope(N, mse):
    x, y = np.log2(np.asarray(N, dtype=float)), np.log2(np.asarray(mse, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def l_rule(name, d=1):
    """Supercells-per-axis rule l(N) by name: ``constant`` (l = 1) or ``cube_root`` (L = round(N^(1/3)))."""
    if name == "constant":
        return lambda N: 1
    if name == "cube_root":
        return lambda N: max(1, round(round(N ** (1.0 / 3.0)) ** (1.0 / d)))
    raise ModelError(f"unknown L rule {name!r}")


@dataclass(frozen=True)
class ScalingRow:
    N: int
    L: int
    M: int
    worst_mse: float
    bound: float
    slope_running: float
    error: str = None


@dataclass(frozen=True, eq=False)
class ScalingTable:
    rows: list
    slope: float
    results: list


def scaling_experiment(N_list, rule, template, workers=1, trials=None):
    """Worst-grid MSE and global MSE bound for each N, with a running log-log slope.

    ``rule`` maps N to supercells per axis l (or is a name accepted by ``l_rule``).
    Rows that violate divisibility carry the error message and NaN values.
    """
    if isinstance(rule, str):
        rule = l_rule(rule, template.partition.d)
    d, m = template.partition.d, template.partition.m
    rows, results, good_N, good_mse = [], [], [], []
    for N in N_list:
        l = int(rule(N))
        part = CellPartition(d, l, m)
        try:
            cfg = template.replace(partition=part, deployment=DeploymentSpec("grid", N=int(N)),
                                   trials=trials or template.trials)
        except DivisibilityError as exc:
            rows.append(ScalingRow(int(N), part.L, part.M, math.nan, math.nan, math.nan, str(exc)))
            continue
        res = mse_monte_carlo(cfg, workers)
        results.append(res)
        good_N.append(N)
        good_mse.append(res.worst_mse)
        slope = ols_slope(good_N, good_mse) if len(good_N) > 1 else math.nan
        rows.append(ScalingRow(int(N), part.L, part.M, res.worst_mse, float(res.bound_global.max()), slope))
    slope = ols_slope(good_N, good_mse) if len(good_N) > 1 else math.nan
    return ScalingTable(rows, slope, results)


def optimal_L(N, form, d, M, c):
    """Integer L = l^d minimizing Delta^2 (sqrt(d) L^(-1/d))^(2 gamma) + L M c^2 / N.

    ``form`` is (Delta, gamma) or a field model exposing ``lipschitz_form``.
    """
    if hasattr(form, "lipschitz_form"):
        form = form.lipschitz_form()
        if form is None:
            raise NoClosedForm("field has no Lipschitz-type modulus; use the grid oracle")
    Delta, gamma = form
    if Delta == 0:
        return 1
    e = 2.0 * gamma / d

    def bound(L):
        return Delta ** 2 * d ** gamma * L ** (-e) + L * M * c * c / N

    # stationary point of the continuous bound
    L_star = (e * Delta ** 2 * d ** gamma * N / (M * c * c)) ** (1.0 / (1.0 + e))
    l_star = L_star ** (1.0 / d)
    cands = {max(1, math.floor(l_star)), max(1, math.ceil(l_star))}
    return min((l ** d for l in cands), key=bound)


# ---------------------------------------------------------------- CLT

@dataclass(frozen=True)
class CltResult:
    ks: float
    pvalue: float
    passed: bool
    n: int
    trials: int


def clt_check(cfg, x, t, trials=None, workers=1):
    """KS distance of (S_hat - s) / sd to N(0, 1), with sd estimated across trials."""
    x = check_point(x, cfg.partition.d)
    cfg = cfg.replace(eval_points=x[None], eval_snapshots=(t,), trials=trials or cfg.trials)
    err = (simulate_estimates(cfg, workers) - _truth(cfg)[None]).ravel()
    sd = err.std()
    if sd == 0:
        return CltResult(1.0, 0.0, False, cfg.sensors_per_subcell, cfg.trials)
    ks = stats.kstest(err / sd, "norm")
    return CltResult(float(ks.statistic), float(ks.pvalue), bool(ks.statistic < 0.05),
                     cfg.sensors_per_subcell, cfg.trials)


# ---------------------------------------------------------------- Cramer-Rao

def fisher_information(pdf, support=(-np.inf, np.inf), h=None):
    """Location Fisher information 4 * integral of (d sqrt(p) / dz)^2.

    Densities that stay positive at a finite support endpoint are rejected.
    """
    lo, hi = support
    for end in (lo, hi):
        if np.isfinite(end) and float(pdf(end)) > 1e-9:
            raise NonRegularPdf(f"density is {float(pdf(end)):.3g} at the support endpoint {end}")
    width = (hi - lo) if np.isfinite(hi - lo) else 1.0
    h = h or 1e-5 * width

    def root(z):
        return math.sqrt(max(float(pdf(z)), 0.0))

    def integrand(z):
        g = (root(z + h) - root(z - h)) / (2.0 * h)
        return g * g

    value, _, info, *rest = integrate.quad(integrand, lo, hi, limit=200, full_output=1)
    if not np.isfinite(value) or rest:
        raise NonRegularPdf("Fisher information quadrature did not converge")
    return 4.0 * value


def cramer_rao_bound(noise, N):
    """1 / (N I) for a location family with density ``noise``.

    ``noise`` is a NoiseModel with a density, or a (pdf, support) pair.
    """
    if isinstance(noise, NoiseModel):
        if noise.family in ("zero", "rademacher", "asymmetric_two_point"):
            raise NonRegularPdf(f"{noise.family} noise has no density")
        pdf, support = noise.pdf, noise.support
    else:
        pdf, support = noise
    return 1.0 / (N * fisher_information(pdf, support))


# ---------------------------------------------------------------- single-path convergence

@dataclass(frozen=True, eq=False)
class TrendResult:
    N: np.ndarray
    L: np.ndarray
    errors: np.ndarray
    envelope: np.ndarray

    @property
    def decreasing(self):
        return bool(self.errors[-1] <= self.errors[0])

    @property
    def below_envelope(self):
        return bool(np.all(self.errors <= self.envelope))


def as_convergence_trend(cfg, x, t, N_sequence, path=0, rule=None):
    """|S_hat_t(x) - s_t(x)| along one sample path as N grows.

    The r-th sensor (by id) of the active group serving x consumes the r-th
    noise and threshold uniform of a single path stream, so smaller
    deployments reuse a prefix of the randomness of larger ones.  The
    envelope is the bias bound plus a Hoeffding deviation at level 1/n^2.
    """
    x = check_point(x, cfg.partition.d)
    N_sequence = [int(N) for N in N_sequence]
    if any(b <= a for a, b in zip(N_sequence, N_sequence[1:])):
        raise ModelError("N sequence must be strictly increasing")
    if isinstance(rule, str):
        rule = l_rule(rule, cfg.partition.d)
    d, m = cfg.partition.d, cfg.partition.m
    parts = [CellPartition(d, int(rule(N)) if rule else cfg.partition.l, m) for N in N_sequence]
    n_max = max(N // (p.L * p.M) for N, p in zip(N_sequence, parts))
    z_all = cfg.noise.from_uniform(_rng.stream(cfg.seed, _rng.PATH, path, 0).random(n_max))
    r_all = cfg.c * (2.0 * _rng.stream(cfg.seed, _rng.PATH, path, 1).random(n_max) - 1.0)
    s_x = cfg.field.values(x[None], t)[0]
    errs, env, Ls = [], [], []
    for N, part in zip(N_sequence, parts):
        c_N = cfg.replace(partition=part, deployment=DeploymentSpec("grid", N=N))
        dep = c_N.build_deployment()
        j = part.supercell_index(x)
        k = (t - 1) % part.M + 1
        group = np.sort(dep.members(j, k))
        n = len(group)
        y = cfg.field.values(dep.positions[group], t) + z_all[:n]
        bits = (y > r_all[:n]).astype(np.uint8)
        s_hat = 2.0 * cfg.c * bits.mean() - cfg.c
        if cfg.clamp:
            s_hat = min(max(s_hat, -cfg.field.a), cfg.field.a)
        errs.append(abs(s_hat - s_x))
        bias = cfg.field.local_modulus(part.supercell_diagonal, x, t)
        env.append(bias + 2.0 * cfg.c * math.sqrt(math.log(2.0 * n * n) / (2.0 * n)))
        Ls.append(part.L)
    return TrendResult(np.array(N_sequence), np.array(Ls), np.array(errs), np.array(env))
