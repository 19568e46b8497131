import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from dfrs.config import DeploymentSpec, ExperimentConfig
from dfrs.errors import ModelError, NonMonotoneDither, OutOfDomain, WrongCount
from dfrs.fields import ConstantField, SinusoidalField
from dfrs.geometry import CellPartition, Deployment
from dfrs.reconstruction import (DitherCdf, FieldEstimate, TrialRunner, estimate_supercell, fuse,
                                 full_pipeline, reconstruct, reconstruct_known_dither, trial_bits)
from dfrs.coding import encode
from dfrs.sensing import NoiseModel
from oracles import reachable_levels

PHASES = tuple(np.linspace(0, 2 * np.pi, 10)[:9])


def ref_cfg(noise=NoiseModel("uniform", 0.5), trials=50, seed=5, **kw):
    return ExperimentConfig(SinusoidalField(1.0, (1.0, 0.5), PHASES), CellPartition(2, 4, 3),
                            DeploymentSpec(n=6), noise, trials=trials, seed=seed, **kw)


def test_estimate_supercell_examples():
    assert estimate_supercell((1, 1, 0, 1), 4, 2.0) == pytest.approx(1.0)
    assert estimate_supercell(np.ones(7), 7, 1.5) == 1.5
    assert estimate_supercell(np.zeros(7), 7, 1.5) == -1.5
    with pytest.raises(WrongCount):
        estimate_supercell((1, 0), 3, 1.0)


def test_estimate_supercell_reachable_levels():
    c = 1.5
    levels = reachable_levels(6, c)
    seen = {round(estimate_supercell(np.array([1] * k + [0] * (6 - k)), 6, c), 12) for k in range(7)}
    assert seen == {round(v, 12) for v in levels}


def test_reconstruct_examples():
    est = FieldEstimate(CellPartition(1, 1, 1), np.array([[0.4]]), 1.0)
    assert reconstruct(est, (0.0,), 1) == reconstruct(est, (0.9,), 1) == 0.4
    est = FieldEstimate(CellPartition(1, 2, 1), np.array([[0.2, -0.4]]), 1.0)
    assert reconstruct(est, (0.1,), 1) == 0.2
    assert reconstruct(est, (0.9,), 1) == -0.4
    assert reconstruct(est, (0.5,), 1) == -0.4  # boundary belongs to the upper cell
    assert reconstruct(est, (1.0,), 1) == -0.4
    with pytest.raises(OutOfDomain):
        reconstruct(est, (1.5,), 1)


def test_clamp():
    est = FieldEstimate(CellPartition(1, 2, 1), np.array([[1.4, -0.3]]), 1.5, clamp=True, a=1.0)
    assert reconstruct(est, (0.1,), 1) == 1.0
    assert reconstruct(est, (0.9,), 1) == -0.3
    with pytest.raises(ModelError):
        FieldEstimate(CellPartition(1, 1, 1), np.array([[0.0]]), 1.0, clamp=True)


def test_known_dither_uniform_recovers_average():
    dither = DitherCdf.uniform(1.5, 1.0)
    rng = np.random.default_rng(0)
    for p in rng.random(200):
        assert reconstruct_known_dither(p, dither) == pytest.approx(2 * 1.5 * p - 1.5, abs=1e-10)
    assert reconstruct_known_dither(0.5, dither) == pytest.approx(0.0, abs=1e-12)


def test_known_dither_gaussian():
    dither = DitherCdf.from_distribution(stats.norm(0, 1), 1.0, 3.0)
    assert reconstruct_known_dither(0.5, dither) == pytest.approx(0.0, abs=1e-11)
    s = 0.37
    p = 1 - stats.norm.cdf(-s)  # P(s + X > 0)
    assert reconstruct_known_dither(p, dither) == pytest.approx(s, abs=1e-10)
    # |v| beyond mu(a') maps to zero
    assert reconstruct_known_dither(1.0, dither) == 0.0


def test_known_dither_rejects_flat_cdf():
    flat = lambda z: np.clip(np.asarray(z) * 0 + 0.5, 0, 1)
    with pytest.raises(NonMonotoneDither):
        DitherCdf(flat, 0.5, 1.0)
    with pytest.raises(ModelError):
        DitherCdf.uniform(1.0, 1.0)


def test_pipeline_saturation():
    cfg = ExperimentConfig(ConstantField((0.8, 0.8, 0.8, 0.8), d=2), CellPartition(2, 2, 2),
                           DeploymentSpec(n=3), NoiseModel(), seed=1)
    est = full_pipeline(cfg)
    assert cfg.c == 0.8
    assert np.all(est.s_hat == 0.8)


def test_pipeline_bernoulli_case():
    cfg = ExperimentConfig(ConstantField((0.0,), a=1.0), CellPartition(1, 1, 1), DeploymentSpec(n=50),
                           seed=3)
    vals = np.array([full_pipeline(cfg, trial=k).s_hat[0, 0] for k in range(300)])
    assert set(np.round((vals + 1) * 25, 9)) <= set(range(51))
    assert abs(np.mean(vals ** 2) - 1 / 50) < 4 * np.std(vals ** 2) / np.sqrt(300)


def test_vectorized_path_is_bit_identical_to_pipeline():
    for noise in (NoiseModel("uniform", 0.5), NoiseModel("asymmetric_two_point", 0.5, correlation="antithetic_pair")):
        cfg = ref_cfg(noise)
        dep = cfg.build_deployment()
        run = TrialRunner(cfg, dep, range(1, 10))
        for trial in (0, 7):
            assert np.array_equal(full_pipeline(cfg, trial).s_hat, run(trial))


def test_fusion_is_order_independent():
    cfg = ref_cfg()
    assert np.array_equal(full_pipeline(cfg, 2).s_hat, full_pipeline(cfg, 2, shuffle=True).s_hat)


def test_estimator_depends_only_on_supercell_membership():
    cfg = ExperimentConfig(ConstantField((0.2, 0.2, 0.2, 0.2), d=1, a=0.5), CellPartition(1, 2, 2),
                           DeploymentSpec(n=5), NoiseModel("uniform", 0.5), seed=8)
    dep = cfg.build_deployment()
    bits = trial_bits(cfg, dep, 0)
    P = cfg.partition
    msgs = [encode(bits[i], int(dep.subcell[i]), P.M, 4, int(dep.supercell[i]), P.L) for i in range(dep.N)]
    base = fuse(msgs, P, 4, cfg.c, 5).s_hat
    # permute the bit sources within each (supercell, subcell) group
    rng = np.random.default_rng(1)
    perm = np.arange(dep.N)
    for j in range(1, P.L + 1):
        for k in range(1, P.M + 1):
            idx = dep.members(j, k)
            perm[idx] = rng.permutation(idx)
    msgs2 = [encode(bits[perm[i]], int(dep.subcell[i]), P.M, 4, int(dep.supercell[i]), P.L) for i in range(dep.N)]
    assert np.array_equal(base, fuse(msgs2, P, 4, cfg.c, 5).s_hat)
    # moving sensors within their supercell leaves the estimate unchanged under a constant field
    moved = dep.positions.copy()
    moved[dep.supercell == 1] = rng.uniform(0, 0.5, size=((dep.supercell == 1).sum(), 1))
    dep2 = Deployment(moved, P, dep.supercell, dep.subcell, "custom", 5)
    assert np.array_equal(bits, trial_bits(cfg, dep2, 0))


def test_fuse_counts_checked():
    P = CellPartition(1, 2, 1)
    msgs = [encode([1], 1, 1, 1, 1, 2), encode([0], 1, 1, 1, 2, 2)]
    with pytest.raises(WrongCount):
        fuse(msgs, P, 1, 1.0, n=2)
    est = fuse(msgs[:1], P, 1, 1.0)
    assert est.s_hat.tolist() == [[1.0, 0.0]]
    assert est.empty_cells == [(1, 2)]


def test_iid_deployment_pipeline_runs():
    cfg = ExperimentConfig(ConstantField((0.1,), a=0.5), CellPartition(1, 4, 1),
                           DeploymentSpec("iid_uniform", N=400), NoiseModel("uniform", 0.5), seed=2)
    est = full_pipeline(cfg)
    counts = est.counts[0]
    assert counts.sum() == 400
    assert np.all(np.abs(est.s_hat) <= cfg.c)


@settings(max_examples=40, deadline=None)
@given(p=st.floats(0, 1), c=st.floats(0.2, 5), frac=st.floats(0.05, 0.95))
def test_known_dither_consistency_property(p, c, frac):
    dither = DitherCdf.uniform(c, frac * c)
    assert abs(reconstruct_known_dither(p, dither) - (2 * c * p - c)) <= 1e-9 * max(1, c)
