import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import MULTI_ATOM, dirac_model
from ipn.ensemble import (
    BASE_LAWS,
    EnsembleConfig,
    TruncatedLaw,
    assemble_m,
    build_a,
    read_matrix_dump,
    sample_x,
    third_abs_moment,
    write_matrix_dump,
)
from ipn.equilibrium import ModelParams
from ipn.errors import ConfigError
from ipn.measure import AtomicMeasure

LAWS = list(BASE_LAWS) + [TruncatedLaw(20.0, 0.1)]


def test_build_a_examples():
    a = build_a(dirac_model(spikes=[(2.0, 1)]), EnsembleConfig(8, 0.5))
    np.testing.assert_allclose(a.diagonal, [math.sqrt(2), 0, 0, 0])
    nu = AtomicMeasure.from_atoms([[1, 0.5], [3, 0.5]])
    a = build_a(ModelParams(1.0, 0.5, nu), EnsembleConfig(8, 0.5))
    np.testing.assert_allclose(a.diagonal, [math.sqrt(3), math.sqrt(3), 1, 1])
    a = build_a(dirac_model(spikes=[(2.0, 2)]), EnsembleConfig(10, 0.5))
    np.testing.assert_allclose(a.diagonal, [math.sqrt(2)] * 2 + [0] * 3)
    assert a.rank_range(0) == (1, 2)


def test_build_a_infeasible():
    nu = AtomicMeasure.from_atoms([[1, 0.5], [3, 0.5]])
    with pytest.raises(ConfigError):
        build_a(ModelParams(1.0, 0.5, nu, ((2.0, 3),)), EnsembleConfig(8, 0.5))


def test_build_a_multiset_and_rotation():
    p = MULTI_ATOM[2].with_(spikes=((5.0, 2), (1.5, 1)))
    cfg = EnsembleConfig(60, 0.5, rotate=True, seed=3)
    a = build_a(p, cfg)
    aa = a.matrix() @ a.matrix().conj().T
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(aa)), np.sort(a.gamma), atol=1e-10)
    for j, (theta, k) in enumerate(p.spikes):
        b = a.spike_basis(j)
        np.testing.assert_allclose(aa @ b, theta * b, atol=1e-10)
        np.testing.assert_allclose(b.conj().T @ b, np.eye(k), atol=1e-12)


@pytest.mark.parametrize("law", LAWS, ids=lambda l: getattr(l, "name", l))
def test_sample_moments(law):
    cfg = EnsembleConfig(300, 0.5, law, seed=11)
    x = sample_x(cfg)
    assert x.shape == (150, 300)
    band = 5 / math.sqrt(x.size)
    for comp in (x.real, x.imag):
        assert abs(comp.mean()) < band
        assert abs(comp.var() - 0.5) < 5 * band
    assert abs(np.mean(np.abs(x) ** 2) - 1) < 10 * band


@pytest.mark.parametrize("law", LAWS, ids=lambda l: getattr(l, "name", l))
def test_sample_is_deterministic(law):
    cfg = EnsembleConfig(40, 0.5, law, seed=2**63 + 5)
    assert np.array_equal(sample_x(cfg, trial=3), sample_x(cfg, trial=3))
    assert not np.array_equal(sample_x(cfg, trial=3), sample_x(cfg, trial=4))


def test_rademacher_support():
    x = sample_x(EnsembleConfig(50, 1.0, "rademacher", seed=1))
    vals = set(np.round(np.concatenate([x.real.ravel(), x.imag.ravel()]) * math.sqrt(2), 12))
    assert vals == {-1.0, 1.0}


def test_truncation_constants():
    assert third_abs_moment("complex-gaussian") == pytest.approx(0.75 * math.sqrt(math.pi))
    assert third_abs_moment("rademacher") == 1.0
    # E|X|^3 for uniform components, by Monte Carlo
    rng = np.random.default_rng(0)
    a = math.sqrt(1.5)
    u = rng.uniform(-a, a, (2, 400_000))
    assert third_abs_moment("uniform-bounded") == pytest.approx(np.mean((u**2).sum(0) ** 1.5), rel=5e-3)
    with pytest.raises(ConfigError):
        TruncatedLaw(8.0, 0.1)  # 8 theta* ~ 10.6 for the Gaussian base
    law = TruncatedLaw(20.0, 0.1)
    mean, sd = law.component_scale()
    assert mean == 0.0
    # truncation at 20 standard deviations leaves the variance untouched
    assert 2 * sd**2 == pytest.approx(1.0, abs=1e-12)


def test_truncation_with_active_cut():
    law = TruncatedLaw(11.0, 0.5, base="uniform-bounded")
    mean, sd = law.component_scale()
    assert 2 * sd**2 == pytest.approx(1.0, abs=1e-12)
    # the Gaussian mixing keeps the component variance at 1/2 by construction
    assert (1.0 + law.alpha**2) / (2 * (1 + law.alpha**2)) == 0.5


def test_assemble_m_noiseless_and_scalar():
    p = MULTI_ATOM[0].with_(spikes=((5.0, 1),))
    cfg = EnsembleConfig(20, 0.5, seed=1)
    a = build_a(p, cfg)
    x = sample_x(cfg)
    m = assemble_m(a, x, 0.0)
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(m)), np.sort(a.gamma), atol=1e-12)
    m0 = assemble_m(a, np.zeros_like(x), 1.0)
    np.testing.assert_allclose(m0, m, atol=1e-14)

    one = build_a(ModelParams(1.0, 1.0, AtomicMeasure.dirac(4.0)), EnsembleConfig(1, 1.0))
    xs = np.array([[0.3 - 0.2j]])
    assert assemble_m(one, xs, 1.5)[0, 0].real == pytest.approx(abs(1.5 * xs[0, 0] + 2.0) ** 2)


def test_assemble_m_hermitian():
    p = dirac_model(spikes=[(2.0, 1)])
    cfg = EnsembleConfig(50, 0.5, rotate=True, seed=4)
    m = assemble_m(build_a(p, cfg), sample_x(cfg), 1.0)
    assert np.array_equal(m, m.conj().T)


@pytest.mark.parametrize("law", LAWS, ids=lambda l: getattr(l, "name", l))
def test_noise_norm_smoke(law):
    # largest singular value of X / sqrt(N) stays below 2 (1 + sqrt c) + 0.5
    c = 0.5
    bound = 2 * (1 + math.sqrt(c)) + 0.5
    for seed in range(3):
        x = sample_x(EnsembleConfig(500, c, law, seed=seed))
        assert np.linalg.norm(x / math.sqrt(500), 2) < bound


def test_matrix_dump_round_trip(tmp_path):
    m = np.arange(12).reshape(3, 4) + 1j * np.arange(12).reshape(3, 4)[::-1]
    path = tmp_path / "m.ipnm"
    write_matrix_dump(path, m, N=7, flags=1)
    raw = path.read_bytes()
    assert raw[:4] == b"IPNM" and len(raw) == 32 + m.size * 16
    back, N, flags = read_matrix_dump(path)
    assert np.array_equal(back, m) and N == 7 and flags == 1


def test_config_validation():
    with pytest.raises(ConfigError):
        EnsembleConfig(0, 0.5)
    with pytest.raises(ConfigError):
        EnsembleConfig(10, 0.5, "cauchy")
    with pytest.raises(ConfigError):
        EnsembleConfig(10, 0.5, seed=-1)
    cfg = EnsembleConfig(2000, 0.5, {"name": "truncated-smoothed", "C": 20, "alpha": 0.1})
    assert cfg.n == 1000 and cfg.c_N == 0.5
    assert isinstance(cfg.entry_law, TruncatedLaw)
