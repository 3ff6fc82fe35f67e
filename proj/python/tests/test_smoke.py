import math

import numpy as np
import pytest

import sdecgmca as sd


def test_transform_round_trip():
    grid = sd.SphereGrid(8)
    assert grid.n_pix == 768
    assert grid.l_max == 23
    band = 8
    rng = np.random.default_rng(0)
    coeffs = np.zeros((band + 1) * (band + 2) // 2, dtype=complex)
    for m in range(band + 1):
        for l in range(m, band + 1):
            coeffs[sd.coeff_index(l, m, band)] = rng.normal() + (1j * rng.normal() if m else 0)
    x = sd.synthesize(coeffs, band, grid)
    back = sd.analyze(x, grid, 3, band)
    assert np.abs(back - coeffs).max() / np.abs(coeffs).max() < 1e-4


def test_starlet_partition_of_unity():
    detail, coarse = sd.starlet_filters(47, 3)
    total = np.sum(detail, axis=0) + np.asarray(coarse)
    assert np.allclose(total, 1.0, atol=1e-12)


def test_thresholds():
    assert sd.support_threshold([5, 4, 3, 2, 1], 1.5, 0.5) == 4.0
    assert sd.soft_threshold(3.0, 1.0) == 2.0
    assert sd.soft_threshold(-0.5, 1.0) == 0.0


def test_strategy3_substitution():
    eps = sd.reg_strategy(sd.Strategy.noise_bound, 2.0, np.eye(2), [[1.0] * 4, [1.0] * 4])
    assert eps.shape == (2, 4)
    assert np.allclose(eps, 2.0 - 1.0 / 1.01)


def test_simulate_and_metrics():
    p = sd.SimulationParams()
    p.n_side, p.n_sources, p.n_channels, p.seed = 8, 2, 3, 4
    ds = sd.simulate(p)
    assert ds.X.shape == (3, 768)
    assert ds.A.shape == (3, 2)
    assert ds.S.shape == (2, 768)
    assert math.isinf(sd.nmse(ds.S, ds.S))
    assert math.isinf(sd.c_a(ds.A, ds.A))
    A2, S2 = sd.aligned(ds.A, ds.A[:, ::-1], ds.S[::-1])
    assert np.array_equal(A2, ds.A)


def test_nonblind_and_hals():
    p = sd.SimulationParams()
    p.n_side, p.n_sources, p.n_channels, p.seed, p.snr_db = 8, 2, 3, 1, 20.0
    ds = sd.simulate(p)
    S, iters, converged = sd.run_nonblind(ds, ds.A, sd.Strategy.wiener, 0.5)
    assert S.shape == (2, 768)
    assert sd.nmse(ds.S, S) > 5.0
    X = np.abs(np.random.default_rng(1).random((4, 50)))
    A, S, it = sd.run_hals(X, 2, seed=3)
    assert A.shape == (4, 2) and (A >= 0).all() and (S >= 0).all()


def test_blind_run_smoke():
    p = sd.SimulationParams()
    p.n_side, p.n_sources, p.n_channels, p.seed = 8, 2, 3, 2
    ds = sd.simulate(p)
    cfg = sd.SolverConfig()
    cfg.N_wu = 10
    cfg.max_iter_ref = 20
    out = sd.run_sdecgmca(ds, cfg)
    assert out["A"].shape == (3, 2)
    assert np.allclose(np.linalg.norm(out["A"], axis=0), 1.0)
    assert set(out["trace"]["stage"]) == {"warmup", "refinement"}


def test_errors_are_python_exceptions():
    with pytest.raises(ValueError):
        sd.SphereGrid(3)
    cfg = sd.SolverConfig()
    cfg.K_max = 2.0
    with pytest.raises(ValueError):
        cfg.validate()
