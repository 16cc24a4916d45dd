import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracdrift.model import ConfigError, ModelParams
from fracdrift.simulator import (
    Grid3D,
    KernelField,
    SimConfig,
    contraction_and_ultracontractivity_check,
    estimate_kernel,
    estimate_kernel_adjoint,
    euler_paths,
    gaussian_bump,
    killed_population,
    propagate,
    read_snapshot,
    write_snapshot,
)
from fracdrift.stable_kernel import get_table

FREE = ModelParams(kappa=0.0)
DRIFT = ModelParams(kappa=5.0, eps=1e-6)


def small_pde(kappa=5.0, N=32, L=16.0, t=0.5):
    params = ModelParams(kappa=kappa, eps=(L / N) ** 2)
    return SimConfig(params, t_final=t, grid=(L, N)), Grid3D(L, N)


def test_config_validation():
    with pytest.raises(ConfigError):
        SimConfig(FREE, t_final=0.0)
    with pytest.raises(ConfigError):
        SimConfig(ModelParams(kappa=1.0, eps=0.0), t_final=1.0)
    with pytest.raises(ConfigError):
        SimConfig(FREE, t_final=1.0, dt=2.0)
    with pytest.raises(ConfigError):
        SimConfig(FREE, t_final=1.0, c_cfl=1.5)
    with pytest.raises(ConfigError):
        Grid3D(16.0, 70)


def test_free_forward_matches_kernel():
    cfg = SimConfig(FREE, t_final=1.0, n_paths=200_000, seed=1)
    ys = np.array([[r, 0, 0] for r in (0, 0.25, 0.5, 1, 2, 3)] + [[0, 1, 1], [0, 0, 2]], float)
    f = estimate_kernel(np.zeros(3), ys, cfg)
    k = get_table(1.5).kernel(1.0, np.zeros(3), ys)
    assert np.all(np.abs(f.estimate - k) <= 3 * f.stderr)


def test_free_adjoint_matches_kernel():
    cfg = SimConfig(FREE, t_final=1.0, n_paths=100_000, seed=2)
    xs = np.array([[0, 0, 0], [1, 0, 0], [0, 2, 0]], float)
    y = np.array([0.5, 0, 0])
    pop = killed_population(y, cfg)
    # no drift, no killing: every replica keeps unit mass
    assert np.allclose(pop.mass, 1.0)
    f = estimate_kernel_adjoint(xs, y, cfg, population=pop)
    k = get_table(1.5).kernel(1.0, xs, y)
    assert np.all(np.abs(f.estimate - k) <= 3 * f.stderr)


def test_adjoint_agrees_with_forward_outside_depletion():
    cfg = SimConfig(DRIFT, t_final=1.0, n_paths=200_000, seed=2)
    y = np.array([4.0, 0, 0])
    xs = np.array([[3, 0, 0], [5, 0, 0]], float)
    adj = estimate_kernel_adjoint(xs, y, cfg)
    for i, x in enumerate(xs):
        fw = estimate_kernel(x, y[None], cfg)
        z = (adj.estimate[i] - fw.estimate[0]) / math.hypot(adj.stderr[i], fw.stderr[0])
        assert abs(z) <= 4


def test_killed_mass_below_one():
    cfg = SimConfig(DRIFT, t_final=1.0, n_paths=20_000, seed=3)
    pop = killed_population(np.array([0.0, 0.3, 0.0]), cfg)
    assert np.all((pop.mass > 0) & (pop.mass < 1))


def test_paths_thread_independent():
    cfg = SimConfig(DRIFT, t_final=0.2, n_paths=70_000, seed=4)
    x0 = np.array([1.0, 0.0, 0.0])
    a = euler_paths(x0, cfg.with_(threads=1))
    b = euler_paths(x0, cfg.with_(threads=3))
    assert a.points.tobytes() == b.points.tobytes()


def test_population_thread_independent():
    cfg = SimConfig(DRIFT, t_final=0.2, n_paths=4_000, seed=5)
    y = np.array([0.0, 0.5, 0.0])
    a = killed_population(y, cfg.with_(threads=1))
    b = killed_population(y, cfg.with_(threads=2))
    assert a.mass.tobytes() == b.mass.tobytes()
    assert all(p.tobytes() == q.tobytes() for p, q in zip(a.points, b.points))


def test_seed_changes_paths():
    cfg = SimConfig(FREE, t_final=0.1, n_paths=1000, seed=6)
    a = euler_paths(np.zeros(3), cfg)
    b = euler_paths(np.zeros(3), cfg.with_(seed=7))
    assert not np.array_equal(a.points, b.points)


def test_kernel_field_csv_round_trip(tmp_path):
    f = KernelField(np.ones(2), [[0, 0, 0], [1, 2, 3]], [[0.1, 0, 0], [3, 2, 1]],
                    [0.5, 1e-9], [0.01, 1e-10], "MC")
    path = tmp_path / "k.csv"
    f.to_csv(str(path))
    g = KernelField.from_csv(str(path))
    for name in ("t", "x", "y", "estimate", "stderr"):
        assert np.array_equal(getattr(f, name), getattr(g, name))
    assert g.backend == "MC"


def test_kernel_field_rejects_negative():
    with pytest.raises(ValueError):
        KernelField([1.0], [[0, 0, 0]], [[1, 0, 0]], [-1.0], [0.1], "MC")


def test_kernel_field_concat_and_subset():
    f = KernelField([1.0], [[0, 0, 0]], [[1, 0, 0]], [1.0], [0.5], "MC")
    g = KernelField.concat([f, f])
    assert len(g) == 2 and g.inconclusive.all()
    assert len(g.subset(np.array([True, False]))) == 1


def test_fokker_planck_conserves_mass_and_positivity():
    cfg, grid = small_pde()
    f0 = gaussian_bump(grid, (0.5, -0.25, 0.0), 0.5)
    u = propagate(f0, "fokker_planck", cfg, grid)
    m0 = grid.integral(f0)
    assert abs(grid.integral(u) - m0) <= 1e-6 * m0 * cfg.t_final
    assert u.min() >= -1e-10 * f0.max()


@settings(max_examples=5)
@given(st.integers(0, 2**32 - 1))
def test_forward_is_transpose_of_fokker_planck(seed):
    cfg, grid = small_pde(N=24, t=0.2)
    rng = np.random.default_rng(seed)
    f, g = rng.random((2, 24, 24, 24))
    lhs = np.sum(propagate(f, "fokker_planck", cfg, grid) * g)
    rhs = np.sum(f * propagate(g, "forward", cfg, grid))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_forward_contracts():
    cfg, grid = small_pde(t=1.0)
    rep = contraction_and_ultracontractivity_check(cfg, grid, t_final=1.0, t_window=(0.1, 1.0))
    assert rep["ok"], rep["offending"][:3]
    assert rep["c_N"] > 0


def test_cfl_violation_is_reported():
    params = ModelParams(kappa=50.0, eps=1e-4)
    cfg = SimConfig(params, t_final=0.5, dt=0.1, grid=(16.0, 32))
    grid = Grid3D(16.0, 32)
    with pytest.raises(ConfigError):
        propagate(gaussian_bump(grid), "fokker_planck", cfg, grid)


def test_unknown_direction():
    cfg, grid = small_pde()
    with pytest.raises(ConfigError):
        propagate(gaussian_bump(grid), "sideways", cfg, grid)


def test_snapshot_round_trip(tmp_path):
    grid = Grid3D(8.0, 16)
    f = gaussian_bump(grid)
    path = str(tmp_path / "snap.bin")
    write_snapshot(path, f, grid, time=0.5)
    arr, meta = read_snapshot(path)
    assert np.array_equal(arr, f)
    assert meta["time"] == 0.5 and meta["N"] == 16
