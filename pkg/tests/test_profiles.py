import numpy as np
import pytest

from torusgas.errors import ConfigError
from torusgas.profiles import (Profile, lambda_inverse, lambda_transform,
                               project_along_drift, validate_profile)


def test_constant_profile_passes():
    p = Profile.constant(2, 0.5)
    diag = validate_profile(p, [1.0, 0.0], delta0=0.1)
    assert diag["max_drift_derivative"] == 0.0
    assert diag["ok"]


def test_cosine_orthogonal_drift_exact():
    # variation along axis 1 is invisible to drift along axis 0
    p = Profile.cosine(2, 0.5, 0.2, axis=1)
    diag = validate_profile(p, [1.0, 0.0], delta0=0.1)
    assert diag["max_drift_derivative"] == 0.0
    assert diag["ok"]


def test_cosine_parallel_drift_fails():
    p = Profile.cosine(2, 0.5, 0.2, axis=0)
    diag = validate_profile(p, [1.0, 0.0], delta0=0.1)
    assert diag["max_drift_derivative"] > 0.1
    assert not diag["ok"]


def test_boundary_margin():
    p = Profile.cosine(2, 0.5, 0.45, axis=1)
    diag = validate_profile(p, [0.0, 0.0], delta0=0.1)
    assert not diag["bounded_away"]


def test_projection_idempotent_and_constant():
    p = Profile.cosine(1, 0.5, 0.2, axis=0)
    q = [1.0]
    proj = project_along_drift(p, q)
    grid = proj.sample_grid(16)
    assert np.abs(grid - 0.5).max() < 1e-12
    const = Profile.constant(2, 0.3)
    again = project_along_drift(const, [1.0, 0.0])
    assert np.abs(again.sample_grid(8) - 0.3).max() < 1e-14


def test_projection_drift_constant_input_fixed():
    p = Profile.cosine(2, 0.5, 0.2, axis=1)
    proj = project_along_drift(p, [1.0, 0.0])
    assert np.abs(proj.sample_grid(12) - p.sample_grid(12)).max() < 1e-12


def test_lambda_transform_values():
    assert lambda_transform(0.5, 0.5) == 0.0
    assert lambda_transform(0.75, 0.5) == pytest.approx(np.log(3.0), abs=1e-12)
    rho = np.linspace(0.05, 0.95, 19)
    lam = lambda_transform(rho, 0.3)
    assert np.all(np.diff(lam) > 0)  # strictly increasing
    back = lambda_inverse(lam, 0.3)
    assert np.abs(back - rho).max() < 1e-12


def test_lambda_transform_domain_errors():
    with pytest.raises(ConfigError):
        lambda_transform(0.0, 0.5)
    with pytest.raises(ConfigError):
        lambda_transform(0.5, 1.0)


def test_profile_spec_roundtrip(tmp_path):
    p = Profile.from_spec(2, {"kind": "cosine", "base": 0.4, "amplitude": 0.1,
                              "axis": 0})
    grid = p.sample_grid(8)
    from torusgas.profiles import save_profile_csv, load_profile_csv
    path = tmp_path / "prof.csv"
    save_profile_csv(path, grid)
    p2 = Profile.from_grid(load_profile_csv(path, 2))
    assert np.abs(p2.sample_grid(8) - grid).max() < 1e-12


def test_grid_profile_interpolation_exact_at_nodes():
    grid = np.random.default_rng(0).uniform(0.2, 0.8, (6, 6))
    p = Profile.from_grid(grid)
    pts = np.array([[i / 6, j / 6] for i in range(6) for j in range(6)])
    vals = p.values_at(pts)
    assert np.abs(vals.reshape(6, 6) - grid).max() < 1e-14
