import numpy as np
import pytest

from torusgas.errors import ConfigError
from torusgas.exactsmall import product_distribution
from torusgas.gibbs import (CylinderFunction, GibbsSpec, centered_product,
                            fclass_check, log_corrected_gibbs, log_local_gibbs,
                            product_mean, relative_entropy_distributions,
                            relative_entropy_product)
from torusgas.lattice import Configuration, TorusGeometry


def test_centered_product_in_class():
    cyl = centered_product([(0,), (1,)])
    diag = fclass_check(cyl)
    assert diag["ok"]
    cyl3 = centered_product([(0, 0), (1, 0), (0, 1)])
    assert fclass_check(cyl3)["ok"]


def test_non_member_detected():
    # eta(0) - beta alone has nonzero density derivative mean? mean is zero,
    # derivative mean is -1: fails membership
    single = CylinderFunction(
        ((0,),),
        lambda beta, occ: occ[:, 0] - beta,
        lambda beta, occ: -np.ones(occ.shape[0]))
    diag = fclass_check(single)
    assert not diag["ok"]
    assert diag["max_mean"] <= 1e-12
    assert diag["max_derivative_mean"] == pytest.approx(1.0)


def test_product_mean_enumeration():
    cyl = centered_product([(0,), (1,)])
    for beta in (0.0, 0.3, 1.0):
        assert product_mean(cyl, beta) == pytest.approx(0.0, abs=1e-15)


def test_log_local_gibbs_additivity():
    geom = TorusGeometry(1, 4)
    lam = np.array([0.1, 0.3, -0.2, 0.4])
    zero = Configuration.empty(geom)
    assert log_local_gibbs(zero, lam) == 0.0
    one = Configuration(geom, np.array([0, 1, 0, 0], dtype=np.uint8))
    assert log_local_gibbs(one, lam) == pytest.approx(0.3)
    two = Configuration(geom, np.array([0, 1, 0, 1], dtype=np.uint8))
    assert log_local_gibbs(two, lam) == pytest.approx(0.3 + 0.4)


def test_corrected_gibbs_reductions():
    geom = TorusGeometry(1, 4)
    occ = Configuration(geom, np.array([1, 0, 1, 1], dtype=np.uint8))
    lam = np.array([0.1, 0.3, -0.2, 0.4])
    plain = GibbsSpec(lambda_grid=lam)
    assert log_corrected_gibbs(occ, plain) == pytest.approx(
        log_local_gibbs(occ, lam))
    # constant field kills every centred difference
    cyl = centered_product([(0,), (1,)])
    const = GibbsSpec(lambda_grid=np.full(4, 0.7), corrections=[cyl],
                      block_radius=1, ell=1)
    assert log_corrected_gibbs(occ, const) == pytest.approx(
        log_local_gibbs(occ, np.full(4, 0.7)))


def test_corrected_gibbs_hand_value():
    # d=1, N=4, occupancy (1,0,1,1), window radius 1, averaging radius 0:
    # base 0.3, correction -0.05 evaluated by hand from the defining sums
    geom = TorusGeometry(1, 4)
    occ = Configuration(geom, np.array([1, 0, 1, 1], dtype=np.uint8))
    lam = np.array([0.1, 0.3, -0.2, 0.4])
    cyl = centered_product([(0,), (1,)])
    spec = GibbsSpec(lambda_grid=lam, corrections=[cyl], block_radius=1, ell=1)
    assert spec.padding == 1 and spec.ell_prime == 0
    assert log_corrected_gibbs(occ, spec) == pytest.approx(0.25, abs=1e-12)
    assert spec.warnings  # desk-scale run cannot meet the asymptotic ordering


def test_corrected_gibbs_translation_covariance():
    geom = TorusGeometry(1, 6)
    rng = np.random.default_rng(4)
    occ = (rng.random(6) < 0.5).astype(np.uint8)
    lam = rng.standard_normal(6)
    cyl = centered_product([(0,), (1,)])
    spec = GibbsSpec(lambda_grid=lam, corrections=[cyl], block_radius=1, ell=1)
    v0 = log_corrected_gibbs(Configuration(geom, occ), spec)
    shift = 2
    occ_s = np.roll(occ, shift)
    spec_s = GibbsSpec(lambda_grid=np.roll(lam, shift), corrections=[cyl],
                       block_radius=1, ell=1)
    v1 = log_corrected_gibbs(Configuration(geom, occ_s), spec_s)
    assert v1 == pytest.approx(v0, abs=1e-12)


def test_relative_entropy_product_values():
    assert relative_entropy_product([0.3], [0.3]) == 0.0
    # hand computation: 0.9 ln 1.8 + 0.1 ln 0.2
    val = relative_entropy_product([0.9], [0.5])
    assert val == pytest.approx(0.3680642072, abs=1e-9)
    n = 27
    field = np.full(n, 0.9)
    total = relative_entropy_product(field, np.full(n, 0.5))
    assert total == pytest.approx(n * val)
    assert total <= n * val + 1e-12


def test_relative_entropy_errors_and_edges():
    assert relative_entropy_product([0.0, 1.0], [0.4, 0.6]) > 0
    # degenerate reference where the state marginal is interior: precondition
    with pytest.raises(ConfigError):
        relative_entropy_product([0.5], [0.0])
    with pytest.raises(ConfigError):
        relative_entropy_product([0.5], [1.2])


def test_entropy_matches_exhaustive_enumeration():
    geom = TorusGeometry(2, 3)
    rng = np.random.default_rng(11)
    mu_m = rng.uniform(0.1, 0.9, geom.n_sites)
    nu_m = rng.uniform(0.2, 0.8, geom.n_sites)
    closed = relative_entropy_product(mu_m, nu_m)
    mu = product_distribution(geom, mu_m)
    nu = product_distribution(geom, nu_m)
    exhaustive = relative_entropy_distributions(mu, nu)
    assert exhaustive == pytest.approx(closed, abs=1e-9)


def test_variational_inequality():
    # for any test function: mean minus log moment bound is below the entropy
    geom = TorusGeometry(2, 3)
    rng = np.random.default_rng(12)
    mu = product_distribution(geom, rng.uniform(0.2, 0.8, 9))
    nu = product_distribution(geom, rng.uniform(0.3, 0.7, 9))
    kl = relative_entropy_distributions(mu, nu)
    for _ in range(5):
        f = rng.standard_normal(512)
        lower = float(mu @ f - np.log(nu @ np.exp(f)))
        assert lower <= kl + 1e-12
    # the optimizer log(mu/nu) attains it
    f_star = np.log(mu / nu)
    attained = float(mu @ f_star - np.log(nu @ np.exp(f_star)))
    assert attained == pytest.approx(kl, abs=1e-10)
