import numpy as np
import pytest

from torusgas.kernels import TransitionKernel, ssep, tasep
from torusgas.lattice import Configuration, TorusGeometry, sample_product_measure
from torusgas.simulate import (RngStream, current_observables, evolve,
                               evolve_diffusive)


def test_zero_duration_identity():
    geom = TorusGeometry(2, 4)
    rng = RngStream(1).generator()
    c = sample_product_measure(geom, 0.5, rng)
    out, ledger = evolve(c, ssep(2), 0.0, rng)
    assert np.array_equal(out.occupancy, c.occupancy)
    assert ledger.counts.sum() == 0
    assert ledger.elapsed == 0.0


def test_full_lattice_frozen():
    geom = TorusGeometry(2, 4)
    rng = RngStream(2).generator()
    c = Configuration.full(geom)
    out, ledger = evolve(c, tasep(2), 3.0, rng)
    assert np.array_equal(out.occupancy, c.occupancy)
    assert ledger.counts.sum() == 0


def test_conservation_and_continuity():
    geom = TorusGeometry(2, 8)
    kernel = TransitionKernel(2, np.array([[1, 0], [-1, 0], [0, 1], [0, -1]]),
                              np.array([0.4, 0.2, 0.3, 0.1]))
    for rep in range(5):
        rng = RngStream(11, rep).generator()
        c0 = sample_product_measure(geom, 0.45, rng)
        c1, ledger = evolve(c0, kernel, 2.5, rng)
        assert c1.particle_count == c0.particle_count
        assert int(c1.occupancy.sum()) == c0.particle_count
        ledger.check_continuity(c0, c1)  # integer-exact identity


def test_single_particle_drift():
    # free walk: mean displacement is drift times duration
    kernel = tasep(3)
    geom = TorusGeometry(3, 8)
    duration = 5.0
    replicas = 10000
    total = np.zeros(3)
    occ0 = np.zeros(geom.n_sites, dtype=np.uint8)
    occ0[0] = 1
    for r in range(replicas):
        rng = RngStream(123, r).generator()
        _, ledger = evolve(Configuration(geom, occ0.copy()), kernel, duration, rng)
        total += ledger.total_displacement()
    mean = total / replicas
    se = np.sqrt(duration * 1.0 / replicas)  # variance sigma_11 * T per replica
    assert abs(mean[0] - duration) < 4 * se
    assert abs(mean[1]) < 4 * se + 1e-12
    assert abs(mean[2]) < 4 * se + 1e-12


def test_stationarity_mean_density():
    # starting from the flat product measure the mean density stays put
    geom = TorusGeometry(2, 6)
    kernel = TransitionKernel(2, np.array([[1, 0], [0, 1]]), np.array([0.7, 0.3]))
    alpha = 0.3
    densities = []
    for r in range(120):
        rng = RngStream(77, r).generator()
        c0 = sample_product_measure(geom, alpha, rng)
        c1, _ = evolve(c0, kernel, 1.7, rng)
        densities.append(c1.particle_count / geom.n_sites)
    mean = np.mean(densities)
    se = np.sqrt(alpha * (1 - alpha) / (geom.n_sites * len(densities)))
    assert abs(mean - alpha) < 4 * se


def test_determinism_and_diffusive_equivalence():
    geom = TorusGeometry(2, 6)
    kernel = ssep(2)
    c0 = sample_product_measure(geom, 0.5, RngStream(5, 0).generator())
    a1, l1 = evolve(c0, kernel, 0.25 * 36, RngStream(5, 1).generator())
    a2, l2 = evolve(c0, kernel, 0.25 * 36, RngStream(5, 1).generator())
    assert np.array_equal(a1.occupancy, a2.occupancy)
    assert np.array_equal(l1.counts, l2.counts)
    b, lb = evolve_diffusive(c0, kernel, 0.25, RngStream(5, 1).generator())
    assert np.array_equal(b.occupancy, a1.occupancy)
    assert np.array_equal(lb.counts, l1.counts)
    # side 2: the microscopic span is four times the macroscopic one
    tiny = sample_product_measure(TorusGeometry(2, 2), 0.5, RngStream(8).generator())
    _, ledger2 = evolve_diffusive(tiny, kernel, 0.3, RngStream(8).generator())
    assert ledger2.elapsed == pytest.approx(0.3 * 4)
    # different replica index gives a different trajectory
    c, _ = evolve(c0, kernel, 0.25 * 36, RngStream(5, 2).generator())
    assert not np.array_equal(c.occupancy, a1.occupancy)


def test_current_observables_trivials():
    geom = TorusGeometry(3, 4)
    kernel = tasep(3)
    for config in (Configuration.empty(geom), Configuration.full(geom)):
        obs = current_observables(config, kernel, 0.5)
        assert np.all(obs["current"] == 0.0)
        assert np.all(obs["second_moment"] == 0.0)
    occ = np.zeros(geom.n_sites, dtype=np.uint8)
    occ[geom.site_index([0, 0, 0])] = 1
    obs = current_observables(Configuration(geom, occ), kernel, 0.0)
    # reversed weights sit on -e1: current at the particle equals -1
    assert obs["current"][geom.site_index([0, 0, 0]), 0] == pytest.approx(-1.0)


def test_centered_current_matches_definition():
    geom = TorusGeometry(2, 5)
    kernel = TransitionKernel(2, np.array([[1, 0], [0, 1], [-1, 0]]),
                              np.array([0.5, 0.3, 0.2]))
    rng = RngStream(9).generator()
    config = sample_product_measure(geom, 0.4, rng)
    alpha = 0.35
    obs = current_observables(config, kernel, alpha)
    occ = config.occupancy.astype(float)
    star = [(tuple(-z), p) for z, p in zip(kernel.offsets, kernel.weights)]
    x = geom.site_index([2, 3])
    for i in range(2):
        expect = 0.0
        for y, p in star:
            xy = geom.site_index(geom.site_coords(x) + np.array(y))
            expect += (-p * y[i] * (occ[x] - alpha) * (occ[xy] - alpha)
                       - alpha * p * y[i] * (occ[xy] - occ[x]))
        assert obs["centered"][x, i] == pytest.approx(expect, abs=1e-12)


def test_event_budget_guard():
    geom = TorusGeometry(2, 6)
    c = sample_product_measure(geom, 0.9, RngStream(0).generator())
    from torusgas.errors import ConfigError
    with pytest.raises(ConfigError):
        evolve(c, ssep(2), 1e39, RngStream(0).generator())
