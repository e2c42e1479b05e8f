import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rpfcones.cones import (
    LogHolderConeParams,
    calibrate_tower_cone,
    covering_diameter_target,
    covering_domination_bound,
    domination_epsilon,
    invariance_check,
    logholder_family,
    logholder_membership,
    perturbation_radius,
    reproducing_shift,
    sample_cone,
    tower_cone_params,
    tower_functional_family,
    tower_sigma,
)
from rpfcones.errors import ConfigError, ConePreconditionError
from rpfcones.function_space import DiscreteFunction
from rpfcones.metrics import complex_cone_contains, real_cone_contains
from rpfcones.transfer import TransferStage, TwistWindow

from conftest import gauss_density


@pytest.fixture(scope="module")
def tparams(tower):
    return tower_cone_params(tower)


@pytest.fixture(scope="module")
def tfamily(tparams):
    return tower_functional_family(tparams)


# -- tower cone ---------------------------------------------------------------


def test_partition_covers_grid(tparams, tower):
    nodes = np.concatenate(list(tparams.P1) + [tparams.P2])
    assert np.array_equal(np.sort(nodes), np.arange(tower.grid.n))
    assert tparams.m_P2 < tparams.eps0


def test_upsilon_of_h_is_one(tparams):
    h = tparams.h
    ups = np.array([tparams.m[P] @ h[P] for P in tparams.P1]) / tparams.mu_P
    assert np.allclose(ups, 1.0, atol=1e-13)


def test_default_cone_contains_one_and_h(tparams, tfamily, tower):
    assert tparams.contains_one and tparams.contains_h
    assert real_cone_contains(tfamily, DiscreteFunction.constant(tower.grid))
    assert real_cone_contains(tfamily, DiscreteFunction(tower.grid, tparams.h))


def test_spike_leaves_cone(tparams, tfamily, tower):
    # a light node of the exceptional set barely moves the integral
    v = np.ones(tower.grid.n)
    v[tparams.P2[-1]] += 1e4
    assert not real_cone_contains(tfamily, DiscreteFunction(tower.grid, v))
    v = np.ones(tower.grid.n)
    v[tparams.P1[-1]] = -1.0
    assert not real_cone_contains(tfamily, DiscreteFunction(tower.grid, v))


def test_eps0_too_small_rejected(tower):
    with pytest.raises(ConePreconditionError):
        tower_cone_params(tower, eps0=0.0)


def test_sup_bound_on_cone_elements(tparams, tfamily):
    X = sample_cone(tfamily, 200, np.random.default_rng(1))
    sup = np.max(np.abs(X), axis=0)
    assert np.all(sup <= tparams.c2 * (tparams.m @ X) * (1 + 1e-9))


@settings(max_examples=20)
@given(st.integers(0, 2**31))
def test_sigma_of_cone_elements_at_most_one(tparams, tfamily, tower, seed):
    X = sample_cone(tfamily, 5, np.random.default_rng(seed))
    for k in range(5):
        f = DiscreteFunction(tower.grid, X[:, k])
        s = tower_sigma(tparams, f)
        assert s <= 1 + 1e-9
        assert real_cone_contains(tower_functional_family(tparams.scaled(s * (1 + 1e-9))), f)


def test_reproducing_shift_of_h_is_zero(tparams, tower):
    assert reproducing_shift(tparams, DiscreteFunction(tower.grid, tparams.h)) == 0
    assert reproducing_shift(tparams, DiscreteFunction.constant(tower.grid, 0.0)) == 0


def test_reproducing_shift_brings_minus_h_back(tparams, tfamily, tower):
    f = DiscreteFunction(tower.grid, -tparams.h)
    R = reproducing_shift(tparams, f)
    assert R.real > 1 and R.imag == 0
    assert real_cone_contains(tfamily, DiscreteFunction(tower.grid, f.values + R.real * tparams.h))


@settings(max_examples=20)
@given(st.integers(0, 2**31))
def test_reproducing_shift_lands_in_complex_cone(tparams, tfamily, tower, seed):
    rng = np.random.default_rng(seed)
    f = DiscreteFunction(tower.grid, rng.standard_normal(tower.grid.n) + 1j * rng.standard_normal(tower.grid.n))
    R = reproducing_shift(tparams, f)
    g = DiscreteFunction(tower.grid, f.values + R.real * tparams.h + 1j * R.imag * tparams.h)
    assert complex_cone_contains(tfamily, g)


def test_reproducing_shift_needs_room(tparams, tower):
    with pytest.raises(ConfigError):
        reproducing_shift(tparams.with_abc(1.0, tparams.b, tparams.c), DiscreteFunction.constant(tower.grid))


def test_calibrated_tower_cone_is_invariant(tower):
    k = int(tower.grid.levels.max()) + 1
    w = TwistWindow([TransferStage(tower, mode="weighted")] * k)
    params, rep = calibrate_tower_cone(tower, w, samples=20)
    assert rep.passed and rep.sigma_hat <= 0.9
    assert math.isfinite(rep.diameter)


# -- log-Hölder cones ---------------------------------------------------------


def test_s_prime_arithmetic():
    p = LogHolderConeParams(s=4.0, Q=1.0, gamma=2.0)
    assert p.s_prime == 3.0 and p.improves
    g = LogHolderConeParams(s=4.0, Q=1.0, gamma=9 / 4)
    assert g.s_prime == pytest.approx(25 / 9)
    assert g.s_threshold == pytest.approx(9 / 5)
    assert not LogHolderConeParams(s=1.5, Q=1.0, gamma=9 / 4).improves


def test_logholder_rejects_bad_parameters():
    for kw in ({"s": 1.0, "Q": 1.0}, {"s": 2.0, "Q": -1.0}, {"s": 2.0, "Q": 1.0, "alpha": 1.5}):
        with pytest.raises(ConfigError):
            LogHolderConeParams(**kw)


def test_diameter_target():
    p = LogHolderConeParams(s=4.0, Q=1.0, gamma=2.0)
    assert covering_diameter_target(p, 2.0) == pytest.approx(2 * math.log(7 * 2.0))
    assert covering_diameter_target(LogHolderConeParams(s=1.5, Q=1.0, gamma=2.0), 2.0) == math.inf


def test_logholder_membership(gauss_small):
    p = LogHolderConeParams(s=2.0, Q=1.0, xi=1.5, gamma=9 / 4)
    g = gauss_small.grid
    assert logholder_membership(p, DiscreteFunction.constant(g))[0]
    # log h is 1-Lipschitz on [0, 1], so h sits in the cone once s Q >= 1
    assert logholder_membership(p, DiscreteFunction(g, gauss_density(g.coords)))[0]
    assert not logholder_membership(p, DiscreteFunction(g, g.coords - 0.5))[0]
    with pytest.raises(TypeError):
        logholder_membership(p, DiscreteFunction(g, 1j * np.ones(g.n)))


def test_doubling_maps_cone_into_improved_cone(doubling):
    p = LogHolderConeParams(s=4.0, Q=1.0, xi=1.5, gamma=2.0)
    w = TwistWindow([TransferStage(doubling)])
    rep = invariance_check(p, None, w, samples=60, rng=2)
    assert rep.passed
    assert rep.diameter <= rep.target


def test_invariance_needs_untwisted_window(doubling):
    p = LogHolderConeParams(s=4.0, Q=1.0)
    with pytest.raises(ConfigError):
        invariance_check(p, None, TwistWindow([TransferStage(doubling)], [None], 0.1))


def test_domination_epsilon_on_bernoulli(bernoulli):
    p = LogHolderConeParams(s=4.0, Q=1.0, xi=2.0, gamma=2.0)
    S = logholder_family(p, bernoulli.grid)
    u = DiscreteFunction(bernoulli.grid, bernoulli.grid.coords[:, 0].astype(float))
    op = TransferStage(bernoulli)
    w0 = TwistWindow([op], [u], 0.0)
    X = sample_cone(S, 30, np.random.default_rng(4))
    assert domination_epsilon(S, w0, w0, X).epsilon == 0.0
    e1 = domination_epsilon(S, w0.with_z(0.2), w0, X).epsilon
    e2 = domination_epsilon(S, w0.with_z(0.1), w0, X).epsilon
    assert 0 < e2 <= 0.6 * e1


def test_covering_domination_bound():
    assert covering_domination_bound(0.1, 2.0, 4.0) == pytest.approx(0.5)
    assert covering_domination_bound(0.1j, 2.0, 4.0) == pytest.approx(0.5)
    with pytest.raises(ConfigError):
        covering_domination_bound(0.1, 1.0, 1.0)


# -- perturbation radius ------------------------------------------------------


def test_perturbation_radius_closed_form():
    r = perturbation_radius(1.0, 0.0)
    assert r.threshold == pytest.approx(0.25)
    assert r.r == pytest.approx(0.125)
    assert r.delta == pytest.approx(0.5)
    assert r.d1 == pytest.approx(6 * math.log(2))
    assert float(r) == r.r


@given(st.floats(0.1, 10), st.floats(0, 20), st.floats(0, 5))
def test_perturbation_radius_monotone(C0, d0, extra):
    a, b = perturbation_radius(C0, d0), perturbation_radius(C0, d0 + extra)
    assert 0 < b.r <= a.r
    assert a.delta == pytest.approx(0.5)


def test_perturbation_radius_validates():
    for args in ((0.0, 1.0), (1.0, -1.0)):
        with pytest.raises(ConfigError):
            perturbation_radius(*args)
