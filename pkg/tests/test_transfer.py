import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rpfcones.errors import ConfigError, GridMismatchError, TruncationError
from rpfcones.function_space import DiscreteFunction, evaluate, interval_grid
from rpfcones.systems import doubling_stage, gauss_stage, interval_stage
from rpfcones.transfer import (
    TransferStage,
    TwistWindow,
    apply_L0,
    apply_Lz,
    birkhoff_sum,
    compose_window,
    lasota_yorke_report,
    log_potential,
    tail_ledger,
)

from conftest import gauss_density

GOLDEN = (math.sqrt(5) - 1) / 2


def test_gauss_density_is_fixed(gauss, gauss_op):
    h = DiscreteFunction(gauss.grid, gauss_density(gauss.grid.coords))
    assert np.max(np.abs(apply_L0(gauss_op, h).values - h.values)) < 1e-10


def test_gauss_L0_one_at_zero(gauss, gauss_op):
    out = apply_L0(gauss_op, DiscreteFunction.constant(gauss.grid))
    # partial sum to 10^6 plus the integral tail 1/N as an independent oracle
    n = np.arange(1, 1_000_001, dtype=float)
    oracle = np.sum(1 / n[::-1] ** 2) + 1e-6
    assert evaluate(out, 0.0) == pytest.approx(oracle, abs=1e-11)
    assert evaluate(out, 0.0) == pytest.approx(math.pi**2 / 6, abs=1e-11)


def test_doubling_preserves_one(doubling):
    out = apply_L0(TransferStage(doubling), DiscreteFunction.constant(doubling.grid))
    assert np.max(np.abs(out.values - 1.0)) <= 4 * np.finfo(float).eps


def test_twist_zero_matches_L0(three_branch):
    op = TransferStage(three_branch)
    f = DiscreteFunction(three_branch.grid, np.cos(3 * three_branch.grid.coords))
    u = DiscreteFunction(three_branch.grid, three_branch.grid.coords)
    assert np.array_equal(apply_Lz(op, u, 0.0, f).values, apply_L0(op, f).values)


def test_bernoulli_twist_closed_form(bernoulli):
    op = TransferStage(bernoulli)
    u = DiscreteFunction(bernoulli.grid, bernoulli.grid.coords[:, 0].astype(float))
    out = apply_Lz(op, u, 1.0, DiscreteFunction.constant(bernoulli.grid))
    assert np.allclose(out.values, (1 + math.e) / 2, atol=1e-14)


def test_real_twist_bounded_by_untwisted(three_branch):
    op = TransferStage(three_branch)
    g = three_branch.grid
    u = DiscreteFunction(g, np.sin(5 * g.coords))
    one = DiscreteFunction.constant(g)
    for t in (-1.5, 0.3, 2.0):
        lhs = apply_Lz(op, u, t, one).values.real
        rhs = math.exp(abs(t) * u.sup_norm()) * apply_L0(op, one).values
        assert np.all(lhs <= rhs + 1e-12)


def test_empty_window_is_identity(doubling):
    f = DiscreteFunction(doubling.grid, doubling.grid.coords**2)
    assert compose_window(TwistWindow([], [], 0.3), f) is f


def test_two_stage_window_is_associative(gauss_small, three_branch):
    g = gauss_stage(nodes=64, N=1000, index=0)
    a, b = TransferStage(g), TransferStage(three_branch)
    u = DiscreteFunction(g.grid, g.grid.coords)
    f = DiscreteFunction(g.grid, 1 + g.grid.coords**3)
    z = 0.2 - 0.1j
    w = TwistWindow([a, b], [u, u], z)
    step = apply_Lz(b, u, z, apply_Lz(a, u, z, f))
    assert np.allclose(compose_window(w, f).values, step.values, rtol=0, atol=1e-14)


def test_bernoulli_window_power(bernoulli):
    op = TransferStage(bernoulli)
    u = DiscreteFunction(bernoulli.grid, bernoulli.grid.coords[:, 0].astype(float))
    w = TwistWindow([op] * 5, [u] * 5, 0.7)
    out = compose_window(w, DiscreteFunction.constant(bernoulli.grid))
    assert np.allclose(out.values, ((1 + math.exp(0.7)) / 2) ** 5, rtol=1e-13)


def test_mismatched_grids_rejected(doubling, gauss_small):
    with pytest.raises(GridMismatchError):
        TwistWindow([TransferStage(doubling), TransferStage(gauss_small)])


def test_tail_budget_enforced():
    g = gauss_stage(nodes=16, N=10)
    op = TransferStage(g, tail_budget=1e-6, tail_correction=False)
    with pytest.raises(TruncationError):
        apply_L0(op, DiscreteFunction.constant(g.grid))


def test_tail_ledger_accumulates(gauss_small):
    op = TransferStage(gauss_small, tail_correction=False)
    one = DiscreteFunction.constant(gauss_small.grid)
    a = apply_L0(op, one)
    b = apply_L0(op, a)
    led = tail_ledger([a, b])
    assert 0 < a.tail < b.tail and led["count"] == 2 and led["max"] == b.tail


def test_birkhoff_sums(gauss_small):
    assert birkhoff_sum([gauss_small], [3.5], 0, 7, 0.3) == pytest.approx(24.5)
    assert birkhoff_sum([gauss_small], [1.0], 0, 0, 0.3) == 0.0
    u = log_potential()
    assert birkhoff_sum([gauss_small], [u], 0, 10, GOLDEN) == pytest.approx(20 * math.log((1 + math.sqrt(5)) / 2), rel=1e-8)


def test_lasota_yorke_constant_function(gauss_small):
    w = TwistWindow([TransferStage(gauss_small)] * 3, [None] * 3, 0.0)
    r = lasota_yorke_report(w, DiscreteFunction.constant(gauss_small.grid))
    assert r.holds


def test_lasota_yorke_gauss_complex_twist(gauss_small):
    g = gauss_small.grid
    u = DiscreteFunction(g, g.coords)
    w = TwistWindow([TransferStage(gauss_small)] * 4, [u] * 4, 0.1 + 0.2j)
    assert lasota_yorke_report(w, DiscreteFunction(g, g.coords)).holds


def test_lasota_yorke_doubling_contraction_factor(doubling):
    w = TwistWindow([TransferStage(doubling)], [None], 0.0)
    r = lasota_yorke_report(w, DiscreteFunction(doubling.grid, doubling.grid.coords**2))
    assert r.details["contraction"] == pytest.approx(2 ** -doubling.alpha)


def test_lasota_yorke_rejects_towers(tower):
    w = TwistWindow([TransferStage(tower)], [None], 0.0)
    with pytest.raises(ConfigError):
        lasota_yorke_report(w, DiscreteFunction.constant(tower.grid))


# -- properties ---------------------------------------------------------------


def _oracle_twisted_window(stage, u_fn, f_fn, z, n, x, N):
    """Σ over n-step preimages y of w(y) f(y) e^{z S_n u(y)}, by explicit recursion."""
    if n == 0:
        return f_fn(x)
    total = 0j
    for b in stage.branches(x, N):
        y = b.point
        total += math.exp(b.log_weight) * np.exp(z * u_fn(y)) * _oracle_twisted_window(stage, u_fn, f_fn, z, n - 1, y, N)
    return total


@given(st.floats(-1, 1), st.floats(-1, 1), st.integers(0, 31))
def test_twist_identity_on_doubling(zr, zi, k):
    d = doubling_stage(nodes=32)
    g = d.grid
    u = DiscreteFunction(g, g.coords)
    f = DiscreteFunction(g, 1 + g.coords**2)
    z = complex(zr, zi)
    w = TwistWindow([TransferStage(d)] * 2, [u, u], z)
    out = compose_window(w, f).values[k]
    oracle = _oracle_twisted_window(d, lambda y: y, lambda y: 1 + y**2, z, 2, g.coords[k], None)
    assert abs(out - oracle) < 1e-9


@given(arrays(np.float64, 32, elements=st.floats(-5, 5)), arrays(np.float64, 32, elements=st.floats(-5, 5)), st.floats(-3, 3), st.floats(-3, 3))
def test_twisted_operator_is_linear(a, b, s, t):
    d = doubling_stage(nodes=32)
    op = TransferStage(d)
    u = DiscreteFunction(d.grid, np.sin(d.grid.coords))
    z = 0.3 + 0.4j
    f, g = DiscreteFunction(d.grid, a), DiscreteFunction(d.grid, b)
    lhs = apply_Lz(op, u, z, DiscreteFunction(d.grid, s * a + t * b)).values
    rhs = s * apply_Lz(op, u, z, f).values + t * apply_Lz(op, u, z, g).values
    assert np.allclose(lhs, rhs, atol=1e-11 * (1 + np.abs(a).max() + np.abs(b).max()))


@given(arrays(np.float64, 14, elements=st.floats(0, 10)))
def test_positivity_on_word_grids(bernoulli, v):
    out = apply_L0(TransferStage(bernoulli), DiscreteFunction(bernoulli.grid, v[: bernoulli.grid.n])).values
    assert np.all(out >= 0)


@given(arrays(np.float64, 24, elements=st.floats(0, 10)))
def test_positivity_with_linear_interpolation(v):
    g = interval_grid(np.linspace(0, 1, 24))
    st_ = interval_stage([(0.0, 0.5), (0.5, 1.0)], [lambda x: x / 2, lambda x: (x + 1) / 2], [-math.log(2)] * 2, grid=g)
    out = apply_L0(TransferStage(st_), DiscreteFunction(g, v)).values
    assert np.all(out >= 0)


@given(arrays(np.float64, 6, elements=st.floats(-3, 3)), st.floats(0, 2))
def test_positivity_for_nonnegative_functions(three_branch, coef, c):
    # on collocation grids f >= 0 means the interpolant, so build f = p(x)^2 + c
    x = three_branch.grid.coords
    f = DiscreteFunction(three_branch.grid, np.polynomial.chebyshev.chebval(2 * x - 1, coef) ** 2 + c)
    out = apply_L0(TransferStage(three_branch), f).values
    assert np.all(out >= -1e-12 * (1 + f.sup_norm()))


def test_gauss_conformality(gauss):
    op = TransferStage(gauss)
    w = gauss.grid.quadrature_weights
    for k in range(6):
        f = DiscreteFunction(gauss.grid, np.cos(k * np.pi * gauss.grid.coords) + 2)
        assert w @ apply_L0(op, f).values == pytest.approx(w @ f.values, abs=1e-10)


@given(arrays(np.float64, 210, elements=st.floats(0, 3)))
def test_tower_conformality(tower, v):
    op = TransferStage(tower)
    f = DiscreteFunction(tower.grid, v)
    assert tower.m0 @ apply_L0(op, f).values == pytest.approx(tower.m0 @ v, abs=1e-12)


def test_tower_iterates_bounded(tower):
    op = TransferStage(tower, mode="weighted")
    f = DiscreteFunction.constant(tower.grid)
    sups = []
    for _ in range(50):
        f = apply_L0(op, f)
        sups.append(f.sup_norm())
    assert max(sups) < 10 and np.isfinite(sups).all()
