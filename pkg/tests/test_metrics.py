import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from rpfcones.function_space import DiscreteFunction, interval_grid
from rpfcones.metrics import (
    FunctionalFamily,
    LinearFunctional,
    aperture_constant,
    beta_gauge,
    birkhoff_contraction_bound,
    complex_cone_contains,
    delta_distance,
    delta_from_values,
    exclusion_set_bounds,
    hilbert_distance,
    hilbert_distance_matrix,
    real_cone_contains,
)

from conftest import vec

LN2 = math.log(2.0)
pos = st.floats(0.05, 20.0)
phase = st.floats(0.0, 2 * math.pi)


def brute_delta(x, y, n=801):
    """δ on the quadrant by scanning the excluded set on a polar grid (independent oracle).

    z is excluded iff zx − y leaves the complexified quadrant, i.e. some pair
    product Re(conj(e_i) e_j) < 0 or a coordinate vanishes.
    """
    mods = np.concatenate([np.geomspace(1e-4, 1e4, n), np.linspace(0.5, 3.0, n)])
    th = np.linspace(0, 2 * math.pi, 721, endpoint=False)
    z = (mods[:, None] * np.exp(1j * th)[None, :]).ravel()
    w = z[:, None] * x[None, :] - y[None, :]
    bad = (w[:, 0].conj() * w[:, 1]).real < 0
    m = np.abs(z[bad])
    return math.log(m.max() / m.min())


def test_real_cone_membership(quadrant):
    assert real_cone_contains(quadrant, vec(quadrant, [1.0, 1.0]))
    assert not real_cone_contains(quadrant, vec(quadrant, [1.0, -1.0]))
    assert real_cone_contains(quadrant, vec(quadrant, [0.0, 0.0]))


def test_beta_gauge_values(quadrant):
    f, g = vec(quadrant, [1.0, 1.0]), vec(quadrant, [2.0, 1.0])
    assert beta_gauge(quadrant, f, g) == 2.0
    assert beta_gauge(quadrant, f, f) == 1.0
    assert beta_gauge(quadrant, vec(quadrant, [1.0, 0.0]), vec(quadrant, [0.0, 1.0])) == math.inf


def test_hilbert_distance_values(quadrant):
    f = vec(quadrant, [1.0, 1.0])
    assert hilbert_distance(quadrant, f, vec(quadrant, [2.0, 1.0])) == pytest.approx(LN2, abs=1e-12)
    assert hilbert_distance(quadrant, f, vec(quadrant, [3.0, 3.0])) == 0.0
    assert hilbert_distance(quadrant, vec(quadrant, [1.0, 0.0]), vec(quadrant, [0.0, 1.0])) == math.inf


def test_hilbert_matrix_matches_pairwise(quadrant):
    B = np.array([[1.0, 2.0, 0.5], [1.0, 1.0, 3.0]])
    D = hilbert_distance_matrix(quadrant, B)
    for i in range(3):
        for j in range(3):
            assert D[i, j] == pytest.approx(hilbert_distance(quadrant, vec(quadrant, B[:, i]), vec(quadrant, B[:, j])), abs=1e-14)


def test_birkhoff_bound():
    assert birkhoff_contraction_bound(0.0) == 0.0
    assert birkhoff_contraction_bound(math.inf) == 1.0
    assert birkhoff_contraction_bound(4.0) == pytest.approx(0.7615942, abs=1e-7)


def test_complex_cone_membership(quadrant):
    assert complex_cone_contains(quadrant, vec(quadrant, [1 + 1j, 1 - 1j]))
    assert not complex_cone_contains(quadrant, vec(quadrant, [1.0, -1.0]))
    assert complex_cone_contains(quadrant, vec(quadrant, [1j, 1.0]))


def test_exclusion_discs(quadrant):
    one = vec(quadrant, [1.0, 1.0])
    e = exclusion_set_bounds(quadrant, one, vec(quadrant, [2.0, 1.0]))
    assert (e.a, e.b) == pytest.approx((1.0, 2.0), abs=1e-12)
    e = exclusion_set_bounds(quadrant, one, vec(quadrant, [1.0, 0.0]))
    assert (e.a, e.b) == pytest.approx((0.0, 1.0), abs=1e-12)
    assert exclusion_set_bounds(quadrant, one, vec(quadrant, [2.0, 2.0])).collinear


def test_exclusion_witnesses_report_the_disc(quadrant):
    e = exclusion_set_bounds(quadrant, vec(quadrant, [1.0, 1.0]), vec(quadrant, [2.0, 1.0]))
    roles = {w["role"]: w for w in e.witnesses if "role" in w}
    assert roles["attains_a"]["center"] == pytest.approx([1.5, 0.0])
    assert roles["attains_a"]["radius"] == pytest.approx(0.5)
    assert roles["attains_b"]["value"] == pytest.approx(2.0)


def test_delta_values(quadrant):
    one = vec(quadrant, [1.0, 1.0])
    assert delta_distance(quadrant, one, vec(quadrant, [2.0, 1.0])) == pytest.approx(LN2, abs=1e-12)
    assert delta_distance(quadrant, one, vec(quadrant, [1.0, 0.0])) == math.inf
    assert delta_distance(quadrant, one, one) == 0.0


def test_delta_matches_brute_force_scan(quadrant):
    rng = np.random.default_rng(5)
    for _ in range(5):
        x = rng.uniform(0.5, 2, 2) * np.exp(1j * rng.uniform(-0.3, 0.3, 2))
        y = rng.uniform(0.5, 2, 2) * np.exp(1j * rng.uniform(-0.3, 0.3, 2))
        d = delta_distance(quadrant, vec(quadrant, x), vec(quadrant, y))
        assert d == pytest.approx(brute_delta(x, y), rel=2e-2, abs=2e-2)


def test_aperture_constant(quadrant):
    mu = LinearFunctional(np.array([1.0, 1.0]), quadrant.grid)
    K, Kc = aperture_constant(quadrant, mu, [vec(quadrant, [1.0, 0.0])])
    assert K == pytest.approx(2.0)
    assert Kc == pytest.approx(4 * math.sqrt(2))
    assert aperture_constant(quadrant, mu, [vec(quadrant, [1.0, 1.0])])[0] == pytest.approx(1.0)


def test_family_rejects_mismatched_grid(quadrant):
    other = interval_grid([0.1, 0.2, 0.3])
    with pytest.raises(Exception):
        hilbert_distance(quadrant, DiscreteFunction(other, np.ones(3)), vec(quadrant, [1.0, 1.0]))


# -- properties --------------------------------------------------------------


@given(pos, pos, pos, pos, pos, pos)
def test_hilbert_projective(a, b, c, d, s, t):
    S = FunctionalFamily.point_evaluations(interval_grid([0.25, 0.75]))
    f, g = vec(S, [a, b]), vec(S, [c, d])
    ref = hilbert_distance(S, f, g)
    assert hilbert_distance(S, vec(S, [s * a, s * b]), vec(S, [t * c, t * d])) == pytest.approx(ref, abs=1e-9)


@given(pos, pos, phase, phase, pos, pos, phase, phase, pos, phase, pos, phase)
def test_delta_projective(r1, r2, p1, p2, s1, s2, q1, q2, m1, t1, m2, t2):
    S = FunctionalFamily.point_evaluations(interval_grid([0.25, 0.75]))
    x = np.array([r1, r2 * np.exp(1j * 0.3 * math.sin(p2))]) * np.exp(1j * 0.2 * math.sin(p1))
    y = np.array([s1, s2 * np.exp(1j * 0.3 * math.sin(q2))]) * np.exp(1j * 0.2 * math.sin(q1))
    c1, c2 = m1 * np.exp(1j * t1), m2 * np.exp(1j * t2)
    ref = delta_distance(S, vec(S, x), vec(S, y))
    assert delta_distance(S, vec(S, c1 * x), vec(S, c2 * y)) == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_delta_triangle_on_random_triples():
    rng = np.random.default_rng(11)
    bad = 0
    for _ in range(2000):
        x, y, w = (rng.uniform(0.1, 10, 2) * np.exp(1j * rng.uniform(-0.7, 0.7, 2)) for _ in range(3))
        dxy, dyw, dxw = delta_from_values(x, y), delta_from_values(y, w), delta_from_values(x, w)
        bad += dxw > dxy + dyw + 1e-9
    assert bad == 0


@given(pos, pos, pos, pos)
def test_delta_bounded_by_hilbert_on_real_pairs(a, b, c, d):
    S = FunctionalFamily.point_evaluations(interval_grid([0.25, 0.75]))
    f, g = vec(S, [a, b]), vec(S, [c, d])
    dh, dd = hilbert_distance(S, f, g), delta_distance(S, f, g)
    assert dd <= dh + 1e-9
    assert (dh < 1e-12) == (dd < 1e-12)


@given(st.lists(st.floats(0.1, 5.0), min_size=4, max_size=4), st.integers(0, 2**31))
def test_contraction_certificate_for_positive_maps(entries, seed):
    S = FunctionalFamily.point_evaluations(interval_grid([0.25, 0.75]))
    A = np.array(entries).reshape(2, 2)
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.1, 5, (2, 6)) * np.exp(1j * rng.uniform(-0.4, 0.4, (2, 6)))
    assume(all(complex_cone_contains(S, vec(S, X[:, k])) for k in range(6)))
    Y = A @ X
    # the image of the real quadrant is the cone spanned by the columns of A
    D = hilbert_distance(S, vec(S, A[:, 0]), vec(S, A[:, 1]))
    tau = birkhoff_contraction_bound(D)
    for i in range(6):
        for j in range(i):
            # near-collinear images (singular A) resolve only to ~sqrt(eps)
            assert delta_from_values(Y[:, i], Y[:, j]) <= tau * delta_from_values(X[:, i], X[:, j]) + 1e-6


@given(pos, pos, pos, pos)
def test_aperture_normalized_difference_bound(a, b, c, d):
    S = FunctionalFamily.point_evaluations(interval_grid([0.25, 0.75]))
    mu = LinearFunctional(np.array([1.0, 1.0]), S.grid)
    x, y = np.array([a, b]), np.array([c, d])
    K, _ = aperture_constant(S, mu, [vec(S, x), vec(S, y)])
    lhs = np.max(np.abs(x / x.sum() - y / y.sum()))
    assert lhs <= K / (2 * mu.dual_norm()) * delta_from_values(x, y) + 1e-9
