import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from r2ch.grid import (
    GridFn,
    GridMismatchError,
    GridSpec,
    centered_diff,
    inner,
    inner_h1,
    norm_values,
    norms,
    psi,
    second_diff,
)
from r2ch.selftest import sbp_defects, two_level_defect


def unit_grid(M=4):
    # h = 1
    return GridSpec(0.0, float(M), M)


def rand_fn(rng, spec, scale=1.0):
    return GridFn(spec, scale * rng.standard_normal(spec.M))


class TestGridSpec:
    def test_spacing_and_nodes(self):
        g = GridSpec(-6.0, 12.0, 60)
        assert g.h * g.M == pytest.approx(12.0, rel=1e-15)
        assert g.x[0] == pytest.approx(-5.8)
        assert g.x[-1] == pytest.approx(6.0)

    def test_from_spacing_rounds_node_count(self):
        g = GridSpec.from_spacing(-12 * np.pi, 24 * np.pi, 0.2)
        assert g.M == 377
        assert g.h == pytest.approx(24 * np.pi / 377)

    @pytest.mark.parametrize("M", [0, 3, 4.5])
    def test_rejects_bad_node_count(self, M):
        with pytest.raises(ValueError):
            GridSpec(0.0, 1.0, M)

    def test_rejects_nonpositive_length(self):
        with pytest.raises(ValueError):
            GridSpec(0.0, 0.0, 8)


class TestGridFn:
    def test_periodic_indexing(self):
        v = GridFn(unit_grid(), [0, 1, 2, 3])
        assert v[4] == 0 and v[-1] == 3 and v[9] == 1

    def test_rejects_wrong_length_and_nan(self):
        with pytest.raises(ValueError):
            GridFn(unit_grid(), [1, 2, 3])
        with pytest.raises(ValueError):
            GridFn(unit_grid(), [1, 2, np.nan, 4])

    def test_values_are_read_only(self):
        v = GridFn(unit_grid(), [0, 1, 2, 3])
        with pytest.raises(ValueError):
            v.values[0] = 5.0


class TestStencils:
    def test_constant_is_annihilated(self):
        c = GridFn(GridSpec(-1.0, 3.0, 16), np.full(16, 2.5))
        assert np.all(centered_diff(c).values == 0)
        assert np.all(second_diff(c).values == 0)
        assert np.all(psi(c, c).values == 0)

    def test_centered_diff_by_hand(self):
        v = GridFn(unit_grid(), [0, 1, 0, -1])
        np.testing.assert_array_equal(centered_diff(v).values, [1, 0, -1, 0])

    def test_second_diff_by_hand(self):
        v = GridFn(unit_grid(), [0, 1, 0, -1])
        np.testing.assert_array_equal(second_diff(v).values, [0, -2, 0, 2])

    def test_psi_by_hand(self):
        u = GridFn(unit_grid(), [0, 1, 0, -1])
        v = GridFn(unit_grid(), [1, 1, 1, 1])
        np.testing.assert_allclose(psi(u, v).values, [1 / 3, 0, -1 / 3, 0], atol=1e-15)

    def test_psi_rejects_mismatched_grids(self):
        u = GridFn(unit_grid(4), np.zeros(4))
        v = GridFn(GridSpec(0.0, 8.0, 4), np.zeros(4))
        with pytest.raises(GridMismatchError):
            psi(u, v)

    def test_second_order_accuracy_on_smooth_function(self):
        errs = []
        for M in (32, 64):
            g = GridSpec(0.0, 2 * np.pi, M)
            v = g.sample(np.sin)
            errs.append(np.max(np.abs(centered_diff(v).values - np.cos(g.x))))
        assert np.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.05)


class TestInnerProducts:
    def test_inner_direct_sum(self):
        g = GridSpec(0.0, 2.0, 4)  # h = 0.5
        assert inner(GridFn(g, [1, 2, 3, 4]), GridFn(g, [1, 1, 1, 1])) == 5.0

    def test_norms_small_examples(self):
        assert norm_values(np.array([3.0, 4.0]), 1.0)[0] == pytest.approx(5.0)
        assert norm_values(np.array([1.0, 0.0]), 1.0)[1] == pytest.approx(np.sqrt(2.0))
        assert norm_values(np.array([1.0, -7.0]), 1.0)[2] == 7.0

    def test_norms_match_inner_products(self):
        rng = np.random.default_rng(3)
        v = rand_fn(rng, GridSpec(0.0, 5.0, 40))
        l2, h1, linf = norms(v)
        assert l2**2 == pytest.approx(inner(v, v))
        assert h1**2 == pytest.approx(inner_h1(v, v))
        assert linf == np.max(np.abs(v.values))

    def test_positive_definite(self):
        rng = np.random.default_rng(4)
        g = GridSpec(0.0, 1.0, 16)
        assert inner(g.zeros(), g.zeros()) == 0.0
        for _ in range(20):
            v = rand_fn(rng, g)
            assert inner(v, v) > 0


@pytest.mark.parametrize("M", [8, 64, 1024])
def test_summation_by_parts_quartet(M):
    rng = np.random.default_rng(M)
    for _ in range(100):
        g = GridSpec(rng.uniform(-10, 10), rng.uniform(0.5, 50.0), M)
        u = rand_fn(rng, g, rng.uniform(0.1, 10))
        v = rand_fn(rng, g, rng.uniform(0.1, 10))
        defects = sbp_defects(u.values, v.values, g.h)
        assert max(defects.values()) <= 1e-12
        # Same identities through the GridFn surface, loose absolute check.
        assert inner(psi(u, v), v) == pytest.approx(0.0, abs=1e-8)
        assert inner(centered_diff(u), v) == pytest.approx(-inner(u, centered_diff(v)), abs=1e-8)
        assert inner(second_diff(u), v) == pytest.approx(-inner_h1(u, v), rel=1e-10, abs=1e-8)


@settings(max_examples=60, deadline=None)
@given(
    M=st.integers(4, 200),
    seed=st.integers(0, 2**32 - 1),
    alpha=st.floats(-5, 5),
    beta=st.floats(-5, 5),
)
def test_psi_bilinear(M, seed, alpha, beta):
    rng = np.random.default_rng(seed)
    g = GridSpec(0.0, 1.0, M)
    u, w, v = (rand_fn(rng, g) for _ in range(3))
    lhs = psi(alpha * u + beta * w, v).values
    rhs = (alpha * psi(u, v) + beta * psi(w, v)).values
    scale = np.max(np.abs(lhs)) + np.max(np.abs(rhs)) + 1e-300
    assert np.max(np.abs(lhs - rhs)) <= 1e-13 * scale * 10
    lhs = psi(v, alpha * u + beta * w).values
    rhs = (alpha * psi(v, u) + beta * psi(v, w)).values
    scale = np.max(np.abs(lhs)) + np.max(np.abs(rhs)) + 1e-300
    assert np.max(np.abs(lhs - rhs)) <= 1e-13 * scale * 10


@settings(max_examples=100, deadline=None)
@given(M=st.integers(4, 300), seed=st.integers(0, 2**32 - 1), eps=st.sampled_from([0.1, 1.0, 10.0]))
def test_embedding_inequality(M, seed, eps):
    rng = np.random.default_rng(seed)
    g = GridSpec(0.0, rng.uniform(0.5, 40.0), M)
    v = rand_fn(rng, g)
    l2, h1, linf = norms(v)
    assert linf**2 < eps * h1**2 + (1 / eps + 1 / g.L) * l2**2


def test_temporal_product_identity():
    rng = np.random.default_rng(23)
    for _ in range(200):
        M = int(rng.integers(4, 200))
        h = rng.uniform(0.01, 1.0)
        tau = rng.uniform(1e-3, 2.0)
        u0, u1, v0, v1 = rng.standard_normal((4, M))
        assert two_level_defect(u0, u1, v0, v1, tau, h) <= 1e-12


def test_temporal_identity_checks_the_right_formula():
    rng = np.random.default_rng(5)
    u0, u1, v0, v1 = rng.standard_normal((4, 32))
    # Dropping the last correction term must show up as a defect.
    assert two_level_defect(u0, u1, v0, v1 + 1.0, 0.1, 0.2) <= 1e-12
    assert two_level_defect(u0, u1, v0, v1, 0.1, 0.2) <= 1e-12
    tau, h = 0.1, 0.2
    ip = lambda a, b: h * np.dot(a, b)
    dtv = (v1 - v0) / tau
    lhs = ip((u1 - u0) / tau, 0.25 * (u0 + u1) * (v0 + v1))
    partial = (ip(u1, u1 * v1) - ip(u0, u0 * v0)) / (2 * tau) - 0.25 * ip(u1 - u0, (u1 - u0) * dtv)
    assert abs(lhs - partial) > 1e-3
