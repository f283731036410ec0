import numpy as np
import pytest

from dimerlab.correlations import (
    AsymptoticCoefficients,
    CorrelationError,
    FiniteCorrelator,
    InteractingFormParams,
    asymptotic_inverse_kasteleyn,
    asymptotic_two_point,
    asymptotic_two_point_split,
    interacting_form_eval,
    multipoint,
    one_point,
    pair_correlation_at,
    pair_correlations_at,
    two_point_truncated,
)
from dimerlab.lattice import (
    Edge,
    LatticeGeometry,
    all_edges,
    enumerate_matchings,
    make_edge,
    matching_weight,
)
from dimerlab.numerics import power_law_fit
from dimerlab.spectral import EdgeWeights, find_zeros, inverse_kasteleyn_exact

UNIFORM = EdgeWeights.uniform()
TORUS44 = LatticeGeometry("torus", 4, 4)


def enumeration_probability(g, matchings, weights, required):
    z = sum(matching_weight(m, weights) for m in matchings)
    hit = sum(matching_weight(m, weights) for m in matchings
              if all(e in m for e in required))
    return hit / z


class TestFiniteExactness:
    def test_one_point_vs_enumeration_weighted(self):
        g = TORUS44
        ms = enumerate_matchings(g)
        w = (1.0, 2.0, 1.0, 1.0)
        for e in [Edge((0, 0), 1), Edge((1, 1), 2), Edge((2, 2), 3)]:
            p_enum = enumeration_probability(g, ms, w, [e])
            assert one_point(e, w, geometry=g) == pytest.approx(p_enum, rel=1e-10)

    def test_two_point_vs_enumeration(self):
        g = TORUS44
        ms = enumerate_matchings(g)
        rng = np.random.default_rng(5)
        edges = all_edges(g)
        for _ in range(8):
            w = tuple(rng.uniform(0.6, 1.8, 3)) + (1.0,)
            i, j = rng.choice(len(edges), size=2, replace=False)
            e, ep = edges[i], edges[j]
            cov = (enumeration_probability(g, ms, w, [e, ep])
                   - enumeration_probability(g, ms, w, [e])
                   * enumeration_probability(g, ms, w, [ep]))
            assert two_point_truncated(e, ep, w, geometry=g) == \
                pytest.approx(cov, abs=1e-12)

    def test_three_point_vs_enumeration(self):
        g = TORUS44
        ms = enumerate_matchings(g)
        rng = np.random.default_rng(6)
        edges = all_edges(g)
        for _ in range(6):
            w = tuple(rng.uniform(0.6, 1.8, 3)) + (1.0,)
            idx = rng.choice(len(edges), size=3, replace=False)
            es = [edges[i] for i in idx]
            p_enum = enumeration_probability(g, ms, w, es)
            assert multipoint(es, w, geometry=g) == pytest.approx(p_enum, abs=1e-12)

    def test_window_exactness(self):
        g = LatticeGeometry("open-window", 4, 4)
        ms = enumerate_matchings(g)
        w = (0.9, 1.3, 1.1, 1.0)
        fc = FiniteCorrelator(g, w)
        for e in all_edges(g)[:8]:
            assert fc.expectation([e]) == pytest.approx(
                enumeration_probability(g, ms, w, [e]), abs=1e-12)

    def test_duplicate_edges_rejected(self):
        e = Edge((0, 0), 1)
        with pytest.raises(CorrelationError):
            multipoint([e, e], UNIFORM, geometry=TORUS44)
        with pytest.raises(CorrelationError):
            two_point_truncated(e, e, UNIFORM)

    def test_multipoint_cap(self):
        g = LatticeGeometry("torus", 6, 6)
        edges = all_edges(g)[:13]
        with pytest.raises(CorrelationError):
            multipoint(edges, UNIFORM, geometry=g)


class TestInfiniteVolume:
    def test_uniform_one_point_quarter(self):
        for r in (1, 2, 3, 4):
            assert one_point(Edge((0, 0), r), UNIFORM) == pytest.approx(0.25, abs=1e-12)

    def test_one_points_sum_to_one(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            w = EdgeWeights(*rng.uniform(0.6, 1.8, 3))
            total = sum(one_point(Edge((0, 0), r), w) for r in (1, 2, 3, 4))
            assert total == pytest.approx(1.0, abs=1e-10)

    def test_two_point_swap_symmetry(self):
        e = Edge((0, 0), 1)
        ep = Edge((5, 1), 3)
        w = EdgeWeights(1.2, 0.8, 1.1)
        assert two_point_truncated(e, ep, w) == \
            pytest.approx(two_point_truncated(ep, e, w), abs=1e-13)

    def test_same_type_decay_exponent(self):
        rs = np.array([8, 10, 12, 16, 20, 24, 32, 40, 48, 64])
        vals = np.abs([pair_correlation_at(1, 1, (int(r), 0), UNIFORM)
                       for r in rs])
        fit = power_law_fit(rs, vals)
        assert fit.exponent == pytest.approx(-2.0, abs=0.05)

    def test_multipoint_reductions(self):
        e = Edge((0, 0), 1)
        ep = Edge((3, 1), 2)
        w = EdgeWeights(1.1, 0.9, 1.3)
        assert multipoint([e], w) == pytest.approx(one_point(e, w), abs=1e-12)
        lhs = multipoint([e, ep], w)
        rhs = two_point_truncated(e, ep, w) + one_point(e, w) * one_point(ep, w)
        assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_finite_torus_converges_to_infinite(self):
        e = Edge((0, 0), 1)
        ep = Edge((3, 1), 1)
        inf_val = two_point_truncated(e, ep, UNIFORM)
        diffs = []
        for L in (8, 16, 32):
            g = LatticeGeometry("torus", L, L)
            diffs.append(abs(two_point_truncated(e, ep, UNIFORM, geometry=g)
                             - inf_val))
        assert diffs[2] < diffs[1] < diffs[0]
        assert diffs[2] < 5e-4


class TestAsymptotics:
    def test_coefficient_conjugation(self):
        rng = np.random.default_rng(8)
        for _ in range(5):
            dd = find_zeros(EdgeWeights(*rng.uniform(0.6, 1.8, 3)))
            coeffs = AsymptoticCoefficients(dd)
            for r in (1, 2, 3, 4):
                assert np.conj(coeffs.coefficient(1, r)) == \
                    pytest.approx(coeffs.coefficient(-1, r), abs=1e-10)

    def test_kinv_relative_error_decays(self):
        dd = find_zeros(UNIFORM)
        rs = [8, 16, 32, 64]
        rels = []
        for r in rs:
            exact = inverse_kasteleyn_exact(UNIFORM, (r, 1))
            asym = asymptotic_inverse_kasteleyn((r, 1), dd)
            rels.append(abs(asym - exact) / abs(exact))
        fit = power_law_fit(np.array(rs, float), np.array(rels))
        assert fit.exponent <= -0.8
        # error roughly halves (at least) when R doubles
        assert rels[1] < 0.7 * rels[0]
        assert rels[2] < 0.7 * rels[1]

    def test_two_point_residual_cubic(self):
        dd = find_zeros(UNIFORM)
        rs = np.array([8, 12, 16, 24, 32, 48, 64])
        resid = []
        for r in rs:
            exact = pair_correlation_at(1, 3, (int(r), 1), UNIFORM)
            asym = asymptotic_two_point(1, 3, (int(r), 1), dd)
            resid.append(abs(exact - asym))
        fit = power_law_fit(rs.astype(float), np.array(resid))
        assert fit.exponent <= -2.7

    def test_asymptotic_two_point_real(self):
        rng = np.random.default_rng(9)
        dd = find_zeros(EdgeWeights(1.3, 0.8, 1.1))
        for _ in range(10):
            dx = tuple(int(v) for v in rng.integers(-20, 20, size=2))
            if dx == (0, 0):
                continue
            val = asymptotic_two_point(1, 2, dx, dd)
            assert isinstance(val, float)

    def test_staggered_phase_uniform(self):
        # oscillatory part flips sign with the checkerboard parity of dx
        dd = find_zeros(UNIFORM)
        _, osc_even = asymptotic_two_point_split(1, 1, (8, 0), dd)
        _, osc_odd = asymptotic_two_point_split(1, 1, (9, 0), dd)
        assert osc_even * osc_odd < 0
        _, osc_diag = asymptotic_two_point_split(1, 1, (8, 1), dd)
        assert osc_even * osc_diag < 0


class TestInteractingForm:
    def test_free_values_reduce_to_asymptotics(self):
        dd = find_zeros(EdgeWeights(1.2, 0.9, 1.1))
        params = InteractingFormParams.from_free(dd)
        rng = np.random.default_rng(10)
        for _ in range(10):
            dx = tuple(int(v) for v in rng.integers(-30, 30, size=2))
            if dx == (0, 0):
                continue
            r, rp = rng.integers(1, 5, size=2)
            assert interacting_form_eval(int(r), int(rp), dx, params) == \
                pytest.approx(asymptotic_two_point(int(r), int(rp), dx, dd),
                              abs=1e-14)

    def test_oscillatory_exponent_scales_with_nu(self):
        dd = find_zeros(UNIFORM)
        base = InteractingFormParams.from_free(dd, nu=1.1)
        silent = InteractingFormParams(
            K={k: 0.0 for k in base.K}, H=base.H, p=base.p,
            alpha=base.alpha, beta=base.beta, nu=1.1,
        )
        rs = np.array([8, 16, 32, 64, 128])
        vals = np.abs([interacting_form_eval(1, 1, (int(r), 0), silent)
                       for r in rs])
        fit = power_law_fit(rs.astype(float), vals)
        assert fit.exponent == pytest.approx(-2.2, abs=0.01)

    def test_nu_positive_required(self):
        dd = find_zeros(UNIFORM)
        base = InteractingFormParams.from_free(dd)
        with pytest.raises(CorrelationError):
            InteractingFormParams(K=base.K, H=base.H, p=base.p,
                                  alpha=base.alpha, beta=base.beta, nu=-1.0)


class TestVectorizedPairCorrelations:
    def test_matches_pointwise_uniform(self):
        dxs = np.array([[6, 0], [7, 0], [12, 3], [-9, 2]])
        vec = pair_correlations_at(1, 3, dxs, UNIFORM)
        for dx, v in zip(dxs, vec):
            assert v == pytest.approx(
                pair_correlation_at(1, 3, tuple(dx), UNIFORM), abs=1e-7)
