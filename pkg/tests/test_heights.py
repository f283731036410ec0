import math

import numpy as np
import pytest

from dimerlab.correlations import InteractingFormParams
from dimerlab.heights import (
    GffPrediction,
    HeightError,
    exact_height_covariance,
    expected_path_coefficient,
    gff_covariance_prediction,
    mean_slope,
    path_coefficient_sum,
    unit_step_path,
)
from dimerlab.spectral import EdgeWeights, find_zeros, minimizing_slope

UNIFORM = EdgeWeights.uniform()


class TestUnitStepPath:
    def test_crossed_types(self):
        p1 = unit_step_path(1)
        assert [(e.r, s) for e, s in p1.crossed] == [(4, 1), (3, 1)]
        p2 = unit_step_path(2)
        assert [(e.r, s) for e, s in p2.crossed] == [(4, 1), (1, 1)]

    def test_bad_direction(self):
        with pytest.raises(HeightError):
            unit_step_path(3)


class TestMeanSlope:
    def test_uniform_zero(self):
        assert mean_slope(UNIFORM) == pytest.approx((0.0, 0.0), abs=1e-12)

    def test_weights_211_exact_sixth(self):
        # analytically the (2,1,1) Fermi points sit at (pi/6, -pi/6); the
        # slope components come out to -/+ 1/6
        rho = mean_slope(EdgeWeights(2.0, 1.0, 1.0))
        assert rho == pytest.approx((-1 / 6, 1 / 6), abs=1e-10)

    def test_matches_minimizing_slope(self):
        rng = np.random.default_rng(11)
        for _ in range(3):
            w = EdgeWeights(*rng.uniform(0.7, 1.5, 3))
            ms = mean_slope(w)
            opt = minimizing_slope(w)
            assert ms == pytest.approx(opt, abs=1e-4)


class TestPathCoefficientIdentity:
    def test_uniform_frozen_values(self):
        dd = find_zeros(UNIFORM)
        # j = 1, omega = +: K_{+,4} + K_{+,3} = -1 - i = -i beta_+
        assert path_coefficient_sum(1, 1, dd) == pytest.approx(-1.0 - 1.0j)
        assert expected_path_coefficient(1, 1, dd) == pytest.approx(-1.0 - 1.0j)
        # j = 2, omega = +: K_{+,4} + K_{+,1} = 1 - i = +i alpha_+
        assert path_coefficient_sum(2, 1, dd) == pytest.approx(1.0 - 1.0j)

    def test_omega_minus_is_conjugate(self):
        rng = np.random.default_rng(12)
        for _ in range(5):
            dd = find_zeros(EdgeWeights(*rng.uniform(0.6, 1.8, 3)))
            for j in (1, 2):
                plus = path_coefficient_sum(j, 1, dd)
                minus = path_coefficient_sum(j, -1, dd)
                assert np.conj(plus) == pytest.approx(minus, abs=1e-12)

    def test_identity_machine_precision(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            dd = find_zeros(EdgeWeights(*rng.uniform(0.6, 1.8, 3)))
            for j in (1, 2):
                for omega in (1, -1):
                    s = path_coefficient_sum(j, omega, dd)
                    e = expected_path_coefficient(j, omega, dd)
                    assert abs(s - e) < 1e-12

    def test_interacting_version_scales_with_sqrt_nu(self):
        dd = find_zeros(UNIFORM)
        params = InteractingFormParams.from_free(dd, nu=1.21)
        for j in (1, 2):
            got = path_coefficient_sum(j, 1, params)
            want = expected_path_coefficient(j, 1, params)
            # free amplitudes with nu != 1: the sum is unchanged but the
            # closed form picks up sqrt(nu); they agree iff amplitudes are
            # rescaled consistently, so check the ratio explicitly
            assert want / expected_path_coefficient(j, 1, dd) == \
                pytest.approx(math.sqrt(1.21))
            assert got == pytest.approx(path_coefficient_sum(j, 1, dd))


class TestGffPrediction:
    def test_colinear_reference_value(self):
        # phi proportional to z, points 0, 1, 2, 3: cross-ratio 3/4
        pred = GffPrediction(nu=1.0, beta=1.0, alpha=-1.0j)  # phi = x1 + i x2
        val = gff_covariance_prediction((0, 0), (1, 0), (2, 0), (3, 0), pred)
        assert val == pytest.approx(math.log(3 / 4) / (2 * math.pi**2))
        assert val == pytest.approx(-0.014574, abs=5e-7)

    def test_scale_invariance(self):
        pred1 = GffPrediction(nu=1.0, beta=1.0 - 1.0j, alpha=-1.0 - 1.0j)
        pred2 = GffPrediction(nu=1.0, beta=(1.0 - 1.0j) * (2 + 3j),
                              alpha=(-1.0 - 1.0j) * (2 + 3j))
        args = ((0, 0), (5, 1), (2, 7), (9, 4))
        assert gff_covariance_prediction(*args, pred1) == \
            pytest.approx(gff_covariance_prediction(*args, pred2), abs=1e-12)

    def test_linear_in_nu(self):
        args = ((0, 0), (5, 1), (2, 7), (9, 4))
        p1 = GffPrediction.from_weights(UNIFORM, nu=1.0)
        p2 = GffPrediction.from_weights(UNIFORM, nu=2.0)
        assert gff_covariance_prediction(*args, p2) == \
            pytest.approx(2 * gff_covariance_prediction(*args, p1), abs=1e-12)

    def test_degenerate_rejected(self):
        pred = GffPrediction(nu=1.0, beta=1.0, alpha=-1.0j)
        with pytest.raises(HeightError):
            gff_covariance_prediction((0, 0), (1, 0), (1, 0), (0, 0), pred)


class TestExactCovariance:
    def test_coincident_pair_is_zero(self):
        assert exact_height_covariance((0, 0), (8, 0), (3, 9), (3, 9), UNIFORM) == 0.0

    def test_swap_negates(self):
        a = exact_height_covariance((0, 0), (20, 0), (2, 14), (22, 14), UNIFORM)
        b = exact_height_covariance((20, 0), (0, 0), (2, 14), (22, 14), UNIFORM)
        assert a == pytest.approx(-b, abs=1e-12)

    def test_overlapping_paths_rejected(self):
        with pytest.raises(HeightError):
            exact_height_covariance((0, 0), (32, 0), (16, 1), (48, 1), UNIFORM)

    def test_matches_gff_prediction(self):
        pred = GffPrediction.from_weights(UNIFORM)
        quads = [
            ((0, 0), (24, 0), (0, 16), (24, 16)),
            ((0, 0), (32, 0), (8, 20), (40, 20)),
            ((0, 0), (17, 0), (3, 21), (20, 21)),
        ]
        for q in quads:
            cov = exact_height_covariance(*q, UNIFORM)
            gff = gff_covariance_prediction(*q, pred)
            assert abs(cov - gff) <= 0.05 * abs(gff)

    def test_methods_agree(self):
        q = ((0, 0), (12, 0), (2, 9), (13, 9))
        a = exact_height_covariance(*q, UNIFORM, method="fft")
        b = exact_height_covariance(*q, UNIFORM, method="quadrature")
        assert a == pytest.approx(b, abs=1e-7)
