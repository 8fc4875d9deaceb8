import json
import math

import numpy as np
import pytest

from gaussdpp import (BallWindow, BoxWindow, EstimatorConfig, PointPattern,
                      bernstein_tail, bias_bound, build_neighborhoods,
                      count_expectation, default_cutoff, estimate_scattering,
                      isotropic_scattering, risk_rate, unit_ball_volume,
                      variance_bound)
from gaussdpp.estimator import build_neighborhoods_bruteforce


class TestGeometryHelpers:
    def test_unit_ball_volume(self):
        assert unit_ball_volume(1) == pytest.approx(2.0, rel=1e-14)
        assert unit_ball_volume(2) == pytest.approx(math.pi, rel=1e-14)
        assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3, rel=1e-14)

    def test_count_expectation(self):
        assert count_expectation(1.0, 2) == pytest.approx(math.pi)
        assert count_expectation(10.0, 2) == pytest.approx(100 * math.pi)
        assert count_expectation(2.0, 3) == pytest.approx(33.510321638291128,
                                                          rel=1e-14)


class TestBounds:
    def test_bernstein_limit_and_value(self):
        # eps -> 0 drives the exponent to zero, leaving the constant 2.
        assert bernstein_tail(1e-12, 10.0, 2) == pytest.approx(2.0, rel=1e-9)
        assert bernstein_tail(0.1, 10.0, 2) == pytest.approx(
            0.43736889048722428, rel=1e-12)

    def test_bernstein_decreasing_in_radius(self):
        vals = [bernstein_tail(0.1, r, 2) for r in (5.0, 10.0, 20.0, 40.0)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_default_cutoff(self):
        assert default_cutoff(math.e, 1) == pytest.approx(1.0, rel=1e-12)
        assert default_cutoff(math.e ** 4, 4) == pytest.approx(4.0, rel=1e-12)
        assert default_cutoff(10.0, 2, 2.0) == pytest.approx(
            2 * math.sqrt(2 * math.log(10)), rel=1e-12)
        with pytest.raises(ValueError):
            default_cutoff(1.0, 2)

    def test_bias_bound_sentinel_and_value(self):
        sigma = isotropic_scattering(2)
        # validity threshold sqrt(5 Tr/2) = sqrt(5 / (2 pi)) ~ 0.8921
        assert bias_bound(sigma, 0.5) is None
        assert bias_bound(sigma, 3.0) == pytest.approx(
            2.7830123955864124e-16, rel=1e-10)

    def test_bias_bound_decreasing_in_r(self):
        sigma = isotropic_scattering(3)
        vals = [bias_bound(sigma, r) for r in (2.0, 3.0, 4.0)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_variance_bound(self):
        assert variance_bound(2.0, 1, 100.0) == pytest.approx(0.64, rel=1e-12)
        assert variance_bound(2.0, 1, 100.0) == pytest.approx(
            variance_bound(2.0, 1, 200.0) * 2, rel=1e-12)
        assert variance_bound(1.2, 2, 100.0) is None  # below sqrt(d)
        vals = [variance_bound(r, 2, 50.0) for r in (2.0, 3.0, 4.0)]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_risk_rate(self):
        assert risk_rate(math.e, 1) == pytest.approx(math.e ** -0.5, rel=1e-12)
        # d=2, c=1, n=e^4: d^2 (sqrt(log n))^(d+1) / sqrt(n) = 4*8/e^2
        assert risk_rate(math.e ** 4, 2) == pytest.approx(
            4.330729063571606, rel=1e-12)
        big = [risk_rate(n, 2) for n in (1e3, 1e5, 1e8, 1e12)]
        assert all(a > b for a, b in zip(big, big[1:]))
        with pytest.raises(ValueError):
            risk_rate(1.0, 2)


def _ball_pattern(points, radius):
    return PointPattern(np.asarray(points, dtype=float),
                        BallWindow(radius, np.asarray(points).shape[1]))


class TestNeighborhoods:
    def test_strict_inequality_at_exact_distance(self):
        pat = _ball_pattern([[0.0, 0.0], [1.0, 0.0]], 10.0)
        index = build_neighborhoods(pat, 1.0, 10.0)
        assert index.neighbors[0].size == 0
        assert index.neighbors[1].size == 0

    def test_interior_set_strict(self):
        # ||x|| = R - r exactly is excluded from the interior set.
        pat = _ball_pattern([[9.0, 0.0], [8.999, 0.0]], 10.0)
        index = build_neighborhoods(pat, 1.0, 10.0)
        assert index.inner.tolist() == [1]

    def test_symmetry_and_self_exclusion(self):
        rng = np.random.default_rng(0)
        pts = rng.uniform(-5, 5, size=(300, 2))
        pts = pts[np.linalg.norm(pts, axis=1) <= 7.0]
        pat = _ball_pattern(pts, 7.0)
        index = build_neighborhoods(pat, 0.8, 7.0)
        sets = [set(nb.tolist()) for nb in index.neighbors]
        for i, nb in enumerate(sets):
            assert i not in nb
            for j in nb:
                assert i in sets[j]

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(1)
        pts = rng.uniform(-6, 6, size=(500, 3))
        pts = pts[np.linalg.norm(pts, axis=1) <= 6.0]
        pat = _ball_pattern(pts, 6.0)
        fast = build_neighborhoods(pat, 1.1, 6.0)
        slow = build_neighborhoods_bruteforce(pat, 1.1, 6.0)
        assert np.array_equal(fast.inner, slow.inner)
        for a, b in zip(fast.neighbors, slow.neighbors):
            assert np.array_equal(a, b)

    def test_rejects_bad_radii(self):
        pat = _ball_pattern([[0.0, 0.0]], 5.0)
        with pytest.raises(ValueError):
            build_neighborhoods(pat, 5.0, 5.0)


# The estimator carries the consistency constant 2^((d+2)/2); at d=2 the
# empty-pattern value is that constant times pi/4.
D2_SCALE = 2.0 ** 2


class TestEstimateScattering:
    def test_empty_pattern_identity_term(self):
        pat = PointPattern(np.empty((0, 2)), BallWindow(10.0, 2))
        res = estimate_scattering(pat, EstimatorConfig(r=1.0))
        assert np.allclose(res.sigma_hat, D2_SCALE * (math.pi / 4) * np.eye(2),
                           rtol=1e-12)
        assert res.pair_count == 0
        assert res.n_expected == pytest.approx(100 * math.pi)

    def test_two_point_pattern_by_hand(self):
        r, big_r = 2.0, 10.0
        pts = [[0.5, 0.0], [-0.5, 0.0]]
        res = estimate_scattering(_ball_pattern(pts, big_r),
                                  EstimatorConfig(r=r, R=big_r))
        diff = np.array([1.0, 0.0])
        expected = D2_SCALE * (
            math.pi * r ** 4 / 4 * np.eye(2)
            - 2 * np.outer(diff, diff) / (math.pi * (big_r - r) ** 2))
        assert np.allclose(res.sigma_hat, expected, rtol=1e-12)
        assert res.pair_count == 2

    def test_exact_symmetry(self):
        rng = np.random.default_rng(2)
        pts = rng.uniform(-4, 4, size=(200, 3))
        pts = pts[np.linalg.norm(pts, axis=1) <= 5.0]
        res = estimate_scattering(_ball_pattern(pts, 5.0),
                                  EstimatorConfig(r=1.5))
        assert np.array_equal(res.sigma_hat, res.sigma_hat.T)

    def test_permutation_bitwise_stable(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(-4, 4, size=(150, 2))
        pts = pts[np.linalg.norm(pts, axis=1) <= 5.0]
        cfg = EstimatorConfig(r=1.2)
        res = estimate_scattering(_ball_pattern(pts, 5.0), cfg)
        shuffled = pts[rng.permutation(pts.shape[0])]
        res2 = estimate_scattering(_ball_pattern(shuffled, 5.0), cfg)
        assert np.array_equal(res.sigma_hat, res2.sigma_hat)
        assert res.pair_count == res2.pair_count

    def test_rotation_equivariance(self):
        rng = np.random.default_rng(4)
        pts = rng.uniform(-4, 4, size=(300, 2))
        pts = pts[np.linalg.norm(pts, axis=1) <= 5.0]
        theta = 0.7
        q = np.array([[math.cos(theta), -math.sin(theta)],
                      [math.sin(theta), math.cos(theta)]])
        cfg = EstimatorConfig(r=1.0)
        base = estimate_scattering(_ball_pattern(pts, 5.0), cfg).sigma_hat
        rotated = estimate_scattering(_ball_pattern(pts @ q.T, 5.0), cfg).sigma_hat
        assert np.allclose(rotated, q @ base @ q.T, atol=1e-10)

    def test_box_window_uses_inscribed_ball(self):
        rng = np.random.default_rng(5)
        pts = rng.uniform(-5, 5, size=(100, 2))
        pat = PointPattern(pts, BoxWindow(10.0, 2))
        res = estimate_scattering(pat, EstimatorConfig(r=1.0))
        assert res.R_used == 5.0

    def test_auto_cutoff_within_clamp(self):
        rng = np.random.default_rng(6)
        pts = rng.uniform(-10, 10, size=(400, 2))
        pts = pts[np.linalg.norm(pts, axis=1) <= 12.0]
        res = estimate_scattering(_ball_pattern(pts, 12.0))
        n = count_expectation(12.0, 2)
        assert math.sqrt(2) <= res.r_used <= 6.0
        assert res.r_used == pytest.approx(
            min(max(default_cutoff(n, 2), math.sqrt(2)), 6.0))

    def test_json_payload(self):
        pat = PointPattern(np.empty((0, 2)), BallWindow(10.0, 2))
        res = estimate_scattering(pat, EstimatorConfig(r=2.0))
        payload = res.to_json_dict()
        blob = json.loads(json.dumps(payload))
        assert blob["N"] == 0
        assert blob["dim"] == 2
        assert len(blob["sigma_hat"]) == 4
        assert blob["variance_bound"] is not None
        assert blob["risk_rate"] is not None
