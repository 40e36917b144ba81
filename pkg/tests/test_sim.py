"""Tests for noise channels, detection calibration and shot sampling."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mesdlab.core import BlochVector, GridPoint, default_grid, ideal_probability_table
from mesdlab.errors import ConfigError
from mesdlab.sim import (
    CountTable,
    NoiseConfig,
    apply_depolarizing,
    apply_rotation_noise,
    calibrate_detection,
    cell_rng,
    confuse_probability,
    run_experiment,
    sample_counts,
    simulate_point,
)

E01, E10 = 0.0171, 0.0208


class TestNoiseConfig:
    def test_defaults(self):
        cfg = NoiseConfig()
        assert cfg.shots == 1000
        assert cfg.e_bright_given_dark == pytest.approx(E01)
        assert cfg.e_dark_given_bright == pytest.approx(E10)
        assert cfg.rotation_angle_sigma == 0.0
        assert cfg.depolarizing_p == 0.0

    def test_exact_mode_sentinel_allowed(self):
        assert NoiseConfig(shots=0).shots == 0

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"shots": -1},
            {"shots": 2.5},
            {"e_bright_given_dark": 0.6, "e_dark_given_bright": 0.5},
            {"e_bright_given_dark": -0.1},
            {"rotation_angle_sigma": -0.01},
            {"depolarizing_p": 1.5},
            {"seed": -1},
            {"seed": 2**64},
        ],
    )
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ConfigError):
            NoiseConfig(**kwargs)


class TestDepolarizing:
    def test_identity_at_zero(self):
        v = BlochVector(0.3, -0.4, 0.5)
        assert apply_depolarizing(v, 0.0) == v

    def test_full_mixing(self):
        assert apply_depolarizing(BlochVector(0.3, -0.4, 0.5), 1.0) == BlochVector(0.0, -0.0, 0.0)

    def test_linear_contraction(self):
        v = apply_depolarizing(BlochVector(1.0, 0.0, 0.0), 0.2)
        np.testing.assert_allclose(v.as_array(), [0.8, 0.0, 0.0], atol=1e-15)

    def test_out_of_range(self):
        with pytest.raises(ConfigError):
            apply_depolarizing(BlochVector(0, 0, 1), 1.2)


class TestRotationNoise:
    def test_zero_sigma_is_exact(self):
        rng = np.random.default_rng(7)
        assert apply_rotation_noise(1.234, 0.0, rng) == 1.234

    def test_moments(self):
        rng = np.random.default_rng(42)
        draws = np.array([apply_rotation_noise(math.pi, 0.01, rng) for _ in range(100_000)])
        scale = math.pi * 0.01
        assert abs(draws.mean() - math.pi) < 3 * scale / math.sqrt(100_000)
        assert draws.var() == pytest.approx(scale**2, rel=0.1)


class TestDetection:
    def test_forward_extremes(self):
        assert confuse_probability(1.0, E01, E10) == pytest.approx(0.9792)
        assert confuse_probability(0.0, E01, E10) == pytest.approx(0.0171)

    def test_forward_no_error(self):
        assert confuse_probability(0.37, 0.0, 0.0) == 0.37

    def test_calibration_reference_values(self):
        assert calibrate_detection(0.9792, E01, E10) == pytest.approx(1.0, abs=1e-12)
        assert calibrate_detection(0.5, E01, E10) == pytest.approx(0.4829 / 0.9621, abs=1e-12)
        assert calibrate_detection(0.01, E01, E10) == 0.0

    @given(p=st.floats(0, 1, allow_nan=False))
    @settings(max_examples=100, deadline=None)
    def test_round_trip(self, p):
        """calibrate after confuse recovers the input exactly."""
        assert calibrate_detection(confuse_probability(p, E01, E10), E01, E10) == pytest.approx(
            p, abs=1e-12
        )


class TestSampling:
    def test_degenerate_probabilities(self):
        rng = np.random.default_rng(0)
        assert sample_counts(0.0, 500, rng) == (0, 500)
        assert sample_counts(1.0, 500, rng) == (500, 500)

    def test_concentration(self):
        rng = np.random.default_rng(3)
        n1, n = sample_counts(0.5, 10**6, rng)
        assert abs(n1 / n - 0.5) < 0.0015


class TestCellStreams:
    def test_reproducible(self):
        a = cell_rng(9, 2, 1, 3).standard_normal(4)
        b = cell_rng(9, 2, 1, 3).standard_normal(4)
        np.testing.assert_array_equal(a, b)

    def test_distinct_cells_distinct_streams(self):
        a = cell_rng(9, 2, 1, 3).standard_normal(4)
        b = cell_rng(9, 2, 1, 4).standard_normal(4)
        c = cell_rng(9, 3, 1, 3).standard_normal(4)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)


class TestCountTable:
    def test_invariants_enforced(self):
        point = GridPoint(0.5, 0.2)
        cfg = NoiseConfig()
        good = np.full((4, 6), 10.0)
        tot = np.full((4, 6), 100, dtype=np.int64)
        CountTable(point, cfg, good, tot)
        with pytest.raises(ConfigError):
            CountTable(point, cfg, np.full((4, 6), 101.0), tot)
        with pytest.raises(ConfigError):
            CountTable(point, cfg, np.full((4, 6), -1.0), tot)
        with pytest.raises(ConfigError):
            CountTable(point, cfg, np.full((4, 6), 1.5), np.zeros((4, 6), dtype=np.int64))

    def test_frequencies_both_modes(self):
        point = GridPoint(0.5, 0.2)
        table = CountTable(point, NoiseConfig(), np.full((4, 6), 250.0), np.full((4, 6), 1000))
        np.testing.assert_allclose(table.frequencies(), 0.25)
        exact = CountTable(
            point, NoiseConfig(shots=0), np.full((4, 6), 0.37), np.zeros((4, 6), dtype=np.int64)
        )
        np.testing.assert_allclose(exact.frequencies(), 0.37)


class TestSimulatePoint:
    def test_noiseless_exact_matches_ideal_table(self):
        """With every channel off the pipeline is the ideal Born table."""
        cfg = NoiseConfig(shots=0, e_bright_given_dark=0.0, e_dark_given_bright=0.0)
        for point in [GridPoint(0.0, 0.0), GridPoint(0.6, 0.3), GridPoint(1.5, 1.5)]:
            table = simulate_point(point, cfg)
            np.testing.assert_allclose(
                table.frequencies(), ideal_probability_table(point)[1:], atol=1e-12
            )

    def test_detection_only_calibrates_back(self):
        """Exact inverse: confusion then calibration restores the ideal table."""
        point = GridPoint(0.9, 0.4)
        table = simulate_point(point, NoiseConfig(shots=0))
        calibrated = np.vectorize(calibrate_detection)(table.frequencies(), E01, E10)
        np.testing.assert_allclose(calibrated, ideal_probability_table(point)[1:], atol=1e-12)

    def test_depolarizing_shrinks_contrast(self):
        point = GridPoint(1.0, 0.4)
        clean = simulate_point(point, NoiseConfig(shots=0, e_bright_given_dark=0, e_dark_given_bright=0))
        noisy = simulate_point(
            point,
            NoiseConfig(shots=0, e_bright_given_dark=0, e_dark_given_bright=0, depolarizing_p=0.3),
        )
        # every cell contracts toward 1/2 by exactly the depolarizing factor
        np.testing.assert_allclose(
            noisy.frequencies() - 0.5, 0.7 * (clean.frequencies() - 0.5), atol=1e-12
        )

    def test_default_config_binomial_window(self):
        """(M_disc, P_phi) at (1.5, 0) lands near s = cos^2(0.75)."""
        table = simulate_point(GridPoint(1.5, 0.0), NoiseConfig(seed=11))
        freq = table.frequencies()[2, 2]
        assert abs(freq - math.cos(0.75) ** 2) < 3 * math.sqrt(0.25 / 1000)

    def test_rotation_noise_perturbs_y_cells(self):
        point = GridPoint(0.8, 0.2)
        cfg = NoiseConfig(shots=0, e_bright_given_dark=0, e_dark_given_bright=0,
                          rotation_angle_sigma=0.05, seed=5)
        table = simulate_point(point, cfg)
        ideal = ideal_probability_table(point)[1:]
        assert np.max(np.abs(table.frequencies() - ideal)) > 1e-4


class TestRunExperiment:
    def test_deterministic_across_worker_counts(self):
        points = default_grid()[:12]
        cfg = NoiseConfig(rotation_angle_sigma=0.02, depolarizing_p=0.05, seed=123)
        serial = run_experiment(points, cfg, workers=1)
        threaded = run_experiment(points, cfg, workers=4)
        for a, b in zip(serial, threaded):
            np.testing.assert_array_equal(a.n_outcome1, b.n_outcome1)
            np.testing.assert_array_equal(a.n_total, b.n_total)

    def test_seed_changes_counts(self):
        points = [GridPoint(1.0, 0.4)]
        a = run_experiment(points, NoiseConfig(seed=1))[0]
        b = run_experiment(points, NoiseConfig(seed=2))[0]
        assert not np.array_equal(a.n_outcome1, b.n_outcome1)

    def test_point_index_keys_streams(self):
        """The same point simulated at different list positions differs."""
        point = GridPoint(1.0, 0.4)
        cfg = NoiseConfig(seed=1)
        assert not np.array_equal(
            simulate_point(point, cfg, 0).n_outcome1, simulate_point(point, cfg, 1).n_outcome1
        )
