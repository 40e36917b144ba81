"""Tests for parameter extraction, bounds evaluation, bootstrap, and fidelity."""

import math
import warnings

import numpy as np
import pytest

import mesdlab.analysis as analysis
from mesdlab.analysis import (
    ExtractedParams,
    PointEstimate,
    bootstrap_pipeline,
    contextual_advantage,
    extract_parameters,
    grid_fidelity,
    grid_report,
    pipeline_once,
    process_point,
    violation_verdict,
)
from mesdlab.core import (
    GridPoint,
    default_grid,
    noncontextual_bound,
    quantum_bound,
    theory_params,
)
from mesdlab.errors import BootstrapError, ConstraintError, ConstraintWarning, ConvergenceError
from mesdlab.sim import NoiseConfig, simulate_point

STAR = GridPoint(math.asin(math.sqrt(0.75)), 0.0)


def exact_counts(point, **cfg):
    return simulate_point(point, NoiseConfig(shots=0, **cfg))


def make_estimate(c, eps, s, ci=None, **extra):
    """PointEstimate with the derived fields filled in consistently."""
    s_nc = noncontextual_bound(c, eps)
    s_q = quantum_bound(c, eps)
    return PointEstimate(
        theta=extra.pop("theta", 0.9),
        alpha=extra.pop("alpha", 0.2),
        c=c,
        epsilon=eps,
        s=s,
        s_nc=s_nc,
        s_q=s_q,
        ds_exp=s - s_nc,
        ds_theory=extra.pop("ds_theory", s_q - s_nc),
        ci=ci or {},
        **extra,
    )


class TestExtractParameters:
    def test_ideal_point_recovers_theory(self):
        point = GridPoint(0.6, 0.3)
        model, sol, params = pipeline_once(exact_counts(point))
        c_th, e_th, s_th = theory_params(point)
        assert abs(params.c - c_th) < 1e-6
        assert abs(params.epsilon - e_th) < 1e-6
        assert abs(params.s - s_th) < 1e-6
        assert params.clamp_events == 0

    def test_origin_point_is_degenerate_limit(self):
        from mesdlab.errors import RankDeficiencyWarning

        with pytest.warns(RankDeficiencyWarning):
            _, _, params = pipeline_once(exact_counts(GridPoint(0.0, 0.0)))
        c, eps, s = params
        assert abs(c) < 1e-9 and abs(eps) < 1e-9 and abs(s - 1.0) < 1e-9

    def test_iter_order(self):
        params = ExtractedParams(c=0.1, epsilon=0.2, s=0.3)
        assert tuple(params) == (0.1, 0.2, 0.3)

    def test_noiseless_grid_sample_matches_theory(self):
        for point in [GridPoint(0.1, 0.0), GridPoint(1.5, 1.4), GridPoint(1.2, 0.5)]:
            _, _, params = pipeline_once(exact_counts(point))
            expect = theory_params(point)
            assert np.allclose(tuple(params), expect, atol=1e-7)

    def test_admissibility_warning_on_distorted_input(self):
        # eps > c beyond the 0.02 slack has to be flagged, not silently kept
        model, sol, _ = pipeline_once(exact_counts(GridPoint(0.3, 0.2)))
        distorted = sol.secondary_states.copy()
        distorted[1:, :] *= -0.9  # flips the discrimination geometry
        bad = type(sol)(
            secondary_states=distorted, weight_matrix=sol.weight_matrix.copy()
        )
        with pytest.warns(ConstraintWarning):
            extract_parameters(model, bad)

    def test_clamp_events_counted(self):
        model, sol, _ = pipeline_once(exact_counts(GridPoint(0.2, 0.1)))
        pushed = sol.secondary_states.copy()
        pushed[1:, 0] *= 1.6  # leaves the Bloch ball, cells exceed [0, 1]
        bad = type(sol)(
            secondary_states=pushed, weight_matrix=sol.weight_matrix.copy()
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            params = extract_parameters(model, bad)
        assert params.clamp_events > 0
        for value in params:
            assert 0.0 <= value <= 1.0


class TestContextualAdvantage:
    def test_maximal_star_values(self):
        ds_exp, ds_theory = contextual_advantage(0.75, 0.0, 0.75)
        assert abs(ds_exp - 0.125) < 1e-12
        assert abs(ds_theory - 0.125) < 1e-12

    def test_highest_grid_advantage(self):
        s_q = quantum_bound(0.853, 0.146)
        _, ds_theory = contextual_advantage(0.853, 0.146, s_q)
        assert abs(ds_theory - 0.207) < 1e-3

    def test_measured_at_bound_gives_zero(self):
        s_nc = noncontextual_bound(0.4, 0.1)
        ds_exp, _ = contextual_advantage(0.4, 0.1, s_nc)
        assert abs(ds_exp) < 1e-12

    def test_inadmissible_pair_propagates(self):
        with pytest.raises(ConstraintError):
            contextual_advantage(0.1, 0.4, 0.9)

    def test_theory_advantage_nonnegative_on_grid(self):
        for point in default_grid():
            c, eps, s = theory_params(point)
            _, ds_theory = contextual_advantage(c, eps, s)
            if abs(point.theta - point.alpha) < 1e-12:
                assert abs(ds_theory) < 1e-12
            else:
                assert ds_theory > 0.0

    def test_grid_argmax_locations(self):
        # frozen from the closed-form bounds over the default grid
        best = max(
            default_grid(),
            key=lambda p: contextual_advantage(*theory_params(p))[1],
        )
        assert (best.theta, best.alpha) == (1.5, 0.7)
        line = [p for p in default_grid() if p.alpha == 0.0]
        best0 = max(line, key=lambda p: contextual_advantage(*theory_params(p))[1])
        assert (best0.theta, best0.alpha) == (1.0, 0.0)


class TestBootstrap:
    def test_exact_mode_has_zero_spread(self):
        result = bootstrap_pipeline(exact_counts(GridPoint(0.8, 0.3)), b=10, seed=4)
        for mean, std in result.stats.values():
            assert std == 0.0
        assert result.failures == 0

    def test_requires_two_resamples(self):
        with pytest.raises(ValueError):
            bootstrap_pipeline(exact_counts(GridPoint(0.8, 0.3)), b=1, seed=0)

    def test_deterministic_given_seed(self):
        counts = simulate_point(GridPoint(1.0, 0.4), NoiseConfig(shots=500, seed=9))
        first = bootstrap_pipeline(counts, b=25, seed=123)
        second = bootstrap_pipeline(counts, b=25, seed=123)
        assert first.stats == second.stats

    def test_spread_tracks_binomial_width(self):
        counts = simulate_point(GridPoint(1.0, 0.4), NoiseConfig(shots=1000, seed=2))
        result = bootstrap_pipeline(counts, b=100, seed=7)
        s_mean, s_std = result.stats["s"]
        binomial = math.sqrt(s_mean * (1.0 - s_mean) / 1000.0)
        assert binomial / 2.0 < s_std < binomial * 2.0

    def test_all_failures_raise(self, monkeypatch):
        counts = simulate_point(GridPoint(1.0, 0.4), NoiseConfig(shots=800, seed=3))
        base_model, _, _ = pipeline_once(counts)

        def explode(*args, **kwargs):
            raise ConvergenceError("forced failure")

        monkeypatch.setattr(analysis, "solve_secondary", explode)
        with pytest.raises(BootstrapError):
            bootstrap_pipeline(counts, b=20, seed=1, base_model=base_model)


class TestProcessPoint:
    def test_estimate_carries_bootstrap_bands(self):
        counts = simulate_point(GridPoint(1.0, 0.4), NoiseConfig(shots=1000, seed=5))
        pe = process_point(counts, b_boot=50, seed=11)
        assert set(pe.ci) == {"c", "eps", "s", "ds_exp"}
        assert pe.violation_sigmas > 0.0
        assert pe.theta == 1.0 and pe.alpha == 0.4

    def test_star_point_statistical_band(self):
        # mid-band draws under shot noise near the maximal-advantage point
        for seed in (0, 1, 2):
            counts = simulate_point(
                STAR, NoiseConfig(shots=1000, seed=seed), point_index=136
            )
            pe = process_point(counts, b_boot=50, seed=seed)
            assert abs(pe.c - 0.750) < 0.03
            assert pe.epsilon < 0.03
            assert 0.05 < pe.ds_exp < 0.16

    def test_exact_mode_gives_infinite_significance(self):
        pe = process_point(exact_counts(GridPoint(1.0, 0.4)), b_boot=5, seed=0)
        assert pe.violation_sigmas == math.inf
        assert violation_verdict(pe) == analysis.VIOLATES


class TestPointEstimateInvariants:
    def test_consistent_record_passes(self):
        make_estimate(0.4, 0.05, 0.9)

    def test_broken_bound_rejected(self):
        with pytest.raises(ValueError):
            PointEstimate(
                theta=0.9,
                alpha=0.2,
                c=0.4,
                epsilon=0.05,
                s=0.9,
                s_nc=0.5,
                s_q=quantum_bound(0.4, 0.05),
                ds_exp=0.9 - 0.5,
                ds_theory=0.1,
            )

    def test_broken_advantage_rejected(self):
        s_nc = noncontextual_bound(0.4, 0.05)
        with pytest.raises(ValueError):
            PointEstimate(
                theta=0.9,
                alpha=0.2,
                c=0.4,
                epsilon=0.05,
                s=0.9,
                s_nc=s_nc,
                s_q=quantum_bound(0.4, 0.05),
                ds_exp=0.2,
                ds_theory=0.1,
            )


class TestGridFidelity:
    def test_single_point_arithmetic(self):
        pe = make_estimate(0.75, 0.0, 0.7375)  # ds_exp = 0.1125, ds_theory = 0.125
        f, excluded = grid_fidelity([pe])
        assert abs(f - 0.9) < 1e-12
        assert excluded == []

    def test_boundary_points_are_listed_not_dropped(self):
        good = make_estimate(0.75, 0.0, 0.75)
        boundary = make_estimate(0.3, 0.3, 1.0, theta=0.7, alpha=0.7, ds_theory=0.0)
        f, excluded = grid_fidelity([good, boundary])
        assert abs(f - 1.0) < 1e-12
        assert excluded == [(0.7, 0.7)]

    def test_fidelity_may_go_negative(self):
        pe = make_estimate(0.75, 0.0, 0.45)  # wildly off measurement
        f, _ = grid_fidelity([pe])
        assert f < 0.0

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            grid_fidelity([])

    def test_all_excluded_is_an_error(self):
        boundary = make_estimate(0.3, 0.3, 1.0, ds_theory=0.0)
        with pytest.raises(ConstraintError):
            grid_fidelity([boundary])

    def test_report_bundles_everything(self):
        pts = [make_estimate(0.75, 0.0, 0.74), make_estimate(0.2, 0.2, 0.9, ds_theory=0.0)]
        report = grid_report(pts)
        assert report.points == pts
        assert report.excluded_points == [(0.9, 0.2)]
        assert report.fidelity == grid_fidelity(pts)[0]

    def test_noiseless_grid_is_near_perfect(self):
        points = []
        for idx, point in enumerate(default_grid()):
            if point.theta > point.alpha:  # boundary handled in the previous tests
                counts = simulate_point(point, NoiseConfig(shots=0), point_index=idx)
                points.append(process_point(counts, b_boot=2, seed=idx))
        f, excluded = grid_fidelity(points)
        assert f > 1.0 - 1e-6
        assert excluded == []


class TestViolationVerdict:
    def test_clear_violation(self):
        pe = make_estimate(0.75, 0.0, 0.75, ci={"ds_exp": (0.125, 0.007)})
        assert violation_verdict(pe) == analysis.VIOLATES

    def test_zero_advantage(self):
        s_nc = noncontextual_bound(0.4, 0.1)
        pe = make_estimate(0.4, 0.1, s_nc, ci={"ds_exp": (0.0, 0.004)})
        assert violation_verdict(pe) == analysis.NO_VIOLATION

    def test_small_advantage_within_noise(self):
        s_nc = noncontextual_bound(0.4, 0.1)
        pe = make_estimate(0.4, 0.1, s_nc + 0.01, ci={"ds_exp": (0.01, 0.007)})
        assert violation_verdict(pe) == analysis.NO_VIOLATION

    def test_threshold_scales_with_k(self):
        s_nc = noncontextual_bound(0.4, 0.1)
        pe = make_estimate(0.4, 0.1, s_nc + 0.01, ci={"ds_exp": (0.01, 0.004)})
        assert violation_verdict(pe, k_sigma=2.0) == analysis.VIOLATES
        assert violation_verdict(pe, k_sigma=3.0) == analysis.NO_VIOLATION

    def test_missing_band_rejected(self):
        with pytest.raises(ValueError):
            violation_verdict(make_estimate(0.4, 0.1, 0.9))
