"""Error norms, normalized percent series, KL divergence, trace CSV, units."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cswarm import units
from cswarm.density import VonMisesMode, von_mises_2d
from cswarm.domain import ScalarField, integrate
from cswarm.metrics import (
    CSV_COLUMNS_FINAL,
    TrialTrace,
    default_kl_floor,
    kl_divergence,
    l2_error,
    percent_error,
    provisional_percent_error,
)


class TestL2Error:
    def test_identical_fields(self, grid64):
        rho = ScalarField.uniform(grid64, 2.0)
        assert l2_error(rho, rho) == 0.0

    def test_single_mode_closed_form(self, grid64):
        # ||cos(x1)||_L2 over the torus is sqrt(2 pi^2)
        a = ScalarField.zeros(grid64)
        b = ScalarField.from_function(grid64, lambda x1, x2: np.cos(x1))
        assert l2_error(a, b) == pytest.approx(np.sqrt(2 * np.pi**2), abs=1e-10)

    def test_scales_linearly(self, grid32, rng):
        d = rng.standard_normal(grid32.shape)
        zero = ScalarField.zeros(grid32)
        one = l2_error(zero, ScalarField(grid32, d))
        two = l2_error(zero, ScalarField(grid32, 2 * d))
        assert two == pytest.approx(2 * one, rel=1e-12)

    def test_squared_norm_is_the_energy_integral(self, grid32, rng):
        a = ScalarField(grid32, rng.standard_normal(grid32.shape))
        b = ScalarField(grid32, rng.standard_normal(grid32.shape))
        e2 = integrate(ScalarField(grid32, (b.values - a.values) ** 2))
        assert l2_error(a, b) ** 2 == pytest.approx(e2, abs=1e-12)

    def test_grid_mismatch_rejected(self, grid32, grid64):
        with pytest.raises(ValueError, match="grids"):
            l2_error(ScalarField.zeros(grid32), ScalarField.zeros(grid64))


class TestPercentError:
    def test_normalizes_by_the_peak(self):
        np.testing.assert_allclose(percent_error([4.0, 1.0]), [100.0, 25.0])

    def test_peak_is_always_100(self, rng):
        e = rng.uniform(0.1, 9.0, size=30)
        assert percent_error(e).max() == pytest.approx(100.0)

    @given(scale=st.floats(min_value=1e-6, max_value=1e6, allow_nan=False))
    def test_scale_invariant(self, scale):
        e = np.array([3.0, 0.5, 2.25, 3.0])
        np.testing.assert_allclose(percent_error(e * scale), percent_error(e), rtol=1e-9)

    def test_all_zero_stays_zero(self):
        np.testing.assert_array_equal(percent_error([0.0, 0.0]), [0.0, 0.0])

    def test_empty_series(self):
        assert percent_error([]).size == 0

    def test_rejects_negative_entries(self):
        with pytest.raises(ValueError, match="nonnegative"):
            percent_error([1.0, -0.1])

    def test_provisional_uses_the_running_max(self):
        out = provisional_percent_error([1.0, 4.0, 2.0])
        np.testing.assert_allclose(out, [100.0, 100.0, 50.0])

    def test_provisional_matches_final_when_peak_comes_first(self):
        e = np.array([5.0, 1.0, 0.2])
        np.testing.assert_allclose(provisional_percent_error(e), percent_error(e))


class TestKLDivergence:
    def test_identical_fields_give_zero(self, grid64):
        rho = von_mises_2d([VonMisesMode(0.0, 0.0, 1.5, 1.5)], grid64, 100.0)
        assert abs(kl_divergence(rho, rho)) <= 1e-12

    def test_nonnegative_on_random_pairs(self, grid32, rng):
        for _ in range(10):
            a = ScalarField(grid32, rng.uniform(0.0, 1.0, size=grid32.shape))
            b = ScalarField(grid32, rng.uniform(0.0, 1.0, size=grid32.shape))
            assert kl_divergence(a, b) >= -1e-12

    def test_asymmetric_in_general(self, grid64):
        sharp = von_mises_2d([VonMisesMode(0.0, 0.0, 3.0, 3.0)], grid64, 1.0)
        wide = von_mises_2d([VonMisesMode(0.0, 0.0, 0.3, 0.3)], grid64, 1.0)
        assert kl_divergence(sharp, wide) != pytest.approx(
            kl_divergence(wide, sharp), rel=1e-3
        )

    def test_shrinks_as_the_target_flattens_toward_uniform(self, grid64):
        uniform = ScalarField.uniform(grid64, 1.0 / (2 * np.pi) ** 2)
        prev = np.inf
        for conc in (2.0, 1.0, 0.5, 0.1):
            rho_d = von_mises_2d([VonMisesMode(0.0, 0.0, conc, conc)], grid64, 1.0)
            d = kl_divergence(uniform, rho_d)
            assert d < prev
            prev = d
        assert prev >= 0.0

    def test_mass_normalization_first(self, grid32):
        # densities of different mass compare as shapes, not masses
        a = von_mises_2d([VonMisesMode(0.0, 0.0, 1.0, 1.0)], grid32, 7.0)
        b = von_mises_2d([VonMisesMode(0.0, 0.0, 1.0, 1.0)], grid32, 700.0)
        assert abs(kl_divergence(a, b)) <= 1e-12

    def test_floor_guards_zeros(self, grid32):
        spike = np.zeros(grid32.shape)
        spike[0, 0] = 1.0 / grid32.cell_volume
        a = ScalarField(grid32, spike)
        b = ScalarField.uniform(grid32, 1.0 / (2 * np.pi) ** 2)
        d = kl_divergence(a, b)
        assert np.isfinite(d) and d > 0

    def test_default_floor_value(self):
        assert default_kl_floor(100.0, 2) == pytest.approx(1e-9 * 100.0 / (2 * np.pi) ** 2)

    def test_floor_validation(self, grid32):
        a = ScalarField.uniform(grid32, 1.0)
        with pytest.raises(ValueError, match="floor"):
            kl_divergence(a, a, floor=0.0)


class TestTrialTrace:
    def test_csv_round_trip(self, tmp_path):
        trace = TrialTrace(
            times=[0.0, 0.01, 0.02],
            error_sq=[4.0, 2.0, 1.0],
            kl=[0.5, 0.3, 0.2],
        ).finalize()
        path = tmp_path / "trace.csv"
        trace.to_csv(path)
        back = TrialTrace.from_csv(path)
        np.testing.assert_array_equal(back.times, trace.times)
        np.testing.assert_array_equal(back.error_sq, trace.error_sq)
        np.testing.assert_array_equal(back.kl, trace.kl)
        np.testing.assert_array_equal(back.e_bar, trace.e_bar)

    def test_csv_columns(self, tmp_path):
        trace = TrialTrace(times=[0.0], error_sq=[1.0], kl=[0.0])
        path = tmp_path / "trace.csv"
        trace.to_csv(path)
        header = path.read_text().splitlines()[0]
        assert header.split(",") == CSV_COLUMNS_FINAL

    def test_empty_trace_round_trip(self, tmp_path):
        trace = TrialTrace(times=[], error_sq=[], kl=[]).finalize()
        path = tmp_path / "trace.csv"
        trace.to_csv(path)
        back = TrialTrace.from_csv(path)
        assert len(back) == 0

    def test_finalize_normalizes_by_global_peak(self):
        trace = TrialTrace(times=[0, 1, 2], error_sq=[1.0, 4.0, 2.0], kl=[0, 0, 0])
        trace.finalize()
        np.testing.assert_allclose(trace.e_bar, [25.0, 100.0, 50.0])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="lengths"):
            TrialTrace(times=[0.0, 1.0], error_sq=[1.0], kl=[0.0, 0.0])


class TestUnits:
    def test_arena_span_maps_to_the_torus(self):
        assert units.meters_to_sim(2.0) == pytest.approx(2 * np.pi)
        assert units.sim_to_meters(2 * np.pi) == pytest.approx(2.0)

    def test_time_unit(self):
        assert units.seconds_to_sim(5.0) == pytest.approx(1.0)
        assert units.sim_to_seconds(1.0) == pytest.approx(5.0)
        assert units.seconds_to_sim(units.FRAME_SECONDS) == pytest.approx(0.01)

    def test_speed_conversion_round_trip(self):
        v = units.mps_to_sim(0.8)
        assert v == pytest.approx(4 * np.pi, abs=1e-12)
        assert units.sim_to_mps(v) == pytest.approx(0.8, abs=1e-12)

    @given(x=st.floats(min_value=-100, max_value=100, allow_nan=False))
    def test_conversions_invert(self, x):
        assert units.sim_to_meters(units.meters_to_sim(x)) == pytest.approx(x, abs=1e-9)
        assert units.sim_to_seconds(units.seconds_to_sim(x)) == pytest.approx(x, abs=1e-9)
        assert units.sim_to_mps(units.mps_to_sim(x)) == pytest.approx(x, abs=1e-9)
        assert units.sim_to_radps(units.radps_to_sim(x)) == pytest.approx(x, abs=1e-9)
