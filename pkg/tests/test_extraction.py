import numpy as np
import pytest

from app.core.error_handlers import (DegenerateSeriesError, DomainError,
                                     InsufficientDecadesError, NoCrossingError,
                                     UnreachableRatioError)
from app.schemas.device import DeviceGeometry
from app.schemas.sweep import IVSweep, LeakagePoint, LeakageSeries
from app.services.compact_model_service import (iv_sweep_synthesize, mobility,
                                                ss_of_t, transconductance, vth_of_t)
from app.schemas.device import BiasPoint
from app.services.extraction_service import (critical_current, extract_all,
                                             extract_leakage_series, extract_many,
                                             extract_sweep, fit_leakage_eta,
                                             gm_max_gain, gm_numeric,
                                             overdrive_for_ratio, subthreshold_swing,
                                             vth_constant_current, vth_y_function)

from tests.conftest import LINEAR_GRID, WIDE_GRID

UNIT = DeviceGeometry(w_um=1.0, l_um=1.0, c_ox=1e-6)


def _sweep(v, i, v_ds=0.05, t_k=300.0, geometry=UNIT):
    return IVSweep(v_ds=v_ds, t_k=t_k, geometry=geometry,
                   v_gs=tuple(float(x) for x in v), i_ds=tuple(float(x) for x in i))


def _scaled(sweep, c):
    return sweep.model_copy(update={"i_ds": tuple(c * i for i in sweep.i_ds)})


class TestConstantCurrent:
    def test_cryo_nmos_reference(self, cryo_sat_77):
        """Test the cryo NMOS threshold at 77 K."""
        assert vth_constant_current(cryo_sat_77) == pytest.approx(0.109, abs=0.015)

    def test_cryo_pmos_reference(self, cryo_pmos, geometry):
        """Test the cryo PMOS threshold at 77 K."""
        sweep = iv_sweep_synthesize(cryo_pmos, geometry, 0.9, 77.0, WIDE_GRID)
        assert vth_constant_current(sweep) == pytest.approx(0.171, abs=0.015)

    def test_exact_point_at_criterion(self):
        """A sample exactly at the criterion is returned as is."""
        v = np.linspace(0.0, 0.7, 8)
        i = [1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4]
        assert critical_current(_sweep(v, i)) == 1e-8
        assert vth_constant_current(_sweep(v, i)) == v[3]

    def test_regridding_invariance(self, cryo_nmos, geometry):
        """Test threshold stability under a finer grid."""
        coarse = iv_sweep_synthesize(cryo_nmos, geometry, 0.9, 77.0, WIDE_GRID)
        fine = iv_sweep_synthesize(cryo_nmos, geometry, 0.9, 77.0,
                                   np.round(np.arange(-0.4, 0.9 + 1e-9, 0.001), 6))
        assert abs(vth_constant_current(coarse) - vth_constant_current(fine)) < 1e-3

    def test_no_crossing(self):
        """Test a sweep that never reaches the criterion."""
        v = np.linspace(0.0, 0.7, 8)
        with pytest.raises(NoCrossingError):
            vth_constant_current(_sweep(v, np.logspace(-14, -10, 8)))


class TestTransconductance:
    def test_linear_data(self):
        """Test gm of a straight line."""
        v = np.linspace(0.0, 1.0, 11)
        gm = gm_numeric(v, 3e-4 * v + 1e-6)
        assert np.allclose(gm[1:-1], 3e-4, rtol=1e-12)
        assert gm.shape == v.shape

    def test_quadratic_data(self):
        """Central differences are exact on a parabola."""
        v = np.linspace(0.0, 1.0, 21)
        gm = gm_numeric(v, (v - 0.2) ** 2)
        assert np.allclose(gm[1:-1], 2.0 * (v[1:-1] - 0.2), rtol=0, atol=1e-12)

    def test_too_short(self):
        """Test a two-point sweep."""
        with pytest.raises(DomainError):
            gm_numeric([0.0, 0.1], [1e-9, 1e-8])

    def test_matches_model_on_fine_grid(self, cryo_nmos, geometry):
        """Test numeric gm against the model."""
        grid = np.round(np.arange(0.0, 0.9 + 1e-9, 0.001), 6)
        sweep = iv_sweep_synthesize(cryo_nmos, geometry, 0.9, 77.0, grid)
        gm = gm_numeric(sweep.v_gs, sweep.i_ds)
        for k in (50, 150, 300, 600, 850):
            expected = transconductance(cryo_nmos, geometry, BiasPoint(v_gs=grid[k], v_ds=0.9, t_k=77.0))
            assert gm[k] == pytest.approx(expected, rel=0.01, abs=0)

    def test_cold_gain(self, cryo_nmos, geometry):
        """Test the gm gain from 298 K to 10 K."""
        cold = iv_sweep_synthesize(cryo_nmos, geometry, 0.9, 10.0, LINEAR_GRID)
        warm = iv_sweep_synthesize(cryo_nmos, geometry, 0.9, 298.0, LINEAR_GRID)
        assert gm_max_gain(cold, warm) >= 1.25


class TestYFunction:
    def test_linear_law_identity(self):
        """Test the Y-function on an exact linear-law device."""
        v_t, beta, v_ds = 0.25, 2e-4, 0.05
        v = np.round(np.arange(0.3, 1.0 + 1e-9, 0.01), 6)
        result = vth_y_function(_sweep(v, beta * v_ds * (v - v_t), v_ds=v_ds))
        assert abs(result.vth - v_t) < 1e-9
        assert result.mu_ch == pytest.approx(beta / UNIT.c_ox, rel=1e-6)
        assert result.r2 == pytest.approx(1.0, abs=1e-9)

    def test_cryo_pmos_threshold(self, cryo_pmos, geometry):
        """Test the cryo PMOS Y-function threshold."""
        sweep = iv_sweep_synthesize(cryo_pmos, geometry, 0.05, 77.0, LINEAR_GRID)
        assert vth_y_function(sweep).vth == pytest.approx(0.171, abs=0.015)

    @pytest.mark.parametrize("t_k", [77.0, 298.0])
    def test_recovers_generator(self, simple_params, geometry, t_k):
        """Test threshold recovery from synthesized data."""
        params = simple_params.model_copy(update={"v_sat": 1e30, "theta_mob": 0.0})
        sweep = iv_sweep_synthesize(params, geometry, 0.05, t_k, LINEAR_GRID)
        result = vth_y_function(sweep)
        assert abs(result.vth - float(vth_of_t(params, t_k))) < 0.01
        assert result.mu_ch == pytest.approx(float(mobility(params, t_k)), rel=0.05)

    @pytest.mark.parametrize("c", [1e-3, 1e3])
    def test_current_scaling_invariance(self, cryo_lin_77, c):
        """Scaling the current leaves the threshold unchanged."""
        base = vth_y_function(cryo_lin_77).vth
        assert vth_y_function(_scaled(cryo_lin_77, c)).vth == pytest.approx(base, abs=1e-9)

    def test_requires_linear_regime(self, cryo_sat_77):
        """Test a saturation sweep."""
        with pytest.raises(DomainError) as exc:
            vth_y_function(cryo_sat_77)
        assert exc.value.error_code == "NOT_LINEAR_REGIME"

    def test_requires_enough_points(self, cryo_nmos, geometry):
        """Test a sweep with too few points."""
        sweep = iv_sweep_synthesize(cryo_nmos, geometry, 0.05, 77.0, [0.1, 0.3, 0.5, 0.7])
        with pytest.raises(DomainError):
            vth_y_function(sweep)


class TestSubthresholdSwing:
    def test_pure_exponential(self):
        """Test swing of an ideal exponential."""
        v = np.round(np.arange(0.0, 0.5 + 1e-9, 0.001), 6)
        i = 1e-14 * 10.0 ** (v / 0.0591)
        assert subthreshold_swing(_sweep(v, i)) == pytest.approx(59.1, rel=1e-3)

    def test_cryo_deep_cryogenic(self, cryo_nmos, geometry):
        """Test the cryo swing at 10 K."""
        sweep = iv_sweep_synthesize(cryo_nmos, geometry, 0.9, 10.0, WIDE_GRID)
        assert subthreshold_swing(sweep) == pytest.approx(18.0, abs=2.0)

    @pytest.mark.parametrize("t_k", [10.0, 77.0, 150.0])
    def test_matches_model_swing(self, cryo_nmos, geometry, t_k):
        """Test extracted swing against the model."""
        sweep = iv_sweep_synthesize(cryo_nmos, geometry, 0.9, t_k, WIDE_GRID)
        expected = float(ss_of_t(cryo_nmos, t_k))
        value = subthreshold_swing(sweep)
        assert value == pytest.approx(expected, rel=0.02)
        assert value >= 0.98 * expected

    def test_insufficient_decades(self):
        """Test a sweep spanning too few decades."""
        v = np.linspace(0.0, 0.7, 8)
        with pytest.raises(InsufficientDecadesError):
            subthreshold_swing(_sweep(v, np.logspace(-9, -7, 8)))


class TestOverdrive:
    def test_unit_ratio(self, cryo_sat_77):
        """A unit ratio puts V* at zero."""
        assert overdrive_for_ratio(cryo_sat_77, 1.0) == pytest.approx(-vth_constant_current(cryo_sat_77))

    def test_cryo_meets_ratio_below_low_supply(self, cryo_sat_77):
        """Test the cryo 1e7 on/off point."""
        v_star = overdrive_for_ratio(cryo_sat_77, 1e7) + vth_constant_current(cryo_sat_77)
        assert v_star <= 0.6

    def test_unreachable_when_warm(self, cryo_nmos, geometry):
        """Test an unreachable ratio."""
        sweep = iv_sweep_synthesize(cryo_nmos, geometry, 0.9, 298.0, WIDE_GRID)
        with pytest.raises(UnreachableRatioError):
            overdrive_for_ratio(sweep, 1e7)

    def test_invalid_ratio(self, cryo_sat_77):
        """Test a ratio below one."""
        with pytest.raises(DomainError):
            overdrive_for_ratio(cryo_sat_77, 0.5)


class TestLeakageLaw:
    def _series(self, temps, eta=50.0, ref=1e-9, noise=None):
        values = ref * 10.0 ** ((np.asarray(temps) - 298.0) / eta)
        if noise is not None:
            values = values * noise
        return LeakageSeries(points=tuple(LeakagePoint(t_k=t, i_off=i) for t, i in zip(temps, values)))

    def test_exact_law(self):
        """Test the fit on exact data."""
        fit = fit_leakage_eta(self._series([10.0, 77.0, 150.0, 220.0, 298.0]))
        assert fit.eta == pytest.approx(50.0, abs=1e-6)
        assert fit.i_off_ref == pytest.approx(1e-9, rel=1e-9, abs=0)

    def test_two_points(self):
        """Two points give a perfect fit."""
        fit = fit_leakage_eta(self._series([77.0, 298.0]))
        assert fit.r2 == pytest.approx(1.0)
        assert fit.eta == pytest.approx(50.0, rel=1e-9)

    def test_noisy_law(self):
        """Test eta recovery from noisy data."""
        rng = np.random.default_rng(7)
        temps = [10.0, 77.0, 150.0, 220.0, 298.0]
        etas = [
            fit_leakage_eta(self._series(temps, noise=1.0 + rng.normal(0.0, 0.05, len(temps)))).eta
            for _ in range(100)
        ]
        assert abs(np.median(etas) - 50.0) <= 5.0

    def test_degenerate_temperatures(self):
        """Test a series at a single temperature."""
        series = LeakageSeries(points=(LeakagePoint(t_k=77.0, i_off=1e-12),
                                       LeakagePoint(t_k=77.0, i_off=2e-12)))
        with pytest.raises(DegenerateSeriesError):
            fit_leakage_eta(series)

    def test_series_from_sweeps(self, cryo_nmos, geometry):
        """Test building a leakage series from sweeps."""
        sweeps = [iv_sweep_synthesize(cryo_nmos, geometry, 0.05, t, WIDE_GRID) for t in (298.0, 150.0)]
        series = extract_leakage_series(sweeps)
        assert [p.t_k for p in series.points] == [150.0, 298.0]


class TestExtractAll:
    def test_consistent_report(self, cryo_lin_77, cryo_sat_77):
        """Test a complete report."""
        report = extract_all(cryo_lin_77, cryo_sat_77)
        assert report.is_complete
        assert abs(report.vth_y - report.vth_cc) < 0.05
        assert report.ss_mv_dec > 0
        assert 0.0 <= report.y_r2 <= 1.0

    def test_mismatched_temperature(self, cryo_nmos, geometry, cryo_sat_77):
        """Test a pair taken at different temperatures."""
        linear = iv_sweep_synthesize(cryo_nmos, geometry, 0.05, 298.0, LINEAR_GRID)
        with pytest.raises(DomainError):
            extract_all(linear, cryo_sat_77)

    def test_partial_report(self, cryo_nmos, geometry, cryo_sat_77):
        """One failed quantity does not drop the others."""
        short = iv_sweep_synthesize(cryo_nmos, geometry, 0.05, 77.0, [0.1, 0.3, 0.5, 0.7])
        report = extract_all(short, cryo_sat_77)
        assert "vth_y" in report.errors
        assert report.vth_y is None
        assert report.vth_cc is not None

    def test_single_linear_sweep(self, cryo_lin_77):
        """Test extraction from a linear sweep alone."""
        report = extract_sweep(cryo_lin_77, device_id="lin")
        assert report.device_id == "lin"
        assert report.vth_y is not None
        assert report.ss_mv_dec is None

    def test_batch_order(self, cryo_lin_77, cryo_sat_77):
        """Test batch ordering by device id."""
        reports = extract_many([("b", cryo_sat_77), ("a", cryo_lin_77), ("c", cryo_sat_77)], max_workers=3)
        assert [r.device_id for r in reports] == ["a", "b", "c"]
        assert reports[1] == reports[2].model_copy(update={"device_id": "b"})
