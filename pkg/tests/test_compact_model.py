import math

import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings
from hypothesis import strategies as st

from app.core.error_handlers import DomainError
from app.schemas.device import BiasPoint, DeviceGeometry, Polarity
from app.services.compact_model_service import (drain_current, drain_current_grid,
                                                idsat_vs_overdrive, iv_sweep_synthesize,
                                                leakage_density, mobility, on_off_ratio,
                                                output_family, params_fingerprint,
                                                present_signed, slope_voltage, ss_of_t,
                                                transconductance, vth_of_t)

LN10 = math.log(10.0)


class TestMobility:
    def test_pure_phonon_power_law(self, simple_params):
        """Test the phonon-limited power law."""
        params = simple_params.model_copy(update={"mu_c": 1e30, "alpha_ph": 1.0})
        assert mobility(params, 149.0) == pytest.approx(2.0 * params.mu0, rel=1e-9)

    def test_plateau_flattening(self, simple_params):
        """Mobility flattens at low temperature."""
        params = simple_params.model_copy(update={"alpha_ph": 1.5, "mu_c": 2.0 * simple_params.mu0})
        low = (mobility(params, 10.0) - mobility(params, 40.0)) / mobility(params, 10.0)
        mid = (mobility(params, 150.0) - mobility(params, 180.0)) / mobility(params, 165.0)
        assert low == pytest.approx(0.078, abs=0.002)
        assert mid == pytest.approx(0.123, abs=0.002)
        assert 0 < low < mid

    def test_bounded_by_coulomb_limit(self, simple_params):
        """Test the Coulomb bound."""
        temps = np.linspace(4.0, 400.0, 50)
        assert np.all(mobility(simple_params, temps) < simple_params.mu_c)

    def test_increases_as_temperature_drops(self, cryo_nmos):
        """Test mobility versus temperature."""
        temps = np.linspace(10.0, 298.0, 30)
        mu = mobility(cryo_nmos, temps)
        assert np.all(np.diff(mu) < 0)


class TestThresholdAndSwing:
    def test_reference_threshold(self, cryo_nmos):
        """Test the threshold at the reference temperature."""
        assert vth_of_t(cryo_nmos, 298.0) == cryo_nmos.vth0

    def test_cryo_threshold_below_limit(self, cryo_nmos, cryo_pmos):
        """Test that cryo thresholds stay below 0.2 V."""
        temps = np.linspace(10.0, 298.0, 30)
        assert np.all(np.abs(vth_of_t(cryo_nmos, temps)) < 0.2)
        assert np.all(np.abs(vth_of_t(cryo_pmos, temps)) < 0.2)

    def test_ideal_swing(self, simple_params):
        """An ideal device swings 59 mV/dec at room temperature."""
        params = simple_params.model_copy(update={"n0": 1.0, "ss_floor": 0.0})
        assert ss_of_t(params, 298.0) == pytest.approx(59.1, abs=0.2)

    def test_cryo_swing_endpoints(self, cryo_nmos):
        """Test the cryo swing at 298 K and 10 K."""
        assert ss_of_t(cryo_nmos, 298.0) == pytest.approx(105.0, abs=5.0)
        assert ss_of_t(cryo_nmos, 10.0) == pytest.approx(18.0, abs=2.0)

    def test_swing_floor_and_monotonicity(self, cryo_nmos):
        """Test the swing floor."""
        temps = np.linspace(4.0, 400.0, 40)
        ss = ss_of_t(cryo_nmos, temps)
        assert np.all(ss >= cryo_nmos.ss_floor)
        assert np.all(np.diff(ss) > 0)


class TestLeakage:
    def test_reference_point(self, cryo_nmos):
        """Test leakage at the reference temperature."""
        assert leakage_density(cryo_nmos, 298.0) == cryo_nmos.i_off_ref

    def test_one_decade_per_eta(self, cryo_nmos):
        """Leakage drops one decade every eta kelvin."""
        value = leakage_density(cryo_nmos, 298.0 - cryo_nmos.eta)
        assert value == pytest.approx(cryo_nmos.i_off_ref / 10.0, rel=1e-12, abs=0)

    def test_cryo_on_off_at_low_supply(self, cryo_nmos, geometry):
        """Test the cryo on/off ratio at 0.6 V."""
        assert on_off_ratio(cryo_nmos, geometry, 0.6, 77.0) >= 1e7

    def test_on_off_argument_order(self, cryo_nmos, geometry):
        """Supply comes before temperature."""
        assert on_off_ratio(cryo_nmos, geometry, 0.6, 77.0) == on_off_ratio(cryo_nmos, geometry, v_dd=0.6, t_k=77.0)
        assert on_off_ratio(cryo_nmos, geometry, 0.6, 77.0) > on_off_ratio(cryo_nmos, geometry, 0.6, 298.0)

    def test_on_off_grows_with_supply(self, cryo_nmos, geometry):
        """Test on/off ratio versus supply."""
        ratios = [on_off_ratio(cryo_nmos, geometry, v, 77.0) for v in np.linspace(0.3, 0.9, 7)]
        assert all(b > a for a, b in zip(ratios, ratios[1:]))

    def test_on_off_better_when_cold(self, cryo_nmos, geometry):
        """Test on/off ratio versus temperature."""
        assert on_off_ratio(cryo_nmos, geometry, 0.6, 10.0) > on_off_ratio(cryo_nmos, geometry, 0.6, 298.0)


class TestDrainCurrent:
    def test_deep_subthreshold_is_leakage(self, simple_params, long_geometry):
        """Deep below threshold the current is the leakage floor."""
        params = simple_params.model_copy(update={"i_off_ref": 1e-8})
        n_ut = float(slope_voltage(params, 298.0))
        vgs = float(vth_of_t(params, 298.0)) - 10.0 * n_ut
        current = drain_current(params, long_geometry, BiasPoint(v_gs=vgs, v_ds=0.9, t_k=298.0))
        leak = long_geometry.w_um * leakage_density(params, 298.0)
        assert current == pytest.approx(leak, rel=0.01, abs=0)

    @pytest.mark.parametrize("t_k", [77.0, 298.0])
    def test_subthreshold_slope(self, simple_params, long_geometry, t_k):
        """Test the subthreshold slope against the swing."""
        n_ut = float(slope_voltage(simple_params, t_k))
        vth = float(vth_of_t(simple_params, t_k))
        lo, hi = vth - 8.0 * n_ut, vth - 4.0 * n_ut
        i = drain_current_grid(simple_params, long_geometry, [lo, hi], 0.9, t_k)
        decades = math.log10(i[1] / i[0])
        expected = (hi - lo) / (float(ss_of_t(simple_params, t_k)) / 1000.0)
        assert decades == pytest.approx(expected, rel=0.01)

    def test_cryo_drive_current(self, cryo_nmos, geometry):
        """Test the cryo drive current at 0.9 V and 77 K."""
        i_on = drain_current(cryo_nmos, geometry, BiasPoint(v_gs=0.9, v_ds=0.9, t_k=77.0))
        per_um_ma = i_on / geometry.w_um * 1e3
        assert per_um_ma >= 1.2
        assert per_um_ma == pytest.approx(1.6, rel=0.10)

    def test_cryo_drive_at_low_supply(self, cryo_nmos, geometry):
        """Test the cryo drive current at 0.6 V."""
        i_on = drain_current(cryo_nmos, geometry, BiasPoint(v_gs=0.6, v_ds=0.6, t_k=77.0))
        assert i_on / geometry.w_um * 1e3 >= 0.7

    @pytest.mark.parametrize("t_k", [10.0, 77.0, 150.0, 298.0])
    def test_monotone_in_both_biases(self, cryo_nmos, geometry, t_k):
        """Test monotonicity in V_GS and V_DS."""
        grid = np.linspace(-0.2, 0.9, 221)
        assert np.all(np.diff(drain_current_grid(cryo_nmos, geometry, grid, 0.9, t_k)) > 0)
        vds = np.linspace(0.0, 0.9, 181)
        assert np.all(np.diff(drain_current_grid(cryo_nmos, geometry, 0.6, vds, t_k)) >= 0)

    @pytest.mark.parametrize("v_gs", [0.6, 0.9])
    def test_smooth_saturation_transition(self, cryo_nmos, geometry, v_gs):
        """No kink at the saturation edge."""
        vds = np.linspace(0.0, 0.9, 2000)
        current = drain_current_grid(cryo_nmos, geometry, v_gs, vds, 77.0)
        slope = np.diff(current) / np.diff(vds)
        assert np.max(np.abs(np.diff(slope))) <= 0.01 * np.max(np.abs(slope))

    def test_width_scaling_is_exact(self, cryo_nmos, geometry):
        """Test width scaling."""
        wide = geometry.model_copy(update={"w_um": 2.0 * geometry.w_um})
        grid = np.linspace(-0.3, 0.9, 50)
        base = drain_current_grid(cryo_nmos, geometry, grid, 0.9, 77.0)
        assert np.allclose(drain_current_grid(cryo_nmos, wide, grid, 0.9, 77.0), 2.0 * base, rtol=1e-12, atol=0)

    def test_length_scaling_without_velocity_saturation(self, simple_params, long_geometry):
        """Current scales as 1/L without velocity saturation."""
        params = simple_params.model_copy(update={"v_sat": 1e30})
        short = long_geometry.model_copy(update={"l_um": 0.5})
        grid = np.linspace(0.5, 0.9, 5)
        i_long = drain_current_grid(params, long_geometry, grid, 0.05, 298.0)
        i_short = drain_current_grid(params, short, grid, 0.05, 298.0)
        assert np.allclose(i_short, 2.0 * i_long, rtol=1e-3)

    def test_velocity_saturated_linearity(self, simple_params, geometry):
        """Test linear I_DSAT in overdrive under velocity saturation."""
        params = simple_params.model_copy(update={"v_sat": 1e6, "mu_c": 1e4, "theta_mob": 0.0})
        curve = idsat_vs_overdrive(params, geometry, 77.0, 0.9, np.round(np.arange(0.3, 0.8 + 1e-9, 0.05), 6))
        assert curve.fit.r2 > 0.999
        assert curve.fit.slope > 0

    def test_pmos_symmetry(self, cryo_nmos, geometry):
        """Test that PMOS magnitudes match NMOS for equal parameters."""
        pmos = cryo_nmos.model_copy(update={"polarity": Polarity.PMOS})
        grid = np.linspace(0.0, 0.9, 31)
        assert np.array_equal(drain_current_grid(pmos, geometry, grid, 0.9, 77.0),
                              drain_current_grid(cryo_nmos, geometry, grid, 0.9, 77.0))

    def test_negative_drain_bias_rejected(self, cryo_nmos, geometry):
        """Test a negative drain bias."""
        with pytest.raises(DomainError):
            drain_current_grid(cryo_nmos, geometry, 0.5, -0.1, 77.0)

    def test_temperature_floor(self, cryo_nmos, geometry):
        """Test a temperature below 4 K."""
        with pytest.raises(DomainError):
            drain_current_grid(cryo_nmos, geometry, 0.5, 0.5, 2.0)

    @hyp_settings(max_examples=60, deadline=None)
    @given(
        v1=st.floats(min_value=-0.3, max_value=0.9),
        v2=st.floats(min_value=-0.3, max_value=0.9),
        vds=st.floats(min_value=0.0, max_value=0.9),
        t_k=st.sampled_from([10.0, 77.0, 150.0, 298.0]),
    )
    def test_gate_monotonicity_property(self, cryo_nmos, geometry, v1, v2, vds, t_k):
        """Current never decreases with gate bias."""
        lo, hi = min(v1, v2), max(v1, v2)
        i = drain_current_grid(cryo_nmos, geometry, [lo, hi], vds, t_k)
        assert i[0] <= i[1]


class TestTransconductance:
    def test_deep_subthreshold(self, simple_params, long_geometry):
        """Test gm = I*ln10/SS in weak inversion."""
        t_k = 298.0
        vgs = float(vth_of_t(simple_params, t_k)) - 10.0 * float(slope_voltage(simple_params, t_k))
        bias = BiasPoint(v_gs=vgs, v_ds=0.9, t_k=t_k)
        expected = drain_current(simple_params, long_geometry, bias) * LN10 / (float(ss_of_t(simple_params, t_k)) / 1000.0)
        assert transconductance(simple_params, long_geometry, bias) == pytest.approx(expected, rel=0.02)

    @pytest.mark.parametrize("v_gs", [0.05, 0.15, 0.3, 0.6, 0.85])
    def test_matches_independent_difference(self, cryo_nmos, geometry, v_gs):
        """Test gm against a central difference."""
        h = 1e-5
        i = drain_current_grid(cryo_nmos, geometry, [v_gs - h, v_gs + h], 0.9, 77.0)
        oracle = (i[1] - i[0]) / (2 * h)
        value = transconductance(cryo_nmos, geometry, BiasPoint(v_gs=v_gs, v_ds=0.9, t_k=77.0))
        assert value == pytest.approx(oracle, rel=1e-3)

    def _peak(self, params, geometry, t_k):
        grid = np.round(np.arange(0.0, 0.9 + 1e-9, 0.01), 6)
        gm = [transconductance(params, geometry, BiasPoint(v_gs=v, v_ds=0.9, t_k=t_k)) for v in grid]
        k = int(np.argmax(gm))
        return gm[k], grid[k]

    def test_cryo_peak_transconductance(self, cryo_nmos, geometry):
        """Test the cryo peak gm and its location."""
        gm, at = self._peak(cryo_nmos, geometry, 77.0)
        assert gm * 1e3 == pytest.approx(0.25, rel=0.15)
        assert 0.5 <= at <= 0.75

    def test_cold_transconductance_gain(self, cryo_nmos, geometry):
        """Test the peak gm gain from 298 K to 10 K."""
        assert self._peak(cryo_nmos, geometry, 10.0)[0] >= 1.25 * self._peak(cryo_nmos, geometry, 298.0)[0]


class TestSweepSynthesis:
    def test_single_point(self, cryo_nmos, geometry):
        """Test a one-point grid."""
        sweep = iv_sweep_synthesize(cryo_nmos, geometry, 0.05, 77.0, [0.4])
        assert len(sweep) == 1

    def test_increasing_currents(self, cryo_sat_77):
        """Test synthesized current ordering."""
        assert all(b > a for a, b in zip(cryo_sat_77.i_ds, cryo_sat_77.i_ds[1:]))

    def test_deterministic(self, cryo_nmos, geometry):
        """Synthesis is deterministic and tagged with the parameter fingerprint."""
        grid = np.linspace(0.0, 0.9, 91)
        a = iv_sweep_synthesize(cryo_nmos, geometry, 0.05, 77.0, grid)
        b = iv_sweep_synthesize(cryo_nmos, geometry, 0.05, 77.0, grid)
        assert a == b
        assert a.origin == f"synthetic:{params_fingerprint(cryo_nmos)}"

    def test_rejects_unordered_grid(self, cryo_nmos, geometry):
        """Test a descending grid."""
        with pytest.raises(DomainError):
            iv_sweep_synthesize(cryo_nmos, geometry, 0.05, 77.0, [0.2, 0.1])

    def test_output_family_shape(self, cryo_nmos, geometry):
        """Test output family keys and lengths."""
        family = output_family(cryo_nmos, geometry, 77.0, [0.3, 0.6, 0.9], np.linspace(0.0, 0.9, 10))
        assert list(family.curves) == ["0.3", "0.6", "0.9"]
        assert all(len(c) == 10 for c in family.curves.values())
        assert family.curves["0.9"][-1] > family.curves["0.3"][-1]

    def test_signed_presentation(self, cryo_pmos):
        """Test PMOS terminal signs."""
        assert present_signed(cryo_pmos, [0.1, 0.2]) == [-0.1, -0.2]
