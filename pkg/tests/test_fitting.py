import numpy as np
import pytest
from pydantic import ValidationError

from app.core.error_handlers import InfeasibleAnchorsError, MissingParameterSetError
from app.schemas.fitting import Anchor, AnchorKind, Comparison, FitProblem
from app.services.compact_model_service import iv_sweep_synthesize
from app.services.fitting_service import (DEFAULT_BOUNDS, ParamCodec, anchor_met,
                                          anchor_penalty, calibrate,
                                          calibrate_reference_sets, evaluate_anchors,
                                          measured_anchor_table, objective)

from tests.conftest import LINEAR_GRID, WIDE_GRID


@pytest.fixture(scope="module")
def corpus(cryo_nmos, geometry):
    return [
        iv_sweep_synthesize(cryo_nmos, geometry, vds, t_k, LINEAR_GRID, device_id="cryo")
        for t_k in (77.0, 298.0)
        for vds in (0.05, 0.9)
    ]


def _noisy(sweeps, sigma, seed):
    rng = np.random.default_rng(seed)
    noisy = []
    for s in sweeps:
        factor = 1.0 + rng.normal(0.0, sigma, len(s))
        noisy.append(s.model_copy(update={"i_ds": tuple(float(i * f) for i, f in zip(s.i_ds, factor))}))
    return noisy


def _problem(sweeps, truth, **overrides):
    initial = truth.model_copy(update={"vth0": truth.vth0 + 0.03, "mu0": truth.mu0 * 1.15})
    fields = dict(
        sweeps=sweeps,
        initial=initial,
        free=["vth0", "mu0"],
        bounds={"vth0": DEFAULT_BOUNDS["vth0"], "mu0": DEFAULT_BOUNDS["mu0"]},
        max_iterations=400,
        restarts=2,
    )
    fields.update(overrides)
    return FitProblem(**fields)


class TestObjective:
    def test_generator_scores_zero(self, cryo_nmos, corpus):
        """Test the objective on the generating parameters."""
        assert objective(cryo_nmos, corpus).mean_rel_error < 1e-12

    def test_doubled_data(self, cryo_nmos, geometry):
        """Doubled data scores a relative error of one half."""
        sweep = iv_sweep_synthesize(cryo_nmos, geometry, 0.9, 298.0, LINEAR_GRID)
        doubled = sweep.model_copy(update={"i_ds": tuple(2.0 * i for i in sweep.i_ds)})
        assert objective(cryo_nmos, [doubled]).mean_rel_error == pytest.approx(0.5, rel=1e-9)

    def test_sweep_order_does_not_matter(self, simple_params, corpus):
        """Test objective invariance to sweep order."""
        forward = objective(simple_params, corpus).mean_rel_error
        backward = objective(simple_params, list(reversed(corpus))).mean_rel_error
        assert forward == pytest.approx(backward, rel=1e-12)

    def test_per_sweep_breakdown(self, simple_params, corpus):
        """Test the per-sweep breakdown."""
        breakdown = objective(simple_params, corpus)
        assert [row.index for row in breakdown.per_sweep] == [0, 1, 2, 3]
        assert sorted(breakdown.per_temperature()) == [77.0, 298.0]


class TestParamCodec:
    def test_encode_decode(self, cryo_nmos):
        """Test log encoding of positive parameters."""
        codec = ParamCodec(cryo_nmos, ["vth0", "c_vth"], {"vth0": (0.01, 0.6), "c_vth": (-0.002, 0.002)})
        assert codec.log_mask.tolist() == [True, False]
        decoded = codec.decode(codec.encode(cryo_nmos))
        assert decoded.vth0 == pytest.approx(cryo_nmos.vth0, rel=1e-12)
        assert decoded.c_vth == cryo_nmos.c_vth

    def test_decode_clips_to_bounds(self, cryo_nmos):
        """Test clipping on decode."""
        codec = ParamCodec(cryo_nmos, ["c_vth"], {"c_vth": (-0.002, 0.002)})
        assert codec.decode(np.array([1.0])).c_vth == 0.002


class TestFitProblem:
    def test_unknown_free_parameter(self, simple_params, corpus):
        """Test a free name that is not a float parameter."""
        with pytest.raises(ValidationError):
            FitProblem(sweeps=corpus, initial=simple_params, free=["polarity"],
                       bounds={"polarity": (0.0, 1.0)})

    def test_missing_bounds(self, simple_params, corpus):
        """Free parameters need bounds."""
        with pytest.raises(ValidationError):
            FitProblem(sweeps=corpus, initial=simple_params, free=["vth0"])

    def test_initial_outside_bounds(self, simple_params, corpus):
        """Test an initial value outside its bounds."""
        with pytest.raises(ValidationError):
            FitProblem(sweeps=corpus, initial=simple_params, free=["vth0"], bounds={"vth0": (0.4, 0.6)})


class TestCalibrate:
    def test_no_free_parameters(self, simple_params, corpus):
        """Test calibration with no free parameters."""
        result = calibrate(FitProblem(sweeps=corpus, initial=simple_params), seed=1)
        assert result.params == simple_params
        assert result.iterations == 0
        assert result.converged

    def test_zero_noise_round_trip(self, cryo_nmos, corpus):
        """Test recovery from noiseless data."""
        result = calibrate(_problem(corpus, cryo_nmos), seed=42)
        assert result.mean_rel_error < 0.005
        assert result.params.vth0 == pytest.approx(cryo_nmos.vth0, abs=0.002)
        assert result.params.mu0 == pytest.approx(cryo_nmos.mu0, rel=0.01)

    def test_six_parameter_recovery(self, cryo_nmos, geometry):
        """Six free parameters started 30% off come back within 5% on a five-temperature corpus."""
        sweeps = [
            iv_sweep_synthesize(cryo_nmos, geometry, vds, t_k, WIDE_GRID, device_id="cryo")
            for t_k in (10.0, 77.0, 150.0, 220.0, 298.0)
            for vds in (0.05, 0.9)
        ]
        scale = {"vth0": 1.3, "mu0": 0.7, "alpha_ph": 1.3, "n0": 0.7, "ss_floor": 1.3, "v_sat": 0.7}
        initial = cryo_nmos.model_copy(update={k: getattr(cryo_nmos, k) * f for k, f in scale.items()})
        problem = FitProblem(
            sweeps=sweeps,
            initial=initial,
            free=list(scale),
            bounds={k: DEFAULT_BOUNDS[k] for k in scale},
        )
        result = calibrate(problem, seed=42)
        assert result.mean_rel_error < 0.005
        for name in scale:
            assert getattr(result.params, name) == pytest.approx(getattr(cryo_nmos, name), rel=0.05)

    def test_noisy_round_trip(self, cryo_nmos, corpus):
        """Test the error threshold on noisy data."""
        result = calibrate(_problem(_noisy(corpus, 0.02, seed=3), cryo_nmos), seed=42)
        assert result.mean_rel_error < 0.06

    def test_trace_never_increases(self, cryo_nmos, corpus):
        """The best-so-far trace is non-increasing."""
        result = calibrate(_problem(corpus, cryo_nmos), seed=5)
        trace = np.asarray(result.trace)
        assert trace.size >= 2
        assert np.all(np.diff(trace) <= 0.0)

    def test_result_respects_bounds(self, cryo_nmos, corpus):
        """Test that results stay within bounds."""
        bounds = {"vth0": (0.12, 0.2), "mu0": (250.0, 400.0)}
        initial = cryo_nmos.model_copy(update={"vth0": 0.15, "mu0": 300.0})
        result = calibrate(_problem(corpus, cryo_nmos, initial=initial, bounds=bounds), seed=7)
        for name, (lo, hi) in bounds.items():
            value = getattr(result.params, name)
            assert lo * (1 - 1e-9) <= value <= hi * (1 + 1e-9)

    def test_same_seed_same_result(self, cryo_nmos, corpus):
        """Test seeded reproducibility."""
        noisy = _noisy(corpus, 0.02, seed=11)
        first = calibrate(_problem(noisy, cryo_nmos, polish=False), seed=99)
        second = calibrate(_problem(noisy, cryo_nmos, polish=False), seed=99)
        assert first.params == second.params
        assert first.trace == second.trace


class TestAnchors:
    def test_comparisons(self):
        """Test the three anchor comparisons."""
        within = Anchor(set_name="x", kind=AnchorKind.SS, t_k=10, target=18.0, tolerance=2.0)
        at_least = within.model_copy(update={"comparison": Comparison.AT_LEAST})
        at_most = within.model_copy(update={"comparison": Comparison.AT_MOST})
        assert anchor_met(within, 19.5) and not anchor_met(within, 20.5)
        assert anchor_met(at_least, 18.0) and not anchor_met(at_least, 17.9)
        assert anchor_met(at_most, 18.0) and not anchor_met(at_most, 18.1)

    def test_penalty_zero_near_target(self):
        """Test the anchor penalty shape."""
        anchor = Anchor(set_name="x", kind=AnchorKind.SS, t_k=10, target=18.0, tolerance=2.0)
        assert anchor_penalty(anchor, 18.5) == 0.0
        assert anchor_penalty(anchor, 24.0) > anchor_penalty(anchor, 21.0) > 0.0

    def test_reference_library_meets_measured_anchors(self, library):
        """Test the shipped library against the measured anchors."""
        table = measured_anchor_table()
        for name in {a.set_name for a in table}:
            anchors = [a for a in table if a.set_name == name]
            outcomes = evaluate_anchors(anchors, library.sets[name], library.geometry)
            assert all(o.met for o in outcomes), [o.anchor.label for o in outcomes if not o.met]

    def test_calibration_restores_threshold(self, library, cryo_nmos):
        """Calibration pulls a shifted threshold back onto its anchor."""
        shifted = library.model_copy(update={
            "sets": {**library.sets, "CryoNMOS-ref": cryo_nmos.model_copy(update={"vth0": 0.16})}
        })
        anchor = Anchor(set_name="CryoNMOS-ref", kind=AnchorKind.VTH_CC, t_k=77, v_dd=0.9,
                        target=0.109, tolerance=0.015)
        report = calibrate_reference_sets([anchor], shifted, seed=1, max_iterations=200)
        assert not report.unmet
        assert report.params["RVT-NMOS-ref"] == library.sets["RVT-NMOS-ref"]

    def test_contradictory_anchor_is_reported(self, library):
        """Test an unreachable anchor."""
        anchor = Anchor(set_name="CryoNMOS-ref", kind=AnchorKind.SS, t_k=10, target=1.0, tolerance=0.1)
        with pytest.raises(InfeasibleAnchorsError) as exc:
            calibrate_reference_sets([anchor], library, seed=1, max_iterations=100)
        assert any("ss@10K" in label for label in exc.value.unmet)
        assert exc.value.best is not None

    def test_unknown_set(self, library):
        """Test an anchor on a missing set."""
        anchor = Anchor(set_name="NoSuch-ref", kind=AnchorKind.SS, t_k=10, target=18.0, tolerance=2.0)
        with pytest.raises(MissingParameterSetError):
            calibrate_reference_sets([anchor], library, seed=1)
