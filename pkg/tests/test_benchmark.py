import csv
import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chirpcal.benchmark import FitScenario, compare_learning_speed, standard_scenario, summarize_residuals
from chirpcal.calibration import AmplifierMeasurement, derive_factors, run_calibration
from chirpcal.chirp import ChirpParams
from chirpcal.errors import BenchmarkError, ParameterError
from chirpcal.netsim import PathModel, default_network, thermal_sweep
from chirpcal.optimizer import OptimizerConfig, fit

PARAMS = ChirpParams()


def transparent(snr_db=None):
    return FitScenario("P3-transparent", PARAMS, PathModel("P3"), 20.0, snr_db)


def record(element, temp, gain, phase_deg, ref_gain=30.0, ref_phase_deg=0.0):
    return derive_factors(AmplifierMeasurement(element, temp, gain, math.radians(phase_deg)),
                          AmplifierMeasurement(element, 20.0, ref_gain, math.radians(ref_phase_deg)))


class TestLearningSpeed:
    def test_truth_init_converges_immediately(self):
        report = compare_learning_speed(transparent(), seeds=[0, 1])
        for stats in report.stats.values():
            assert stats.max <= 1
            assert stats.non_converged == 0

    def test_deterministic(self):
        scenario = standard_scenario(snr_db=None)
        cfg = OptimizerConfig(max_epochs=2000)
        a = compare_learning_speed(scenario, seeds=[0], config=cfg)
        b = compare_learning_speed(scenario, seeds=[0], config=cfg)
        assert a.to_dict() == b.to_dict()
        assert a.curves == b.curves

    def test_converged_epoch_matches_fit(self):
        scenario = standard_scenario()
        cfg = OptimizerConfig(max_epochs=1500)
        report = compare_learning_speed(scenario, seeds=[3], config=cfg)
        capture = scenario.capture(3)
        from chirpcal.calibration import estimate_delay
        from chirpcal.chirp import generate_chirp
        delay = estimate_delay(capture.pulse, generate_chirp(PARAMS.unit()))
        for run in report.runs:
            direct = fit(capture.pulse, PARAMS, config=OptimizerConfig(algorithm=run.algorithm, max_epochs=1500),
                         delay=delay)
            assert run.converged_epoch == direct.converged_epoch
            assert report.curves[(run.algorithm, 3)] == direct.error_history

    def test_single_algorithm(self):
        report = compare_learning_speed(transparent(), algorithms=["adam"], seeds=[0])
        assert list(report.stats) == ["adam"]
        assert "adam_faster_than_momentum" not in report.to_dict()

    def test_all_diverged(self):
        cfg = OptimizerConfig(stepsize=10.0, momentum=0.0)
        with pytest.raises(BenchmarkError, match="momentum"):
            compare_learning_speed(standard_scenario(), algorithms=["momentum"], seeds=[0], config=cfg)

    def test_bad_inputs(self):
        with pytest.raises(ParameterError):
            compare_learning_speed(transparent(), seeds=[])
        with pytest.raises(ValueError):
            compare_learning_speed(transparent(), algorithms=["sgd"], seeds=[0])

    def test_exports(self, tmp_path):
        report = compare_learning_speed(standard_scenario(), seeds=[0, 1], config=OptimizerConfig(max_epochs=300))
        report.write_json(tmp_path / "r.json")
        doc = json.loads((tmp_path / "r.json").read_text())
        assert set(doc["stats"]) == {"adam", "momentum"}
        assert isinstance(doc["adam_faster_than_momentum"], bool)
        report.write_curves_csv(tmp_path / "c.csv", stride=100)
        rows = list(csv.DictReader(open(tmp_path / "c.csv")))
        assert set(rows[0]) == {"algorithm", "seed", "epoch", "E"}
        epochs = [int(r["epoch"]) for r in rows if r["algorithm"] == "adam" and r["seed"] == "0"]
        assert epochs == [0, 100, 200, 300]


class TestResiduals:
    def test_all_at_reference(self):
        recs = [record("HPA", 20.0, 30.0, 0.0), record("LNA", 20.0, 30.0, 0.0)]
        for row in summarize_residuals(recs).rows:
            assert (row.uncomp_gain_db, row.uncomp_phase_deg, row.comp_gain_db, row.comp_phase_deg) == (0, 0, 0, 0)

    def test_empty(self):
        with pytest.raises(ParameterError):
            summarize_residuals([])

    def test_uncomp_maxima_and_circular_phase(self):
        recs = [record("HPA", 20.0, 30.0, 179.0, ref_phase_deg=179.0),
                record("HPA", 21.0, 30.2, -179.0, ref_phase_deg=179.0),
                record("HPA", 22.0, 29.7, 178.0, ref_phase_deg=179.0)]
        summary = summarize_residuals(recs)
        assert summary.comp_basis == "measured"
        row = summary.row("HPA")
        assert row.uncomp_gain_db == pytest.approx(0.3)
        assert row.uncomp_phase_deg == pytest.approx(2.0)
        assert row.comp_gain_db == pytest.approx(0.0, abs=1e-12)
        with pytest.raises(KeyError):
            summary.row("LNA")

    @given(st.lists(st.tuples(st.sampled_from(["HPA", "LNA"]), st.floats(20, 25), st.floats(25, 35),
                              st.floats(-180, 180)), min_size=2, max_size=12), st.randoms())
    @settings(max_examples=50)
    def test_permutation_invariant_and_monotone(self, specs, rnd):
        recs = [record(*s) for s in specs]
        base = summarize_residuals(recs)
        shuffled = list(recs)
        rnd.shuffle(shuffled)
        assert summarize_residuals(shuffled) == base
        more = summarize_residuals(recs + [record("HPA", 24.0, 31.0, 90.0)])
        for row in base.rows:
            bigger = more.row(row.element)
            for name in ("uncomp_gain_db", "uncomp_phase_deg", "comp_gain_db", "comp_phase_deg"):
                assert getattr(bigger, name) >= getattr(row, name)

    def test_noiseless_default_matches_configured_drift(self):
        net = default_network()
        records = run_calibration(thermal_sweep(PARAMS, net), PARAMS, t_ref=20.0, offsets=net.offset_table())
        summary = summarize_residuals(records)
        assert summary.comp_basis == "truth"
        hpa, lna = summary.row("HPA"), summary.row("LNA")
        assert hpa.uncomp_gain_db == pytest.approx(0.43, abs=0.01)
        assert hpa.uncomp_phase_deg == pytest.approx(31.73, abs=0.1)
        assert lna.uncomp_gain_db == pytest.approx(0.49, abs=0.01)
        assert lna.uncomp_phase_deg == pytest.approx(12.60, abs=0.1)

    def test_table_and_csv(self, tmp_path):
        recs = [record("HPA", 21.0, 30.43, -31.73), record("LNA", 21.0, 29.51, 12.6)]
        summary = summarize_residuals(recs)
        text = summary.table()
        assert "Uncomp" in text and "Comp" in text and "0.4300" in text
        summary.write_csv(tmp_path / "res.csv")
        rows = list(csv.reader(open(tmp_path / "res.csv")))
        assert rows[0] == ["row", "HPA_gain_dB", "HPA_phase_deg", "LNA_gain_dB", "LNA_phase_deg"]
        assert float(rows[1][3]) == pytest.approx(0.49)
        assert float(rows[1][2]) == pytest.approx(31.73)
