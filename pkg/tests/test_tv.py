import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gemlab import tomography
from gemlab.tv import (
    FIBER_RECORD,
    THIS_WORK_RECORD,
    DecayModelRef,
    DetectionBudget,
    FiberReference,
    MemoryRecord,
    QuadratureTV,
    RecordError,
    TVError,
    TVPoint,
    apply_detection_loss,
    boundary_curves,
    classical_limit,
    compare,
    correct_detection,
    fiber_reference,
    in_no_cloning_region,
    linear_loss,
    load_memory_records,
    loss_channel,
    measure_prepare_channel,
    plot_data_rows,
    report_json,
    tv_from_ensembles,
    write_plot_data,
)

ALPHA = 2 + 1j


def _tv(out_state, m=40000, seed=0, resamples=100, in_state=None):
    state = in_state or tomography.coherent_state(ALPHA)
    ens_in = tomography.sample_heterodyne(state, m, [seed, 1])
    ens_out = tomography.sample_heterodyne(out_state, m, [seed, 2])
    return tv_from_ensembles(ens_in, ens_out, resamples=resamples, seed=seed)


def _within(point, T, V, k=4.0):
    assert abs(point.T - T) < k * point.err_T, (point.T, T, point.err_T)
    assert abs(point.V - V) < k * point.err_V + 1e-12, (point.V, V, point.err_V)


class TestEstimator:
    def test_identity_channel(self):
        coh = tomography.coherent_state(ALPHA)
        ens = tomography.sample_heterodyne(coh, 5000, 1)
        p = tv_from_ensembles(ens, ens, resamples=50)
        assert p.T == pytest.approx(2.0, abs=1e-12)
        assert p.V == pytest.approx(0.0, abs=1e-12)

    def test_half_loss(self):
        coh = tomography.coherent_state(ALPHA)
        _within(_tv(loss_channel(coh, 0.5)), 1.0, 0.5)

    def test_measure_and_recreate_at_unity_gain(self):
        coh = tomography.coherent_state(ALPHA)
        _within(_tv(measure_prepare_channel(coh, 1.0)), 2 / 3, 2.0)

    def test_random_losses_land_on_linear_loss_curve(self):
        rng = np.random.default_rng(20)
        coh = tomography.coherent_state(ALPHA)
        hits = 0
        for k, eta in enumerate(rng.uniform(0.05, 0.95, 20)):
            p = _tv(loss_channel(coh, eta), m=20000, seed=k)
            T, V = linear_loss(eta)
            hits += abs(p.T - T) < 3 * p.err_T and abs(p.V - V) < 3 * p.err_V
        assert hits >= 19

    def test_bootstrap_error_tracks_spread(self):
        coh = tomography.coherent_state(ALPHA)
        out = loss_channel(coh, 0.5)
        pts = [_tv(out, m=5000, seed=s, resamples=200) for s in range(30)]
        spread = np.std([p.T for p in pts], ddof=1)
        mean_err = np.mean([p.err_T for p in pts])
        assert 0.7 < mean_err / spread < 1.4

    def test_zero_displacement_rejected(self):
        vac = tomography.sample_heterodyne(tomography.VACUUM, 500, 0)
        with pytest.raises(TVError, match="displacement"):
            tv_from_ensembles(vac, vac)

    def test_too_few_samples(self):
        ens = tomography.sample_heterodyne(tomography.coherent_state(ALPHA), 50, 0)
        with pytest.raises(TVError):
            tv_from_ensembles(ens, ens)

    def test_sub_vacuum_heterodyne_variance_rejected(self):
        s = np.random.default_rng(0).normal(3.0, 0.3, (1000, 2))
        ens = tomography.QuadratureEnsemble(s)
        with pytest.raises(TVError, match="unphysical"):
            tv_from_ensembles(ens, ens, resamples=10)

    def test_to_dict(self):
        q = QuadratureTV(0.5, 1.0, 1.0)
        d = TVPoint.from_quadratures(q, q, provenance={"x": 1}).to_dict()
        assert d["T"] == pytest.approx(1.0) and d["V"] == pytest.approx(0.5)
        assert d["provenance"] == {"x": 1} and len(d["quadratures"]) == 2


class TestDetection:
    def test_budget_is_product(self):
        b = DetectionBudget(0.9, 0.8, 0.5, 0.85, 0.95)
        assert b.total_eta == pytest.approx(0.9 * 0.8 * 0.5 * 0.85 * 0.95, abs=1e-12)
        with pytest.raises(TVError):
            DetectionBudget(detector_qe=0.0)
        with pytest.raises(TVError):
            DetectionBudget(heterodyne_penalty=1.2)

    def test_unit_efficiency_is_identity(self):
        p = TVPoint.from_quadratures(QuadratureTV(0.4, 1.0, 1.3), QuadratureTV(0.45, 1.0, 1.25),
                                     err_T=0.01, err_V=0.02)
        c = correct_detection(p, 1.0)
        assert (c.T, c.V, c.err_T, c.err_V) == pytest.approx((p.T, p.V, p.err_T, p.err_V), abs=1e-15)

    @given(eta=st.floats(0.05, 1.0), loss=st.floats(0.05, 0.95), gain=st.floats(0.2, 1.5))
    @settings(max_examples=60, deadline=None)
    def test_loss_then_correct_round_trips(self, eta, loss, gain):
        coh = tomography.coherent_state(ALPHA)
        for out in (loss_channel(coh, loss), measure_prepare_channel(coh, gain)):
            v_out = 2 * out.covariance[0, 0]
            g2 = (out.mean[0] / coh.mean[0]) ** 2
            q = QuadratureTV(g2, 1.0, v_out)
            p = TVPoint.from_quadratures(q, q)
            back = correct_detection(apply_detection_loss(p, eta), eta)
            assert back.T == pytest.approx(p.T, abs=1e-9)
            assert back.V == pytest.approx(p.V, abs=1e-9)

    def test_correction_lowers_T_raises_V(self):
        coh = tomography.coherent_state(ALPHA)
        out = measure_prepare_channel(coh, 1.0)
        raw = _tv(loss_channel(out, 0.24), in_state=loss_channel(coh, 0.24))
        cor = correct_detection(raw, DetectionBudget.from_total(0.24))
        assert cor.T < raw.T and cor.V > raw.V
        assert cor.err_V == pytest.approx(raw.err_V / 0.24)
        _within(cor, 2 / 3, 2.0)

    @pytest.mark.parametrize("eta", [0.17, 0.24])
    def test_reported_budgets_recorded(self, eta):
        coh = tomography.coherent_state(ALPHA)
        raw = _tv(loss_channel(loss_channel(coh, 0.7), eta), in_state=loss_channel(coh, eta))
        cor = correct_detection(raw, DetectionBudget.from_total(eta))
        assert cor.provenance["detection"] == [{"eta": eta, "direction": "correction"}]
        _within(cor, 1.4, 0.3)

    def test_unphysical_correction_raises(self):
        # raw V_q = -0.1 is only reachable through noise; correcting amplifies it
        q = QuadratureTV(0.9, 1.0, 0.8)
        with pytest.raises(TVError, match="unphysical"):
            correct_detection(TVPoint(1.0, 0.0, quadratures=(q, q)), 0.5)

    def test_symmetric_fallback_without_quadratures(self):
        full = TVPoint.from_quadratures(QuadratureTV(0.3, 1.0, 1.2), QuadratureTV(0.3, 1.0, 1.2))
        bare = TVPoint(full.T, full.V)
        a, b = correct_detection(full, 0.4), correct_detection(bare, 0.4)
        assert (a.T, a.V) == pytest.approx((b.T, b.V), abs=1e-12)


class TestCurves:
    def test_endpoints(self):
        assert classical_limit(0.0) == pytest.approx((0.0, 1.0))
        assert linear_loss(1.0) == pytest.approx((2.0, 0.0))
        assert linear_loss(0.5) == pytest.approx((1.0, 0.5))

    def test_classical_above_linear_loss(self):
        g = np.geomspace(1e-3, 1e3, 2000)
        T, V = classical_limit(g)
        assert np.all(T < 1) and np.all(V >= 1)
        assert np.all(V > 1 - T / 2)

    def test_boundary_curves_dict(self):
        c = boundary_curves(np.linspace(0, 2, 21))
        ct, cv = c["classical"]
        assert ct.max() < 1 and cv.min() == pytest.approx(1.0)
        np.testing.assert_allclose(classical_limit(np.sqrt(ct / (2 * (1 - ct))))[1], cv)
        lt, lv = c["linear_loss"]
        np.testing.assert_allclose(lv, 1 - lt / 2)
        assert c["no_cloning"] == {"T_min": 1.0, "V_max": 1.0, "strict": True}

    def test_no_cloning_region(self):
        assert in_no_cloning_region(TVPoint(1.2, 0.4))
        assert not in_no_cloning_region(TVPoint(1.0, 0.5))
        assert not in_no_cloning_region(TVPoint(1.5, 1.0))

    def test_negative_T_rejected(self):
        with pytest.raises(TVError):
            TVPoint(-0.1, 0.5)


class TestFiber:
    def test_zero_time(self):
        eta, p = fiber_reference(0.0)
        assert eta == 1.0 and (p.T, p.V) == (2.0, 0.0)

    def test_hundred_microseconds_is_half(self):
        eta, p = fiber_reference(100e-6)
        assert eta == pytest.approx(0.5, abs=0.02)
        assert (p.T, p.V) == pytest.approx(linear_loss(eta))

    def test_thirty_three_microseconds(self):
        ref = FiberReference()
        assert ref.length_km(33e-6) == pytest.approx(6.74, abs=0.01)
        assert fiber_reference(33e-6)[0] == pytest.approx(10 ** (-0.15 * 6.74 / 10), abs=2e-3)

    def test_log_linear_and_monotone(self):
        t = np.linspace(0, 1e-3, 101)
        eta = FiberReference().transmission(t)
        assert np.all(np.diff(eta) < 0)
        np.testing.assert_allclose(np.diff(np.log(eta), 2), 0, atol=1e-13)

    def test_time_at_inverts(self):
        ref = FiberReference()
        for e in (0.9, 0.5, 0.01):
            assert ref.transmission(ref.time_at(e)) == pytest.approx(e)
        assert FiberReference(0.0).time_at(0.5) == np.inf

    def test_invalid(self):
        with pytest.raises(ValueError):
            FiberReference().transmission(-1.0)
        with pytest.raises(ValueError):
            FiberReference(group_index=0.9)


CSV_HEADER = "label,platform,protocol,universal,max_efficiency,curve_ref\n"


class TestRecords:
    def test_empty_file(self, tmp_path):
        f = tmp_path / "r.csv"
        f.write_text("")
        recs = load_memory_records(f)
        assert recs == []
        assert compare(recs)["records"] == []

    def test_malformed_rows_named(self):
        text = CSV_HEADER + (
            "ok,cold-atom,GEM,true,0.5,model:exponential:E0=0.5;tau=1e-3\n"
            "bad,plasma,GEM,true,0.5,model:exponential:E0=0.5;tau=1e-3\n"
            "worse,cold-atom,GEM,maybe,1.5,model:exponential:E0=0.5\n"
        )
        with pytest.raises(RecordError) as ei:
            load_memory_records(io.StringIO(text))
        diag = ei.value.diagnostics
        assert len(diag) == 2
        assert diag[0].startswith("line 3:") and "plasma" in diag[0]
        assert diag[1].startswith("line 4:")

    def test_missing_column(self):
        with pytest.raises(RecordError, match="header"):
            load_memory_records(io.StringIO("label,platform\nx,fiber\n"))

    def test_side_car_curve(self, tmp_path):
        (tmp_path / "c.csv").write_text("t_s,efficiency\n0,0.6\n1e-3,0.4\n2e-3,0.1\n")
        (tmp_path / "r.csv").write_text(CSV_HEADER + "lab 2020,warm-vapour,EIT,false,0.6,c.csv\n")
        (rec,) = load_memory_records(tmp_path / "r.csv")
        assert rec.universal is False and rec.horizon() == 2e-3
        assert rec.efficiency(0.5e-3) == pytest.approx(0.5)
        assert np.isnan(rec.efficiency(3e-3))
        row = compare([rec])["records"][0]
        assert row["t50_s"] == pytest.approx(0.5e-3, rel=1e-9)
        assert row["one_over_e_time_s"] == pytest.approx(1e-3 + (0.4 - 0.6 / np.e) / 0.3 * 1e-3)

    def test_curve_validation(self):
        with pytest.raises(ValueError):
            MemoryRecord("x", "other", "other", 0.5, decay_curve=[[0, 0.5], [0, 0.4]])
        with pytest.raises(ValueError):
            MemoryRecord("x", "other", "other", 0.5, decay_curve=[[0, 1.5], [1, 0.4]])
        with pytest.raises(ValueError):
            MemoryRecord("x", "other", "other", 0.5)

    def test_fiber_self_comparison(self):
        row = compare([FIBER_RECORD])["records"][0]
        assert row["max_advantage"] == pytest.approx(0.0, abs=1e-15)
        assert row["crosses_fiber_at_s"] is None
        assert row["t50_ratio_to_fiber"] == pytest.approx(1.0)
        assert row["above_50_beyond_fiber_t50"] is False

    def test_this_work_beats_fiber(self):
        rep = compare([THIS_WORK_RECORD])
        row = rep["records"][0]
        assert rep["fiber"]["t50_s"] == pytest.approx(100e-6, rel=0.03)
        assert 0.6e-3 <= row["t50_s"] <= 0.72e-3
        assert row["t50_ratio_to_fiber"] >= 6
        assert row["above_50_beyond_fiber_t50"] is True
        assert row["crosses_fiber_at_s"] is not None

    def test_report_is_byte_identical(self):
        a = report_json(compare([THIS_WORK_RECORD, FIBER_RECORD]))
        b = report_json(compare([THIS_WORK_RECORD, FIBER_RECORD]))
        assert a == b
        json.loads(a)

    def test_plot_data(self, tmp_path):
        rows = plot_data_rows([THIS_WORK_RECORD], points=50)
        assert {r[0] for r in rows} == {"fiber", THIS_WORK_RECORD.label}
        write_plot_data(tmp_path / "p.csv", rows)
        assert (tmp_path / "p.csv").read_text().splitlines()[0] == "series,t_s,efficiency"

    def test_model_ref_round_trip(self):
        ref = DecayModelRef("thermal", {"E0": 0.87, "tau_l": 1.24e-3, "tau_d": 0.071})
        assert DecayModelRef.parse(ref.to_ref()) == ref
        with pytest.raises(ValueError):
            DecayModelRef.parse("model:thermal:E0=1;tau=2")
        with pytest.raises(ValueError):
            DecayModelRef.parse("thermal:E0=1")
