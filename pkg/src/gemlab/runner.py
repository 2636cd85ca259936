"""Run a validated :class:`ExperimentConfig` and record what it wrote.

Randomness: the master seed feeds ``numpy.random.SeedSequence(seed)``, whose
children are handed out in a fixed order per kind:

* ``raman``, ``decay-fit``: ``[noise]``
* ``tomography``: ``[heterodyne]``
* ``tv``: ``[input, output, bootstrap]``
"""

from __future__ import annotations

import hashlib
import platform
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import pint
import scipy
import yaml

from . import __version__
from . import constants as C
from . import decay, gem, io, spectroscopy, tomography, tv
from .config import ConfigError, ExperimentConfig, canonical_json

DEFAULT_OUT = "gemlab-out"


class StageError(RuntimeError):
    """A pipeline stage failed; the message names the stage."""


@dataclass
class RunManifest:
    kind: str
    seed: Optional[int]
    config_hash: str
    artifacts: list = field(default_factory=list)
    versions: dict = field(default_factory=dict)
    stage_checksums: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    wall_time_s: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


class _Writer:
    """Writes artifacts into ``out_dir`` and remembers each one."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.names: list[str] = []

    def path(self, name: str) -> Path:
        self.names.append(name)
        return self.out_dir / name

    def entries(self) -> list[dict]:
        return [{"name": n, "sha256": io.sha256_file(self.out_dir / n),
                 "bytes": (self.out_dir / n).stat().st_size} for n in self.names]


def _seeds(seed: Optional[int], n: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n)


def _versions() -> dict:
    return {"gemlab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "pint": pint.__version__, "pyyaml": yaml.__version__,
            "python": platform.python_version()}


# --- per-kind pipelines ---------------------------------------------------------

def _ensemble(sec: dict) -> gem.EnsembleParams:
    e = sec["ensemble"]
    return gem.EnsembleParams(
        optical_depth=e["optical_depth"], length_L=e["length"],
        excited_linewidth_Gamma=e["linewidth"], ground_decoherence_gamma0=e["ground_decoherence"],
        raman_detuning_Delta=e["raman_detuning"], temperature_T=e["temperature"],
        probe_waist_w0=e["probe_waist"])


def _run_simulate(cfg: ExperimentConfig, w: _Writer, plotdata: bool) -> dict:
    s = cfg.sections
    params = _ensemble(s)
    sch, pulse, ctrl, rec = s["schedule"], s["pulse"], s["control"], s["recall"]
    if pulse["count"] > 1:
        train = dict(n=pulse["count"], fwhm=pulse["fwhm"], spacing=pulse["spacing"],
                     width_hz=sch["write_width"], rabi=ctrl["rabi_frequency"], dt=s["grid"]["dt"])
        params, schedule, trace = gem.multimode_run(params, **train)
    else:
        params, schedule, trace = gem.single_pulse_run(
            params, rabi=ctrl["rabi_frequency"], fwhm=pulse["fwhm"],
            write_width_hz=sch["write_width"], read_width_hz=sch["read_width"],
            t_hold=sch["hold"], hold_fields_off=sch["hold_fields_off"],
            flip_delay_fwhm=sch["flip_delay_fwhm"], amplitude=pulse["amplitude"],
            dt=s["grid"]["dt"])
    schedule = replace(schedule, control=replace(schedule.control, angle_theta=ctrl["angle"]))
    grid = gem.Grid(s["grid"]["nz"], s["grid"]["dt"])
    metrics: dict = {}
    if cfg.kind == "simulate-4wm":
        if rec["compensate"]:
            raise ConfigError("recall.compensate is only available for kind 'simulate'")
        result = gem.solve_gem_4wm(params, schedule, trace, grid,
                                   idler_ratio=s["four_wave_mixing"]["idler_ratio"],
                                   lossless=rec["lossless"])
    elif rec["compensate"]:
        result, schedule = gem.compensated_solve(params, schedule, trace, grid,
                                                 passes=rec["passes"], lossless=rec["lossless"])
        metrics["recall_bias_offset_hz"] = schedule.gradient.recall_bias[0] / C.TWO_PI
        metrics["recall_bias_slope_hz_per_s"] = schedule.gradient.recall_bias[1] / C.TWO_PI
    else:
        result = gem.solve_gem(params, schedule, trace, grid, lossless=rec["lossless"])
    summary = result.summary()
    metrics.update({k: v for k, v in summary.items() if v is not None})
    if pulse["count"] > 1 and cfg.kind == "simulate":
        # reported, not asserted: send only the first pulse and see where it re-emerges
        marks = [1.0] + [0.0] * (pulse["count"] - 1)
        _, _, marked = gem.multimode_run(params, **train, amplitude=marks)
        probe = gem.solve_gem(params, schedule, marked, grid, lossless=rec["lossless"])
        order = gem.recall_order(result.output_trace, probe.output_trace)
        if order is not None:
            metrics["recall_order"] = order
    if pulse["count"] == 1:
        ref_fwhm = rec["reference_fwhm"] or pulse["fwhm"] * sch["write_width"] / sch["read_width"]
        overlap, _ = gem.mode_overlap(result.output_trace, gem.GaussianPulseSpec(0.0, ref_fwhm))
        metrics["mode_overlap"] = overlap
        metrics["reference_fwhm_s"] = ref_fwhm
    if cfg.emit["csv"]:
        io.write_trace(w.path("input.csv"), result.input_trace)
        io.write_trace(w.path("transmitted.csv"), result.transmitted_trace)
        io.write_trace(w.path("output.csv"), result.output_trace)
        if result.idler_trace is not None:
            io.write_trace(w.path("idler.csv"), result.idler_trace)
    if cfg.emit["json"]:
        io.write_json(w.path("result.json"), metrics)
    if plotdata:
        snap = result.spinwave_snapshots[0]
        with open(w.path("spinwave.csv"), "w") as fh:
            fh.write("z_m,re,im,abs2\n")
            for z, a in zip(snap.z_grid, snap.coherence):
                fh.write(f"{z!r},{a.real!r},{a.imag!r},{abs(a) ** 2!r}\n")
    return metrics


def _run_raman(cfg: ExperimentConfig, w: _Writer, plotdata: bool) -> dict:
    s = cfg.sections
    e, man, scan, fit = s["ensemble"], s["manifold"], s["scan"], s["fit"]
    rabi = s["control"]["rabi_frequency"]
    manifold = spectroscopy.ZeemanManifold(tuple(man["od_per_line"]), man["bias_field"])
    (noise_seed,) = _seeds(cfg.seed, 1)
    if s["data"]["path"] is not None:
        spectrum = io.read_spectrum(s["data"]["path"])
    else:
        grid = np.linspace(scan["start"], scan["stop"], scan["points"])
        spectrum = spectroscopy.simulate_manifold_spectrum(
            manifold, rabi, e["raman_detuning"], grid, e["linewidth"], e["ground_decoherence"])
        if scan["noise"] > 0:
            rng = np.random.default_rng(noise_seed)
            y = spectrum.transmission + rng.normal(0, scan["noise"], spectrum.transmission.size)
            spectrum = spectroscopy.RamanSpectrum(grid, y, spectrum.phase,
                                                  np.full(y.size, scan["noise"]))
    metrics = {"points": int(spectrum.two_photon_detunings.size),
               "min_transmission": float(spectrum.transmission.min())}
    if cfg.emit["csv"]:
        io.write_spectrum(w.path("spectrum.csv"), spectrum)
    if fit["enabled"]:
        guess = {"od_per_line": fit["od_guess"] or man["od_per_line"],
                 "Omega_c": fit["rabi_guess"] or rabi}
        result = spectroscopy.fit_spectrum(
            spectrum, guess, Delta=e["raman_detuning"], Gamma=e["linewidth"],
            gamma0=e["ground_decoherence"], bias_field=man["bias_field"])
        report = result.report()
        metrics.update(report["parameters"])
        metrics["residual"] = report["residual"]
        if cfg.emit["json"]:
            io.write_json(w.path("fit.json"), report)
    return metrics


def _run_decay(cfg: ExperimentConfig, w: _Writer, plotdata: bool) -> dict:
    s = cfg.sections
    (noise_seed,) = _seeds(cfg.seed, 1)
    model = s["model"]
    if s["data"]["path"] is not None:
        points = io.read_decay_points(s["data"]["path"])
    else:
        syn = s["synthetic"]
        names, _, evaluate = decay.MODELS[model]
        truth = dict(syn["truth"])
        if model == "thermal_tau_d_inf":
            truth.setdefault("tau_d", np.inf)
        missing = [k for k in names if k not in truth]
        if missing:
            raise ConfigError(f"synthetic.truth lacks {missing}")
        t = np.linspace(syn["start"], syn["stop"], syn["points"])
        y = evaluate(t, truth)
        if syn["noise"] > 0:
            y = y + np.random.default_rng(noise_seed).normal(0, syn["noise"], y.size)
            points = np.column_stack([t, y, np.full(y.size, syn["noise"])])
        else:
            points = np.column_stack([t, y])
        if cfg.emit["csv"]:
            io.write_decay_points(w.path("decay_data.csv"), points)
    result = decay.fit_decay(points, model, s["guess"], s["free"])
    report = result.report()
    if cfg.emit["json"]:
        io.write_json(w.path("fit.json"), report)
    metrics = {k: v for k, v in report["parameters"].items() if v is not None}
    metrics["residual"] = report["residual"]
    return metrics


def _surface_centres(edges: np.ndarray) -> np.ndarray:
    return 0.5 * (edges[1:] + edges[:-1])


def _run_tomography(cfg: ExperimentConfig, w: _Writer, plotdata: bool) -> dict:
    s = cfg.sections
    het = s["heterodyne"]
    alpha = complex(s["state"]["alpha_re"], s["state"]["alpha_im"])
    eta = s["channel"]["loss"]
    if not 0 <= eta <= 1:
        raise ConfigError("channel.loss must lie in [0, 1]")
    alpha_out = alpha * np.sqrt(eta)
    (het_seed,) = _seeds(cfg.seed, 1)
    records = tomography.synthesize_heterodyne(
        alpha_out, het["phase_drift"], het["pulses"], het_seed,
        beat_frequency=het["beat_frequency"], sample_rate=het["sample_rate"], periods=het["periods"])
    ens = tomography.ensemble_from_records(records)
    surface, q = tomography.estimate_q(ens, het["bins"] if ens.m >= tomography.MIN_SURFACE_SAMPLES else None)
    wig = tomography.q_to_wigner(q)
    fid = tomography.gaussian_fidelity(wig, tomography.coherent_state(alpha_out))
    n, n_err = tomography.mean_photon_number(ens)
    metrics = {"fidelity_to_ideal": fid, "mean_photon_number": n, "mean_photon_number_err": n_err,
               "expected_photon_number": abs(alpha_out) ** 2, "pulses": ens.m}
    if cfg.emit["csv"]:
        tomography.write_quadratures(w.path("quadratures.csv"), ens)
        if surface is not None:
            xs, ps = _surface_centres(surface.x_edges), _surface_centres(surface.p_edges)
            tomography.write_surface(w.path("q_surface.csv"), xs, ps, surface.density)
            tomography.write_surface(w.path("wigner_surface.csv"), xs, ps,
                                     tomography.wigner_surface(wig, xs, ps))
    if cfg.emit["json"]:
        io.write_json(w.path("state.json"), {"q": q.to_dict(), "wigner": wig.to_dict(), **metrics})
    return metrics


def _run_tv(cfg: ExperimentConfig, w: _Writer, plotdata: bool) -> dict:
    s = cfg.sections
    budget = tv.DetectionBudget(**s["detection"])
    eta_det = budget.total_eta
    s_in, s_out, s_boot = _seeds(cfg.seed, 3)
    if s["data"]["input"] is not None:
        ens_in = tomography.read_quadratures(s["data"]["input"])
        ens_out = tomography.read_quadratures(s["data"]["output"])
    else:
        state = tomography.coherent_state(complex(s["state"]["alpha_re"], s["state"]["alpha_im"]))
        ch = s["channel"]
        if ch["type"] == "loss":
            out_state = tv.loss_channel(state, ch["eta"])
        elif ch["type"] == "measure-prepare":
            out_state = tv.measure_prepare_channel(state, ch["gain"])
        else:
            out_state = state
        # the same detector sees both states
        seen_in = tv.loss_channel(state, eta_det)
        seen_out = tv.loss_channel(out_state, eta_det)
        ens_in = tomography.sample_heterodyne(seen_in, s["pulses"], s_in)
        ens_out = tomography.sample_heterodyne(seen_out, s["pulses"], s_out)
        if cfg.emit["csv"]:
            tomography.write_quadratures(w.path("input_quadratures.csv"), ens_in)
            tomography.write_quadratures(w.path("output_quadratures.csv"), ens_out)
    raw = tv.tv_from_ensembles(ens_in, ens_out, resamples=s["resamples"], seed=s_boot)
    corrected = tv.correct_detection(raw, budget)
    metrics = {"T_raw": raw.T, "V_raw": raw.V, "err_T_raw": raw.err_T, "err_V_raw": raw.err_V,
               "T": corrected.T, "V": corrected.V, "err_T": corrected.err_T,
               "err_V": corrected.err_V, "detection_eta": eta_det,
               "no_cloning": tv.in_no_cloning_region(corrected)}
    if cfg.emit["json"]:
        io.write_json(w.path("tv.json"), {"raw": raw.to_dict(), "corrected": corrected.to_dict(),
                                           "detection_budget": {**asdict(budget),
                                                                "total_eta": eta_det}})
    if plotdata:
        curves = tv.boundary_curves(np.linspace(0, 2, 201))
        with open(w.path("tv_boundaries.csv"), "w") as fh:
            fh.write("curve,T,V\n")
            for name in ("classical", "linear_loss"):
                for a, b in zip(*curves[name]):
                    fh.write(f"{name},{a!r},{b!r}\n")
            fh.write(f"point,{corrected.T!r},{corrected.V!r}\n")
    return metrics


def _run_compare(cfg: ExperimentConfig, w: _Writer, plotdata: bool) -> dict:
    s = cfg.sections
    records = list(tv.BUILTIN_RECORDS) if s["records"]["builtin"] else []
    if s["records"]["path"] is not None:
        records += tv.load_memory_records(s["records"]["path"])
    fiber = tv.FiberReference(s["fiber"]["attenuation"], s["fiber"]["group_index"])
    report = tv.compare(records, fiber)
    if cfg.emit["json"]:
        w.path("report.json").write_text(tv.report_json(report))
    if plotdata:
        tv.write_plot_data(w.path("plotdata.csv"), tv.plot_data_rows(records, fiber))
    metrics = {"fiber_t50_s": report["fiber"]["t50_s"], "records": len(records)}
    for i, row in enumerate(report["records"]):
        for k in ("t50_s", "t50_ratio_to_fiber", "one_over_e_time_s", "max_advantage"):
            if row[k] is not None:
                metrics[f"records.{i}.{k}"] = row[k]
    return metrics


PIPELINES: dict[str, Callable] = {
    "simulate": _run_simulate, "simulate-4wm": _run_simulate, "raman": _run_raman,
    "decay-fit": _run_decay, "tomography": _run_tomography, "tv": _run_tv,
    "compare": _run_compare,
}


def check_asserts(asserts: dict, metrics: dict) -> dict:
    checks = []
    for name, (lo, hi) in sorted(asserts.items()):
        value = metrics.get(name)
        ok = isinstance(value, (int, float)) and not isinstance(value, bool) and lo <= value <= hi
        checks.append({"metric": name, "value": value, "low": lo, "high": hi, "passed": bool(ok)})
    return {"passed": all(c["passed"] for c in checks), "checks": checks}


def run(cfg: ExperimentConfig, out_dir=None, *, seed: Optional[int] = None,
        plotdata: bool = False, enforce_asserts: bool = False) -> tuple[RunManifest, Optional[dict]]:
    """Execute ``cfg``; returns the manifest and, with ``enforce_asserts``, the assert report."""
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    out = Path(out_dir or cfg.output_dir or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)
    writer = _Writer(out)
    start = time.perf_counter()
    try:
        metrics = PIPELINES[cfg.kind](cfg, writer, plotdata or cfg.emit["plotdata"])
    except ConfigError:
        raise
    except Exception as exc:
        raise StageError(f"stage '{cfg.kind}' failed: {exc}") from exc
    metrics = {k: (float(v) if isinstance(v, (np.floating, np.integer)) else v)
               for k, v in metrics.items()}
    report = None
    if enforce_asserts and cfg.asserts:
        report = check_asserts(cfg.asserts, metrics)
        io.write_json(writer.path("assert_report.json"), report)
    manifest = RunManifest(
        kind=cfg.kind, seed=cfg.seed, config_hash=cfg.config_hash, artifacts=writer.entries(),
        versions=_versions(),
        stage_checksums={cfg.kind: _digest(metrics)}, metrics=metrics,
        wall_time_s=time.perf_counter() - start)
    io.write_json(out / "manifest.json", manifest.to_dict())
    return manifest, report


def _digest(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()
