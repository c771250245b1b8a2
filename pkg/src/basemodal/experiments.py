"""Experiment pipelines: declarative configs in, CSV artifacts + manifest out.

Each experiment builds its models from a validated configuration mapping,
runs the corresponding pipeline and writes self-describing CSV artifacts
plus a JSON run manifest. All pipelines are deterministic: a fixed config
and seed reproduce byte-identical CSV files.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .beams import (BeamConfig, BendingStretching, JenkinsElement,
                    ModalBeamModel, build_beam_model, rectangular_section_EA)
from .hbm import HbmProblem, continue_backbone
from .identify import (SensorLayout, damping_model_based, damping_model_free,
                       chebyshev_gauss_nodes, estimate_modal_coordinates,
                       modal_amplitude, quadrature_weights, rotate_to_base_phase)
from .io import (config_hash, read_backbone_table, write_backbone,
                 write_table, write_test_record)
from .rig import LevelSchedule, PllConfig, VirtualRig
from .rom import ModalOscillatorTable, peak_response, solve_forced_response

EXPERIMENTS = ("convergence", "backbone-epmc", "backbone-virtual",
               "identify", "freqresp", "rom-predict")


class ConfigError(Exception):
    pass


@dataclass
class RunManifest:
    experiment: str
    cfg_hash: str
    artifacts: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    versions: dict = field(default_factory=dict)
    seed: int = 0
    failed: bool = False
    error: str = ""

    def write(self, out_dir):
        path = Path(out_dir) / "manifest.json"
        with open(path, "w") as fh:
            json.dump(self.__dict__, fh, indent=2, sort_keys=True)
        return path


def _versions():
    import numba
    import scipy
    return {"basemodal": __version__, "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def _require(cfg, key, context):
    if key not in cfg:
        raise ConfigError(f"{context}: missing required key {key!r}")
    return cfg[key]


def build_model_from_config(beam_cfg) -> ModalBeamModel:
    """Construct a ModalBeamModel from the ``beam`` config block."""
    bc = BeamConfig(
        boundary=_require(beam_cfg, "boundary", "beam"),
        EI=float(_require(beam_cfg, "EI", "beam")),
        rhoA=float(_require(beam_cfg, "rhoA", "beam")),
        L=float(_require(beam_cfg, "L", "beam")),
        nmod=int(_require(beam_cfg, "nmod", "beam")),
        zeta=tuple(np.atleast_1d(_require(beam_cfg, "zeta", "beam")).tolist()),
    )
    nl_cfg = beam_cfg.get("nonlinearity")
    nl = None
    if nl_cfg:
        kind = _require(nl_cfg, "type", "beam.nonlinearity")
        if kind == "jenkins":
            nl = JenkinsElement(x_c=float(nl_cfg["x_c"]), kt=float(nl_cfg["kt"]),
                                muN=float(nl_cfg["muN"]))
        elif kind == "bending-stretching":
            if "EA_over_2L" in nl_cfg:
                ea2l = float(nl_cfg["EA_over_2L"])
            else:
                # steel rectangular cross-section consistent with EI, rhoA
                EA, _ = rectangular_section_EA(bc.EI, bc.rhoA)
                ea2l = EA / (2.0 * bc.L)
            nl = BendingStretching(EA_over_2L=ea2l)
        elif kind not in ("none",):
            raise ConfigError(f"unknown nonlinearity type {kind!r}")
    return build_beam_model(bc, nl)


def section_thickness(beam_cfg):
    _, h = rectangular_section_EA(float(beam_cfg["EI"]), float(beam_cfg["rhoA"]))
    return h


def _sensor_positions(cfg, model):
    sens = _require(cfg, "sensors", "config")
    pos = [float(x) for x in _require(sens, "positions", "sensors")]
    if any(not 0 <= x <= model.config.L for x in pos):
        raise ConfigError("sensor positions outside the beam")
    return pos, sens


def _sensor_sets(sens_cfg, positions):
    """Named sensor sets as 0-based index lists into the master positions."""
    sets = sens_cfg.get("sets", {"all": list(range(1, len(positions) + 1))})
    out = {}
    for name, idx in sets.items():
        idx = [int(i) for i in idx]
        if any(not 1 <= i <= len(positions) for i in idx):
            raise ConfigError(f"sensor set {name}: index outside 1..{len(positions)}")
        out[name] = [i - 1 for i in sorted(idx)]
    return out


def _amp_axis(model, eta1, beam_cfg):
    """Paper-style normalized physical amplitude for plotting axes.

    Cantilever: fundamental tip deflection over length. Clamped-clamped:
    fundamental midspan deflection over section thickness.
    """
    L = model.config.L
    if model.config.boundary == "cantilever":
        return abs(model.shape_matrix([L])[0] @ eta1) / L
    h = section_thickness(beam_cfg)
    return abs(model.shape_matrix([L / 2])[0] @ eta1) / h


def _resonant_single_mode_response(model, mode, qb=1.0):
    """Closed-form fundamental at phase resonance of one isolated mode.

    At Omega = omega_m the resonant mode dominates; the reference truth for
    the estimator convergence study keeps only that term, for which both
    damping estimators are exact in the continuous limit.
    """
    m = mode - 1
    eta1 = np.zeros(model.nmod, complex)
    eta1[m] = -1j * model.gamma[m] * qb / (2.0 * model.zeta[m])
    return eta1


# ---------------------------------------------------------------- pipelines

def run_convergence(cfg, out_dir, h):
    model = build_model_from_config(_require(cfg, "beam", "config"))
    L = model.config.L
    conv = cfg.get("convergence", {})
    modes = [int(m) for m in conv.get("modes", [1])]
    ns_range = [int(n) for n in conv.get("nsens", list(range(2, 13)))]
    pinned = model.config.boundary == "pinned-pinned"
    zeros = (0.0, L) if model.config.boundary != "cantilever" else (0.0,)

    rows = []
    for m in modes:
        if not 1 <= m <= model.nmod:
            raise ConfigError(f"convergence mode {m} outside 1..{model.nmod}")
        if pinned and model.gamma[m - 1] == 0.0:
            raise ConfigError(f"mode {m} does not couple to base motion")
        eta1 = _resonant_single_mode_response(model, m)
        D_true = float(model.zeta[m - 1])
        for n in ns_range:
            # equidistant grid: interior points when both ends are fixed,
            # free end included for the cantilever
            if model.config.boundary == "cantilever":
                xs = [i * L / n for i in range(1, n + 1)]
            else:
                xs = [i * L / (n + 1) for i in range(1, n + 1)]
            Phi = model.shape_matrix(xs)
            q1 = Phi @ eta1
            for rule in ("rectangular", "trapezoidal"):
                lay = SensorLayout(tuple(xs), rule, known_zero_boundaries=zeros)
                D = damping_model_free(q1, 1.0, quadrature_weights(lay, L))
                rows.append([m, n, _RULE_ID[rule], D, abs(D - D_true) / D_true])
            xc = chebyshev_gauss_nodes(n, L)
            layc = SensorLayout(tuple(xc), "chebyshev-gauss")
            qc = model.shape_matrix(xc) @ eta1
            D = damping_model_free(qc, 1.0, quadrature_weights(layc, L))
            rows.append([m, n, _RULE_ID["chebyshev-gauss"], D,
                         abs(D - D_true) / D_true])
            ntr = min(n, model.nmod)
            D, _ = damping_model_based(q1, 1.0, Phi[:, :ntr], model.gamma[:ntr])
            rows.append([m, n, _RULE_ID["model-based"], D,
                         abs(D - D_true) / D_true])
    path = Path(out_dir) / "convergence.csv"
    write_table(path, ["mode", "nsens", "rule", "D", "rel_error"], rows, h)
    return [path.name]


_RULE_ID = {"rectangular": 0, "trapezoidal": 1, "chebyshev-gauss": 2,
            "model-based": 3}
RULE_NAMES = {v: k for k, v in _RULE_ID.items()}


def _hbm_problem(cfg, model):
    sol = cfg.get("solver", {})
    return HbmProblem(
        model=model,
        a_start=float(_require(sol, "a_start", "solver")),
        a_end=float(_require(sol, "a_end", "solver")),
        H=int(sol.get("H", 7)),
        Ntime=int(sol.get("Ntime", 128)),
        step_max=float(sol.get("step_max", 0.04)),
        target_mode=int(sol.get("target_mode", 1)),
    )


def run_backbone_epmc(cfg, out_dir, h):
    beam_cfg = _require(cfg, "beam", "config")
    model = build_model_from_config(beam_cfg)
    bb = continue_backbone(_hbm_problem(cfg, model))
    p1 = Path(out_dir) / "backbone_epmc.csv"
    write_backbone(p1, bb, h)
    rows = []
    for p in bb.points:
        amp = _amp_axis(model, p.a * p.vhat[1], beam_cfg)
        rows.append([p.a, p.omega, p.D, amp])
    p2 = Path(out_dir) / "backbone_epmc_summary.csv"
    write_table(p2, ["a", "omega", "D", "amp_norm"], rows, h)
    return [p1.name, p2.name]


def _pll_from_config(cfg, fallback_omega=None):
    ctl = cfg.get("controller", {})
    omega_init = float(ctl.get("omega_init", 0.0)) or fallback_omega
    if not omega_init:
        raise ConfigError("controller.omega_init required")
    kw = {}
    for key in ("Kp", "Ki", "Kd", "lp_cutoff_ratio"):
        if key in ctl:
            kw[key] = float(ctl[key])
    if "target_phase_deg" in ctl:
        kw["target_phase"] = np.deg2rad(float(ctl["target_phase_deg"]))
    return PllConfig(omega_init=omega_init,
                     reference_channel=int(ctl.get("reference_channel", 1)) - 1,
                     **kw)


def _schedule_from_config(cfg):
    ctl = _require(cfg, "controller", "config")
    sch = _require(ctl, "schedule", "controller")
    return LevelSchedule(
        levels=tuple(float(l) for l in _require(sch, "levels", "schedule")),
        wait_periods=float(sch.get("wait_periods", 2000.0)),
        hold_periods=float(sch.get("hold_periods", 300.0)),
        direction=sch.get("direction", "forward"),
    )


def _identify_record(record, model, beam_cfg, sens_cfg, positions):
    """Per-level modal identification for every configured sensor set.

    Returns (columns, rows, backbone_rows): identified summary per level
    and set, plus the identified backbone table from the master set.
    """
    Phi = model.shape_matrix(positions)
    L = model.config.L
    zeros = tuple(float(x) for x in sens_cfg.get(
        "known_zero_boundaries",
        (0.0,) if model.config.boundary == "cantilever" else (0.0, L)))
    sets = _sensor_sets(sens_cfg, positions)
    H = record.levels[0].spectrum.H

    cols = ["level", "Omega", "lock", "a", "amp_norm"]
    for name in sets:
        cols += [f"D_free_{name}", f"D_based_{name}"]
    rows, bb_rows = [], []
    for lr in record.levels:
        spec, qb = rotate_to_base_phase(lr.spectrum.coeffs, lr.qb_hat)
        q1 = spec[1]
        eta1 = estimate_modal_coordinates(q1, Phi)
        a = float(np.linalg.norm(eta1))
        row = [lr.level, lr.Omega, lr.lock, a,
               _amp_axis(model, eta1, beam_cfg)]
        for name, idx in sets.items():
            lay = SensorLayout(tuple(positions[i] for i in idx),
                               "trapezoidal", known_zero_boundaries=zeros)
            D_free = damping_model_free(q1[idx], qb, quadrature_weights(lay, L))
            ntr = min(len(idx), model.nmod)
            D_based, _ = damping_model_based(q1[idx], qb, Phi[idx][:, :ntr],
                                             model.gamma[:ntr])
            row += [D_free, D_based]
        rows.append(row)
        # identified backbone entry: dominant-mode-real gauge, all harmonics
        D_master, _ = damping_model_based(q1, qb, Phi, model.gamma)
        theta = np.angle(eta1[np.argmax(np.abs(eta1))])
        bb_row = [a, lr.Omega, D_master]
        vhat = np.array([estimate_modal_coordinates(spec[hh], Phi)
                         for hh in range(H + 1)])
        vhat = vhat * np.exp(-1j * np.arange(H + 1) * theta)[:, None] / a
        for j in range(model.nmod):
            for hh in range(H + 1):
                bb_row += [vhat[hh, j].real, vhat[hh, j].imag]
        bb_rows.append(bb_row)
    bb_cols = ["a", "omega", "D"]
    for j in range(model.nmod):
        for hh in range(H + 1):
            bb_cols += [f"v{j + 1}_h{hh}_re", f"v{j + 1}_h{hh}_im"]
    return cols, rows, (bb_cols, bb_rows)


def run_backbone_virtual(cfg, out_dir, h):
    beam_cfg = _require(cfg, "beam", "config")
    model = build_model_from_config(beam_cfg)
    positions, sens_cfg = _sensor_positions(cfg, model)
    pll = _pll_from_config(cfg, fallback_omega=float(model.omega_lin[0]))
    schedule = _schedule_from_config(cfg)
    rig = VirtualRig(model, pll, positions,
                     steps_per_period=int(cfg.get("controller", {})
                                          .get("steps_per_period", 200)))
    record = rig.run_backbone_test(schedule)
    p1 = Path(out_dir) / "test_record.csv"
    write_test_record(p1, record, h)
    cols, rows, (bb_cols, bb_rows) = _identify_record(
        record, model, beam_cfg, sens_cfg, positions)
    p2 = Path(out_dir) / "backbone_identified.csv"
    write_table(p2, cols, rows, h)
    p3 = Path(out_dir) / "backbone_identified_table.csv"
    write_table(p3, bb_cols, bb_rows, h)
    return [p1.name, p2.name, p3.name]


def run_identify(cfg, out_dir, h):
    from .io import read_table
    beam_cfg = _require(cfg, "beam", "config")
    model = build_model_from_config(beam_cfg)
    positions, sens_cfg = _sensor_positions(cfg, model)
    rec_path = _require(cfg, "record_csv", "config")
    _, names, data = read_table(rec_path)
    record = _record_from_table(names, data, len(positions))
    cols, rows, (bb_cols, bb_rows) = _identify_record(
        record, model, beam_cfg, sens_cfg, positions)
    p2 = Path(out_dir) / "identified.csv"
    write_table(p2, cols, rows, h)
    p3 = Path(out_dir) / "identified_table.csv"
    write_table(p3, bb_cols, bb_rows, h)
    return [p2.name, p3.name]


def _record_from_table(names, data, nsens):
    """Rebuild a TestRecord-shaped object from its CSV serialization."""
    from .rig import LevelRecord, Spectrum, TestRecord
    idx = {n: i for i, n in enumerate(names)}
    H = 0
    while f"s1_h{H + 1}_re" in idx:
        H += 1
    rec = TestRecord(kind="loaded")
    for r in data:
        coeffs = np.empty((H + 1, nsens), complex)
        for s in range(nsens):
            for hh in range(H + 1):
                coeffs[hh, s] = (r[idx[f"s{s + 1}_h{hh}_re"]]
                                 + 1j * r[idx[f"s{s + 1}_h{hh}_im"]])
        rec.levels.append(LevelRecord(
            level=r[idx["level"]], Omega=r[idx["Omega"]],
            qb_hat=complex(r[idx["qb_re"]], r[idx["qb_im"]]),
            lock=bool(r[idx["lock"]]),
            spectrum=Spectrum(Omega=r[idx["Omega"]], coeffs=coeffs),
            phase_error_mean=0.0, phase_error_max=0.0,
            target_phase=r[idx["target_phase"]],
            distortion=r[idx["distortion"]],
            amp_saturated=bool(r[idx["amp_saturated"]]),
        ))
    return rec


def run_freqresp(cfg, out_dir, h):
    beam_cfg = _require(cfg, "beam", "config")
    model = build_model_from_config(beam_cfg)
    positions, sens_cfg = _sensor_positions(cfg, model)
    pll = _pll_from_config(cfg, fallback_omega=float(model.omega_lin[0]))
    fr = _require(cfg, "freqresp", "config")
    levels = [float(v) for v in _require(fr, "velocity_levels", "freqresp")]
    phases = np.deg2rad([float(p) for p in _require(fr, "phases_deg", "freqresp")])
    wait = float(fr.get("wait_periods", 2000.0))
    hold = float(fr.get("hold_periods", 300.0))
    Phi = model.shape_matrix(positions)
    artifacts = []
    for k, vlev in enumerate(levels, 1):
        rig = VirtualRig(model, pll, positions)
        record = rig.run_frequency_response_test(vlev, phases,
                                                 wait_periods=wait,
                                                 hold_periods=hold)
        p1 = Path(out_dir) / f"freqresp_level{k}_record.csv"
        write_test_record(p1, record, h)
        rows = []
        for lr in record.levels:
            spec, qb = rotate_to_base_phase(lr.spectrum.coeffs, lr.qb_hat)
            eta1 = estimate_modal_coordinates(spec[1], Phi)
            rows.append([vlev, lr.target_phase, lr.Omega, lr.lock,
                         float(np.linalg.norm(eta1)),
                         _amp_axis(model, eta1, beam_cfg), lr.amp_saturated])
        p2 = Path(out_dir) / f"freqresp_level{k}.csv"
        write_table(p2, ["velocity_level", "target_phase", "Omega", "lock",
                         "a", "amp_norm", "amp_saturated"], rows, h)
        artifacts += [p1.name, p2.name]
    return artifacts


def run_rom_predict(cfg, out_dir, h):
    beam_cfg = _require(cfg, "beam", "config")
    model = build_model_from_config(beam_cfg)
    rom_cfg = _require(cfg, "rom", "config")
    a, omega, D, v1 = read_backbone_table(_require(rom_cfg, "backbone_csv", "rom"))
    if v1.shape[1] != model.nmod:
        raise ConfigError("backbone table mode count does not match the beam")
    table = ModalOscillatorTable(a=a, omega=omega, D=D, v1=v1,
                                 gamma=model.gamma)
    levels = [float(v) for v in _require(rom_cfg, "levels", "rom")]
    excitation = rom_cfg.get("excitation", "base-velocity")
    artifacts = []
    peak_rows = []
    for k, lev in enumerate(levels, 1):
        branches = solve_forced_response(table, lev, excitation=excitation)
        rows = []
        for bi, br in enumerate(branches):
            for i in range(br.a.size):
                rows.append([lev, bi, br.a[i], br.Omega[i], br.theta[i],
                             br.stable[i], br.marginal[i]])
        p = Path(out_dir) / f"rom_frf_level{k}.csv"
        write_table(p, ["level", "branch", "a", "Omega", "theta",
                        "stable", "marginal"], rows, h)
        artifacts.append(p.name)
        amax, om_at = peak_response(branches)
        peak_rows.append([lev, amax, om_at])
    p = Path(out_dir) / "rom_frf_peaks.csv"
    write_table(p, ["level", "a_max", "Omega_at_max"], peak_rows, h)
    artifacts.append(p.name)
    return artifacts


_PIPELINES = {
    "convergence": run_convergence,
    "backbone-epmc": run_backbone_epmc,
    "backbone-virtual": run_backbone_virtual,
    "identify": run_identify,
    "freqresp": run_freqresp,
    "rom-predict": run_rom_predict,
}


def run(config, out_dir, seed=0, threads=0) -> RunManifest:
    """Execute the configured experiment; writes artifacts and manifest.

    On failure the partial artifact list is retained in the manifest with
    the failure marker set, and the exception is re-raised.
    """
    exp = _require(config, "experiment", "config")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp!r}; choose from {EXPERIMENTS}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h = config_hash(config)
    manifest = RunManifest(experiment=exp, cfg_hash=h, seed=int(seed),
                           versions=_versions())
    if threads:
        try:
            import numba
            numba.set_num_threads(int(threads))
        except Exception:
            pass
    t0 = time.perf_counter()
    try:
        manifest.artifacts = _PIPELINES[exp](config, out, h)
    except Exception as ex:
        manifest.failed = True
        manifest.error = f"{exp}: {type(ex).__name__}: {ex}"
        manifest.artifacts = sorted(p.name for p in out.glob("*.csv"))
        manifest.timings["total_s"] = time.perf_counter() - t0
        manifest.write(out)
        raise
    manifest.timings["total_s"] = time.perf_counter() - t0
    manifest.write(out)
    return manifest
