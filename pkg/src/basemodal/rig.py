"""Virtual test rig: base-excited beam under phase-locked-loop control.

Runs stepped backbone tests (phase-resonant tracking over an excitation
level schedule) and constant-level frequency-response tests on a
``ModalBeamModel``. The exciter is ideal: the controller output is applied
directly as base acceleration. Sensors measure transverse displacement
relative to the base.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .beams import BendingStretching, JenkinsElement, ModalBeamModel


class RigError(Exception):
    pass


@dataclass
class PllConfig:
    """Phase-locked-loop and demodulator settings.

    Above the response-envelope pole the demodulated phase integrates the
    frequency detuning, so Kp sets the loop crossover directly. The default
    gains scale with the initial frequency (crossover at 0.15 omega_init,
    demodulator cutoff at 0.2 omega_init); they lock within a few hundred
    periods across the damping range and hold the overhanging part of
    hardening frequency-response branches during phase sweeps.
    """

    omega_init: float
    Kp: float = None
    Ki: float = None
    Kd: float = 0.0
    target_phase: float = -np.pi / 2.0
    lp_cutoff_ratio: float = 0.2
    reference_channel: int = 0

    def __post_init__(self):
        if self.omega_init <= 0:
            raise RigError("omega_init must be positive")
        if (self.Kp is not None and self.Kp < 0) or (
            self.Ki is not None and self.Ki < 0
        ):
            raise RigError("controller gains must be non-negative")
        if not -np.pi < self.target_phase <= np.pi:
            raise RigError("target phase outside (-pi, pi]")


@dataclass
class LevelSchedule:
    """Stepped excitation levels for a backbone test.

    Levels are base-displacement fundamental amplitudes [m]; wait and hold
    durations are counted in excitation periods.
    """

    levels: tuple
    wait_periods: float = 2000.0
    hold_periods: float = 300.0
    direction: str = "forward"

    def __post_init__(self):
        if len(self.levels) == 0:
            raise RigError("empty level schedule")
        if any(l <= 0 for l in self.levels):
            raise RigError("levels must be positive")
        if self.hold_periods < 1 or self.wait_periods < 0:
            raise RigError("invalid wait/hold durations")
        if self.direction not in ("forward", "forward-then-backward"):
            raise RigError(f"unknown direction {self.direction!r}")
        object.__setattr__(self, "levels", tuple(float(l) for l in self.levels))

    def sequence(self):
        seq = list(self.levels)
        if self.direction == "forward-then-backward":
            seq += list(self.levels[-2::-1])
        return seq


@dataclass
class Spectrum:
    """Harmonic coefficients of a multi-channel periodic signal.

    Convention: c(t) = Re sum_h chat_h e^{i h Omega t}, chat_0 real.
    ``coeffs`` has shape (H+1, nchannels).
    """

    Omega: float
    coeffs: np.ndarray
    residual: float = 0.0

    @property
    def H(self):
        return self.coeffs.shape[0] - 1

    @property
    def fundamental(self):
        return self.coeffs[1]


@dataclass
class LevelRecord:
    """Steady-state result of one excitation level (or one target phase)."""

    level: float
    Omega: float
    qb_hat: complex
    lock: bool
    spectrum: Spectrum
    phase_error_mean: float
    phase_error_max: float
    target_phase: float
    distortion: float = 1.0
    amp_saturated: bool = False
    trace_Omega: np.ndarray = None
    trace_error: np.ndarray = None


@dataclass
class TestRecord:
    kind: str
    levels: list = field(default_factory=list)
    sensor_positions: tuple = ()

    @property
    def Omega(self):
        return np.array([l.Omega for l in self.levels])

    @property
    def locked(self):
        return np.array([l.lock for l in self.levels])


LOCK_TOL_RAD = np.deg2rad(1.0)
LOCK_PERIODS = 50.0


def synchronous_demodulate(signal, psi, dt, cutoff):
    """First-order synchronous demodulation of a sampled signal.

    Mixes the signal with the quadrature references of the supplied
    oscillator phase and low-pass filters the products (cutoff [rad/s]).
    Returns (magnitude, phase) traces; entries earlier than three filter
    time constants are unreliable and flagged via the returned settle index.
    """
    signal = np.asarray(signal, float)
    psi = np.asarray(psi, float)
    I = np.empty_like(signal)
    Q = np.empty_like(signal)
    zi, zq = 0.0, 0.0
    a = dt * cutoff
    cos_psi = np.cos(psi)
    sin_psi = np.sin(psi)
    for i in range(signal.size):
        zi += a * (2.0 * signal[i] * cos_psi[i] - zi)
        zq += a * (-2.0 * signal[i] * sin_psi[i] - zq)
        I[i] = zi
        Q[i] = zq
    mag = np.hypot(I, Q)
    phase = np.arctan2(Q, I)
    settle = int(np.ceil(3.0 / (cutoff * dt)))
    return mag, phase, min(settle, signal.size)


def extract_spectrum(signals, psi, H, Omega=None):
    """Least-squares harmonic coefficients over an integer period count.

    ``signals`` is (nsamples,) or (nsamples, nchannels); ``psi`` the
    oscillator phase per sample (used directly as the fundamental phase, so
    the fit is exact under slow frequency drift). The window is trimmed to
    the largest integer number of periods from the end.
    """
    signals = np.atleast_2d(np.asarray(signals, float).T).T
    psi_u = np.unwrap(np.asarray(psi, float))
    span = psi_u[-1] - psi_u[0]
    nper = int(span // (2.0 * np.pi))
    if nper < 1:
        raise RigError("window shorter than one period")
    start = np.searchsorted(psi_u, psi_u[-1] - nper * 2.0 * np.pi)
    ps = psi_u[start:]
    sig = signals[start:]
    cols = [np.ones_like(ps)]
    for h in range(1, H + 1):
        cols += [np.cos(h * ps), np.sin(h * ps)]
    A = np.column_stack(cols)
    coef, _, _, _ = np.linalg.lstsq(A, sig, rcond=None)
    C = np.empty((H + 1, sig.shape[1]), complex)
    C[0] = coef[0]
    C[1:] = coef[1::2] - 1j * coef[2::2]
    resid = sig - A @ coef
    rnorm = float(np.sqrt(np.mean(resid**2)))
    if Omega is None:
        Omega = span / ((len(psi_u) - 1)) / (psi[1] - psi[0]) if len(psi_u) > 1 else 0.0
    return Spectrum(Omega=Omega, coeffs=C, residual=rnorm)


def distortion_factor(spectrum: Spectrum, channel=0):
    """Fundamental energy fraction of a harmonic signal (1 = pure tone)."""
    c = spectrum.coeffs[1:, channel]
    total = np.sum(np.abs(c) ** 2)
    if total == 0:
        return 1.0
    return float(np.abs(c[1 - 1]) / np.sqrt(total))


class VirtualRig:
    """Time-domain simulator of one beam under PLL-controlled base motion."""

    def __init__(self, model: ModalBeamModel, pll: PllConfig, sensor_positions,
                 steps_per_period=200, H=7):
        self.model = model
        self.pll = pll
        self.sensor_positions = tuple(float(x) for x in sensor_positions)
        if any(not 0 <= x <= model.config.L for x in self.sensor_positions):
            raise RigError("sensor positions outside the beam")
        self.Phi_sens = model.shape_matrix(self.sensor_positions)
        self.H = H
        self.steps_per_period = int(steps_per_period)
        if self.steps_per_period < 20:
            raise RigError("need at least 20 integration steps per period")
        self.dt = 2.0 * np.pi / (pll.omega_init * self.steps_per_period)

        # frequency-scaled default gains, see PllConfig
        self._Kp = 0.15 * pll.omega_init if pll.Kp is None else pll.Kp
        self._Ki = 1e-3 * pll.omega_init**2 if pll.Ki is None else pll.Ki
        self.reset()

    def reset(self):
        n = self.model.nmod
        self.eta = np.zeros(n)
        self.etad = np.zeros(n)
        self.aux = np.zeros(12)
        self.aux[9] = self.pll.omega_init

    def _nl_args(self):
        nl = self.model.nonlinearity
        n = self.model.nmod
        if isinstance(nl, JenkinsElement):
            return 1, self.model._phi_c, nl.kt, nl.muN, np.zeros((n, n)), 0.0
        if isinstance(nl, BendingStretching):
            return 2, np.zeros(n), 0.0, 0.0, self.model.K_stretch, nl.EA_over_2L
        return 0, np.zeros(n), 0.0, 0.0, np.zeros((n, n)), 0.0

    def _march(self, periods, level, ctrl_mode, target_phase, rec_every, Kia=400.0):
        nsteps = int(round(periods * self.steps_per_period))
        nrec = (nsteps + rec_every - 1) // rec_every
        n = self.model.nmod
        out_psi = np.empty(nrec)
        out_Om = np.empty(nrec)
        out_err = np.empty(nrec)
        out_eta = np.empty((nrec, n))
        nl_type, phi_c, kt, muN, Kmat, ea2l = self._nl_args()
        pll = self.pll
        phi_ref = np.ascontiguousarray(self.Phi_sens[pll.reference_channel])
        nrec = _kernels.march(
            self.eta, self.etad, self.aux, nsteps, self.dt,
            self.model.omega_lin**2, 2.0 * self.model.zeta * self.model.omega_lin,
            self.model.gamma,
            nl_type, phi_c, kt, muN, Kmat, ea2l,
            ctrl_mode, level,
            pll.omega_init, self._Kp, self._Ki, pll.Kd, target_phase,
            pll.lp_cutoff_ratio, 0.2 * pll.omega_init, 5.0 * pll.omega_init,
            0.0, Kia, phi_ref,
            rec_every, out_psi, out_Om, out_err, out_eta,
        )
        if not np.all(np.isfinite(self.eta)):
            raise RigError("integration blow-up (nonfinite state)")
        Om = self.aux[9]
        if Om <= 0.2 * pll.omega_init * 1.0001 or Om >= 5.0 * pll.omega_init * 0.9999:
            raise RigError("PLL divergence: frequency left the admissible band")
        return out_psi[:nrec], out_Om[:nrec], out_err[:nrec], out_eta[:nrec]

    def simulate_step(self, level, periods, target_phase=None, ctrl_mode=0,
                      rec_every=1):
        """Integrate one excitation segment; returns the controller trace.

        State (modal coordinates, slider, PLL) carries over between calls.
        """
        tp = self.pll.target_phase if target_phase is None else target_phase
        return self._march(periods, level, ctrl_mode, tp, rec_every)

    def _record_level(self, level, wait, hold, target_phase, ctrl_mode):
        if wait > 0:
            self._march(wait, level, ctrl_mode, target_phase, rec_every=64)
        psi, Om, err, eta = self._march(hold, level, ctrl_mode, target_phase,
                                        rec_every=1)
        w_sens = eta @ self.Phi_sens.T
        Omega = float(np.mean(Om))
        spec = extract_spectrum(w_sens, psi, self.H, Omega=Omega)

        # commanded base motion in the same gauge: q_b = level cos(psi)
        if ctrl_mode == 0:
            qb_hat = complex(level)
        else:
            qb_hat = complex(self.aux[7] / Omega)
        base = (np.abs(qb_hat)) * np.cos(np.unwrap(psi))
        base_spec = extract_spectrum(base, psi, self.H, Omega=Omega)

        tail = err[-int(LOCK_PERIODS * self.steps_per_period):]
        lock = bool(np.max(np.abs(tail)) < LOCK_TOL_RAD)
        return LevelRecord(
            level=level, Omega=Omega, qb_hat=qb_hat, lock=lock, spectrum=spec,
            phase_error_mean=float(np.mean(np.abs(tail))),
            phase_error_max=float(np.max(np.abs(tail))),
            target_phase=target_phase,
            distortion=distortion_factor(base_spec),
            amp_saturated=bool(self.aux[8]),
            trace_Omega=Om[:: self.steps_per_period].copy(),
            trace_error=err[:: self.steps_per_period].copy(),
        )

    def run_backbone_test(self, schedule: LevelSchedule) -> TestRecord:
        """Track phase resonance through the level schedule.

        Lock failure at a level is recorded and the test continues.
        """
        rec = TestRecord(kind="backbone", sensor_positions=self.sensor_positions)
        for level in schedule.sequence():
            rec.levels.append(
                self._record_level(level, schedule.wait_periods,
                                   schedule.hold_periods,
                                   self.pll.target_phase, ctrl_mode=0)
            )
        return rec

    def run_frequency_response_test(self, velocity_level, phase_sweep,
                                    wait_periods=1500.0, hold_periods=300.0,
                                    Kia=400.0) -> TestRecord:
        """Constant-base-velocity frequency response via target-phase sweep."""
        phase_sweep = [float(p) for p in phase_sweep]
        if any(not -np.pi < p < 0 for p in phase_sweep):
            raise RigError("phase sweep must lie within (-pi, 0)")
        rec = TestRecord(kind="freqresp", sensor_positions=self.sensor_positions)
        self.aux[7] = velocity_level  # pre-charge the velocity command
        for tp in phase_sweep:
            rec.levels.append(
                self._record_level(velocity_level, wait_periods, hold_periods,
                                   tp, ctrl_mode=1)
            )
        return rec
