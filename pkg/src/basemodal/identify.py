"""Amplitude-dependent modal parameter extraction from phase-resonant spectra.

All estimators operate on steady-state fundamental-harmonic data phased such
that the base displacement coefficient ``qb_hat`` is real and positive. The
damping estimators implement the power balance between the distributed inertia
loading of the base motion and the dissipation:

* model-free: quadrature of response inner products over the structure,
* model-based: projection onto mass-normalized linear mode shapes,
* force-based: active power of a measured excitation force (shaker-stinger).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

QUADRATURE_RULES = ("rectangular", "trapezoidal", "chebyshev-gauss")


class IdentificationError(Exception):
    pass


class IllPosedSensorLayout(IdentificationError):
    """Sensor placement makes the modal least-squares fit rank deficient."""


@dataclass(frozen=True)
class SensorLayout:
    """Sensor positions along a 1-D structure plus the quadrature rule.

    ``known_zero_boundaries`` lists pinned/clamped points whose trivial
    response is exploited by the trapezoidal rule (they are not sensors).
    """

    positions: tuple
    quadrature: str = "trapezoidal"
    known_zero_boundaries: tuple = ()

    def __post_init__(self):
        pos = tuple(float(x) for x in self.positions)
        if any(b >= a for a, b in zip(pos[1:], pos[:-1])):
            raise IdentificationError("sensor positions must be strictly increasing")
        if self.quadrature not in QUADRATURE_RULES:
            raise IdentificationError(f"unknown quadrature rule {self.quadrature!r}")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(
            self, "known_zero_boundaries", tuple(float(x) for x in self.known_zero_boundaries)
        )

    @property
    def nsens(self):
        return len(self.positions)


def chebyshev_gauss_nodes(nsens, L):
    """Chebyshev-Gauss nodes mapped from (-1, 1) to (0, L), ascending."""
    k = np.arange(1, nsens + 1)
    xi = np.cos((2 * k - 1) * np.pi / (2 * nsens))
    return np.sort(0.5 * L * (1.0 + xi))


def quadrature_weights(layout: SensorLayout, L):
    """Weights w_i with integral_0^L f dx ~ sum w_i f(x_i).

    Rectangular and trapezoidal assume an equidistant grid; the trapezoidal
    rule extends the grid by the known-zero boundary points (standard
    endpoint weights, zero-valued nodes). Chebyshev-Gauss compensates the
    node density with sin-weights and requires the sensors to sit at the
    Chebyshev nodes.
    """
    x = np.asarray(layout.positions, float)
    n = layout.nsens
    if n < 1:
        raise IdentificationError("at least one sensor required")
    if np.any(x < 0) or np.any(x > L):
        raise IdentificationError("sensor positions outside [0, L]")

    if layout.quadrature == "chebyshev-gauss":
        nodes = chebyshev_gauss_nodes(n, L)
        if not np.allclose(x, nodes, rtol=0, atol=1e-9 * L):
            raise IdentificationError(
                "chebyshev-gauss quadrature requires sensors at the Chebyshev nodes"
            )
        k = np.arange(1, n + 1)
        xi = np.cos((2 * k - 1) * np.pi / (2 * n))
        w = 0.5 * L * (np.pi / n) * np.sqrt(1.0 - xi**2)
        return w[np.argsort(xi)]

    if n == 1:
        # Degenerate single-sensor case: the discrete estimator with a unit
        # weight (any positive constant cancels in the damping ratio).
        if layout.quadrature == "rectangular" or not layout.known_zero_boundaries:
            return np.array([L])

    grid = np.array(sorted(set(x) | set(layout.known_zero_boundaries)))
    h = np.diff(grid)
    if h.size and np.ptp(h) <= 4 * np.spacing(grid[-1] - grid[0]):
        # uniform grid: use the common spacing so the interior trapezoid
        # weights coincide exactly with the rectangular ones
        h = np.full_like(h, h[0])
    if layout.quadrature == "rectangular":
        spacing = h[0] if h.size else L
        return np.full(n, spacing)

    # composite trapezoid on the extended grid, then keep sensor weights
    w_grid = np.zeros(grid.size)
    w_grid[:-1] += 0.5 * h
    w_grid[1:] += 0.5 * h
    sensor_idx = np.searchsorted(grid, x)
    return w_grid[sensor_idx]


def damping_model_free(q1_sens, qb_hat, weights):
    """Model-free modal damping ratio from weighted response inner products.

    D = 0.5 |sum w_i conj(q1_i) qb| / sum w_i |q1_i|^2, the quadrature
    realization of the continuous power balance (uniform transverse base
    direction). Unit weights recover the plain discrete estimator.
    """
    q1 = np.asarray(q1_sens, complex)
    w = np.asarray(weights, float)
    if qb_hat <= 0:
        raise IdentificationError("qb_hat must be real positive (phase convention)")
    den = float(w @ np.abs(q1) ** 2)
    if den == 0.0:
        raise IdentificationError("no response measured (all sensors zero)")
    num = abs(np.sum(w * np.conj(q1)) * qb_hat)
    return 0.5 * num / den


def estimate_modal_coordinates(q1_sens, Phi_sens, rcond=1e-10):
    """Least-squares estimate of the fundamental linear modal coordinates.

    Solves Phi_sens @ eta1 = q1_sens; raises IllPosedSensorLayout when the
    sampled basis is rank deficient for nsens >= nmod.
    """
    Phi = np.asarray(Phi_sens, float)
    q1 = np.asarray(q1_sens, complex)
    eta1, _, rank, _ = np.linalg.lstsq(Phi, q1, rcond=rcond)
    if Phi.shape[0] >= Phi.shape[1] and rank < Phi.shape[1]:
        raise IllPosedSensorLayout(
            f"sampled mode-shape matrix rank {rank} < {Phi.shape[1]} modes"
        )
    return eta1


def damping_model_based(q1_sens, qb_hat, Phi_sens, gamma, rcond=1e-10):
    """Model-based modal damping ratio.

    Fits the sensor fundamentals onto the sampled mass-normalized linear
    basis and evaluates D = 0.5 |eta1^H gamma qb| / (eta1^H eta1) with the
    base participation vector gamma = Phi^T M b.
    Returns ``(D, eta1)``.
    """
    if qb_hat <= 0:
        raise IdentificationError("qb_hat must be real positive (phase convention)")
    eta1 = estimate_modal_coordinates(q1_sens, Phi_sens, rcond=rcond)
    den = float(np.real(np.vdot(eta1, eta1)))
    if den == 0.0:
        raise IdentificationError("no response measured (all sensors zero)")
    D = 0.5 * abs(np.vdot(eta1, np.asarray(gamma, float)) * qb_hat) / den
    return D, eta1


def damping_force_excitation(q1, f1, omega, a):
    """Damping ratio from measured excitation force (shaker-stinger case).

    D = P1 / (omega^3 a^2) with the period-averaged active power of the
    fundamental force harmonic P1 = omega/2 * Im(q1^H f1) under the
    convention q(t) = Re(q1 e^{i omega t}).
    """
    if a <= 0 or omega <= 0:
        raise IdentificationError("omega and a must be positive")
    q1 = np.atleast_1d(np.asarray(q1, complex))
    f1 = np.atleast_1d(np.asarray(f1, complex))
    return float(np.imag(np.vdot(q1, f1))) / (2.0 * omega**2 * a**2)


def modal_amplitude(q1_sens, Phi_sens, rcond=1e-10):
    """Mass-normalized modal amplitude a = ||pinv(Phi) q1||."""
    eta1 = estimate_modal_coordinates(q1_sens, Phi_sens, rcond=rcond)
    return float(np.linalg.norm(eta1))


def mass_normalized_shape(qh_sens, a, theta):
    """Per-harmonic mass-normalized deflection v_h = q_h e^{-i theta} / a."""
    if a <= 0:
        raise IdentificationError("amplitude must be positive")
    return np.asarray(qh_sens, complex) * np.exp(-1j * theta) / a


def check_phase_resonance(q1_ref, qb_hat):
    """Deviation of the reference channel phase from the -90 deg resonant lag.

    ``qb_hat`` may be complex; the reference fundamental is rotated into the
    qb-real-positive gauge first. Returns the signed error in radians.
    """
    qb = complex(qb_hat)
    if qb == 0:
        raise IdentificationError("zero base motion")
    q1 = complex(q1_ref) * np.exp(-1j * np.angle(qb))
    if abs(q1) == 0.0:
        raise IdentificationError("reference response is zero; phase indeterminate")
    err = np.angle(q1) + np.pi / 2.0
    return float((err + np.pi) % (2.0 * np.pi) - np.pi)


def rotate_to_base_phase(spectra, qb_hat):
    """Rotate fundamental spectra so the base coefficient is real positive.

    ``spectra`` holds complex coefficients per harmonic h = 0..H (first axis);
    harmonic h is rotated by e^{-i h arg(qb)}. Returns (spectra_rot, |qb|).
    """
    phase = np.angle(complex(qb_hat))
    spectra = np.asarray(spectra, complex)
    h = np.arange(spectra.shape[0]).reshape((-1,) + (1,) * (spectra.ndim - 1))
    return spectra * np.exp(-1j * h * phase), abs(qb_hat)
