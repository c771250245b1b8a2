"""Truncated modal models of Euler-Bernoulli beams with local or distributed
nonlinearities.

The beam is reduced to its lowest ``nmod`` mass-normalized bending modes.
Base excitation enters through the participation vector
``gamma_j = integral(rhoA * phi_j dx)`` (uniform transverse base direction).
Supported nonlinear attachments: an elastic dry-friction (Jenkins) element at
a single point, or distributed bending-stretching coupling (immovable ends).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BOUNDARIES = ("cantilever", "pinned-pinned", "clamped-clamped")

# Gauss-Legendre resolution used for mode-shape normalization and the
# participation/stretching integrals.
_NGAUSS = 1024


class BeamModelError(Exception):
    """Raised for invalid beam configurations or failed model construction."""


@dataclass(frozen=True)
class BeamConfig:
    """Geometry, material and truncation data of a linear beam model.

    Parameters
    ----------
    boundary : str
        One of ``cantilever``, ``pinned-pinned``, ``clamped-clamped``.
    EI : float
        Bending stiffness [N m^2].
    rhoA : float
        Mass per unit length [kg/m].
    L : float
        Beam length [m].
    nmod : int
        Number of retained bending modes.
    zeta : tuple of float
        Linear modal damping ratio per retained mode.
    """

    boundary: str
    EI: float
    rhoA: float
    L: float
    nmod: int
    zeta: tuple = ()

    def __post_init__(self):
        if self.boundary not in BOUNDARIES:
            raise BeamModelError(f"unknown boundary condition {self.boundary!r}")
        if self.EI <= 0 or self.rhoA <= 0 or self.L <= 0:
            raise BeamModelError("EI, rhoA and L must be positive")
        if self.nmod < 1:
            raise BeamModelError("nmod must be at least 1")
        zeta = tuple(self.zeta)
        if len(zeta) == 1:
            zeta = zeta * self.nmod
        if len(zeta) != self.nmod:
            raise BeamModelError("zeta must have one entry per retained mode")
        if any(z < 0 for z in zeta):
            raise BeamModelError("damping ratios must be non-negative")
        object.__setattr__(self, "zeta", zeta)


@dataclass(frozen=True)
class JenkinsElement:
    """Elastic dry-friction element: spring kt in series with a Coulomb
    slider of limit force muN, attached at position x_c."""

    x_c: float
    kt: float
    muN: float

    def validate(self, L):
        if not 0.0 <= self.x_c <= L:
            raise BeamModelError("Jenkins attachment point outside the beam")
        if self.kt <= 0 or self.muN <= 0:
            raise BeamModelError("Jenkins parameters kt, muN must be positive")


@dataclass(frozen=True)
class BendingStretching:
    """Distributed bending-stretching coupling of a beam with immovable ends.

    The transverse deflection induces the axial force
    ``N = EA_over_2L * (eta^T K eta)`` with ``K_jk = integral(phi_j' phi_k' dx)``,
    which loads the modes as ``g_j = N * (K eta)_j`` (cubic, hardening).
    """

    EA_over_2L: float

    def validate(self, L):
        if self.EA_over_2L <= 0:
            raise BeamModelError("EA_over_2L must be positive")


def _char_root(boundary, j):
    """Root lambda*L of the characteristic equation for mode j (bisection)."""
    if boundary == "pinned-pinned":
        return j * np.pi
    if boundary == "cantilever":
        # cos(x) cosh(x) = -1  <=>  cos(x) + sech(x) = 0, root near (2j-1)pi/2
        f = lambda x: np.cos(x) + 1.0 / np.cosh(x)
        center = (2 * j - 1) * np.pi / 2.0
    else:
        # clamped-clamped: cos(x) cosh(x) = 1  <=>  cos(x) - sech(x) = 0,
        # nontrivial roots near (2j+1)pi/2
        f = lambda x: np.cos(x) - 1.0 / np.cosh(x)
        center = (2 * j + 1) * np.pi / 2.0
    lo, hi = center - 0.6, center + 0.6
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise BeamModelError(f"characteristic-equation bracket failed for mode {j}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if flo * fm <= 0:
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
        if hi - lo < 1e-13 * max(1.0, center):
            break
    return 0.5 * (lo + hi)


def _raw_shape(boundary, lam, x, L):
    """Unnormalized mode shape value(s) at x for root lam = lambda*L / L."""
    z = lam * x
    if boundary == "pinned-pinned":
        return np.sin(z)
    zL = lam * L
    if boundary == "cantilever":
        sigma = (np.cosh(zL) + np.cos(zL)) / (np.sinh(zL) + np.sin(zL))
    else:
        sigma = (np.cosh(zL) - np.cos(zL)) / (np.sinh(zL) - np.sin(zL))
    return (np.cosh(z) - np.cos(z)) - sigma * (np.sinh(z) - np.sin(z))


def _raw_dshape(boundary, lam, x, L):
    """Spatial derivative of the unnormalized shape."""
    z = lam * x
    if boundary == "pinned-pinned":
        return lam * np.cos(z)
    zL = lam * L
    if boundary == "cantilever":
        sigma = (np.cosh(zL) + np.cos(zL)) / (np.sinh(zL) + np.sin(zL))
    else:
        sigma = (np.cosh(zL) - np.cos(zL)) / (np.sinh(zL) - np.sin(zL))
    return lam * ((np.sinh(z) + np.sin(z)) - sigma * (np.cosh(z) - np.cos(z)))


class ModalBeamModel:
    """Mass-normalized truncated modal model of an Euler-Bernoulli beam.

    Attributes
    ----------
    omega_lin : ndarray, shape (nmod,)
        Natural angular frequencies [rad/s], strictly increasing.
    gamma : ndarray, shape (nmod,)
        Base-excitation participation factors, integral(rhoA phi_j dx).
    nonlinearity : JenkinsElement | BendingStretching | None
    K_stretch : ndarray or None
        Matrix of integral(phi_j' phi_k' dx) inner products (only for
        bending-stretching models).
    """

    def __init__(self, config: BeamConfig, nonlinearity=None):
        self.config = config
        self.nonlinearity = nonlinearity
        if nonlinearity is not None:
            nonlinearity.validate(config.L)

        n, L = config.nmod, config.L
        self._lam = np.array(
            [_char_root(config.boundary, j) / L for j in range(1, n + 1)]
        )
        c = np.sqrt(config.EI / config.rhoA)
        self.omega_lin = self._lam**2 * c
        if not np.all(np.diff(self.omega_lin) > 0):
            raise BeamModelError("natural frequencies not strictly increasing")
        self.zeta = np.asarray(config.zeta, float)

        # Normalize shapes so that integral(rhoA phi_j^2 dx) = 1.
        xg, wg = np.polynomial.legendre.leggauss(_NGAUSS)
        xg = 0.5 * L * (xg + 1.0)
        wg = 0.5 * L * wg
        raw = np.array(
            [_raw_shape(config.boundary, lam, xg, L) for lam in self._lam]
        )
        self._norm = np.sqrt(config.rhoA * raw**2 @ wg)
        self.gamma = config.rhoA * (raw @ wg) / self._norm
        # Exact odd/even symmetry: even pinned-pinned modes do not couple to
        # uniform base motion.
        if config.boundary == "pinned-pinned":
            self.gamma[1::2] = 0.0

        self.K_stretch = None
        if isinstance(nonlinearity, BendingStretching):
            draw = np.array(
                [_raw_dshape(config.boundary, lam, xg, L) for lam in self._lam]
            )
            draw /= self._norm[:, None]
            self.K_stretch = (draw * wg) @ draw.T
            self.K_stretch = 0.5 * (self.K_stretch + self.K_stretch.T)

        if isinstance(nonlinearity, JenkinsElement):
            self._phi_c = self.shape_matrix([nonlinearity.x_c])[0]

    @property
    def nmod(self):
        return self.config.nmod

    def shape(self, j, x):
        """phi_j(x) of the mass-normalized shape, 1-based mode index."""
        if not 1 <= j <= self.nmod:
            raise BeamModelError(f"mode index {j} out of range 1..{self.nmod}")
        x = np.asarray(x, float)
        if np.any(x < 0) or np.any(x > self.config.L):
            raise BeamModelError("position outside [0, L]")
        lam = self._lam[j - 1]
        return _raw_shape(self.config.boundary, lam, x, self.config.L) / self._norm[j - 1]

    def shape_matrix(self, positions):
        """Sample all shapes at the given positions, shape (npos, nmod)."""
        return np.column_stack(
            [self.shape(j, np.asarray(positions, float)) for j in range(1, self.nmod + 1)]
        )

    def deflection(self, eta, x):
        """Physical transverse deflection w(x) = sum_j phi_j(x) eta_j."""
        return self.shape_matrix(np.atleast_1d(x)) @ eta

    def nonlinear_modal_force(self, eta, eta_dot, state=None):
        """Modal nonlinear force and updated hysteretic state.

        For a Jenkins element ``state`` is the slider displacement (float,
        defaults to 0); the update is the elastic-perfectly-plastic return
        map. Bending-stretching and plain linear models are stateless.
        Returns ``(g_nl, new_state)``.
        """
        eta = np.asarray(eta, float)
        nl = self.nonlinearity
        if nl is None:
            return np.zeros_like(eta), state
        if isinstance(nl, JenkinsElement):
            s = 0.0 if state is None else float(state)
            w = float(self._phi_c @ eta)
            f = nl.kt * (w - s)
            if abs(f) > nl.muN:
                f = np.sign(f) * nl.muN
                s = w - f / nl.kt
            return self._phi_c * f, s
        # bending-stretching
        Keta = self.K_stretch @ eta
        N = nl.EA_over_2L * float(eta @ Keta)
        return N * Keta, state

    def stretch_potential(self, eta):
        """Strain energy of the bending-stretching coupling (for checks)."""
        if not isinstance(self.nonlinearity, BendingStretching):
            raise BeamModelError("model has no bending-stretching element")
        q = float(eta @ self.K_stretch @ eta)
        return 0.25 * self.nonlinearity.EA_over_2L * q * q

    def linear_base_response(self, Omega, qb_hat):
        """Closed-form fundamental modal response of the linear(ized) beam.

        Steady state of ``eta_j'' + 2 zeta_j w_j eta_j' + w_j^2 eta_j =
        -gamma_j qb''`` with base displacement ``qb_hat cos(Omega t)``
        (qb_hat real > 0). Returns the complex coefficients eta_hat_1.
        """
        den = self.omega_lin**2 - Omega**2 + 2j * self.zeta * self.omega_lin * Omega
        return self.gamma * Omega**2 * qb_hat / den


def build_beam_model(config: BeamConfig, nonlinearity=None) -> ModalBeamModel:
    """Build a mass-normalized truncated modal beam model."""
    return ModalBeamModel(config, nonlinearity)


def rectangular_section_EA(EI, rhoA, E=210e9, rho=7850.0):
    """Axial stiffness EA and thickness h of a rectangular cross-section
    consistent with the given EI and rhoA (steel by default).

    Solves b*h and b*h^3 from A = rhoA/rho and I = EI/E.
    """
    A = rhoA / rho
    I = EI / E
    h = np.sqrt(12.0 * I / A)
    return E * A, h
