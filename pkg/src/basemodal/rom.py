"""Single-nonlinear-mode reduced-order model for forced-response prediction.

The backbone data (amplitude-dependent modal frequency, damping ratio and
mass-normalized complex deflection shape) defines a nonlinear modal
oscillator. Near phase resonance the steady-state response to base
excitation is approximated by that single mode:

    (omega(a)^2 - Omega^2 + 2 i D(a) omega(a) Omega) a e^{i theta}
        = Omega^2 qb_hat (v1(a)^H gamma)

Solving the squared magnitude of this equation for Omega^2 at each
amplitude grid point yields the full frequency-response branch, including
folded (overhanging) parts, without numerical continuation. Stability is
classified from the averaged slow-flow Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator


class RomError(Exception):
    pass


class AmplitudeRangeError(RomError):
    """Requested amplitude outside the tabulated backbone range."""


@dataclass
class ModalOscillatorTable:
    """Tabulated nonlinear mode: omega(a), D(a) and coupling |v1^H gamma|.

    ``a`` must be strictly increasing and positive. ``v1`` holds the
    mass-normalized complex fundamental modal coordinates per grid point,
    shape (npts, nmod); frequency and damping interpolate monotonically
    (pchip), the shape linearly.
    """

    a: np.ndarray
    omega: np.ndarray
    D: np.ndarray
    v1: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, float)
        self.omega = np.asarray(self.omega, float)
        self.D = np.asarray(self.D, float)
        self.v1 = np.asarray(self.v1, complex)
        self.gamma = np.asarray(self.gamma, float)
        if self.a.size < 2 or np.any(np.diff(self.a) <= 0) or self.a[0] <= 0:
            raise RomError("amplitude grid must be positive, strictly increasing")
        if not (self.a.size == self.omega.size == self.D.size == len(self.v1)):
            raise RomError("inconsistent table column lengths")
        if np.any(self.omega <= 0) or np.any(self.D < 0):
            raise RomError("invalid omega/D data")
        self._om = PchipInterpolator(self.a, self.omega)
        self._D = PchipInterpolator(self.a, self.D)
        self._vre = PchipInterpolator(self.a, self.v1.real, axis=0)
        self._vim = PchipInterpolator(self.a, self.v1.imag, axis=0)

    @classmethod
    def from_backbone(cls, backbone, gamma):
        """Build the table from a continued backbone reference."""
        v1 = np.array([p.vhat[1] for p in backbone.points])
        return cls(a=backbone.a.copy(), omega=backbone.omega.copy(),
                   D=backbone.D.copy(), v1=v1, gamma=np.asarray(gamma, float))

    def _check(self, a):
        a = np.asarray(a, float)
        if np.any(a < self.a[0]) or np.any(a > self.a[-1]):
            raise AmplitudeRangeError(
                f"amplitude outside tabulated range [{self.a[0]:g}, {self.a[-1]:g}]"
            )
        return a

    def interpolate(self, a):
        """(omega, D, v1) at amplitude a; rejects out-of-range queries."""
        a = self._check(a)
        return (self._om(a), self._D(a),
                self._vre(a) + 1j * self._vim(a))

    def coupling(self, a):
        """|v1(a)^H gamma|, the effective base-excitation participation."""
        _, _, v1 = self.interpolate(a)
        return np.abs(np.conj(v1) @ self.gamma)


@dataclass
class FrfBranch:
    """One forced-response solution branch on the amplitude grid.

    ``theta`` is the phase of the modal amplitude relative to the (real
    positive) base excitation fundamental; ``stable`` from the slow-flow
    Jacobian, with ``marginal`` flagging points whose leading eigenvalue
    is within tolerance of zero.
    """

    a: np.ndarray
    Omega: np.ndarray
    theta: np.ndarray
    stable: np.ndarray
    marginal: np.ndarray
    truncated_low: bool = False
    truncated_high: bool = False

    def response_fundamental(self, Phi_sens, table: ModalOscillatorTable):
        """Complex sensor fundamentals along the branch, shape (npts, nsens)."""
        _, _, v1 = table.interpolate(self.a)
        return (v1 * (self.a * np.exp(1j * self.theta))[:, None]) @ np.asarray(Phi_sens).T


def _slow_flow_stable(a, Omega, om, D, E, tol=1e-8):
    """Stability of one steady state of the averaged modal oscillator.

    Slow flow of a'' + 2 D om a' + om(a)^2 a = E cos(Omega t):
        a'    = -D om a - E/(2 Omega) sin(beta)
        a b'  = (om^2 - Omega^2) a / (2 Omega) - E/(2 Omega) cos(beta)
    Returns (stable, marginal) from the Jacobian eigenvalues, with the
    amplitude dependence of om and D retained via finite differences.
    """
    da = 1e-6 * a
    dom = float((om(a + da) - om(a - da)) / (2 * da))
    dD = float((D(a + da) - D(a - da)) / (2 * da))
    oma, Da = float(om(a)), float(D(a))
    # steady state: sin/cos(beta) from the two balance equations
    sinb = -2.0 * Omega * Da * oma * a / E
    cosb = (oma**2 - Omega**2) * a / E
    g = E / (2.0 * Omega)
    J = np.empty((2, 2))
    J[0, 0] = -(Da * oma + a * (dD * oma + Da * dom))
    J[0, 1] = -g * cosb
    J[1, 0] = (2.0 * oma * dom) / (2.0 * Omega) + g * cosb / a**2
    J[1, 1] = g * sinb / a
    ev = np.linalg.eigvals(J)
    lead = np.max(ev.real)
    scale = max(abs(Da * oma), abs(Omega - oma), 1e-12)
    return bool(lead < tol * scale), bool(abs(lead) <= tol * scale)


def solve_forced_response(table: ModalOscillatorTable, level,
                          excitation="base-displacement",
                          a_grid=None):
    """Frequency response of the single-mode oscillator at one level.

    ``level`` is the base displacement fundamental amplitude [m] for
    ``base-displacement`` excitation or the base velocity amplitude [m/s]
    for ``base-velocity``. For each amplitude grid point the magnitude
    equation is quadratic in Omega^2; real positive roots are collected
    into branches. Returns a list of ``FrfBranch`` ordered low/high
    frequency, each flagged if the response maximum hit the table edge.
    """
    if level <= 0:
        raise RomError("excitation level must be positive")
    if excitation not in ("base-displacement", "base-velocity"):
        raise RomError(f"unknown excitation kind {excitation!r}")
    if a_grid is None:
        a_grid = np.geomspace(table.a[0], table.a[-1], 400)
    else:
        a_grid = table._check(np.asarray(a_grid, float))

    om, D, v1 = table.interpolate(a_grid)
    geff = np.abs(np.einsum("ij,j->i", np.conj(v1), table.gamma))

    lo, hi = [], []
    for i, a in enumerate(a_grid):
        w2, Dw = om[i] ** 2, D[i] * om[i]
        if excitation == "base-displacement":
            r = geff[i] * level / a
            # (1 - r^2) x^2 - (2 w2 - 4 Dw^2) x + w2^2 = 0, x = Omega^2
            A2, B2, C2 = 1.0 - r * r, -(2.0 * w2 - 4.0 * Dw**2), w2 * w2
        else:
            r = geff[i] * level / a
            # x^2 - (2 w2 - 4 Dw^2 + r^2) x + w2^2 = 0
            A2, B2, C2 = 1.0, -(2.0 * w2 - 4.0 * Dw**2 + r * r), w2 * w2
        if abs(A2) < 1e-14 * max(1.0, abs(B2)):
            roots = [-C2 / B2] if B2 != 0 else []
        else:
            disc = B2 * B2 - 4.0 * A2 * C2
            if disc < 0:
                continue
            sq = np.sqrt(disc)
            roots = [(-B2 - sq) / (2 * A2), (-B2 + sq) / (2 * A2)]
        roots = sorted(x for x in roots if x > 0)
        for k, x in enumerate(roots):
            (lo if k == 0 else hi).append((float(a), float(np.sqrt(x))))

    branches = []
    for pts, side in ((lo, "low"), (hi, "high")):
        if not pts:
            continue
        a_b = np.array([p[0] for p in pts])
        Om_b = np.array([p[1] for p in pts])
        omb, Db, v1b = table.interpolate(a_b)
        if excitation == "base-displacement":
            qb = np.full_like(a_b, level)
        else:
            qb = level / Om_b
        geffb = np.abs(np.einsum("ij,j->i", np.conj(v1b), table.gamma))
        force = Om_b**2 * geffb * qb
        den = omb**2 - Om_b**2 + 2j * Db * omb * Om_b
        theta = np.angle(force / (a_b * den))
        stable = np.empty(a_b.size, bool)
        marginal = np.empty(a_b.size, bool)
        for i in range(a_b.size):
            stable[i], marginal[i] = _slow_flow_stable(
                a_b[i], Om_b[i], table._om, table._D, force[i]
            )
        branches.append(FrfBranch(
            a=a_b, Omega=Om_b, theta=theta, stable=stable, marginal=marginal,
            truncated_low=bool(a_b[0] <= a_grid[0] * (1 + 1e-12)),
            truncated_high=bool(a_b[-1] >= a_grid[-1] * (1 - 1e-12)),
        ))
    return branches


def peak_response(branches):
    """(a_max, Omega_at_max) over all branches of one level."""
    best = None
    for br in branches:
        i = int(np.argmax(br.a))
        if best is None or br.a[i] > best[0]:
            best = (float(br.a[i]), float(br.Omega[i]))
    if best is None:
        raise RomError("no forced-response solutions at this level")
    return best
