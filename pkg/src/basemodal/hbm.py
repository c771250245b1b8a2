"""Nonlinear-mode backbone reference via multi-harmonic balance.

Computes periodic motions of ``M q'' - 2 D w M q' + g(q, q') = 0`` (modal
coordinates, M = I) with the self-excitation parameter D balancing the
internal dissipation. Nonlinear forces are evaluated by alternating
frequency-time sampling (AFT); the backbone is traversed by adaptive
continuation in log-amplitude with analytic Jacobians throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .beams import BendingStretching, JenkinsElement, ModalBeamModel


class HbmError(Exception):
    pass


class ContinuationStall(HbmError):
    """Continuation step fell below the minimum; partial backbone kept."""


@dataclass
class HbmProblem:
    """Harmonic-balance setup for one backbone computation.

    Amplitudes are mass-normalized modal amplitudes of the fundamental
    harmonic; the continuation runs in log10(a) from a_start to a_end.
    """

    model: ModalBeamModel
    a_start: float
    a_end: float
    H: int = 7
    Ntime: int = 128
    step_init: float = 0.1
    step_min: float = 1e-3
    step_max: float = 0.25
    newton_tol: float = 1e-9
    max_newton_iter: int = 25
    target_mode: int = 1

    def __post_init__(self):
        if self.H < 1:
            raise HbmError("harmonic order must be >= 1")
        if self.Ntime < 4 * self.H + 1:
            raise HbmError("Ntime must be at least 4H+1 (anti-aliasing)")
        if not 0 < self.a_start < self.a_end:
            raise HbmError("need 0 < a_start < a_end")


@dataclass
class BackbonePoint:
    """One point of an amplitude-dependent modal characterization."""

    a: float
    omega: float
    D: float
    vhat: np.ndarray = None  # (H+1, nmod) complex, mass-normalized
    qb_hat: float = None
    residual_norm: float = 0.0
    newton_iters: int = 0


@dataclass
class BackboneReference:
    points: list
    stalled: bool = False

    @property
    def a(self):
        return np.array([p.a for p in self.points])

    @property
    def omega(self):
        return np.array([p.omega for p in self.points])

    @property
    def D(self):
        return np.array([p.D for p in self.points])

    def deflection_fundamental(self, model, x):
        """|w_1(x)| per point: fundamental physical deflection magnitude."""
        phi = model.shape_matrix(np.atleast_1d(x))
        return np.array([np.abs(phi @ (p.a * p.vhat[1])) for p in self.points]).squeeze()


def fourier_matrices(H, N):
    """Sampling matrix T (N x 2H+1) and projection E (2H+1 x N).

    Coefficient layout per signal: [c0, a1, b1, ..., aH, bH] with
    x(tau) = c0 + sum_h a_h cos(h tau) + b_h sin(h tau).
    """
    tau = 2.0 * np.pi * np.arange(N) / N
    T = np.empty((N, 2 * H + 1))
    E = np.empty((2 * H + 1, N))
    T[:, 0] = 1.0
    E[0] = 1.0 / N
    for h in range(1, H + 1):
        T[:, 2 * h - 1] = np.cos(h * tau)
        T[:, 2 * h] = np.sin(h * tau)
        E[2 * h - 1] = 2.0 / N * np.cos(h * tau)
        E[2 * h] = 2.0 / N * np.sin(h * tau)
    return T, E


def coeffs_to_complex(c, H):
    """Real coefficient block [c0, a1, b1, ...] -> complex [c0, a1-i b1, ...]."""
    out = np.empty(H + 1, complex)
    out[0] = c[0]
    out[1:] = c[1::2] - 1j * c[2::2]
    return out


def jenkins_aft(w, kt, muN, max_periods=20, tol=1e-12, want_jac=False):
    """Periodized Jenkins force over one period of displacement samples.

    Marches the elastic-perfectly-plastic return map from the stuck state at
    the first sample until the slider is period-invariant, then returns the
    force samples (and, optionally, the sensitivity matrix df/dw including
    the steady-state slider dependence).
    """
    w = np.asarray(w, float)
    N = w.size
    s = w[0]  # stuck at the first time sample
    scale = max(muN / kt, np.max(np.abs(w)), 1e-30)
    converged = False
    for _ in range(max_periods):
        s_old = s
        for n in range(N):
            f = kt * (w[n] - s)
            if abs(f) > muN:
                f = np.copysign(muN, f)
                s = w[n] - f / kt
        if abs(s - s_old) < tol * scale:
            converged = True
            break
    if not converged:
        raise HbmError("hysteretic state failed to periodize within period cap")

    fvals = np.empty(N)
    slipped = np.empty(N, bool)
    for n in range(N):
        f = kt * (w[n] - s)
        if abs(f) > muN:
            f = np.copysign(muN, f)
            s = w[n] - f / kt
            slipped[n] = True
        else:
            slipped[n] = False
        fvals[n] = f
    if not want_jac:
        return fvals, None

    # propagate ds/dw around the period until the slip pattern makes it
    # periodic (a couple of passes suffice; pure stick keeps ds/dw = 0)
    dfdw = np.zeros((N, N))
    dsdw = np.zeros(N)
    dsdw[0] = 1.0  # stuck slider rests at the first sample
    for _ in range(3):
        for n in range(N):
            if slipped[n]:
                dfdw[n] = 0.0
                dsdw = np.zeros(N)
                dsdw[n] = 1.0
            else:
                dfdw[n] = -kt * dsdw
                dfdw[n, n] += kt
    return fvals, dfdw


def aft_force(coeffs, problem, want_jac=False):
    """Nonlinear modal force coefficients from displacement coefficients.

    ``coeffs`` is the real coefficient matrix (nmod, 2H+1). Returns the
    force coefficients with the same layout and, optionally, the assembled
    Jacobian d g_coeffs / d coeffs of shape (nmod*(2H+1), nmod*(2H+1)).
    The implemented elements are rate-independent, so there is no frequency
    dependence.
    """
    model = problem.model
    H, N = problem.H, problem.Ntime
    n = model.nmod
    T, E = fourier_matrices(H, N)
    eta_t = coeffs @ T.T  # (nmod, N)
    if not np.all(np.isfinite(eta_t)):
        raise HbmError("nonfinite iterate in AFT")
    nb = 2 * H + 1
    nl = model.nonlinearity

    if nl is None:
        g = np.zeros_like(coeffs)
        return (g, np.zeros((n * nb, n * nb))) if want_jac else (g, None)

    if isinstance(nl, JenkinsElement):
        phi = model._phi_c
        w = phi @ eta_t
        f, dfdw = jenkins_aft(w, nl.kt, nl.muN, want_jac=want_jac)
        g_t = np.outer(phi, f)
        g = g_t @ E.T
        if not want_jac:
            return g, None
        core = E @ dfdw @ T  # (nb, nb)
        J = np.einsum("j,k,ab->jakb", phi, phi, core).reshape(n * nb, n * nb)
        return g, J

    # bending-stretching: g = c2 * (eta^T K eta) * K eta per sample
    K = model.K_stretch
    c2 = nl.EA_over_2L
    Keta = K @ eta_t  # (n, N)
    quad = np.einsum("jn,jn->n", eta_t, Keta)  # eta^T K eta per sample
    g_t = c2 * quad * Keta
    g = g_t @ E.T
    if not want_jac:
        return g, None
    # dg_j/deta_k = c2 * (2 (K eta)_j (K eta)_k + quad * K_jk) per sample
    J = np.empty((n, nb, n, nb))
    for j in range(n):
        for k in range(n):
            diag = c2 * (2.0 * Keta[j] * Keta[k] + quad * K[j, k])
            J[j, :, k, :] = E @ (diag[:, None] * T)
    return g, J.reshape(n * nb, n * nb)


def _linearized_mode(model, target_mode):
    """Small-amplitude mode of the beam with a stuck Jenkins spring (if any)."""
    A = np.diag(model.omega_lin**2)
    if isinstance(model.nonlinearity, JenkinsElement):
        phi = model._phi_c
        A = A + model.nonlinearity.kt * np.outer(phi, phi)
    lam, U = np.linalg.eigh(A)
    idx = np.argsort(lam)[target_mode - 1]
    u = U[:, idx]
    omega = np.sqrt(lam[idx])
    cdiag = 2.0 * model.zeta * model.omega_lin
    D = float(u @ (cdiag * u)) / (2.0 * omega)
    if u[np.argmax(np.abs(u))] < 0:
        u = -u
    return omega, D, u


def epmc_residual(z, problem, a, want_jac=False):
    """Residual of the harmonic-balance system at fixed amplitude a.

    Unknowns z = [coeffs (nmod*(2H+1)), omega, D]; the residual stacks the
    per-harmonic balance equations, the fundamental-amplitude constraint and
    the phase anchor (sin-coefficient of the dominant modal fundamental).
    """
    model = problem.model
    n = model.nmod
    H = problem.H
    nb = 2 * H + 1
    c = z[:-2].reshape(n, nb)
    omega, D = z[-2], z[-1]

    g, Jg = aft_force(c, problem, want_jac=want_jac)
    cdiag = 2.0 * model.zeta * model.omega_lin
    K = model.omega_lin**2

    R = np.empty(n * nb + 2)
    for j in range(n):
        blk = R[j * nb : (j + 1) * nb]
        blk[0] = K[j] * c[j, 0] + g[j, 0]
        for h in range(1, H + 1):
            a_h, b_h = c[j, 2 * h - 1], c[j, 2 * h]
            ceff = cdiag[j] - 2.0 * D * omega
            blk[2 * h - 1] = (K[j] - (h * omega) ** 2) * a_h + ceff * h * omega * b_h + g[j, 2 * h - 1]
            blk[2 * h] = (K[j] - (h * omega) ** 2) * b_h - ceff * h * omega * a_h + g[j, 2 * h]

    fund = c[:, 1:3]
    amp2 = float(np.sum(fund**2))
    R[-2] = amp2 / a**2 - 1.0
    janch = _anchor_index(problem, c)
    R[-1] = c[janch, 2] / a

    if not want_jac:
        return R

    m = n * nb
    J = np.zeros((m + 2, m + 2))
    J[:m, :m] = Jg
    for j in range(n):
        r0 = j * nb
        J[r0, r0] += K[j]
        for h in range(1, H + 1):
            ra, rb = r0 + 2 * h - 1, r0 + 2 * h
            a_h, b_h = c[j, 2 * h - 1], c[j, 2 * h]
            ceff = cdiag[j] - 2.0 * D * omega
            J[ra, ra] += K[j] - (h * omega) ** 2
            J[ra, rb] += ceff * h * omega
            J[rb, rb] += K[j] - (h * omega) ** 2
            J[rb, ra] += -ceff * h * omega
            # d/d omega
            J[ra, m] += -2.0 * h * h * omega * a_h + (cdiag[j] - 4.0 * D * omega) * h * b_h
            J[rb, m] += -2.0 * h * h * omega * b_h - (cdiag[j] - 4.0 * D * omega) * h * a_h
            # d/d D
            J[ra, m + 1] += -2.0 * omega**2 * h * b_h
            J[rb, m + 1] += 2.0 * omega**2 * h * a_h
    for j in range(n):
        J[m, j * nb + 1] = 2.0 * c[j, 1] / a**2
        J[m, j * nb + 2] = 2.0 * c[j, 2] / a**2
    J[m + 1, janch * nb + 2] = 1.0 / a
    return R, J


def _anchor_index(problem, c):
    """Modal index used for the phase anchor (dominant fundamental)."""
    return getattr(problem, "_anchor", 0)


def _newton(problem, z, a):
    scale = max(1.0, a * problem.model.omega_lin[-1] ** 2)
    for it in range(1, problem.max_newton_iter + 1):
        R, J = epmc_residual(z, problem, a, want_jac=True)
        rnorm = np.linalg.norm(R) / scale
        if not np.isfinite(rnorm):
            return z, rnorm, it, False
        if rnorm < problem.newton_tol:
            return z, rnorm, it, True
        try:
            dz = np.linalg.solve(J, -R)
        except np.linalg.LinAlgError:
            return z, rnorm, it, False
        z = z + dz
    R = epmc_residual(z, problem, a)
    rnorm = np.linalg.norm(R) / scale
    return z, rnorm, problem.max_newton_iter, rnorm < problem.newton_tol


def _point_from_solution(problem, z, a, rnorm, iters):
    n = problem.model.nmod
    nb = 2 * problem.H + 1
    c = z[:-2].reshape(n, nb)
    vhat = np.array([coeffs_to_complex(c[j], problem.H) for j in range(n)]).T / a
    return BackbonePoint(
        a=a, omega=float(z[-2]), D=float(z[-1]), vhat=vhat,
        residual_norm=float(rnorm), newton_iters=iters,
    )


def continue_backbone(problem: HbmProblem) -> BackboneReference:
    """Trace the backbone from a_start to a_end with adaptive stepping.

    Steps in log10(a) with a secant predictor; the step is halved on Newton
    failure and grown on fast convergence. On stall the partial backbone is
    returned with the ``stalled`` flag set.
    """
    model = problem.model
    n = model.nmod
    nb = 2 * problem.H + 1
    omega0, D0, u = _linearized_mode(model, problem.target_mode)
    problem._anchor = int(np.argmax(np.abs(u)))

    z = np.zeros(n * nb + 2)
    la = np.log10(problem.a_start)
    z[:-2].reshape(n, nb)[:, 1] = problem.a_start * u
    z[-2], z[-1] = omega0, D0

    z, rnorm, iters, ok = _newton(problem, z, problem.a_start)
    if not ok:
        raise HbmError("no converged first backbone point from the linear guess")
    points = [_point_from_solution(problem, z, problem.a_start, rnorm, iters)]

    la_end = np.log10(problem.a_end)
    step = problem.step_init
    z_prev, la_prev = None, None
    stalled = False
    while la < la_end - 1e-12:
        step = min(step, la_end - la)
        la_new = la + step
        a_new = 10.0**la_new
        if z_prev is not None:
            z_pred = z + (z - z_prev) * (la_new - la) / (la - la_prev)
        else:
            z_pred = z.copy()
            z_pred[:-2] *= a_new / 10.0**la
        z_try, rnorm, iters, ok = _newton(problem, z_pred, a_new)
        if ok:
            points.append(_point_from_solution(problem, z_try, a_new, rnorm, iters))
            z_prev, la_prev = z, la
            z, la = z_try, la_new
            if iters <= 5:
                step = min(step * 1.4, problem.step_max)
        else:
            step *= 0.5
            if step < problem.step_min:
                stalled = True
                break
    return BackboneReference(points=points, stalled=stalled)


def power_balance_damping(problem, point: BackbonePoint):
    """D recomputed from the period-averaged fundamental dissipated power.

    P1 = omega/2 * Im(eta1^H h1) with h1 the fundamental coefficient of the
    damping-plus-nonlinear force; at a converged point P1/(omega^3 a^2)
    equals the solved D exactly.
    """
    model = problem.model
    H, N = problem.H, problem.Ntime
    T, E = fourier_matrices(H, N)
    c = (point.a * point.vhat).T  # complex (nmod, H+1) -> real coeffs
    creal = np.empty((model.nmod, 2 * H + 1))
    creal[:, 0] = c[:, 0].real
    creal[:, 1::2] = c[:, 1:].real
    creal[:, 2::2] = -c[:, 1:].imag
    g, _ = aft_force(creal, problem)
    eta1 = c[:, 1]
    g1 = g[:, 1] - 1j * g[:, 2]
    cdiag = 2.0 * model.zeta * model.omega_lin
    h1 = 1j * point.omega * cdiag * eta1 + g1
    P1 = 0.5 * point.omega * float(np.imag(np.vdot(eta1, h1)))
    return P1 / (point.omega**3 * point.a**2)
