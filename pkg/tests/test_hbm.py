"""Harmonic-balance nonlinear-mode solver: AFT elements, residual and
Jacobian correctness, backbone limits and refinement behavior."""

import numpy as np
import pytest

from basemodal.beams import BeamConfig, BendingStretching, JenkinsElement, build_beam_model
from basemodal.hbm import (BackboneReference, ContinuationStall, HbmError,
                           HbmProblem, aft_force, coeffs_to_complex,
                           continue_backbone, epmc_residual, fourier_matrices,
                           jenkins_aft, power_balance_damping,
                           _linearized_mode)


def linear_model(nmod=3, zeta=0.01):
    cfg = BeamConfig("cantilever", 12.49, 7.047, 0.7, nmod, (zeta,))
    return build_beam_model(cfg)


def friction_small_model(kt=1000.2924198250731, muN=1.0):
    cfg = BeamConfig("cantilever", 12.49, 7.047, 0.7, 5, (0.01,))
    return build_beam_model(cfg, JenkinsElement(x_c=0.3, kt=kt, muN=muN))


def stretch_small_model(nmod=5):
    cfg = BeamConfig("clamped-clamped", 0.245, 0.1078, 0.14, nmod, (0.01,))
    return build_beam_model(cfg, BendingStretching(EA_over_2L=2.88e6 / 0.28))


# ------------------------------------------------------------------- Fourier

def test_fourier_projection_inverts_sampling():
    T, E = fourier_matrices(5, 64)
    assert np.max(np.abs(E @ T - np.eye(11))) < 1e-12


def test_coeffs_to_complex_layout():
    c = coeffs_to_complex(np.array([1.0, 2.0, 3.0, 4.0, 5.0]), 2)
    assert np.allclose(c, [1.0, 2.0 - 3.0j, 4.0 - 5.0j])


# ----------------------------------------------------------------------- AFT

def test_jenkins_aft_stick_is_memoryless_spring():
    # stuck element: linear spring up to a static force gauge (the slider
    # rests at the first sample), so all oscillating harmonics match kt*w
    tau = 2 * np.pi * np.arange(128) / 128
    w = 1e-4 * np.cos(tau)  # kt*|w| far below muN
    f, _ = jenkins_aft(w, 100.0, 1.0)
    df = f - np.mean(f)
    dw = w - np.mean(w)
    assert np.max(np.abs(df - 100.0 * dw)) < 1e-12


def test_jenkins_aft_jacobian_matches_finite_differences():
    rng = np.random.default_rng(3)
    tau = 2 * np.pi * np.arange(64) / 64
    kt, muN = 50.0, 1.0
    w = (2.5 * np.cos(tau) + 0.8 * np.sin(2 * tau)) * muN / kt
    f0, J = jenkins_aft(w, kt, muN, want_jac=True)
    h = 1e-7 * muN / kt
    checked = 0
    for n in rng.choice(64, size=16, replace=False):
        wp, wm = w.copy(), w.copy()
        wp[n] += h
        wm[n] -= h
        fp, _ = jenkins_aft(wp, kt, muN)
        fm, _ = jenkins_aft(wm, kt, muN)
        fwd = (fp - f0) / h
        bwd = (f0 - fm) / h
        if np.max(np.abs(fwd - bwd)) > 1e-3 * kt:
            continue  # perturbation straddles a stick/slip kink
        assert np.max(np.abs(J[:, n] - 0.5 * (fwd + bwd))) < 1e-5 * kt
        checked += 1
    assert checked >= 8


def test_aft_zero_displacement_zero_force():
    for model in (friction_small_model(), stretch_small_model()):
        prob = HbmProblem(model=model, a_start=1e-4, a_end=1e-3)
        g, _ = aft_force(np.zeros((model.nmod, 2 * prob.H + 1)), prob)
        assert np.all(g == 0.0)


def test_aft_cubic_harmonic_content():
    # pure fundamental cosine through the cubic element: force in harmonics
    # 1 and 3 only, amplitude ratio 3:1 (cos^3 = (3 cos + cos 3)/4)
    model = stretch_small_model(nmod=1)
    prob = HbmProblem(model=model, a_start=1e-6, a_end=1e-5, H=7, Ntime=256)
    c = np.zeros((1, 15))
    c[0, 1] = 1e-4
    g, _ = aft_force(c, prob)
    gh = coeffs_to_complex(g[0], 7)
    assert abs(gh[1].real / gh[3].real - 3.0) < 1e-10
    others = np.delete(np.abs(gh), [1, 3])
    assert np.max(others) < 1e-12 * abs(gh[1])


def test_aft_stick_regime_has_no_higher_harmonics():
    model = friction_small_model(kt=100.0, muN=10.0)
    prob = HbmProblem(model=model, a_start=1e-6, a_end=1e-5)
    c = np.zeros((model.nmod, 2 * prob.H + 1))
    c[0, 1] = 1e-4  # stays stuck: linear spring, fundamental only
    g, _ = aft_force(c, prob)
    gh = np.array([coeffs_to_complex(g[j], prob.H) for j in range(model.nmod)])
    assert np.max(np.abs(gh[:, 2:])) < 1e-14 * np.max(np.abs(gh[:, 1]))


# ------------------------------------------------------------------ residual

def z_from(model, prob, a, omega, D, u):
    nb = 2 * prob.H + 1
    z = np.zeros(model.nmod * nb + 2)
    z[:-2].reshape(model.nmod, nb)[:, 1] = a * u
    z[-2], z[-1] = omega, D
    return z


def test_linear_mode_is_exact_residual_root():
    model = linear_model(zeta=0.013)
    prob = HbmProblem(model=model, a_start=1e-3, a_end=1.0)
    prob._anchor = 0
    u = np.zeros(model.nmod)
    u[0] = 1.0
    a = 0.05
    z = z_from(model, prob, a, model.omega_lin[0], 0.013, u)
    R = epmc_residual(z, prob, a)
    assert np.max(np.abs(R)) < 1e-12 * model.omega_lin[0] ** 2 * a


@pytest.mark.parametrize("make", [friction_small_model, stretch_small_model])
def test_residual_jacobian_matches_finite_differences(make):
    model = make()
    prob = HbmProblem(model=model, a_start=1e-4, a_end=1e-2, H=3, Ntime=64)
    prob._anchor = 0
    rng = np.random.default_rng(7)
    omega0, D0, u = _linearized_mode(model, 1)
    a = 2e-4 if isinstance(model.nonlinearity, JenkinsElement) else 2e-5
    z = z_from(model, prob, a, omega0, D0, u)
    z[:-2] += 0.1 * a * rng.standard_normal(z.size - 2)
    R0, J = epmc_residual(z, prob, a, want_jac=True)
    scale = np.max(np.abs(J))
    checked = 0
    for k in rng.choice(z.size, size=18, replace=False):
        h = 1e-6 * max(abs(z[k]), a)
        zp, zm = z.copy(), z.copy()
        zp[k] += h
        zm[k] -= h
        fwd = (epmc_residual(zp, prob, a) - R0) / h
        bwd = (R0 - epmc_residual(zm, prob, a)) / h
        if np.max(np.abs(fwd - bwd)) > 1e-3 * scale:
            continue  # perturbation straddles a stick/slip kink
        assert np.max(np.abs(J[:, k] - 0.5 * (fwd + bwd))) < 1e-5 * scale
        checked += 1
    assert checked >= 10


# ------------------------------------------------------------------ backbones

def test_linear_backbone_is_flat():
    model = linear_model(zeta=0.008)
    prob = HbmProblem(model=model, a_start=1e-4, a_end=1e-1)
    bb = continue_backbone(prob)
    assert np.max(np.abs(bb.omega - model.omega_lin[0])) < 1e-9 * model.omega_lin[0]
    assert np.max(np.abs(bb.D - 0.008)) < 1e-9


def test_backbone_fundamental_shape_mass_normalized(friction_backbone):
    # holds to the Newton tolerance of the amplitude constraint
    for p in friction_backbone.points[::5]:
        assert abs(np.sum(np.abs(p.vhat[1]) ** 2) - 1.0) < 1e-5


def test_friction_backbone_low_amplitude_matches_stuck_mode(friction_model,
                                                            friction_backbone):
    m = friction_model
    nl = m.nonlinearity
    A = np.diag(m.omega_lin**2) + nl.kt * np.outer(m._phi_c, m._phi_c)
    om_stuck = np.sqrt(np.linalg.eigvalsh(A)[0])
    p0 = friction_backbone.points[0]
    assert abs(p0.omega - om_stuck) / om_stuck < 1e-4


def test_friction_backbone_high_amplitude_approaches_free_beam(friction_model,
                                                               friction_backbone):
    # fully slipping limit: the Jenkins element saturates and the mode
    # returns to the plain beam frequency
    om_free = friction_model.omega_lin[0]
    p = friction_backbone.points[-1]
    assert abs(p.omega - om_free) / om_free < 5e-3


def test_friction_backbone_damping_trend(friction_model, friction_backbone):
    D = friction_backbone.D
    # stuck limit: modal damping of the linearized stuck mode (the plain
    # beam's 1 % per mode mapped through the stiffened frequency)
    _, D_stuck, _ = _linearized_mode(friction_model, 1)
    assert abs(D[0] - D_stuck) / D_stuck < 1e-2
    assert abs(D_stuck - 0.01) / 0.01 < 0.25
    assert 0.06 <= np.max(D) <= 0.10  # micro-slip maximum
    assert D[-1] < 0.6 * np.max(D)  # decays again in the slipping limit


def test_geometric_backbone_hardening_and_damping(geometric_model,
                                                  geometric_backbone):
    om = geometric_backbone.omega
    assert np.all(np.diff(om) > 0)
    assert (om[-1] - om[0]) / om[0] > 0.15
    # prescribed viscous modal damping: D(a) = zeta1 omega1 / omega(a)
    # while the first mode dominates (moderate hardening)
    pred = 0.01 * geometric_model.omega_lin[0] / om
    mask = om < 1.25 * om[0]
    assert np.max(np.abs(geometric_backbone.D[mask] - pred[mask])
                  / pred[mask]) < 5e-3
    # strong hardening: modal interactions push D a few percent off at most
    assert np.max(np.abs(geometric_backbone.D - pred) / pred) < 0.05


def test_power_balance_reproduces_solved_damping(friction_backbone,
                                                 friction_model,
                                                 geometric_backbone,
                                                 geometric_model):
    for model, bb in ((friction_model, friction_backbone),
                      (geometric_model, geometric_backbone)):
        prob = HbmProblem(model=model, a_start=bb.a[0] / 2, a_end=bb.a[-1] * 2)
        for p in bb.points[::5]:
            D = power_balance_damping(prob, p)
            # limited by the Newton tolerance of the stored point
            assert abs(D - p.D) < 1e-4 * max(p.D, 1e-3)


def test_harmonic_truncation_converged(friction_model):
    # doubling the harmonic order changes the backbone frequency by < 0.1 %
    bbs = []
    for H in (7, 14):
        prob = HbmProblem(model=friction_model, a_start=2e-2, a_end=2e-1,
                          H=H, Ntime=128 if H == 7 else 256)
        bbs.append(continue_backbone(prob))
    la = np.log10(bbs[0].a[1:-1])
    om14 = np.interp(la, np.log10(bbs[1].a), bbs[1].omega)
    assert np.max(np.abs(bbs[0].omega[1:-1] - om14) / om14) < 1e-3


def test_modal_truncation_converged():
    # 5 vs 8 retained modes: backbone frequency within 0.5 %
    bbs = []
    for nmod in (5, 8):
        cfg = BeamConfig("cantilever", 12.49, 7.047, 0.7, nmod, (0.01,))
        model = build_beam_model(cfg, JenkinsElement(x_c=0.3,
                                                     kt=1000.2924198250731,
                                                     muN=1.0))
        prob = HbmProblem(model=model, a_start=2e-2, a_end=2e-1)
        bbs.append(continue_backbone(prob))
    la = np.log10(bbs[0].a[1:-1])
    om8 = np.interp(la, np.log10(bbs[1].a), bbs[1].omega)
    assert np.max(np.abs(bbs[0].omega[1:-1] - om8) / om8) < 5e-3


# ---------------------------------------------------------------- validation

def test_problem_validation():
    model = linear_model()
    with pytest.raises(HbmError):
        HbmProblem(model=model, a_start=1e-3, a_end=1.0, H=0)
    with pytest.raises(HbmError):
        HbmProblem(model=model, a_start=1e-3, a_end=1.0, H=7, Ntime=16)
    with pytest.raises(HbmError):
        HbmProblem(model=model, a_start=0.0, a_end=1.0)
    with pytest.raises(HbmError):
        HbmProblem(model=model, a_start=1.0, a_end=0.5)


def test_unconvergable_first_point_raises():
    model = friction_small_model()
    prob = HbmProblem(model=model, a_start=1e-2, a_end=1e-1,
                      max_newton_iter=1, newton_tol=1e-14)
    with pytest.raises(HbmError):
        continue_backbone(prob)
