"""Modal identification estimators: quadrature weights, damping estimates,
amplitude/shape extraction and their gauge invariances."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from basemodal.beams import BeamConfig, build_beam_model
from basemodal.identify import (IdentificationError, IllPosedSensorLayout,
                                SensorLayout, chebyshev_gauss_nodes,
                                check_phase_resonance, damping_force_excitation,
                                damping_model_based, damping_model_free,
                                estimate_modal_coordinates,
                                mass_normalized_shape, modal_amplitude,
                                quadrature_weights, rotate_to_base_phase)


def pinned_model(nmod=5):
    cfg = BeamConfig("pinned-pinned", 12.49, 7.047, 0.7, nmod, (0.01,))
    return build_beam_model(cfg)


def resonant_mode_response(model, mode, qb=1.0):
    eta1 = np.zeros(model.nmod, complex)
    eta1[mode - 1] = -1j * model.gamma[mode - 1] * qb / (2 * model.zeta[mode - 1])
    return eta1


# ----------------------------------------------------------------- quadrature

def test_trapezoid_two_interior_sensors_weights():
    lay = SensorLayout((1 / 3, 2 / 3), "trapezoidal", known_zero_boundaries=(0.0, 1.0))
    w = quadrature_weights(lay, 1.0)
    assert np.allclose(w, [1 / 3, 1 / 3], rtol=1e-14)


def test_rectangular_equals_trapezoid_on_interior_grid():
    # equidistant interior sensors between two zero-response boundaries:
    # both rules produce identical weights, hence identical estimates
    L = 0.7
    for n in range(2, 10):
        xs = tuple(i * L / (n + 1) for i in range(1, n + 1))
        wr = quadrature_weights(SensorLayout(xs, "rectangular",
                                             known_zero_boundaries=(0.0, L)), L)
        wt = quadrature_weights(SensorLayout(xs, "trapezoidal",
                                             known_zero_boundaries=(0.0, L)), L)
        assert np.array_equal(wr, wt)


def test_trapezoid_sine_integral_error_levels():
    # composite trapezoid of sin(pi x / L): 2.3 % with 5 interior sensors,
    # below 1 % from 9 sensors on
    L = 1.0
    exact = 2.0 * L / np.pi

    def err(n):
        xs = tuple(i * L / (n + 1) for i in range(1, n + 1))
        w = quadrature_weights(SensorLayout(xs, "trapezoidal",
                                            known_zero_boundaries=(0.0, L)), L)
        return abs(w @ np.sin(np.pi * np.asarray(xs) / L) - exact) / exact

    assert 0.020 < err(5) < 0.026
    assert err(9) < 0.01


def test_chebyshev_nodes_and_weights():
    L = 0.7
    x = chebyshev_gauss_nodes(9, L)
    assert np.all(np.diff(x) > 0) and x[0] > 0 and x[-1] < L
    lay = SensorLayout(tuple(x), "chebyshev-gauss")
    w = quadrature_weights(lay, L)
    # integrates the first pinned mode shape accurately
    m = pinned_model()
    phi = m.shape(1, x)
    xg, wg = np.polynomial.legendre.leggauss(512)
    exact = 0.5 * L * wg @ m.shape(1, 0.5 * L * (xg + 1))
    assert abs(w @ phi - exact) / exact < 1e-3


def test_chebyshev_requires_matching_nodes():
    L = 0.7
    xs = tuple(i * L / 6 for i in range(1, 6))
    with pytest.raises(IdentificationError):
        quadrature_weights(SensorLayout(xs, "chebyshev-gauss"), L)


def test_layout_validation():
    with pytest.raises(IdentificationError):
        SensorLayout((0.2, 0.1), "trapezoidal")
    with pytest.raises(IdentificationError):
        SensorLayout((0.1, 0.2), "simpson")
    with pytest.raises(IdentificationError):
        quadrature_weights(SensorLayout((0.1, 0.9), "trapezoidal"), 0.5)


# ---------------------------------------------------------- damping estimates

def test_model_free_single_sensor_closed_form():
    # q1 = -i at phase resonance, qb = 0.02 -> D = 0.01 (weights cancel)
    D = damping_model_free([-1j], 0.02, [1.0])
    assert abs(D - 0.01) < 1e-15


def test_model_free_converges_on_pinned_mode():
    m = pinned_model()
    L = m.config.L
    eta1 = resonant_mode_response(m, 1)
    xs = [i * L / 16 for i in range(1, 16)]
    lay = SensorLayout(tuple(xs), "trapezoidal", known_zero_boundaries=(0.0, L))
    q1 = m.shape_matrix(xs) @ eta1
    D = damping_model_free(q1, 1.0, quadrature_weights(lay, L))
    assert abs(D - 0.01) / 0.01 < 0.01


def test_model_based_exact_with_full_basis():
    m = pinned_model()
    L = m.config.L
    for mode in (1, 3, 5):
        eta1 = resonant_mode_response(m, mode)
        xs = [i * L / 8 for i in range(1, 8)]
        Phi = m.shape_matrix(xs)
        D, eta_est = damping_model_based(Phi @ eta1, 1.0, Phi, m.gamma)
        assert abs(D - 0.01) / 0.01 < 1e-12
        assert np.allclose(eta_est, eta1, rtol=1e-9, atol=1e-9 * np.max(np.abs(eta1)))


def test_model_based_scalar_closed_form():
    # one mode, one sensor: D = gamma qb / (2 eta)
    D, _ = damping_model_based([5j], 0.1, [[1.0]], [2.0])
    assert abs(D - 2.0 * 0.1 / (2 * 5.0)) < 1e-15


def test_model_free_model_based_agree_dense_sensing(friction_backbone,
                                                    friction_model):
    # nonlinear-mode spectra sampled at 30 sensors: the two estimators agree
    # within 1 % (quadrature error only)
    m = friction_model
    L = m.config.L
    p = friction_backbone.points[len(friction_backbone.points) // 2]
    xs = [i * L / 30 for i in range(1, 31)]
    Phi = m.shape_matrix(xs)
    q1 = Phi @ (p.a * p.vhat[1])
    lay = SensorLayout(tuple(xs), "trapezoidal", known_zero_boundaries=(0.0,))
    qb = 1e-4
    D_free = damping_model_free(q1, qb, quadrature_weights(lay, L))
    D_based, _ = damping_model_based(q1, qb, Phi, m.gamma)
    assert abs(D_free - D_based) / D_based < 0.01


def test_force_excitation_unit_example():
    assert abs(damping_force_excitation([-1j], [2.0], 1.0, 1.0) - 1.0) < 1e-15


def test_force_excitation_reactive_force_dissipates_nothing():
    q1 = np.array([0.3 - 0.4j, 0.1j])
    f1 = 2.5 * q1  # in phase with displacement: purely reactive
    assert abs(damping_force_excitation(q1, f1, 3.0, 1.0)) < 1e-15


def test_force_excitation_recovers_sdof_damping():
    om0, zeta, f = 7.3, 0.013, 0.42
    q1 = f / (om0**2 - om0**2 + 2j * zeta * om0 * om0)
    D = damping_force_excitation([q1], [f], om0, abs(q1))
    assert abs(D - zeta) / zeta < 1e-10


def test_degenerate_inputs_rejected():
    with pytest.raises(IdentificationError):
        damping_model_free([1.0 + 0j], -1.0, [1.0])
    with pytest.raises(IdentificationError):
        damping_model_free([0.0j], 1.0, [1.0])
    with pytest.raises(IdentificationError):
        damping_model_based([1.0 + 0j], 0.0, [[1.0]], [1.0])
    with pytest.raises(IdentificationError):
        damping_force_excitation([1j], [1.0], -1.0, 1.0)


def test_rank_deficient_basis_detected():
    Phi = [[1.0, 0.0], [1.0, 0.0]]
    with pytest.raises(IllPosedSensorLayout):
        estimate_modal_coordinates([1.0 + 0j, 1.0 + 0j], Phi)


# ----------------------------------------------------- amplitude, shape, phase

def test_modal_amplitude_euclidean():
    Phi = np.eye(2)
    a = modal_amplitude([3.0 + 0j, 4.0 + 0j], Phi)
    assert abs(a - 5.0) < 1e-14


def test_mass_normalized_shape_round_trip():
    q = np.array([0.3 - 0.2j, 0.7 + 0.1j])
    a, theta = 2.5, 0.8
    v = mass_normalized_shape(q, a, theta)
    assert np.allclose(v * a * np.exp(1j * theta), q, rtol=1e-12)


def test_check_phase_resonance_examples():
    assert abs(check_phase_resonance(-1j, 1.0)) < 1e-15
    assert abs(check_phase_resonance(1.0 + 0j, 1.0) - np.pi / 2) < 1e-15
    # gauge freedom: rotating both channels leaves the error unchanged
    rot = np.exp(0.7j)
    assert abs(check_phase_resonance(-1j * rot, rot)) < 1e-14
    with pytest.raises(IdentificationError):
        check_phase_resonance(0.0, 1.0)
    with pytest.raises(IdentificationError):
        check_phase_resonance(1.0, 0.0)


def test_rotate_to_base_phase_scales_per_harmonic():
    qb = 0.02 * np.exp(0.9j)
    spectra = np.array([0.1 + 0j, 1 - 2j, 0.3 + 0.4j])
    rot, mag = rotate_to_base_phase(spectra, qb)
    assert abs(mag - 0.02) < 1e-17
    assert np.allclose(rot, spectra * np.exp(-1j * np.arange(3) * 0.9), rtol=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.floats(-np.pi, np.pi), st.floats(-6.0, 2.0))
def test_estimates_invariant_to_phase_and_scale(phase, logscale):
    # rotating the whole measurement gauge and rescaling the excitation
    # leaves both damping estimates unchanged to machine precision
    m = pinned_model()
    L = m.config.L
    xs = [i * L / 6 for i in range(1, 6)]
    Phi = m.shape_matrix(xs)
    eta1 = resonant_mode_response(m, 1) + 0.05 * resonant_mode_response(m, 3)
    q1 = Phi @ eta1
    lay = SensorLayout(tuple(xs), "trapezoidal", known_zero_boundaries=(0.0, L))
    w = quadrature_weights(lay, L)
    qb0 = 0.01
    D0_free = damping_model_free(q1, qb0, w)
    D0_based, _ = damping_model_based(q1, qb0, Phi, m.gamma)

    s = 10.0**logscale
    spec = np.stack([np.zeros_like(q1), q1 * s])
    rot, qb = rotate_to_base_phase(spec * np.exp(1j * phase * np.arange(2))[:, None],
                                   qb0 * s * np.exp(1j * phase))
    D_free = damping_model_free(rot[1], qb, w)
    D_based, _ = damping_model_based(rot[1], qb, Phi, m.gamma)
    assert abs(D_free - D0_free) < 1e-12 * D0_free + 1e-15
    assert abs(D_based - D0_based) < 1e-12 * D0_based + 1e-15
