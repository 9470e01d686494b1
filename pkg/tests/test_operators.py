from math import pi

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from wpdsim.hilbert import HilbertConfig, TruncationError, coherent_state, fock_state, normalize, tensor_state
from wpdsim.operators import (
    SIGMA_X,
    SIGMA_Y,
    DeviceParams,
    Durations,
    compose,
    conditional_pi_phase,
    dispersive_hamiltonian,
    displacement,
    parity_circuit,
    parity_operator,
    photon_scaling,
    qubit_rotation,
    rotation_2x2,
    selective_pi_on_vacuum,
)

ALPHA = 2 * np.sqrt(2)
CFG = HilbertConfig()
SMALL = HilbertConfig(8)


def test_rotation_convention():
    g = np.array([1, 0])
    assert np.allclose(rotation_2x2(pi / 2, 0) @ g, [1 / np.sqrt(2), 1 / np.sqrt(2)])
    phi = 0.7
    assert np.allclose(rotation_2x2(pi / 2, phi) @ g, [1 / np.sqrt(2), np.exp(1j * phi) / np.sqrt(2)])


@given(st.floats(-2 * pi, 2 * pi), st.floats(0, 2 * pi))
def test_rotation_matches_exponential(angle, phi):
    gen = np.cos(phi) * SIGMA_Y - np.sin(phi) * SIGMA_X
    assert np.allclose(rotation_2x2(angle, phi), expm(-0.5j * angle * gen), atol=1e-12)


def test_vacuum_ramsey_fringe_convention():
    for phi in np.linspace(0, 2 * pi, 9):
        psi = rotation_2x2(pi / 2, 0) @ rotation_2x2(pi / 2, phi) @ np.array([1, 0])
        assert abs(abs(psi[0]) ** 2 - (1 - np.cos(phi)) / 2) < 1e-14


def test_conditional_phase_flips_coherent_state():
    U = conditional_pi_phase(CFG)
    out = U.matrix @ tensor_state([0, 1], coherent_state(ALPHA, CFG))
    target = tensor_state([0, 1], coherent_state(-ALPHA, CFG))
    assert abs(np.vdot(target, out)) ** 2 >= 1 - 1e-9
    g = tensor_state([1, 0], coherent_state(ALPHA, CFG))
    assert np.allclose(U.matrix @ g, g)


def test_conditional_phase_duration_and_hamiltonian():
    p = DeviceParams()
    U = conditional_pi_phase(CFG, p)
    assert abs(U.nominal_duration - 304.878e-9) < 1e-12
    realised = np.diag(np.exp(-1j * np.diag(U.hamiltonian) * U.nominal_duration))
    assert np.allclose(realised, U.matrix, atol=1e-12)


def test_chi_sign_does_not_change_U():
    a = conditional_pi_phase(CFG, DeviceParams()).matrix
    b = conditional_pi_phase(CFG, DeviceParams(chi_qs=-DeviceParams().chi_qs)).matrix
    assert np.array_equal(a, b)


def test_dispersive_kerr_terms():
    p = DeviceParams(kerr_self=2.0, kerr_cross_extra=3.0)
    h = np.diag(dispersive_hamiltonian(p, SMALL).matrix).real
    n = 3
    assert h[n] == pytest.approx(n * (n - 1))
    assert h[SMALL.fock_dim + n] == pytest.approx(p.chi_qs * n + n * (n - 1) + 1.5 * n * (n - 1))


def test_displacement_of_vacuum():
    D = displacement(1.5 - 0.5j, CFG)
    assert np.allclose(D.matrix @ tensor_state([1, 0], fock_state(0, CFG)),
                       tensor_state([1, 0], coherent_state(1.5 - 0.5j, CFG)), atol=1e-8)


@given(st.floats(0, 3), st.floats(0, 2 * pi))
def test_displacement_inverse_pair(r, phase):
    b = r * np.exp(1j * phase)
    m = displacement(b, CFG).matrix @ displacement(-b, CFG).matrix
    # the truncated generator is exactly anti-Hermitian, so the pair inverts to rounding
    assert np.max(np.abs(m - np.eye(CFG.dim))) < 1e-8


def test_displacement_truncation_error():
    with pytest.raises(TruncationError):
        displacement(5.0, CFG)


def test_gates_unitary():
    p = DeviceParams()
    gates = [
        conditional_pi_phase(CFG, p),
        displacement(ALPHA, CFG),
        qubit_rotation(pi / 2, 0.3, CFG),
        qubit_rotation(pi / 2, 0.3, CFG, scale=photon_scaling(8e-9, p, CFG)),
        selective_pi_on_vacuum(p, 0.0, CFG),
        selective_pi_on_vacuum(p, 100e-9, CFG),
    ]
    for g in gates:
        assert g.unitarity_error() < 1e-10


def test_selective_pi_ideal_acts_on_vacuum_only():
    R = selective_pi_on_vacuum(DeviceParams(), 0.0, SMALL).matrix
    assert np.allclose(R @ tensor_state([1, 0], fock_state(0, SMALL)), tensor_state([0, 1], fock_state(0, SMALL)))
    for n in range(1, SMALL.fock_dim):
        psi = tensor_state(normalize(np.array([1, 1j])), fock_state(n, SMALL))
        assert np.allclose(R @ psi, psi)


def test_selective_pi_leakage_law():
    p = DeviceParams()
    sigma = 100e-9
    R = selective_pi_on_vacuum(p, sigma, SMALL).matrix
    for n in range(SMALL.fock_dim):
        lam = np.exp(-((n * p.chi_qs * sigma) ** 2) / 2)
        out = R @ tensor_state([1, 0], fock_state(n, SMALL))
        assert abs(abs(out[SMALL.index(1, n)]) ** 2 - np.sin(pi * lam / 2) ** 2) < 1e-12


def test_parity_operator_expectations():
    P = parity_operator(CFG).matrix
    c = coherent_state(1.0, CFG)
    assert abs(np.vdot(c, P @ c) - np.exp(-2)) < 1e-12
    cat = normalize(coherent_state(ALPHA, CFG) + coherent_state(-ALPHA, CFG))
    assert np.allclose(P @ cat, cat)


def test_parity_circuit_maps_fock_parity_exhaustively():
    cfg = HilbertConfig(12)
    M = compose(parity_circuit(cfg))
    for n in range(cfg.fock_dim):
        for q in (0, 1):
            out = M @ tensor_state(np.eye(2)[q], fock_state(n, cfg))
            flipped = q ^ (n % 2)
            assert abs(abs(out[cfg.index(flipped, n)]) - 1) < 1e-12


def test_parity_circuit_on_coherent_state():
    M = compose(parity_circuit(CFG))
    out = M @ tensor_state([1, 0], coherent_state(ALPHA, CFG))
    p_g = np.sum(np.abs(out[: CFG.fock_dim]) ** 2)
    assert abs(p_g - (1 + np.exp(-2 * ALPHA**2)) / 2) < 1e-12


def test_photon_scaling_zero_width_is_identity():
    assert np.all(photon_scaling(0.0, DeviceParams(), CFG) == 1)
    a = qubit_rotation(pi / 2, 0.2, CFG).matrix
    b = qubit_rotation(pi / 2, 0.2, CFG, scale=np.ones(CFG.fock_dim)).matrix
    assert np.allclose(a, b, atol=1e-14)


def test_device_derived_quantities():
    p = DeviceParams()
    assert abs(p.T2_star - 7.5e-6) < 0.05e-6
    assert DeviceParams(Tphi=np.inf).T2_star == pytest.approx(19e-6)
    assert p.chi_qs_hz == pytest.approx(-1.64e6)
    assert DeviceParams.from_cyclic(-1.64e6).chi_qs == pytest.approx(p.chi_qs)
    assert np.allclose(p.ideal_readout().confusion, np.eye(2))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"chi_qs": 0.0},
        {"T1": 0.0},
        {"Tphi": -1.0},
        {"n_th": -0.1},
        {"p_e_thermal": 1.5},
        {"rotation_sigma": -1e-9},
        {"readout_confusion": ((0.9, 0.2), (0.2, 0.8))},
    ],
)
def test_device_validation(kwargs):
    with pytest.raises(ValueError):
        DeviceParams(**kwargs)


def test_durations_validation():
    with pytest.raises(ValueError):
        Durations(readout=0.0)
