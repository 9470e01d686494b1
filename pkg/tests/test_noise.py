from math import pi

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from wpdsim.hilbert import HilbertConfig, coherent_state, fock_state, partial_trace_cavity, tensor_state, to_density
from wpdsim.noise import (
    EvolutionMode,
    NoiseChannel,
    NoiseModel,
    Propagator,
    StepSizeError,
    apply_gate_noisy,
    apply_readout_confusion,
    liouvillian,
    lindblad_evolve,
    standard_channels,
)
from wpdsim.operators import DeviceParams, conditional_pi_phase, dispersive_hamiltonian, qubit_rotation

SMALL = HilbertConfig(6)
P = DeviceParams()


def excited(cfg=SMALL):
    return to_density(tensor_state([0, 1], fock_state(0, cfg)))


def plus(cfg=SMALL):
    return to_density(tensor_state(np.array([1, 1]) / np.sqrt(2), fock_state(0, cfg)))


def only(label, cfg=SMALL, p=P):
    return [c for c in standard_channels(p, cfg) if c.label == label]


def test_channel_rate_validation():
    with pytest.raises(ValueError):
        NoiseChannel(np.eye(2), -1.0)


def test_mode_validation():
    with pytest.raises(ValueError):
        EvolutionMode("fast")
    with pytest.raises(ValueError):
        EvolutionMode("noisy", dt=0)
    with pytest.raises(ValueError):
        EvolutionMode("noisy", gate_timing="before")


def test_t1_decay_at_t1():
    out = lindblad_evolve(excited(), None, only("qubit_decay"), P.T1)
    assert abs(partial_trace_cavity(out)[1, 1].real - np.exp(-1)) < 1e-6


def test_coherence_decays_at_t2_star():
    out = lindblad_evolve(plus(), None, standard_channels(P, SMALL), P.T2_star)
    assert abs(abs(partial_trace_cavity(out)[0, 1]) - 0.5 * np.exp(-1)) < 1e-5


def test_cavity_photon_loss():
    cfg = HilbertConfig(25)
    rho = to_density(tensor_state([1, 0], coherent_state(2.0, cfg)))
    t = 20e-6
    out = lindblad_evolve(rho, None, only("cavity_decay", cfg), t)
    n = np.real(np.trace(np.kron(np.eye(2), np.diag(np.arange(25))) @ out))
    assert abs(n - 4 * np.exp(-t / P.tau_s)) < 1e-6


def test_zero_channels_diagonal_hamiltonian_is_exact():
    H = dispersive_hamiltonian(P, SMALL).matrix
    rho = to_density(tensor_state(np.array([1, 1j]) / np.sqrt(2), coherent_state(0.5, HilbertConfig(6, strict=False))))
    t = 123e-9
    u = expm(-1j * H * t)
    out = lindblad_evolve(rho, H, [], t)
    assert np.max(np.abs(out - u @ rho @ u.conj().T)) < 1e-9


def _rk4_loop(prop, v, duration, dt):
    """Textbook Lawson RK4, stepped explicitly."""
    n = int(np.ceil(duration / dt - 1e-9))
    h = duration / n
    d = prop.diag[:, None]
    e1, e2 = np.exp(d * h), np.exp(d * h / 2)
    J = prop.jumps
    for _ in range(n):
        k1 = J @ v
        k2 = J @ (e2 * v + h / 2 * e2 * k1)
        k3 = J @ (e2 * v + h / 2 * k2)
        k4 = J @ (e1 * v + h * e2 * k3)
        v = e1 * v + h / 6 * (e1 * k1 + 2 * e2 * (k2 + k3) + k4)
    return v


def test_step_power_equals_explicit_stepping():
    cfg = HilbertConfig(5, strict=False)
    chans = standard_channels(P, cfg)
    H = dispersive_hamiltonian(P, cfg).matrix
    prop = Propagator(H, chans, cfg.dim, 1e-9)
    rho = 0.5 * to_density(tensor_state([0.6, 0.8j], coherent_state(1.0, cfg))) + 0.5 * excited(cfg)
    v = rho.reshape(-1, 1)
    assert np.max(np.abs(prop.evolve_vec(v, 437e-9) - _rk4_loop(prop, v, 437e-9, 1e-9))) < 1e-12


def test_rk4_matches_exact_generator():
    cfg = HilbertConfig(4, strict=False)
    chans = standard_channels(P, cfg)
    L = liouvillian(dispersive_hamiltonian(P, cfg).matrix, chans, cfg.dim).toarray()
    rho = to_density(tensor_state([0.6, 0.8], coherent_state(0.8, cfg)))
    t = 2e-6
    exact = (expm(L * t) @ rho.reshape(-1)).reshape(cfg.dim, cfg.dim)
    out = lindblad_evolve(rho, dispersive_hamiltonian(P, cfg), chans, t)
    assert np.max(np.abs(out - exact)) < 1e-10


def test_trace_hermiticity_positivity():
    cfg = HilbertConfig(10)
    model = NoiseModel.from_device(P, cfg)
    rho = to_density(tensor_state(np.array([1, 1]) / np.sqrt(2), coherent_state(1.0, HilbertConfig(10, strict=False))))
    out = model.evolve(rho, 3e-6)
    assert abs(np.trace(out) - 1) < 1e-8
    assert np.max(np.abs(out - out.conj().T)) < 1e-9
    assert np.linalg.eigvalsh(out)[0] > -1e-7
    assert model.max_trace_drift < 1e-8
    assert model.min_eigenvalue > -1e-7


def test_large_step_raises():
    fast = [NoiseChannel(np.kron(np.array([[0, 1], [0, 0]]), np.eye(3)), 5e9)]
    rho = to_density(tensor_state([0, 1], fock_state(0, HilbertConfig(3))))
    with pytest.raises(StepSizeError):
        lindblad_evolve(rho, None, fast, 10e-9, dt=1e-9)


def test_negative_duration():
    with pytest.raises(ValueError):
        NoiseModel.from_device(P, SMALL).evolve(excited(), -1e-9)


def test_batched_evolution_matches_single():
    model = NoiseModel.from_device(P, SMALL)
    a, b = excited(), plus()
    stack = model.evolve(np.stack([a, b]), 200e-9)
    assert np.allclose(stack[0], model.evolve(a, 200e-9), atol=1e-14)
    assert np.allclose(stack[1], model.evolve(b, 200e-9), atol=1e-14)


def test_noisy_pi2_pulse_coherence_factor():
    gate = qubit_rotation(pi / 2, 0.0, SMALL, duration=8e-9)
    rho = to_density(tensor_state([1, 0], fock_state(0, SMALL)))
    chans = standard_channels(P, SMALL)
    after = apply_gate_noisy(rho, gate, chans, EvolutionMode("noisy", gate_timing="after"))
    assert abs(abs(partial_trace_cavity(after)[0, 1]) - 0.5 * np.exp(-8e-9 / P.T2_star)) < 1e-9
    split = apply_gate_noisy(rho, gate, chans, EvolutionMode("noisy"))
    assert abs(abs(partial_trace_cavity(split)[0, 1]) - 0.5 * np.exp(-4e-9 / P.T2_star)) < 1e-9


def test_noisy_U_realised_by_hamiltonian():
    cfg = HilbertConfig(25)
    psi = tensor_state(np.array([1, 1]) / np.sqrt(2), coherent_state(2.0, cfg))
    U = conditional_pi_phase(cfg, P)
    ideal = U.matrix @ psi
    out = apply_gate_noisy(to_density(psi), U, NoiseModel.from_device(P, cfg), EvolutionMode("noisy"))
    f = np.real(np.vdot(ideal, out @ ideal))
    assert 0.9 < f < 1
    quiet = apply_gate_noisy(to_density(psi), U, [], EvolutionMode("noisy"))
    assert np.real(np.vdot(ideal, quiet @ ideal)) > 1 - 1e-9


def test_ideal_mode_is_conjugation():
    gate = qubit_rotation(1.1, 0.4, SMALL)
    rho = plus()
    out = apply_gate_noisy(rho, gate, [], EvolutionMode("ideal"))
    assert np.allclose(out, gate.matrix @ rho @ gate.H)
    assert abs(np.trace(out) - 1) < 1e-15


def test_noisy_gate_needs_duration():
    with pytest.raises(ValueError):
        apply_gate_noisy(plus(), qubit_rotation(1.0, 0.0, SMALL), [], EvolutionMode("noisy"))


def test_confusion_examples():
    assert np.allclose(apply_readout_confusion([0.3, 0.7], np.eye(2)), [0.3, 0.7])
    assert np.allclose(apply_readout_confusion([0, 1], P), [0.057, 0.943])
    with pytest.raises(ValueError):
        apply_readout_confusion([0.5, 0.6], P)
    with pytest.raises(ValueError):
        apply_readout_confusion([0.5, 0.5], np.array([[0.9, 0.2], [0.2, 0.9]]))


@given(st.floats(0, 1), st.floats(0.5, 1), st.floats(0.5, 1))
def test_confusion_stochastic(pg, fg, fe):
    c = np.array([[fg, 1 - fe], [1 - fg, fe]])
    out = apply_readout_confusion([pg, 1 - pg], c)
    assert abs(out.sum() - 1) < 1e-12 and np.all(out >= 0)


@given(st.floats(0, 0.5))
def test_uniform_is_fixed_point_of_doubly_stochastic(eps):
    c = np.array([[1 - eps, eps], [eps, 1 - eps]])
    assert np.allclose(apply_readout_confusion([0.5, 0.5], c), [0.5, 0.5])
