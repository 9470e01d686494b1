"""Gates, Hamiltonians and device parameters on the joint qubit-cavity space.

Units: hbar = 1, every rate and frequency is stored in rad/s, times in
seconds. ``DeviceParams.from_cyclic`` is the single place where a cyclic
frequency (Hz) is converted.

Qubit rotation convention::

    R(angle, phi) = exp[-i angle/2 (cos(phi) sigma_y - sin(phi) sigma_x)]

so ``R(pi/2, 0)|g> = (|g> + |e>)/sqrt(2)`` and
``R(pi/2, phi)|g> = (|g> + exp(i phi)|e>)/sqrt(2)``. ``phi = 0`` is the
+Y axis; the vacuum Ramsey fringe with H1 = R(pi/2, phi), H2 = R(pi/2, 0) is
``P_g = (1 - cos phi)/2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import pi

import numpy as np
from scipy.linalg import expm

from .hilbert import HilbertConfig, TruncationError, poisson_tail

DISPLACEMENT_TAIL_TOL = 1e-8

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
# |g><e|: lowers e -> g in the (g, e) ordering
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)
PROJ_G = np.diag([1.0, 0.0]).astype(complex)
PROJ_E = np.diag([0.0, 1.0]).astype(complex)


@dataclass(frozen=True)
class Durations:
    """Nominal pulse and wait lengths in seconds."""

    pi2_pulse: float = 8e-9
    selective_pi: float = 400e-9
    selective_pi_long: float = 680e-9
    readout: float = 240e-9
    # one re-synchronisation period 2 pi/|chi| at the default chi
    resync_idle: float = 1 / 1.64e6
    displacement: float = 20e-9

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value > 0:
                raise ValueError(f"duration {name} must be > 0, got {value!r}")


DEFAULT_CONFUSION = ((0.98, 0.057), (0.02, 0.943))


@dataclass(frozen=True)
class DeviceParams:
    """Physical rates and imperfection knobs of the device.

    ``readout_confusion[r][k]`` is P(record r | qubit in k) with index 0 = g,
    1 = e; columns sum to one. The g column (0.98) is a placeholder, only the
    e-state fidelity 0.943 was measured.

    ``rotation_sigma`` is the effective spectral width (s) of the fast qubit
    rotations: on Fock level n a rotation is scaled by
    ``exp[-(n chi rotation_sigma)^2 / 2]``. Zero disables it.
    """

    chi_qs: float = 2 * pi * -1.64e6
    T1: float = 9.5e-6
    Tphi: float = 12.4e-6
    tau_s: float = 66e-6
    n_th: float = 0.01
    p_e_thermal: float = 0.085
    kerr_self: float = 0.0
    kerr_cross_extra: float = 0.0
    anharmonicity: float = 2 * pi * 246e6
    readout_confusion: tuple = DEFAULT_CONFUSION
    rotation_sigma: float = 0.0
    durations: Durations = field(default_factory=Durations)

    def __post_init__(self):
        if self.chi_qs == 0:
            raise ValueError("chi_qs must be nonzero")
        for name in ("T1", "Tphi", "tau_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.n_th < 0 or not 0 <= self.p_e_thermal <= 1:
            raise ValueError("thermal populations out of range")
        if self.rotation_sigma < 0:
            raise ValueError("rotation_sigma must be >= 0")
        c = np.asarray(self.readout_confusion, dtype=float)
        if c.shape != (2, 2) or np.any(c < 0) or not np.allclose(c.sum(axis=0), 1, atol=1e-12):
            raise ValueError("readout_confusion must be a 2x2 column-stochastic matrix")
        object.__setattr__(self, "readout_confusion", tuple(map(tuple, c.tolist())))

    @classmethod
    def from_cyclic(cls, chi_qs_hz: float = -1.64e6, **kwargs) -> DeviceParams:
        return cls(chi_qs=2 * pi * chi_qs_hz, **kwargs)

    @property
    def chi_qs_hz(self) -> float:
        return self.chi_qs / (2 * pi)

    @property
    def T2_star(self) -> float:
        return 1.0 / (1.0 / (2 * self.T1) + 1.0 / self.Tphi)

    @property
    def pi_phase_time(self) -> float:
        return pi / abs(self.chi_qs)

    @property
    def confusion(self) -> np.ndarray:
        return np.array(self.readout_confusion, dtype=float)

    def ideal_readout(self) -> DeviceParams:
        return replace(self, readout_confusion=((1.0, 0.0), (0.0, 1.0)))

    def noiseless(self) -> DeviceParams:
        """Same device with every decoherence rate switched off."""
        return replace(self, T1=np.inf, Tphi=np.inf, tau_s=np.inf)


@dataclass(frozen=True, eq=False)
class Operator:
    """Dense operator with a label and nominal duration.

    ``hamiltonian`` is set for gates realised by free evolution (the
    conditional phase gate); noisy runs integrate it instead of applying
    ``matrix`` and idling.
    """

    matrix: np.ndarray
    label: str = ""
    nominal_duration: float = 0.0
    hamiltonian: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def H(self) -> np.ndarray:
        return self.matrix.conj().T

    def unitarity_error(self) -> float:
        m = self.matrix
        return float(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def __matmul__(self, other):
        if isinstance(other, Operator):
            return Operator(self.matrix @ other.matrix, f"{self.label}*{other.label}")
        return self.matrix @ other


def lift_qubit(m: np.ndarray, cfg: HilbertConfig) -> np.ndarray:
    return np.kron(m, np.eye(cfg.fock_dim))


def lift_cavity(m: np.ndarray, cfg: HilbertConfig) -> np.ndarray:
    return np.kron(np.eye(2), m)


def number_diag(cfg: HilbertConfig) -> np.ndarray:
    return np.arange(cfg.fock_dim, dtype=float)


def annihilation(fock_dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, fock_dim)), k=1).astype(complex)


def dispersive_hamiltonian(p: DeviceParams, cfg: HilbertConfig) -> Operator:
    """chi n |e><e| plus optional Kerr terms, diagonal in the joint basis.

    Self-Kerr enters as ``kerr_self/2 * n(n-1)`` on both qubit states and the
    extra cross term as ``kerr_cross_extra/2 * n(n-1)`` on ``|e>`` only.
    """
    n = number_diag(cfg)
    kerr = p.kerr_self / 2 * n * (n - 1)
    g_block = kerr
    e_block = p.chi_qs * n + kerr + p.kerr_cross_extra / 2 * n * (n - 1)
    h = np.diag(np.concatenate([g_block, e_block])).astype(complex)
    return Operator(h, "H_dispersive")


def conditional_pi_phase(cfg: HilbertConfig, p: DeviceParams | None = None) -> Operator:
    """U = exp(i pi n |e><e|): identity on g, (-1)^n on e."""
    n = number_diag(cfg)
    diag = np.concatenate([np.ones(cfg.fock_dim), (-1.0) ** n]).astype(complex)
    p = p or DeviceParams()
    return Operator(
        np.diag(diag),
        "U",
        nominal_duration=p.pi_phase_time,
        hamiltonian=dispersive_hamiltonian(p, cfg).matrix,
    )


def displacement_matrix(beta: complex, fock_dim: int) -> np.ndarray:
    a = annihilation(fock_dim)
    return expm(beta * a.conj().T - np.conj(beta) * a)


def displacement(beta: complex, cfg: HilbertConfig, duration: float = 0.0) -> Operator:
    tail = poisson_tail(abs(beta) ** 2, cfg.fock_dim)
    if cfg.strict and tail > DISPLACEMENT_TAIL_TOL:
        raise TruncationError(
            f"displacement |beta|={abs(beta):.4g} leaks {tail:.3g} beyond N={cfg.fock_dim}"
        )
    d = displacement_matrix(beta, cfg.fock_dim)
    return Operator(lift_cavity(d, cfg), f"D({complex(beta):.4g})", nominal_duration=duration)


def rotation_2x2(angle: float, phi: float = 0.0) -> np.ndarray:
    gen = np.cos(phi) * SIGMA_Y - np.sin(phi) * SIGMA_X
    return np.cos(angle / 2) * np.eye(2) - 1j * np.sin(angle / 2) * gen


def _blockwise_rotation(angles: np.ndarray, phi: float, cfg: HilbertConfig) -> np.ndarray:
    """Rotation whose angle depends on the cavity Fock level."""
    nd = cfg.fock_dim
    c = np.cos(angles / 2)
    s = np.sin(angles / 2)
    # generator entries: <g|G|e> = -i cos(phi) - sin(phi), <e|G|g> = conj
    ge = -1j * np.cos(phi) - np.sin(phi)
    m = np.zeros((2 * nd, 2 * nd), dtype=complex)
    idx = np.arange(nd)
    m[idx, idx] = c
    m[nd + idx, nd + idx] = c
    m[idx, nd + idx] = -1j * s * ge
    m[nd + idx, idx] = -1j * s * np.conj(ge)
    return m


def photon_scaling(sigma_t: float, p: DeviceParams, cfg: HilbertConfig) -> np.ndarray:
    """Gaussian spectral weight exp[-(n chi sigma_t)^2/2] per Fock level."""
    n = number_diag(cfg)
    return np.exp(-((n * p.chi_qs * sigma_t) ** 2) / 2)


def qubit_rotation(
    angle: float,
    phi: float,
    cfg: HilbertConfig,
    *,
    duration: float = 0.0,
    scale: np.ndarray | None = None,
    label: str | None = None,
) -> Operator:
    """Qubit rotation lifted to the joint space.

    ``scale`` optionally multiplies the angle per Fock level (finite pulse
    bandwidth); ``None`` means a photon-independent rotation.
    """
    label = label or f"R({angle:.4g},{phi:.4g})"
    if scale is None:
        m = lift_qubit(rotation_2x2(angle, phi), cfg)
    else:
        m = _blockwise_rotation(angle * np.asarray(scale, dtype=float), phi, cfg)
    return Operator(m, label, nominal_duration=duration)


def selective_pi_on_vacuum(
    p: DeviceParams, sigma_t: float, cfg: HilbertConfig, duration: float = 0.0
) -> Operator:
    """Y-axis pi pulse conditioned on the cavity vacuum.

    Fock level n is rotated by ``pi * exp[-(n chi sigma_t)^2/2]``;
    ``sigma_t = 0`` is the ideal projector form
    ``exp[(pi/2)|0><0| (x) (|e><g| - |g><e|)]``.
    """
    if sigma_t < 0:
        raise ValueError("sigma_t must be >= 0")
    if sigma_t == 0:
        lam = np.zeros(cfg.fock_dim)
        lam[0] = 1.0
    else:
        lam = photon_scaling(sigma_t, p, cfg)
    return Operator(
        _blockwise_rotation(pi * lam, 0.0, cfg), "R_pi_0", nominal_duration=duration
    )


def parity_operator(cfg: HilbertConfig) -> Operator:
    """Cavity photon-number parity (N x N)."""
    return Operator(np.diag((-1.0) ** number_diag(cfg)).astype(complex), "P")


def parity_circuit(
    cfg: HilbertConfig,
    p: DeviceParams | None = None,
    *,
    scale: np.ndarray | None = None,
) -> list[Operator]:
    """[R_y(pi/2), U, R_y(-pi/2)].

    Starting from ``|g>``, even photon number ends in ``|g>`` and odd in
    ``|e>``; starting from ``|e>`` the map is swapped. Parity is therefore
    read as "qubit record unchanged" (even) or "changed" (odd).
    """
    p = p or DeviceParams()
    t = p.durations.pi2_pulse
    return [
        qubit_rotation(pi / 2, 0.0, cfg, duration=t, scale=scale, label="R_y(pi/2)"),
        conditional_pi_phase(cfg, p),
        qubit_rotation(-pi / 2, 0.0, cfg, duration=t, scale=scale, label="R_y(-pi/2)"),
    ]


def compose(ops: list[Operator]) -> np.ndarray:
    """Matrix of applying ``ops`` in list order."""
    m = np.eye(ops[0].dim, dtype=complex)
    for op in ops:
        m = op.matrix @ m
    return m
