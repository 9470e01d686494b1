"""Lindblad evolution and classical readout error.

The master equation is integrated with a fixed-step fourth-order
Runge-Kutta scheme in integrating-factor (Lawson) form. The diagonal of the
Liouvillian (coherent phases of a diagonal Hamiltonian and the
anticommutator damping) is propagated exactly, the remaining jump terms by
RK4. Without jump terms the step is exact, so a noiseless run reproduces the
ideal unitary to rounding error.

Density matrices are vectorised row-major, ``vec(A rho B) = kron(A, B.T) vec(rho)``.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from math import ceil

import numpy as np
import scipy.sparse as sp

from .hilbert import HilbertConfig
from .operators import SIGMA_MINUS, SIGMA_Z, DeviceParams, Operator, annihilation, lift_cavity, lift_qubit

TRACE_DRIFT_LIMIT = 1e-6


class StepSizeError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class NoiseChannel:
    collapse_operator: np.ndarray
    rate: float
    label: str = ""

    def __post_init__(self):
        if not self.rate >= 0:
            raise ValueError(f"channel rate must be >= 0, got {self.rate!r}")


@dataclass(frozen=True)
class EvolutionMode:
    """Ideal or noisy evolution.

    ``gate_timing`` places the instantaneous unitary of a finite pulse in
    noisy mode: ``"split"`` idles half the duration on each side (the flip
    happens at the pulse centre), ``"after"`` applies it first and idles for
    the whole duration.
    """

    mode: str = "ideal"
    dt: float = 1e-9
    gate_timing: str = "split"

    def __post_init__(self):
        if self.mode not in ("ideal", "noisy"):
            raise ValueError(f"mode must be 'ideal' or 'noisy', got {self.mode!r}")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.gate_timing not in ("split", "after"):
            raise ValueError(f"gate_timing must be 'split' or 'after', got {self.gate_timing!r}")

    @property
    def noisy(self) -> bool:
        return self.mode == "noisy"


IDEAL = EvolutionMode("ideal")
NOISY = EvolutionMode("noisy")


def standard_channels(p: DeviceParams, cfg: HilbertConfig) -> list[NoiseChannel]:
    """Qubit T1 decay, qubit pure dephasing and cavity photon loss.

    Dephasing uses ``sigma_z`` at rate ``1/(2 Tphi)`` so that qubit coherence
    decays as ``exp(-t/T2*)`` with ``1/T2* = 1/(2 T1) + 1/Tphi``.
    """
    return [
        NoiseChannel(lift_qubit(SIGMA_MINUS, cfg), 1.0 / p.T1, "qubit_decay"),
        NoiseChannel(lift_qubit(SIGMA_Z, cfg), 1.0 / (2 * p.Tphi), "qubit_dephasing"),
        NoiseChannel(lift_cavity(annihilation(cfg.fock_dim), cfg), 1.0 / p.tau_s, "cavity_decay"),
    ]


def liouvillian(H: np.ndarray | None, channels: list[NoiseChannel], dim: int) -> sp.csr_matrix:
    eye = sp.identity(dim, format="csr", dtype=complex)
    L = sp.csr_matrix((dim * dim, dim * dim), dtype=complex)
    if H is not None:
        h = sp.csr_matrix(H)
        L = L - 1j * (sp.kron(h, eye) - sp.kron(eye, h.T))
    for ch in channels:
        if ch.rate == 0:
            continue
        c = sp.csr_matrix(ch.collapse_operator)
        cdc = (c.conj().T @ c).tocsr()
        L = L + ch.rate * (
            sp.kron(c, c.conj()) - 0.5 * sp.kron(cdc, eye) - 0.5 * sp.kron(eye, cdc.T)
        )
    L = L.tocsr()
    L.eliminate_zeros()
    return L


class Propagator:
    """Fixed-step integrator for one (Hamiltonian, channels) pair.

    One Lawson-RK4 step is a fixed linear map, so it is assembled once as a
    sparse matrix and ``n`` steps are applied as its ``n``-th power (binary
    powering). This is the same fixed-step scheme as stepping ``n`` times,
    up to rounding; the jump terms only lower excitations, so the powers stay
    sparse.
    """

    def __init__(self, H: np.ndarray | None, channels: list[NoiseChannel], dim: int, dt: float):
        self.dim = dim
        self.dt = dt
        L = liouvillian(H, channels, dim)
        self.diag = L.diagonal()
        jumps = (L - sp.diags(self.diag)).tocsr()
        jumps.eliminate_zeros()
        self.jumps = jumps if jumps.nnz else None
        self._powers: dict[tuple[int, float], sp.csr_matrix] = {}

    def step_matrix(self, h: float) -> sp.csr_matrix:
        """The Lawson-RK4 update v -> S v for step ``h``."""
        e_full = sp.diags(np.exp(self.diag * h))
        e_half = sp.diags(np.exp(self.diag * (h / 2)))
        J = self.jumps
        eye = sp.identity(self.dim**2, dtype=complex, format="csr")
        k1 = J @ eye
        ev = e_half @ eye
        k2 = J @ (ev + (h / 2) * (e_half @ k1))
        k3 = J @ (ev + (h / 2) * k2)
        k4 = J @ (e_full @ eye + h * (e_half @ k3))
        return (e_full @ eye + (h / 6) * (e_full @ k1 + 2 * (e_half @ (k2 + k3)) + k4)).tocsr()

    def _power(self, n: int, h: float) -> sp.csr_matrix:
        key = (n, h)
        if key not in self._powers:
            base, out = self.step_matrix(h), None
            while n:
                if n & 1:
                    out = base if out is None else (out @ base).tocsr()
                n >>= 1
                if n:
                    base = (base @ base).tocsr()
            self._powers[key] = out
        return self._powers[key]

    def evolve_vec(self, v: np.ndarray, duration: float) -> np.ndarray:
        """Evolve columns of ``v`` (dim**2 x batch) for ``duration``."""
        if duration < 0:
            raise ValueError("duration must be >= 0")
        if duration == 0:
            return v
        if self.jumps is None:
            return np.exp(self.diag[:, None] * duration) * v
        n = max(1, ceil(duration / self.dt - 1e-9))
        return self._power(n, duration / n) @ v


@dataclass
class NoiseModel:
    """Channels plus integrator settings, with cached propagators.

    ``max_trace_drift`` and ``min_eigenvalue`` accumulate over every
    evolution performed through this model.
    """

    channels: list[NoiseChannel]
    dim: int
    dt: float = 1e-9
    max_trace_drift: float = 0.0
    min_eigenvalue: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @classmethod
    def from_device(cls, p: DeviceParams, cfg: HilbertConfig, dt: float = 1e-9) -> NoiseModel:
        return cls(standard_channels(p, cfg), cfg.dim, dt)

    def _propagator(self, H: np.ndarray | None) -> Propagator:
        key = None if H is None else id(H)
        if key not in self._cache:
            self._cache[key] = (H, Propagator(H, self.channels, self.dim, self.dt))
        return self._cache[key][1]

    def evolve(self, rhos: np.ndarray, duration: float, H: np.ndarray | None = None) -> np.ndarray:
        """Evolve a (batch, dim, dim) stack of possibly unnormalised states."""
        rhos = np.asarray(rhos, dtype=complex)
        single = rhos.ndim == 2
        if single:
            rhos = rhos[None]
        b = rhos.shape[0]
        v = rhos.reshape(b, -1).T
        tr0 = np.einsum("bii->b", rhos).real
        out = self._propagator(H).evolve_vec(v, duration).T.reshape(b, self.dim, self.dim)
        tr1 = np.einsum("bii->b", out).real
        scale = np.maximum(np.abs(tr0), 1e-300)
        live = np.abs(tr0) > 1e-14
        if np.any(live):
            drift = float(np.max(np.abs(tr1 - tr0)[live] / scale[live]))
            if drift > TRACE_DRIFT_LIMIT:
                raise StepSizeError(
                    f"trace drift {drift:.3g} over {duration:.3g} s; reduce dt (now {self.dt:.3g} s)"
                )
            herm = (out[live] + out[live].conj().transpose(0, 2, 1)) / 2
            lam = np.linalg.eigvalsh(herm)[:, 0] / tr1[live]
            with self._lock:
                self.max_trace_drift = max(self.max_trace_drift, drift)
                self.min_eigenvalue = min(self.min_eigenvalue, float(lam.min()))
        return out[0] if single else out


def lindblad_evolve(
    rho: np.ndarray,
    H: Operator | np.ndarray | None,
    channels: list[NoiseChannel],
    duration: float,
    dt: float = 1e-9,
) -> np.ndarray:
    """Evolve ``rho`` under ``-i[H, rho] + sum_k rate_k D[L_k] rho``."""
    rho = np.asarray(rho, dtype=complex)
    if isinstance(H, Operator):
        H = H.matrix
    model = NoiseModel(list(channels), rho.shape[-1], dt)
    return model.evolve(rho, duration, H)


def apply_gate_noisy(
    rho: np.ndarray,
    gate: Operator,
    channels: list[NoiseChannel] | NoiseModel,
    mode: EvolutionMode,
) -> np.ndarray:
    """Apply ``gate`` to a state or a (batch, dim, dim) stack.

    Ideal mode conjugates by the gate matrix. Noisy mode conjugates and idles
    (H = 0) for the nominal duration, placed according to
    ``mode.gate_timing``. Gates carrying a Hamiltonian are instead realised
    by evolving that Hamiltonian with the channels for the nominal duration.
    """
    rho = np.asarray(rho, dtype=complex)
    if not mode.noisy:
        return gate.matrix @ rho @ gate.H
    if not gate.nominal_duration > 0:
        raise ValueError(f"gate {gate.label!r} has no nominal duration for noisy evolution")
    model = channels if isinstance(channels, NoiseModel) else NoiseModel(list(channels), gate.dim, mode.dt)
    if gate.hamiltonian is not None:
        return model.evolve(rho, gate.nominal_duration, gate.hamiltonian)
    if mode.gate_timing == "after":
        return model.evolve(gate.matrix @ rho @ gate.H, gate.nominal_duration)
    half = gate.nominal_duration / 2
    rho = model.evolve(rho, half)
    return model.evolve(gate.matrix @ rho @ gate.H, half)


def apply_readout_confusion(probs, p: DeviceParams | np.ndarray) -> np.ndarray:
    """Map true (g, e) probabilities to recorded ones."""
    c = p.confusion if isinstance(p, DeviceParams) else np.asarray(p, dtype=float)
    if c.shape != (2, 2) or np.any(c < 0) or not np.allclose(c.sum(axis=0), 1, atol=1e-12):
        raise ValueError("confusion matrix must be 2x2 column-stochastic")
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (2,) or abs(probs.sum() - 1) > 1e-9:
        raise ValueError("probabilities must be a length-2 distribution")
    return c @ probs
