"""Joint qubit-cavity Hilbert space in a truncated Fock basis.

States are plain numpy arrays. A joint ket has length ``2 * N`` with the
frozen ordering ``index = q * N + n`` where ``q = 0`` is ``|g>``, ``q = 1`` is
``|e>`` and ``n`` is the cavity photon number. Equivalently the joint space is
``kron(qubit, cavity)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import lgamma, log

import numpy as np

G, E = 0, 1
COHERENT_TAIL_TOL = 1e-10


class TruncationError(ValueError):
    """Raised when a state or operator does not fit in the Fock cutoff."""

    def __init__(self, message: str, required_dim: int | None = None):
        super().__init__(message)
        self.required_dim = required_dim


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class HilbertConfig:
    """Cavity truncation.

    ``strict=False`` turns truncation errors into silent renormalization,
    which is what small-N oracle runs need.
    """

    fock_dim: int = 40
    strict: bool = True

    def __post_init__(self):
        if int(self.fock_dim) != self.fock_dim or self.fock_dim < 2:
            raise ValueError(f"fock_dim must be an integer >= 2, got {self.fock_dim!r}")

    @property
    def dim(self) -> int:
        return 2 * self.fock_dim

    def index(self, q: int, n: int) -> int:
        return q * self.fock_dim + n


def fock_state(n: int, cfg: HilbertConfig) -> np.ndarray:
    if not 0 <= n < cfg.fock_dim:
        raise IndexError(f"Fock level {n} outside [0, {cfg.fock_dim})")
    psi = np.zeros(cfg.fock_dim, dtype=complex)
    psi[n] = 1.0
    return psi


def coherent_amplitudes(alpha: complex, fock_dim: int) -> np.ndarray:
    """Raw (unrenormalized) coherent-state amplitudes for n < fock_dim."""
    c = np.empty(fock_dim, dtype=complex)
    c[0] = np.exp(-abs(alpha) ** 2 / 2)
    for n in range(1, fock_dim):
        c[n] = c[n - 1] * alpha / np.sqrt(n)
    return c


def truncation_deficit(alpha: complex, fock_dim: int) -> float:
    """Poisson weight of |alpha> lying at or beyond ``fock_dim``."""
    return max(0.0, 1.0 - float(np.sum(np.abs(coherent_amplitudes(alpha, fock_dim)) ** 2)))


def poisson_tail(mean: float, fock_dim: int) -> float:
    """P(n >= fock_dim) for a Poisson distribution, summed from the tail side."""
    if mean == 0:
        return 0.0
    total, n = 0.0, fock_dim
    logm = log(mean)
    while True:
        term = np.exp(n * logm - mean - lgamma(n + 1))
        total += term
        if n > mean and term < 1e-300 + 1e-18 * total:
            return total
        n += 1


def required_fock_dim(alpha: complex, tol: float = COHERENT_TAIL_TOL) -> int:
    n = 2
    while poisson_tail(abs(alpha) ** 2, n) > tol:
        n += 1
    return n


def coherent_state(alpha: complex, cfg: HilbertConfig) -> np.ndarray:
    """Coherent state |alpha>, renormalized after truncation.

    With ``cfg.strict`` a tail deficit above 1e-10 raises TruncationError
    carrying the smallest adequate cutoff.
    """
    tail = poisson_tail(abs(alpha) ** 2, cfg.fock_dim)
    if cfg.strict and tail > COHERENT_TAIL_TOL:
        need = required_fock_dim(alpha)
        raise TruncationError(
            f"|alpha|^2={abs(alpha) ** 2:.4g} leaves tail {tail:.3g} beyond N={cfg.fock_dim}; "
            f"need fock_dim >= {need}",
            required_dim=need,
        )
    c = coherent_amplitudes(alpha, cfg.fock_dim)
    return c / np.linalg.norm(c)


def normalize(psi: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise ValueError("cannot normalize the zero vector")
    return psi / norm


def tensor_state(qubit, cavity: np.ndarray) -> np.ndarray:
    qubit = np.asarray(qubit, dtype=complex)
    cavity = np.asarray(cavity, dtype=complex)
    if qubit.shape != (2,):
        raise DimensionError(f"qubit state must have 2 amplitudes, got shape {qubit.shape}")
    if cavity.ndim != 1:
        raise DimensionError("cavity state must be a 1-d amplitude vector")
    return np.kron(qubit, cavity)


def inner(a: np.ndarray, b: np.ndarray) -> complex:
    """<a|b>, conjugate-linear in ``a``."""
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return complex(np.vdot(a, b))


def to_density(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def _split(rho: np.ndarray) -> tuple[np.ndarray, int]:
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionError(f"density matrix must be square, got shape {rho.shape}")
    if rho.shape[0] % 2:
        raise DimensionError(f"joint dimension must be even, got {rho.shape[0]}")
    n = rho.shape[0] // 2
    return rho.reshape(2, n, 2, n), n


def partial_trace_qubit(rho: np.ndarray) -> np.ndarray:
    """Reduced cavity state (N x N)."""
    r, _ = _split(rho)
    return np.einsum("qiqj->ij", r)


def partial_trace_cavity(rho: np.ndarray) -> np.ndarray:
    """Reduced qubit state (2 x 2)."""
    r, _ = _split(rho)
    return np.einsum("pnqn->pq", r)


def check_density(rho: np.ndarray, *, herm_tol=1e-10, trace_tol=1e-8, eig_tol=1e-8) -> None:
    """Raise ValueError unless ``rho`` is a valid density matrix within tolerances."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionError(f"density matrix must be square, got shape {rho.shape}")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > herm_tol:
        raise ValueError(f"not Hermitian (max deviation {herm:.3g})")
    tr = np.trace(rho).real
    if abs(tr - 1) > trace_tol:
        raise ValueError(f"trace {tr:.12g} differs from 1")
    lam = np.linalg.eigvalsh((rho + rho.conj().T) / 2)[0]
    if lam < -eig_tol:
        raise ValueError(f"negative eigenvalue {lam:.3g}")
