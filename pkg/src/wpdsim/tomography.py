"""Wigner functions, density-matrix reconstruction and state-comparison metrics."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

from .hilbert import TruncationError

# exp(-2|beta|^2) underflows past this
MAX_BETA_SQ = 170.0


class RankError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class WignerGrid:
    """W sampled on ``re_axis x im_axis``; ``values[j, i]`` is at re_axis[i] + 1j*im_axis[j]."""

    re_axis: np.ndarray
    im_axis: np.ndarray
    values: np.ndarray

    @property
    def betas(self) -> np.ndarray:
        x, y = np.meshgrid(self.re_axis, self.im_axis)
        return (x + 1j * y).ravel()

    def integral(self) -> float:
        dx = np.diff(self.re_axis).mean()
        dy = np.diff(self.im_axis).mean()
        return float(self.values.sum() * dx * dy)

    def to_csv(self, path) -> None:
        x, y = np.meshgrid(self.re_axis, self.im_axis)
        rows = ["x,y,W"]
        rows += [f"{a:.12g},{b:.12g},{w:.12g}" for a, b, w in zip(x.ravel(), y.ravel(), self.values.ravel())]
        Path(path).write_text("\n".join(rows) + "\n")


@dataclass(frozen=True)
class FidelityReport:
    fidelity: float
    method: str = "uhlmann"

    def __float__(self):
        return self.fidelity


def default_axis() -> np.ndarray:
    """[-4.5, 4.5] in steps of 0.15 (61 points)."""
    return np.linspace(-4.5, 4.5, 61)


def displaced_parity(betas, dim: int) -> np.ndarray:
    """Kernels ``(2/pi) D(beta) P D(-beta)`` in the first ``dim`` Fock states.

    Uses ``D(beta) P D(-beta) = D(2 beta) P`` and the closed-form Laguerre
    matrix elements of the displacement, so the result is exact for every
    beta (no truncated matrix exponential). Returns shape (len(betas), dim, dim).
    """
    betas = np.atleast_1d(np.asarray(betas, dtype=complex))
    if np.any(np.abs(betas) ** 2 > MAX_BETA_SQ):
        raise TruncationError(f"|beta|^2 above {MAX_BETA_SQ} is outside the representable range")
    gam = 2 * betas[:, None, None]
    m = np.arange(dim)[:, None]
    n = np.arange(dim)[None, :]
    lo = np.minimum(m, n)
    k = np.abs(m - n)
    x = np.abs(gam) ** 2
    safe = np.where(x > 0, x, 1.0)
    logmag = 0.5 * (gammaln(lo + 1) - gammaln(lo + k + 1)) + 0.5 * k * np.log(safe) - x / 2
    mag = np.exp(logmag) * eval_genlaguerre(lo, k, x)
    mag = np.where((x == 0) & (k > 0), 0.0, mag)
    # phase: gamma^(m-n) below the diagonal, (-gamma*)^(n-m) above
    unit = np.exp(1j * np.angle(gam))
    phase = np.where(m >= n, unit ** k, (-np.conj(unit)) ** k)
    d2b = mag * phase
    parity = (-1.0) ** np.arange(dim)
    return (2 / np.pi) * d2b * parity[None, None, :]


def _wigner_values(rho: np.ndarray, betas: np.ndarray, chunk: int = 512) -> np.ndarray:
    dim = rho.shape[0]
    out = np.empty(len(betas))
    for s in range(0, len(betas), chunk):
        kern = displaced_parity(betas[s : s + chunk], dim)
        w = np.einsum("ij,bji->b", rho, kern)
        scale = max(1.0, float(np.abs(w).max()))
        if np.max(np.abs(w.imag)) > 1e-9 * scale:
            raise ValueError("Wigner function has an imaginary part; input is not Hermitian")
        out[s : s + chunk] = w.real
    return out


def wigner_point(rho_cav: np.ndarray, beta: complex) -> float:
    """W(beta) = (2/pi) Tr[D(-beta) rho D(beta) P]."""
    rho_cav = np.asarray(rho_cav, dtype=complex)
    if rho_cav.ndim == 1:
        rho_cav = np.outer(rho_cav, rho_cav.conj())
    return float(_wigner_values(rho_cav, np.array([beta], dtype=complex))[0])


def wigner_grid(rho_cav: np.ndarray, re_axis=None, im_axis=None) -> WignerGrid:
    rho_cav = np.asarray(rho_cav, dtype=complex)
    if rho_cav.ndim == 1:
        rho_cav = np.outer(rho_cav, rho_cav.conj())
    re_axis = default_axis() if re_axis is None else np.asarray(re_axis, dtype=float)
    im_axis = default_axis() if im_axis is None else np.asarray(im_axis, dtype=float)
    x, y = np.meshgrid(re_axis, im_axis)
    vals = _wigner_values(rho_cav, (x + 1j * y).ravel()).reshape(x.shape)
    return WignerGrid(re_axis, im_axis, vals)


def segment_mask(grid: WignerGrid, alpha: complex, half_width: float = 1.0) -> np.ndarray:
    """Grid points within ``half_width`` of the segment from 0 to ``alpha``."""
    b = grid.betas.reshape(grid.values.shape)
    u = alpha / abs(alpha)
    along = (b * np.conj(u)).real
    across = (b * np.conj(u)).imag
    return (along >= 0) & (along <= abs(alpha)) & (np.abs(across) <= half_width)


def _hermitian_design(kernels: np.ndarray) -> np.ndarray:
    """Columns: Tr[B_b M_k] for an orthonormal Hermitian basis B_b."""
    npts, d, _ = kernels.shape
    iu = np.triu_indices(d, 1)
    diag = np.real(kernels[:, np.arange(d), np.arange(d)])
    upper = kernels[:, iu[0], iu[1]]
    return np.hstack([diag, np.sqrt(2) * upper.real, np.sqrt(2) * upper.imag])


def _from_params(x: np.ndarray, d: int) -> np.ndarray:
    iu = np.triu_indices(d, 1)
    nu = len(iu[0])
    rho = np.diag(x[:d]).astype(complex)
    off = (x[d : d + nu] + 1j * x[d + nu :]) / np.sqrt(2)
    rho[iu] = off
    rho[iu[1], iu[0]] = np.conj(off)
    return rho


def _project_simplex(lam: np.ndarray) -> np.ndarray:
    """Euclidean projection of ``lam`` onto {x >= 0, sum x = 1}."""
    u = np.sort(lam)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, len(u) + 1)
    r = np.nonzero(u - (css - 1) / k > 0)[0][-1]
    return np.clip(lam - (css[r] - 1) / (r + 1), 0, None)


def reconstruct_density(grid: WignerGrid, target_dim: int = 20) -> np.ndarray:
    """Least-squares density matrix from Wigner samples.

    Solves ``W_k = Tr[rho M_k]`` over Hermitian ``rho`` with unit trace, then
    maps the spectrum to the nearest probability vector, which gives the
    closest density matrix in Frobenius norm.
    """
    betas = grid.betas
    w = grid.values.ravel()
    if len(w) < target_dim**2:
        raise RankError(f"{len(w)} samples cannot determine {target_dim**2} parameters")
    A = np.vstack([_hermitian_design(displaced_parity(betas[s : s + 512], target_dim))
                   for s in range(0, len(betas), 512)])
    # eliminate x_00 = 1 - sum_{i>0} x_ii
    d = target_dim
    A_red = A[:, 1:].copy()
    A_red[:, : d - 1] -= A[:, [0]]
    rhs = w - A[:, 0]
    sol, _, rank, _ = np.linalg.lstsq(A_red, rhs, rcond=None)
    if rank < A_red.shape[1]:
        raise RankError(f"design matrix rank {rank} < {A_red.shape[1]}; grid too coarse or small")
    x = np.concatenate([[1.0 - sol[: d - 1].sum()], sol])
    rho = _from_params(x, d)
    lam, vec = np.linalg.eigh(rho)
    return (vec * _project_simplex(lam)) @ vec.conj().T


def embed(rho: np.ndarray, dim: int) -> np.ndarray:
    """Zero-pad (or crop) a cavity density matrix to ``dim``."""
    out = np.zeros((dim, dim), dtype=complex)
    k = min(dim, rho.shape[0])
    out[:k, :k] = rho[:k, :k]
    return out


def _psd_sqrt(rho: np.ndarray) -> np.ndarray:
    lam, vec = np.linalg.eigh((rho + rho.conj().T) / 2)
    return (vec * np.sqrt(np.clip(lam, 0, None))) @ vec.conj().T


def fidelity(rho_i: np.ndarray, rho_m: np.ndarray, tol: float = 1e-7) -> FidelityReport:
    """Uhlmann fidelity [Tr sqrt(sqrt(rho_i) rho_m sqrt(rho_i))]^2."""
    rho_i = np.asarray(rho_i, dtype=complex)
    rho_m = np.asarray(rho_m, dtype=complex)
    if rho_i.shape != rho_m.shape:
        raise ValueError(f"shape mismatch {rho_i.shape} vs {rho_m.shape}")
    for r in (rho_i, rho_m):
        if np.linalg.eigvalsh((r + r.conj().T) / 2)[0] < -tol:
            raise ValueError("input is not positive semidefinite")
    s = _psd_sqrt(rho_i)
    lam = np.linalg.eigvalsh(s @ rho_m @ s)
    f = float(np.sum(np.sqrt(np.clip(lam, 0, None))) ** 2)
    return FidelityReport(min(max(f, 0.0), 1.0), "uhlmann")


def pure_state_fidelity(phi: np.ndarray, rho: np.ndarray) -> FidelityReport:
    """<phi|rho|phi> for a normalised ket ``phi``."""
    phi = np.asarray(phi, dtype=complex)
    return FidelityReport(float(np.real(phi.conj() @ rho @ phi)), "pure")


def _values(curve) -> np.ndarray:
    vals = np.asarray(getattr(curve, "value", curve), dtype=float)
    if vals.size == 0:
        raise ValueError("empty curve")
    return vals


def visibility(curve) -> float:
    """(max - min) / (max + min) of a fringe."""
    v = _values(curve)
    hi, lo = v.max(), v.min()
    if hi + lo == 0:
        raise ZeroDivisionError("visibility undefined for an all-zero curve")
    return float((hi - lo) / (hi + lo))


def contrast(curve) -> float:
    """max - min of a fringe."""
    v = _values(curve)
    return float(v.max() - v.min())


def export_density(rho: np.ndarray, path) -> None:
    rows = ["row,col,re,im"]
    for i in range(rho.shape[0]):
        for j in range(rho.shape[1]):
            rows.append(f"{i},{j},{rho[i, j].real:.12g},{rho[i, j].imag:.12g}")
    Path(path).write_text("\n".join(rows) + "\n")
