"""Experiment scripts: cat preparation, Ramsey morphing, delayed-choice
post-selection, quantum erasure and which-path readout.

Every readout records the raw qubit outcome. Measurements that act on the
cavity through the qubit (on/off selection, parity, alpha/-alpha test) are
interpreted relative to the previous qubit record: "unchanged" means the
selective pulse did not fire (WPD on, cavity not in vacuum) or even parity;
"changed" means vacuum or odd parity.

Phase sweeps exploit that every joint branch probability is a trigonometric
polynomial of degree <= 2 in phi (phi enters only through the first Ramsey
pulse). The pipeline therefore runs at five anchor phases and the curves are
reconstructed exactly on any grid; ``sweep="direct"`` evaluates each point.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import pi, sqrt

import numpy as np

from .hilbert import HilbertConfig, coherent_state, fock_state, normalize, partial_trace_qubit, tensor_state, to_density
from .measurement import (
    BranchLedger,
    Idle,
    MeasurementStep,
    UndefinedConditionalError,
    at,
    both,
    differ,
    qubit_measurement,
    run_sequence,
    same,
)
from .noise import IDEAL, EvolutionMode, NoiseModel
from .operators import (
    DeviceParams,
    Operator,
    conditional_pi_phase,
    displacement,
    parity_circuit,
    photon_scaling,
    qubit_rotation,
    selective_pi_on_vacuum,
)
from .tomography import pure_state_fidelity

ALPHA = 2 * sqrt(2)
N_ANCHORS = 5


def default_phi_grid() -> np.ndarray:
    return np.linspace(0, 2 * pi, 41)


@dataclass(frozen=True, eq=False)
class ProtocolParams:
    """Inputs shared by the protocols.

    ``readout_confusion`` applies the device confusion matrix at every
    readout in noisy mode (ideal mode never does). It is off by default
    because noisy readouts already idle under T1, which is the main source of
    the measured e-state infidelity. ``explicit_init`` simulates the thermal
    qubit/cavity purification instead of starting in |g, 0>.
    """

    theta: float = pi / 4
    alpha: complex = ALPHA
    phi_grid: np.ndarray = field(default_factory=default_phi_grid)
    mode: EvolutionMode = IDEAL
    readout_confusion: bool = False
    explicit_init: bool = False
    sweep: str = "harmonic"
    jobs: int = 1

    def __post_init__(self):
        grid = np.atleast_1d(np.asarray(self.phi_grid, dtype=float))
        if grid.size == 0:
            raise ValueError("phi_grid must be nonempty")
        object.__setattr__(self, "phi_grid", grid)
        if self.sweep not in ("harmonic", "direct"):
            raise ValueError("sweep must be 'harmonic' or 'direct'")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")


@dataclass(frozen=True, eq=False)
class CurveData:
    phi: np.ndarray
    value: np.ndarray
    label: str
    mode: str = "ideal"

    def __post_init__(self):
        if len(self.phi) != len(self.value):
            raise ValueError("phi and value lengths differ")
        v = np.asarray(self.value)
        if np.any(v < -1e-9) or np.any(v > 1 + 1e-9):
            raise ValueError(f"{self.label}: probabilities outside [0, 1]")

    def mean(self) -> float:
        return float(np.mean(self.value))

    def csv_rows(self) -> list[str]:
        return [f"{p:.12g},{self.label},{v:.12g},{self.mode}" for p, v in zip(self.phi, self.value)]


class PhaseSweep:
    """Joint branch probabilities as functions of phi."""

    def __init__(self, phi: np.ndarray, joint: dict, mode: str, ledgers: list[BranchLedger]):
        self.phi = phi
        self.joint = joint
        self.mode = mode
        self.ledgers = ledgers

    def probability(self, predicate=None) -> np.ndarray:
        out = np.zeros_like(self.phi)
        for k, v in self.joint.items():
            if predicate is None or predicate(k):
                out = out + v
        return out

    def conditional(self, condition, target, label: str) -> CurveData:
        den = self.probability(condition)
        if np.any(den <= 1e-15):
            raise UndefinedConditionalError(f"{label}: conditioning event has zero probability")
        num = self.probability(both(condition, target))
        return CurveData(self.phi, np.clip(num / den, 0.0, 1.0), label, self.mode)


def _harmonic_fit(anchor_phis: np.ndarray, values: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Evaluate the degree-2 trigonometric interpolant through five samples."""
    m = np.arange(-2, 3)
    coeff = np.exp(-1j * np.outer(m, anchor_phis)) @ values / len(anchor_phis)
    return np.real(np.exp(1j * np.outer(phi, m)) @ coeff)


def phase_sweep(phi_grid: np.ndarray, run_at, mode: str, method: str = "harmonic", jobs: int = 1) -> PhaseSweep:
    """Run ``run_at`` over the sweep points (threaded when ``jobs > 1``)."""
    phi_grid = np.asarray(phi_grid, dtype=float)
    anchors = phi_grid if method == "direct" else 2 * pi * np.arange(N_ANCHORS) / N_ANCHORS
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            ledgers = list(pool.map(run_at, [float(p) for p in anchors]))
    else:
        ledgers = [run_at(float(p)) for p in anchors]
    keys = sorted(ledgers[0].branches)
    joint = {}
    for k in keys:
        vals = np.array([lg.get(k) for lg in ledgers])
        joint[k] = vals if method == "direct" else np.clip(_harmonic_fit(anchors, vals, phi_grid), 0, 1)
    return PhaseSweep(phi_grid, joint, mode, ledgers)


class Kit:
    """Gate factory for one (mode, device, truncation) setting."""

    def __init__(self, mode: EvolutionMode, device: DeviceParams, cfg: HilbertConfig, confusion: bool = False):
        self.mode = mode
        self.device = device
        self.cfg = cfg
        self.noisy = mode.noisy
        d = device.durations
        self.d = d
        self.scale = None
        if self.noisy and device.rotation_sigma > 0:
            self.scale = photon_scaling(device.rotation_sigma, device, cfg)
        self.confusion = device.confusion if (self.noisy and confusion) else None
        self.U = conditional_pi_phase(cfg, device)
        self._sel = None
        self._sel_long = None

    def rot(self, angle: float, phi: float = 0.0, label: str | None = None) -> Operator:
        return qubit_rotation(angle, phi, self.cfg, duration=self.d.pi2_pulse, scale=self.scale, label=label)

    def H1(self, phi: float) -> Operator:
        return self.rot(pi / 2, phi, "H1")

    def H2(self) -> Operator:
        return self.rot(pi / 2, 0.0, "H2")

    def D(self, beta: complex) -> Operator:
        return displacement(beta, self.cfg, duration=self.d.displacement)

    def selective_pi(self) -> Operator:
        if self._sel is None:
            sigma = self.d.selective_pi / 4 if self.noisy else 0.0
            self._sel = selective_pi_on_vacuum(self.device, sigma, self.cfg, self.d.selective_pi)
        return self._sel

    def selective_pi_long(self) -> Operator:
        if self._sel_long is None:
            sigma = self.d.selective_pi_long / 4 if self.noisy else 0.0
            self._sel_long = selective_pi_on_vacuum(self.device, sigma, self.cfg, self.d.selective_pi_long)
        return self._sel_long

    def parity(self) -> list[Operator]:
        return parity_circuit(self.cfg, self.device, scale=self.scale)

    def readout(self, label: str) -> MeasurementStep:
        return qubit_measurement(self.cfg, label, confusion=self.confusion, duration=self.d.readout)

    def idle(self, duration: float, label: str) -> Idle:
        return Idle(duration, label)


def _noise_for(kit: Kit, noise: NoiseModel | None) -> NoiseModel | None:
    if not kit.noisy:
        return None
    return noise or NoiseModel.from_device(kit.device, kit.cfg, kit.mode.dt)


# ---------------------------------------------------------------- preparation


def cat_target(theta: float, alpha: complex, cfg: HilbertConfig) -> np.ndarray:
    """Normalised cos(theta)|0> + sin(theta)|alpha> (cavity ket)."""
    return normalize(np.cos(theta) * fock_state(0, cfg) + np.sin(theta) * coherent_state(alpha, cfg))


def thermal_state(n_th: float, fock_dim: int) -> np.ndarray:
    n = np.arange(fock_dim)
    p = n_th**n / (1 + n_th) ** (n + 1) if n_th > 0 else (n == 0).astype(float)
    return np.diag(p / p.sum()).astype(complex)


@dataclass(frozen=True, eq=False)
class CatPreparation:
    rho: np.ndarray
    success_probability: float
    init_probability: float = 1.0

    @property
    def cavity(self) -> np.ndarray:
        return partial_trace_qubit(self.rho)

    def fidelity(self, theta: float, alpha: complex, cfg: HilbertConfig) -> float:
        return pure_state_fidelity(cat_target(theta, alpha, cfg), self.cavity).fidelity


def initial_state(kit: Kit, explicit: bool, noise: NoiseModel | None) -> tuple[np.ndarray, float]:
    """|g,0><g,0|, or the thermal mixture purified by qubit and parity post-selection."""
    cfg = kit.cfg
    if not explicit:
        return to_density(tensor_state([1, 0], fock_state(0, cfg))), 1.0
    p = kit.device
    qubit = np.diag([1 - p.p_e_thermal, p.p_e_thermal]).astype(complex)
    rho0 = np.kron(qubit, thermal_state(p.n_th, cfg.fock_dim))
    program = [kit.readout("qubit purification"), *kit.parity(), kit.readout("parity purification")]
    ledger = run_sequence(rho0, program, kit.mode, noise)
    keep = both(at(0, "g"), at(1, "g"))
    return ledger.state(keep), ledger.probability(keep)


def prepare_cat(
    theta: float = pi / 4,
    alpha: complex = ALPHA,
    mode: EvolutionMode = IDEAL,
    *,
    device: DeviceParams | None = None,
    cfg: HilbertConfig | None = None,
    readout_confusion: bool = False,
    explicit_init: bool = False,
    noise: NoiseModel | None = None,
) -> CatPreparation:
    """Displace to alpha/2, entangle, measure the qubit in g, displace by alpha/2.

    The qubit is rotated to sin(theta)|g> + cos(theta)|e>, the conditional
    phase gate follows, and R_y(-pi/2) maps the g-record to the cavity state
    cos(theta)|-alpha/2> + sin(theta)|alpha/2>, which D(alpha/2) shifts to the
    cat cos(theta)|0> + sin(theta)|alpha>.
    """
    device = device or DeviceParams()
    cfg = cfg or HilbertConfig()
    kit = Kit(mode, device, cfg, readout_confusion)
    noise = _noise_for(kit, noise)
    rho0, p_init = initial_state(kit, explicit_init, noise)
    program = [
        kit.D(alpha / 2),
        kit.rot(pi - 2 * theta, 0.0, "R_theta"),
        kit.U,
        kit.rot(-pi / 2, 0.0, "H_prep"),
        kit.readout("cat post-selection"),
        kit.D(alpha / 2),
    ]
    ledger = run_sequence(rho0, program, mode, noise)
    p_g = ledger.get(("g",))
    if p_g <= 1e-15:
        raise UndefinedConditionalError("cat post-selection has zero probability")
    return CatPreparation(ledger.state(at(0, "g")), p_g, p_init)


def cat_success_probability(theta: float, alpha: complex) -> float:
    return (1 + np.sin(2 * theta) * np.exp(-abs(alpha) ** 2 / 2)) / 2


# ---------------------------------------------------------------- analytic


def overlap_free_prediction(theta, phi):
    """[cos^2(theta)(1 - cos phi) + sin^2(theta)] / 2 (overlaps neglected)."""
    return (np.cos(theta) ** 2 * (1 - np.cos(phi)) + np.sin(theta) ** 2) / 2


def cat_parity(theta: float, alpha: complex) -> float:
    """<P> of the normalised cat cos(theta)|0> + sin(theta)|alpha>."""
    a2 = abs(alpha) ** 2
    ov = np.exp(-a2 / 2)
    num = np.cos(theta) ** 2 + np.sin(theta) ** 2 * np.exp(-2 * a2) + np.sin(2 * theta) * ov
    return num / (1 + np.sin(2 * theta) * ov)


def analytic_pg_exact(theta, alpha, phi):
    """Exact Ramsey P_g for the normalised cat.

    H1 -> U -> H2 leaves the g amplitude (|c> - e^{i phi} P|c>)/2, so
    P_g = (1 - cos(phi) <c|P|c>) / 2 with the cat parity from ``cat_parity``.
    """
    return (1 - np.cos(phi) * cat_parity(theta, alpha)) / 2


# ---------------------------------------------------------------- protocols


@dataclass
class _Setup:
    params: ProtocolParams
    kit: Kit
    noise: NoiseModel | None
    prep: CatPreparation


def _setup(params: ProtocolParams, device, cfg, noise) -> _Setup:
    device = device or DeviceParams()
    cfg = cfg or HilbertConfig()
    kit = Kit(params.mode, device, cfg, params.readout_confusion)
    noise = _noise_for(kit, noise)
    prep = prepare_cat(
        params.theta,
        params.alpha,
        params.mode,
        device=device,
        cfg=cfg,
        readout_confusion=params.readout_confusion,
        explicit_init=params.explicit_init,
        noise=noise,
    )
    return _Setup(params, kit, noise, prep)


def _ramsey_ops(kit: Kit, phi: float) -> list:
    return [kit.H1(phi), kit.U, kit.H2(), kit.readout("Ramsey readout")]


def _sweep(s: _Setup, tail_program) -> PhaseSweep:
    def run_at(phi):
        program = _ramsey_ops(s.kit, phi) + tail_program
        return run_sequence(s.prep.rho, program, s.params.mode, s.noise)

    return phase_sweep(s.params.phi_grid, run_at, s.params.mode.mode, s.params.sweep, s.params.jobs)


def ramsey_sweep(params: ProtocolParams, *, device=None, cfg=None, noise=None) -> PhaseSweep:
    return _sweep(_setup(params, device, cfg, noise), [])


def ramsey_curve(params: ProtocolParams, *, device=None, cfg=None, noise=None) -> CurveData:
    sw = ramsey_sweep(params, device=device, cfg=cfg, noise=noise)
    return CurveData(sw.phi, np.clip(sw.probability(at(0, "g")), 0, 1), "P_g", sw.mode)


def delayed_choice_sweep(params: ProtocolParams, *, device=None, cfg=None, noise=None) -> PhaseSweep:
    s = _setup(params, device, cfg, noise)
    return _sweep(s, [s.kit.selective_pi(), s.kit.readout("WPD on/off selection")])


def delayed_choice_curves(params: ProtocolParams, *, device=None, cfg=None, noise=None) -> dict[str, CurveData]:
    """P_{g;F} (WPD found off) and P_{g;O} (found on)."""
    sw = delayed_choice_sweep(params, device=device, cfg=cfg, noise=noise)
    return {
        "P_{g;F}": sw.conditional(differ(0, 1), at(0, "g"), "P_{g;F}"),
        "P_{g;O}": sw.conditional(same(0, 1), at(0, "g"), "P_{g;O}"),
    }


def eraser_sweep(
    params: ProtocolParams, after_on_selection: bool = False, *, device=None, cfg=None, noise=None
) -> PhaseSweep:
    s = _setup(params, device, cfg, noise)
    tail = []
    if after_on_selection:
        tail += [s.kit.selective_pi(), s.kit.readout("WPD on/off selection")]
    tail += [*s.kit.parity(), s.kit.readout("parity readout")]
    return _sweep(s, tail)


def eraser_curves(
    params: ProtocolParams, after_on_selection: bool = False, *, device=None, cfg=None, noise=None
) -> dict[str, CurveData]:
    """Ramsey P_g conditioned on even (+) / odd (-) cavity parity."""
    sw = eraser_sweep(params, after_on_selection, device=device, cfg=cfg, noise=noise)
    if after_on_selection:
        on = same(0, 1)
        even, odd = both(on, same(1, 2)), both(on, differ(1, 2))
        names = ("P_{g;O,+}", "P_{g;O,-}")
    else:
        even, odd = same(0, 1), differ(0, 1)
        names = ("P_{g;+}", "P_{g;-}")
    return {
        names[0]: sw.conditional(even, at(0, "g"), names[0]),
        names[1]: sw.conditional(odd, at(0, "g"), names[1]),
    }


def which_path_sweep(params: ProtocolParams, *, device=None, cfg=None, noise=None) -> PhaseSweep:
    s = _setup(params, device, cfg, noise)
    k = s.kit
    tail = [
        k.selective_pi(),
        k.readout("WPD on/off selection"),
        k.D(-params.alpha),
        k.idle(k.d.resync_idle, "resync"),
        k.selective_pi_long(),
        k.readout("which-path readout"),
    ]
    return _sweep(s, tail)


@dataclass
class WhichPathResult:
    curves: dict[str, CurveData]
    means: dict[str, float]
    joint: dict[str, np.ndarray]
    sweep: PhaseSweep


def which_path_curves(params: ProtocolParams, *, device=None, cfg=None, noise=None) -> WhichPathResult:
    """P_{g;O,alpha} and P_{g;O,-alpha} after reading the field phase.

    -alpha leaves the cavity out of vacuum after D(-alpha) (record unchanged);
    alpha is displaced to vacuum and flips the qubit.
    """
    sw = which_path_sweep(params, device=device, cfg=cfg, noise=noise)
    on = same(0, 1)
    minus, plus = both(on, same(1, 2)), both(on, differ(1, 2))
    curves = {
        "P_{g;O,-alpha}": sw.conditional(minus, at(0, "g"), "P_{g;O,-alpha}"),
        "P_{g;O,alpha}": sw.conditional(plus, at(0, "g"), "P_{g;O,alpha}"),
    }
    joint = {"".join(k): sw.joint[k] for k in (("g", "g", "g"), ("e", "e", "e"), ("g", "g", "e"), ("e", "e", "g"))}
    means = {label: c.mean() for label, c in curves.items()}
    return WhichPathResult(curves, means, joint, sw)


def ramsey_cavity_state(
    params: ProtocolParams, phi: float = pi / 2, qubit: str | None = None, *, device=None, cfg=None, noise=None
) -> np.ndarray:
    """Cavity state after H2, unconditioned or conditioned on the qubit record."""
    s = _setup(params, device, cfg, noise)
    k = s.kit
    program = [k.H1(phi), k.U, k.H2()]
    if qubit is not None:
        program.append(k.readout("Ramsey readout"))
    ledger = run_sequence(s.prep.rho, program, params.mode, s.noise)
    rho = ledger.state(None if qubit is None else at(0, qubit))
    return partial_trace_qubit(rho)
