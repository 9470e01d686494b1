"""Projective measurements and exhaustive branch bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, Union

import numpy as np

from .hilbert import HilbertConfig
from .noise import EvolutionMode, NoiseModel, apply_gate_noisy
from .operators import PROJ_E, PROJ_G, Operator, lift_cavity, lift_qubit

NULL_WEIGHT = 1e-15

Outcomes = tuple[str, ...]
Predicate = Callable[[Outcomes], bool]


class UndefinedConditionalError(ZeroDivisionError):
    pass


@dataclass(frozen=True, eq=False)
class MeasurementStep:
    """A projective measurement, optionally followed by classical confusion.

    With a confusion matrix the recorded label ``r`` keeps the mixture
    ``sum_k C[r, k] Pi_k rho Pi_k``; the projectors and the confusion
    matrix share the outcome ordering. In noisy mode the qubit idles for
    ``duration``, with the projection placed at the middle of the window.
    """

    label: str
    projectors: Sequence[tuple[str, np.ndarray]]
    apply_confusion: bool = False
    confusion: np.ndarray | None = None
    duration: float = 0.0

    def __post_init__(self):
        mats = [np.asarray(m.matrix if isinstance(m, Operator) else m) for _, m in self.projectors]
        object.__setattr__(self, "projectors", tuple((o, m) for (o, _), m in zip(self.projectors, mats)))
        if not mats:
            raise ValueError("measurement needs at least one projector")
        dim = mats[0].shape[0]
        total = np.zeros((dim, dim), dtype=complex)
        for outcome, m in self.projectors:
            if m.shape != (dim, dim):
                raise ValueError(f"projector {outcome!r} has shape {m.shape}")
            if np.max(np.abs(m - m.conj().T)) > 1e-10 or np.max(np.abs(m @ m - m)) > 1e-10:
                raise ValueError(f"projector {outcome!r} is not a Hermitian idempotent")
            total += m
        if np.max(np.abs(total - np.eye(dim))) > 1e-10:
            raise ValueError(f"projectors of {self.label!r} do not resolve the identity")
        if self.apply_confusion:
            c = np.asarray(self.confusion, dtype=float)
            k = len(self.projectors)
            if c.shape != (k, k) or not np.allclose(c.sum(axis=0), 1, atol=1e-12):
                raise ValueError("confusion must be square and column-stochastic")
            object.__setattr__(self, "confusion", c)

    @property
    def outcomes(self) -> list[str]:
        return [o for o, _ in self.projectors]


@dataclass(frozen=True)
class Idle:
    duration: float
    label: str = "idle"


def qubit_measurement(
    cfg: HilbertConfig,
    label: str = "qubit readout",
    *,
    confusion: np.ndarray | None = None,
    duration: float = 0.0,
) -> MeasurementStep:
    return MeasurementStep(
        label,
        [("g", lift_qubit(PROJ_G, cfg)), ("e", lift_qubit(PROJ_E, cfg))],
        apply_confusion=confusion is not None,
        confusion=confusion,
        duration=duration,
    )


def vacuum_measurement(cfg: HilbertConfig, label: str = "vacuum test") -> MeasurementStep:
    vac = np.zeros((cfg.fock_dim, cfg.fock_dim), dtype=complex)
    vac[0, 0] = 1.0
    pv = lift_cavity(vac, cfg)
    return MeasurementStep(label, [("vac", pv), ("rest", np.eye(cfg.dim) - pv)])


def _project(rho: np.ndarray, step: MeasurementStep) -> list[np.ndarray]:
    """Unnormalised recorded-outcome states (traces are the probabilities)."""
    parts = [m @ rho @ m for _, m in step.projectors]
    if not step.apply_confusion:
        return parts
    c = step.confusion
    return [sum(c[r, k] * parts[k] for k in range(len(parts))) for r in range(len(parts))]


def measure(rho: np.ndarray, step: MeasurementStep) -> list[tuple[str, float, np.ndarray | None]]:
    """Born-rule outcomes ``(label, probability, post_state)``.

    Branches below 1e-15 probability carry ``None`` as the post-state.
    """
    out = []
    for outcome, part in zip(step.outcomes, _project(np.asarray(rho, dtype=complex), step)):
        p = float(np.trace(part).real)
        out.append((outcome, max(p, 0.0), part / p if p > NULL_WEIGHT else None))
    return out


@dataclass(frozen=True)
class Branch:
    probability: float
    state: np.ndarray | None


@dataclass
class BranchLedger:
    """Joint probabilities and conditional states keyed by outcome sequence."""

    branches: dict[Outcomes, Branch]
    labels: tuple[str, ...] = ()
    diagnostics: dict = field(default_factory=dict)

    def total(self) -> float:
        return sum(b.probability for b in self.branches.values())

    def probability(self, predicate: Predicate | None = None) -> float:
        return sum(b.probability for k, b in self.branches.items() if predicate is None or predicate(k))

    def __getitem__(self, outcomes) -> float:
        return self.branches[tuple(outcomes)].probability

    def get(self, outcomes, default: float = 0.0) -> float:
        b = self.branches.get(tuple(outcomes))
        return default if b is None else b.probability

    def state(self, predicate: Predicate | None = None) -> np.ndarray:
        """Normalised state conditioned on ``predicate`` (all branches if None)."""
        acc, w = None, 0.0
        for k, b in self.branches.items():
            if b.state is None or (predicate is not None and not predicate(k)):
                continue
            acc = b.probability * b.state if acc is None else acc + b.probability * b.state
            w += b.probability
        if acc is None or w <= NULL_WEIGHT:
            raise UndefinedConditionalError("no weight satisfies the condition")
        return acc / w

    def export(self) -> str:
        """One ``outcome_sequence<TAB>probability`` line per branch."""
        lines = [f"# {' / '.join(self.labels)}"] if self.labels else []
        for k in sorted(self.branches):
            lines.append(f"{','.join(k)}\t{self.branches[k].probability:.12g}")
        return "\n".join(lines) + "\n"


def conditional_probability(ledger: BranchLedger, condition: Predicate, target: Predicate) -> float:
    den = ledger.probability(condition)
    if den <= NULL_WEIGHT:
        raise UndefinedConditionalError("conditioning event has zero probability")
    return ledger.probability(lambda k: condition(k) and target(k)) / den


ProgramItem = Union[Operator, MeasurementStep, Idle]


def run_sequence(
    rho0: np.ndarray,
    program: Iterable[ProgramItem],
    mode: EvolutionMode,
    noise: NoiseModel | None = None,
) -> BranchLedger:
    """Run gates, idles and measurements, enumerating every outcome branch."""
    if mode.noisy and noise is None:
        raise ValueError("noisy mode needs a NoiseModel")
    live: dict[Outcomes, np.ndarray | None] = {(): np.asarray(rho0, dtype=complex)}
    labels = []

    def evolve_all(fn):
        keys = [k for k, r in live.items() if r is not None]
        if not keys:
            return
        stack = fn(np.stack([live[k] for k in keys]))
        for k, r in zip(keys, stack):
            live[k] = r

    for item in program:
        if isinstance(item, Operator):
            evolve_all(lambda s: apply_gate_noisy(s, item, noise, mode))
        elif isinstance(item, Idle):
            if mode.noisy and item.duration > 0:
                evolve_all(lambda s: noise.evolve(s, item.duration))
        elif isinstance(item, MeasurementStep):
            half = item.duration / 2 if mode.noisy else 0.0
            if half > 0:
                evolve_all(lambda s: noise.evolve(s, half))
            labels.append(item.label)
            nxt = {}
            for k, rho in live.items():
                if rho is None:
                    for o in item.outcomes:
                        nxt[k + (o,)] = None
                    continue
                for o, part in zip(item.outcomes, _project(rho, item)):
                    nxt[k + (o,)] = part if np.trace(part).real > NULL_WEIGHT else None
            live = nxt
            if half > 0:
                evolve_all(lambda s: noise.evolve(s, half))
        else:
            raise TypeError(f"malformed program item: {item!r}")

    branches = {}
    for k, rho in live.items():
        if rho is None:
            branches[k] = Branch(0.0, None)
            continue
        p = float(np.trace(rho).real)
        branches[k] = Branch(p, rho / p)
    diagnostics = {}
    if noise is not None and mode.noisy:
        diagnostics = {"max_trace_drift": noise.max_trace_drift, "min_eigenvalue": noise.min_eigenvalue}
    return BranchLedger(branches, tuple(labels), diagnostics)


def sample_outcomes(ledger: BranchLedger, shots: int, seed: int = 0) -> dict[Outcomes, int]:
    """Seeded multinomial draw from the ledger (for demo data with shot noise)."""
    keys = sorted(ledger.branches)
    p = np.array([ledger.branches[k].probability for k in keys])
    counts = np.random.default_rng(seed).multinomial(shots, p / p.sum())
    return dict(zip(keys, counts.tolist()))


def same(i: int, j: int) -> Predicate:
    """Outcome at position ``i`` equals the one at ``j``."""
    return lambda k: k[i] == k[j]


def differ(i: int, j: int) -> Predicate:
    return lambda k: k[i] != k[j]


def at(i: int, value: str) -> Predicate:
    return lambda k: k[i] == value


def both(*preds: Predicate) -> Predicate:
    return lambda k: all(p(k) for p in preds)
