"""Simulator of a two-fold quantum delayed-choice experiment in circuit QED.

A superconducting qubit interferes while a dispersively coupled cavity acts
as a quantum which-path detector (WPD). Modules:

* ``hilbert``: joint qubit x cavity states and partial traces
* ``operators``: device parameters, gates and Hamiltonians
* ``noise``: Lindblad evolution and readout confusion
* ``measurement``: projective readout and exhaustive branch ledgers
* ``tomography``: Wigner functions, reconstruction and fidelities
* ``protocols``: the experiment sequences
* ``cli``: configuration and data export
"""

from .hilbert import HilbertConfig, TruncationError
from .measurement import BranchLedger, run_sequence
from .noise import IDEAL, NOISY, EvolutionMode, NoiseModel
from .operators import DeviceParams, Durations
from .protocols import ProtocolParams

__version__ = "0.1.0"

__all__ = [
    "BranchLedger",
    "DeviceParams",
    "Durations",
    "EvolutionMode",
    "HilbertConfig",
    "IDEAL",
    "NOISY",
    "NoiseModel",
    "ProtocolParams",
    "TruncationError",
    "run_sequence",
]
