"""Smeared free fields on Minkowski space: quantum and classical mass-shell
pairings, the ladder-operator algebra they induce, and a Gaussian random
field sampler."""

from .fock import (
    FockState,
    OperatorExpr,
    field,
    field_commutator,
    field_moment,
    normal_order,
    resonance_nonlocality_witness,
    resonance_probability,
    vev,
    vev_by_pairings,
)
from .rf import ModeSet, compare_to_fock, empirical_moments, gram, sample
from .shell import (
    BivectorTestFunction,
    KernelKind,
    ShellConfig,
    classical_ip,
    commutator_kernel,
    em_ip,
    quantum_ip,
)
from .testfn import (
    GaussianPacketSum,
    GridBump,
    boost,
    bump,
    conjugate,
    evaluate,
    fourier,
    packet,
    parity_reverse,
    positive_frequency_projection,
    time_reverse,
    translate,
)

__all__ = [
    "BivectorTestFunction",
    "boost",
    "bump",
    "classical_ip",
    "commutator_kernel",
    "compare_to_fock",
    "conjugate",
    "em_ip",
    "empirical_moments",
    "evaluate",
    "field",
    "field_commutator",
    "field_moment",
    "FockState",
    "fourier",
    "GaussianPacketSum",
    "gram",
    "GridBump",
    "KernelKind",
    "ModeSet",
    "normal_order",
    "OperatorExpr",
    "packet",
    "parity_reverse",
    "positive_frequency_projection",
    "quantum_ip",
    "resonance_nonlocality_witness",
    "resonance_probability",
    "sample",
    "ShellConfig",
    "time_reverse",
    "translate",
    "vev",
    "vev_by_pairings",
]

__version__ = "0.1.0"
