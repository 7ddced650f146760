"""Quantum information geometry of open systems: Fisher information, Onsager tensors and reversal."""

__version__ = "0.1.0"

from .classical import MarkovChain, classical_fisher, classical_retrodiction, embed_diagonal
from .gaussian import GaussianChannel, GaussianState, closed_form_onsager, fock_compare
from .geometry import (
    PerturbationSpec,
    TangentFamily,
    currents_and_rate,
    expansion_check,
    geometry_profile,
    gibbs_family,
    kick_family,
    onsager_tensor,
)
from .lindblad import BosonicCoupling, GkslModel, bosonic_model, generator, propagate, thermal_state
from .operators import OperatorError
from .petz import CONNES, HELSTROM, KMB, RIGHT_PRODUCT, PetzDensityMap, get_phi
from .reversal import MotionReversal, ReversalPair, detailed_balance_check, reverse_generator

__all__ = [
    "MarkovChain",
    "classical_fisher",
    "classical_retrodiction",
    "embed_diagonal",
    "GaussianChannel",
    "GaussianState",
    "closed_form_onsager",
    "fock_compare",
    "PerturbationSpec",
    "TangentFamily",
    "currents_and_rate",
    "expansion_check",
    "gibbs_family",
    "kick_family",
    "geometry_profile",
    "onsager_tensor",
    "BosonicCoupling",
    "GkslModel",
    "bosonic_model",
    "generator",
    "propagate",
    "thermal_state",
    "OperatorError",
    "CONNES",
    "HELSTROM",
    "KMB",
    "RIGHT_PRODUCT",
    "PetzDensityMap",
    "get_phi",
    "MotionReversal",
    "ReversalPair",
    "detailed_balance_check",
    "reverse_generator",
]
