"""Superimposed-code pilot protection for grant-free massive-MIMO uplink access."""
from __future__ import annotations

from .superimposed_code import CodeParams, Codebook, construct_codebook
from .phy_sim import AttackMode, SystemConfig
from .qln_decoder import AccessReport, decode_burst, decode_features
from .quantum_core import run_parity_circuit

__all__ = [
    "AccessReport",
    "AttackMode",
    "CodeParams",
    "Codebook",
    "SystemConfig",
    "construct_codebook",
    "decode_burst",
    "decode_features",
    "run_parity_circuit",
]
__version__ = "0.1.0"
