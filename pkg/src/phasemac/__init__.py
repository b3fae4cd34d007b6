"""Behavioral simulator of a gated-ring-oscillator phase-domain MAC."""

from .array import CapacityError, EnergyLedger, batched_matmul, matvec, max_safe_dot_length
from .gro import (CounterSaturationError, GroBank, GroState, InvalidPhaseCode, decode_phase,
                  dtc_pulse, encode_phase, new_gro)
from .pmac import PmacBank, PmacUnit, SignMag, pmac_dot, ref_dot, split_weight, to_sign_mag

__version__ = "0.1.0"

__all__ = [
    "CapacityError", "CounterSaturationError", "EnergyLedger", "GroBank", "GroState",
    "InvalidPhaseCode", "PmacBank", "PmacUnit", "SignMag", "batched_matmul", "decode_phase",
    "dtc_pulse", "encode_phase", "matvec", "max_safe_dot_length", "new_gro", "pmac_dot",
    "ref_dot", "split_weight", "to_sign_mag",
]
