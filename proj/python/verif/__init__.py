"""Verification of DNNP properties of ONNX networks."""

from ._core import (
    Network,
    Outcome,
    Property,
    ReducedProblem,
    Report,
    VerifError,
    ibp,
    load_npy,
    reduce,
    sample,
    save_npy,
    verifiers,
    verify,
)

__all__ = [
    "Network",
    "Outcome",
    "Property",
    "ReducedProblem",
    "Report",
    "VerifError",
    "ibp",
    "load_npy",
    "reduce",
    "sample",
    "save_npy",
    "verifiers",
    "verify",
]
