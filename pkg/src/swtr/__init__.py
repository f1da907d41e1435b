"""Airy structures, local topological recursion and hyperelliptic periods.

The package verifies at desk scale that the Taylor expansion of the
prepotential of the hyperelliptic curve family around a reference curve is
generated by B-period integrals of the genus-zero recursion differentials.
"""

__version__ = "0.1.0"

from .laurent import LaurentSeries, SeriesDifferential, sqrt_shift_flow, symplectic_pairing
from .airy import (
    AiryTensors,
    GaugeData,
    SgnTable,
    WElement,
    atr_run,
    build_residue_constraint_tensors,
    build_tr_variant_tensors,
    embed_disc,
    eval_hamiltonians,
    gauge_transform,
    validate_gauge,
)
from .spectral import LocalSpectralCurve, OmegaGN, atr_eo_crosscheck, eo_run, omega_eval
from .hyperelliptic import (
    BergmanData,
    CycleBasis,
    PeriodData,
    SWCurve,
    bergman_kernel,
    build_cycles,
    invert_a_map,
    new_curve,
    periods,
)
from .charts import (
    StandardChart,
    decompose_in_g,
    local_expansions,
    standard_charts,
    sw_embed_global,
)

__all__ = [
    "AiryTensors", "BergmanData", "CycleBasis", "GaugeData", "LaurentSeries",
    "LocalSpectralCurve", "OmegaGN", "PeriodData", "SWCurve", "SeriesDifferential",
    "SgnTable", "StandardChart", "WElement", "atr_eo_crosscheck", "atr_run",
    "bergman_kernel", "build_cycles", "build_residue_constraint_tensors",
    "build_tr_variant_tensors", "decompose_in_g", "embed_disc", "eo_run",
    "eval_hamiltonians", "gauge_transform", "invert_a_map", "local_expansions",
    "new_curve", "omega_eval", "periods", "sqrt_shift_flow", "standard_charts",
    "sw_embed_global", "symplectic_pairing", "validate_gauge",
]
