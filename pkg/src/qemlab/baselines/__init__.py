"""Standard error-mitigation baselines and their sampling-overhead ledgers."""

from .cdr import CliffordSubstitution, cdr_mitigate
from .overhead import OverheadLedger
from .pec import SPLModel, pec_mitigate, spl_calibrate
from .zne import RichardsonPlan, richardson_coefficients, zne_mitigate

__all__ = [
    "CliffordSubstitution",
    "OverheadLedger",
    "RichardsonPlan",
    "SPLModel",
    "cdr_mitigate",
    "pec_mitigate",
    "richardson_coefficients",
    "spl_calibrate",
    "zne_mitigate",
]
