"""Energy-stable dual-pairing finite differences for elastic waves on
curvilinear two-block meshes coupled by nonlinear friction."""

from .operators import (
    Family,
    SbpOperatorSet,
    apply_axis,
    build_dp_upwind,
    build_drp,
    build_traditional,
    verify_operator,
)

__all__ = [
    "Family",
    "SbpOperatorSet",
    "apply_axis",
    "build_dp_upwind",
    "build_drp",
    "build_traditional",
    "verify_operator",
]

__version__ = "0.1.0"
