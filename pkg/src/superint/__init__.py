"""Berezin integration on superdomains with retractions, corners and boundary terms."""

from .berezin import (
    DEFAULT,
    BerezinDensity,
    Convention,
    DiffOp,
    SuperMatrix,
    act,
    ber,
    fibre_integral,
    frame_of,
    jacobian_ber,
    jacobian_matrix,
    lie_derivative,
    morphism_as_diffop,
    pullback_density,
    transform_density,
)
from .chart import (
    Chart,
    CoordinateSystem,
    Morphism,
    Retraction,
    associated_retraction,
    decompose,
    pullback_fn,
    pullback_retraction,
    reconstruct,
)
from .corners import (
    CornerData,
    Face,
    change_of_vars_corners,
    change_of_vars_local,
    count_terms,
    enumerate_indices,
    induced_retraction,
    restrict_density,
)
from .grassmann import Parity, SuperNumber, compose_scalar, generator, scalar, superderivative
from .quadrature import QuadratureRule, Region, integrate_berezin, integrate_volume, richardson
from .stokes import IntegralForm, cartan_d, pullback_integral_form, stokes_general, verify_stokes

__version__ = "0.1.0"

__all__ = [
    "BerezinDensity",
    "Chart",
    "Convention",
    "CoordinateSystem",
    "CornerData",
    "DEFAULT",
    "DiffOp",
    "Face",
    "IntegralForm",
    "Morphism",
    "Parity",
    "QuadratureRule",
    "Region",
    "Retraction",
    "SuperMatrix",
    "SuperNumber",
    "act",
    "associated_retraction",
    "ber",
    "cartan_d",
    "change_of_vars_corners",
    "change_of_vars_local",
    "compose_scalar",
    "count_terms",
    "decompose",
    "enumerate_indices",
    "fibre_integral",
    "frame_of",
    "generator",
    "induced_retraction",
    "integrate_berezin",
    "integrate_volume",
    "jacobian_ber",
    "jacobian_matrix",
    "lie_derivative",
    "morphism_as_diffop",
    "pullback_density",
    "pullback_fn",
    "pullback_integral_form",
    "pullback_retraction",
    "reconstruct",
    "restrict_density",
    "richardson",
    "scalar",
    "stokes_general",
    "superderivative",
    "transform_density",
    "verify_stokes",
]
