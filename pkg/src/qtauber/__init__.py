"""Numerical verification toolkit for quantified Tauberian decay of operator powers."""

from .mollifier import Mollifier, build_mollifier, build_periodic_multi, verify_properties
from .operators import (
    Dense,
    Diagonal,
    PowerSequence,
    e_kt_sequence,
    gallery,
    kt_sequence,
    resolvent_profile,
)
from .oscillatory import boundary_integral, oscillatory_integral, y_coefficients, z_coefficients
from .piecewise_poly import PiecewisePolynomial
from .rates import RateFunction, decay_exponent, envelope_constant, inverse
from .tauber import (
    approximation_defect,
    choose_parameters,
    e_ritt_experiment,
    identity_crosscheck,
    kt_dimension_trend,
    kt_experiment,
    ritt_experiment,
    smooth_sequence,
)

__version__ = "0.1.0"
