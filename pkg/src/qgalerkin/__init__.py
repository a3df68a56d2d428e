"""Galerkin approximations and averaging-based control of bilinear quantum systems."""

__version__ = "0.1.0"

from .models import (  # noqa: E402
    GalerkinSystem,
    SpectralModel,
    build_model,
    build_planar_even,
    build_planar_odd,
    energy_growth_bound,
    factorial_population_bound,
    galerkin_error_bound,
    get_model,
    truncation_tail_bound,
)
from .controls import ControlLaw, CosinePower, AffineCosine, PulseTrain, Sampled, parse_shape  # noqa: E402
from .propagator import expm_skew, propagate_control, propagate_piecewise, populations  # noqa: E402
from .averaging import (  # noqa: E402
    averaged_coupling_graph,
    efficiency,
    resonance_analysis,
    run_transfer,
    theorem_estimates,
)
