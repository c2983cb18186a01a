"""Adiabatic switching of degenerate eigenstates.

Numerical tools for the family ``H0 + lam V``: degenerate perturbation
theory around a degenerate level of ``H0``, the Kato, adiabatic and full
unitary evolutions under a switching function, and Gell-Mann--Low ratios.
"""

__version__ = "0.1.0"

from .degeneracy import (  # noqa: E402
    InitialBasis,
    build_initial_basis,
    expansion_check,
    first_order_vector,
    second_order_lift,
)
from .errors import *  # noqa: E402,F401,F403
from .gml import (  # noqa: E402
    check_ratio_condition,
    gap_diagnostics,
    geometric_eigenstate,
    gml_ratio,
    gml_sweep,
    multistep_gml,
    permanent_degeneracy_ratio,
)
from .io import load_problem, load_shipped, save_problem  # noqa: E402
from .operators import (  # noqa: E402
    HermitianOperator,
    PerturbationProblem,
    check_assumptions,
    make_problem,
    spectral_frame,
    validate_hermitian,
)
from .propagation import (  # noqa: E402
    Kind,
    adiabatic_evolve,
    evolve_from_past,
    full_evolve,
    interaction_picture,
    kato_evolve,
    kato_generator,
)
from .switching import Exponential, SmoothBump, Tabulated, profile_from_config, truncation_time  # noqa: E402
