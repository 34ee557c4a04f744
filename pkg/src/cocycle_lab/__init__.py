"""Matrix cocycles over shift spaces.

Holonomies, pinching/twisting simplicity certificates, cylinder-supported
perturbations and Monte-Carlo Lyapunov spectra for linear cocycles over full
shifts and subshifts of finite type.
"""

from .errors import (
    CocycleLabError,
    InadmissibleError,
    NotFiberBunched,
    PreconditionError,
    ScenarioError,
    SupportCollision,
    TruncationError,
)
from .shift import (
    HomoclinicData,
    InducedSystem,
    ShiftSystem,
    SymbolicPoint,
    distance,
    induce,
    isolating_depth,
    make_homoclinic,
    make_periodic,
    parse_point,
    shift,
)
from .cocycle import (
    BunchingCertificate,
    LongRangeCocycle,
    TableCocycle,
    builtin_long_range,
    certify_bunching,
    constant_cocycle,
    evaluate,
    holder_data,
    product,
    rotation,
    table_from_symbols,
)
from .holonomy import (
    HolonomyResult,
    holonomy_identities_check,
    stable_holonomy,
    stable_holonomy_derivative,
    unstable_holonomy,
    unstable_holonomy_derivative,
)
from .criterion import (
    SimplicityCertificate,
    certify_simple,
    check_pinching,
    check_twisting,
    search_pinching_point,
    transition_map,
)
from .perturbation import (
    PerturbationPlan,
    make_simple,
    perturb_homoclinic,
    perturb_periodic,
    submersion_rank_probe,
)
from .spectrum import (
    MeasureSpec,
    SpectrumEstimate,
    check_scaling,
    estimate_spectrum,
    induced_cocycle,
    multiplicity_report,
)
from .kernels import BACKEND

__version__ = "0.1.0"
