"""Mean curvature flow on uniform grids by diffusion and exact redistancing."""

__version__ = "0.1.0"

from .errors import (
    BadTheta,
    Extinct,
    GeometryMismatch,
    HypothesisViolated,
    McflowError,
    NotLipschitz,
    PhaseVanished,
    WrongDimension,
)
from .grid import (
    GridGeometry,
    LipschitzReport,
    PhaseMask,
    ScalarField,
    discrete_laplacian,
    disk_mask,
    exact_signed_distance,
    lipschitz_check,
    seed_field,
)
from .kernels import (
    KernelReport,
    SpectralKernel,
    StencilKernel,
    apply_kernel,
    explicit_euler_kernel,
    heat_semigroup_symbol,
    implicit_euler_symbol,
    kernel_from_spec,
    validate_kernel,
)
from .redistance import (
    RedistanceConfig,
    d_minus,
    d_plus,
    nonlinear_redistance,
    redistance,
    sd_minus,
    sd_plus,
    sd_strip,
)
from .scheme import (
    EvolutionTrace,
    SchemeConfig,
    run,
    step_linear,
    step_multiphase,
    step_nonlinear,
)
from .analysis import (
    RadiusLaw,
    ScalingReport,
    ball_step_scaling,
    compare_to_law,
    radius_from_field,
    random_lipschitz_field,
    strip_equivalence,
)
