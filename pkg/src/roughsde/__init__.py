"""Rough-and-stochastic differential equations at desk scale.

Library layout:

- ``group`` / ``paths``: step-2 tensor-group algebra, grid rough paths,
  signatures, Hoelder norms and distances, p-variation, translation.
- ``brownian``: Brownian sampling and its geometric lift.
- ``jointlift``: the canonical joint lift of a deterministic rough path and
  Brownian motion.
- ``fields`` / ``solver``: vector-field sets and the step-2 increment scheme
  for mixed rough/stochastic equations, plus a Stratonovich reference.
- ``greedy``: greedy-partition counts, the translation bound and
  Fernique-type tail certificates.
- ``filtering``: robust nonlinear filter and its Kalman-Bucy oracle.
- ``rpde``: Feynman-Kac evaluation of linear rough PDEs with finite
  difference references.
- ``cli``: experiment runner.
"""

from .brownian import (
    EnsembleConfig,
    brownian_lift,
    derive_rng,
    refine_times,
    sample_brownian,
    stratonovich_lift,
)
from .errors import (
    BlowUpError,
    DegenerateEnsembleError,
    GridError,
    RoughSDEError,
    ValidationError,
)
from .fields import VectorFieldSet, affine_field, constant_field, zero_field
from .greedy import (
    GreedyResult,
    TailFit,
    default_beta,
    fernique_tail_fit,
    greedy_count,
    n_beta_rough,
    translation_bound_check,
)
from .group import (
    GroupElement2,
    dilate,
    exp2,
    geometricity_residual,
    hom_norm,
    identity,
    inv,
    is_geometric,
    log2,
    mul,
)
from .jointlift import (
    JointLift,
    build_joint_lift,
    cross_integral,
    lipschitz_probe,
    sample_joint_lift,
)
from .paths import (
    BVGridPath,
    RoughPathGrid,
    holder_norm,
    hom_holder_norm,
    p_var,
    p_var_bv,
    resample,
    resample_bv,
    rho_alpha,
    rough_from_csv,
    rough_from_json,
    rough_to_csv,
    rough_to_json,
    signature_pl,
    translate,
)
from .filtering import (
    FilterProblem,
    FilterResult,
    kalman_bucy_oracle,
    robust_filter,
    solve_filter_system,
)
from .rpde import (
    RPDEProblem,
    ValueGrid,
    drift_correction,
    fd_reference,
    feynman_kac,
    rpde_approx_study,
)
from .solver import (
    EnsembleResult,
    RSDESolution,
    adjoin_time,
    rde_step,
    sde_stratonovich_reference,
    solve_rde,
    solve_rsde_ensemble,
)

__version__ = "0.1.0"
