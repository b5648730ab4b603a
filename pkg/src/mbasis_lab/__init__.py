"""Finite-truncation laboratory for biorthogonal systems in l2."""

__version__ = "0.1.0"

from .subspace import (  # noqa: F401
    SubspaceBasis,
    ToleranceConfig,
    TruncatedVector,
    distance_to_span,
    dual_solve,
    project,
    span_equal,
    unit_net,
)
from .biorth import (  # noqa: F401
    BiorthSystem,
    IntervalFamily,
    biorthogonality_defect,
    block_duality_check,
    boundedness_constant,
    classify_perturbation,
    intersection_defect,
    norming_constant_estimate,
    spanning_indices,
    uniform_minimality_constant,
)
from .perturbations import (  # noqa: F401
    BlockPartition,
    construct_flattened,
    flattened_from_duals,
    validate_block_partition,
    verify_flattened,
)
from .representing import (  # noqa: F401
    RepresentingIndices,
    StrongPartitionTrace,
    build_norming_indices,
    build_representing_indices,
    reconstruct,
    strong_partition,
    strongness_diagnostic,
    subseries_reconstruct,
)
from .pathology import (  # noqa: F401
    PermutationSpec,
    RoughSystem,
    build_pathological_system,
    build_permutation,
    build_phi,
    extract_rough_system,
    greedy_rough_packing,
    identity_permutation,
    omega_stats,
    operator_T,
    rough_capacity,
    rough_defect,
    t_asymptotics_check,
    unb_experiment,
)
