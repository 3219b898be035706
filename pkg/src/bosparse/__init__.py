"""Sparse domination of bounded-oscillation operators on finite ball bases."""

from .space import MeasureSpace, as_mask, avg, distribution, lp_norm, weak_lp_norm
from .basis import (
    AxiomReport,
    Ball,
    BallBasis,
    QuasiMetricError,
    QuasiMetricSpec,
    avg_star,
    build_arc_basis,
    build_tree_basis,
    compute_hull,
    cyclic_metric,
    dump_basis,
    dyadic_basis,
    load_basis,
    parse_basis,
    verify_axioms,
)
from .covering import cardinality_bound_check, economical_cover, greedy_disjoint_subcover
from .operators import (
    BOReport,
    Estimate,
    KernelOperator,
    SublinearOperator,
    delta,
    discrete_hilbert,
    kernel_operator,
    martingale_transform,
    maximal_modulation,
    maximal_operator,
    random_signs,
    t_star,
    t_star_star,
    verify_bo,
    walsh_modulators,
)
from .sparse import (
    DominationError,
    SparseCollection,
    SparsenessFailure,
    best_sparse_gamma,
    build_family_tree,
    certify_sparse,
    chain_extend,
    oracle_dyadic_sparse,
    prune_tree,
    sparse_apply,
    sparse_operator,
    theorem1_sparse,
    verify_domination,
)
from .weights import (
    Weight,
    ap_characteristic,
    buckley_sweep,
    check_weight_lemmas,
    dual_weight,
    sparse_weighted_bound_check,
    weighted_maximal,
    weighted_operator_norm,
)

__version__ = "0.1.0"
