"""Mean ergodic averages on measurable bundles of finite-dimensional Hilbert spaces."""

from .bundle import (
    BundleVector,
    FiberSpec,
    basis_vector,
    d_decompose,
    inner_product,
    l0_axpy,
    make_fibers,
    vector_from_json,
    vector_norm,
    vector_to_json,
    zero_vector,
)
from .ergodic import (
    ConvergenceReport,
    NonCommutingWarning,
    NotAContractionError,
    cesaro_average,
    cesaro_trajectory,
    mean_ergodic_projection,
    modulated_average,
    multiparameter_average,
    subsequence_average,
    weighted_average,
    weighted_discrepancy,
)
from .measure_space import (
    AtomicMeasureSpace,
    L0Scalar,
    SpaceMismatchError,
    l0_combine,
    l0_max_abs,
    make_space,
    ones,
    zeros,
)
from .operators import (
    BundleOperator,
    adjoint,
    apply,
    check_l0_linearity,
    compose,
    identity_operator,
    is_contraction,
    is_unitary,
    operator_from_json,
    operator_norm,
    operator_to_json,
)
from .sequences import (
    ConditionReport,
    SequenceError,
    SequenceSpec,
    check_modulation_conditions,
    check_subsequence_condition,
    check_weight_condition,
    generate,
    subsequence_to_weights,
)

__version__ = "0.1.0"
