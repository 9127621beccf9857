"""Randomized and checksum-based verification of matrix products."""

from .analysis import (
    BoundReport,
    ExperimentConfig,
    ExperimentReport,
    magnitude_sweep,
    normal_cdf,
    run_experiment,
    sigma_tilde,
    theorem2_bound,
)
from .exceptions import DimensionError, DomainError, MatrixFormatError, MatverifyError, RangeError
from .faults import (
    BitFlip,
    ColSwap,
    ElementPerturb,
    RowSwap,
    SparsePerturb,
    adversarial_paired_columns,
    apply_fault,
    delta_of,
    parse_fault,
)
from .fixtures import paper2x2
from .matrix import (
    FMA,
    SEPARATE,
    AccumulationMode,
    DenseMatrix,
    TolerancePolicy,
    component_tolerances,
    count_operations,
    matvec,
    oracle_multiply,
    subtract,
)
from .sampling import ProjectionVector, SeededStream, sample_binary, sample_gaussian, sample_polynomial
from .verifiers import (
    ChecksumReport,
    Verdict,
    chain_verify,
    freivalds_verify,
    gvfa_rowcol_verify,
    gvfa_verify,
    huang_abraham_verify,
    poly_verify,
)

__version__ = "0.1.0"
