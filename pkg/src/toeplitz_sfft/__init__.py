"""Sublinear-query low-rank approximation of PSD Toeplitz matrices."""
from .core import (
    BudgetExceeded,
    ConjugateClosureError,
    EntryOracle,
    FourierToeplitz,
    SignalOracle,
    SparseSignal,
    SymToeplitz,
    canonical_freq,
    conjugate_freq,
    dense_dtft,
    toeplitz_entry,
    wrap_dist,
)
from .covariance import SampleSet, concentration_check, covariance_estimate, sample_cov_entry, sample_gaussian_toeplitz
from .filters import FilterG, FilterH, build_filter_g, build_filter_h, validate_g, validate_h
from .hashing import HashParams, hash_freq, hash_to_bins, outer_split, sample_hash_params
from .recovery import GridSpec, LowRankConfig, RecoveryReport, expand_grid, heavy_column_sample, lowrank, robust_lowrank
from .regression import (
    ConjugatePairing,
    leverage_bounds,
    draw_sampling_rows,
    solve_matrix_regression,
    solve_weighted_column_regression,
    weight_vector,
)
from .sfft import FrequencyList, RecoveryConfig, sparse_recover

__version__ = "0.1.0"
