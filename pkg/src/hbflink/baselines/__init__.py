"""Classical comparison chain: OMP estimation, Lloyd-Max quantizers, parameter feedback, SVD hybrid precoding."""

from .lloyd_max import ScalarCodebook, gaussian_codebook, lloyd_max_train, quantize, uniform_codebook
from .omp import AngularDictionary, OmpResult, angular_dictionary, omp_estimate, sensing_matrix
from .overhead import SCHEMES as OVERHEAD_SCHEMES
from .overhead import signaling_overhead
from .param_feedback import bits_per_parameter, parameter_feedback_reconstruct, quantize_params
from .precoding import LABEL as SVD_LABEL
from .precoding import HybridSolution, alt_min_hybrid, mmse_combiner, svd_hybrid_precode

__all__ = [
    "AngularDictionary", "HybridSolution", "OVERHEAD_SCHEMES", "OmpResult", "SVD_LABEL", "ScalarCodebook",
    "alt_min_hybrid", "angular_dictionary", "bits_per_parameter", "gaussian_codebook", "lloyd_max_train",
    "mmse_combiner", "omp_estimate", "parameter_feedback_reconstruct", "quantize", "quantize_params",
    "sensing_matrix", "signaling_overhead", "svd_hybrid_precode", "uniform_codebook",
]
