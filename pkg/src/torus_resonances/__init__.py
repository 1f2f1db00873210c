"""Ruelle-Pollicott resonances of noisy quantum maps on the torus."""

from .channels import (
    CoarseGrainedPropagator,
    NoiseKernel,
    ResourceGuardError,
    apply_propagator,
    build_noise_kernel,
    dense_superoperator,
    make_propagator,
)
from .classical import (
    ClassicalPropagator,
    build_classical_propagator,
    classical_correlation_series,
    classical_leading_spectrum,
)
from .maps import (
    PerturbedCatParams,
    QuantizationError,
    QuantumMapUnitary,
    classical_cat_step,
    lyapunov_exponent,
    quantize_perturbed_cat,
)
from .observables import (
    TimeSeries,
    autocorrelation_series,
    averaged_series,
    fit_decay_rate,
    linear_entropy_series,
    loschmidt_series,
)
from .spectral import (
    MomentSequence,
    NoOverlapError,
    SpectrumResult,
    chord_truncation_spectrum,
    compute_moments,
    dense_spectrum,
    hankel_matrices,
    iteration_spectrum,
    quantum_iteration_spectrum,
    stability_filter,
)
from .torus import (
    chord_transform,
    coherent_state,
    hs_inner,
    translation_matrix,
    wigner_function,
)

__version__ = "0.1.0"
