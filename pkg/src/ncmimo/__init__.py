"""Noncoherent detection for massive-MIMO uplinks over spatially stationary fading.

Two ML detectors are provided: an exact one built on the full block-Toeplitz
covariance of the received block, and a spectral approximation that works on
FFT coefficients with per-frequency ``K x K`` cyclic spectral matrices.
"""

from .channel import (
    ChannelProfile,
    ChannelSampler,
    FadingCovariance,
    assemble_fading_covariance,
    flat_profile,
    load_profile,
    random_unitary,
    sample_channel,
    triangular_profile,
)
from .codebook import Codeword, CodewordAlphabet, grassmannian_alphabet, orthogonal_pair_alphabet, svd_codeword
from .detector_direct import build_block_covariance, detect_direct, ml_metric_direct, precompute_direct
from .detector_spectral import cl_coefficients, csm_analytic, csm_from_rsm, detect_spectral, ml_metric_spectral, precompute_spectral, rsm_estimate
from .divergence import (
    Singularity,
    detect_singularity,
    isd_subbands,
    kld_direct,
    kld_high_snr_equal_rank,
    kld_low_snr_coefficient,
    kld_no_csit,
    kld_spectral,
)
from .errors import DegenerateProfileError, InvalidArgumentError, NumericalError
from .harness import ExperimentConfig, benchmark_complexity, pairwise_error, run_sweep, simulate_observation, simulate_observations, snr_to_noise_power

__version__ = "0.1.0"
