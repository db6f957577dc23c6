"""Exact unconditional ML detection from the full received-signal covariance.

For codeword ``X_j`` the received vector ``y = vec(X H + Z)`` (length ``K*nr``,
column-wise) is zero-mean Gaussian with ``K``-block-Toeplitz covariance

    Sigma_j(n) = X_j Cf(n) X_j^H + noise_power * delta_n * I_K,

where ``Cf(n)`` are the fading covariance blocks. The normalized metric is

    L_j(y) = (y^H Sigma_j^{-1} y + ln det Sigma_j) / (K * nr)

and the detector returns its argmin. Precomputation costs ``O(M (K nr)^3)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ._linalg import block_toeplitz
from .channel import FadingCovariance
from .codebook import CodewordAlphabet, as_matrix
from .errors import InvalidArgumentError, NumericalError

#: Largest K*nr for which the dense covariance is assembled, by default.
MAX_DIRECT_DIM = 8192


@dataclass(frozen=True, eq=False)
class BlockCovariance:
    """Blocks ``Sigma(n)``, ``n = 0..nr-1``, of a ``K``-block-Toeplitz covariance."""

    blocks: np.ndarray
    noise_power: float
    nr: int

    @property
    def K(self) -> int:
        return self.blocks.shape[1]

    @property
    def dim(self) -> int:
        return self.K * self.nr

    def assemble(self) -> np.ndarray:
        return block_toeplitz(self.blocks)


def build_block_covariance(x, fading: FadingCovariance, noise_power: float) -> BlockCovariance:
    """Covariance blocks of ``vec(X H + Z)`` for codeword ``x``."""
    x = as_matrix(x)
    if not noise_power > 0:
        raise InvalidArgumentError(f"noise power must be positive, got {noise_power!r}")
    if x.shape[1] != fading.nt:
        raise InvalidArgumentError(f"codeword has nt={x.shape[1]}, fading has nt={fading.nt}")
    blocks = x @ fading.blocks @ x.conj().T
    blocks[0] += noise_power * np.eye(x.shape[0])
    return BlockCovariance(blocks=blocks, noise_power=float(noise_power), nr=fading.nr)


@dataclass(frozen=True, eq=False)
class DirectDetectorState:
    """Lower Cholesky factors and normalized log-determinants, one per codeword."""

    factors: tuple
    logdets: np.ndarray
    K: int
    nr: int

    @property
    def M(self) -> int:
        return len(self.factors)

    @property
    def dim(self) -> int:
        return self.K * self.nr


def _factor(cov: BlockCovariance) -> tuple:
    sigma = cov.assemble()
    try:
        low = scipy.linalg.cholesky(sigma, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        eig = np.linalg.eigvalsh(sigma)
        raise NumericalError(
            f"Cholesky failed for a {sigma.shape[0]}x{sigma.shape[0]} covariance "
            f"(min eigenvalue {eig[0]:.3e}, max {eig[-1]:.3e})"
        ) from exc
    logdet = 2.0 * np.sum(np.log(np.real(np.diagonal(low)))) / sigma.shape[0]
    return low, logdet


def precompute_direct(
    alphabet: CodewordAlphabet,
    fading: FadingCovariance,
    noise_power: float,
    max_dim: int = MAX_DIRECT_DIM,
) -> DirectDetectorState:
    """Factor every codeword covariance once; valid while the statistics hold."""
    dim = alphabet.K * fading.nr
    if dim > max_dim:
        raise InvalidArgumentError(f"K*nr = {dim} exceeds the direct-detector cap {max_dim}")
    factors, logdets = [], []
    for cw in alphabet:
        low, logdet = _factor(build_block_covariance(cw, fading, noise_power))
        factors.append(low)
        logdets.append(logdet)
    return DirectDetectorState(tuple(factors), np.array(logdets), alphabet.K, fading.nr)


def _as_observations(y, dim: int) -> np.ndarray:
    y = np.asarray(y)
    if y.shape[-1] != dim:
        raise InvalidArgumentError(f"observation length {y.shape[-1]} != K*nr = {dim}")
    return y


def quadratic_direct(y, state: DirectDetectorState, j: int) -> np.ndarray:
    """Normalized quadratic term ``y^H Sigma_j^{-1} y / (K nr)`` for ``y`` of shape (..., K*nr)."""
    y = _as_observations(y, state.dim)
    flat = y.reshape(-1, state.dim).T
    white = scipy.linalg.solve_triangular(state.factors[j], flat, lower=True, check_finite=False)
    q = np.einsum("ij,ij->j", white.conj(), white).real / state.dim
    return q.reshape(y.shape[:-1])


def ml_metric_direct(y, state: DirectDetectorState, j: int) -> np.ndarray:
    """``L_j(y)``; scalar for one observation, array for a batch."""
    return quadratic_direct(y, state, j) + state.logdets[j]


def ml_metrics_direct(y, state: DirectDetectorState) -> np.ndarray:
    """All metrics, shape ``(..., M)``."""
    return np.stack([ml_metric_direct(y, state, j) for j in range(state.M)], axis=-1)


def detect_direct(y, state: DirectDetectorState) -> np.ndarray:
    """Index of the minimum metric; ties resolve to the lowest index."""
    if state.M == 0:
        raise InvalidArgumentError("empty alphabet")
    return np.argmin(ml_metrics_direct(y, state), axis=-1)
