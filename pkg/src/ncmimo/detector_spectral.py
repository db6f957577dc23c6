"""Low-complexity spectral approximation of the ML detector.

The received sequence is cyclostationary with period ``K``, so its ``K*nr``-point
FFT splits into ``nr`` groups of ``K`` bins spaced ``nr`` apart. Group ``l``
(frequency offset ``sigma = l / (K nr)``) is approximately independent of the
other groups with covariance ``S_j(sigma) / (K nr)``, where ``S_j`` is the
cyclic spectral matrix (CSM) of hypothesis ``j``. The metric is

    Q_j = sum_l d(l)^H S_j(l/(K nr))^{-1} d(l),   l_j = (1/(K nr)) sum_l ln det S_j(l/(K nr))

The CSM is obtained from the block DTFT of the covariance blocks (the RSM)
through the unitary congruence ``S(sigma) = F^H Theta(sigma)^H R(K sigma) Theta(sigma) F``.
With the triangular (Blackman-Tukey) lag window the estimate equals the exact
covariance of the FFT groups and is positive definite.

All indices are 0-based: time ``n = 0..K*nr-1``, offsets ``l = 0..nr-1``.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._linalg import hermitian_part
from .channel import ChannelProfile, FadingCovariance
from .codebook import CodewordAlphabet, as_matrix
from .detector_direct import BlockCovariance, build_block_covariance
from .errors import InvalidArgumentError

logger = logging.getLogger(__name__)

RECTANGULAR = "rect"
BLACKMAN_TUKEY = "bt"
WINDOWS = (RECTANGULAR, BLACKMAN_TUKEY)

#: Relative eigenvalue floor applied before inverting an estimated CSM.
EIG_FLOOR = 1e-12


def _check_window(window: str) -> str:
    aliases = {"rect": RECTANGULAR, "rectangular": RECTANGULAR, "bt": BLACKMAN_TUKEY, "blackman-tukey": BLACKMAN_TUKEY}
    try:
        return aliases[window]
    except KeyError:
        raise InvalidArgumentError(f"unknown window {window!r}; use 'rect' or 'bt'") from None


def fourier_matrix(K: int) -> np.ndarray:
    """Unitary DFT basis ``F[r, c] = exp(j 2 pi r c / K) / sqrt(K)``."""
    k = np.arange(K)
    return np.exp(2j * np.pi * np.outer(k, k) / K) / np.sqrt(K)


def theta(sigma, K: int) -> np.ndarray:
    """Diagonal of ``Theta(sigma) = Diag(1, e^{j2 pi sigma}, ..., e^{j2 pi sigma (K-1)})``.

    Shape ``sigma.shape + (K,)``.
    """
    sigma = np.asarray(sigma, dtype=float)
    return np.exp(2j * np.pi * sigma[..., None] * np.arange(K))


def cl_coefficients(y, K: int, nr: int) -> np.ndarray:
    """Normalized FFT of ``y`` regrouped by frequency offset.

    Returns ``d`` with shape ``(..., nr, K)`` where ``d[..., l, k]`` is bin
    ``l + k*nr`` of the ``K*nr``-point FFT divided by ``K*nr``.
    """
    y = np.asarray(y)
    n = K * nr
    if y.shape[-1] != n:
        raise InvalidArgumentError(f"observation length {y.shape[-1]} != K*nr = {n}")
    spec = np.fft.fft(y, axis=-1) / n
    return np.swapaxes(spec.reshape(y.shape[:-1] + (K, nr)), -1, -2)


def _rsm_all(blocks: np.ndarray, window: str) -> np.ndarray:
    nr = blocks.shape[0]
    if window == BLACKMAN_TUKEY:
        blocks = blocks * (1.0 - np.arange(nr) / nr)[:, None, None]
    half = np.fft.fft(blocks, axis=0)
    return half + np.conj(np.swapaxes(half, -1, -2)) - blocks[0]


def rsm_grid(cov: BlockCovariance, window: str = BLACKMAN_TUKEY) -> np.ndarray:
    """RSM estimates at ``lam = l / nr`` for every ``l``, shape ``(nr, K, K)``."""
    return _rsm_all(cov.blocks, _check_window(window))


def rsm_estimate(cov: BlockCovariance, l: int, window: str = BLACKMAN_TUKEY) -> np.ndarray:
    """RSM estimate at ``lam = l / nr`` from the ``nr`` covariance blocks.

    ``rect``:  ``A(l) + A(l)^H - Sigma(0)`` with ``A(l) = sum_n Sigma(n) e^{-j 2 pi n l / nr}``;
    ``bt``: the same with ``Sigma(n)`` weighted by ``1 - n / nr``.
    """
    window = _check_window(window)
    if int(l) != l or not 0 <= l < cov.nr:
        raise InvalidArgumentError(f"frequency index must lie in [0, {cov.nr}), got {l!r}")
    blocks = cov.blocks
    n = np.arange(cov.nr)
    weights = np.exp(-2j * np.pi * n * l / cov.nr)
    if window == BLACKMAN_TUKEY:
        weights = weights * (1.0 - n / cov.nr)
    half = np.tensordot(weights, blocks, axes=(0, 0))
    return half + half.conj().T - blocks[0]


def csm_from_rsm(rsm, sigma) -> np.ndarray:
    """``F^H Theta(sigma)^H R Theta(sigma) F``; broadcasts over leading axes of ``rsm`` and ``sigma``."""
    rsm = np.asarray(rsm)
    K = rsm.shape[-1]
    f = fourier_matrix(K)
    th = theta(sigma, K)
    rotated = np.conj(th)[..., :, None] * rsm * th[..., None, :]
    return f.conj().T @ rotated @ f


def csm_analytic(x, profile: ChannelProfile, eta: float, noise_power: float, sigma) -> np.ndarray:
    """Asymptotic CSM ``F^H Theta^H X Ut (eta S_H(K sigma)) Ut^H X^H Theta F + noise_power I``.

    ``sigma`` may be an array; the result has shape ``sigma.shape + (K, K)``.
    """
    x = as_matrix(x)
    K = x.shape[0]
    sigma = np.asarray(sigma, dtype=float)
    xu = x @ profile.ut
    spec = eta * np.moveaxis(profile.spectrum(K * sigma), 0, -1)
    core = np.einsum("ik,...k,jk->...ij", xu, spec, xu.conj())
    return csm_from_rsm(core, sigma) + noise_power * np.eye(K)


@dataclass(frozen=True, eq=False)
class SpectralDetectorState:
    """Inverse CSMs and spectral log-determinants for each codeword.

    Attributes
    ----------
    inv_csm : ndarray, shape (M, nr, K, K)
    csm : ndarray, shape (M, nr, K, K)
        The estimated CSMs themselves, kept for inspection.
    logdets : ndarray, shape (M,)
    window : str
        Window requested at precompute time.
    fallbacks : tuple of int
        Codewords whose rectangular-window estimate was not positive definite
        and were recomputed with the Blackman-Tukey window.
    whiteners : ndarray, shape (nr, K, M*K)
        Conjugated factors ``W`` with ``inv_csm = W W^H``, stacked across
        codewords, so all quadratic forms come from one batched product.
    """

    inv_csm: np.ndarray
    csm: np.ndarray
    logdets: np.ndarray
    window: str
    K: int
    nr: int
    fallbacks: tuple = field(default=())
    whiteners: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def M(self) -> int:
        return self.inv_csm.shape[0]


def _invert_csms(csm: np.ndarray) -> tuple:
    """Eigen-based inverse, whitener and log-det of a stack of Hermitian matrices, with a relative floor."""
    w, v = np.linalg.eigh(hermitian_part(csm))
    top = np.max(np.abs(w), axis=-1, keepdims=True)
    w = np.maximum(w, EIG_FLOOR * top)
    inv = (v / w[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))
    return inv, v / np.sqrt(w)[..., None, :], np.sum(np.log(w), axis=-1)


def spectral_csms(cov: BlockCovariance, window: str = BLACKMAN_TUKEY) -> np.ndarray:
    """Estimated CSMs at ``sigma = l / (K nr)``, shape ``(nr, K, K)``."""
    rsm = rsm_grid(cov, window)
    sigma = np.arange(cov.nr) / (cov.K * cov.nr)
    return hermitian_part(csm_from_rsm(rsm, sigma))


def _positive_definite(csm: np.ndarray) -> bool:
    w = np.linalg.eigvalsh(hermitian_part(csm))
    return bool(np.all(w[..., 0] > EIG_FLOOR * np.max(np.abs(w), axis=-1)))


def precompute_spectral(
    alphabet: CodewordAlphabet,
    fading: FadingCovariance,
    noise_power: float,
    window: str = BLACKMAN_TUKEY,
) -> SpectralDetectorState:
    """Estimate, invert and log-det every codeword's CSMs on the ``nr``-point offset grid.

    A rectangular-window estimate that is not positive definite at some offset
    is replaced by the Blackman-Tukey estimate for that codeword, with a warning.
    """
    window = _check_window(window)
    K, nr = alphabet.K, fading.nr
    csms, invs, whites, logdets, fallbacks = [], [], [], [], []
    for j, cw in enumerate(alphabet):
        cov = build_block_covariance(cw, fading, noise_power)
        csm = spectral_csms(cov, window)
        if window == RECTANGULAR and not _positive_definite(csm):
            logger.warning("codeword %d: rectangular-window CSM not positive definite; using Blackman-Tukey", j)
            fallbacks.append(j)
            csm = spectral_csms(cov, BLACKMAN_TUKEY)
        inv, white, logdet = _invert_csms(csm)
        csms.append(csm)
        invs.append(inv)
        whites.append(np.conj(white))
        logdets.append(np.sum(logdet) / (K * nr))
    return SpectralDetectorState(
        inv_csm=np.stack(invs),
        csm=np.stack(csms),
        logdets=np.array(logdets),
        window=window,
        K=K,
        nr=nr,
        fallbacks=tuple(fallbacks),
        whiteners=np.ascontiguousarray(np.concatenate(whites, axis=-1)),
    )


def _quadratic_rows(rows: np.ndarray, state: SpectralDetectorState, scale: float = 1.0) -> np.ndarray:
    """Quadratic forms of every codeword for contiguous rows shaped ``(nr, B, K)``; returns ``(B, M)``."""
    # d^H S^{-1} d = |W^H d|^2; as rows, d^T conj(W) for every codeword at once
    proj = rows @ state.whiteners  # (nr, B, M*K)
    power = proj.real**2 + proj.imag**2
    return scale * power.sum(axis=0).reshape(-1, state.M, state.K).sum(axis=-1)


def ml_metrics_spectral(cl: np.ndarray, state: SpectralDetectorState) -> np.ndarray:
    """Spectral metrics for CL coefficients of shape ``(..., nr, K)``; returns ``(..., M)``."""
    cl = np.asarray(cl)
    if cl.shape[-2:] != (state.nr, state.K):
        raise InvalidArgumentError(f"CL coefficients shaped {cl.shape[-2:]}, expected {(state.nr, state.K)}")
    lead = cl.shape[:-2]
    if state.whiteners is None:
        proj = np.einsum("mlkq,...lq->...mlk", state.inv_csm, cl)
        quad = np.einsum("...lk,...mlk->...m", cl.conj(), proj).real
        return quad + state.logdets
    rows = np.ascontiguousarray(np.moveaxis(cl.reshape((-1,) + cl.shape[-2:]), 1, 0))
    return _quadratic_rows(rows, state).reshape(lead + (state.M,)) + state.logdets


def ml_metric_spectral(cl: np.ndarray, state: SpectralDetectorState, j: int) -> np.ndarray:
    return ml_metrics_spectral(cl, state)[..., j]


def ml_metrics_observations(y, state: SpectralDetectorState) -> np.ndarray:
    """Spectral metrics straight from received blocks ``(..., K*nr)``; returns ``(..., M)``.

    Same values as ``ml_metrics_spectral(cl_coefficients(y, K, nr), state)``
    with one fewer copy of the data.
    """
    y = np.asarray(y)
    n = state.K * state.nr
    if y.shape[-1] != n:
        raise InvalidArgumentError(f"observation length {y.shape[-1]} != K*nr = {n}")
    if state.whiteners is None:
        return ml_metrics_spectral(cl_coefficients(y, state.K, state.nr), state)
    lead = y.shape[:-1]
    spec = np.fft.fft(y.reshape(-1, n), axis=-1)
    rows = np.ascontiguousarray(spec.reshape(-1, state.K, state.nr).transpose(2, 0, 1))
    quad = _quadratic_rows(rows, state, 1.0 / n**2)
    return quad.reshape(lead + (state.M,)) + state.logdets


def detect_spectral(y, state: SpectralDetectorState) -> np.ndarray:
    """Argmin of the spectral metrics for ``y`` of shape ``(..., K*nr)``; ties go to the lowest index."""
    if state.M == 0:
        raise InvalidArgumentError("empty alphabet")
    return np.argmin(ml_metrics_observations(y, state), axis=-1)


def dump_csms(state: SpectralDetectorState, path: os.PathLike, codeword: Optional[int] = None) -> None:
    """Write the estimated CSMs as a plain-text tensor.

    One line per entry: ``codeword l row col re im``.
    """
    which = range(state.M) if codeword is None else [codeword]
    with open(path, "w") as fh:
        fh.write(f"# csm dump: M={state.M} nr={state.nr} K={state.K} window={state.window}\n")
        fh.write("# codeword l row col re im\n")
        for j in which:
            for l in range(state.nr):
                for r in range(state.K):
                    for c in range(state.K):
                        z = state.csm[j, l, r, c]
                        fh.write(f"{j} {l} {r} {c} {float(z.real)!r} {float(z.imag)!r}\n")
