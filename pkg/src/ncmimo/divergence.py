"""Pairwise divergences between codeword hypotheses.

All values are normalized per received sample, i.e. divided by ``K*nr``:

* :func:`kld_direct` is the exact Gaussian KLD between two finite block
  covariances;
* :func:`kld_spectral` is its large-``nr`` limit, an integral over the cyclic
  frequency ``sigma in [0, 1/K)`` of the CSM log-likelihood gap;
* :func:`isd_subbands` splits that limit into Itakura-Saito terms when both
  codewords are precoded along the channel basis and share their left basis;
* :func:`kld_high_snr_equal_rank` and :func:`kld_low_snr_coefficient` are the
  small- and large-noise limits of the split form;
* :func:`kld_no_csit` is the subspace-comparison form for semi-unitary codewords.

Integrals use the midpoint rule with ``quad_points`` nodes.
"""

from __future__ import annotations

import enum
import io
import csv
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from ._linalg import hermitian_part
from .channel import ChannelProfile, FadingCovariance
from .codebook import INACTIVE_TOL, Codeword, as_matrix
from .detector_direct import BlockCovariance, build_block_covariance
from .detector_spectral import csm_analytic
from .errors import InvalidArgumentError, NumericalError

DEFAULT_QUAD_POINTS = 512
MIN_QUAD_POINTS = 64

CsmFn = Callable[[np.ndarray], np.ndarray]


class Singularity(enum.Enum):
    BOUNDED = "bounded"
    DIVERGENT = "divergent"


def _itakura_saito(x: np.ndarray) -> np.ndarray:
    """``r - 1 - ln r`` written in terms of ``x = r - 1`` to keep small values accurate."""
    return x - np.log1p(x)


def _midpoints(quad_points: int, length: float) -> tuple:
    if int(quad_points) != quad_points or quad_points < 1:
        raise InvalidArgumentError(f"quad_points must be a positive integer, got {quad_points!r}")
    nodes = (np.arange(quad_points) + 0.5) * (length / quad_points)
    return nodes, length / quad_points


def kld_direct(cov_i: BlockCovariance, cov_j: BlockCovariance) -> float:
    """Normalized KLD between ``CN(0, Sigma_i)`` and ``CN(0, Sigma_j)``.

    ``(tr(Sigma_j^{-1} Sigma_i) - K nr + ln det Sigma_j - ln det Sigma_i) / (K nr)``
    """
    if cov_i.blocks.shape != cov_j.blocks.shape:
        raise InvalidArgumentError(f"covariance shapes differ: {cov_i.blocks.shape} vs {cov_j.blocks.shape}")
    si, sj = cov_i.assemble(), cov_j.assemble()
    n = si.shape[0]
    try:
        low = scipy.linalg.cholesky(sj, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("Sigma_j is not positive definite") from exc
    # eigenvalues of L^{-1} Sigma_i L^{-H} give the trace and log-det ratio together
    half = scipy.linalg.solve_triangular(low, si, lower=True, check_finite=False)
    whitened = scipy.linalg.solve_triangular(low, half.conj().T, lower=True, check_finite=False)
    lam = np.linalg.eigvalsh(hermitian_part(whitened))
    if np.any(lam <= 0):
        raise NumericalError("Sigma_i is not positive definite")
    return float(np.sum(_itakura_saito(lam - 1.0)) / n)


def _evaluate_csm(fn: CsmFn, nodes: np.ndarray) -> np.ndarray:
    out = np.asarray(fn(nodes))
    if out.ndim == 3 and out.shape[0] == nodes.size:
        return out
    return np.stack([np.asarray(fn(s)) for s in nodes])


def analytic_csm_fn(x, profile: ChannelProfile, eta: float, noise_power: float) -> CsmFn:
    """``sigma -> csm_analytic(x, profile, eta, noise_power, sigma)``, vectorized over ``sigma``."""
    return partial(csm_analytic, as_matrix(x), profile, eta, noise_power)


def kld_spectral(csm_i: CsmFn, csm_j: CsmFn, quad_points: int = DEFAULT_QUAD_POINTS) -> float:
    """Midpoint quadrature over ``[0, 1/K)`` of ``tr(S_j^{-1} S_i - I) - ln(|S_i| / |S_j|)``.

    Parameters
    ----------
    csm_i, csm_j : callable
        Map an array of ``sigma`` values to CSMs of shape ``(len(sigma), K, K)``;
        scalar-only callables are evaluated node by node.
    quad_points : int
        At least 64.
    """
    if quad_points < MIN_QUAD_POINTS:
        raise InvalidArgumentError(f"quad_points must be >= {MIN_QUAD_POINTS}, got {quad_points}")
    probe = np.asarray(csm_i(np.zeros(1)))
    K = probe.shape[-1]
    nodes, weight = _midpoints(quad_points, 1.0 / K)
    si = hermitian_part(_evaluate_csm(csm_i, nodes))
    sj = hermitian_part(_evaluate_csm(csm_j, nodes))
    try:
        low = np.linalg.cholesky(sj)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("S_j is singular at a quadrature node") from exc
    inv_low = np.linalg.inv(low)
    whitened = inv_low @ si @ np.conj(np.swapaxes(inv_low, -1, -2))
    lam = np.linalg.eigvalsh(hermitian_part(whitened))
    if np.any(lam <= 0):
        raise NumericalError("S_i is singular at a quadrature node")
    return float(weight * np.sum(_itakura_saito(lam - 1.0)))


def _loadings(w, name: str) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1:
        raise InvalidArgumentError(f"{name} must be a vector")
    if np.any(w < 0):
        raise InvalidArgumentError(f"{name} must be nonnegative")
    return w


def _band_spectra(profile: ChannelProfile, K: int, quad_points: int, eta: float) -> tuple:
    nodes, weight = _midpoints(quad_points, 1.0 / K)
    return eta * profile.spectrum(K * nodes), weight


def isd_subbands(
    w_i,
    w_j,
    profile: ChannelProfile,
    noise_power: float,
    K: int,
    quad_points: int = DEFAULT_QUAD_POINTS,
    eta: float = 1.0,
) -> np.ndarray:
    """Itakura-Saito divergence of each KL sub-band, shape ``(nt,)``.

    Band ``k`` integrates ``r - 1 - ln r`` with
    ``r = (w_i[k] S_k(K sigma) + noise_power) / (w_j[k] S_k(K sigma) + noise_power)``
    over ``sigma in [0, 1/K)``, where ``S_k`` is ``eta`` times the stream spectrum.
    """
    w_i, w_j = _loadings(w_i, "w_i"), _loadings(w_j, "w_j")
    if w_i.shape != w_j.shape or w_i.size != profile.nt:
        raise InvalidArgumentError("w_i and w_j must both have nt entries")
    if not noise_power > 0:
        raise InvalidArgumentError(f"noise power must be positive, got {noise_power!r}")
    spec, weight = _band_spectra(profile, K, quad_points, eta)
    den = w_j[:, None] * spec + noise_power
    x = (w_i - w_j)[:, None] * spec / den
    return weight * np.sum(_itakura_saito(x), axis=1)


def _active(w: np.ndarray) -> np.ndarray:
    return w > INACTIVE_TOL


def detect_singularity(n_i: int, n_j: int) -> Singularity:
    """Whether the aligned-precoding KLD stays bounded as the noise vanishes.

    It diverges exactly when the two codewords have different active ranks.
    """
    return Singularity.BOUNDED if int(n_i) == int(n_j) else Singularity.DIVERGENT


def kld_high_snr_equal_rank(w_i, w_j, K: int) -> float:
    """Zero-noise limit ``(1/K) sum_k (w_i/w_j - 1 - ln(w_i/w_j))`` over the active bands.

    Assumes every band spectrum is positive almost everywhere. Raises
    :class:`InvalidArgumentError` when the active sets differ; use
    :func:`detect_singularity` for that case.
    """
    w_i, w_j = _loadings(w_i, "w_i"), _loadings(w_j, "w_j")
    if w_i.shape != w_j.shape:
        raise InvalidArgumentError("w_i and w_j must have the same length")
    act_i, act_j = _active(w_i), _active(w_j)
    if not np.array_equal(act_i, act_j):
        raise InvalidArgumentError("active bands differ; the limit is unbounded (see detect_singularity)")
    ratio = w_i[act_i] / w_j[act_j]
    return float(np.sum(_itakura_saito(ratio - 1.0)) / K)


def kld_low_snr_coefficient(
    w_i,
    w_j,
    profile: ChannelProfile,
    K: int,
    quad_points: int = DEFAULT_QUAD_POINTS,
    eta: float = 1.0,
) -> float:
    """Constant ``c`` in ``KLD ~ c / noise_power**2`` for large noise.

    ``c = sum_k (w_i[k] - w_j[k])**2 * (1/2) int_0^{1/K} S_k(K sigma)**2 d sigma``.
    """
    w_i, w_j = _loadings(w_i, "w_i"), _loadings(w_j, "w_j")
    if w_i.shape != w_j.shape or w_i.size != profile.nt:
        raise InvalidArgumentError("w_i and w_j must both have nt entries")
    spec, weight = _band_spectra(profile, K, quad_points, eta)
    energy = 0.5 * weight * np.sum(spec**2, axis=1)
    return float(np.sum((w_i - w_j) ** 2 * energy))


def _check_semi_unitary(u: np.ndarray, name: str) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] < u.shape[1]:
        raise InvalidArgumentError(f"{name} must be K x nt with K >= nt")
    if np.linalg.norm(u.conj().T @ u - np.eye(u.shape[1])) > 1e-8:
        raise InvalidArgumentError(f"{name} is not semi-unitary")
    return u


def kld_no_csit(
    u_i,
    u_j,
    profile: ChannelProfile,
    noise_power: float,
    quad_points: int = DEFAULT_QUAD_POINTS,
    eta: float = 1.0,
) -> float:
    """KLD between semi-unitary hypotheses written as subspace comparisons.

    ``u_i = X_i @ Ut`` is the codeword expressed in the channel basis. With
    ``Sig(lam) = eta diag(S(lam)) + noise_power I`` and ``ubar`` the orthogonal
    complements, the value is

        (1/K) int tr[Sig^{-1} A Sig A^H] + (1/K) |ubar_j^H ubar_i|_F^2 - 1
        + (1/K) int noise_power tr[u_j Sig^{-1} u_j^H P_ibar]
        + (1/K) int (1/noise_power) tr[ubar_j^H u_i Sig u_i^H ubar_j]

    with ``A = u_j^H u_i`` and integrals over ``lam in [0, 1)``. The
    ``1/noise_power`` term is a product of nonnegative factors, so it stays
    accurate for small noise; the subtraction of 1 limits the absolute accuracy
    to about 1e-15, which matters only when the divergence itself is tiny.
    """
    u_i = _check_semi_unitary(u_i, "u_i")
    u_j = _check_semi_unitary(u_j, "u_j")
    if u_i.shape != u_j.shape or u_i.shape[1] != profile.nt:
        raise InvalidArgumentError("u_i and u_j must both be K x nt with nt matching the profile")
    if not noise_power > 0:
        raise InvalidArgumentError(f"noise power must be positive, got {noise_power!r}")
    K = u_i.shape[0]
    nodes, weight = _midpoints(quad_points, 1.0)
    sig = eta * profile.spectrum(nodes) + noise_power  # (nt, Q)

    bar_i = scipy.linalg.null_space(u_i.conj().T)
    bar_j = scipy.linalg.null_space(u_j.conj().T)
    a = np.abs(u_j.conj().T @ u_i) ** 2  # |A_ab|^2
    signal = weight * np.einsum("ab,aq,bq->", a, 1.0 / sig, sig)
    noise = np.linalg.norm(bar_j.conj().T @ bar_i) ** 2
    p_bar_i = bar_i @ bar_i.conj().T
    leak_j = np.real(np.einsum("ka,kl,la->a", u_j.conj(), p_bar_i, u_j))
    cross_1 = noise_power * weight * np.sum(leak_j[:, None] / sig)
    leak_i = np.linalg.norm(bar_j.conj().T @ u_i, axis=0) ** 2
    cross_2 = weight * np.sum(leak_i[:, None] * sig) / noise_power
    return float((signal + noise + cross_1 + cross_2) / K - 1.0)


def aligned_loadings(cw_i: Codeword, cw_j: Codeword, ut: np.ndarray, tol: float = 1e-9) -> Optional[tuple]:
    """Return ``(w_i, w_j)`` if both codewords are precoded along ``ut`` and share ``Phi``."""
    if not (cw_i.has_factors and cw_j.has_factors):
        return None
    for cw in (cw_i, cw_j):
        if np.linalg.norm(cw.psi - ut) > tol:
            return None
    if np.linalg.norm(cw_i.phi - cw_j.phi) > tol:
        return None
    return cw_i.w, cw_j.w


@dataclass
class DivergenceReport:
    """Divergences for the ordered pair ``(i, j)``.

    ``high_snr_limit`` is ``None`` when ``singularity`` is divergent or the pair is
    not aligned; ``isd_per_band`` is empty when the pair is not aligned.
    """

    pair: tuple
    kld_finite: float
    kld_spectral: float
    isd_per_band: np.ndarray = field(default_factory=lambda: np.zeros(0))
    high_snr_limit: Optional[float] = None
    singularity: Optional[Singularity] = None
    low_snr_coefficient: Optional[float] = None

    CSV_HEADER = ("i", "j", "kld_finite", "kld_spectral", "isd_per_band", "high_snr_limit", "singularity", "low_snr_coefficient")

    def csv_row(self) -> list:
        def fmt(v):
            return "" if v is None else repr(float(v))

        return [
            self.pair[0],
            self.pair[1],
            fmt(self.kld_finite),
            fmt(self.kld_spectral),
            ";".join(repr(float(v)) for v in self.isd_per_band),
            fmt(self.high_snr_limit),
            "" if self.singularity is None else self.singularity.value,
            fmt(self.low_snr_coefficient),
        ]


def divergence_report(
    pair: tuple,
    cw_i: Codeword,
    cw_j: Codeword,
    profile: ChannelProfile,
    fading: FadingCovariance,
    noise_power: float,
    quad_points: int = DEFAULT_QUAD_POINTS,
) -> DivergenceReport:
    """Finite, asymptotic and (for aligned pairs) per-band divergences of one pair."""
    eta = fading.eta
    finite = kld_direct(
        build_block_covariance(cw_i, fading, noise_power),
        build_block_covariance(cw_j, fading, noise_power),
    )
    spectral = kld_spectral(
        analytic_csm_fn(cw_i, profile, eta, noise_power),
        analytic_csm_fn(cw_j, profile, eta, noise_power),
        quad_points,
    )
    report = DivergenceReport(pair=tuple(pair), kld_finite=finite, kld_spectral=spectral)
    loads = aligned_loadings(cw_i, cw_j, profile.ut)
    if loads is not None:
        w_i, w_j = loads
        K = cw_i.K
        report.isd_per_band = isd_subbands(w_i, w_j, profile, noise_power, K, quad_points, eta)
        report.singularity = detect_singularity(int(_active(w_i).sum()), int(_active(w_j).sum()))
        if report.singularity is Singularity.BOUNDED and np.array_equal(_active(w_i), _active(w_j)):
            report.high_snr_limit = kld_high_snr_equal_rank(w_i, w_j, K)
        report.low_snr_coefficient = kld_low_snr_coefficient(w_i, w_j, profile, K, quad_points, eta)
    return report


def reports_to_csv(reports: Sequence[DivergenceReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(DivergenceReport.CSV_HEADER)
    for r in reports:
        writer.writerow(r.csv_row())
    return buf.getvalue()
