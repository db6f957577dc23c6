"""Spatially-stationary Weichselberger fading: profiles, covariance and sampling.

A channel ``H`` (``nt x nr``) is modelled as ``H = Ut @ Hr`` where the rows of
``Hr`` are independent wide-sense stationary sequences along the receive
array. Stream ``k`` is described either by its autocorrelation ``C_H(m)[k, k]``
(``acf`` profiles, e.g. the triangular preset) or by its spectrum samples
``gamma[k, l]`` on the ``nr``-point Fourier grid (``grid`` profiles).

The two descriptions assemble differently at finite ``nr``:

* grid profiles use the finite Fourier basis exactly, ``Hr = Hg @ F`` with
  independent ``Hg[k, l] ~ CN(0, eta * gamma[k, l])``; the covariance of
  ``vec(H)`` is ``(F (x) Ut) Gamma (F^H (x) Ut^H)``, which is block-circulant.
* acf profiles place the autocorrelation sequence on a Toeplitz covariance,
  ``eta * (I (x) Ut) T (I (x) Ut^H)`` with ``T[p, q] = C_H(p - q)``, and are
  sampled through a square root of each per-stream Toeplitz matrix.

Both are ``nt``-block-Toeplitz and share the normalization
``trace(C_h) = nt * nr``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from ._linalg import block_toeplitz, complex_normal, is_unitary
from .errors import DegenerateProfileError, InvalidArgumentError

AcfFn = Callable[[int, np.ndarray], np.ndarray]
SpectrumFn = Callable[[int, np.ndarray], np.ndarray]


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def random_unitary(n: int, seed=None) -> np.ndarray:
    """Draw an ``n x n`` Haar-distributed unitary matrix.

    QR decomposition of a complex Gaussian matrix, with the phases of the
    diagonal of ``R`` moved into ``Q`` so the distribution is exactly Haar.

    Parameters
    ----------
    n : int
        Matrix size, ``n >= 1``.
    seed : int or numpy.random.Generator, optional
        Integer seeds give deterministic output.
    """
    if int(n) != n or n < 1:
        raise InvalidArgumentError(f"unitary size must be a positive integer, got {n!r}")
    rng = _as_rng(seed)
    z = complex_normal(rng, (n, n))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


@dataclass(frozen=True, eq=False)
class ChannelProfile:
    """Second-order description of the fading streams plus the transmit basis.

    Exactly one of ``acf_fn`` or ``gamma`` is set.

    Attributes
    ----------
    nt : int
        Number of transmit antennas (streams).
    ut : ndarray, shape (nt, nt)
        Unitary transmit basis.
    acf_fn : callable, optional
        ``acf_fn(k, lags) -> C_H(lags)[k, k]``, real and even in ``lags``.
    spectrum_fn : callable, optional
        ``spectrum_fn(k, lam) -> S_H^(k)(lam)``, the 1-periodic DTFT of the
        autocorrelation. Required alongside ``acf_fn``.
    gamma : ndarray, shape (nt, nr), optional
        Nonnegative spectrum samples on the ``l / nr`` grid.
    name : str
        Preset name, used for reporting.
    """

    nt: int
    ut: np.ndarray
    acf_fn: Optional[AcfFn] = None
    spectrum_fn: Optional[SpectrumFn] = None
    gamma: Optional[np.ndarray] = None
    name: str = "custom"
    nr_hint: Optional[int] = field(default=None, repr=False)

    def __post_init__(self):
        if int(self.nt) != self.nt or self.nt < 1:
            raise InvalidArgumentError(f"nt must be a positive integer, got {self.nt!r}")
        ut = np.asarray(self.ut, dtype=complex)
        if ut.shape != (self.nt, self.nt) or not is_unitary(ut):
            raise InvalidArgumentError("ut must be an nt x nt unitary matrix")
        object.__setattr__(self, "ut", ut)
        if (self.acf_fn is None) == (self.gamma is None):
            raise InvalidArgumentError("exactly one of acf_fn or gamma must be given")
        if self.acf_fn is not None and self.spectrum_fn is None:
            raise InvalidArgumentError("acf profiles need a matching spectrum_fn")
        if self.gamma is not None:
            gamma = np.asarray(self.gamma, dtype=float)
            if gamma.ndim != 2 or gamma.shape[0] != self.nt or gamma.shape[1] < 1:
                raise InvalidArgumentError("gamma must have shape (nt, nr)")
            if np.any(gamma < 0) or not np.all(np.isfinite(gamma)):
                raise InvalidArgumentError("gamma entries must be finite and nonnegative")
            object.__setattr__(self, "gamma", gamma)
            object.__setattr__(self, "nr_hint", gamma.shape[1])

    @property
    def is_grid(self) -> bool:
        return self.gamma is not None

    def _check_nr(self, nr: int) -> int:
        if int(nr) != nr or nr < 1:
            raise InvalidArgumentError(f"nr must be a positive integer, got {nr!r}")
        if self.is_grid and nr != self.gamma.shape[1]:
            raise InvalidArgumentError(
                f"grid profile defined for nr={self.gamma.shape[1]}, got nr={nr}"
            )
        return int(nr)

    def acf(self, nr: int) -> np.ndarray:
        """Diagonal of ``C_H(m)`` for lags ``m = 0..nr-1``, shape ``(nr, nt)``.

        Grid profiles return the circular autocorrelation
        ``(1/nr) sum_l gamma[k, l] exp(j 2 pi m l / nr)``, complex in general.
        """
        nr = self._check_nr(nr)
        if self.is_grid:
            return np.fft.ifft(self.gamma, axis=1).T
        lags = np.arange(nr)
        return np.stack([np.asarray(self.acf_fn(k, lags), dtype=float) for k in range(self.nt)], axis=1)

    def spectrum(self, lam) -> np.ndarray:
        """Evaluate ``S_H^(k)(lam)`` for every stream, shape ``(nt,) + lam.shape``.

        Closed-form for acf profiles; nearest grid node for grid profiles.
        """
        lam = np.asarray(lam, dtype=float)
        if self.is_grid:
            nr = self.gamma.shape[1]
            idx = np.mod(np.rint(lam * nr).astype(int), nr)
            return self.gamma[:, idx]
        return np.stack([np.asarray(self.spectrum_fn(k, lam), dtype=float) for k in range(self.nt)])

    def gamma_grid(self, nr: int) -> np.ndarray:
        """Spectrum samples ``S_H^(k)(l / nr)``, shape ``(nt, nr)``."""
        nr = self._check_nr(nr)
        if self.is_grid:
            return self.gamma
        return self.spectrum(np.arange(nr) / nr)

    def to_grid(self, nr: int) -> "ChannelProfile":
        """Grid profile sampling this profile's spectrum on ``nr`` nodes."""
        return ChannelProfile(nt=self.nt, ut=self.ut, gamma=self.gamma_grid(nr), name=f"{self.name}-grid")

    def with_ut(self, ut: np.ndarray) -> "ChannelProfile":
        return replace(self, ut=ut)

    def normalization(self, nr: int) -> float:
        """Scale ``eta`` such that the assembled fading covariance has trace ``nt * nr``."""
        power = float(np.real(np.sum(self.acf(nr)[0])))
        if not power > 0:
            raise DegenerateProfileError("profile has zero total power; eta is undefined")
        return self.nt / power


def _triangle(width_inv: float, lam: np.ndarray) -> np.ndarray:
    frac = lam - np.floor(lam + 0.5)
    return np.maximum(0.0, 1.0 - width_inv * np.abs(frac))


def triangular_profile(nt: int, nr: Optional[int] = None, ut: Optional[np.ndarray] = None, seed=None) -> ChannelProfile:
    """Triangular-spectrum fading preset.

    Stream ``k`` has autocorrelation ``sinc(m / (k + 2))**2 / (k + 2)`` (normalized
    sinc), whose spectrum is a periodic triangle of peak 1 supported on
    ``|lam| < 1 / (k + 2)``.

    Parameters
    ----------
    nt : int
    nr : int, optional
        Receive array size to validate against (positive and even).
    ut : ndarray, optional
        Transmit basis. Defaults to a Haar draw from ``seed`` if one is given,
        otherwise the identity.
    seed : int, optional
    """
    if int(nt) != nt or nt < 1:
        raise InvalidArgumentError(f"nt must be a positive integer, got {nt!r}")
    if nr is not None and (int(nr) != nr or nr < 2 or nr % 2):
        raise InvalidArgumentError(f"nr must be a positive even integer, got {nr!r}")
    if ut is None:
        ut = random_unitary(nt, seed) if seed is not None else np.eye(nt)

    def acf(k, lags):
        t = k + 2.0
        return np.sinc(np.asarray(lags, dtype=float) / t) ** 2 / t

    def spectrum(k, lam):
        return _triangle(k + 2.0, lam)

    return ChannelProfile(nt=int(nt), ut=ut, acf_fn=acf, spectrum_fn=spectrum, name="triangular", nr_hint=nr)


def flat_profile(nt: int, ut: Optional[np.ndarray] = None) -> ChannelProfile:
    """Spatially white fading: ``C_H(m) = delta_m I`` and unit flat spectra."""
    if int(nt) != nt or nt < 1:
        raise InvalidArgumentError(f"nt must be a positive integer, got {nt!r}")

    def acf(k, lags):
        return (np.asarray(lags) == 0).astype(float)

    def spectrum(k, lam):
        return np.ones_like(np.asarray(lam, dtype=float))

    return ChannelProfile(nt=int(nt), ut=np.eye(nt) if ut is None else ut, acf_fn=acf, spectrum_fn=spectrum, name="flat")


def acf_table_profile(values: np.ndarray, ut: Optional[np.ndarray] = None, name: str = "table") -> ChannelProfile:
    """Profile from a finite table of even, real autocorrelation values.

    ``values[m, k]`` is ``C_H(m)[k, k]`` for ``m = 0..L-1``; lags beyond the
    table are zero and the spectrum is the corresponding finite cosine sum.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    nlag, nt = values.shape

    def acf(k, lags):
        lags = np.abs(np.asarray(lags))
        out = np.zeros(lags.shape)
        inside = lags < nlag
        out[inside] = values[lags[inside], k]
        return out

    def spectrum(k, lam):
        lam = np.asarray(lam, dtype=float)
        m = np.arange(1, nlag)
        return values[0, k] + 2.0 * np.tensordot(np.cos(2 * np.pi * np.multiply.outer(lam, m)), values[1:, k], axes=([-1], [0]))

    return ChannelProfile(nt=nt, ut=np.eye(nt) if ut is None else ut, acf_fn=acf, spectrum_fn=spectrum, name=name)


@dataclass(frozen=True, eq=False)
class FadingCovariance:
    """Block-Toeplitz covariance of ``vec(H)``.

    ``blocks[m]`` is ``E[H[:, p + m] H[:, p]^H] = eta * Ut C_H(m) Ut^H`` for
    ``m = 0..nr-1``.
    """

    blocks: np.ndarray
    eta: float
    nr: int

    @property
    def nt(self) -> int:
        return self.blocks.shape[1]

    def assemble(self) -> np.ndarray:
        """Dense ``nt*nr x nt*nr`` covariance matrix."""
        return block_toeplitz(self.blocks)


def assemble_fading_covariance(profile: ChannelProfile, nr: int, eta: Optional[float] = None) -> FadingCovariance:
    """Build the normalized fading covariance blocks for an ``nr``-antenna array.

    ``eta`` defaults to :meth:`ChannelProfile.normalization`, which raises
    :class:`DegenerateProfileError` for an all-zero profile.
    """
    acf = profile.acf(nr)
    if eta is None:
        eta = profile.normalization(nr)
    ut = profile.ut
    blocks = eta * np.einsum("ij,mj,kj->mik", ut, acf, ut.conj())
    return FadingCovariance(blocks=blocks, eta=float(eta), nr=int(nr))


class ChannelSampler:
    """Draws channel realizations ``H`` for a fixed profile, array size and scale.

    Per-stream square roots are computed once, so repeated draws cost
    ``O(nt * nr**2)`` (acf profiles) or one FFT per stream (grid profiles).
    """

    def __init__(self, profile: ChannelProfile, nr: int, eta: Optional[float] = None):
        self.profile = profile
        self.nr = profile._check_nr(nr)
        self.eta = profile.normalization(nr) if eta is None else float(eta)
        if profile.is_grid:
            self._std = np.sqrt(self.eta * profile.gamma)
            self._roots = None
        else:
            acf = profile.acf(nr)
            roots = []
            for k in range(profile.nt):
                t = self.eta * scipy.linalg.toeplitz(acf[:, k])
                w, v = np.linalg.eigh(t)
                roots.append(v * np.sqrt(np.clip(w, 0.0, None)))
            self._roots = np.stack(roots)

    def sample(self, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
        """Return ``H`` with shape ``(nt, nr)``, or ``(size, nt, nr)`` if ``size`` is given."""
        nt, nr = self.profile.nt, self.nr
        shape = (nt, nr) if size is None else (size, nt, nr)
        w = complex_normal(rng, shape)
        if self._roots is None:
            rows = np.sqrt(nr) * np.fft.ifft(self._std * w, axis=-1)
        else:
            rows = np.stack([w[..., k, :] @ self._roots[k].T for k in range(nt)], axis=-2)
        return self.profile.ut @ rows


def sample_channel(profile: ChannelProfile, nr: int, eta: Optional[float], rng: np.random.Generator) -> np.ndarray:
    """Draw one ``nt x nr`` realization of the fading channel."""
    return ChannelSampler(profile, nr, eta).sample(rng)


# Plain-text profile table:
#
#   # ncmimo-profile v1
#   kind acf            (or: kind spectrum)
#   nt 2
#   stream index value
#   0 0 0.5
#   ...
#
# ``kind acf``: index is the lag m >= 0 and value is C_H(m)[k, k] (missing
# lags are zero). ``kind spectrum``: index is the frequency node l of an
# nr-point grid and value is gamma[k, l]; every (stream, node) must be present.

PRESETS = ("triangular", "flat")


def profile_to_text(profile: ChannelProfile, nr: Optional[int] = None) -> str:
    """Serialize a profile as a table; acf profiles need ``nr`` lags to write."""
    lines = ["# ncmimo-profile v1"]
    if profile.is_grid:
        lines += ["kind spectrum", f"nt {profile.nt}", "stream index value"]
        table = profile.gamma
    else:
        nr = nr if nr is not None else profile.nr_hint
        if nr is None:
            raise InvalidArgumentError("nr is required to tabulate an acf profile")
        lines += ["kind acf", f"nt {profile.nt}", "stream index value"]
        table = np.real(profile.acf(nr)).T
    for k in range(profile.nt):
        for idx, value in enumerate(table[k]):
            lines.append(f"{k} {idx} {float(value)!r}")
    return "\n".join(lines) + "\n"


def profile_from_text(text: str, ut: Optional[np.ndarray] = None) -> ChannelProfile:
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    try:
        meta = {}
        body = []
        for row in rows:
            if row[0] in ("kind", "nt"):
                meta[row[0]] = row[1]
            elif row == ["stream", "index", "value"]:
                continue
            else:
                body.append((int(row[0]), int(row[1]), float(row[2])))
        kind, nt = meta["kind"], int(meta["nt"])
    except (KeyError, IndexError, ValueError) as exc:
        raise InvalidArgumentError(f"malformed profile table: {exc}") from exc
    if not body:
        raise InvalidArgumentError("profile table has no entries")
    size = max(i for _, i, _ in body) + 1
    table = np.zeros((nt, size))
    seen = np.zeros((nt, size), dtype=bool)
    for k, i, v in body:
        if not 0 <= k < nt or i < 0:
            raise InvalidArgumentError(f"entry ({k}, {i}) out of range")
        table[k, i] = v
        seen[k, i] = True
    if kind == "spectrum":
        if not seen.all():
            raise InvalidArgumentError("spectrum table must list every (stream, node) pair")
        return ChannelProfile(nt=nt, ut=np.eye(nt) if ut is None else ut, gamma=table, name="file")
    if kind == "acf":
        return acf_table_profile(table.T, ut=ut, name="file")
    raise InvalidArgumentError(f"unknown profile kind {kind!r}")


def load_profile(spec: str, nt: int, ut: Optional[np.ndarray] = None) -> ChannelProfile:
    """Resolve a preset name (``triangular``, ``flat``) or a profile table path."""
    if spec == "triangular":
        return triangular_profile(nt, ut=ut)
    if spec == "flat":
        return flat_profile(nt, ut=ut)
    with open(spec) as fh:
        profile = profile_from_text(fh.read(), ut=ut)
    if profile.nt != nt:
        raise InvalidArgumentError(f"profile file has nt={profile.nt}, expected {nt}")
    return profile
