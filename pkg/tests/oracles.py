"""Brute-force reference computations, written independently of the package internals.

Everything here uses dense matrices and explicit sums; speed is irrelevant.
"""

import numpy as np


def dft_unitary(n):
    """``F[r, c] = exp(j 2 pi r c / n) / sqrt(n)``."""
    r = np.arange(n)
    return np.exp(2j * np.pi * np.outer(r, r) / n) / np.sqrt(n)


def sinc2_acf(t, m):
    return np.sinc(np.asarray(m, dtype=float) / t) ** 2 / t


def triangle(t, lam):
    lam = np.asarray(lam, dtype=float)
    d = np.abs(lam - np.round(lam))
    return np.maximum(0.0, 1.0 - t * d)


def fejer_aliased_acf(t, nr):
    """``sum_p C(m + p nr)`` for the ``sinc^2(m/t)/t`` sequence when ``t`` divides ``nr``.

    Poisson summation of the sampled triangle; closed form via
    ``sum_p 1/(m + p nr)^2 = pi^2 / (nr^2 sin^2(pi m / nr))``.
    """
    m = np.arange(nr)
    out = np.empty(nr)
    out[0] = 1.0 / t
    mm = m[1:]
    out[1:] = t * np.sin(np.pi * mm / t) ** 2 / (nr**2 * np.sin(np.pi * mm / nr) ** 2)
    return out


def kron_grid_covariance(ut, gamma, eta):
    """``(F (x) Ut) diag(eta vec(gamma)) (F^H (x) Ut^H)`` with column-wise ``vec``."""
    nt, nr = gamma.shape
    f = dft_unitary(nr)
    t = np.kron(f, ut)
    g = np.diag(eta * gamma.T.ravel())
    return t @ g @ t.conj().T


def toeplitz_fading_covariance(ut, acf_cols, eta):
    """Dense ``eta (I (x) Ut) T (I (x) Ut^H)``, ``T[(p,a),(q,b)] = delta_ab acf[|p-q|, a]``."""
    nr, nt = acf_cols.shape
    big = np.zeros((nt * nr, nt * nr), dtype=complex)
    for p in range(nr):
        for q in range(nr):
            big[p * nt:(p + 1) * nt, q * nt:(q + 1) * nt] = np.diag(acf_cols[abs(p - q)])
    u = np.kron(np.eye(nr), ut)
    return eta * u @ big @ u.conj().T


def dense_signal_covariance(x, ch, noise_power):
    """``(I_nr (x) X) C_h (I_nr (x) X^H) + noise_power I``."""
    K, nt = x.shape
    nr = ch.shape[0] // nt
    xb = np.kron(np.eye(nr), x)
    return xb @ ch @ xb.conj().T + noise_power * np.eye(K * nr)


def dense_metric(y, sigma):
    """``(y^H inv(Sigma) y + ln det Sigma) / n`` with an explicit inverse and eigenvalues."""
    n = sigma.shape[0]
    inv = np.linalg.inv(sigma)
    logdet = np.sum(np.log(np.linalg.eigvalsh(sigma)))
    return (np.real(np.conj(y) @ inv @ y) + logdet) / n


def dense_kld(si, sj):
    n = si.shape[0]
    inv = np.linalg.inv(sj)
    ld_i = np.sum(np.log(np.linalg.eigvalsh(si)))
    ld_j = np.sum(np.log(np.linalg.eigvalsh(sj)))
    return (np.real(np.trace(inv @ si)) - n + ld_j - ld_i) / n


def direct_rsm(blocks, l):
    """``sum_{n=-(nr-1)}^{nr-1} Sigma(n) e^{-j 2 pi n l / nr}`` with ``Sigma(-n) = Sigma(n)^H``."""
    nr = blocks.shape[0]
    out = np.zeros(blocks.shape[1:], dtype=complex)
    for n in range(-(nr - 1), nr):
        b = blocks[n] if n >= 0 else blocks[-n].conj().T
        out += b * np.exp(-2j * np.pi * n * l / nr)
    return out


def fft_bins_direct(y, K, nr):
    """``d[l, k] = (1/(K nr)) sum_n y[n] exp(-j 2 pi n (l + k nr) / (K nr))`` by explicit summation."""
    n_tot = K * nr
    n = np.arange(n_tot)
    d = np.empty((nr, K), dtype=complex)
    for l in range(nr):
        for k in range(K):
            d[l, k] = np.sum(y * np.exp(-2j * np.pi * n * (l + k * nr) / n_tot)) / n_tot
    return d


def fft_group_covariance(sigma, K, nr, l):
    """Exact ``(K nr) E[d(l) d(l)^H]`` for ``y ~ CN(0, Sigma)``."""
    n_tot = K * nr
    n = np.arange(n_tot)
    bins = l + nr * np.arange(K)
    w = np.exp(-2j * np.pi * np.outer(bins, n) / n_tot) / n_tot
    return n_tot * w @ sigma @ w.conj().T


def is_block_toeplitz(a, b, tol=0.0):
    n = a.shape[0] // b
    for p in range(n - 1):
        for q in range(n - 1):
            blk = a[p * b:(p + 1) * b, q * b:(q + 1) * b]
            nxt = a[(p + 1) * b:(p + 2) * b, (q + 1) * b:(q + 2) * b]
            if np.max(np.abs(blk - nxt)) > tol:
                return False
    return True
