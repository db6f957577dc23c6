"""Space-time codeword alphabets.

Codewords are ``K x nt`` complex matrices. When built from an SVD-style
factorization ``X = Phi W^{1/2} Psi^H`` the factors are kept, so divergence
computations can read the power loadings ``w`` directly.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._linalg import is_unitary
from .channel import random_unitary
from .errors import InvalidArgumentError

#: Power loadings below this are treated as inactive.
INACTIVE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Codeword:
    """A ``K x nt`` codeword with optional factors ``Phi`` (K x K), ``w`` (nt,), ``Psi`` (nt x nt)."""

    matrix: np.ndarray
    phi: Optional[np.ndarray] = None
    w: Optional[np.ndarray] = None
    psi: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=complex))
        if self.matrix.ndim != 2:
            raise InvalidArgumentError("codeword matrix must be two-dimensional")

    @property
    def K(self) -> int:
        return self.matrix.shape[0]

    @property
    def nt(self) -> int:
        return self.matrix.shape[1]

    @property
    def has_factors(self) -> bool:
        return self.w is not None

    @property
    def active_rank(self) -> int:
        if self.w is not None:
            return int(np.count_nonzero(self.w > INACTIVE_TOL))
        s = np.linalg.svd(self.matrix, compute_uv=False)
        return int(np.count_nonzero(s > 1e-10 * max(1.0, s[0] if s.size else 0.0)))

    @property
    def energy(self) -> float:
        return float(np.linalg.norm(self.matrix) ** 2)


def as_matrix(x) -> np.ndarray:
    return x.matrix if isinstance(x, Codeword) else np.asarray(x, dtype=complex)


@dataclass(frozen=True, eq=False)
class CodewordAlphabet:
    """An ordered set of codewords sharing ``K`` and ``nt``."""

    codewords: tuple
    name: str = "custom"

    def __post_init__(self):
        cws = tuple(c if isinstance(c, Codeword) else Codeword(c) for c in self.codewords)
        if not cws:
            raise InvalidArgumentError("alphabet must hold at least one codeword")
        shape = cws[0].matrix.shape
        if any(c.matrix.shape != shape for c in cws):
            raise InvalidArgumentError("all codewords must share K and nt")
        object.__setattr__(self, "codewords", cws)

    def __len__(self) -> int:
        return len(self.codewords)

    def __getitem__(self, i) -> Codeword:
        return self.codewords[i]

    def __iter__(self):
        return iter(self.codewords)

    @property
    def K(self) -> int:
        return self.codewords[0].K

    @property
    def nt(self) -> int:
        return self.codewords[0].nt

    @property
    def M(self) -> int:
        return len(self.codewords)

    def matrices(self) -> np.ndarray:
        return np.stack([c.matrix for c in self.codewords])

    def mean_gram(self) -> np.ndarray:
        """Equiprobable average of ``X^H X``."""
        m = self.matrices()
        return np.einsum("mki,mkj->ij", m.conj(), m) / len(self)


def svd_codeword(phi: np.ndarray, w: Sequence[float], psi: np.ndarray) -> Codeword:
    """Assemble ``X = Phi[:, :nt] diag(sqrt(w)) Psi^H`` and keep the factors."""
    phi = np.asarray(phi, dtype=complex)
    psi = np.asarray(psi, dtype=complex)
    w = np.asarray(w, dtype=float)
    if w.ndim != 1:
        raise InvalidArgumentError("w must be a vector")
    nt = w.size
    if np.any(w < 0):
        raise InvalidArgumentError("power loadings w must be nonnegative")
    if psi.shape != (nt, nt) or not is_unitary(psi):
        raise InvalidArgumentError("psi must be an nt x nt unitary matrix")
    if phi.ndim != 2 or phi.shape[0] != phi.shape[1] or phi.shape[0] < nt or not is_unitary(phi):
        raise InvalidArgumentError("phi must be a K x K unitary matrix with K >= nt")
    matrix = (phi[:, :nt] * np.sqrt(w)) @ psi.conj().T
    return Codeword(matrix=matrix, phi=phi, w=w, psi=psi)


def orthogonal_pair(K: int, nt: int, seed=None) -> tuple:
    """Two codewords on orthogonal subspaces with powers 1 and 1/2 per channel use.

    ``U`` is a Haar unitary of size ``K``; the first codeword uses columns
    ``0..nt-1`` scaled by ``sqrt(K/nt)``, the second columns ``nt..2nt-1``
    scaled by ``sqrt(K/(2 nt))``.
    """
    if int(K) != K or int(nt) != nt or nt < 1 or K < 2 * nt:
        raise InvalidArgumentError(f"orthogonal pair needs K >= 2*nt >= 2, got K={K}, nt={nt}")
    u = random_unitary(K, seed)
    eye = np.eye(nt)
    first = svd_codeword(u, np.full(nt, K / nt), eye)
    second = svd_codeword(np.roll(u, -nt, axis=1), np.full(nt, K / (2 * nt)), eye)
    return first, second


def orthogonal_pair_alphabet(K: int, nt: int, seed=None) -> CodewordAlphabet:
    return CodewordAlphabet(orthogonal_pair(K, nt, seed), name="orthogonal-pair")


def projector(x) -> np.ndarray:
    """Orthogonal projector onto the column space of a codeword."""
    q, _ = np.linalg.qr(as_matrix(x))
    return q @ q.conj().T


def grassmannian_alphabet(K: int, nt: int, M: int, seed=None) -> CodewordAlphabet:
    """Semi-unitary alphabet (``X^H X = I``) with pairwise distinct subspaces.

    If ``M * nt <= K`` the codewords are disjoint column groups of a single Haar
    unitary (mutually orthogonal subspaces); otherwise each codeword takes the
    first ``nt`` columns of an independent Haar unitary.
    """
    if M < 2:
        raise InvalidArgumentError(f"a Grassmannian alphabet needs M >= 2, got {M}")
    if int(K) != K or int(nt) != nt or nt < 1 or K < nt:
        raise InvalidArgumentError(f"need K >= nt >= 1, got K={K}, nt={nt}")
    rng = np.random.default_rng(seed)
    eye = np.eye(nt)
    if M * nt <= K:
        u = random_unitary(K, rng)
        codewords = [svd_codeword(np.roll(u, -i * nt, axis=1), np.ones(nt), eye) for i in range(M)]
    else:
        codewords = [svd_codeword(random_unitary(K, rng), np.ones(nt), eye) for _ in range(M)]
    projs = [projector(c) for c in codewords]
    for i in range(M):
        for j in range(i):
            if np.linalg.norm(projs[i] - projs[j]) <= 1e-6:
                raise InvalidArgumentError("drawn subspaces coincide; choose another seed")
    return CodewordAlphabet(tuple(codewords), name="grassmannian")


# Plain-text alphabet format:
#
#   # ncmimo-alphabet v1
#   K 4 nt 1 M 2
#   codeword 0
#   <K rows of nt tokens "re,im">
#   codeword 1
#   ...
#
# Lines starting with '#' are comments; floats are written with repr() so a
# save/load round trip is exact.


def _format_complex(z: complex) -> str:
    return f"{float(z.real)!r},{float(z.imag)!r}"


def dump_alphabet(alphabet: CodewordAlphabet, stream) -> None:
    stream.write("# ncmimo-alphabet v1\n")
    stream.write(f"K {alphabet.K} nt {alphabet.nt} M {alphabet.M}\n")
    for i, cw in enumerate(alphabet):
        stream.write(f"codeword {i}\n")
        for row in cw.matrix:
            stream.write(" ".join(_format_complex(z) for z in row) + "\n")


def load_alphabet_text(text: str) -> CodewordAlphabet:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    try:
        head = lines[0].split()
        K, nt, M = int(head[1]), int(head[3]), int(head[5])
        codewords = []
        pos = 1
        for i in range(M):
            if lines[pos].split() != ["codeword", str(i)]:
                raise InvalidArgumentError(f"expected 'codeword {i}', got {lines[pos]!r}")
            rows = []
            for r in range(K):
                tokens = lines[pos + 1 + r].split()
                if len(tokens) != nt:
                    raise InvalidArgumentError(f"codeword {i} row {r}: expected {nt} entries")
                rows.append([complex(*map(float, t.split(","))) for t in tokens])
            codewords.append(Codeword(np.array(rows)))
            pos += K + 1
    except (IndexError, ValueError) as exc:
        if isinstance(exc, InvalidArgumentError):
            raise
        raise InvalidArgumentError(f"malformed alphabet file: {exc}") from exc
    return CodewordAlphabet(tuple(codewords), name="file")


def save_alphabet(alphabet: CodewordAlphabet, path: os.PathLike) -> None:
    with open(path, "w") as fh:
        dump_alphabet(alphabet, fh)


def load_alphabet(path: os.PathLike) -> CodewordAlphabet:
    with open(path) as fh:
        return load_alphabet_text(fh.read())


def alphabet_to_text(alphabet: CodewordAlphabet) -> str:
    buf = io.StringIO()
    dump_alphabet(alphabet, buf)
    return buf.getvalue()
