"""Mutually unbiased bases for odd prime dimensions.

Base ``k`` (1-based, ``2 <= k <= d+1``) has entries

    (M_k)[j, r] = W ** (r*j + (k-2) * (j*j - j) / 2) / sqrt(d),   W = exp(2*pi*i/d)

with zero-based ``j, r``.  ``M_1`` is the identity and ``M_2`` the unitary DFT.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class DimensionError(ValueError):
    """Raised when a dimension is not supported by the construction."""


def is_odd_prime(n: int) -> bool:
    if n < 3 or n % 2 == 0:
        return False
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


def check_dimension(d: int) -> int:
    d = int(d)
    if not is_odd_prime(d):
        raise DimensionError(f"dimension must be an odd prime, got {d}")
    return d


def roots_of_unity(d: int) -> np.ndarray:
    """``W**m`` for ``m = 0..d-1``; exponents are always reduced mod d before lookup."""
    return np.exp(2j * np.pi * np.arange(d) / d)


def chirp_exponents(d: int) -> np.ndarray:
    """Integer exponents ``(j*j - j) / 2`` for ``j = 0..d-1`` (always integral)."""
    j = np.arange(d, dtype=np.int64)
    return (j * j - j) // 2


def basis_exponents(d: int, k: int) -> np.ndarray:
    """Exponent matrix of ``M_k`` reduced mod d, for ``2 <= k <= d+1``."""
    j = np.arange(d, dtype=np.int64)
    return (np.outer(j, j) + ((k - 2) * chirp_exponents(d))[:, None]) % d


def mub_basis(d: int, k: int) -> np.ndarray:
    """Build the single base ``M_k`` without constructing the whole family."""
    d = check_dimension(d)
    if not 1 <= k <= d + 1:
        raise ValueError(f"base index must be in 1..{d + 1}, got {k}")
    if k == 1:
        return np.eye(d, dtype=complex)
    return roots_of_unity(d)[basis_exponents(d, k)] / np.sqrt(d)


@dataclass(frozen=True, eq=False)
class MubFamily:
    """The ordered bases ``M_1 .. M_{d+1}`` (columns are basis vectors).

    ``bases`` may be supplied directly (e.g. a deliberately broken family
    for verification tests); :func:`build_mub_family` is the usual route.
    """

    d: int
    bases: tuple[np.ndarray, ...]
    root: complex = field(default=0j)

    def __post_init__(self):
        if len(self.bases) < 1:
            raise ValueError("a family needs at least one base")
        for b in self.bases:
            if b.shape != (self.d, self.d):
                raise ValueError(f"base has shape {b.shape}, expected {(self.d, self.d)}")
        if self.root == 0j:
            object.__setattr__(self, "root", complex(np.exp(2j * np.pi / self.d)))

    def __len__(self) -> int:
        return len(self.bases)

    def __getitem__(self, k: int) -> np.ndarray:
        """1-based access: ``family[1]`` is ``M_1``."""
        if not 1 <= k <= len(self.bases):
            raise IndexError(f"base index must be in 1..{len(self.bases)}, got {k}")
        return self.bases[k - 1]

    @cached_property
    def stacked(self) -> np.ndarray:
        """All bases as one ``(d+1, d, d)`` array."""
        return np.stack(self.bases)

    def replace(self, k: int, base: np.ndarray) -> "MubFamily":
        bases = list(self.bases)
        bases[k - 1] = np.asarray(base, dtype=complex)
        return MubFamily(self.d, tuple(bases), self.root)


def build_mub_family(d: int) -> MubFamily:
    d = check_dimension(d)
    bases = tuple(mub_basis(d, k) for k in range(1, d + 2))
    for b in bases:
        b.setflags(write=False)
    return MubFamily(d, bases)


@dataclass(frozen=True)
class MubReport:
    unitarity_deviation: float
    unbiasedness_deviation: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.unitarity_deviation <= self.tol and self.unbiasedness_deviation <= self.tol


def verify_mub(family: MubFamily, tol: float = 1e-10) -> MubReport:
    """Measure how far ``family`` is from a set of mutually unbiased bases.

    Unitarity deviation is ``max |M^H M - I|`` over all bases; unbiasedness
    deviation is ``max | |<a_i, b_j>| - 1/sqrt(d) |`` over all pairs of
    distinct bases and all column pairs.
    """
    d = family.d
    stack = family.stacked
    n = len(stack)
    gram = np.matmul(stack.conj().transpose(0, 2, 1), stack)
    unitarity = float(np.max(np.abs(gram - np.eye(d))))

    # |.| is monotone in |.|^2, so only the extreme squared moduli matter
    target = 1.0 / np.sqrt(d)
    unbiased = 0.0
    for a in range(n - 1):
        rest = stack[a + 1:].transpose(1, 0, 2).reshape(d, -1)
        inner = stack[a].conj().T @ rest
        mod2 = inner.real**2 + inner.imag**2
        lo, hi = np.sqrt(mod2.min()), np.sqrt(mod2.max())
        unbiased = max(unbiased, abs(hi - target), abs(lo - target))
    return MubReport(unitarity, float(unbiased), tol)


_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# five commuting classes partitioning the 15 non-identity two-qubit Paulis
_TWO_QUBIT_CLASSES = (
    ("ZI", "IZ"),
    ("XI", "IX"),
    ("YI", "IY"),
    ("XZ", "ZY"),
    ("XY", "YZ"),
)


def two_qubit_mub_family() -> MubFamily:
    """Five mutually unbiased bases of C^4 (``d = 4`` is not covered by the prime formula).

    Each base is the common eigenbasis of one commuting class of two-qubit
    Pauli operators; the first class gives the standard base.
    """
    bases = []
    for a, b in _TWO_QUBIT_CLASSES:
        pa = np.kron(_PAULI[a[0]], _PAULI[a[1]])
        pb = np.kron(_PAULI[b[0]], _PAULI[b[1]])
        # eigenvalues of pa + 2 pb are -3, -1, 1, 3: non-degenerate
        _, vecs = np.linalg.eigh(pa + 2 * pb)
        # fix the phase so the first nonzero entry of each column is real positive
        for c in range(4):
            lead = vecs[np.flatnonzero(np.abs(vecs[:, c]) > 1e-9)[0], c]
            vecs[:, c] *= abs(lead) / lead
        bases.append(vecs)
    bases[0] = np.eye(4, dtype=complex)
    for m in bases:
        m.setflags(write=False)
    return MubFamily(4, tuple(bases), 1j)
