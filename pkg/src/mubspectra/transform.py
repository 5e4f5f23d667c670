"""Forward and inverse MUB transforms of deterministic vectors.

Every base ``k >= 2`` factors as ``M_k = H_k @ M_2`` where ``H_k`` is a
diagonal of unit-modulus phases, so a spectrum costs one prime-length DFT
plus ``d`` multiplications.  The DFT itself is a chirp-z (Bluestein)
reduction to a power-of-two circular convolution.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np

from .core import MubFamily, chirp_exponents, mub_basis, roots_of_unity


@dataclass(frozen=True)
class PhaseDiagonal:
    d: int
    k: int
    diagonal: np.ndarray

    def matrix(self) -> np.ndarray:
        return np.diag(self.diagonal)


def phase_diagonal(d: int, k: int) -> PhaseDiagonal:
    if k == 1:
        raise ValueError("base 1 is the identity and has no phase diagonal")
    if not 2 <= k <= d + 1:
        raise ValueError(f"base index must be in 2..{d + 1}, got {k}")
    h = roots_of_unity(d)[((k - 2) * chirp_exponents(d)) % d]
    h.setflags(write=False)
    return PhaseDiagonal(d, k, h)


@lru_cache(maxsize=32)
def _bluestein_plan(d: int) -> tuple[np.ndarray, np.ndarray, int]:
    n = np.arange(d, dtype=np.int64)
    # exp(-i*pi*n^2/d) is periodic in n^2 with period 2d
    chirp = np.exp(-1j * np.pi * ((n * n) % (2 * d)) / d)
    size = 1 << int(np.ceil(np.log2(2 * d - 1)))
    kernel = np.zeros(size, dtype=complex)
    kernel[:d] = chirp.conj()
    kernel[size - d + 1:] = chirp[1:].conj()[::-1]
    kernel_f = np.fft.fft(kernel)
    chirp.setflags(write=False)
    kernel_f.setflags(write=False)
    return chirp, kernel_f, size


def _bluestein(x: np.ndarray) -> np.ndarray:
    """Unnormalised forward DFT ``sum_j x_j exp(-2 pi i r j / d)`` along the last axis."""
    d = x.shape[-1]
    chirp, kernel_f, size = _bluestein_plan(d)
    a = np.fft.fft(x * chirp, n=size, axis=-1)
    conv = np.fft.ifft(a * kernel_f, axis=-1)[..., :d]
    return conv * chirp


def dft_prime(x, direction: Literal["forward", "inverse"] = "forward") -> np.ndarray:
    """Unitary DFT: ``M_2^H @ x`` (forward) or ``M_2 @ x`` (inverse).

    Works on the last axis, so a stack of vectors is transformed at once.
    """
    x = np.asarray(x, dtype=complex)
    d = x.shape[-1]
    if direction == "forward":
        return _bluestein(x) / np.sqrt(d)
    if direction == "inverse":
        return _bluestein(x.conj()).conj() / np.sqrt(d)
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


def _naive_basis(d: int, k: int, family: MubFamily | None) -> np.ndarray:
    if family is not None:
        return family[k]
    return mub_basis(d, k)


def mub_analyze(x, k: int, family: MubFamily | None = None, method: str = "fast") -> np.ndarray:
    """The k-spectrum ``M_k^H @ x`` of a deterministic vector (or stack of vectors)."""
    x = np.asarray(x, dtype=complex)
    d = x.shape[-1]
    if not 1 <= k <= d + 1:
        raise ValueError(f"base index must be in 1..{d + 1}, got {k}")
    if k == 1:
        return x.copy()
    if method == "naive":
        return x @ _naive_basis(d, k, family).conj()
    return dft_prime(phase_diagonal(d, k).diagonal.conj() * x, "forward")


def mub_synthesize(s, k: int, family: MubFamily | None = None, method: str = "fast") -> np.ndarray:
    """Inverse of :func:`mub_analyze`: ``x = M_k @ s``."""
    s = np.asarray(s, dtype=complex)
    d = s.shape[-1]
    if not 1 <= k <= d + 1:
        raise ValueError(f"base index must be in 1..{d + 1}, got {k}")
    if k == 1:
        return s.copy()
    if method == "naive":
        return s @ _naive_basis(d, k, family).T
    return phase_diagonal(d, k).diagonal * dft_prime(s, "inverse")


def all_spectra(x, method: str = "fast", family: MubFamily | None = None) -> np.ndarray:
    """Every spectrum of one vector, shape ``(d+1, d)``; row ``k-1`` is ``S_k``.

    The fast path batches all ``d`` chirped copies through a single DFT call;
    the naive path multiplies by each ``M_k^H`` in turn.
    """
    x = np.asarray(x, dtype=complex)
    d = x.shape[-1]
    out = np.empty((d + 1, d), dtype=complex)
    out[0] = x
    if method == "naive":
        for k in range(2, d + 2):
            out[k - 1] = _naive_basis(d, k, family).conj().T @ x
        return out
    c = np.arange(d, dtype=np.int64)[:, None] * chirp_exponents(d)[None, :]
    phases = roots_of_unity(d)[(-c) % d]
    out[1:] = dft_prime(phases * x, "forward")
    return out


@dataclass(frozen=True)
class ShiftReport:
    shift: int
    best_offsets: tuple[int, ...]
    residuals: tuple[float, ...]


def ring_shift_report(x, shift: int = 1) -> ShiftReport:
    """For each base, find the cyclic offset that best aligns ``|S_k(roll(x))|`` with ``|S_k(x)|``.

    Exploratory only: small residuals mean a ring shift of the signal moves the
    magnitude spectrum cyclically in that base.
    """
    x = np.asarray(x, dtype=complex)
    a = np.abs(all_spectra(x))
    b = np.abs(all_spectra(np.roll(x, shift)))
    offsets, residuals = [], []
    for row_a, row_b in zip(a, b):
        errs = [np.max(np.abs(np.roll(row_a, o) - row_b)) for o in range(len(row_a))]
        o = int(np.argmin(errs))
        offsets.append(o)
        residuals.append(float(errs[o]))
    return ShiftReport(shift, tuple(offsets), tuple(residuals))
