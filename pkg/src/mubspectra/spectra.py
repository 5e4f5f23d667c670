"""Correlation matrices and their complete MUB spectra.

The k-spectrum of a correlation matrix ``R`` is ``diag(M_k^H R M_k)``.  The
``d+1`` spectra determine ``R`` through

    R = sum_k M_k diag(S_k) M_k^H - tr(R) * I
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from .core import MubFamily

log = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-9
REALIZABLE_TOL = 1e-8
IMAG_TOL = 1e-10


class NotHermitianError(ValueError):
    pass


class NotPSDError(ValueError):
    pass


class UnrealizableSpectraError(ValueError):
    """Spectra whose reconstruction has a clearly negative eigenvalue."""


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    entries: np.ndarray
    trace: float
    min_eigenvalue: float

    @property
    def d(self) -> int:
        return self.entries.shape[0]

    @property
    def realizable(self) -> bool:
        """Whether the matrix is PSD up to ``REALIZABLE_TOL * trace``."""
        return self.min_eigenvalue >= -REALIZABLE_TOL * max(abs(self.trace), 1e-300)

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def correlation_matrix(a, require_psd: bool = True) -> CorrelationMatrix:
    """Validate and wrap a Hermitian PSD matrix.

    Raises :class:`NotHermitianError` or (with ``require_psd``) :class:`NotPSDError`.
    """
    if isinstance(a, CorrelationMatrix):
        if require_psd and not a.min_eigenvalue >= -PSD_TOL * a.trace:
            raise NotPSDError(f"min eigenvalue {a.min_eigenvalue:.3e} below tolerance")
        return a
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    asym = float(np.max(np.abs(a - a.conj().T)))
    if asym > HERMITIAN_TOL * scale:
        raise NotHermitianError(f"matrix is not Hermitian (max |A - A^H| = {asym:.3e})")
    a = (a + a.conj().T) / 2
    trace = float(np.trace(a).real)
    min_eig = float(np.linalg.eigvalsh(a)[0])
    if require_psd and min_eig < -PSD_TOL * max(trace, 0.0):
        raise NotPSDError(f"matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})")
    a.setflags(write=False)
    return CorrelationMatrix(a, trace, min_eig)


@dataclass(frozen=True, eq=False)
class CompleteSpectra:
    """``vectors[k-1]`` holds the k-spectrum ``S_k``.

    Shifted or perturbed spectra are also represented by this type; in that
    case ``trace`` keeps the value subtracted by :func:`reconstruct` and the
    invariants checked by :meth:`problems` may not hold.
    """

    d: int
    trace: float
    vectors: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=float)
        if v.shape != (self.d + 1, self.d):
            raise ValueError(f"spectra must have shape {(self.d + 1, self.d)}, got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    def __getitem__(self, k: int) -> np.ndarray:
        return self.vectors[k - 1]

    def problems(self) -> list[str]:
        out = []
        scale = max(abs(self.trace), 1e-300)
        lo = float(self.vectors.min())
        if lo < -PSD_TOL * scale:
            out.append(f"negative entry {lo:.3e}")
        sums = self.vectors.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - self.trace) > 1e-8 * scale)
        if bad.size:
            out.append(f"spectra {[int(i) + 1 for i in bad]} do not sum to the trace")
        return out

    @property
    def is_valid(self) -> bool:
        return not self.problems()

    def normalized(self) -> "CompleteSpectra":
        if self.trace <= 0:
            raise ValueError("cannot normalize spectra with non-positive trace")
        return CompleteSpectra(self.d, 1.0, self.vectors / self.trace)


def _check_family(d: int, family: MubFamily):
    if family.d != d:
        raise ValueError(f"dimension mismatch: data has d={d}, family has d={family.d}")
    if len(family) != d + 1:
        raise ValueError("a complete family with d+1 bases is required")


def raw_spectra(a: np.ndarray, family: MubFamily) -> np.ndarray:
    """``diag(M_k^H A M_k)`` for every k, complex, no validation."""
    stack = family.stacked
    am = np.matmul(a, stack)
    return np.einsum("kjr,kjr->kr", stack.conj(), am)


def spectra_of(rx, family: MubFamily) -> CompleteSpectra:
    rx = correlation_matrix(rx)
    _check_family(rx.d, family)
    s = raw_spectra(rx.entries, family)
    residue = float(np.max(np.abs(s.imag)))
    if residue > IMAG_TOL * max(1.0, abs(rx.trace)):
        raise NotHermitianError(f"spectra have imaginary residue {residue:.3e}")
    return CompleteSpectra(rx.d, rx.trace, s.real)


def mub_sum(vectors: np.ndarray, family: MubFamily) -> np.ndarray:
    """``sum_k M_k diag(v_k) M_k^H``."""
    stack = family.stacked
    return np.einsum("kjr,kr,klr->jl", stack, np.asarray(vectors, dtype=float), stack.conj())


def reconstruct(spectra: CompleteSpectra, family: MubFamily, strict: bool = False) -> CorrelationMatrix:
    """Rebuild the correlation matrix from complete spectra.

    Not every set of nonnegative vectors with common sum is realizable; the
    result carries its minimum eigenvalue and ``realizable`` flag.  With
    ``strict=True`` an unrealizable set raises instead.
    """
    _check_family(spectra.d, family)
    r = mub_sum(spectra.vectors, family) - spectra.trace * np.eye(spectra.d)
    r = (r + r.conj().T) / 2
    r.setflags(write=False)
    out = CorrelationMatrix(r, float(np.trace(r).real), float(np.linalg.eigvalsh(r)[0]))
    if not out.realizable:
        msg = f"spectra are not realizable: reconstruction has min eigenvalue {out.min_eigenvalue:.3e}"
        if strict:
            raise UnrealizableSpectraError(msg)
        log.debug(msg)
    return out


def shift_spectra(spectra: CompleteSpectra, shifts) -> CompleteSpectra:
    """Add ``shifts[k-1] * One`` to each spectrum.  ``trace`` is left unchanged,
    so the reconstruction moves by exactly ``sum(shifts) * I``."""
    shifts = np.asarray(shifts, dtype=float)
    if shifts.shape != (spectra.d + 1,):
        raise ValueError(f"need {spectra.d + 1} shifts, got {shifts.shape}")
    return replace(spectra, vectors=spectra.vectors + shifts[:, None])


def flat_replace(spectra: CompleteSpectra, index: int) -> CompleteSpectra:
    """Swap ``S_index`` for the flat spectrum ``(trace/d) * One``.

    Whether the result is still realizable is reported by :func:`reconstruct`;
    it is not guaranteed (a pure state spread over two entries of
    ``S_index`` is already a counterexample).
    """
    if not 1 <= index <= spectra.d + 1:
        raise ValueError(f"index must be in 1..{spectra.d + 1}, got {index}")
    v = spectra.vectors.copy()
    v[index - 1] = spectra.trace / spectra.d
    return replace(spectra, vectors=v)


@dataclass(frozen=True)
class UncertaintyReport:
    min_slack: float
    worst_pair: tuple[int, int]
    boundary: bool

    @property
    def holds(self) -> bool:
        return self.min_slack > 0 or self.boundary


def check_spectral_uncertainty(spectra: CompleteSpectra, boundary_tol: float = 1e-12) -> UncertaintyReport:
    """Slack of ``m_j < sqrt(2) * sqrt(1 - m_i) + 1/d`` over all ``i != j``.

    Spectra are normalized to unit trace first.  A pure state in one base
    attains equality (``m_i = 1``, ``m_j = 1/d``); that case is reported as
    ``boundary`` instead of a violation.
    """
    s = spectra.normalized()
    m = s.vectors.max(axis=1)
    bound = np.sqrt(2.0) * np.sqrt(np.clip(1.0 - m, 0.0, None)) + 1.0 / s.d
    slack = bound[:, None] - m[None, :]
    np.fill_diagonal(slack, np.inf)
    i, j = np.unravel_index(np.argmin(slack), slack.shape)
    worst = float(slack[i, j])
    return UncertaintyReport(worst, (int(i) + 1, int(j) + 1), abs(worst) <= boundary_tol)


def random_psd(d: int, rng: np.random.Generator, rank: int | None = None, trace: float = 1.0) -> np.ndarray:
    """Complex Wishart ``G G^H`` scaled to the requested trace."""
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    a = g @ g.conj().T
    return a * (trace / np.trace(a).real)


def circulant_from_spectrum(lams) -> np.ndarray:
    """Circulant correlation matrix ``M_2 diag(lams) M_2^H`` (DFT-diagonal)."""
    lams = np.asarray(lams, dtype=float)
    d = len(lams)
    idx = np.arange(d)
    f = np.exp(2j * np.pi * np.outer(idx, idx) / d) / np.sqrt(d)
    return (f * lams) @ f.conj().T


@dataclass(frozen=True)
class SensitivityReport:
    mode: str
    domain: str
    epsilon: float
    trials: int
    max_error: float
    bound: float
    max_variance: float
    variance_se: float
    mean_error: float
    mean_se: float
    holds: bool


def _hermitian_noise(d, rng, eps, mode):
    if mode == "deterministic":
        mag = rng.uniform(0.0, eps, (d, d))
        phase = np.exp(2j * np.pi * rng.uniform(size=(d, d)))
        e = np.triu(mag * phase, 1)
        e = e + e.conj().T
        e[np.diag_indices(d)] = rng.uniform(-eps, eps, d)
        return e
    off = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) * np.sqrt(eps / 2)
    e = np.triu(off, 1)
    e = e + e.conj().T
    e[np.diag_indices(d)] = rng.standard_normal(d) * np.sqrt(eps)
    return e


def _spectra_noise(d, rng, eps, mode):
    if mode == "deterministic":
        e = rng.uniform(-eps, eps, (d + 1, d))
        e -= e.mean(axis=1, keepdims=True)
        peak = np.max(np.abs(e))
        # keep |e| strictly below eps after centering
        return e * (0.999 * eps / peak) if peak >= eps else e
    return rng.standard_normal((d + 1, d)) * np.sqrt(eps)


def sensitivity_experiment(
    rx,
    family: MubFamily,
    mode: Literal["deterministic", "random"],
    epsilon: float,
    trials: int,
    rng: np.random.Generator,
    domain: Literal["matrix", "spectra"] = "matrix",
    variance_fraction: float = 0.5,
) -> SensitivityReport:
    """Perturb one representation and measure the error in the other.

    ``domain="matrix"`` perturbs the correlation matrix and measures spectra
    errors; ``domain="spectra"`` perturbs the spectra and measures the
    reconstruction error.  Deterministic errors have entries strictly below
    ``epsilon`` in magnitude and the bound checked is ``d * epsilon``.  Random
    errors are zero-mean with variance ``variance_fraction * epsilon``
    (strictly below ``epsilon``); the check is that the resulting errors have
    mean zero and variance below ``epsilon``, both within 3 standard errors.
    """
    rx = correlation_matrix(rx)
    d = rx.d
    base_spectra = spectra_of(rx, family)
    noise_eps = epsilon if mode == "deterministic" else epsilon * variance_fraction
    errs = []
    for _ in range(trials):
        if epsilon == 0:
            noise = np.zeros((d, d)) if domain == "matrix" else np.zeros((d + 1, d))
        elif domain == "matrix":
            noise = _hermitian_noise(d, rng, noise_eps, mode)
        else:
            noise = _spectra_noise(d, rng, noise_eps, mode)
        if domain == "matrix":
            errs.append(raw_spectra(rx.entries + noise, family) - base_spectra.vectors)
        else:
            perturbed = base_spectra.vectors + noise
            trace = float(perturbed.sum(axis=1).mean())
            rec = mub_sum(perturbed, family) - trace * np.eye(d)
            errs.append(rec - rx.entries)
    e = np.asarray(errs)
    max_error = float(np.max(np.abs(e)))
    bound = d * epsilon

    centered = e - e.mean(axis=0)
    sq = np.abs(centered) ** 2
    var = sq.mean(axis=0)
    var_se = sq.std(axis=0) / np.sqrt(max(trials, 1))
    worst = np.unravel_index(np.argmax(var), var.shape)
    pooled = e.reshape(trials, -1).mean(axis=1)
    mean_error = float(np.abs(pooled.mean()))
    mean_se = float(pooled.std() / np.sqrt(trials)) if trials > 1 else 0.0

    if mode == "deterministic":
        holds = max_error < bound or max_error == 0.0
    else:
        holds = bool(var[worst] <= epsilon + 3 * var_se[worst]) and mean_error <= 3 * mean_se + 1e-15
    return SensitivityReport(
        mode, domain, epsilon, trials, max_error, bound,
        float(var[worst]), float(var_se[worst]), mean_error, mean_se, bool(holds),
    )
