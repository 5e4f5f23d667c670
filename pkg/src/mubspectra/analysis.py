"""Spectrum entropy for signal detection, and MUB-based dimensionality reduction."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import MubFamily
from .spectra import CompleteSpectra


@dataclass(frozen=True)
class EntropyReport:
    entropies: np.ndarray
    complete: float
    flat_reference: float


def spectrum_entropy(spectra: CompleteSpectra, k: int) -> float:
    """``sum_i -lg(S_k[i] / tr)`` in bits; any zero entry gives ``inf``."""
    p = spectra[k] / spectra.trace
    if np.any(p <= 0):
        return math.inf
    return float(-np.sum(np.log2(p)))


def entropy_report(spectra: CompleteSpectra) -> EntropyReport:
    e = np.array([spectrum_entropy(spectra, k) for k in range(1, spectra.d + 2)])
    d = spectra.d
    return EntropyReport(e, float(e.sum()), d * math.log2(d))


@dataclass(frozen=True)
class Detection:
    flags: tuple[bool, ...]
    deviations: np.ndarray
    threshold: float

    @property
    def detected(self) -> bool:
        return any(self.flags)

    @property
    def flagged(self) -> list[int]:
        return [k + 1 for k, f in enumerate(self.flags) if f]


def detect_signal(spectra: CompleteSpectra, threshold: float) -> Detection:
    """Flag every spectrum whose entropy is more than ``threshold`` bits from ``d*lg(d)``.

    The deviation is two-sided, although a valid spectrum can only sit at or
    above the flat reference.
    """
    rep = entropy_report(spectra)
    dev = np.abs(rep.entropies - rep.flat_reference)
    return Detection(tuple(bool(x) for x in dev > threshold), dev, threshold)


def uniform_sphere_sample(d: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Uniform unit vector(s) in C^d: normalized standard complex Gaussians."""
    shape = (d,) if size is None else (size, d)
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return z / np.linalg.norm(z, axis=-1, keepdims=True)


def haar_unitary_batch(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` independent Haar unitaries, shape ``(n, d, d)``.

    QR of a complex Ginibre matrix with the phases of ``diag(R)`` moved into
    ``Q`` so the law does not depend on the QR sign convention.
    """
    z = (rng.standard_normal((n, d, d)) + 1j * rng.standard_normal((n, d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (diag / np.abs(diag))[:, None, :]


def haar_unitary_sample(d: int, rng: np.random.Generator) -> np.ndarray:
    return haar_unitary_batch(d, 1, rng)[0]


@dataclass(frozen=True)
class CompressionResult:
    base: int
    spectrum: np.ndarray
    merit: float
    side_bits: int
    merits: np.ndarray


def best_base_compress(x, candidate_bases: Sequence[np.ndarray] | MubFamily, labels: Sequence[int] | None = None) -> CompressionResult:
    """Pick the candidate whose spectrum ``U^H x`` has the largest entry.

    ``labels`` name the candidates (default 1, 2, ...); the chosen label is
    returned as ``base``.
    """
    x = np.asarray(x, dtype=complex)
    bases = list(candidate_bases.bases) if isinstance(candidate_bases, MubFamily) else list(candidate_bases)
    if not bases:
        raise ValueError("no candidate bases")
    labels = list(labels) if labels is not None else list(range(1, len(bases) + 1))
    spectra = [u.conj().T @ x for u in bases]
    merits = np.array([np.max(np.abs(s)) for s in spectra])
    best = int(np.argmax(merits))
    side_bits = math.ceil(math.log2(len(bases))) if len(bases) > 1 else 0
    return CompressionResult(labels[best], spectra[best], float(merits[best]), side_bits, merits)


def cap_threshold(d: int) -> float:
    """``sqrt(d / (2d + 1 - 2 sqrt(d)))``: caps of this radius around unbiased vectors are disjoint."""
    return math.sqrt(d / (2 * d + 1 - 2 * math.sqrt(d)))


def _half_width(p: float, n: int, z: float = 1.96) -> float:
    return z * math.sqrt(max(p * (1 - p), 0.0) / n)


@dataclass(frozen=True)
class MubVsHaarReport:
    d: int
    k_bases: int
    trials: int
    threshold: float
    p_mub: float
    p_haar: float
    ci_mub: float
    ci_haar: float
    mean_mub: float
    mean_haar: float
    se_mub: float
    se_haar: float

    @property
    def combined_ci(self) -> float:
        return math.hypot(self.ci_mub, self.ci_haar)

    @property
    def threshold_comparison_holds(self) -> bool:
        return self.p_mub >= self.p_haar - 2 * self.combined_ci

    @property
    def expectation_gap(self) -> float:
        return self.mean_mub - self.mean_haar


def mub_vs_random_experiment(
    d: int,
    k_bases: int,
    trials: int,
    rng: np.random.Generator,
    family: MubFamily | None = None,
    chunk: int = 10_000,
) -> MubVsHaarReport:
    """Compare the best-spectrum peak of ``k_bases`` MUB bases against ``k_bases`` fresh Haar bases.

    For each trial a uniform unit vector is drawn; the MUB side uses bases
    ``M_1..M_k`` of ``family``, the random side draws new Haar unitaries
    every trial.  Exceedance probabilities at :func:`cap_threshold` come with
    95% normal-approximation half widths; expectations with standard errors.
    """
    from .core import build_mub_family

    if family is None:
        family = build_mub_family(d)
    if not 1 <= k_bases <= d + 1:
        raise ValueError(f"k_bases must be in 1..{d + 1}")
    c = cap_threshold(d)
    stack_c = family.stacked[:k_bases].conj()
    mub_max, haar_max = [], []
    for start in range(0, trials, chunk):
        n = min(chunk, trials - start)
        x = uniform_sphere_sample(d, rng, n)
        m = np.abs(np.matmul(x, stack_c)).max(axis=(0, 2))
        u = haar_unitary_batch(d, n * k_bases, rng).reshape(n, k_bases, d, d)
        h = np.abs(np.einsum("nkab,nb->nka", u, x)).max(axis=(1, 2))
        mub_max.append(m)
        haar_max.append(h)
    mub_max = np.concatenate(mub_max)
    haar_max = np.concatenate(haar_max)
    p_m = float(np.mean(mub_max >= c))
    p_h = float(np.mean(haar_max >= c))
    return MubVsHaarReport(
        d, k_bases, trials, c, p_m, p_h,
        _half_width(p_m, trials), _half_width(p_h, trials),
        float(mub_max.mean()), float(haar_max.mean()),
        float(mub_max.std(ddof=1) / math.sqrt(trials)), float(haar_max.std(ddof=1) / math.sqrt(trials)),
    )
