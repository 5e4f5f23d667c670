"""Random vectors built from independent sources in the MUB domains.

Covers synthesis of a random vector with prescribed complete spectra,
stationarity classes, stabilizer operators, and Monte Carlo estimation of
the D-matrices that describe a random linear operator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .core import MubFamily
from .spectra import CompleteSpectra

Sampler = Callable[[np.ndarray, np.random.Generator], np.ndarray]

_CHUNK = 1 << 16


@dataclass(frozen=True)
class RandomSource:
    """A reproducible stream: the same ``(seed, stream)`` always yields the same draws."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(self.stream,)))

    def child(self, *key: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(self.stream, *key)))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RandomSource):
        return rng.generator()
    return np.random.default_rng(rng)


def _draw(rng: np.random.Generator, shape, dist: str) -> np.ndarray:
    """Zero-mean unit-variance real draws."""
    if dist == "rademacher":
        return rng.integers(0, 2, size=shape).astype(np.int8) * 2.0 - 1.0
    if dist == "gaussian":
        return rng.standard_normal(shape)
    raise ValueError(f"unknown distribution {dist!r}")


class SpectraConditionError(ValueError):
    """A spectrum entry is below ``trace/(d+1)``, so no independent-source synthesis exists."""

    def __init__(self, base: int, entry: int, value: float, floor: float):
        self.base, self.entry, self.value, self.floor = base, entry, value, floor
        super().__init__(
            f"entry ({base},{entry}) of the spectra is {value:.6g} < {floor:.6g}; "
            "apply whiten_lift first"
        )


def source_variances(spectra: CompleteSpectra, tol: float = 1e-12) -> np.ndarray:
    """Variances ``(S_i)_j - 1/(d+1)`` of the independent sources (unit trace)."""
    if spectra.trace <= 0:
        raise ValueError("spectra with non-positive trace cannot be synthesized")
    s = spectra.normalized().vectors
    floor = 1.0 / (spectra.d + 1)
    var = s - floor
    i, j = np.unravel_index(np.argmin(var), var.shape)
    if var[i, j] < -tol:
        raise SpectraConditionError(int(i) + 1, int(j) + 1, float(s[i, j]), floor)
    return np.clip(var, 0.0, None)


def synthesize_from_spectra(
    spectra: CompleteSpectra,
    family: MubFamily,
    count: int,
    dist: str = "rademacher",
    rng=0,
) -> np.ndarray:
    """Draw ``count`` samples of ``X = sum_i M_i Y_i`` with independent ``(Y_i)_j``.

    The sample correlation converges to the reconstruction of ``spectra``.
    Returns a ``(count, d)`` complex array.
    """
    rng = as_generator(rng)
    std = np.sqrt(source_variances(spectra)) * np.sqrt(spectra.trace)
    stack = family.stacked
    out = np.empty((count, spectra.d), dtype=complex)
    for start in range(0, count, _CHUNK):
        n = min(_CHUNK, count - start)
        y = _draw(rng, (n, spectra.d + 1, spectra.d), dist) * std
        out[start:start + n] = np.einsum("ijr,nir->nj", stack, y)
    return out


def whiten_lift(spectra: CompleteSpectra) -> CompleteSpectra:
    """Spectra of ``(X + N) / sqrt(d+1)`` with white ``N``, ``E[N N^H] = tr * I``.

    Every entry of the result is at least ``tr/(d+1)``.
    """
    t = spectra.trace
    return CompleteSpectra(spectra.d, t, (spectra.vectors + t) / (spectra.d + 1))


@dataclass(frozen=True)
class DomainVectorSpec:
    k: int
    variances: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.variances, dtype=float)
        if np.any(v < 0):
            raise ValueError("variances must be nonnegative")
        object.__setattr__(self, "variances", v)


def domain_samples(spec: DomainVectorSpec, family: MubFamily, count: int, dist="rademacher", rng=0) -> np.ndarray:
    """Samples of the k-domain vector ``M_k Y`` with independent ``Y_j``."""
    rng = as_generator(rng)
    y = _draw(rng, (count, family.d), dist) * np.sqrt(spec.variances)
    return y @ family[spec.k].T


@dataclass(frozen=True)
class StationarityClass:
    indices: frozenset[int]

    def __contains__(self, k: int) -> bool:
        return k in self.indices


def stationarity_class(spectra: CompleteSpectra, tol: float | None = None) -> StationarityClass:
    """All base indices whose spectrum is flat, ``|S_k - tr/d| <= tol`` entrywise."""
    if tol is None:
        tol = 1e-9 * max(abs(spectra.trace), 1.0)
    flat = spectra.trace / spectra.d
    dev = np.max(np.abs(spectra.vectors - flat), axis=1)
    return StationarityClass(frozenset(int(k) + 1 for k in np.flatnonzero(dev <= tol)))


def _check_indices(indices: Iterable[int], d: int) -> frozenset[int]:
    idx = frozenset(int(i) for i in indices)
    if not idx:
        raise ValueError("at least one index must be stabilized")
    if not idx <= set(range(1, d + 2)):
        raise ValueError(f"indices must lie in 1..{d + 1}")
    if len(idx) == d + 1:
        raise ValueError("stabilizing every index leaves an empty sum")
    return idx


def stabilize(samples: np.ndarray, indices: Iterable[int], family: MubFamily, rng=0, dist="rademacher") -> np.ndarray:
    """Apply ``X' = sum_{j not in indices} M_j Ys_j M_j^H X`` sample by sample.

    ``Ys_j`` are fresh diagonal matrices of independent zero-mean unit-variance
    draws.  The stabilized spectra become flat at level ``tr*(d-k+1)/d`` and
    the rest gain ``tr*(d-k)/d``, with ``k = len(indices)``.
    """
    rng = as_generator(rng)
    samples = np.atleast_2d(np.asarray(samples, dtype=complex))
    idx = _check_indices(indices, family.d)
    out = np.zeros_like(samples)
    for j in range(1, family.d + 2):
        if j in idx:
            continue
        m = family[j]
        y = _draw(rng, samples.shape, dist)
        out += ((samples @ m.conj()) * y) @ m.T
    return out


def stabilizer_spectra(spectra: CompleteSpectra, indices: Iterable[int]) -> CompleteSpectra:
    """Closed-form spectra of the stabilizer output."""
    d, t = spectra.d, spectra.trace
    idx = _check_indices(indices, d)
    k = len(idx)
    v = spectra.vectors + t * (d - k) / d
    for i in idx:
        v[i - 1] = t * (d - k + 1) / d
    return CompleteSpectra(d, t * (d + 1 - k), v)


@dataclass(frozen=True)
class EmpiricalSpectra:
    mean: np.ndarray
    stderr: np.ndarray
    count: int


def empirical_spectra(samples: np.ndarray, family: MubFamily) -> EmpiricalSpectra:
    """Sample mean and standard error of ``|M_k^H x|^2`` for every base and entry."""
    samples = np.atleast_2d(samples)
    n = samples.shape[0]
    total = np.zeros((family.d + 1, family.d))
    total2 = np.zeros_like(total)
    stack_c = family.stacked.conj()
    for start in range(0, n, _CHUNK):
        x = samples[start:start + _CHUNK]
        p = np.abs(np.matmul(x, stack_c)) ** 2
        total += p.sum(axis=1)
        total2 += (p**2).sum(axis=1)
    mean = total / n
    var = np.clip(total2 / n - mean**2, 0.0, None) * n / max(n - 1, 1)
    return EmpiricalSpectra(mean, np.sqrt(var / n), n)


def empirical_correlation(samples: np.ndarray) -> np.ndarray:
    samples = np.atleast_2d(samples)
    return samples.T @ samples.conj() / samples.shape[0]


@dataclass(frozen=True, eq=False)
class OperatorCharacterization:
    """``D[k-1]`` is the ``d x d(d+1)`` matrix ``D_k``; column ``(i-1)*d + j-1``
    holds the k-spectrum of the operator's output for the probe ``M_i e_j``."""

    d: int
    D: np.ndarray
    stderr: np.ndarray
    samples_per_probe: int = 0

    def block(self, k: int, i: int) -> np.ndarray:
        d = self.d
        return self.D[k - 1][:, (i - 1) * d:i * d]


def characterize_operator(
    op: Sampler,
    family: MubFamily,
    samples_per_probe: int,
    rng: RandomSource | int = 0,
    dist: str = "rademacher",
) -> OperatorCharacterization:
    """Estimate the D-matrices of a black-box random linear operator.

    Each probe ``(i, j)`` feeds ``z * M_i e_j`` (scalar ``z`` zero-mean, unit
    variance) through ``op`` and averages the output spectra.  Probe ``p``
    draws from its own substream, so results do not depend on probe order.
    """
    src = rng if isinstance(rng, RandomSource) else RandomSource(int(rng))
    d = family.d
    D = np.zeros((d + 1, d, d * (d + 1)))
    se = np.zeros_like(D)
    for i in range(1, d + 2):
        for j in range(d):
            col = (i - 1) * d + j
            g = src.child(col)
            z = _draw(g, (samples_per_probe, 1), dist)
            x = z * family[i][:, j][None, :]
            y = op(x, g)
            emp = empirical_spectra(y, family)
            D[:, :, col] = emp.mean
            se[:, :, col] = emp.stderr
    return OperatorCharacterization(d, D, se, samples_per_probe)


@dataclass(frozen=True)
class SpectraPrediction:
    vectors: np.ndarray
    stderr: np.ndarray


def predict_output_spectra(char: OperatorCharacterization, spectra: CompleteSpectra) -> SpectraPrediction:
    """``S_pk = D_k [S_1 - t/(d+1), ..., S_{d+1} - t/(d+1)]`` for every k."""
    if spectra.d != char.d:
        raise ValueError("dimension mismatch")
    shifted = (spectra.vectors - spectra.trace / (spectra.d + 1)).reshape(-1)
    pred = char.D @ shifted
    err = np.sqrt((char.stderr**2) @ (shifted**2))
    return SpectraPrediction(pred, err)


@dataclass(frozen=True)
class OperatorClass:
    stationarizing: tuple[int, ...]
    # target k -> (source i, permutation of entries, scale)
    switches: dict[int, tuple[int, tuple[int, ...], float]] = field(default_factory=dict)
    filters: tuple[int, ...] = ()
    tol: float = 0.0

    @property
    def tags(self) -> list[str]:
        out = [f"{k}-stationarizing" for k in self.stationarizing]
        for k, (i, perm, _) in sorted(self.switches.items()):
            kind = "" if perm == tuple(range(len(perm))) else " (permuted)"
            out.append(f"{i}->{k} switch{kind}")
        out += [f"filter on {j}" for j in self.filters]
        return out


def _block_form(b: np.ndarray, tol: float):
    """``"constant"``, ``(perm, scale)`` for ``scale*P + c*1`` with ``P`` a permutation, or ``None``."""
    if np.max(np.abs(b - b.mean())) <= tol:
        return "constant"
    c = np.median(b)
    dev = b - c
    big = np.abs(dev) > tol
    if not np.all(big.sum(axis=0) == 1):
        return None
    rows = np.argmax(big, axis=0)
    if len(set(rows.tolist())) != b.shape[0]:
        return None
    vals = dev[rows, np.arange(b.shape[1])]
    if np.max(np.abs(vals - vals.mean())) > tol:
        return None
    return tuple(int(r) for r in rows), float(vals.mean())


def classify_operator(char: OperatorCharacterization, tol: float | None = None) -> OperatorClass:
    """Match each ``D_k`` against the block forms that mark special operators.

    * all blocks constant: the output k-spectrum is flat (k-stationarizing);
    * one block ``a*P + c*1`` (``P`` a permutation, identity in the plain
      case), all others constant: the source spectrum is moved to spectrum k
      up to a global constant;
    * ``filter on j``: every ``D_k`` with ``k != j`` moves spectrum k to
      itself, but ``D_j`` does not.

    ``tol`` defaults to four times the largest estimation standard error.
    """
    d = char.d
    if tol is None:
        tol = max(4.0 * float(char.stderr.max()), 1e-9)
    stationarizing, switches = [], {}
    for k in range(1, d + 2):
        forms = [_block_form(char.block(k, i), tol) for i in range(1, d + 2)]
        if all(f == "constant" for f in forms):
            stationarizing.append(k)
            continue
        special = [(i + 1, f) for i, f in enumerate(forms) if f != "constant"]
        if len(special) == 1 and special[0][1] is not None:
            i, (perm, scale) = special[0]
            switches[k] = (i, perm, scale)
    filters = []
    ident = tuple(range(d))
    for j in range(1, d + 2):
        others_keep = all(switches.get(k, (None,))[0] == k and switches[k][1] == ident
                          for k in range(1, d + 2) if k != j)
        own_keeps = switches.get(j, (None,))[0] == j and switches[j][1] == ident
        if others_keep and not own_keeps:
            filters.append(j)
    return OperatorClass(tuple(stationarizing), switches, tuple(filters), tol)


# Built-in operators; each factory returns a sampler ``(x, rng) -> y``.

def identity_operator() -> Sampler:
    return lambda x, rng: np.array(x, dtype=complex)


def unitary_operator(u: np.ndarray) -> Sampler:
    u = np.asarray(u, dtype=complex)
    return lambda x, rng: np.asarray(x) @ u.T


def stabilizer_operator(indices: Iterable[int], family: MubFamily) -> Sampler:
    idx = _check_indices(indices, family.d)
    return lambda x, rng: stabilize(x, idx, family, rng)


def white_noise_operator(power: float = 1.0) -> Sampler:
    """Ignores the input and emits fresh circular Gaussian noise."""
    def op(x, rng):
        x = np.asarray(x)
        return (rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)) * np.sqrt(power / 2)
    return op


def scramble_operator() -> Sampler:
    """Applies a fresh Haar unitary to every sample: every output spectrum is flat."""
    from .analysis import haar_unitary_batch

    def op(x, rng):
        x = np.atleast_2d(np.asarray(x, dtype=complex))
        u = haar_unitary_batch(x.shape[1], x.shape[0], rng)
        return np.einsum("nab,nb->na", u, x)
    return op


def builtin_operator(name: str, family: MubFamily) -> Sampler:
    """Look up an operator by CLI name.

    Names: ``identity``, ``dft``, ``white-noise``, ``stabilize-all`` and
    ``stabilize-<i>,<j>,...``.
    """
    if name == "identity":
        return identity_operator()
    if name == "dft":
        return unitary_operator(family[2])
    if name == "white-noise":
        return white_noise_operator()
    if name == "stabilize-all":
        return scramble_operator()
    if name.startswith("stabilize-"):
        idx = [int(t) for t in name[len("stabilize-"):].split(",")]
        return stabilizer_operator(idx, family)
    raise ValueError(f"unknown operator {name!r}")
