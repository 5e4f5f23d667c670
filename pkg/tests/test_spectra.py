import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mubspectra.spectra import (
    CompleteSpectra,
    NotHermitianError,
    NotPSDError,
    UnrealizableSpectraError,
    check_spectral_uncertainty,
    circulant_from_spectrum,
    correlation_matrix,
    flat_replace,
    random_psd,
    reconstruct,
    sensitivity_experiment,
    shift_spectra,
    spectra_of,
)

PRIMES = [3, 5, 7, 11, 13]


def _unit(d, i=0):
    e = np.zeros((d, d))
    e[i, i] = 1
    return e


def test_white_matrix_has_flat_spectra(families):
    d = 5
    s = spectra_of(np.eye(d) / d, families(d))
    assert np.allclose(s.vectors, 1 / d)


def test_pure_coordinate_state(families):
    d = 7
    s = spectra_of(_unit(d), families(d))
    assert np.allclose(s[1], np.eye(d)[0])
    assert np.allclose(s.vectors[1:], 1 / d)


def test_spectra_match_naive_diagonal(rng, families):
    d = 5
    fam = families(d)
    a = random_psd(d, rng)
    s = spectra_of(a, fam)
    for k in range(1, d + 2):
        naive = np.diag(fam[k].conj().T @ a @ fam[k]).real
        assert np.max(np.abs(s[k] - naive)) < 1e-12


def test_rejects_bad_input(families):
    fam = families(3)
    with pytest.raises(NotHermitianError):
        spectra_of(np.triu(np.ones((3, 3))), fam)
    with pytest.raises(NotPSDError):
        spectra_of(np.diag([1.0, -0.5, 0.5]), fam)
    with pytest.raises(ValueError):
        spectra_of(np.eye(5) / 5, fam)


def test_spectra_shape_checked():
    with pytest.raises(ValueError):
        CompleteSpectra(3, 1.0, np.ones((3, 3)))


def test_flat_spectra_reconstruct_to_white(families):
    d = 5
    r = reconstruct(CompleteSpectra(d, 1.0, np.full((d + 1, d), 1 / d)), families(d))
    assert np.allclose(r.entries, np.eye(d) / d)


@pytest.mark.parametrize("d", PRIMES)
def test_round_trip(rng, families, d):
    fam = families(d)
    for _ in range(10):
        a = random_psd(d, rng, rank=int(rng.integers(1, d + 1)))
        s = spectra_of(a, fam)
        r = reconstruct(s, fam)
        assert np.linalg.norm(r.entries - a) / np.linalg.norm(a) < 1e-9
        s2 = spectra_of(r, fam)
        assert np.max(np.abs(s2.vectors - s.vectors)) < 1e-9
        assert np.allclose(s.vectors.sum(axis=1), np.trace(a).real, rtol=1e-8)


def test_unit_vector_spectra_are_unrealizable(families):
    d = 5
    v = np.zeros((d + 1, d))
    v[:d] = np.eye(d)
    v[d, 0] = 1
    s = CompleteSpectra(d, 1.0, v)
    assert s.is_valid  # nonnegative with common sum, yet not a correlation matrix
    assert not reconstruct(s, families(d)).realizable
    with pytest.raises(UnrealizableSpectraError):
        reconstruct(s, families(d), strict=True)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 3), st.floats(0.1, 3))
def test_linearity(seed, alpha, beta):
    from mubspectra.core import build_mub_family

    d = 5
    fam = build_mub_family(d)
    g = np.random.default_rng(seed)
    a, b = random_psd(d, g), random_psd(d, g)
    lhs = spectra_of(alpha * a + beta * b, fam).vectors
    rhs = alpha * spectra_of(a, fam).vectors + beta * spectra_of(b, fam).vectors
    assert np.max(np.abs(lhs - rhs)) < 1e-10


@pytest.mark.parametrize("d", [5, 7])
def test_all_flat_iff_white(rng, families, d):
    fam = families(d)
    t = 2.5
    assert np.allclose(spectra_of(t * np.eye(d) / d, fam).vectors, t / d, atol=1e-9)
    s = CompleteSpectra(d, t, np.full((d + 1, d), t / d))
    assert np.allclose(reconstruct(s, fam).entries, t * np.eye(d) / d, atol=1e-9)
    a = random_psd(d, rng, trace=t)
    assert not np.allclose(spectra_of(a, fam).vectors, t / d, atol=1e-9)


@pytest.mark.parametrize("d", [5, 7])
def test_circulant_iff_only_dft_spectrum_structured(rng, families, d):
    fam = families(d)
    lams = rng.uniform(0, 1, d)
    c = circulant_from_spectrum(lams)
    assert np.allclose(c, np.roll(np.roll(c, 1, 0), 1, 1))
    s = spectra_of(c, fam)
    flat = s.trace / d
    for k in range(1, d + 2):
        if k == 2:
            assert np.allclose(s[2], lams)
        else:
            assert np.allclose(s[k], flat, atol=1e-9)
    # the converse: flat everywhere except S_2 rebuilds a circulant matrix
    v = np.full((d + 1, d), 1.0 / d)
    v[1] = rng.dirichlet(np.ones(d))
    r = reconstruct(CompleteSpectra(d, 1.0, v), fam).entries
    assert np.allclose(r, np.roll(np.roll(r, 1, 0), 1, 1), atol=1e-9)
    # a random non-circulant matrix has structure outside S_2
    s = spectra_of(random_psd(d, rng), fam)
    others = np.delete(s.vectors, 1, axis=0)
    assert not np.allclose(others, s.trace / d, atol=1e-6)


def test_shifts(rng, families):
    d = 5
    fam = families(d)
    s = spectra_of(random_psd(d, rng), fam)
    base = reconstruct(s, fam).entries
    assert np.allclose(reconstruct(shift_spectra(s, np.zeros(d + 1)), fam).entries, base, atol=1e-15)
    u = np.zeros(d + 1)
    u[:2] = 0.3, -0.3
    assert np.max(np.abs(reconstruct(shift_spectra(s, u), fam).entries - base)) < 1e-10
    c = 0.17
    moved = reconstruct(shift_spectra(s, np.full(d + 1, c)), fam).entries
    assert np.max(np.abs(moved - base - (d + 1) * c * np.eye(d))) < 1e-10
    with pytest.raises(ValueError):
        shift_spectra(s, np.zeros(d))


def test_flat_replace_examples(families):
    d = 5
    fam = families(d)
    flat = CompleteSpectra(d, 1.0, np.full((d + 1, d), 1 / d))
    assert np.array_equal(flat_replace(flat, 3).vectors, flat.vectors)
    s = spectra_of(_unit(d), fam)
    r = reconstruct(flat_replace(s, 1), fam)
    assert np.allclose(r.entries, np.eye(d) / d)
    with pytest.raises(ValueError):
        flat_replace(s, 0)


def test_flat_replace_can_leave_the_psd_cone(families):
    # a pure state spread evenly over two coordinates: flattening S_1 removes
    # the diagonal but keeps the off-diagonal coherence
    d = 7
    psi = np.zeros(d)
    psi[:2] = 1 / math.sqrt(2)
    s = spectra_of(np.outer(psi, psi), families(d))
    r = reconstruct(flat_replace(s, 1), families(d))
    assert math.isclose(r.min_eigenvalue, -0.5 + 1 / d, abs_tol=1e-12)
    assert not r.realizable


def test_uncertainty_examples(families):
    d = 7
    flat = CompleteSpectra(d, 1.0, np.full((d + 1, d), 1 / d))
    rep = check_spectral_uncertainty(flat)
    assert math.isclose(rep.min_slack, math.sqrt(2) * math.sqrt(1 - 1 / d), rel_tol=1e-12)
    pure = check_spectral_uncertainty(spectra_of(_unit(d), families(d)))
    assert pure.boundary and pure.holds and abs(pure.min_slack) < 1e-12


def test_uncertainty_random(rng, families):
    d = 7
    fam = families(d)
    for _ in range(500):
        assert check_spectral_uncertainty(spectra_of(random_psd(d, rng), fam)).min_slack > 0


def test_correlation_matrix_wraps(rng):
    a = random_psd(3, rng, trace=2.0)
    cm = correlation_matrix(a)
    assert cm.d == 3 and math.isclose(cm.trace, 2.0) and cm.realizable
    assert np.array_equal(np.asarray(cm), cm.entries)


@pytest.mark.parametrize("domain", ["matrix", "spectra"])
def test_sensitivity_zero_epsilon(rng, families, domain):
    rep = sensitivity_experiment(random_psd(5, rng), families(5), "deterministic", 0.0, 5, rng, domain=domain)
    assert rep.max_error < 1e-12


@pytest.mark.parametrize("domain", ["matrix", "spectra"])
@pytest.mark.parametrize("mode", ["deterministic", "random"])
def test_sensitivity_bounds(rng, families, mode, domain):
    d = 5
    a = random_psd(d, rng)
    a = 0.5 * a + 0.5 * np.eye(d) / d
    rep = sensitivity_experiment(a, families(d), mode, 1e-4, 2000 if mode == "random" else 200, rng, domain=domain)
    assert rep.holds, rep
    if mode == "deterministic":
        assert rep.max_error < 5e-4
    else:
        assert rep.max_variance < 1e-4
