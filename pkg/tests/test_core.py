import cmath
import math

import numpy as np
import pytest

from mubspectra.core import (
    DimensionError,
    build_mub_family,
    chirp_exponents,
    is_odd_prime,
    mub_basis,
    two_qubit_mub_family,
    verify_mub,
)


def _trial_division(n):
    return n > 1 and all(n % p for p in range(2, int(n**0.5) + 1))


def test_is_odd_prime_small_cases():
    assert is_odd_prime(3)
    assert not is_odd_prime(2)
    assert is_odd_prime(127)
    assert not is_odd_prime(1)
    assert not is_odd_prime(9)


def test_is_odd_prime_matches_trial_division():
    for n in range(1, 600):
        assert is_odd_prime(n) == (_trial_division(n) and n % 2 == 1), n


@pytest.mark.parametrize("d", [1, 2, 4, 9, 15, 121])
def test_rejects_non_odd_prime(d):
    with pytest.raises(DimensionError):
        build_mub_family(d)


def test_d3_dft_entries():
    w = cmath.exp(2j * math.pi / 3)
    m2 = build_mub_family(3)[2]
    for j in range(3):
        for r in range(3):
            assert abs(m2[j, r] - w ** (j * r) / math.sqrt(3)) < 1e-14


def test_entries_follow_explicit_formula():
    d = 7
    w = cmath.exp(2j * math.pi / d)
    for k in range(2, d + 2):
        m = mub_basis(d, k)
        for j in range(d):
            for r in range(d):
                e = r * j + (k - 2) * (j * j - j) // 2
                assert abs(m[j, r] - w**e / math.sqrt(d)) < 1e-12


def test_first_base_is_identity(families):
    assert np.array_equal(families(5)[1], np.eye(5))


@pytest.mark.parametrize("d", [3, 5])
def test_exhaustive_unbiasedness(families, d):
    fam = families(d)
    for a in range(1, d + 2):
        for b in range(1, d + 2):
            for i in range(d):
                for j in range(d):
                    ip = abs(np.vdot(fam[a][:, i], fam[b][:, j]))
                    expect = (1.0 if i == j else 0.0) if a == b else 1 / math.sqrt(d)
                    assert abs(ip - expect) < 1e-12


@pytest.mark.parametrize("d", [3, 5, 7, 11, 13])
def test_verify_passes(families, d):
    rep = verify_mub(families(d))
    assert rep.passed
    assert rep.unitarity_deviation < 1e-10 and rep.unbiasedness_deviation < 1e-10


@pytest.mark.parametrize("d", [3, 5, 7])
def test_entry_moduli(families, d):
    assert np.allclose(np.abs(families(d).stacked[1:]), 1 / math.sqrt(d), atol=1e-14)


def test_chirp_exponents_are_integers():
    d = 13
    j = np.arange(d)
    assert np.array_equal(chirp_exponents(d), (j * j - j) // 2)
    assert np.all((j * j - j) % 2 == 0)


def test_duplicate_base_fails(families):
    d = 7
    fam = families(d)
    bad = fam.replace(3, fam[2])
    rep = verify_mub(bad)
    assert not rep.passed
    assert abs(rep.unbiasedness_deviation - (1 - 1 / math.sqrt(d))) < 1e-10


def test_scaled_column_fails_unitarity(families):
    fam = families(5)
    m = fam[4].copy()
    m[:, 2] *= 2
    rep = verify_mub(fam.replace(4, m))
    assert not rep.passed
    assert rep.unitarity_deviation > 1


def test_large_exponents_stay_accurate():
    # exponents are reduced mod d before exponentiation
    fam = build_mub_family(127)
    assert verify_mub(fam).passed


def test_family_is_immutable(families):
    fam = families(3)
    with pytest.raises(ValueError):
        fam[2][0, 0] = 0


def test_two_qubit_family():
    fam = two_qubit_mub_family()
    assert fam.d == 4 and len(fam) == 5
    assert np.array_equal(fam[1], np.eye(4))
    assert verify_mub(fam).passed
