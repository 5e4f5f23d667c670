"""Acceptance suite: one check per numbered criterion.

Each check returns ``(passed, detail)``.  Under pytest every criterion is a
test and a PASS/FAIL line per criterion is printed in the terminal summary;
running this file directly prints the same lines.

All randomness comes from ``RandomSource(SEED, criterion number)``; the seed
was fixed before any check was run and is not tuned.
"""

from __future__ import annotations

import math
import os
import sys
import time

import numpy as np
import pytest

from mubspectra.analysis import (
    mub_vs_random_experiment,
    spectrum_entropy,
    uniform_sphere_sample,
)
from mubspectra.core import build_mub_family, mub_basis, verify_mub
from mubspectra.protocol import (
    ProtocolConfig,
    foreign_invariance_experiment,
    run_mac_simulation,
    slot_variance_sweep,
)
from mubspectra.random_model import (
    RandomSource,
    builtin_operator,
    characterize_operator,
    empirical_correlation,
    empirical_spectra,
    predict_output_spectra,
    stabilize,
    stabilizer_spectra,
    synthesize_from_spectra,
    whiten_lift,
)
from mubspectra.spectra import (
    CompleteSpectra,
    check_spectral_uncertainty,
    flat_replace,
    random_psd,
    reconstruct,
    shift_spectra,
    spectra_of,
)
from mubspectra.transform import all_spectra, mub_analyze

SEED = 20240611
RESULTS: dict[int, tuple[bool, str]] = {}


def _rng(n: int) -> np.random.Generator:
    return RandomSource(SEED, n).generator()


def c01_mub_validity():
    t0 = time.perf_counter()
    worst = 0.0
    for d in (3, 5, 7, 11, 13, 127):
        rep = verify_mub(build_mub_family(d))
        worst = max(worst, rep.unitarity_deviation, rep.unbiasedness_deviation)
    dt = time.perf_counter() - t0
    return worst <= 1e-10 and dt < 5, f"max deviation {worst:.1e}, {dt:.2f}s (limit 5s)"


def c02_fast_transform():
    rng = _rng(2)
    worst = 0.0
    for d in (3, 5, 7, 11, 13):
        fam = build_mub_family(d)
        x = rng.standard_normal((100, d)) + 1j * rng.standard_normal((100, d))
        for k in range(1, d + 2):
            worst = max(worst, float(np.max(np.abs(mub_analyze(x, k) - mub_analyze(x, k, fam, "naive")))))
    d = 1021
    x = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    t0 = time.perf_counter()
    fast = all_spectra(x)
    t_fast = time.perf_counter() - t0
    # naive: only the matrix-vector products are timed, not building each base
    t_naive, naive_err = 0.0, 0.0
    for k in range(2, d + 2):
        m = mub_basis(d, k)
        t0 = time.perf_counter()
        s = m.conj().T @ x
        t_naive += time.perf_counter() - t0
        naive_err = max(naive_err, float(np.max(np.abs(s - fast[k - 1]))))
    speedup = t_naive / t_fast
    ok = worst <= 1e-9 and naive_err <= 1e-9 and speedup >= 5
    return ok, f"max fast-vs-naive {worst:.1e} (d=1021: {naive_err:.1e}), speedup {speedup:.0f}x at d=1021"


def c03_round_trip():
    rng = _rng(3)
    worst = 0.0
    for d in (3, 5, 7, 11, 13):
        fam = build_mub_family(d)
        for _ in range(100):
            a = random_psd(d, rng)
            r = reconstruct(spectra_of(a, fam), fam).entries
            worst = max(worst, float(np.linalg.norm(r - a) / np.linalg.norm(a)))
    return worst <= 1e-9, f"max relative Frobenius error {worst:.1e}"


def c04_shift_equivalence():
    rng = _rng(4)
    zero_sum, uniform = 0.0, 0.0
    for d in (3, 5, 7, 11, 13):
        fam = build_mub_family(d)
        for _ in range(20):
            s = spectra_of(random_psd(d, rng), fam)
            base = reconstruct(s, fam).entries
            u = rng.normal(size=d + 1)
            u -= u.mean()
            zero_sum = max(zero_sum, float(np.max(np.abs(reconstruct(shift_spectra(s, u), fam).entries - base))))
            c = float(rng.normal())
            moved = reconstruct(shift_spectra(s, np.full(d + 1, c)), fam).entries
            uniform = max(uniform, float(np.max(np.abs(moved - base - (d + 1) * c * np.eye(d)))))
    return max(zero_sum, uniform) <= 1e-10, f"zero-sum residual {zero_sum:.1e}, uniform-shift residual {uniform:.1e}"


def c05_flat_replacement():
    rng = _rng(5)
    d = 7
    fam = build_mub_family(d)
    worst, failures = math.inf, 0
    for _ in range(1000):
        s = spectra_of(random_psd(d, rng), fam)
        for idx in range(1, d + 2):
            m = reconstruct(flat_replace(s, idx), fam).min_eigenvalue
            worst = min(worst, m)
            failures += m < -1e-9
    return worst >= -1e-9, f"min eigenvalue {worst:.3e}; {failures} of {1000 * (d + 1)} replacements below -1e-9"


def c06_uncertainty():
    t0 = time.perf_counter()
    rng = _rng(6)
    d = 7
    fam = build_mub_family(d)
    slack = min(check_spectral_uncertainty(spectra_of(random_psd(d, rng), fam)).min_slack for _ in range(10_000))
    thm10_margin, thm11_margin = math.inf, math.inf
    for d in (3, 5, 7):
        x = uniform_sphere_sample(d, rng, 10_000)
        peaks = np.abs(np.stack([mub_analyze(x, k) for k in range(1, d + 2)], axis=1)).max(axis=2)
        thm11_margin = min(thm11_margin, float(np.min(peaks.max(axis=1) - 1 / math.sqrt(d))))
        for i in range(d + 1):
            bound = peaks[:, i] / math.sqrt(d) + np.sqrt(np.clip(1 - peaks[:, i] ** 2, 0, None))
            others = np.delete(peaks, i, axis=1)
            thm10_margin = min(thm10_margin, float(np.min(bound[:, None] + 1e-9 - others)))
    dt = time.perf_counter() - t0
    ok = slack > 0 and thm10_margin > 0 and thm11_margin > 1e-12 and dt < 60
    return ok, (f"min slack {slack:.3e}; peak-bound margin {thm10_margin:.3e}; "
                f"large-entry margin {thm11_margin:.3e}; {dt:.1f}s (limit 60s)")


def c07_synthesis_convergence():
    rng = _rng(7)
    d = 3
    fam = build_mub_family(d)
    s = whiten_lift(spectra_of(random_psd(d, rng), fam))
    target = reconstruct(s, fam).entries
    n = 10**6
    err_full = float(np.max(np.abs(empirical_correlation(synthesize_from_spectra(s, fam, n, rng=rng)) - target)))
    sizes = [10**4, 4 * 10**4, 16 * 10**4, 64 * 10**4]
    rms = []
    for m in sizes:
        errs = [np.abs(empirical_correlation(synthesize_from_spectra(s, fam, m, rng=rng)) - target) for _ in range(8)]
        rms.append(float(np.sqrt(np.mean(np.square(errs)))))
    slope = float(np.polyfit(np.log(sizes), np.log(rms), 1)[0])
    ok = err_full <= 10 / math.sqrt(n) and abs(slope + 0.5) <= 0.15
    return ok, (f"max error at 1e6 samples {err_full:.2e} (limit {10 / math.sqrt(n):.0e}); "
                f"fitted exponent {slope:.3f} (target -0.5 +- 0.15)")


def c08_stabilizer_spectra():
    rng = _rng(8)
    worst, checks = 0.0, 0
    for d in (3, 5):
        fam = build_mub_family(d)
        s = whiten_lift(spectra_of(random_psd(d, rng), fam))
        x = synthesize_from_spectra(s, fam, 10**5, rng=rng)
        for idx in [[i] for i in range(1, d + 2)] + [[1, 2]]:
            emp = empirical_spectra(stabilize(x, idx, fam, rng=rng), fam)
            z = np.abs(emp.mean - stabilizer_spectra(s, idx).vectors) / emp.stderr
            worst = max(worst, float(z.max()))
            checks += z.size
    return worst <= 3, f"max deviation {worst:.2f} standard errors over {checks} entries"


def c09_operator_prediction():
    rng = _rng(9)
    d = 3
    fam = build_mub_family(d)
    s = whiten_lift(spectra_of(random_psd(d, rng), fam))
    x = synthesize_from_spectra(s, fam, 10**5, rng=rng)
    worst = 0.0
    for name in ("identity", "stabilize-2"):
        op = builtin_operator(name, fam)
        pred = predict_output_spectra(characterize_operator(op, fam, 10**4, rng=RandomSource(SEED, 90)), s)
        direct = empirical_spectra(op(x, rng), fam)
        band = np.sqrt(pred.stderr**2 + direct.stderr**2)
        worst = max(worst, float(np.max(np.abs(pred.vectors - direct.mean) / band)))
    return worst <= 3, f"max deviation {worst:.2f} combined standard errors"


def c10_worked_example():
    t0 = time.perf_counter()
    m = run_mac_simulation(ProtocolConfig(d=4, n=10, rounds=1000, gap=0.2, replicates=200, seed=SEED))
    dt = time.perf_counter() - t0
    worst = min(m.pairs, key=lambda p: p.accuracy)
    ok = len(m.pairs) == 90 and worst.accuracy >= 2 / 3 and dt < 120
    return ok, (f"min pair accuracy {worst.accuracy:.3f} (95% CI {worst.ci_low:.3f}-{worst.ci_high:.3f}) "
                f"over {len(m.pairs)} pairs; {dt:.1f}s (limit 120s)")


def c11_scale_claim():
    t0 = time.perf_counter()
    cfg = ProtocolConfig(d=127, n=254, slots_per_user=2, rounds=100, gap=0.2, replicates=20, seed=SEED)
    senders = (1, 2, 127, 254)
    m = run_mac_simulation(cfg, senders=senders)
    dt = time.perf_counter() - t0
    acc = m.sender_accuracy
    ok = bool(np.all(acc > 0.5)) and dt < 900
    return ok, f"tracked senders {senders} accuracy {np.round(acc, 2).tolist()}, K={m.foreign_energy:.0f}; {dt:.1f}s"


def c12_foreign_invariance():
    r = foreign_invariance_experiment(d=5, rounds=400, replicates=400, seed=SEED)
    return r.z_score <= 3, (f"difference {r.baseline:.4f} vs {r.perturbed:.4f} ({r.z_score:.2f} SE) "
                            f"while slot level rose by {r.mean_shift:.3f}")


def c13_variance_shape():
    sw = slot_variance_sweep(5, [2, 4, 6, 8, 10], 20_000, seed=SEED)
    return abs(sw.exponent - 2) <= 0.3, (f"fitted exponent {sw.exponent:.3f} over K={sw.foreign_energy.tolist()}; "
                                          f"variance*d^2/K^2 = {np.round(sw.variance * 25 / sw.foreign_energy**2, 2).tolist()}")


def c14_mub_vs_haar():
    t0 = time.perf_counter()
    r = mub_vs_random_experiment(5, 6, 10**5, _rng(14))
    dt = time.perf_counter() - t0
    ok = r.threshold_comparison_holds and dt < 120
    return ok, (f"P_MUB {r.p_mub:.4f} P_Haar {r.p_haar:.4f} combined CI {r.combined_ci:.4f} at C={r.threshold:.4f}; "
                f"E_MUB {r.mean_mub:.4f}+-{r.se_mub:.1e} E_Haar {r.mean_haar:.4f}+-{r.se_haar:.1e} (reported only); "
                f"{dt:.1f}s")


def c15_entropy():
    flat_err = 0.0
    for d in (3, 5, 7, 11, 13, 127):
        e = spectrum_entropy(CompleteSpectra(d, 1.0, np.full((d + 1, d), 1 / d)), 1)
        flat_err = max(flat_err, abs(e - d * math.log2(d)) / (d * math.log2(d)))
    rng = _rng(15)
    margin = math.inf
    for _ in range(10_000):
        d = int(rng.choice([3, 5, 7, 11]))
        v = rng.dirichlet(np.full(d, rng.uniform(0.1, 10)), size=d + 1)
        s = CompleteSpectra(d, 1.0, v)
        margin = min(margin, min(spectrum_entropy(s, k) for k in range(1, d + 2)) - d * math.log2(d))
    ok = flat_err <= 1e-14 and margin >= -1e-9
    return ok, f"flat relative error {flat_err:.1e}; min E_k - d lg d = {margin:.3e}"


CRITERIA = {
    1: ("MUB validity", c01_mub_validity),
    2: ("fast transform oracle and speed", c02_fast_transform),
    3: ("reconstruction round trip", c03_round_trip),
    4: ("shift equivalence", c04_shift_equivalence),
    5: ("flat replacement keeps PSD", c05_flat_replacement),
    6: ("uncertainty bounds", c06_uncertainty),
    7: ("synthesis convergence", c07_synthesis_convergence),
    8: ("stabilizer spectra", c08_stabilizer_spectra),
    9: ("operator prediction consistency", c09_operator_prediction),
    10: ("protocol d=4 n=10", c10_worked_example),
    11: ("protocol d=127 n=254", c11_scale_claim),
    12: ("foreign-domain invariance", c12_foreign_invariance),
    13: ("estimator variance shape", c13_variance_shape),
    14: ("MUB vs Haar threshold comparison", c14_mub_vs_haar),
    15: ("entropy closed forms", c15_entropy),
}


def _line(n: int, passed: bool, detail: str) -> str:
    return f"criterion {n:2d} {'PASS' if passed else 'FAIL'}  {CRITERIA[n][0]}: {detail}"


def _run(n: int) -> tuple[bool, str]:
    passed, detail = CRITERIA[n][1]()
    RESULTS[n] = (bool(passed), detail)
    return bool(passed), detail


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n):
    if n == 11 and os.environ.get("MUBSPECTRA_SKIP_HEAVY"):
        pytest.skip("heavy protocol scale check disabled by MUBSPECTRA_SKIP_HEAVY")
    passed, detail = _run(n)
    print(_line(n, passed, detail))
    assert passed, detail


if __name__ == "__main__":
    results = [(n, *_run(n)) for n in sorted(CRITERIA)]
    for n, passed, detail in results:
        print(_line(n, passed, detail))
    sys.exit(0 if all(p for _, p, _ in results) else 1)
