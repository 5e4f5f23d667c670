"""Command-line entry point: ``mubspectra <subcommand> ...``.

Exit codes: 0 success, 1 validation error or bad usage, 2 I/O error.
Every subcommand that writes files also writes ``<first output>.manifest.json``
recording the resolved arguments, seed, version and SHA-256 digests.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from . import io as fio
from .analysis import best_base_compress, detect_signal, entropy_report, mub_vs_random_experiment
from .core import MubFamily, verify_mub
from .protocol import ConfigError, ProtocolConfig, parse_config, protocol_family, run_mac_simulation
from .random_model import (
    RandomSource,
    builtin_operator,
    characterize_operator,
    classify_operator,
    stabilize,
    synthesize_from_spectra,
    whiten_lift,
)
from .spectra import reconstruct, spectra_of
from .transform import mub_analyze, mub_synthesize

log = logging.getLogger("mubspectra")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for I/O errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seed: int | None
    version: str = __version__
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


def _family(d: int) -> MubFamily:
    return protocol_family(d)


def _index_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _finish(args, inputs: Sequence[str], outputs: Sequence[str], config: dict | None = None) -> None:
    if not outputs:
        return
    cfg = {k: v for k, v in vars(args).items() if k not in ("func",) and not callable(v)}
    if config:
        cfg.update(config)
    manifest = RunManifest(
        subcommand=args.command if args.command != "experiment" else f"experiment {args.kind}",
        config=cfg,
        seed=getattr(args, "seed", None),
        inputs={p: fio.sha256_of(p) for p in inputs},
        outputs={p: fio.sha256_of(p) for p in outputs},
    )
    manifest.write(f"{outputs[0]}.manifest.json")


def cmd_gen_mub(args) -> int:
    fam = _family(args.d)
    rep = verify_mub(fam)
    fio.write_matrices(args.out, [({"k": k}, fam[k]) for k in range(1, len(fam) + 1)])
    print(f"d={args.d}: {len(fam)} bases, unitarity {rep.unitarity_deviation:.2e}, "
          f"unbiasedness {rep.unbiasedness_deviation:.2e}, {'ok' if rep.passed else 'FAILED'}")
    _finish(args, [], [args.out])
    return EXIT_OK if rep.passed else EXIT_INVALID


def cmd_transform(args) -> int:
    x = fio.read_vector(args.inp)
    if x.size != args.d:
        raise ValueError(f"input has {x.size} entries, expected d={args.d}")
    fam = _family(args.d) if args.d == 4 or args.method == "naive" else None
    method = "naive" if args.d == 4 else args.method
    fn = mub_synthesize if args.inverse else mub_analyze
    fio.write_vector(args.out, fn(x, args.base, family=fam, method=method))
    _finish(args, [args.inp], [args.out])
    return EXIT_OK


def cmd_spectra(args) -> int:
    rx = fio.read_matrix(args.inp)
    if args.d is not None and args.d != rx.shape[0]:
        raise ValueError(f"matrix is {rx.shape[0]}x{rx.shape[0]}, expected d={args.d}")
    s = spectra_of(rx, _family(rx.shape[0]))
    fio.write_spectra(args.out, s)
    _finish(args, [args.inp], [args.out])
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    s = fio.read_spectra(args.inp)
    r = reconstruct(s, _family(s.d), strict=args.strict)
    if not r.realizable:
        log.warning("spectra are not realizable: min eigenvalue %.3e", r.min_eigenvalue)
    fio.write_matrix(args.out, r.entries)
    _finish(args, [args.inp], [args.out])
    return EXIT_OK


def cmd_synthesize(args) -> int:
    s = fio.read_spectra(args.spectra)
    if args.lift:
        s = whiten_lift(s)
    x = synthesize_from_spectra(s, _family(s.d), args.count, dist=args.dist, rng=RandomSource(args.seed))
    fio.write_samples(args.out, x)
    _finish(args, [args.spectra], [args.out])
    return EXIT_OK


def cmd_stabilize(args) -> int:
    x = fio.read_samples(args.inp)
    fam = _family(x.shape[1])
    y = stabilize(x, args.indices, fam, rng=RandomSource(args.seed), dist=args.dist)
    fio.write_samples(args.out, y)
    _finish(args, [args.inp], [args.out])
    return EXIT_OK


def cmd_characterize(args) -> int:
    fam = _family(args.d)
    op = builtin_operator(args.op, fam)
    char = characterize_operator(op, fam, args.probes, rng=RandomSource(args.seed))
    cls = classify_operator(char)
    fio.write_characterization(args.out, char, op=args.op, tags=cls.tags)
    for tag in cls.tags or ["(no tags)"]:
        print(tag)
    _finish(args, [], [args.out])
    return EXIT_OK


def _metrics_rows(m):
    for p in m.pairs:
        yield ("pair", p.sender, p.receiver, p.accuracy, p.ci_low, p.ci_high, "", "", "", "", "")
    yield ("summary", "", "", m.min_accuracy, "", "",
           m.rounds_to_target if m.rounds_to_target is not None else "none",
           m.difference_bias, m.slot_variance, m.foreign_energy, m.quantization_error)


METRICS_HEADER = ("row", "sender", "receiver", "accuracy", "ci_low", "ci_high",
                  "rounds_to_2_3", "difference_bias", "slot_variance", "foreign_energy", "quantization_error")


def cmd_simulate_mac(args) -> int:
    cfg = parse_config(Path(args.config).read_text())
    cfg = cfg.with_(seed=args.seed)
    m = run_mac_simulation(cfg)
    fio.write_table(args.out, METRICS_HEADER, _metrics_rows(m))
    print(f"min pair accuracy {m.min_accuracy:.3f} over {len(m.pairs)} pairs; "
          f"rounds to 2/3: {m.rounds_to_target}")
    _finish(args, [args.config], [args.out], {"resolved": {k: getattr(cfg, k) for k in
                                                           ("d", "n", "slots_per_user", "rounds", "noise_power",
                                                            "mag_levels", "phase_levels", "gap", "replicates", "seed")}})
    return EXIT_OK


def cmd_detect(args) -> int:
    s = fio.read_spectra(args.spectra)
    det = detect_signal(s, args.threshold)
    rep = entropy_report(s)
    print(f"flat reference {rep.flat_reference:.6g} bits")
    for k, (e, flag) in enumerate(zip(rep.entropies, det.flags), 1):
        print(f"S_{k}: entropy {e:.6g}{'  FLAG' if flag else ''}")
    print("signal detected" if det.detected else "no signal detected")
    return EXIT_OK


def cmd_compress(args) -> int:
    x = fio.read_vector(args.inp)
    if x.size != args.d:
        raise ValueError(f"input has {x.size} entries, expected d={args.d}")
    norm = np.linalg.norm(x)
    if norm == 0:
        raise ValueError("cannot compress the zero vector")
    fam = _family(args.d)
    labels = args.bases or list(range(1, len(fam) + 1))
    for b in labels:
        if not 1 <= b <= len(fam):
            raise ValueError(f"base {b} out of range 1..{len(fam)}")
    res = best_base_compress(x / norm, [fam[b] for b in labels], labels)
    print(f"base {res.base}, merit {res.merit:.6g}, side information {res.side_bits} bits")
    if args.out:
        fio.write_vector(args.out, res.spectrum * norm)
        _finish(args, [args.inp], [args.out])
    return EXIT_OK


def _mub_vs_haar_rows(r):
    return [
        ("threshold", r.threshold, ""),
        ("p_mub", r.p_mub, r.ci_mub),
        ("p_haar", r.p_haar, r.ci_haar),
        ("mean_mub", r.mean_mub, r.se_mub),
        ("mean_haar", r.mean_haar, r.se_haar),
        ("threshold_comparison_holds", int(r.threshold_comparison_holds), ""),
    ]


def cmd_mub_vs_haar(args) -> int:
    r = mub_vs_random_experiment(args.d, args.k, args.trials, RandomSource(args.seed).generator())
    rows = _mub_vs_haar_rows(r)
    for name, v, e in rows:
        print(f"{name}: {v}" + (f" +- {e:.3g}" if e != "" else ""))
    if args.out:
        fio.write_table(args.out, ("quantity", "value", "uncertainty"), rows)
        _finish(args, [], [args.out])
    return EXIT_OK


def replicate_reference_scenarios(seed: int = 0, quick: bool = False) -> list[tuple[str, bool, str]]:
    """Re-run the bundled d=4/n=10 protocol scenario and the d=5 MUB-vs-Haar comparison."""
    reps, trials = (40, 10_000) if quick else (200, 100_000)
    t0 = time.perf_counter()
    m = run_mac_simulation(ProtocolConfig(d=4, n=10, rounds=1000, gap=0.2, replicates=reps, seed=seed))
    worst = min(m.pairs, key=lambda p: p.accuracy)
    rows = [("protocol d=4 n=10: every pair >= 2/3", m.min_accuracy >= 2 / 3,
             f"min accuracy {worst.accuracy:.3f} [{worst.ci_low:.3f}, {worst.ci_high:.3f}], "
             f"{reps} replicates, {time.perf_counter() - t0:.1f}s")]
    t0 = time.perf_counter()
    r = mub_vs_random_experiment(5, 6, trials, RandomSource(seed, 1).generator())
    rows.append(("d=5 k=6: P_MUB >= P_Haar - 2 CI", r.threshold_comparison_holds,
                 f"P_MUB {r.p_mub:.4f} P_Haar {r.p_haar:.4f} CI {r.combined_ci:.4f}; "
                 f"E_MUB {r.mean_mub:.4f}+-{r.se_mub:.1e} E_Haar {r.mean_haar:.4f}+-{r.se_haar:.1e} (reported only), "
                 f"{time.perf_counter() - t0:.1f}s"))
    return rows


def cmd_replicate(args) -> int:
    rows = replicate_reference_scenarios(args.seed, args.quick)
    if args.quick:
        print("quick mode: reduced replicates and trials, results approximate")
    for name, ok, detail in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  ({detail})")
    if args.out:
        fio.write_table(args.out, ("check", "passed", "detail"), [(n, int(ok), d) for n, ok, d in rows])
        _finish(args, [], [args.out])
    return EXIT_OK if all(ok for _, ok, _ in rows) else EXIT_INVALID


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mubspectra", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--threads", type=int, default=1,
                   help="worker cap; current subcommands run single-threaded and ignore it")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, func: Callable, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=func)
        return sp

    sp = add("gen-mub", cmd_gen_mub, "write the MUB family for an odd prime d (or d=4)")
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--out", required=True)

    sp = add("transform", cmd_transform, "k-spectrum of a vector, or its inverse")
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--base", type=int, required=True)
    sp.add_argument("--inverse", action="store_true")
    sp.add_argument("--method", choices=("fast", "naive"), default="fast")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--out", required=True)

    sp = add("spectra", cmd_spectra, "complete spectra of a correlation matrix")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--d", type=int, help="optional check on the matrix size")
    sp.add_argument("--out", required=True)

    sp = add("reconstruct", cmd_reconstruct, "correlation matrix from complete spectra")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--strict", action="store_true", help="fail on unrealizable spectra")

    sp = add("synthesize", cmd_synthesize, "draw samples with prescribed spectra")
    sp.add_argument("--spectra", required=True)
    sp.add_argument("--count", type=int, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--dist", choices=("rademacher", "gaussian"), default="rademacher")
    sp.add_argument("--lift", action="store_true", help="mix in white noise first so any spectra qualify")
    sp.add_argument("--out", required=True)

    sp = add("stabilize", cmd_stabilize, "apply the stabilizer for the given indices to samples")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--indices", type=_index_list, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--dist", choices=("rademacher", "gaussian"), default="rademacher")
    sp.add_argument("--out", required=True)

    sp = add("characterize", cmd_characterize, "estimate D-matrices of a built-in operator")
    sp.add_argument("--op", required=True,
                    help="identity, dft, white-noise, stabilize-all or stabilize-<i>,<j>,...")
    sp.add_argument("--d", type=int, default=3)
    sp.add_argument("--probes", type=int, required=True, help="samples per probe")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", required=True)

    sp = add("simulate-mac", cmd_simulate_mac, "run the second-moment multiple-access simulation")
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed", type=int, required=True, help="overrides the seed in the config file")
    sp.add_argument("--out", required=True)

    sp = add("detect", cmd_detect, "entropy-based structure detection on spectra")
    sp.add_argument("--spectra", required=True)
    sp.add_argument("--threshold", type=float, required=True)

    sp = add("compress", cmd_compress, "pick the base with the largest spectrum entry")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--bases", type=_index_list)
    sp.add_argument("--out")

    sp = add("experiment", None, "Monte Carlo experiments")
    esub = sp.add_subparsers(dest="kind", parser_class=_Parser)
    ep = esub.add_parser("mub-vs-haar", help="MUB versus Haar peak-coefficient comparison")
    ep.set_defaults(func=cmd_mub_vs_haar)
    ep.add_argument("--d", type=int, required=True)
    ep.add_argument("--k", type=int, required=True)
    ep.add_argument("--trials", type=int, required=True)
    ep.add_argument("--seed", type=int, required=True)
    ep.add_argument("--out")
    ep = esub.add_parser("replicate", help="re-run the bundled protocol and comparison scenarios")
    ep.set_defaults(func=cmd_replicate)
    ep.add_argument("--seed", type=int, default=0)
    ep.add_argument("--quick", action="store_true")
    ep.add_argument("--out")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "func", None) is None:
        parser.print_help(sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except (fio.FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, ConfigError, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
