"""Plain-text file formats.

Complex numbers are written as ``re,im`` using ``repr`` of each float, which
is the shortest decimal that reads back to the same double.

* matrix files: blocks, each a ``# key=value ...`` header line followed by
  one line per row with entries separated by ``;``
* vector files: a ``# d=<d>`` header and one ``re,im`` per line
* spectra CSV: ``d=<d>,trace=<t>`` then ``d+1`` rows of ``d`` reals
* sample CSV: header ``re1,im1,...,red,imd`` and one sample per row
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .random_model import OperatorCharacterization
from .spectra import CompleteSpectra


class FormatError(ValueError):
    """An input file could not be parsed."""


def _f(x: float) -> str:
    return repr(float(x))


def format_complex(z: complex) -> str:
    return f"{_f(z.real)},{_f(z.imag)}"


def parse_complex(text: str) -> complex:
    try:
        re_, im_ = text.strip().split(",")
        return complex(float(re_), float(im_))
    except ValueError as exc:
        raise FormatError(f"bad complex entry {text!r}") from exc


def _parse_header(line: str) -> dict[str, str]:
    if not line.startswith("#"):
        raise FormatError(f"expected a '# key=value' header, got {line!r}")
    out = {}
    for tok in line[1:].split():
        if "=" not in tok:
            raise FormatError(f"bad header token {tok!r}")
        k, v = tok.split("=", 1)
        out[k] = v
    return out


def _header(meta: dict) -> str:
    return "# " + " ".join(f"{k}={v}" for k, v in meta.items())


def write_matrices(path, blocks: Iterable[tuple[dict, np.ndarray]]) -> None:
    lines = []
    for meta, m in blocks:
        m = np.asarray(m, dtype=complex)
        lines.append(_header({"d": m.shape[0], **meta}))
        lines.extend(";".join(format_complex(z) for z in row) for row in m)
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrices(path) -> list[tuple[dict, np.ndarray]]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    blocks, pos = [], 0
    while pos < len(lines):
        meta = _parse_header(lines[pos])
        try:
            d = int(meta["d"])
        except (KeyError, ValueError) as exc:
            raise FormatError("matrix header needs d=<int>") from exc
        rows = lines[pos + 1:pos + 1 + d]
        if len(rows) != d:
            raise FormatError(f"matrix block at line {pos + 1} is truncated")
        m = np.array([[parse_complex(t) for t in row.split(";")] for row in rows], dtype=complex)
        if m.shape != (d, d):
            raise FormatError(f"matrix block at line {pos + 1} is not {d}x{d}")
        blocks.append((meta, m))
        pos += 1 + d
    if not blocks:
        raise FormatError(f"{path}: no matrix blocks")
    return blocks


def write_matrix(path, m: np.ndarray, **meta) -> None:
    write_matrices(path, [(meta, m)])


def read_matrix(path) -> np.ndarray:
    return read_matrices(path)[0][1]


def write_vector(path, x) -> None:
    x = np.asarray(x, dtype=complex).ravel()
    Path(path).write_text("\n".join([f"# d={x.size}"] + [format_complex(z) for z in x]) + "\n")


def read_vector(path) -> np.ndarray:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: empty vector file")
    body = lines[1:] if lines[0].startswith("#") else lines
    x = np.array([parse_complex(t) for t in body], dtype=complex)
    if lines[0].startswith("#"):
        meta = _parse_header(lines[0])
        if "d" in meta and int(meta["d"]) != x.size:
            raise FormatError(f"{path}: header says d={meta['d']} but holds {x.size} entries")
    return x


def write_spectra(path, spectra: CompleteSpectra) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"d={spectra.d}", f"trace={_f(spectra.trace)}"])
        for row in spectra.vectors:
            w.writerow([_f(v) for v in row])


def read_spectra(path) -> CompleteSpectra:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise FormatError(f"{path}: empty spectra file")
    try:
        head = dict(tok.split("=", 1) for tok in rows[0])
        d, trace = int(head["d"]), float(head["trace"])
        vectors = np.array([[float(v) for v in r] for r in rows[1:]])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: malformed spectra file") from exc
    if vectors.shape != (d + 1, d):
        raise FormatError(f"{path}: expected {d + 1} rows of {d} values")
    return CompleteSpectra(d, trace, vectors)


def write_samples(path, samples: np.ndarray) -> None:
    samples = np.atleast_2d(np.asarray(samples, dtype=complex))
    d = samples.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"{p}{j}" for j in range(1, d + 1) for p in ("re", "im")])
        for row in samples:
            w.writerow([_f(v) for z in row for v in (z.real, z.imag)])


def read_samples(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise FormatError(f"{path}: no samples")
    try:
        a = np.array([[float(v) for v in r] for r in rows[1:]])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed sample row") from exc
    if a.ndim != 2 or a.shape[1] % 2:
        raise FormatError(f"{path}: expected re/im column pairs")
    return a[:, 0::2] + 1j * a[:, 1::2]


def write_characterization(path, char: OperatorCharacterization, **extra) -> None:
    doc = {
        "d": char.d,
        "samples_per_probe": char.samples_per_probe,
        "column_order": "(i-1)*d + (j-1) for probe M_i e_j",
        "D": char.D.tolist(),
        "stderr": char.stderr.tolist(),
        **extra,
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def read_characterization(path) -> OperatorCharacterization:
    try:
        doc = json.loads(Path(path).read_text())
        return OperatorCharacterization(int(doc["d"]), np.array(doc["D"]), np.array(doc["stderr"]),
                                        int(doc.get("samples_per_probe", 0)))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: malformed characterization") from exc


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_f(v) if isinstance(v, (float, np.floating)) else v for v in r])


def sha256_of(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
