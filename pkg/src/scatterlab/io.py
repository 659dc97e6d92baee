"""Sample containers, CSV schemas, Touchstone-style input, and run manifests.

One CSV schema is shared by the graph simulator and the random-matrix
sampler: a ``source`` column distinguishes the origin, ``realization_id``
and ``k`` tag each row, and the four complex matrix entries are stored as
Re/Im pairs.  Floats are written with ``repr`` so a rerun with the same
seed reproduces byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import re
import tempfile
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

__all__ = [
    "TwoPortSamples",
    "RunManifest",
    "SampleFormatError",
    "write_samples_csv",
    "read_samples_csv",
    "read_touchstone",
    "write_curve_csv",
    "read_curve_csv",
    "atomic_write_text",
    "sha256_file",
]


class SampleFormatError(ValueError):
    """Malformed sample file; the message carries the offending row."""


@dataclass
class TwoPortSamples:
    """Columnar store of 2x2 scattering (or reaction) matrices.

    ``s`` has shape (n, 2, 2); ``coord`` is the spectral coordinate of each
    sample (wavenumber for graphs, energy for the random-matrix sampler,
    frequency for measured data); ``realization`` tags the ensemble member
    the sample came from.
    """

    s: np.ndarray
    coord: np.ndarray
    realization: np.ndarray
    source: str = "unknown"

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=complex)
        self.coord = np.asarray(self.coord, dtype=float)
        self.realization = np.asarray(self.realization, dtype=int)
        if self.s.ndim != 3 or self.s.shape[1:] != (2, 2):
            raise ValueError(f"expected (n, 2, 2) matrices, got shape {self.s.shape}")
        if not (len(self.s) == len(self.coord) == len(self.realization)):
            raise ValueError("mismatched column lengths")

    def __len__(self) -> int:
        return len(self.s)

    @property
    def s_aa(self) -> np.ndarray:
        return self.s[:, 0, 0]

    @property
    def s_ab(self) -> np.ndarray:
        return self.s[:, 0, 1]

    @property
    def s_ba(self) -> np.ndarray:
        return self.s[:, 1, 0]

    @property
    def s_bb(self) -> np.ndarray:
        return self.s[:, 1, 1]

    def extend(self, other: "TwoPortSamples") -> "TwoPortSamples":
        return TwoPortSamples(
            s=np.concatenate([self.s, other.s]),
            coord=np.concatenate([self.coord, other.coord]),
            realization=np.concatenate([self.realization, other.realization]),
            source=self.source if self.source == other.source else "mixed",
        )


_FIELDS = ("aa", "ab", "ba", "bb")
_IDX = {"aa": (0, 0), "ab": (0, 1), "ba": (1, 0), "bb": (1, 1)}


def _header(prefix: str) -> list[str]:
    cols = ["source", "realization_id", "k"]
    for f in _FIELDS:
        cols += [f"re_{prefix}{f}", f"im_{prefix}{f}"]
    return cols


def write_samples_csv(path, samples: TwoPortSamples, prefix: str = "s") -> None:
    """Persist samples; ``prefix`` is 's' for scattering, 'k' for reaction
    matrices (same layout, distinguishable headers)."""
    lines = [",".join(_header(prefix))]
    for i in range(len(samples)):
        row = [samples.source, str(int(samples.realization[i])), repr(float(samples.coord[i]))]
        for f in _FIELDS:
            z = samples.s[i][_IDX[f]]
            row += [repr(float(z.real)), repr(float(z.imag))]
        lines.append(",".join(row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_samples_csv(path) -> TwoPortSamples:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SampleFormatError(f"{path}: empty file") from None
        prefix = "k" if any(c.startswith("re_k") for c in header) else "s"
        expect = _header(prefix)
        if header != expect:
            raise SampleFormatError(f"{path}: unexpected header {header!r}")
        s_rows, coords, reals, sources = [], [], [], set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expect):
                raise SampleFormatError(f"{path}: row {lineno}: expected {len(expect)} fields, got {len(row)}")
            try:
                reals.append(int(row[1]))
                coords.append(float(row[2]))
                vals = [float(v) for v in row[3:]]
            except ValueError as exc:
                raise SampleFormatError(f"{path}: row {lineno}: {exc}") from None
            m = np.empty((2, 2), dtype=complex)
            for j, f in enumerate(_FIELDS):
                m[_IDX[f]] = complex(vals[2 * j], vals[2 * j + 1])
            s_rows.append(m)
            sources.add(row[0])
    if not s_rows:
        raise SampleFormatError(f"{path}: no data rows")
    return TwoPortSamples(
        s=np.array(s_rows), coord=np.array(coords), realization=np.array(reals),
        source=sources.pop() if len(sources) == 1 else "mixed",
    )


_UNIT_HZ = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9}


def read_touchstone(path) -> TwoPortSamples:
    """Read a two-port Touchstone-style file (.s2p).

    Handles the ``# <unit> S <RI|MA|DB> R <z0>`` option line, '!' comments,
    and the standard two-port column order f, S11, S21, S12, S22.
    """
    path = Path(path)
    unit, fmt = 1e9, "ma"
    rows = []
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("!", 1)[0].strip()
            if not line:
                continue
            if line.startswith("#"):
                toks = line[1:].lower().split()
                for t in toks:
                    if t in _UNIT_HZ:
                        unit = _UNIT_HZ[t]
                    elif t in ("ri", "ma", "db"):
                        fmt = t
                    elif t not in ("s", "r") and not re.fullmatch(r"[0-9.]+", t):
                        raise SampleFormatError(f"{path}: line {lineno}: unsupported option {t!r}")
                continue
            try:
                vals = [float(v) for v in line.split()]
            except ValueError as exc:
                raise SampleFormatError(f"{path}: line {lineno}: {exc}") from None
            if len(vals) != 9:
                raise SampleFormatError(
                    f"{path}: line {lineno}: expected 9 columns (f + 4 complex), got {len(vals)}"
                )
            rows.append(vals)
    if not rows:
        raise SampleFormatError(f"{path}: no data rows")
    data = np.array(rows)
    freq = data[:, 0] * unit
    pairs = data[:, 1:].reshape(-1, 4, 2)
    if fmt == "ri":
        z = pairs[:, :, 0] + 1j * pairs[:, :, 1]
    else:
        mag = pairs[:, :, 0] if fmt == "ma" else 10.0 ** (pairs[:, :, 0] / 20.0)
        z = mag * np.exp(1j * np.deg2rad(pairs[:, :, 1]))
    s = np.empty((len(z), 2, 2), dtype=complex)
    s[:, 0, 0] = z[:, 0]  # S11
    s[:, 1, 0] = z[:, 1]  # S21
    s[:, 0, 1] = z[:, 2]  # S12
    s[:, 1, 1] = z[:, 3]  # S22
    return TwoPortSamples(s=s, coord=freq, realization=np.zeros(len(z), dtype=int),
                          source="measured")


def write_curve_csv(path, columns: dict[str, np.ndarray]) -> None:
    """Write named columns of equal length (density curves, overlays)."""
    names = list(columns)
    arrays = [np.asarray(columns[n], dtype=float) for n in names]
    n = len(arrays[0])
    if any(len(a) != n for a in arrays):
        raise ValueError("curve columns must have equal length")
    lines = [",".join(names)]
    for i in range(n):
        lines.append(",".join(repr(float(a[i])) for a in arrays))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_curve_csv(path) -> dict[str, np.ndarray]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols = {name: [] for name in header}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SampleFormatError(f"{path}: row {lineno}: ragged row")
            for name, v in zip(header, row):
                try:
                    cols[name].append(float(v))
                except ValueError as exc:
                    raise SampleFormatError(f"{path}: row {lineno}: {exc}") from None
    return {k: np.array(v) for k, v in cols.items()}


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Everything needed to reproduce a run bit for bit."""

    command: str
    config: dict
    seed: int | None = None
    inputs: dict = field(default_factory=dict)     # path -> sha256
    outputs: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    wall_time_s: float = 0.0
    version: str = ""
    extras: dict = field(default_factory=dict)

    def write(self, path) -> None:
        atomic_write_text(path, json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "RunManifest":
        with open(path) as fh:
            raw = json.load(fh)
        return cls(**raw)


class Stopwatch:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
