"""Bit-stable output formats: time-series CSV, binary snapshots, JSON summary.

CSV floats use Python's shortest round-trip representation, so identical runs
produce byte-identical files on any platform. The snapshot layout is

    magic "NSAC1" (5 bytes)
    uint32 dim                     (little-endian)
    uint32 n per axis (dim values)
    float64 box length per axis
    float64 time
    fields sigma, u_1..u_dim, phi  (row-major float64, little-endian)
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .model import State
from .spectral import Grid

SNAPSHOT_MAGIC = b"NSAC1"

CSV_BASE_COLUMNS = (
    "t",
    "mass",
    "phi_max",
    "E_total",
    "E_kin",
    "E_G",
    "E_grad",
    "E_dw",
    "D_visc",
    "D_div",
    "D_mu",
    "H3_sigma_u",
    "H2_gradphi",
    "L2_phisq",
)


def csv_header(s_list=()) -> str:
    cols = list(CSV_BASE_COLUMNS) + [f"Eneg_s{s:g}" for s in s_list]
    return ",".join(cols)


def format_float(x: float) -> str:
    return repr(float(x))


def csv_row(values) -> str:
    return ",".join(format_float(v) for v in values)


class CsvWriter:
    """Streaming writer for the simulation time-series schema."""

    def __init__(self, path: str, s_list=()):
        self.path = path
        self.s_list = tuple(s_list)
        self._fh = open(path, "w", encoding="utf-8", newline="\n")
        self._fh.write(csv_header(self.s_list) + "\n")

    def write(self, values) -> None:
        expected = len(CSV_BASE_COLUMNS) + len(self.s_list)
        values = list(values)
        if len(values) != expected:
            raise ValueError(f"expected {expected} columns, got {len(values)}")
        self._fh.write(csv_row(values) + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def read_csv(path: str) -> dict[str, np.ndarray]:
    """Load a series CSV as column arrays keyed by header name."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        names = header.split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array([[float(v) for v in row] for row in rows]) if rows else np.empty((0, len(names)))
    return {name: data[:, i] for i, name in enumerate(names)}


def write_snapshot(path: str, state: State) -> None:
    grid = state.grid
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<I", grid.dim))
        fh.write(struct.pack(f"<{grid.dim}I", *([grid.n] * grid.dim)))
        fh.write(struct.pack(f"<{grid.dim}d", *([grid.length] * grid.dim)))
        fh.write(struct.pack("<d", state.t))
        fields = [state.sigma()] + [state.u()[i] for i in range(grid.dim)] + [state.phi()]
        for arr in fields:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_snapshot(path: str) -> State:
    with open(path, "rb") as fh:
        magic = fh.read(5)
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"not a snapshot file (magic {magic!r})")
        (dim,) = struct.unpack("<I", fh.read(4))
        ns = struct.unpack(f"<{dim}I", fh.read(4 * dim))
        lengths = struct.unpack(f"<{dim}d", fh.read(8 * dim))
        (t,) = struct.unpack("<d", fh.read(8))
        if len(set(ns)) != 1 or len(set(lengths)) != 1:
            raise ValueError("snapshot grid must be cubic")
        grid = Grid(dim=dim, n=ns[0], length=lengths[0])
        count = grid.npoints
        fields = []
        for _ in range(dim + 2):
            buf = fh.read(8 * count)
            fields.append(np.frombuffer(buf, dtype="<f8").reshape(grid.shape).astype(np.float64))
    sigma, phi = fields[0], fields[-1]
    u = np.stack(fields[1:-1])
    return State.from_physical(grid, t, sigma, u, phi)


def write_summary(path: str, summary: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
