"""Deterministic on-disk formats: CSV tables, binary phase-space snapshots, summaries."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import InvalidParameter
from .grids import Grid1D, PhaseSpaceState

MAGIC = b"VWLAB1"
# magic, d, n, nx, nv, t, then x/v grid bounds (lo, hi) as float64
_HEADER = struct.Struct("<6s4id4d")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def header_lines(header: dict | None) -> list[str]:
    return [f"# {k} = {_fmt(v)}" for k, v in (header or {}).items()]


def write_csv(path, columns, data, header: dict | None = None) -> None:
    """Write ``data`` (rows) with a ``# key = value`` preamble, 17 significant digits."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.size and data.shape[1] != len(columns):
        raise InvalidParameter(f"{len(columns)} columns but rows have {data.shape[1]} entries")
    lines = header_lines(header)
    lines.append(",".join(columns))
    lines.extend(",".join(format(x, ".17g") for x in row) for row in data)
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path):
    """(header dict, columns, data) from a file written by ``write_csv``."""
    header, columns, rows = {}, None, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].partition("=")
            header[k.strip()] = v.strip()
        elif columns is None:
            columns = line.split(",")
        elif line:
            rows.append([float(x) for x in line.split(",")])
    return header, columns, np.array(rows).reshape(-1, len(columns or []))


def write_snapshot(path, state: PhaseSpaceState, d: int = 1, n: int = 3) -> None:
    gx, gv = state.x_grid, state.v_grid
    head = _HEADER.pack(MAGIC, d, n, gx.n, gv.n, float(state.time), gx.lo, gx.hi, gv.lo, gv.hi)
    body = np.ascontiguousarray(state.values, dtype="<f8").tobytes(order="C")
    Path(path).write_bytes(head + body)


def read_snapshot(path):
    """(PhaseSpaceState, d, n) from a snapshot file."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise InvalidParameter("file too short for a snapshot header")
    magic, d, n, nx, nv, t, xlo, xhi, vlo, vhi = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise InvalidParameter("not a snapshot file (bad magic)")
    vals = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if vals.size != nx * nv:
        raise InvalidParameter("snapshot payload does not match its header")
    state = PhaseSpaceState(Grid1D(xlo, xhi, nx), Grid1D(vlo, vhi, nv), vals.reshape(nx, nv).copy(), t)
    return state, d, n


def write_summary(path, items: dict, header: dict | None = None) -> None:
    lines = header_lines(header) + [f"{k} = {_fmt(v)}" for k, v in items.items()]
    Path(path).write_text("\n".join(lines) + "\n")
