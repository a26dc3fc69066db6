"""Serialization: energy time series as CSV, grid snapshots as binary dumps.

Dump layout (documented in the README): an 8-byte magic ``VGDUMP01``, a
little-endian uint64 byte length, that many bytes of UTF-8 JSON metadata
(dims, node counts, time, ordered field names and component shapes), then the
fields in metadata order as little-endian float64 in row-major node order.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .diagnostics import ENERGY_COMPONENT_NAMES, EnergyReport
from .grid import DiscreteDomain, build_domain

__all__ = [
    "energy_csv_header",
    "write_energy_csv",
    "write_grid_dump",
    "read_grid_dump",
    "MAGIC",
]

MAGIC = b"VGDUMP01"

_FLOAT_FMT = "%.17g"


def energy_csv_header() -> list[str]:
    return (
        ["t", "physical_energy"]
        + list(ENERGY_COMPONENT_NAMES)
        + ["E_total", "E_gamma_total", "curl_residual", "piola_residual_max", "J_min", "J_max"]
    )


def _fmt(x: float) -> str:
    return _FLOAT_FMT % x


def write_energy_csv(path, reports: list[EnergyReport]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(energy_csv_header())
        for r in reports:
            row = [r.t, r.physical_energy]
            row += [r.E_components.get(name, 0.0) for name in ENERGY_COMPONENT_NAMES]
            row += [
                r.E_total,
                r.E_gamma_total,
                r.curl_residual,
                r.piola_residual_max,
                r.J_min,
                r.J_max,
            ]
            writer.writerow([_fmt(x) for x in row])


def write_grid_dump(path, domain: DiscreteDomain, time: float, fields: dict) -> None:
    """Write named nodal fields (scalar or with trailing component axes)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(fields)
    meta = {
        "dim": domain.dim,
        "n_horizontal": domain.n_horizontal,
        "n_vertical": domain.n_vertical,
        "shape": list(domain.shape),
        "time": time,
        "fields": [
            {"name": name, "components": list(np.asarray(fields[name]).shape[domain.dim :])}
            for name in names
        ],
    }
    blob = json.dumps(meta, indent=1).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name in names:
            arr = np.ascontiguousarray(fields[name], dtype="<f8")
            fh.write(arr.tobytes())


def read_grid_dump(path) -> tuple[DiscreteDomain, float, dict]:
    path = Path(path)
    with path.open("rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ValueError(f"bad magic {magic!r}; not a grid dump")
        (length,) = struct.unpack("<Q", fh.read(8))
        meta = json.loads(fh.read(length).decode("utf-8"))
        domain = build_domain(meta["dim"], meta["n_horizontal"] or None, meta["n_vertical"])
        fields = {}
        for spec in meta["fields"]:
            shape = tuple(meta["shape"]) + tuple(spec["components"])
            count = int(np.prod(shape))
            data = np.frombuffer(fh.read(count * 8), dtype="<f8").reshape(shape)
            fields[spec["name"]] = np.array(data)
    return domain, float(meta["time"]), fields
