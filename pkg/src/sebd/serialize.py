"""On-disk formats: versioned CSV tables, sample-record lines, circuit JSON.

Every CSV starts with a schema comment line ``# schema=<name>`` followed by a
standard header row. Sample records are one line per trajectory: seed, output
bits grouped by lattice row (ASCII 0/1, scan order within a row), the
accumulated truncation log, and the peak bond dimension.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .lightcone import Circuit2D, circuit_from_dict, circuit_to_dict

__all__ = [
    "SerializeError",
    "TELEMETRY_SCHEMA",
    "PROBABILITY_SCHEMA",
    "BENCHMARK_SCHEMA",
    "TAU_SCHEMA",
    "COLLAPSE_SCHEMA",
    "COLLAPSE_GRID_SCHEMA",
    "I3_SCHEMA",
    "UNRAVEL_SCHEMA",
    "write_csv",
    "read_csv",
    "format_sample_record",
    "parse_sample_record",
    "save_circuit",
    "load_circuit",
]

TELEMETRY_SCHEMA = "sebd.telemetry.v1"
PROBABILITY_SCHEMA = "sebd.probability.v1"
BENCHMARK_SCHEMA = "sebd.benchmark.v1"
TAU_SCHEMA = "sebd.tau.v1"
COLLAPSE_SCHEMA = "sebd.collapse.v1"
COLLAPSE_GRID_SCHEMA = "sebd.collapse-grid.v1"
I3_SCHEMA = "sebd.i3.v1"
UNRAVEL_SCHEMA = "sebd.unravel.v1"

CIRCUIT_FORMAT = "sebd-circuit2d/1"


class SerializeError(ValueError):
    pass


def write_csv(path, schema: str, header, rows):
    """Write rows (iterables matching header) under a schema comment line."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# schema={schema}\n")
        w = csv.writer(fh)
        w.writerow(list(header))
        for row in rows:
            w.writerow(list(row))


def read_csv(path, expect_schema: str | None = None):
    """Read a schema-headed CSV; returns (schema, header, rows of str lists)."""
    path = Path(path)
    with path.open(newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith("# schema="):
            raise SerializeError(f"{path}: missing schema line")
        schema = first.removeprefix("# schema=")
        if expect_schema is not None and schema != expect_schema:
            raise SerializeError(f"{path}: schema {schema!r}, expected {expect_schema!r}")
        r = csv.reader(fh)
        header = next(r)
        rows = [row for row in r if row]
    return schema, header, rows


def format_sample_record(record) -> str:
    """One output line for a successful trajectory."""
    if record.failed is not None:
        raise SerializeError(f"cannot serialize failed trajectory: {record.failed}")
    by_row: dict = {}
    for (x, y), bit in record.z.items():
        by_row.setdefault(y, []).append((x, bit))
    groups = []
    for y in sorted(by_row):
        groups.append("".join(str(b) for _, b in sorted(by_row[y])))
    return " ".join(
        [str(record.seed), *groups, f"{record.trunc_total:.8e}", str(record.chi_max_seen)]
    )


def parse_sample_record(line: str):
    """Inverse of format_sample_record: (seed, row bit strings, trunc, chi)."""
    parts = line.split()
    if len(parts) < 4:
        raise SerializeError(f"malformed sample record: {line!r}")
    try:
        seed = int(parts[0])
        trunc = float(parts[-2])
        chi = int(parts[-1])
    except ValueError as exc:
        raise SerializeError(f"malformed sample record: {line!r}") from exc
    groups = tuple(parts[1:-2])
    if not groups or any(set(g) - {"0", "1"} for g in groups):
        raise SerializeError(f"malformed bit groups in record: {line!r}")
    return seed, groups, trunc, chi


def save_circuit(path, circuit: Circuit2D):
    Path(path).write_text(json.dumps(circuit_to_dict(circuit), indent=1, sort_keys=True))


def load_circuit(path) -> Circuit2D:
    rec = json.loads(Path(path).read_text())
    if rec.get("format") != CIRCUIT_FORMAT:
        raise SerializeError(f"{path}: not a {CIRCUIT_FORMAT} file")
    return circuit_from_dict(rec)
