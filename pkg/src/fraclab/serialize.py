"""Artifact I/O: provenance-stamped CSV and JSON files, written atomically.

Numeric artifacts follow one convention package-wide: a CSV holds one
row per time step and one column per lattice node (a single row for
time-independent fields), every value printed with 17 significant
digits so a read-back reproduces the exact float64 bits.  The first
line of every CSV is a ``#``-comment carrying the JSON provenance
record; JSON artifacts carry the same record under a ``provenance``
key.  Provenance is deterministic — configuration digest, library
versions, seed — never timestamps, so repeated runs of the same
configuration yield bitwise-identical files.

All writes go through a temporary file in the target directory followed
by an atomic rename; a crashed run never leaves partial artifacts.
"""

from __future__ import annotations

import json
import os
from io import StringIO

import numpy as np
import scipy

from . import __version__
from .errors import ConfigError
from .grid import Grid, TimeGrid
from .nonlinearity import Nonlinearity, make_polynomial_q

#: Format producing round-trip-exact float64 text.
FLOAT_FMT = "%.17g"


def canonical_digest(payload) -> str:
    """Stable hex digest of a JSON-representable payload."""
    import hashlib

    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.blake2b(text.encode(), digest_size=16).hexdigest()


def array_digest(values: np.ndarray) -> str:
    """Stable hex digest of an array's exact contents."""
    import hashlib

    arr = np.ascontiguousarray(np.asarray(values, dtype=float))
    record = hashlib.blake2b(digest_size=16)
    record.update(str(arr.shape).encode())
    record.update(arr.tobytes())
    return record.hexdigest()


def make_provenance(config_payload, seed: int | None = None) -> dict:
    """Deterministic provenance record for output files."""
    record = {
        "package": "fraclab",
        "version": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "config_hash": canonical_digest(config_payload),
    }
    if seed is not None:
        record["seed"] = int(seed)
    return record


def atomic_write_text(path: str, text: str) -> None:
    """Write-temp-then-rename so readers never see partial files."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp = os.path.join(directory, f".{os.path.basename(path)}.tmp")
    with open(tmp, "w") as handle:
        handle.write(text)
    os.replace(tmp, path)


def write_json(path: str, payload: dict) -> None:
    atomic_write_text(
        path, json.dumps(payload, sort_keys=True, indent=2) + "\n"
    )


def read_json(path: str) -> dict:
    with open(path) as handle:
        return json.load(handle)


def write_csv(path: str, values: np.ndarray, provenance: dict) -> None:
    """Rows of 17-digit floats under a one-line provenance comment."""
    rows = np.atleast_2d(np.asarray(values, dtype=float))
    out = StringIO()
    out.write("# provenance: ")
    out.write(json.dumps(provenance, sort_keys=True, separators=(",", ":")))
    out.write("\n")
    for row in rows:
        out.write(",".join(FLOAT_FMT % v for v in row))
        out.write("\n")
    atomic_write_text(path, out.getvalue())


def read_csv(path: str):
    """Inverse of write_csv: (2-d array, provenance dict or None)."""
    provenance = None
    rows = []
    with open(path) as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                marker = "provenance:"
                body = line.lstrip("#").strip()
                if body.startswith(marker):
                    provenance = json.loads(body[len(marker):].strip())
                continue
            rows.append([float(v) for v in line.split(",")])
    if not rows:
        raise ConfigError(f"no numeric rows in {path}")
    return np.array(rows), provenance


def grid_metadata(grid: Grid, timegrid: TimeGrid | None = None) -> dict:
    meta = {
        "box_halfwidth": grid.box_halfwidth,
        "n_points": int(grid.n_points),
        "h": grid.h,
        "omega_interval": list(grid.omega_interval),
        "w_interval": list(grid.w_interval),
        "v_interval": list(grid.v_interval),
    }
    if timegrid is not None:
        meta["horizon"] = timegrid.horizon
        meta["n_steps"] = int(timegrid.n_steps)
        meta["dt"] = timegrid.dt
    return meta


def write_field(
    out_dir: str,
    name: str,
    values: np.ndarray,
    grid: Grid,
    timegrid: TimeGrid | None,
    provenance: dict,
    extra: dict | None = None,
) -> str:
    """Field CSV plus JSON sidecar with the lattice geometry."""
    csv_path = os.path.join(out_dir, f"{name}.csv")
    write_csv(csv_path, values, provenance)
    sidecar = {
        "kind": "field",
        "name": name,
        "shape": list(np.atleast_2d(values).shape),
        "geometry": grid_metadata(grid, timegrid),
        "provenance": provenance,
    }
    if extra:
        sidecar.update(extra)
    write_json(os.path.join(out_dir, f"{name}.json"), sidecar)
    return csv_path


def write_dn_data(
    out_dir: str,
    name: str,
    values: np.ndarray,
    grid: Grid,
    timegrid: TimeGrid,
    provenance: dict,
    extra: dict | None = None,
) -> str:
    """Measurement CSV (time rows, one column per measurement node)."""
    csv_path = os.path.join(out_dir, f"{name}.csv")
    write_csv(csv_path, values, provenance)
    sidecar = {
        "kind": "dn-data",
        "name": name,
        "measurement_nodes": [float(x) for x in grid.x[grid.v_set]],
        "geometry": grid_metadata(grid, timegrid),
        "data_hash": array_digest(values),
        "provenance": provenance,
    }
    if extra:
        sidecar.update(extra)
    write_json(os.path.join(out_dir, f"{name}.json"), sidecar)
    return csv_path


def write_operator(
    out_dir: str, name: str, matrix: np.ndarray, s: float, grid: Grid,
    normalization: float, provenance: dict,
) -> str:
    """Dense operator dump with its defining parameters."""
    csv_path = os.path.join(out_dir, f"{name}.csv")
    write_csv(csv_path, matrix, provenance)
    write_json(os.path.join(out_dir, f"{name}.json"), {
        "kind": "operator",
        "name": name,
        "s": s,
        "normalization": normalization,
        "geometry": grid_metadata(grid),
        "provenance": provenance,
    })
    return csv_path


def load_coefficient(entry, base_dir: str) -> np.ndarray:
    """A coefficient in a reaction-term spec: scalar, inline array, or
    ``{"file": path}`` referencing a field CSV (path relative to the
    spec file)."""
    if isinstance(entry, (int, float)):
        return np.array([[float(entry)]])
    if isinstance(entry, list):
        return np.atleast_2d(np.asarray(entry, dtype=float))
    if isinstance(entry, dict) and "file" in entry:
        path = entry["file"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        if not os.path.exists(path):
            raise ConfigError(f"coefficient file not found: {path}")
        values, _ = read_csv(path)
        return values
    raise ConfigError(
        "coefficient must be a number, an array, or {'file': path}, got "
        f"{entry!r}"
    )


def load_nonlinearity(spec: dict, base_dir: str = ".") -> Nonlinearity:
    """Reaction term from its JSON spec: delta, order, and a term list
    of {degree, coefficient} entries."""
    if not isinstance(spec, dict):
        raise ConfigError(f"reaction-term spec must be an object, got {spec!r}")
    missing = {"delta", "order", "terms"} - set(spec)
    if missing:
        raise ConfigError(
            f"reaction-term spec missing keys: {sorted(missing)}"
        )
    terms = []
    for entry in spec["terms"]:
        if not isinstance(entry, dict) or "degree" not in entry \
                or "coefficient" not in entry:
            raise ConfigError(
                "each reaction term needs 'degree' and 'coefficient', got "
                f"{entry!r}"
            )
        terms.append(
            (entry["degree"], load_coefficient(entry["coefficient"], base_dir))
        )
    return make_polynomial_q(terms, delta=spec["delta"], m=spec["order"])
