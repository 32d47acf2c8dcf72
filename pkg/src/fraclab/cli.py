"""Batch front-end: one binary, one subcommand per experiment task.

An experiment is described by a JSON config naming the lattice, the
operator order, the equation, and a task block; the command line picks
the task and may override the output directory, the seed, the worker
count, and (for recovery) the synthetic noise level.  Every run writes
its numeric artifacts as CSV files with a provenance comment line plus
JSON sidecars, a ``report.json`` summary, and static PNG figures; all
writes are temp-then-rename so readers never see partial files.

Exit codes
----------
0   the task completed (for ``verify``: every check passed).
1   a certified-model or solver error stopped the run; the failure is
    recorded as ``error.json`` in the output directory and echoed to
    stderr as one JSON line.
2   the configuration itself is malformed or out of range; the error
    goes to stderr as one JSON line and nothing is written.

Determinism: for a fixed config and seed the numeric outputs are
bitwise identical from run to run; ``--threads`` only spreads
independent sub-tasks (stencil measurements, mixed differences) over a
pool and never changes any result.  The provenance stamped into every
file holds the package and library versions, the seed, and a digest of
the resolved configuration — excluding the output path and the worker
count, which do not touch the numbers.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import heat, wave
from .errors import ConfigError, FraclabError, SmallnessError
from .fracop import assemble, ext_norm
from .grid import Grid, SpaceTimeField, TimeGrid, build_grid, make_bump
from .inverse import (
    DNOracle,
    RecoveryConfig,
    make_recovery_tuples,
    make_synthetic_oracle,
    product_of_first_fields,
    recover_all,
    stack_scale,
)
from .linearize import (
    EQUATIONS,
    DNData,
    Model,
    default_step,
    dn_map,
    dn_of_input,
    linearized_solution,
    make_family,
    mixed_difference_dn,
)
from .runge import MAX_BASIS_SIZE, ControlBasis, approximate, build_basis, forward_map
from .serialize import (
    array_digest,
    canonical_digest,
    load_coefficient,
    load_nonlinearity,
    make_provenance,
    read_csv,
    read_json,
    write_csv,
    write_dn_data,
    write_field,
    write_json,
)

TASKS = (
    "solve-heat", "solve-wave", "dn", "linearize", "runge", "recover",
    "verify",
)

_TASK_HELP = {
    "solve-heat": "integrate the reaction-diffusion problem driven by exterior data",
    "solve-wave": "integrate the reaction-wave problem driven by exterior data",
    "dn": "measure the exterior response of the nonlinear solution",
    "linearize": "compare mixed differences of the measurement with direct linearized solves",
    "runge": "synthesize exterior controls approximating an interior target",
    "recover": "reconstruct reaction-term jets from a measurement oracle",
    "verify": "run the invariant suite and report one line per check",
}


# ---------------------------------------------------------------------------
# small utilities


def jsonable(obj):
    """Recursively convert numpy scalars/arrays and int keys for JSON."""
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, dict):
        return {str(key): jsonable(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(value) for value in obj]
    return obj


def parallel_map(fn, items, threads: int = 1) -> list:
    """Map ``fn`` over ``items``, optionally on a thread pool.

    Results are collected in input order, so the output is identical to
    the sequential map regardless of the worker count.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, item) for item in items]
        return [future.result() for future in futures]


def _warn(message: str) -> None:
    print(f"warning: {message}", file=sys.stderr)


def _read_json_file(path: str, what: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"{what} not found: {path}")
    try:
        payload = read_json(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"could not parse {what} {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"{what} {path} must hold a JSON object")
    return payload


def _need_block(raw: dict, key: str) -> dict:
    block = raw.get(key)
    if not isinstance(block, dict):
        raise ConfigError(f"config needs a {key!r} object block")
    return block


def _number(block: dict, key: str, label: str) -> float:
    value = block.get(key)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{label} must set {key!r} to a number, got {value!r}")
    return float(value)


def _integer(block: dict, key: str, label: str) -> int:
    value = block.get(key)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{label} must set {key!r} to an integer, got {value!r}")
    return int(value)


def _pair(block: dict, key: str, label: str) -> tuple[float, float]:
    value = block.get(key)
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)
    ):
        raise ConfigError(
            f"{label} must set {key!r} to a two-number interval, got {value!r}"
        )
    return float(value[0]), float(value[1])


# ---------------------------------------------------------------------------
# configuration loading


@dataclass
class Setting:
    """A fully validated run: resolved objects plus the hash payload.

    ``payload`` is the content that defines the numbers — task, lattice,
    operator order, equation, seed, noise, and digests of every loaded
    file — and is what the provenance config hash covers.  The output
    directory and worker count are deliberately excluded.
    """

    task: str
    payload: dict
    out_dir: str | None
    seed: int
    threads: int
    base_dir: str
    provenance: dict
    grid: Grid | None = None
    timegrid: TimeGrid | None = None
    op: object = None
    q: object = None
    equation: str = "heat"
    fields: dict = field(default_factory=dict)


def _bump_spec(spec: dict, grid: Grid, timegrid: TimeGrid, label: str):
    block = spec["bump"]
    if not isinstance(block, dict):
        raise ConfigError(f"{label}: 'bump' must be an object")
    required = {"center", "radius", "t_on", "t_off"}
    missing = required - set(block)
    if missing:
        raise ConfigError(f"{label}: bump spec missing keys {sorted(missing)}")
    params = {key: _number(block, key, f"{label} bump") for key in required}
    params["amplitude"] = (
        _number(block, "amplitude", f"{label} bump")
        if "amplitude" in block else 1.0
    )
    try:
        bump = make_bump(grid, timegrid, **params)
    except FraclabError as exc:
        raise ConfigError(f"{label}: {exc}") from exc
    return bump, {"bump": params}


def _file_field(spec: dict, grid: Grid, timegrid: TimeGrid, base_dir: str,
                label: str):
    path = spec["file"]
    if not isinstance(path, str):
        raise ConfigError(f"{label}: 'file' must be a path string")
    if not os.path.isabs(path):
        path = os.path.join(base_dir, path)
    if not os.path.exists(path):
        raise ConfigError(f"{label}: field file not found: {path}")
    try:
        values, _ = read_csv(path)
    except (OSError, ValueError, FraclabError) as exc:
        raise ConfigError(f"{label}: could not read {path}: {exc}") from exc
    expected = (timegrid.n_steps + 1, grid.n_points)
    if values.shape != expected:
        raise ConfigError(
            f"{label}: field file {path} has shape {values.shape}, "
            f"expected {expected}"
        )
    descriptor = {"file": os.path.basename(path), "digest": array_digest(values)}
    return SpaceTimeField(values=values), descriptor


def _mollifier(grid: Grid, timegrid: TimeGrid, center: float, radius: float,
               t_on: float, t_off: float, amplitude: float) -> np.ndarray:
    """The product mollifier of make_bump, restricted to the interior
    region instead of the control region (used for approximation
    targets)."""
    r = (grid.x - center) / radius
    space = np.zeros(grid.n_points)
    inside = r * r < 1.0 - 1e-12
    space[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    t = timegrid.times
    window = (t - t_on) * (t_off - t)
    time_factor = np.zeros(timegrid.n_steps + 1)
    open_window = window > 0.0
    nu = ((t_off - t_on) / 2.0) ** 2
    time_factor[open_window] = np.exp(-nu / window[open_window])
    values = amplitude * np.outer(time_factor, space)
    off_omega = np.setdiff1d(np.arange(grid.n_points), grid.omega)
    values[:, off_omega] = 0.0
    return values


def load_exterior_field(spec, grid: Grid, timegrid: TimeGrid, base_dir: str,
                        label: str):
    """An exterior input: a control-region bump or a stored field that
    vanishes on the interior region."""
    if not isinstance(spec, dict):
        raise ConfigError(f"{label} must be an object with 'bump' or 'file'")
    if "bump" in spec:
        return _bump_spec(spec, grid, timegrid, label)
    if "file" in spec:
        f, descriptor = _file_field(spec, grid, timegrid, base_dir, label)
        if np.any(f.values[:, grid.omega] != 0.0):
            raise ConfigError(
                f"{label}: exterior data must vanish on the interior region"
            )
        if np.any(f.values[0] != 0.0):
            raise ConfigError(f"{label}: exterior data must vanish at t = 0")
        return f, descriptor
    raise ConfigError(f"{label} must contain 'bump' or 'file', got {sorted(spec)}")


def load_target_field(spec, grid: Grid, timegrid: TimeGrid, base_dir: str,
                      op, potential, label: str):
    """An approximation target: a stored field, an interior mollifier,
    or the interior trace of the free solve driven by a control bump
    (an in-span target by construction)."""
    if not isinstance(spec, dict):
        raise ConfigError(
            f"{label} must be an object with 'file', 'mollifier', or 'forward'"
        )
    if "file" in spec:
        return _file_field(spec, grid, timegrid, base_dir, label)
    if "mollifier" in spec:
        block = spec["mollifier"]
        if not isinstance(block, dict):
            raise ConfigError(f"{label}: 'mollifier' must be an object")
        required = {"center", "radius", "t_on", "t_off"}
        missing = required - set(block)
        if missing:
            raise ConfigError(
                f"{label}: mollifier spec missing keys {sorted(missing)}"
            )
        params = {key: _number(block, key, f"{label} mollifier") for key in required}
        params["amplitude"] = (
            _number(block, "amplitude", f"{label} mollifier")
            if "amplitude" in block else 1.0
        )
        if params["radius"] <= 0.0:
            raise ConfigError(f"{label}: mollifier radius must be positive")
        values = _mollifier(grid, timegrid, **params)
        return SpaceTimeField(values=values), {"mollifier": params}
    if "forward" in spec:
        bump, descriptor = _bump_spec({"bump": spec["forward"]}, grid,
                                      timegrid, label)
        target = forward_map(op, potential, bump, timegrid)
        return target, {"forward": descriptor["bump"]}
    raise ConfigError(
        f"{label} must contain 'file', 'mollifier', or 'forward', got {sorted(spec)}"
    )


def load_reaction(spec, base_dir: str, label: str = "reaction"):
    """A reaction-term spec, inline or behind ``{"file": path}``.

    Returns the term and a hash descriptor in which file-backed
    coefficients are replaced by content digests.
    """
    from_file = None
    if isinstance(spec, dict) and set(spec) == {"file"}:
        path = spec["file"]
        if not isinstance(path, str):
            raise ConfigError(f"{label}: 'file' must be a path string")
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        spec = _read_json_file(path, f"{label} file")
        base_dir = os.path.dirname(os.path.abspath(path))
        from_file = os.path.basename(path)
    try:
        q = load_nonlinearity(spec, base_dir)
    except FraclabError:
        raise
    except Exception as exc:  # malformed numbers inside the spec
        raise ConfigError(f"{label}: {exc}") from exc
    descriptor = {"delta": float(spec["delta"]), "order": int(spec["order"])}
    terms = []
    for entry in spec["terms"]:
        given = entry["coefficient"]
        if isinstance(given, dict):
            coeff = load_coefficient(given, base_dir)
            terms.append({
                "degree": int(entry["degree"]),
                "coefficient": {
                    "file": os.path.basename(str(given.get("file", ""))),
                    "digest": array_digest(coeff),
                },
            })
        else:
            terms.append({
                "degree": int(entry["degree"]),
                "coefficient": jsonable(given),
            })
    descriptor["terms"] = terms
    if from_file is not None:
        descriptor["from_file"] = from_file
    return q, descriptor


def _load_measurement_store(data_dir: str, grid: Grid, timegrid: TimeGrid):
    """Index a directory of stored measurements by their input digest."""
    store: dict[str, np.ndarray] = {}
    expected = (timegrid.n_steps + 1, grid.v_set.size)
    for name in sorted(os.listdir(data_dir)):
        if not name.endswith(".json"):
            continue
        meta = _read_json_file(
            os.path.join(data_dir, name), "measurement sidecar"
        )
        if meta.get("kind") != "dn-data" or "input_hash" not in meta:
            continue
        csv_path = os.path.join(data_dir, name[:-5] + ".csv")
        if not os.path.exists(csv_path):
            raise ConfigError(
                f"measurement sidecar {name} has no matching data file"
            )
        try:
            values, _ = read_csv(csv_path)
        except (OSError, ValueError, FraclabError) as exc:
            raise ConfigError(
                f"could not read measurement file {csv_path}: {exc}"
            ) from exc
        if values.shape != expected:
            raise ConfigError(
                f"measurement file {csv_path} has shape {values.shape}, "
                f"expected {expected}"
            )
        store[str(meta["input_hash"])] = values
    if not store:
        raise ConfigError(f"no measurement records found in {data_dir}")
    return store


def _recover_block(raw: dict, base_dir: str, args, grid: Grid,
                   timegrid: TimeGrid):
    """Validate the recovery block; returns (payload block, fields)."""
    block = _need_block(raw, "recover")
    mode = block.get("mode", "synthetic")
    if mode not in ("synthetic", "external"):
        raise ConfigError(
            f"recover mode must be 'synthetic' or 'external', got {mode!r}"
        )
    order = _integer(block, "order", "recover") if "order" in block else 2
    if order < 2:
        raise ConfigError(f"recovery order must be >= 2, got {order}")
    count = _integer(block, "tuples", "recover") if "tuples" in block else 6
    if count < 1:
        raise ConfigError(f"recover needs at least one tuple, got {count}")
    budget = None
    if "budget" in block and block["budget"] is not None:
        budget = _number(block, "budget", "recover")
        if budget <= 0.0:
            raise ConfigError(f"measurement budget must be positive, got {budget}")
    noise = getattr(args, "noise", None)
    if noise is None:
        noise = _number(block, "noise", "recover") if "noise" in block else 0.0
    noise = float(noise)
    if noise < 0.0:
        raise ConfigError(f"noise level must be nonnegative, got {noise}")
    time_independent = block.get("time_independent", True)
    if not isinstance(time_independent, bool):
        raise ConfigError("recover 'time_independent' must be true or false")
    steps: dict[str, float] = {}
    for key, value in (block.get("steps") or {}).items():
        k = _order_key(key, order, "steps")
        if isinstance(value, bool) or not isinstance(value, (int, float)) \
                or value <= 0.0:
            raise ConfigError(
                f"steps[{key}] must be a positive number, got {value!r}"
            )
        steps[str(k)] = float(value)
    regularization: dict[str, object] = {}
    for key, value in (block.get("regularization") or {}).items():
        k = _order_key(key, order, "regularization")
        if isinstance(value, dict):
            if set(value) != {"relative"} or isinstance(value["relative"], bool) \
                    or not isinstance(value["relative"], (int, float)) \
                    or value["relative"] <= 0.0:
                raise ConfigError(
                    f"regularization[{key}] must be a nonnegative number or "
                    f"{{'relative': r > 0}}, got {value!r}"
                )
            regularization[str(k)] = {"relative": float(value["relative"])}
        elif isinstance(value, bool) or not isinstance(value, (int, float)) \
                or value < 0.0:
            raise ConfigError(
                f"regularization[{key}] must be a nonnegative number or "
                f"{{'relative': r > 0}}, got {value!r}"
            )
        else:
            regularization[str(k)] = float(value)
    payload = {
        "mode": mode,
        "order": order,
        "tuples": count,
        "budget": budget,
        "noise": noise,
        "time_independent": time_independent,
        "steps": steps,
        "regularization": regularization,
    }
    fields: dict = {}
    if mode == "synthetic":
        if "truth" not in block:
            raise ConfigError("synthetic recovery needs a 'truth' reaction spec")
        q_true, descriptor = load_reaction(block["truth"], base_dir, "truth")
        decoupled = block.get("decoupled", False)
        dump = block.get("dump_measurements", False)
        if not isinstance(decoupled, bool) or not isinstance(dump, bool):
            raise ConfigError(
                "recover 'decoupled' and 'dump_measurements' must be true or false"
            )
        payload.update({
            "truth": descriptor, "decoupled": decoupled,
            "dump_measurements": dump,
        })
        fields["truth_q"] = q_true
    else:
        path = block.get("data_dir")
        if not isinstance(path, str):
            raise ConfigError("external recovery needs a 'data_dir' path")
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        if not os.path.isdir(path):
            raise ConfigError(f"measurement directory not found: {path}")
        store = _load_measurement_store(path, grid, timegrid)
        payload["data"] = {
            "directory": os.path.basename(os.path.normpath(path)),
            "records": len(store),
            "digest": canonical_digest(
                {key: array_digest(values) for key, values in store.items()}
            ),
        }
        fields["store"] = store
    return payload, fields


def _order_key(key, order: int, label: str) -> int:
    try:
        k = int(key)
    except (TypeError, ValueError):
        raise ConfigError(f"{label} keys must be jet orders, got {key!r}") from None
    if not 2 <= k <= order:
        raise ConfigError(
            f"{label} order {k} outside the recovered range 2..{order}"
        )
    return k


def prepare(args) -> Setting:
    """Load, validate, and resolve the configuration.  Never writes."""
    task = args.task
    threads = args.threads if args.threads is not None else 1
    if threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {threads}")
    if args.config is None:
        if task != "verify":
            raise ConfigError("--config is required for every task except verify")
        raw: dict = {}
        base_dir = os.getcwd()
    else:
        raw = _read_json_file(args.config, "config file")
        base_dir = os.path.dirname(os.path.abspath(args.config))
    declared = raw.get("task")
    if declared is not None and declared != task:
        raise ConfigError(
            f"config declares task {declared!r} but the command line runs {task!r}"
        )
    if args.seed is not None:
        seed = int(args.seed)
    elif "seed" in raw:
        seed = _integer(raw, "seed", "config")
    else:
        seed = 0
    out_dir = args.out if args.out is not None else raw.get("output")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError(f"output directory must be a path string, got {out_dir!r}")

    if task == "verify":
        checks = "all"
        block = raw.get("verify")
        if block is not None:
            if not isinstance(block, dict):
                raise ConfigError("config 'verify' must be an object block")
            chosen = block.get("checks")
            if chosen is not None:
                if not isinstance(chosen, list) or \
                        any(not isinstance(c, str) for c in chosen):
                    raise ConfigError("verify 'checks' must be a list of names")
                checks = list(chosen)
        payload = {"task": task, "seed": seed, "checks": checks}
        return Setting(
            task=task, payload=payload, out_dir=out_dir, seed=seed,
            threads=threads, base_dir=base_dir,
            provenance=make_provenance(payload, seed),
        )

    if out_dir is None:
        raise ConfigError(
            "no output directory: set 'output' in the config or pass --out"
        )

    grid_block = _need_block(raw, "grid")
    time_block = _need_block(raw, "time")
    box = _number(grid_block, "box_halfwidth", "grid")
    n_points = _integer(grid_block, "n_points", "grid")
    omega = _pair(grid_block, "omega", "grid")
    w_interval = _pair(grid_block, "w", "grid")
    v_interval = _pair(grid_block, "v", "grid")
    horizon = _number(time_block, "horizon", "time")
    n_steps = _integer(time_block, "n_steps", "time")
    s = _number(raw, "s", "config")
    if not 0.0 < s < 1.0:
        raise ConfigError(f"operator order s must lie in (0, 1), got {s}")
    if task == "solve-heat":
        equation = "heat"
    elif task == "solve-wave":
        equation = "wave"
    else:
        equation = raw.get("equation", "heat")
    if equation not in EQUATIONS:
        raise ConfigError(f"equation must be one of {EQUATIONS}, got {equation!r}")
    if equation == "wave" and s <= 0.5:
        raise ConfigError(
            f"the wave evolution is certified only for s in (1/2, 1), got s={s}"
        )
    try:
        grid = build_grid(box, n_points, omega, w_interval, v_interval)
        timegrid = TimeGrid(horizon=horizon, n_steps=n_steps)
        op = assemble(grid, s)
    except FraclabError as exc:
        raise ConfigError(str(exc)) from exc

    payload = {
        "task": task,
        "seed": seed,
        "grid": {
            "box_halfwidth": box, "n_points": n_points,
            "omega": list(omega), "w": list(w_interval), "v": list(v_interval),
        },
        "time": {"horizon": horizon, "n_steps": n_steps},
        "s": s,
        "equation": equation,
    }
    setting = Setting(
        task=task, payload=payload, out_dir=out_dir, seed=seed,
        threads=threads, base_dir=base_dir, provenance={},
        grid=grid, timegrid=timegrid, op=op, equation=equation,
    )

    if "reaction" in raw and raw["reaction"] is not None:
        setting.q, payload["reaction"] = load_reaction(raw["reaction"], base_dir)
    if task in ("dn", "linearize") and setting.q is None:
        raise ConfigError(f"the {task} task needs a 'reaction' block")

    if task in ("solve-heat", "solve-wave", "dn"):
        if "input" not in raw:
            raise ConfigError(f"the {task} task needs an 'input' field spec")
        f, payload["input"] = load_exterior_field(
            raw["input"], grid, timegrid, base_dir, "input"
        )
        setting.fields["input"] = f
    elif task == "linearize":
        block = _need_block(raw, "linearize")
        specs = block.get("inputs")
        if not isinstance(specs, list) or not specs:
            raise ConfigError("linearize needs a nonempty 'inputs' list")
        inputs, descriptors = [], []
        for i, spec in enumerate(specs):
            g, descriptor = load_exterior_field(
                spec, grid, timegrid, base_dir, f"inputs[{i}]"
            )
            inputs.append(g)
            descriptors.append(descriptor)
        sets_raw = block.get("index_sets")
        if not isinstance(sets_raw, list) or not sets_raw:
            raise ConfigError("linearize needs a nonempty 'index_sets' list")
        index_sets = []
        for entry in sets_raw:
            if not isinstance(entry, list) or not entry or any(
                isinstance(i, bool) or not isinstance(i, int) for i in entry
            ):
                raise ConfigError(
                    f"each index set must be a nonempty list of integers, got {entry!r}"
                )
            S = sorted(set(entry))
            if S[0] < 0 or S[-1] >= len(inputs):
                raise ConfigError(
                    f"index set {entry} references inputs outside 0..{len(inputs)-1}"
                )
            index_sets.append(S)
        step = None
        if block.get("step") is not None:
            step = _number(block, "step", "linearize")
            if step <= 0.0:
                raise ConfigError(f"difference step must be positive, got {step}")
        payload["linearize"] = {
            "inputs": descriptors, "index_sets": index_sets, "step": step,
        }
        setting.fields["inputs"] = inputs
    elif task == "runge":
        block = _need_block(raw, "runge")
        sizes = block.get("basis_sizes", [4, 8, 16, 32])
        if not isinstance(sizes, list) or not sizes or any(
            isinstance(k, bool) or not isinstance(k, int) for k in sizes
        ):
            raise ConfigError("runge 'basis_sizes' must be a list of integers")
        if sorted(set(sizes)) != sizes or sizes[0] < 1 or sizes[-1] > MAX_BASIS_SIZE:
            raise ConfigError(
                f"basis sizes must be strictly increasing within 1..{MAX_BASIS_SIZE}, "
                f"got {sizes}"
            )
        reg = None
        if block.get("regularization") is not None:
            reg = _number(block, "regularization", "runge")
            if reg < 0.0:
                raise ConfigError(f"regularization must be nonnegative, got {reg}")
        potential = None
        potential_descriptor = None
        if block.get("potential") is not None:
            entry = block["potential"]
            if isinstance(entry, (int, float)) and not isinstance(entry, bool):
                values = np.zeros((timegrid.n_steps + 1, grid.n_points))
                values[:, grid.omega] = float(entry)
                potential = SpaceTimeField(values=values)
                potential_descriptor = float(entry)
            elif isinstance(entry, dict) and "file" in entry:
                potential, potential_descriptor = _file_field(
                    entry, grid, timegrid, base_dir, "potential"
                )
            else:
                raise ConfigError(
                    "runge 'potential' must be a number or {'file': path}, "
                    f"got {entry!r}"
                )
        if "target" not in block:
            raise ConfigError("runge needs a 'target' field spec")
        target, target_descriptor = load_target_field(
            block["target"], grid, timegrid, base_dir, op, potential, "target"
        )
        payload["runge"] = {
            "basis_sizes": sizes, "regularization": reg,
            "target": target_descriptor, "potential": potential_descriptor,
        }
        setting.fields.update({"target": target, "potential": potential})
    elif task == "recover":
        payload["recover"], fields = _recover_block(
            raw, base_dir, args, grid, timegrid
        )
        setting.fields.update(fields)

    setting.provenance = make_provenance(payload, seed)
    return setting


# ---------------------------------------------------------------------------
# figures


def _pyplot():
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        return plt
    except Exception as exc:  # pragma: no cover - depends on environment
        _warn(f"plotting unavailable ({exc}); skipping figures")
        return None


def emit_figure(out_dir: str, name: str, artifacts: list, draw) -> None:
    """Render one figure through ``draw(plt, fig, ax)``.

    Figure trouble is never fatal: failures print a warning and the
    numeric artifacts stand on their own.
    """
    plt = _pyplot()
    if plt is None:
        return
    try:
        fig, ax = plt.subplots(figsize=(7.0, 4.2))
        draw(plt, fig, ax)
        fig.tight_layout()
        path = os.path.join(out_dir, name)
        tmp = os.path.join(out_dir, f".{name}.tmp")
        fig.savefig(tmp, dpi=130, format="png")
        plt.close(fig)
        os.replace(tmp, path)
        artifacts.append(name)
    except Exception as exc:
        _warn(f"could not render {name}: {exc}")
        try:
            plt.close("all")
        except Exception:
            pass


def _heatmap(values: np.ndarray, grid: Grid, timegrid: TimeGrid, title: str):
    def draw(plt, fig, ax):
        image = ax.imshow(
            values, aspect="auto", origin="lower",
            extent=(float(grid.x[0]), float(grid.x[-1]), 0.0, timegrid.horizon),
        )
        ax.set_xlabel("x")
        ax.set_ylabel("t")
        ax.set_title(title)
        fig.colorbar(image, ax=ax)

    return draw


def _trace_lines(times: np.ndarray, columns: np.ndarray, labels, title: str,
                 ylabel: str):
    def draw(plt, fig, ax):
        for j in range(columns.shape[1]):
            label = labels[j] if labels and j < len(labels) else None
            ax.plot(times, columns[:, j], lw=1.0, label=label)
        ax.set_xlabel("t")
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        if labels and columns.shape[1] <= 8:
            ax.legend(fontsize=8)

    return draw


# ---------------------------------------------------------------------------
# task runners


def _write_report(setting: Setting, body: dict) -> None:
    report = {"task": setting.task, "provenance": setting.provenance}
    report.update(jsonable(body))
    write_json(os.path.join(setting.out_dir, "report.json"), report)


def run_solve(setting: Setting) -> int:
    op, grid, timegrid = setting.op, setting.grid, setting.timegrid
    f = setting.fields["input"]
    if setting.q is None:
        if setting.equation == "heat":
            u = heat.solve_linear(heat.HeatProblem(op=op, exterior=f), timegrid)
        else:
            u = wave.solve_linear_wave(
                wave.WaveProblem(op=op, exterior=f), timegrid
            )
        trace = None
    elif setting.equation == "heat":
        u, trace = heat.solve_nonlinear(op, setting.q, f, timegrid)
    else:
        u, trace = wave.solve_nonlinear_wave(op, setting.q, f, timegrid)
    artifacts = ["solution.csv", "solution.json"]
    write_field(
        setting.out_dir, "solution", u.values, grid, timegrid,
        setting.provenance, extra={"input": setting.payload["input"]},
    )
    emit_figure(
        setting.out_dir, "solution.png", artifacts,
        _heatmap(u.values, grid, timegrid, "solution u(t, x)"),
    )
    body = {
        "status": "ok",
        "artifacts": artifacts,
        "solution_sup": float(np.max(np.abs(u.values))),
    }
    if trace is not None:
        body["fixed_point"] = {
            "iterations": trace.iterations,
            "converged": trace.converged,
            "tolerance": trace.tolerance,
            "update_norms": list(trace.update_norms),
        }
    _write_report(setting, body)
    return 0


def run_dn(setting: Setting) -> int:
    op, grid, timegrid = setting.op, setting.grid, setting.timegrid
    f = setting.fields["input"]
    model = Model(op=op, q=setting.q, equation=setting.equation)
    data = dn_of_input(model, f, timegrid)
    input_hash = array_digest(f.values)
    artifacts = ["dn.csv", "dn.json"]
    write_dn_data(
        setting.out_dir, "dn", data.values, grid, timegrid,
        setting.provenance,
        extra={"input_hash": input_hash, "input": setting.payload["input"]},
    )
    labels = [f"x = {grid.x[i]:.3g}" for i in grid.v_set]
    emit_figure(
        setting.out_dir, "dn.png", artifacts,
        _trace_lines(
            timegrid.times, data.values, labels,
            "measurement traces", "operator image on the observation region",
        ),
    )
    _write_report(setting, {
        "status": "ok",
        "artifacts": artifacts,
        "input_hash": input_hash,
        "data_hash": array_digest(data.values),
        "data_sup": float(np.max(np.abs(data.values))),
    })
    return 0


def run_linearize(setting: Setting) -> int:
    op, grid, timegrid = setting.op, setting.grid, setting.timegrid
    block = setting.payload["linearize"]
    inputs = setting.fields["inputs"]
    index_sets = [tuple(S) for S in block["index_sets"]]
    model = Model(op=op, q=setting.q, equation=setting.equation)
    step = block["step"]
    if step is None:
        step = default_step(model, inputs, timegrid)

    # Direct route first: materialize every needed linearized field in
    # ascending size order (each solve consumes the fields of the
    # sub-blocks), then measure.  This part is cheap and stays serial.
    family = make_family(op, inputs, timegrid, setting.equation)
    needed = sorted(
        {
            subset
            for S in index_sets
            for size in range(2, len(S) + 1)
            for subset in combinations(S, size)
        },
        key=lambda subset: (len(subset), subset),
    )
    for subset in needed:
        linearized_solution(
            op, setting.q, subset, family, timegrid, setting.equation
        )
    direct = [
        dn_map(family.solutions[frozenset(S)], op, grid) for S in index_sets
    ]

    # The stencil route costs 2^{|S|} nonlinear solves per set; the sets
    # are independent, so they go to the worker pool.
    diffs = parallel_map(
        lambda S: mixed_difference_dn(model, inputs, S, timegrid, step),
        index_sets,
        setting.threads,
    )

    artifacts = []
    comparisons = []
    for i, (S, diff_data, direct_data) in enumerate(
        zip(index_sets, diffs, direct)
    ):
        gap = float(np.linalg.norm(diff_data.values - direct_data.values))
        direct_norm = float(np.linalg.norm(direct_data.values))
        comparisons.append({
            "indices": list(S),
            "size": len(S),
            "step": step,
            "gap": gap,
            "direct_norm": direct_norm,
            "relative_gap": gap / max(direct_norm, 1e-300),
        })
        for tag, data in (("diff", diff_data), ("direct", direct_data)):
            name = f"dn_{tag}_{i}"
            write_dn_data(
                setting.out_dir, name, data.values, grid, timegrid,
                setting.provenance, extra={"indices": list(S)},
            )
            artifacts.extend([f"{name}.csv", f"{name}.json"])

    S0 = index_sets[0]
    overlay = np.column_stack([diffs[0].values[:, 0], direct[0].values[:, 0]])
    emit_figure(
        setting.out_dir, "linearize.png", artifacts,
        _trace_lines(
            timegrid.times, overlay,
            ["mixed difference", "direct linearized"],
            f"linearized measurement along directions {list(S0)} "
            f"(first observation node)",
            "response",
        ),
    )
    _write_report(setting, {
        "status": "ok", "artifacts": artifacts, "comparisons": comparisons,
    })
    return 0


def run_runge(setting: Setting) -> int:
    op, grid, timegrid = setting.op, setting.grid, setting.timegrid
    block = setting.payload["runge"]
    sizes = block["basis_sizes"]
    target = setting.fields["target"]
    potential = setting.fields["potential"]
    basis = build_basis(op, potential, timegrid, sizes[-1])
    rows = []
    coefficients = {}
    for count in sizes:
        sub = ControlBasis(
            elements=basis.elements[:count],
            traces=basis.traces[:count],
            gram=np.ascontiguousarray(basis.gram[:count, :count]),
        )
        approx = approximate(target, sub, op, timegrid, block["regularization"])
        rows.append([float(count), approx.residual, approx.control_norm])
        coefficients[str(count)] = approx.coefficients.tolist()
    table = np.asarray(rows)
    artifacts = ["residuals.csv"]
    write_csv(
        os.path.join(setting.out_dir, "residuals.csv"), table,
        setting.provenance,
    )
    emit_figure(
        setting.out_dir, "runge.png", artifacts,
        lambda plt, fig, ax: (
            ax.semilogy(table[:, 0], table[:, 1], marker="o"),
            ax.set_xlabel("basis size"),
            ax.set_ylabel("interior approximation residual"),
            ax.set_title("control synthesis residual vs basis size"),
        ),
    )
    _write_report(setting, {
        "status": "ok",
        "artifacts": artifacts,
        "basis_sizes": sizes,
        "residuals": table[:, 1],
        "control_norms": table[:, 2],
        "coefficients": coefficients,
    })
    return 0


def _truth_profile(coeff: np.ndarray, jet: np.ndarray, grid: Grid):
    """Broadcast a stored truth coefficient onto the jet's layout, or
    None when the layouts are incompatible."""
    if jet.ndim == 1:
        if coeff.shape == (1, 1):
            return np.full(grid.n_points, coeff[0, 0])
        if coeff.shape == (1, grid.n_points):
            return coeff[0].copy()
        return None
    if coeff.shape == (1, 1):
        return np.full(jet.shape, coeff[0, 0])
    if coeff.shape == (1, jet.shape[1]):
        return np.broadcast_to(coeff, jet.shape).copy()
    if coeff.shape == jet.shape:
        return coeff.copy()
    return None


def run_recover(setting: Setting) -> int:
    op, grid, timegrid = setting.op, setting.grid, setting.timegrid
    block = setting.payload["recover"]
    equation = setting.equation
    order = block["order"]
    time_independent = block["time_independent"]
    budget = math.inf if block["budget"] is None else block["budget"]
    tuples = make_recovery_tuples(grid, timegrid, order, block["tuples"])
    steps = {int(k): v for k, v in block["steps"].items()}

    artifacts = []
    if block["mode"] == "synthetic":
        model = Model(op=op, q=setting.fields["truth_q"], equation=equation)
        oracle = make_synthetic_oracle(
            model, timegrid, budget=budget, noise=block["noise"],
            seed=setting.seed, decoupled=block["decoupled"],
        )
        if block["dump_measurements"]:
            meas_dir = os.path.join(setting.out_dir, "measurements")
            os.makedirs(meas_dir, exist_ok=True)
            inner = oracle.evaluate

            def recording(f: SpaceTimeField):
                data = inner(f)
                key = array_digest(f.values)
                write_dn_data(
                    meas_dir, f"meas_{key}", data.values, grid, timegrid,
                    setting.provenance, extra={"input_hash": key},
                )
                return data

            oracle = DNOracle(evaluate=recording, budget=oracle.budget)
    else:
        store = setting.fields["store"]

        def lookup(f: SpaceTimeField):
            size = ext_norm(f, op, grid, timegrid)
            if size > budget:
                raise SmallnessError(
                    f"oracle refuses input with exterior norm {size:.3e} "
                    f"above budget {budget:.3e}"
                )
            key = array_digest(f.values)
            if key not in store:
                raise ConfigError(
                    f"measurement store has no record for input digest {key}"
                )
            return DNData(values=store[key], provenance="stored measurement")

        oracle = DNOracle(evaluate=lookup, budget=budget)

    regularization = {}
    resolved = {}
    for key, entry in block["regularization"].items():
        k = int(key)
        if isinstance(entry, dict):
            products = [
                product_of_first_fields(op, bundle, timegrid, equation)
                for bundle in tuples[k]
            ]
            scale = stack_scale(
                products, op, timegrid, time_independent, equation
            )
            regularization[k] = entry["relative"] * scale
        else:
            regularization[k] = entry
        resolved[str(k)] = regularization[k]

    config = RecoveryConfig(
        op=op, timegrid=timegrid, order=order, tuples=tuples, steps=steps,
        regularization=regularization, time_independent=time_independent,
        equation=equation,
    )
    estimate = recover_all(oracle, config, setting.threads)

    truth_terms = {}
    if block["mode"] == "synthetic":
        truth_terms = dict(setting.fields["truth_q"].terms)
    errors = {}
    diagnostics = {}
    for k in sorted(estimate.diagnostics):
        jet = np.asarray(estimate.jets[k])
        tg_of = timegrid if jet.ndim == 2 else None
        write_field(
            setting.out_dir, f"jet_{k}", jet, grid, tg_of,
            setting.provenance,
            extra={"order": k, "time_independent": time_independent},
        )
        artifacts.extend([f"jet_{k}.csv", f"jet_{k}.json"])
        diag = estimate.diagnostics[k]
        sensitivity = np.asarray(diag.sensitivity)
        write_field(
            setting.out_dir, f"sensitivity_{k}", sensitivity, grid,
            timegrid if sensitivity.ndim == 2 else None,
            setting.provenance, extra={"order": k},
        )
        artifacts.extend([f"sensitivity_{k}.csv", f"sensitivity_{k}.json"])
        diagnostics[str(k)] = {
            "regularization": diag.regularization,
            "condition": diag.condition,
            "residual": diag.residual,
            "data_norm": diag.data_norm,
            "step": diag.step,
            "retried": diag.retried,
            "method": diag.method,
            "data_provenance": diag.data_provenance,
        }
        truth = None
        if k in truth_terms:
            truth = _truth_profile(truth_terms[k], jet, grid)
            if truth is None:
                _warn(
                    f"truth coefficient for order {k} has an incompatible "
                    f"layout; skipping the error metric"
                )
        if truth is not None:
            write_field(
                setting.out_dir, f"truth_{k}", truth, grid, tg_of,
                setting.provenance, extra={"order": k},
            )
            artifacts.extend([f"truth_{k}.csv", f"truth_{k}.json"])
            gap = np.linalg.norm((jet - truth)[..., grid.omega])
            size = np.linalg.norm(truth[..., grid.omega])
            errors[str(k)] = float(gap / size) if size > 0.0 else float(gap)
            if jet.ndim == 1:
                peak = float(np.max(np.abs(truth)))
                sens = sensitivity
                sens_peak = float(np.max(np.abs(sens))) or 1.0
                series = [
                    ("recovered", jet), ("true", truth),
                    ("sensitivity (scaled)", sens / sens_peak * peak),
                ]
                emit_figure(
                    setting.out_dir, f"overlay_{k}.png", artifacts,
                    lambda plt, fig, ax, series=series, k=k: (
                        [ax.plot(grid.x, v, lw=1.2, label=l) for l, v in series],
                        ax.set_xlabel("x"),
                        ax.set_ylabel(f"order-{k} coefficient"),
                        ax.set_title(f"recovered vs true coefficient (order {k})"),
                        ax.legend(fontsize=8),
                    ),
                )
            else:
                emit_figure(
                    setting.out_dir, f"recovered_{k}.png", artifacts,
                    _heatmap(
                        jet, grid, timegrid,
                        f"recovered order-{k} coefficient",
                    ),
                )

    summary = {
        "status": estimate.status,
        "order": order,
        "mode": block["mode"],
        "residuals": {str(k): v for k, v in estimate.residuals.items()},
        "diagnostics": diagnostics,
        "regularization_resolved": resolved,
    }
    if errors:
        summary["relative_errors"] = errors
    write_json(
        os.path.join(setting.out_dir, "estimate.json"), jsonable(summary)
    )
    artifacts.append("estimate.json")
    _write_report(setting, {
        "status": "ok" if estimate.status == "complete" else "failed",
        "artifacts": artifacts,
        "estimate": summary,
    })
    if estimate.status != "complete":
        failure = {
            "error": "RecoveryError",
            "message": estimate.status,
            "task": setting.task,
        }
        write_json(os.path.join(setting.out_dir, "error.json"), failure)
        print(json.dumps(failure), file=sys.stderr)
        return 1
    return 0


def run_verify(setting: Setting) -> int:
    from . import verify as verify_suite

    checks = setting.payload["checks"]
    names = None if checks == "all" else list(checks)
    results = verify_suite.run_suite(
        seed=setting.seed, threads=setting.threads, checks=names
    )
    for result in results:
        flag = "PASS" if result.passed else "FAIL"
        print(f"{flag}  {result.name:<28s}  {result.detail}  "
              f"({result.duration:.1f}s)")
    all_passed = all(result.passed for result in results)
    if setting.out_dir is not None:
        write_json(os.path.join(setting.out_dir, "verify_report.json"), {
            "task": "verify",
            "provenance": setting.provenance,
            "passed": all_passed,
            "checks": [
                {
                    "name": r.name, "passed": r.passed, "detail": r.detail,
                    "duration": round(r.duration, 3),
                }
                for r in results
            ],
        })
    return 0 if all_passed else 1


_RUNNERS = {
    "solve-heat": run_solve,
    "solve-wave": run_solve,
    "dn": run_dn,
    "linearize": run_linearize,
    "runge": run_runge,
    "recover": run_recover,
    "verify": run_verify,
}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fraclab",
        description=(
            "Forward solves, exterior measurements, linearization checks, "
            "control synthesis, and reaction-jet recovery for nonlocal "
            "evolution problems on a 1-d lattice."
        ),
    )
    subparsers = parser.add_subparsers(dest="task", required=True,
                                       metavar="TASK")
    for task in TASKS:
        sub = subparsers.add_parser(task, help=_TASK_HELP[task])
        sub.add_argument(
            "--config", metavar="PATH", default=None,
            help="JSON experiment description"
            + (" (optional: defaults to the built-in suite)"
               if task == "verify" else ""),
        )
        sub.add_argument(
            "--out", metavar="DIR", default=None,
            help="output directory (overrides the config)",
        )
        sub.add_argument(
            "--seed", type=int, metavar="N", default=None,
            help="seed for every random draw (overrides the config)",
        )
        sub.add_argument(
            "--threads", type=int, metavar="N", default=1,
            help="worker threads for independent sub-tasks; affects "
                 "speed only, never results",
        )
        if task == "recover":
            sub.add_argument(
                "--noise", type=float, metavar="SIGMA", default=None,
                help="synthetic measurement noise level (overrides the config)",
            )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        setting = prepare(args)
    except ConfigError as exc:
        print(
            json.dumps({
                "error": type(exc).__name__,
                "message": str(exc),
                "task": args.task,
            }),
            file=sys.stderr,
        )
        return 2
    if setting.out_dir is not None:
        os.makedirs(setting.out_dir, exist_ok=True)
    try:
        return _RUNNERS[setting.task](setting)
    except FraclabError as exc:
        failure = {
            "error": type(exc).__name__,
            "message": str(exc),
            "task": setting.task,
        }
        if setting.out_dir is not None:
            write_json(os.path.join(setting.out_dir, "error.json"), failure)
        print(json.dumps(failure), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
