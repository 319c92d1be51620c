"""Execute a ``RunConfig`` over many seeds and write the results.

Trajectory ``t`` of every sweep cell uses seed ``seed_base + t`` (a paired
design across cells).  Tasks may run in worker processes in any order; rows
are merged by ``(cell, trajectory)`` so the numeric payload never depends
on the worker count.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, ensembles, experiments
from .config import RunConfig, parse_observable
from .spin_model import HermitianOperator, collective_operator, identity, site_operator
from .xjump import XJumpConfig

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1"
WORKERS_ENV = "XJUMP_WORKERS"
_KEY_FIELDS = ("cell", "trajectory", "seed")


class RunError(RuntimeError):
    """Every trajectory of a run failed."""


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        log.warning("ignoring non-integer %s=%r", WORKERS_ENV, raw)
        return 1


# ---------------------------------------------------------------- trajectory level


def resolve_observable(spec: str, prep: experiments.Prepared) -> HermitianOperator:
    n = prep.system.n_spins
    kind, site = parse_observable(spec, n)
    if kind == "identity":
        return identity(prep.system.dim)
    if kind == "hamiltonian":
        return prep.hamiltonian
    if site is None:
        return collective_operator(n, kind)
    return site_operator(n, site, kind)


def resolve_initial(spec, system):
    if spec is None:
        return None
    if isinstance(spec, str):
        spins = experiments.neel_string(system.n_spins) if spec == "neel" else spec
        return experiments.product_state(system, spins)
    return experiments.superposition(system, [(s, w) for s, w in spec])


def _cell_jumps(jumps: XJumpConfig, cell: dict) -> XJumpConfig:
    rate = cell.get("per_particle_rate", jumps.per_particle_rate)
    cfg = jumps.with_rate(rate)
    if "shell_half_width" in cell:
        cfg = XJumpConfig(
            cfg.per_particle_rate, cell["shell_half_width"], None, cfg.mechanism, cfg.rate_coupling
        )
    return cfg


def _run_ensemble(p: dict) -> dict:
    levels = ensembles.LevelSpec(tuple(p["levels"]), p["degeneracies"] and tuple(p["degeneracies"]))
    n = p["n_particles"]
    beta = p["beta"] if p["beta"] is not None else ensembles.solve_beta(levels, n, p["e_target"])
    thermo = ensembles.partition_values(levels, n, beta)
    out = {
        "beta": thermo.beta,
        "z1": thermo.z1,
        "log_z": thermo.log_z,
        "log_z_labeled": thermo.log_z_labeled,
        "free_energy": thermo.free_energy,
        "internal_energy": thermo.internal_energy,
    }
    for i, w in enumerate(ensembles.particle_level_probability(levels, beta)):
        out[f"W[{i}]"] = float(w)
    for i, occ in enumerate(ensembles.boltzmann_profile(levels, n, beta).occupations):
        out[f"n[{i}]"] = occ
    return out


def run_trajectory(config: RunConfig, cell_index: int, trajectory: int) -> dict:
    """Outputs of one (cell, trajectory) task as a flat dict of scalars."""
    cell = config.cells[cell_index]
    p = {**config.params, **{k: v for k, v in cell.items() if k in config.params}}
    seed = config.seed_base + trajectory
    if config.experiment == "ensemble":
        return _run_ensemble(p)

    system = config.system
    prep = experiments.prepare(system)
    jumps = _cell_jumps(config.jumps, cell)

    if config.experiment == "echo":
        r = experiments.echo_experiment(
            system,
            resolve_initial(p["initial"], system),
            p["forward_time"],
            p["reversal_epsilon"],
            jumps,
            seed,
            resolve_observable(p["observable"], prep),
        )
        return {"fidelity": r.fidelity, "observable_recovery": r.observable_recovery, "n_jumps": r.n_jumps}

    if config.experiment == "equilibrate":
        r = experiments.equilibration_experiment(
            system, resolve_initial(p["initial"], system), p["total_time"], p["n_samples"], jumps, seed
        )
        return {
            "final_divergence": r.final_divergence,
            "shell_weight_drift": r.shell_weight_drift,
            "shell_size": int(r.shell.size),
            "n_jumps": r.n_jumps,
        }

    if config.experiment == "boltzmann-check":
        r = experiments.boltzmann_trajectory(
            system,
            jumps,
            p["e_target"],
            p["total_time"],
            seed,
            resolve_initial(p["initial"], system),
            p["n_samples"],
            p["burn_in"],
        )
        out = {
            "distance": r.distance,
            "initial_distance": r.initial_distance,
            "beta": r.beta,
            "n_jumps": r.n_jumps,
        }
        for i, pop in enumerate(r.populations):
            out[f"upper[{i}]"] = float(pop)
        return out

    if config.experiment == "correlate":
        series = experiments.correlation_experiment(
            system,
            resolve_observable(p["f"], prep),
            resolve_observable(p["g"], prep),
            p["lags"],
            jumps,
            p["trajectory_time"],
            seed,
            resolve_initial(p["initial"], system),
            p["dt"],
            p["burn_in"],
        )
        return {f"R[{i}]": float(v) for i, v in enumerate(series.values)}

    if config.experiment == "ergodicity":
        r = experiments.ergodicity_check(
            system,
            resolve_observable(p["observable"], prep),
            jumps,
            p["trajectory_time"],
            seed,
            resolve_initial(p["initial"], system),
            p["n_samples"],
            p["burn_in"],
        )
        return {"time_average": r.time_average, "ensemble_average": r.ensemble_average, "gap": r.gap}

    raise ValueError(f"unknown experiment {config.experiment!r}")


def _task(config: RunConfig, cell_index: int, trajectory: int) -> dict:
    row = {
        "cell": cell_index,
        "trajectory": trajectory,
        "seed": config.seed_base + trajectory,
        **config.cells[cell_index],
    }
    try:
        row.update(run_trajectory(config, cell_index, trajectory))
        row["error"] = None
    except Exception as exc:  # collected per trajectory; the run decides
        log.warning("cell %d trajectory %d failed: %s", cell_index, trajectory, exc)
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


_WORKER_CONFIG: RunConfig | None = None


def _init_worker(config: RunConfig) -> None:
    global _WORKER_CONFIG
    _WORKER_CONFIG = config


def _worker_task(task: tuple[int, int]) -> dict:
    return _task(_WORKER_CONFIG, *task)


# ------------------------------------------------------------------ record + stats


@dataclass
class ResultRecord:
    experiment: str
    fingerprint: str
    config: dict
    rows: list[dict]
    aggregate: list[dict]
    tool_version: str = __version__
    metadata: dict = field(default_factory=dict)

    def payload(self) -> dict:
        """Everything except wall-clock metadata."""
        return {
            "schema_version": SCHEMA_VERSION,
            "tool_version": self.tool_version,
            "experiment": self.experiment,
            "fingerprint": self.fingerprint,
            "config": self.config,
            "trajectories": self.rows,
            "aggregate": self.aggregate,
        }

    def payload_bytes(self) -> bytes:
        return json.dumps(self.payload(), sort_keys=True, allow_nan=False).encode()

    def document(self) -> dict:
        return {**self.payload(), "metadata": self.metadata}


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def summarize(values: list[float]) -> dict:
    """Mean, sample standard deviation and count."""
    n = len(values)
    if n == 0:
        return {"mean": None, "std": None, "count": 0}
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1) if n > 1 else 0.0
    return {"mean": mean, "std": math.sqrt(var), "count": n}


def aggregate_rows(rows: list[dict], cells) -> list[dict]:
    out = []
    for c, params in enumerate(cells):
        mine = [r for r in rows if r["cell"] == c and r.get("error") is None]
        fields: list[str] = []
        for r in mine:
            for k, v in r.items():
                if k in _KEY_FIELDS or k in params or k == "error" or k in fields:
                    continue
                if v is None or _is_number(v):
                    fields.append(k)
        stats = {
            k: summarize([float(r[k]) for r in mine if _is_number(r.get(k))]) for k in fields
        }
        failed = sum(1 for r in rows if r["cell"] == c and r.get("error") is not None)
        out.append({"cell": c, "params": dict(params), "completed": len(mine), "failed": failed, "stats": stats})
    return out


def check_consistency(record: ResultRecord) -> None:
    cells = [a["params"] for a in record.aggregate]
    if aggregate_rows(record.rows, cells) != record.aggregate:
        raise RuntimeError("aggregate statistics do not match the per-trajectory rows")


# ------------------------------------------------------------------------ run/emit


def run(config: RunConfig, workers: int | None = None) -> ResultRecord:
    """Run every (cell, trajectory) task and merge deterministically."""
    workers = default_workers() if workers is None else max(1, int(workers))
    tasks = [(c, t) for c in range(len(config.cells)) for t in range(config.n_trajectories)]
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    if workers == 1 or len(tasks) <= 1:
        rows = [_task(config, c, t) for c, t in tasks]
    else:
        chunk = max(1, len(tasks) // (4 * workers))
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(config,)) as pool:
            rows = list(pool.map(_worker_task, tasks, chunksize=chunk))
    rows.sort(key=lambda r: (r["cell"], r["trajectory"]))
    if rows and all(r["error"] is not None for r in rows):
        raise RunError(f"all {len(rows)} trajectories failed; first error: {rows[0]['error']}")

    return ResultRecord(
        experiment=config.experiment,
        fingerprint=config.fingerprint(),
        config=config.settings,
        rows=rows,
        aggregate=aggregate_rows(rows, config.cells),
        metadata={
            "started_at": started.isoformat(),
            "wall_clock_seconds": time.perf_counter() - t0,
            "workers": workers,
        },
    )


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def render_csv(record: ResultRecord) -> str:
    """Header plus one row per trajectory, RFC 4180 quoting, CRLF line ends."""
    columns = ["fingerprint", *_KEY_FIELDS]
    for r in record.rows:
        columns.extend(k for k in r if k not in columns)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    writer.writerow(columns)
    for r in record.rows:
        full = {"fingerprint": record.fingerprint, **r}
        writer.writerow([_csv_cell(full.get(c)) for c in columns])
    return buf.getvalue()


def render_json(record: ResultRecord) -> str:
    return json.dumps(record.document(), indent=2, sort_keys=True, allow_nan=False) + "\n"


def emit(record: ResultRecord, fmt: str, path: str | Path) -> None:
    """Write ``record`` as csv or json after checking its internal consistency."""
    check_consistency(record)
    if fmt == "csv":
        text = render_csv(record)
    elif fmt == "json":
        text = render_json(record)
    else:
        raise ValueError(f"unknown output format {fmt!r}")
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def load_json(path: str | Path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def rows_as_array(record: ResultRecord, field_name: str, cell: int = 0) -> np.ndarray:
    """Convenience: one output column of one cell as a float array."""
    return np.array(
        [r[field_name] for r in record.rows if r["cell"] == cell and r.get("error") is None],
        dtype=float,
    )
