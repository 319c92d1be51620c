"""Run configuration: a TOML document with strict validation.

Layout::

    experiment = "echo"          # optional when one experiment section exists
    seed_base = 0
    n_trajectories = 1
    output_path = "results.json"
    output_format = "json"       # or "csv"

    [system]
    n_spins = 8
    zeeman_frequencies = 20.0    # scalar (all spins) or one value per spin
    couplings = [[0, 1, 0.5]]    # (i, j, strength) triples
    coupling_form = "secular-dipolar"
    # or: random_couplings = { scale = 1.0, seed = 7 }

    [jumps]
    per_particle_rate = 0.05
    shell_half_width = 10.0      # or { spectral_fraction = 0.05 }
    mechanism = "shell-haar"

    [echo]
    forward_time = 1.0
    [echo.sweep]
    per_particle_rate = [0.0, 0.05, 0.5]

Unknown keys are rejected with a suggestion of the closest known key.
"""

from __future__ import annotations

import difflib
import hashlib
import itertools
import json
import math
import sys
from dataclasses import dataclass, field, replace
from typing import Any, Callable

from .spin_model import COUPLING_FORMS, DEFAULT_MAX_SPINS, SpinSystem, random_couplings
from .xjump import MECHANISMS, XJumpConfig

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

EXPERIMENTS = ("echo", "equilibrate", "boltzmann-check", "correlate", "ergodicity", "ensemble")
OUTPUT_FORMATS = ("json", "csv")


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


# --------------------------------------------------------------------- field types


def _int(path, v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    return v


def _float(path, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(path, "must be finite")
    return v


def _str(path, v):
    if not isinstance(v, str):
        raise ConfigError(path, f"expected a string, got {v!r}")
    return v


def _choice(*options):
    def check(path, v):
        v = _str(path, v)
        if v not in options:
            raise ConfigError(path, f"must be one of {', '.join(options)}; got {v!r}")
        return v

    return check


def _positive(check):
    def wrapped(path, v):
        v = check(path, v)
        if not v > 0:
            raise ConfigError(path, f"must be > 0, got {v}")
        return v

    return wrapped


def _non_negative(check):
    def wrapped(path, v):
        v = check(path, v)
        if v < 0:
            raise ConfigError(path, f"must be >= 0, got {v}")
        return v

    return wrapped


def _optional(check):
    def wrapped(path, v):
        return None if v is None else check(path, v)

    return wrapped


def _float_list(path, v):
    if not isinstance(v, list) or not v:
        raise ConfigError(path, "expected a non-empty list of numbers")
    return [_float(f"{path}[{i}]", x) for i, x in enumerate(v)]


def _frequencies(path, v):
    if isinstance(v, list):
        return _float_list(path, v)
    return _float(path, v)


def _couplings(path, v):
    if not isinstance(v, list):
        raise ConfigError(path, "expected a list of [i, j, strength] triples")
    out = []
    for k, triple in enumerate(v):
        p = f"{path}[{k}]"
        if not isinstance(triple, list) or len(triple) != 3:
            raise ConfigError(p, "expected [i, j, strength]")
        out.append((_int(f"{p}[0]", triple[0]), _int(f"{p}[1]", triple[1]), _float(f"{p}[2]", triple[2])))
    return out


def _initial(path, v):
    """``"neel"``, a spin string like ``"uudd"``, or ``[[spins, weight], ...]``."""
    if isinstance(v, str):
        return v
    if isinstance(v, list) and v:
        out = []
        for k, term in enumerate(v):
            p = f"{path}[{k}]"
            if not isinstance(term, list) or len(term) != 2:
                raise ConfigError(p, "expected [spins, weight]")
            weight = _non_negative(_float)(f"{p}[1]", term[1])
            out.append([_str(f"{p}[0]", term[0]), weight])
        return out
    raise ConfigError(path, "expected a spin string or a list of [spins, weight] pairs")


def _lags(path, v):
    if isinstance(v, list):
        lags = _float_list(path, v)
        if any(b <= a for a, b in zip(lags, lags[1:])) or lags[0] < 0:
            raise ConfigError(path, "lags must be non-negative and strictly ascending")
        return lags
    if isinstance(v, dict):
        spec = _section(path, v, {"max": (_positive(_float), REQUIRED), "step": (_positive(_float), REQUIRED)})
        n = int(round(spec["max"] / spec["step"]))
        if abs(n * spec["step"] - spec["max"]) > 1e-9 * spec["max"]:
            raise ConfigError(path, "max must be a multiple of step")
        return [k * spec["step"] for k in range(n + 1)]
    raise ConfigError(path, "expected a list of lags or { max = ..., step = ... }")


REQUIRED = object()

_SYSTEM = {
    "n_spins": (_int, REQUIRED),
    "zeeman_frequencies": (_frequencies, 1.0),
    "couplings": (_couplings, []),
    "random_couplings": (None, None),
    "coupling_form": (_choice(*COUPLING_FORMS), "secular-dipolar"),
    "max_spins": (_positive(_int), DEFAULT_MAX_SPINS),
}

_RANDOM_COUPLINGS = {"scale": (_float, 1.0), "seed": (_non_negative(_int), 0)}

_JUMPS = {
    "per_particle_rate": (_non_negative(_float), 0.0),
    "shell_half_width": (None, None),
    "mechanism": (_choice(*MECHANISMS), "shell-haar"),
    "rate_coupling": (_optional(_non_negative(_float)), None),
    "seed": (_optional(_non_negative(_int)), None),
}

_OBSERVABLE = _str
_BURN_IN = _optional(_non_negative(_float))

_EXPERIMENT_FIELDS: dict[str, dict[str, tuple[Callable | None, Any]]] = {
    "echo": {
        "forward_time": (_positive(_float), 1.0),
        "reversal_epsilon": (_non_negative(_float), 0.0),
        "initial": (_initial, "neel"),
        "observable": (_OBSERVABLE, "z0"),
    },
    "equilibrate": {
        "total_time": (_positive(_float), REQUIRED),
        "n_samples": (_int, 1000),
        "initial": (_initial, "neel"),
    },
    "boltzmann-check": {
        "e_target": (_float, REQUIRED),
        "total_time": (_positive(_float), REQUIRED),
        "n_samples": (_int, 2000),
        "burn_in": (_BURN_IN, None),
        "initial": (_optional(_initial), None),
    },
    "correlate": {
        "f": (_OBSERVABLE, "z0"),
        "g": (_OBSERVABLE, "z0"),
        "lags": (_lags, REQUIRED),
        "dt": (_optional(_positive(_float)), None),
        "trajectory_time": (_positive(_float), REQUIRED),
        "burn_in": (_BURN_IN, None),
        "initial": (_initial, "neel"),
    },
    "ergodicity": {
        "observable": (_OBSERVABLE, "z0"),
        "trajectory_time": (_positive(_float), REQUIRED),
        "n_samples": (_int, 2000),
        "burn_in": (_BURN_IN, None),
        "initial": (_initial, "neel"),
    },
    "ensemble": {
        "levels": (_float_list, REQUIRED),
        "degeneracies": (None, None),
        "n_particles": (_positive(_int), REQUIRED),
        "beta": (_optional(_float), None),
        "e_target": (_optional(_float), None),
    },
}

SWEEPABLE = {
    "echo": ("forward_time", "reversal_epsilon"),
    "equilibrate": ("total_time",),
    "boltzmann-check": ("e_target", "total_time"),
    "correlate": ("trajectory_time",),
    "ergodicity": ("trajectory_time",),
    "ensemble": ("beta", "e_target"),
}

_TOP = {
    "experiment": (_choice(*EXPERIMENTS), None),
    "seed_base": (_optional(_non_negative(_int)), None),
    "n_trajectories": (_positive(_int), 1),
    "output_path": (_str, "results.json"),
    "output_format": (_choice(*OUTPUT_FORMATS), "json"),
}


def _unknown_key(path: str, key: str, known) -> ConfigError:
    where = f"{path}.{key}" if path else key
    close = difflib.get_close_matches(key, list(known), n=1, cutoff=0.6)
    hint = f"; did you mean {close[0]!r}?" if close else ""
    return ConfigError(where, f"unknown key{hint}")


def _section(path: str, raw: Any, schema: dict) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected a table")
    for key in raw:
        if key not in schema:
            raise _unknown_key(path, key, schema)
    out = {}
    for key, (check, default) in schema.items():
        p = f"{path}.{key}" if path else key
        if key in raw:
            out[key] = raw[key] if check is None else check(p, raw[key])
        elif default is REQUIRED:
            raise ConfigError(p, "required field is missing")
        else:
            out[key] = default
    return out


# -------------------------------------------------------------------------- objects


@dataclass(frozen=True)
class RunConfig:
    """A validated run description; ``settings`` holds the canonical dict."""

    experiment: str
    system: SpinSystem | None
    jumps: XJumpConfig
    params: dict
    cells: tuple[dict, ...]
    seed_base: int
    n_trajectories: int
    output_path: str
    output_format: str
    settings: dict = field(repr=False)

    def fingerprint(self) -> str:
        """SHA-256 of the canonical settings (output destination excluded)."""
        canon = {k: v for k, v in self.settings.items() if k not in ("output_path", "output_format")}
        blob = json.dumps(canon, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, **changes) -> RunConfig:
        """Copy with top-level fields replaced; ``None`` values are ignored."""
        allowed = {"seed_base", "n_trajectories", "output_path", "output_format"}
        settings = json.loads(json.dumps(self.settings))
        updates = {}
        for key, value in changes.items():
            if key not in allowed:
                raise _unknown_key("", key, allowed)
            if value is None:
                continue
            value = _TOP[key][0](key, value)
            settings[key] = value
            updates[key] = value
        if "seed_base" in updates:
            settings["jumps"]["seed"] = updates["seed_base"]
        return replace(self, settings=settings, **updates)


def _build_system(s: dict) -> SpinSystem:
    n = s["n_spins"]
    if n < 1:
        raise ConfigError("system.n_spins", f"must be >= 1, got {n}")
    if n > s["max_spins"]:
        raise ConfigError("system.n_spins", f"{n} exceeds max_spins={s['max_spins']}")
    freqs = s["zeeman_frequencies"]
    if isinstance(freqs, list) and len(freqs) != n:
        raise ConfigError("system.zeeman_frequencies", f"expected {n} values, got {len(freqs)}")
    if s["random_couplings"] is not None:
        if s["couplings"]:
            raise ConfigError("system.random_couplings", "cannot be combined with system.couplings")
        rc = _section("system.random_couplings", s["random_couplings"], _RANDOM_COUPLINGS)
        s["random_couplings"] = rc
        couplings = random_couplings(n, rc["scale"], rc["seed"])
    else:
        couplings = {}
        for k, (i, j, strength) in enumerate(s["couplings"]):
            p = f"system.couplings[{k}]"
            if i == j:
                raise ConfigError(p, "self-coupling is not allowed")
            if not (0 <= i < n and 0 <= j < n):
                raise ConfigError(p, f"spin index outside 0..{n - 1}")
            key = (min(i, j), max(i, j))
            if key in couplings and couplings[key] != strength:
                raise ConfigError(p, f"conflicts with an earlier entry for pair {key}")
            couplings[key] = strength
    try:
        return SpinSystem(n, freqs, couplings, s["coupling_form"], s["max_spins"])
    except ValueError as exc:
        raise ConfigError("system", str(exc)) from exc


def _shell_width(path: str, v) -> dict:
    if v is None:
        return {"spectral_fraction": 0.05}
    if isinstance(v, dict):
        spec = _section(path, v, {"spectral_fraction": (_positive(_float), REQUIRED)})
        return spec
    return {"absolute": _positive(_float)(path, v)}


def _build_jumps(j: dict) -> XJumpConfig:
    width = j["shell_half_width"]
    return XJumpConfig(
        per_particle_rate=j["per_particle_rate"],
        shell_half_width=width.get("absolute"),
        spectral_fraction=width.get("spectral_fraction"),
        mechanism=j["mechanism"],
        rate_coupling=j["rate_coupling"],
    )


def _sweep_cells(path: str, raw: Any, allowed: dict) -> list[dict]:
    if raw is None:
        return [{}]
    if not isinstance(raw, dict) or not raw:
        raise ConfigError(path, "expected a table of parameter = [values]")
    axes = []
    for key, values in raw.items():
        if key not in allowed:
            raise _unknown_key(path, key, allowed)
        p = f"{path}.{key}"
        if not isinstance(values, list) or not values:
            raise ConfigError(p, "expected a non-empty list of values")
        check = allowed[key]
        axes.append([(key, check(f"{p}[{i}]", v)) for i, v in enumerate(values)])
    return [dict(combo) for combo in itertools.product(*axes)]


def _select_experiment(doc: dict, experiment: str | None) -> str:
    present = [name for name in EXPERIMENTS if name in doc]
    chosen = experiment or doc.get("experiment")
    if chosen is None:
        if len(present) != 1:
            raise ConfigError(
                "experiment",
                "select exactly one experiment (subcommand or top-level 'experiment' key); "
                f"sections present: {present or 'none'}",
            )
        chosen = present[0]
    if chosen not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {chosen!r}")
    return chosen


def _build(doc: dict, experiment: str | None = None) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("", "configuration must be a table")
    chosen = _select_experiment(doc, experiment)
    known = set(_TOP) | {"system", "jumps"} | set(EXPERIMENTS)
    for key in doc:
        if key not in known:
            raise _unknown_key("", key, known)

    top = _section("", {k: doc[k] for k in _TOP if k in doc}, _TOP)
    settings: dict[str, Any] = dict(top)
    settings["experiment"] = chosen

    system = None
    if chosen != "ensemble" or "system" in doc:
        if "system" not in doc:
            raise ConfigError("system", "required section is missing")
        sys_settings = _section("system", doc["system"], _SYSTEM)
        system = _build_system(sys_settings)
        settings["system"] = sys_settings

    jumps_raw = doc.get("jumps", {})
    jump_settings = _section("jumps", jumps_raw, _JUMPS)
    jump_settings["shell_half_width"] = _shell_width("jumps.shell_half_width", jump_settings["shell_half_width"])
    settings["jumps"] = jump_settings
    jumps = _build_jumps(jump_settings)

    seed_base = top["seed_base"]
    if jump_settings["seed"] is not None:
        if seed_base is not None and seed_base != jump_settings["seed"]:
            raise ConfigError("jumps.seed", f"conflicts with seed_base={seed_base}")
        seed_base = jump_settings["seed"]
    settings["seed_base"] = seed_base = 0 if seed_base is None else seed_base
    jump_settings["seed"] = seed_base

    schema = dict(_EXPERIMENT_FIELDS[chosen])
    schema["sweep"] = (None, None)
    exp_settings = _section(chosen, doc.get(chosen, {}), schema)
    sweepable = {k: _EXPERIMENT_FIELDS[chosen][k][0] for k in SWEEPABLE[chosen]}
    if chosen != "ensemble":
        sweepable["per_particle_rate"] = _non_negative(_float)
        sweepable["shell_half_width"] = _positive(_float)
    cells = _sweep_cells(f"{chosen}.sweep", exp_settings.pop("sweep"), sweepable)
    settings[chosen] = exp_settings
    settings["sweep"] = cells

    _validate_experiment(chosen, exp_settings, system)

    return RunConfig(
        experiment=chosen,
        system=system,
        jumps=jumps,
        params=exp_settings,
        cells=tuple(cells),
        seed_base=seed_base,
        n_trajectories=top["n_trajectories"],
        output_path=top["output_path"],
        output_format=top["output_format"],
        settings=settings,
    )


def _validate_experiment(name: str, p: dict, system: SpinSystem | None) -> None:
    if "n_samples" in p and p["n_samples"] < 2:
        raise ConfigError(f"{name}.n_samples", "must be at least 2")
    if system is not None:
        for key in ("initial",):
            init = p.get(key)
            strings = [init] if isinstance(init, str) else [t[0] for t in init or []]
            for spins in strings:
                if spins == "neel":
                    continue
                if len(spins) != system.n_spins or set(spins.lower()) - set("ud01"):
                    raise ConfigError(
                        f"{name}.{key}", f"{spins!r} is not a {system.n_spins}-spin string of u/d"
                    )
        for key in ("observable", "f", "g"):
            if key in p:
                try:
                    parse_observable(p[key], system.n_spins)
                except ValueError as exc:
                    raise ConfigError(f"{name}.{key}", str(exc)) from exc
    if name == "ensemble":
        n_levels = len(p["levels"])
        if n_levels < 2 or any(b <= a for a, b in zip(p["levels"], p["levels"][1:])):
            raise ConfigError("ensemble.levels", "need at least two strictly ascending energies")
        degs = p["degeneracies"]
        if degs is not None:
            if not isinstance(degs, list) or len(degs) != n_levels:
                raise ConfigError("ensemble.degeneracies", f"expected {n_levels} positive integers")
            for i, g in enumerate(degs):
                if _int(f"ensemble.degeneracies[{i}]", g) < 1:
                    raise ConfigError(f"ensemble.degeneracies[{i}]", "must be >= 1")
        if (p["beta"] is None) == (p["e_target"] is None):
            raise ConfigError("ensemble", "give exactly one of beta or e_target")


def parse_observable(spec: str, n_spins: int) -> tuple[str, int | None]:
    """Decode ``"z0"`` (site), ``"z"`` (collective), ``"identity"``, ``"hamiltonian"``."""
    s = spec.strip().lower()
    if s in ("identity", "hamiltonian"):
        return s, None
    if s in ("x", "y", "z"):
        return s, None
    if len(s) >= 2 and s[0] in "xyz" and s[1:].isdigit():
        site = int(s[1:])
        if site >= n_spins:
            raise ValueError(f"site {site} outside 0..{n_spins - 1}")
        return s[0], site
    raise ValueError(f"unknown observable {spec!r}; use e.g. 'z0', 'z', 'identity', 'hamiltonian'")


def parse_config(text: str, experiment: str | None = None) -> RunConfig:
    """Parse and validate a TOML run document.

    Raises ``ConfigError`` for syntax errors (with line and column) and for
    any schema violation (with the field path).
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("", f"syntax error: {exc}") from exc
    return _build(doc, experiment)
