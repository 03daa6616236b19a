"""Experiment configuration: parsing and range checks with line-precise messages."""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field, fields

COMMANDS = ("enumerate", "sync-times", "lyapunov", "invariant", "taylor", "intermittency", "omega-sets", "pbn")

REQUIRED = {
    "enumerate": ("k",),
    "sync-times": ("k", "seed", "m"),
    "lyapunov": ("k", "seed", "epsilon_grid", "horizon"),
    "invariant": ("k", "seed", "epsilon_grid"),
    "taylor": ("k", "seed", "epsilon_grid", "m"),
    "intermittency": ("k", "seed", "epsilon_grid", "horizon"),
    "omega-sets": ("k", "seed", "m", "n_seeds"),
    "pbn": ("g", "contexts", "seed", "epsilon_grid"),
}


@dataclass
class ExperimentConfig:
    command: str
    k: int | None = None
    seed: int = 0
    epsilon_grid: list[float] = field(default_factory=list)
    horizon: int | None = None
    m: int | None = None
    depth_cap: int = 10_000
    tol: float = 1e-12
    zero_fraction: float = 0.0
    magnitude: float | None = None
    output_path: str | None = None
    n_seeds: int = 1000
    cap: int = 10_000
    orbit_length: int = 100_000
    n_samples: int = 0
    g: int | None = None
    contexts: int | None = None
    alphabet: str | dict | None = None
    perturbation: str | dict | None = None
    zero_ranks: list[int] = field(default_factory=list)
    vector: list[float] | None = None

    def to_json(self) -> dict:
        return asdict(self)


_FIELDS = {f.name for f in fields(ExperimentConfig)}

_INT_GE = {
    "k": 2, "seed": 0, "horizon": 1, "m": 1, "depth_cap": 1, "n_seeds": 1, "cap": 1,
    "orbit_length": 1, "n_samples": 0, "g": 1, "contexts": 1,
}


def _line_of(raw: str, key: str) -> str:
    match = re.search(r'"%s"\s*:' % re.escape(key), raw)
    if match is None:
        return f"field '{key}'"
    return f"line {raw.count(chr(10), 0, match.start()) + 1}: field '{key}'"


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _check(obj: dict, raw: str) -> list[str]:
    out = []
    where = lambda key: _line_of(raw, key)  # noqa: E731

    command = obj.get("command")
    if command is None:
        out.append("missing field 'command'")
    elif command not in COMMANDS:
        out.append(f"{where('command')}: unknown command {command!r}, expected one of {', '.join(COMMANDS)}")
    for key in obj:
        if key not in _FIELDS:
            out.append(f"{where(key)}: unknown field")
    for key, low in _INT_GE.items():
        if key in obj and obj[key] is not None and (not _is_int(obj[key]) or obj[key] < low):
            out.append(f"{where(key)}: must be an integer >= {low}")
    if "epsilon_grid" in obj:
        grid = obj["epsilon_grid"]
        if not isinstance(grid, list) or not grid or not all(_is_num(e) for e in grid):
            out.append(f"{where('epsilon_grid')}: must be a non-empty list of numbers")
        elif any(e <= 0 for e in grid):
            out.append(f"{where('epsilon_grid')}: values must be strictly positive (eps = 0 is the deterministic path)")
        elif any(b <= a for a, b in zip(grid, grid[1:])):
            out.append(f"{where('epsilon_grid')}: values must be strictly increasing")
    if "tol" in obj and (not _is_num(obj["tol"]) or obj["tol"] <= 0):
        out.append(f"{where('tol')}: must be a positive number")
    if "zero_fraction" in obj and (not _is_num(obj["zero_fraction"]) or not 0 <= obj["zero_fraction"] <= 1):
        out.append(f"{where('zero_fraction')}: must lie in [0, 1]")
    if "magnitude" in obj and obj["magnitude"] is not None:
        mag, k = obj["magnitude"], obj.get("k")
        if not _is_num(mag) or mag <= 0 or (_is_int(k) and k >= 2 and mag > 1 / k):
            out.append(f"{where('magnitude')}: must lie in (0, 1/k]")
    if "zero_ranks" in obj:
        zr = obj["zero_ranks"]
        if not isinstance(zr, list) or not all(_is_int(r) and r >= 1 for r in zr):
            out.append(f"{where('zero_ranks')}: must be a list of ranks >= 1")
    if "vector" in obj and obj["vector"] is not None:
        v = obj["vector"]
        if not isinstance(v, list) or not all(_is_num(x) for x in v) or not any(v):
            out.append(f"{where('vector')}: must be a non-zero list of numbers")
        elif _is_int(obj.get("k")) and len(v) != obj["k"]:
            out.append(f"{where('vector')}: length {len(v)} does not match k")
    for key in ("alphabet", "perturbation"):
        if obj.get(key) is not None and not isinstance(obj[key], (str, dict)):
            out.append(f"{where(key)}: must be a path or an inline object")
    if obj.get("output_path") is not None and not isinstance(obj["output_path"], str):
        out.append(f"{where('output_path')}: must be a path")
    if command in REQUIRED:
        for key in REQUIRED[command]:
            if obj.get(key) is None:
                out.append(f"missing field '{key}' required by {command}")
        k = obj.get("k")
        if _is_int(k) and k > 8 and obj.get("alphabet") is None and command != "pbn":
            out.append(f"{where('k')}: full enumeration supports k <= 8; give an explicit alphabet")
        horizon = obj.get("horizon")
        if command == "intermittency" and _is_int(horizon) and horizon < 1000:
            out.append(f"{where('horizon')}: intermittency needs horizon >= 1000")
        if command == "lyapunov" and _is_int(horizon) and horizon < 100:
            out.append(f"{where('horizon')}: lyapunov needs horizon >= 100")
        if command == "taylor" and isinstance(obj.get("epsilon_grid"), list):
            grid = obj["epsilon_grid"]
            if len(grid) < 4 or any(_is_num(e) and e > 0.1 for e in grid):
                out.append(f"{where('epsilon_grid')}: taylor needs at least 4 values in (0, 0.1]")
        if command == "sync-times" and _is_int(obj.get("m")) and _is_int(obj.get("cap", 10_000)):
            if obj["m"] > obj.get("cap", 10_000):
                out.append(f"{where('m')}: must not exceed cap")
    return out


def validate_config(raw: str | dict, overrides: dict | None = None) -> tuple[ExperimentConfig | None, list[str]]:
    """Parse and range-check a config; returns ``(config, [])`` or ``(None, violations)``.

    ``overrides`` (e.g. from command-line flags) replace keys one-to-one.
    """
    if isinstance(raw, dict):
        obj, raw = dict(raw), json.dumps(raw, indent=1)
    else:
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as e:
            return None, [f"line {e.lineno} column {e.colno}: {e.msg}"]
    if not isinstance(obj, dict):
        return None, ["top level must be a JSON object"]
    if overrides:
        obj.update({k: v for k, v in overrides.items() if v is not None})
    violations = _check(obj, raw)
    if violations:
        return None, violations
    return ExperimentConfig(**obj), []
