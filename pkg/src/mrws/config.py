"""Scenario configuration parsing and file I/O for the command line.

Configs are strict JSON: every key is validated and unknown keys are errors.
Spaces come from graph files ({"edges": [[i, j, w], ...]}), kernel files
({"grid": ..., "kernel": ...}) or the built-in star construction.  Fields in
configs are either {"constant": c} or a {node: value} mapping with every
required node present.  Field CSV columns are exactly node,label,value;
trajectories t,node,value; ledgers t,mass,drift_gap.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .analysis import build_counterexample
from .calculus import Field
from .elliptic import SolverOptions
from .errors import ConfigError, ConstructionError
from .leray_lions import LerayLionsMap, make_plaplacian, make_weighted_plaplacian
from .space import Domain, GridSpec, Space, build_graph_space, build_kernel_space, m_boundary


def _check_keys(obj: Mapping, required: Sequence[str], optional: Sequence[str], where: str):
    if not isinstance(obj, Mapping):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = sorted(set(obj) - set(required) - set(optional))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {where}")
    missing = sorted(set(required) - set(obj))
    if missing:
        raise ConfigError(f"missing key(s) {missing} in {where}")


def _positive_number(obj, where: str) -> float:
    try:
        val = float(obj)
    except (TypeError, ValueError):
        raise ConfigError(f"{where} must be a number") from None
    if not math.isfinite(val) or val <= 0:
        raise ConfigError(f"{where} must be positive and finite")
    return val


# -- kernel profiles ---------------------------------------------------------

def _kernel_profile(spec: Mapping) -> tuple[Any, float]:
    _check_keys(spec, ["type", "radius"], ["params"], "kernel")
    radius = _positive_number(spec["radius"], "kernel.radius")
    params = spec.get("params", {})
    if not isinstance(params, Mapping):
        raise ConfigError("kernel.params must be an object")
    kind = spec["type"]
    if kind == "box":
        _check_keys(params, [], ["height"], "kernel.params")
        height = float(params.get("height", 1.0))
        return (lambda r: np.where(r <= radius, height, 0.0)), radius
    if kind == "tent":
        _check_keys(params, [], ["height"], "kernel.params")
        height = float(params.get("height", 1.0))
        return (lambda r: height * np.maximum(0.0, 1.0 - r / radius)), radius
    if kind == "gauss_trunc":
        _check_keys(params, ["sigma"], ["height"], "kernel.params")
        sigma = _positive_number(params["sigma"], "kernel.params.sigma")
        height = float(params.get("height", 1.0))
        return (
            lambda r: np.where(r <= radius, height * np.exp(-0.5 * (r / sigma) ** 2), 0.0)
        ), radius
    raise ConfigError(f"unknown kernel type {kind!r}")


# -- space loading ------------------------------------------------------------

def load_space_file(path: str | Path) -> Space:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"space file {path} does not exist")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"space file {path} is not valid JSON: {exc}") from None
    if "edges" in data:
        _check_keys(data, ["edges"], ["labels"], f"graph space file {path}")
        edges = [(int(i), int(j), float(w)) for i, j, w in data["edges"]]
        return build_graph_space(edges, labels=data.get("labels"))
    if "grid" in data:
        _check_keys(data, ["grid", "kernel"], [], f"kernel space file {path}")
        g = data["grid"]
        _check_keys(g, ["dim", "shape", "h"], ["origin"], "grid")
        grid = GridSpec(
            dim=int(g["dim"]),
            shape=tuple(int(s) for s in g["shape"]),
            h=_positive_number(g["h"], "grid.h"),
            origin=tuple(float(v) for v in g["origin"]) if "origin" in g else None,
        )
        profile, radius = _kernel_profile(data["kernel"])
        return build_kernel_space(grid, profile, radius)
    raise ConfigError(f"space file {path} must contain 'edges' or 'grid'")


def resolve_space(spec, base_dir: Path) -> Space:
    """Space from a file path or the built-in star construction."""
    if isinstance(spec, str):
        path = Path(spec)
        if not path.is_absolute():
            path = base_dir / path
        return load_space_file(path)
    if isinstance(spec, Mapping):
        _check_keys(spec, ["builtin", "levels", "p"], [], "space")
        if spec["builtin"] != "counterexample":
            raise ConfigError(f"unknown builtin space {spec['builtin']!r}")
        space, _, _, _, _ = build_counterexample(int(spec["levels"]), float(spec["p"]))
        return space
    raise ConfigError("space must be a file path or a builtin object")


# -- field specs ---------------------------------------------------------------

def parse_field_spec(spec, nodes: np.ndarray, where: str) -> Field:
    if isinstance(spec, Mapping) and set(spec) == {"constant"}:
        return Field.constant(nodes, float(spec["constant"]))
    if isinstance(spec, Mapping):
        try:
            entries = {int(k): float(v) for k, v in spec.items()}
        except (TypeError, ValueError):
            raise ConfigError(
                f"{where} must map node indices to numbers or be {{\"constant\": c}}"
            ) from None
        extra = sorted(set(entries) - set(int(n) for n in nodes))
        if extra:
            raise ConfigError(f"{where} defines values on node(s) {extra} outside its support")
        missing = sorted(set(int(n) for n in nodes) - set(entries))
        if missing:
            raise ConfigError(f"{where} is missing node(s) {missing}")
        return Field(nodes, np.array([entries[int(n)] for n in nodes]))
    raise ConfigError(f"{where} must be a JSON object")


def parse_map_spec(spec, node_count: int) -> LerayLionsMap:
    _check_keys(spec, ["type", "p"], ["phi"], "ap")
    p = _positive_number(spec["p"], "ap.p")
    if p <= 1.0:
        raise ConfigError("ap.p must exceed 1")
    if spec["type"] == "plaplacian":
        if "phi" in spec:
            raise ConfigError("ap.phi is only valid for the weighted type")
        return make_plaplacian(p)
    if spec["type"] == "weighted":
        if "phi" not in spec:
            raise ConfigError("ap.phi is required for the weighted type")
        phi = np.asarray(spec["phi"], dtype=np.float64)
        if phi.size != node_count:
            raise ConfigError("ap.phi must give one weight per node")
        return make_weighted_plaplacian(p, phi)
    raise ConfigError(f"unknown ap type {spec['type']!r}")


# -- scenario ------------------------------------------------------------------

# one scenario file can serve several modes: every standard key is accepted
# (and validated) everywhere, each mode only *requires* its own
_ALL_KEYS = (
    "space", "omega", "ap", "variant", "lambda", "z", "flux",
    "u0", "dt", "T", "solver", "seed", "eps_boundary",
)

_MODE_KEYS = {
    "check": ["space", "omega"],
    "solve": ["space", "omega", "ap", "variant", "lambda", "z", "flux"],
    "evolve": ["space", "omega", "ap", "variant", "flux", "u0", "dt", "T"],
    "poincare": ["space", "omega"],
    "verify": ["space", "omega", "ap", "variant", "seed"],
}


@dataclass(frozen=True, eq=False)
class Scenario:
    mode: str
    space: Space
    domain: Domain
    omega: np.ndarray
    map: LerayLionsMap | None = None
    variant: str | None = None
    lam: float | None = None
    z: Field | None = None
    flux: Field | None = None
    u0: Field | None = None
    dt: float | None = None
    horizon: float | None = None
    solver: SolverOptions | None = None
    seed: int | None = None


def load_scenario(path: str | Path, mode: str) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    return parse_scenario(cfg, mode, base_dir=path.parent)


def parse_scenario(cfg: Mapping, mode: str, base_dir: str | Path = ".") -> Scenario:
    if mode not in _MODE_KEYS:
        raise ConfigError(f"unknown mode {mode!r}")
    required = _MODE_KEYS[mode]
    optional = [k for k in _ALL_KEYS if k not in required]
    _check_keys(cfg, required, optional, f"{mode} config")
    base_dir = Path(base_dir)

    space = resolve_space(cfg["space"], base_dir)
    omega = cfg["omega"]
    if not isinstance(omega, Sequence) or isinstance(omega, (str, bytes)) or not omega:
        raise ConfigError("omega must be a non-empty list of node indices")
    omega = np.asarray(sorted(int(i) for i in omega), dtype=np.int64)
    if omega[0] < 0 or omega[-1] >= space.node_count:
        raise ConfigError("omega contains node indices out of range")
    eps = float(cfg.get("eps_boundary", 1e-15))
    try:
        domain = m_boundary(space, omega, eps_boundary=eps)
    except ConstructionError as exc:
        raise ConfigError(str(exc)) from None

    kw: dict[str, Any] = {}
    if "ap" in cfg:
        kw["map"] = parse_map_spec(cfg["ap"], space.node_count)
    if "variant" in cfg:
        if cfg["variant"] not in ("gl", "drov"):
            raise ConfigError("variant must be \"gl\" or \"drov\"")
        kw["variant"] = cfg["variant"]
    if "lambda" in cfg:
        kw["lam"] = _positive_number(cfg["lambda"], "lambda")
    if "z" in cfg:
        kw["z"] = parse_field_spec(cfg["z"], domain.omega, "z")
    if "flux" in cfg:
        kw["flux"] = parse_field_spec(cfg["flux"], domain.boundary, "flux")
    if "u0" in cfg:
        kw["u0"] = parse_field_spec(cfg["u0"], domain.omega, "u0")
    if "dt" in cfg:
        kw["dt"] = _positive_number(cfg["dt"], "dt")
    if "T" in cfg:
        kw["horizon"] = _positive_number(cfg["T"], "T")
    if "solver" in cfg:
        _check_keys(cfg["solver"], [], ["tol", "max_iter"], "solver")
        kw["solver"] = SolverOptions(
            tol_newton=float(cfg["solver"].get("tol", 1e-12)),
            max_iter=int(cfg["solver"].get("max_iter", 100)),
        )
    if "seed" in cfg:
        if not isinstance(cfg["seed"], int):
            raise ConfigError("seed must be an integer")
        kw["seed"] = cfg["seed"]
    return Scenario(mode=mode, space=space, domain=domain, omega=omega, **kw)


# -- output writers -------------------------------------------------------------

def format_float(x: float) -> str:
    return repr(float(x))


def write_field_csv(path: str | Path, field: Field, space: Space) -> None:
    lines = ["node,label,value"]
    for node, value in zip(field.support, field.values):
        lines.append(f"{int(node)},{space.label_of(int(node))},{format_float(value)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_trajectory_csv(path: str | Path, times, fields) -> None:
    lines = ["t,node,value"]
    for t, field in zip(times, fields):
        for node, value in zip(field.support, field.values):
            lines.append(f"{format_float(t)},{int(node)},{format_float(value)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_ledger_csv(path: str | Path, ledger) -> None:
    lines = ["t,mass,drift_gap"]
    for t, mass, gap in zip(ledger.times, ledger.masses, ledger.gaps):
        lines.append(f"{format_float(t)},{format_float(mass)},{format_float(gap)}")
    Path(path).write_text("\n".join(lines) + "\n")


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)
