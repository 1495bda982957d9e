"""Scenario configuration: schema validation, named generators, assembly.

Scenario files are YAML with a fixed schema; unknown keys are rejected
before any numerics run.  Restriction maps may be written as explicit
matrices or through named generators (identity/projection/rotation/scale),
and flow-field component tables paste directly as rows.  Formation geometry
(squares/triangles about targets, a target tetrahedron) expands into
commanded per-edge offsets and a target consensus coupling.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np
import yaml

from .cohomology import CohomologyReport, check_feasibility
from .controller import ControllerGains
from .dynamics import AgentModel, FlowField, LissajousPath, OffsetConsensus, SinusoidDisturbance, TargetModel, zero_drift
from .harmonic import TrackingProblem, assemble
from .sheaf import CellularSheaf, Graph, normalize_edge
from .simulator import Scenario


class ConfigError(ValueError):
    """A scenario document failed validation; the message carries the
    offending field path."""


def _require(mapping: Any, path: str) -> dict:
    if not isinstance(mapping, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(mapping).__name__}")
    return mapping


def _check_keys(mapping: dict, allowed: Sequence[str], path: str, required: Sequence[str] = ()):
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {unknown}; allowed keys are {sorted(allowed)}")
    missing = sorted(set(required) - set(mapping))
    if missing:
        raise ConfigError(f"{path}: missing required key(s) {missing}")


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _int(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    return value


def _vector(value: Any, path: str, length: int | None = None) -> list[float]:
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"{path}: expected a list of numbers")
    out = [_number(v, f"{path}[{k}]") for k, v in enumerate(value)]
    if length is not None and len(out) != length:
        raise ConfigError(f"{path}: expected {length} numbers, got {len(out)}")
    return out


def _matrix_rows(value: Any, path: str, shape: tuple[int, int]) -> np.ndarray:
    if not isinstance(value, (list, tuple)) or len(value) != shape[0]:
        raise ConfigError(f"{path}: expected {shape[0]} rows")
    rows = []
    for r, row in enumerate(value):
        rows.append(_vector(row, f"{path}[{r}]", length=shape[1]))
    return np.asarray(rows, dtype=float)


# ---------------------------------------------------------------------------
# named restriction-map generators

def _restriction_matrix(spec: Any, path: str, edge_dim: int, vertex_dim: int) -> np.ndarray:
    spec = _require(spec, path)
    kind = spec.get("type")
    if kind == "identity":
        _check_keys(spec, ["type"], path)
        if edge_dim != vertex_dim:
            raise ConfigError(f"{path}: identity needs edge dim == vertex dim ({edge_dim} != {vertex_dim})")
        return np.eye(edge_dim)
    if kind == "projection":
        _check_keys(spec, ["type", "rows"], path, required=["rows"])
        rows = spec["rows"]
        if not isinstance(rows, (list, tuple)) or len(rows) != edge_dim:
            raise ConfigError(f"{path}.rows: expected {edge_dim} coordinate indices")
        mat = np.zeros((edge_dim, vertex_dim))
        for r, c in enumerate(rows):
            c = _int(c, f"{path}.rows[{r}]")
            if not 0 <= c < vertex_dim:
                raise ConfigError(f"{path}.rows[{r}]: coordinate {c} out of range for dim {vertex_dim}")
            mat[r, c] = 1.0
        return mat
    if kind == "rotation":
        _check_keys(spec, ["type", "angle_deg"], path, required=["angle_deg"])
        if edge_dim != 2 or vertex_dim != 2:
            raise ConfigError(f"{path}: rotation generator is 2-D only")
        a = math.radians(_number(spec["angle_deg"], f"{path}.angle_deg"))
        c, s = math.cos(a), math.sin(a)
        return np.array([[c, -s], [s, c]])
    if kind == "scale":
        _check_keys(spec, ["type", "factor"], path, required=["factor"])
        if edge_dim != vertex_dim:
            raise ConfigError(f"{path}: scale needs edge dim == vertex dim")
        return _number(spec["factor"], f"{path}.factor") * np.eye(edge_dim)
    if kind == "matrix":
        _check_keys(spec, ["type", "rows"], path, required=["rows"])
        return _matrix_rows(spec["rows"], f"{path}.rows", (edge_dim, vertex_dim))
    raise ConfigError(f"{path}.type: unknown restriction generator {kind!r}")


def _build_sheaf(section: Any) -> CellularSheaf:
    section = _require(section, "sheaf")
    _check_keys(section, ["vertices", "edges"], "sheaf", required=["vertices", "edges"])
    vertices = section["vertices"]
    if not isinstance(vertices, list) or not vertices:
        raise ConfigError("sheaf.vertices: expected a non-empty list")
    dims: dict[int, int] = {}
    for k, entry in enumerate(vertices):
        entry = _require(entry, f"sheaf.vertices[{k}]")
        _check_keys(entry, ["id", "dim"], f"sheaf.vertices[{k}]", required=["id", "dim"])
        vid = _int(entry["id"], f"sheaf.vertices[{k}].id")
        if vid in dims:
            raise ConfigError(f"sheaf.vertices[{k}]: duplicate vertex id {vid}")
        dims[vid] = _int(entry["dim"], f"sheaf.vertices[{k}].dim")
    n = len(dims)
    if sorted(dims) != list(range(n)):
        raise ConfigError("sheaf.vertices: ids must be exactly 0..n-1")

    edges_spec = section["edges"]
    if not isinstance(edges_spec, list):
        raise ConfigError("sheaf.edges: expected a list")
    edge_list, edge_dims, restrictions = [], {}, {}
    for k, entry in enumerate(edges_spec):
        where = f"sheaf.edges[{k}]"
        entry = _require(entry, where)
        _check_keys(entry, ["i", "j", "dim", "from_i", "from_j"], where, required=["i", "j", "dim", "from_i", "from_j"])
        i = _int(entry["i"], f"{where}.i")
        j = _int(entry["j"], f"{where}.j")
        if i not in dims or j not in dims:
            raise ConfigError(f"{where}: edge ({i},{j}) references an unknown vertex")
        e = normalize_edge((i, j))
        edge_dim = _int(entry["dim"], f"{where}.dim")
        edge_list.append(e)
        edge_dims[e] = edge_dim
        restrictions[(i, e)] = _restriction_matrix(entry["from_i"], f"{where}.from_i", edge_dim, dims[i])
        restrictions[(j, e)] = _restriction_matrix(entry["from_j"], f"{where}.from_j", edge_dim, dims[j])

    graph = Graph(n, tuple(edge_list))
    return CellularSheaf(
        graph=graph,
        vertex_dims=tuple(dims[v] for v in range(n)),
        edge_dims=tuple(edge_dims[e] for e in graph.edges),
        restrictions=restrictions,
    )


# ---------------------------------------------------------------------------
# formation geometry

def tetrahedron_points(edge: float) -> np.ndarray:
    """Regular tetrahedron: three base vertices in the plane plus the apex."""
    d = float(edge)
    return np.array(
        [
            [0.0, 0.0, 0.0],
            [d, 0.0, 0.0],
            [d / 2.0, math.sqrt(3.0) * d / 2.0, 0.0],
            [d / 2.0, math.sqrt(3.0) * d / 6.0, math.sqrt(6.0) / 3.0 * d],
        ]
    )


def square_offsets(radius: float) -> np.ndarray:
    """Four planar offsets on a circle, a square centered on the target."""
    angles = np.deg2rad([45.0, 135.0, 225.0, 315.0])
    return float(radius) * np.column_stack([np.cos(angles), np.sin(angles)])


def triangle_offsets(side: float) -> np.ndarray:
    """Equilateral-triangle offsets with the target at the centroid."""
    radius = float(side) / math.sqrt(3.0)
    angles = np.deg2rad([90.0, 210.0, 330.0])
    return radius * np.column_stack([np.cos(angles), np.sin(angles)])


def _formation_points(spec: Any, path: str, count: int, dim: int) -> np.ndarray:
    spec = _require(spec, path)
    if "shape" in spec:
        _check_keys(spec, ["shape", "edge"], path, required=["shape", "edge"])
        if spec["shape"] != "tetrahedron":
            raise ConfigError(f"{path}.shape: unknown formation shape {spec['shape']!r}")
        if count != 4 or dim != 3:
            raise ConfigError(f"{path}: tetrahedron needs four 3-D targets")
        return tetrahedron_points(_number(spec["edge"], f"{path}.edge"))
    _check_keys(spec, ["points"], path, required=["points"])
    return _matrix_rows(spec["points"], f"{path}.points", (count, dim))


# ---------------------------------------------------------------------------
# per-entity models

_DRIFT_TERMS = ("zero", "field", "field_planar", "lissajous", "linear", "constant")


def _validate_drift_terms(terms: Any, path: str, dim: int, flow, reference) -> list[dict]:
    if terms is None:
        return [{"type": "zero"}]
    if not isinstance(terms, list):
        raise ConfigError(f"{path}: expected a list of drift terms")
    out = []
    for k, term in enumerate(terms):
        where = f"{path}[{k}]"
        term = _require(term, where)
        kind = term.get("type")
        if kind not in _DRIFT_TERMS:
            raise ConfigError(f"{where}.type: unknown drift term {kind!r}")
        if kind == "zero":
            _check_keys(term, ["type"], where)
        elif kind == "field":
            _check_keys(term, ["type"], where)
            if flow is None:
                raise ConfigError(f"{where}: drift uses the flow field but no `field` section is present")
            if dim != 3:
                raise ConfigError(f"{where}: `field` drift needs a 3-D state (got dim {dim})")
        elif kind == "field_planar":
            _check_keys(term, ["type"], where)
            if flow is None:
                raise ConfigError(f"{where}: drift uses the flow field but no `field` section is present")
            if dim != 2:
                raise ConfigError(f"{where}: `field_planar` drift needs a 2-D state (got dim {dim})")
        elif kind == "lissajous":
            _check_keys(term, ["type"], where)
            if reference is None:
                raise ConfigError(f"{where}: drift uses the reference path but no `reference` section is present")
            if dim != 3:
                raise ConfigError(f"{where}: `lissajous` drift needs a 3-D state (got dim {dim})")
        elif kind == "linear":
            _check_keys(term, ["type", "matrix"], where, required=["matrix"])
            _matrix_rows(term["matrix"], f"{where}.matrix", (dim, dim))
        elif kind == "constant":
            _check_keys(term, ["type", "value"], where, required=["value"])
            _vector(term["value"], f"{where}.value", length=dim)
        out.append(copy.deepcopy(term))
    return out


def _drift_callable(terms: list[dict], dim: int, flow: FlowField | None, reference: LissajousPath | None):
    funcs: list[Callable[[np.ndarray, float], np.ndarray]] = []
    for term in terms:
        kind = term["type"]
        if kind == "zero":
            continue
        if kind == "field":
            funcs.append(lambda x, t, f=flow: f.velocity(x))
        elif kind == "field_planar":
            funcs.append(lambda x, t, f=flow: f.velocity_planar_many(x.reshape(1, 2))[0])
        elif kind == "lissajous":
            funcs.append(lambda x, t, r=reference: r.velocity(t))
        elif kind == "linear":
            mat = np.asarray(term["matrix"], dtype=float)
            funcs.append(lambda x, t, m=mat: m @ x)
        elif kind == "constant":
            vec = np.asarray(term["value"], dtype=float)
            funcs.append(lambda x, t, v=vec: v)
    if not funcs:
        return zero_drift
    if len(funcs) == 1:
        return funcs[0]

    def drift(x: np.ndarray, t: float) -> np.ndarray:
        total = funcs[0](x, t).copy()
        for f in funcs[1:]:
            total += f(x, t)
        return total

    return drift


def _batched_drift(terms: list[dict], dims: Sequence[int], flow, reference):
    """Stacked drift over a uniform group; None when not batchable."""
    if len(set(dims)) != 1:
        return None
    dim = dims[0]
    count = len(dims)
    parts = []
    for term in terms:
        kind = term["type"]
        if kind == "zero":
            continue
        if kind == "field":
            parts.append(lambda flat, t, f=flow: f.velocity_many(flat.reshape(count, 3)).ravel())
        elif kind == "field_planar":
            parts.append(lambda flat, t, f=flow: f.velocity_planar_many(flat.reshape(count, 2)).ravel())
        elif kind == "lissajous":
            parts.append(lambda flat, t, r=reference: np.tile(r.velocity(t), count))
        elif kind == "constant":
            vec = np.tile(np.asarray(term["value"], dtype=float), count)
            parts.append(lambda flat, t, v=vec: v)
        else:
            return None
    if not parts:
        total_dim = dim * count
        return lambda flat, t: np.zeros(total_dim)

    def drift(flat: np.ndarray, t: float) -> np.ndarray:
        total = parts[0](flat, t)
        if len(parts) > 1:
            total = total.copy()
            for f in parts[1:]:
                total += f(flat, t)
        return total

    return drift


def _disturbance(spec: Any, path: str, dim: int):
    if spec is None:
        return None, 0.0
    spec = _require(spec, path)
    kind = spec.get("type")
    if kind == "none":
        _check_keys(spec, ["type"], path)
        return None, 0.0
    if kind == "sinusoid":
        _check_keys(spec, ["type", "amplitudes", "frequencies", "phases"], path, required=["amplitudes", "frequencies"])
        amps = _vector(spec["amplitudes"], f"{path}.amplitudes", length=dim)
        freqs = _vector(spec["frequencies"], f"{path}.frequencies", length=dim)
        phases = _vector(spec.get("phases", [0.0] * dim), f"{path}.phases", length=dim)
        sig = SinusoidDisturbance(tuple(amps), tuple(freqs), tuple(phases))
        return sig, sig.bound
    raise ConfigError(f"{path}.type: unknown disturbance {kind!r}")


def _effectiveness(spec: Any, path: str, dim: int) -> np.ndarray:
    if spec is None:
        return np.eye(dim)
    spec = _require(spec, path)
    kind = spec.get("type")
    if kind == "identity":
        _check_keys(spec, ["type"], path)
        return np.eye(dim)
    if kind == "matrix":
        _check_keys(spec, ["type", "rows"], path, required=["rows"])
        rows = spec["rows"]
        if not isinstance(rows, (list, tuple)) or not rows:
            raise ConfigError(f"{path}.rows: expected matrix rows")
        width = len(rows[0]) if isinstance(rows[0], (list, tuple)) else 0
        return _matrix_rows(rows, f"{path}.rows", (dim, width))
    raise ConfigError(f"{path}.type: unknown effectiveness generator {kind!r}")


_AGENT_MODEL_KEYS = ("drift", "effectiveness", "disturbance")
_TARGET_MODEL_KEYS = ("drift", "disturbance")


def _entity_spec(section: dict, vid: int, path: str, keys) -> dict:
    spec = copy.deepcopy(section.get("default", {}) or {})
    per = section.get("per", {}) or {}
    override = per.get(vid, per.get(str(vid)))
    if override is not None:
        spec.update(_require(override, f"{path}.per.{vid}"))
    _check_keys(spec, keys, f"{path} (vertex {vid})")
    return spec


# ---------------------------------------------------------------------------
# loader

@dataclass
class LoadedScenario:
    """A validated, fully constructed scenario plus its load-time context."""

    scenario: Scenario
    config: dict
    feasible: bool
    obstruction: CohomologyReport
    trajectory_path: str | None
    summary_path: str | None
    plots_enabled: bool


_TOP_KEYS = (
    "name",
    "description",
    "sheaf",
    "partition",
    "field",
    "reference",
    "agents",
    "targets",
    "formation",
    "gains",
    "initial",
    "integration",
    "bound",
    "outputs",
)


def scenario_from_dict(raw: Mapping[str, Any], name_hint: str = "scenario") -> LoadedScenario:
    """Validate a configuration mapping and construct the scenario."""
    raw = _require(dict(raw), "config")
    _check_keys(raw, _TOP_KEYS, "config", required=["sheaf", "partition", "gains", "initial", "integration"])
    name = raw.get("name", name_hint)
    if not isinstance(name, str):
        raise ConfigError("name: expected a string")

    sheaf = _build_sheaf(raw["sheaf"])

    part = _require(raw["partition"], "partition")
    _check_keys(part, ["agents", "targets"], "partition", required=["agents", "targets"])
    agents = [_int(v, f"partition.agents[{k}]") for k, v in enumerate(part["agents"])]
    targets = [_int(v, f"partition.targets[{k}]") for k, v in enumerate(part["targets"])]
    try:
        problem = assemble(sheaf, agents, targets)
    except ValueError as exc:
        raise ConfigError(f"partition: {exc}") from exc

    flow = None
    if "field" in raw and raw["field"] is not None:
        fsec = _require(raw["field"], "field")
        _check_keys(fsec, ["sources", "vortices", "gaussians", "regularization"], "field")
        sources = [_vector(row, f"field.sources[{k}]", length=4) for k, row in enumerate(fsec.get("sources", []) or [])]
        vortices = [_vector(row, f"field.vortices[{k}]", length=7) for k, row in enumerate(fsec.get("vortices", []) or [])]
        gaussians = []
        for k, row in enumerate(fsec.get("gaussians", []) or []):
            where = f"field.gaussians[{k}]"
            row = _require(row, where)
            _check_keys(row, ["center", "direction", "strength", "width", "length"], where,
                        required=["center", "direction", "strength", "width", "length"])
            gaussians.append(
                _vector(row["center"], f"{where}.center", 3)
                + _vector(row["direction"], f"{where}.direction", 3)
                + [_number(row["strength"], f"{where}.strength"),
                   _number(row["width"], f"{where}.width"),
                   _number(row["length"], f"{where}.length")]
            )
        flow = FlowField(
            sources=np.asarray(sources, dtype=float).reshape(-1, 4),
            vortices=np.asarray(vortices, dtype=float).reshape(-1, 7),
            gaussians=np.asarray(gaussians, dtype=float).reshape(-1, 9),
            regularization=_number(fsec.get("regularization", 1e-2), "field.regularization"),
        )

    reference = None
    if "reference" in raw and raw["reference"] is not None:
        rsec = _require(raw["reference"], "reference")
        _check_keys(rsec, ["amplitudes", "frequencies", "phase_x", "phase_z"], "reference",
                    required=["amplitudes", "frequencies"])
        reference = LissajousPath(
            amplitudes=tuple(_vector(rsec["amplitudes"], "reference.amplitudes", 3)),
            frequencies=tuple(_vector(rsec["frequencies"], "reference.frequencies", 3)),
            phase_x=_number(rsec.get("phase_x", 0.0), "reference.phase_x"),
            phase_z=_number(rsec.get("phase_z", 0.0), "reference.phase_z"),
        )

    # agent models
    asec = _require(raw.get("agents", {}) or {}, "agents")
    _check_keys(asec, ["default", "per"], "agents")
    agent_models = []
    agent_terms = []
    for k, vid in enumerate(problem.agents):
        dim = problem.agent_dims[k]
        spec = _entity_spec(asec, vid, "agents", _AGENT_MODEL_KEYS)
        terms = _validate_drift_terms(spec.get("drift"), f"agents (vertex {vid}).drift", dim, flow, reference)
        agent_terms.append(terms)
        g = _effectiveness(spec.get("effectiveness"), f"agents (vertex {vid}).effectiveness", dim)
        dist, bound = _disturbance(spec.get("disturbance"), f"agents (vertex {vid}).disturbance", dim)
        agent_models.append(
            AgentModel(
                state_dim=dim,
                control_dim=g.shape[1],
                drift=_drift_callable(terms, dim, flow, reference),
                effectiveness_matrix=g,
                disturbance=dist,
                disturbance_bound=bound,
            )
        )

    tsec = _require(raw.get("targets", {}) or {}, "targets")
    _check_keys(tsec, ["default", "per", "consensus"], "targets")
    target_models = []
    target_terms = []
    for k, vid in enumerate(problem.targets):
        dim = problem.target_dims[k]
        spec = _entity_spec(tsec, vid, "targets", _TARGET_MODEL_KEYS)
        terms = _validate_drift_terms(spec.get("drift"), f"targets (vertex {vid}).drift", dim, flow, reference)
        target_terms.append(terms)
        dist, bound = _disturbance(spec.get("disturbance"), f"targets (vertex {vid}).disturbance", dim)
        target_models.append(
            TargetModel(
                state_dim=dim,
                drift=_drift_callable(terms, dim, flow, reference),
                disturbance=dist,
                disturbance_bound=bound,
            )
        )

    # target consensus coupling over the target-target edges of the graph
    coupling = None
    target_points = None
    if "consensus" in tsec and tsec["consensus"] is not None:
        csec = _require(tsec["consensus"], "targets.consensus")
        _check_keys(csec, ["gain", "formation"], "targets.consensus", required=["gain", "formation"])
        dims = set(problem.target_dims)
        if len(dims) != 1:
            raise ConfigError("targets.consensus: all target stalks must share one dimension")
        dim = dims.pop()
        target_points = _formation_points(csec["formation"], "targets.consensus.formation",
                                          problem.target_count, dim)
        target_set = set(problem.targets)
        pos = {v: k for k, v in enumerate(problem.targets)}
        group_edges = [
            (pos[i], pos[j])
            for i, j in sheaf.graph.edges
            if i in target_set and j in target_set
        ]
        if not group_edges:
            raise ConfigError("targets.consensus: the graph has no target-target edges to couple over")
        consensus = OffsetConsensus.from_formation(
            gain=_number(csec["gain"], "targets.consensus.gain"),
            points=target_points,
            edges=group_edges,
        )
        coupling = consensus.stacked_rates

    # commanded formation offsets
    edge_offsets: dict = {}
    formation_scale = None
    if "formation" in raw and raw["formation"] is not None:
        edge_offsets, formation_scale = _formation_offsets(
            _require(raw["formation"], "formation"), problem, target_points
        )

    gsec = _require(raw["gains"], "gains")
    _check_keys(gsec, ["k1", "lambda_v", "rho0", "rho1"], "gains", required=["k1", "lambda_v"])
    gains = ControllerGains(k1=_number(gsec["k1"], "gains.k1"))
    lambda_v = _number(gsec["lambda_v"], "gains.lambda_v")
    rho0 = _number(gsec.get("rho0", 0.0), "gains.rho0")
    rho1 = _number(gsec.get("rho1", 0.0), "gains.rho1")

    isec = _require(raw["initial"], "initial")
    _check_keys(isec, ["agents", "targets"], "initial", required=["agents", "targets"])
    q0 = _stacked_initial(isec["agents"], "initial.agents", problem.agent_dims, problem.agents)
    p0 = _stacked_initial(isec["targets"], "initial.targets", problem.target_dims, problem.targets)

    nsec = _require(raw["integration"], "integration")
    _check_keys(nsec, ["step", "horizon", "t0", "seed"], "integration", required=["horizon"])
    step = _number(nsec.get("step", 1e-3), "integration.step")
    horizon = _number(nsec["horizon"], "integration.horizon")
    t0 = _number(nsec.get("t0", 0.0), "integration.t0")
    seed = _int(nsec.get("seed", 0), "integration.seed")

    mismatch_bound = None
    mismatch_samples = 2000
    sample_lo = sample_hi = None
    if "bound" in raw and raw["bound"] is not None:
        bsec = _require(raw["bound"], "bound")
        _check_keys(bsec, ["drift_mismatch_bound", "mismatch_samples", "target_sample_lo", "target_sample_hi"], "bound")
        if "drift_mismatch_bound" in bsec:
            mismatch_bound = _number(bsec["drift_mismatch_bound"], "bound.drift_mismatch_bound")
        if "mismatch_samples" in bsec:
            mismatch_samples = _int(bsec["mismatch_samples"], "bound.mismatch_samples")
        if "target_sample_lo" in bsec:
            sample_lo = np.asarray(_vector(bsec["target_sample_lo"], "bound.target_sample_lo"), dtype=float)
        if "target_sample_hi" in bsec:
            sample_hi = np.asarray(_vector(bsec["target_sample_hi"], "bound.target_sample_hi"), dtype=float)

    osec = _require(raw.get("outputs", {}) or {}, "outputs")
    _check_keys(osec, ["trajectory", "summary", "plots"], "outputs")
    trajectory_path = osec.get("trajectory", "trajectory.csv")
    summary_path = osec.get("summary", "summary.txt")
    plots_enabled = bool(osec.get("plots", True))

    # batched drift hooks when a side is uniform
    batched_agents = None
    if agent_terms and all(t == agent_terms[0] for t in agent_terms):
        batched_agents = _batched_drift(agent_terms[0], problem.agent_dims, flow, reference)
    batched_targets = None
    if target_terms and all(t == target_terms[0] for t in target_terms):
        batched_targets = _batched_drift(target_terms[0], problem.target_dims, flow, reference)

    scenario = Scenario(
        problem=problem,
        agent_models=tuple(agent_models),
        target_models=tuple(target_models),
        gains=gains,
        lambda_v=lambda_v,
        rho0=rho0,
        rho1=rho1,
        initial_agents=q0,
        initial_targets=p0,
        step=step,
        horizon=horizon,
        t0=t0,
        edge_offsets=edge_offsets or None,
        target_coupling=coupling,
        batched_agent_drift=batched_agents,
        batched_target_drift=batched_targets,
        drift_mismatch_bound=mismatch_bound,
        mismatch_samples=mismatch_samples,
        target_sample_lo=sample_lo,
        target_sample_hi=sample_hi,
        seed=seed,
        formation_scale=formation_scale,
        name=name,
    )
    feasible, obstruction = check_feasibility(sheaf, problem.targets)
    return LoadedScenario(
        scenario=scenario,
        config=normalize(raw, name_hint=name),
        feasible=feasible,
        obstruction=obstruction,
        trajectory_path=trajectory_path,
        summary_path=summary_path,
        plots_enabled=plots_enabled,
    )


def _stacked_initial(value: Any, path: str, dims: Sequence[int], ids: Sequence[int]) -> np.ndarray:
    if not isinstance(value, list) or len(value) != len(dims):
        raise ConfigError(f"{path}: expected one state per vertex, in ascending vertex order {list(ids)}")
    parts = []
    for k, row in enumerate(value):
        parts.extend(_vector(row, f"{path}[{k}] (vertex {ids[k]})", length=dims[k]))
    return np.asarray(parts, dtype=float)


def _formation_offsets(section: dict, problem: TrackingProblem, target_points: np.ndarray | None):
    """Expand formation groups into commanded per-edge offsets.

    Every edge with at least one agent endpoint whose endpoints both have a
    commanded relative position receives the commanded coboundary value;
    cross-group edges therefore stay geometrically consistent with the
    formation, provided the edge restriction maps are projection-compatible.
    """
    _check_keys(section, ["scale", "groups", "offsets"], "formation")
    sheaf = problem.sheaf
    desired: dict[int, np.ndarray] = {}
    agent_pos = {v: k for k, v in enumerate(problem.agents)}
    target_pos = {v: k for k, v in enumerate(problem.targets)}

    centered = None
    if target_points is not None:
        centered = target_points - target_points.mean(axis=0)
        for v, k in target_pos.items():
            desired[v] = centered[k]

    max_radius = 0.0
    for gnum, group in enumerate(section.get("groups", []) or []):
        where = f"formation.groups[{gnum}]"
        group = _require(group, where)
        _check_keys(group, ["target", "agents", "shape", "radius", "side", "offsets"], where,
                    required=["target", "agents"])
        tid = _int(group["target"], f"{where}.target")
        if tid not in target_pos:
            raise ConfigError(f"{where}.target: vertex {tid} is not a target")
        members = [_int(v, f"{where}.agents[{k}]") for k, v in enumerate(group["agents"])]
        for v in members:
            if v not in agent_pos:
                raise ConfigError(f"{where}.agents: vertex {v} is not an agent")
            if problem.agent_dims[agent_pos[v]] != 2:
                raise ConfigError(f"{where}: formation groups assume planar (2-D) agents")
        shape = group.get("shape")
        if shape == "square":
            if len(members) != 4:
                raise ConfigError(f"{where}: square formation needs four agents")
            offsets = square_offsets(_number(group.get("radius", 1.0), f"{where}.radius"))
        elif shape == "triangle":
            if len(members) != 3:
                raise ConfigError(f"{where}: triangle formation needs three agents")
            offsets = triangle_offsets(_number(group.get("side", 1.0), f"{where}.side"))
        elif shape is None:
            offsets = _matrix_rows(group.get("offsets"), f"{where}.offsets", (len(members), 2))
        else:
            raise ConfigError(f"{where}.shape: unknown group shape {shape!r}")
        max_radius = max(max_radius, float(np.max(np.linalg.norm(offsets, axis=1))))

        # planar image of the assigned target's commanded relative position
        base = np.zeros(2)
        if centered is not None:
            base = centered[target_pos[tid]][:2]
        for v, off in zip(members, offsets):
            desired[v] = base + off

    edge_offsets: dict = {}
    agent_set = set(problem.agents)
    for e in sheaf.graph.edges:
        i, j = e
        if i not in desired or j not in desired:
            continue
        if i not in agent_set and j not in agent_set:
            continue  # target-target geometry is the consensus coupling's job
        fi = sheaf.restrictions[(i, e)]
        fj = sheaf.restrictions[(j, e)]
        edge_offsets[e] = fi @ desired[i] - fj @ desired[j]

    for onum, row in enumerate(section.get("offsets", []) or []):
        where = f"formation.offsets[{onum}]"
        row = _require(row, where)
        _check_keys(row, ["i", "j", "value"], where, required=["i", "j", "value"])
        e = normalize_edge((_int(row["i"], f"{where}.i"), _int(row["j"], f"{where}.j")))
        if e not in sheaf.graph.edge_index():
            raise ConfigError(f"{where}: edge {e} does not exist")
        dim = sheaf.edge_dims[sheaf.graph.edge_index()[e]]
        edge_offsets[e] = np.asarray(_vector(row["value"], f"{where}.value", length=dim))

    scale = section.get("scale")
    scale = _number(scale, "formation.scale") if scale is not None else (max_radius or None)
    return edge_offsets, scale


# ---------------------------------------------------------------------------
# parse / normalize / serialize

def load_config(path) -> dict:
    """Parse and validate a YAML scenario file (no numerics yet)."""
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: YAML parse error: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping at the top level")
    return raw


def load_scenario(path) -> LoadedScenario:
    """Load, validate, and fully construct a scenario from a YAML file.

    The tracking problem is assembled and feasibility is pre-checked; an
    infeasible configuration still loads (so it can be inspected), with the
    obstruction carried in the result.
    """
    raw = load_config(path)
    return scenario_from_dict(raw, name_hint=Path(path).stem)


def normalize(raw: Mapping[str, Any], name_hint: str = "scenario") -> dict:
    """Canonical form of a configuration mapping: defaults filled in,
    ordering fixed.  Normalization is idempotent."""
    out = copy.deepcopy(dict(raw))
    out.setdefault("name", name_hint)
    sheaf = out.get("sheaf", {})
    if isinstance(sheaf, dict):
        verts = sheaf.get("vertices")
        if isinstance(verts, list):
            sheaf["vertices"] = sorted(
                (dict(v) for v in verts if isinstance(v, dict)), key=lambda v: v.get("id", 0)
            )
        edges = sheaf.get("edges")
        if isinstance(edges, list):
            fixed = []
            for entry in edges:
                if not isinstance(entry, dict):
                    continue
                entry = dict(entry)
                i, j = entry.get("i"), entry.get("j")
                if isinstance(i, int) and isinstance(j, int) and i > j:
                    entry["i"], entry["j"] = j, i
                    entry["from_i"], entry["from_j"] = entry.get("from_j"), entry.get("from_i")
                fixed.append(entry)
            sheaf["edges"] = sorted(fixed, key=lambda e: (e.get("i", 0), e.get("j", 0)))
    part = out.get("partition")
    if isinstance(part, dict):
        for side in ("agents", "targets"):
            if isinstance(part.get(side), list):
                part[side] = sorted(part[side])
    gains = out.get("gains")
    if isinstance(gains, dict):
        gains.setdefault("rho0", 0.0)
        gains.setdefault("rho1", 0.0)
    integ = out.get("integration")
    if isinstance(integ, dict):
        integ.setdefault("step", 1e-3)
        integ.setdefault("t0", 0.0)
        integ.setdefault("seed", 0)
    outputs = out.setdefault("outputs", {})
    if isinstance(outputs, dict):
        outputs.setdefault("trajectory", "trajectory.csv")
        outputs.setdefault("summary", "summary.txt")
        outputs.setdefault("plots", True)
    return out


def serialize(config: Mapping[str, Any]) -> str:
    """YAML text of a configuration mapping (stable key order)."""
    return yaml.safe_dump(dict(config), sort_keys=False, default_flow_style=None)


def bundled_scenario_path(name: str) -> Path:
    """Filesystem path of a packaged scenario (``p3_midpoint`` etc.)."""
    root = resources.files("sheaftrack.scenarios")
    candidate = root / f"{name}.yaml"
    if not candidate.is_file():
        available = sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))
        raise ConfigError(f"no bundled scenario {name!r}; available: {available}")
    return Path(str(candidate))


def bundled_scenarios() -> list[str]:
    root = resources.files("sheaftrack.scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))
