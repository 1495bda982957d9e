"""Local measurement model and the decentralized tracking control law.

Each edge provides a transported relative state measured as range and
bearing; its node-wise pullbacks are the only quantities an agent needs.
Summing an agent's pullbacks gives its disagreement, and the control is a
scaled right-inverse image of that disagreement.  The stacked per-agent
controls coincide with the ensemble formula built from the partitioned
operators, which is the decentralization consistency oracle used in tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .dynamics import pseudoinverse
from .harmonic import TrackingProblem, harmonic_extension
from .sheaf import CellularSheaf, Edge, normalize_edge


@dataclass(frozen=True)
class EdgeMeasurement:
    """Relative measurement on one edge, in the edge-stalk frame.

    ``relative`` is the transported relative state for the normalized edge
    ``(i, j)``, i.e. the j-side transport minus the i-side transport.
    ``bearing`` is None when the range vanishes (direction undefined).
    """

    edge: Edge
    relative: np.ndarray
    range: float
    bearing: np.ndarray | None

    @property
    def bearing_defined(self) -> bool:
        return self.bearing is not None


@dataclass(frozen=True)
class ControllerGains:
    """Scalar feedback gain of the disagreement controller."""

    k1: float

    def __post_init__(self):
        if self.k1 <= 0:
            raise ValueError("gain k1 must be positive")


def measure_edge(sheaf: CellularSheaf, edge: Sequence[int], x_first, x_second) -> EdgeMeasurement:
    """Range/bearing measurement of the transported relative state.

    States are given in the order of the supplied ``edge`` pair; the result
    is expressed for the normalized ``(min, max)`` orientation.
    """
    a, b = int(edge[0]), int(edge[1])
    e = normalize_edge((a, b))
    states = {a: np.asarray(x_first, dtype=float), b: np.asarray(x_second, dtype=float)}
    i, j = e
    fi = sheaf.restrictions[(i, e)]
    fj = sheaf.restrictions[(j, e)]
    if states[i].shape != (fi.shape[1],) or states[j].shape != (fj.shape[1],):
        raise ValueError(f"edge {e}: endpoint states do not match the vertex stalk dimensions")
    rel = fj @ states[j] - fi @ states[i]
    rng = float(np.linalg.norm(rel))
    bearing = rel / rng if rng > 0.0 else None
    return EdgeMeasurement(edge=e, relative=rel, range=rng, bearing=bearing)


def edge_pullbacks(sheaf: CellularSheaf, edge: Sequence[int], relative: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Node-wise residuals recoverable from one edge measurement.

    For the normalized edge ``(i, j)`` returns ``(d_min, d_max)`` where
    ``d_min = -F_[i|e]^T y`` and ``d_max = +F_[j|e]^T y``; each lives in the
    owning vertex's stalk and sums into that vertex's disagreement.
    """
    e = normalize_edge(edge)
    relative = np.asarray(relative, dtype=float)
    return (
        -sheaf.restrictions[(e[0], e)].T @ relative,
        sheaf.restrictions[(e[1], e)].T @ relative,
    )


def local_disagreement(
    sheaf: CellularSheaf,
    vertex: int,
    own_state: np.ndarray,
    pullbacks: Mapping[int, np.ndarray],
) -> np.ndarray:
    """Disagreement at a vertex from its own state and neighbor residuals.

    The signature enforces locality: only the per-neighbor pullback vectors
    (not neighbor states) are accepted, and their sum is the vertexwise
    Laplacian image.  ``own_state`` is used for shape validation only.
    """
    own_state = np.asarray(own_state, dtype=float)
    dim = sheaf.vertex_dims[vertex]
    if own_state.shape != (dim,):
        raise ValueError(f"state at vertex {vertex} has shape {own_state.shape}, expected ({dim},)")
    expected = set(sheaf.graph.neighbors(vertex))
    got = set(int(k) for k in pullbacks)
    if got != expected:
        missing, extra = sorted(expected - got), sorted(got - expected)
        raise ValueError(
            f"vertex {vertex}: pullbacks must cover exactly the neighbors "
            f"(missing {missing}, unexpected {extra})"
        )
    total = np.zeros(dim)
    for j, d in pullbacks.items():
        d = np.asarray(d, dtype=float)
        if d.shape != (dim,):
            raise ValueError(f"pullback from neighbor {j} has shape {d.shape}, expected ({dim},)")
        total += d
    return total


def control_input(disagreement: np.ndarray, effectiveness: np.ndarray, gains: ControllerGains) -> np.ndarray:
    """Control ``u = -k1 g^+ eta`` for one agent."""
    return -gains.k1 * (pseudoinverse(effectiveness) @ np.asarray(disagreement, dtype=float))


def ensemble_control(
    problem: TrackingProblem,
    q: np.ndarray,
    p: np.ndarray,
    effectiveness_blocks: Sequence[np.ndarray],
    gains: ControllerGains,
    load: np.ndarray | None = None,
) -> np.ndarray:
    """Stacked control via the ensemble error form ``u = k1 g^+ H e``.

    Requires a feasible problem (the tracking error needs a unique
    harmonic extension).  Agrees with stacking the per-agent
    :func:`control_input` outputs, which is how tests pin the
    decentralized/ensemble equivalence.
    """
    if len(effectiveness_blocks) != problem.agent_count:
        raise ValueError("one effectiveness matrix per agent required")
    q = np.asarray(q, dtype=float).ravel()
    q_star = harmonic_extension(problem, p, load=load)
    he = problem.interaction @ (q_star - q)
    parts = []
    for k, g in enumerate(effectiveness_blocks):
        parts.append(gains.k1 * (pseudoinverse(np.asarray(g, dtype=float)) @ he[problem.agent_slice(k)]))
    return np.concatenate(parts)
