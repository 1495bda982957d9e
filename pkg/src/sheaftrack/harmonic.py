"""Partitioned tracking operators and the harmonic-extension solve.

Splitting the vertex set into agents and targets splits the sheaf Laplacian
into blocks.  ``H`` is the agent-agent block (agent subsheaf Laplacian plus
the sensing degree term), ``B`` is minus the agent-target block.  The agent
configuration that extends a target configuration harmonically solves
``H q = B p``; it exists uniquely exactly when the relative cohomology with
respect to the targets vanishes, i.e. when ``H`` is positive definite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from . import cohomology
from .sheaf import CellularSheaf, Edge, as_vertex_vector, coboundary_apply, induced_subsheaf, normalize_edge, sheaf_laplacian


class InfeasibleProblemError(ValueError):
    """The harmonic-extension operator is singular.

    Some agent degrees of freedom are unconstrained by the targets; the
    attached report's basis spans those directions.
    """

    def __init__(self, message: str, obstruction: cohomology.CohomologyReport):
        super().__init__(message)
        self.obstruction = obstruction


@dataclass(frozen=True)
class TrackingProblem:
    """A sheaf with an agent/target vertex partition and cached operators.

    Agent and target stacks use ascending vertex order.  ``H`` and ``B`` are
    dense; the factorization of ``H`` is computed once on first solve and
    shared read-only afterwards.
    """

    sheaf: CellularSheaf
    agents: tuple[int, ...]
    targets: tuple[int, ...]
    interaction: np.ndarray = field(repr=False)      # H, agent-agent block of L
    coupling: np.ndarray = field(repr=False)         # B, minus the agent-target block
    sensing_degree: np.ndarray = field(repr=False)   # D, block-diagonal sensing term
    agent_laplacian: np.ndarray = field(repr=False)  # L_Q, agent subsheaf Laplacian

    @property
    def H(self) -> np.ndarray:
        return self.interaction

    @property
    def B(self) -> np.ndarray:
        return self.coupling

    @property
    def agent_count(self) -> int:
        return len(self.agents)

    @property
    def target_count(self) -> int:
        return len(self.targets)

    @cached_property
    def agent_dims(self) -> tuple[int, ...]:
        return tuple(self.sheaf.vertex_dims[v] for v in self.agents)

    @cached_property
    def target_dims(self) -> tuple[int, ...]:
        return tuple(self.sheaf.vertex_dims[v] for v in self.targets)

    @cached_property
    def agent_offsets(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.agent_dims)))

    @cached_property
    def target_offsets(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.target_dims)))

    @property
    def agent_dim(self) -> int:
        return int(self.agent_offsets[-1])

    @property
    def target_dim(self) -> int:
        return int(self.target_offsets[-1])

    def agent_slice(self, k: int) -> slice:
        return slice(int(self.agent_offsets[k]), int(self.agent_offsets[k + 1]))

    def target_slice(self, k: int) -> slice:
        return slice(int(self.target_offsets[k]), int(self.target_offsets[k + 1]))

    @cached_property
    def smallest_interaction_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.interaction)[0])

    @cached_property
    def largest_coupling_singular_value(self) -> float:
        if self.coupling.size == 0:
            return 0.0
        return float(np.linalg.svd(self.coupling, compute_uv=False)[0])

    @cached_property
    def _pd_tolerance(self) -> float:
        scale = float(np.linalg.eigvalsh(self.interaction)[-1]) if self.interaction.size else 0.0
        return self.agent_dim * scale * cohomology.RANK_RTOL

    @property
    def feasible(self) -> bool:
        """Positive definiteness of H, equivalent to trivial relative cohomology."""
        return self.smallest_interaction_eigenvalue > self._pd_tolerance

    @cached_property
    def _cholesky(self):
        if not self.feasible:
            raise np.linalg.LinAlgError("interaction operator is not positive definite")
        return scipy.linalg.cho_factor(self.interaction)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``H x = rhs`` with the cached factorization."""
        return scipy.linalg.cho_solve(self._cholesky, rhs)

    def stack_full(self, q: np.ndarray, p: np.ndarray) -> np.ndarray:
        """Interleave agent and target stacks back into vertex order."""
        full = np.zeros(self.sheaf.total_vertex_dim)
        for k, v in enumerate(self.agents):
            full[self.sheaf.vertex_slice(v)] = q[self.agent_slice(k)]
        for k, v in enumerate(self.targets):
            full[self.sheaf.vertex_slice(v)] = p[self.target_slice(k)]
        return full

    def split_full(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        q = np.concatenate([x[self.sheaf.vertex_slice(v)] for v in self.agents])
        p = np.concatenate([x[self.sheaf.vertex_slice(v)] for v in self.targets])
        return q, p


def assemble(sheaf: CellularSheaf, agents: Iterable[int], targets: Iterable[int]) -> TrackingProblem:
    """Build the partitioned operators for an agent/target split.

    Requires a true partition of the vertices, a connected agent subgraph,
    and at least one sensing agent per target.
    """
    agents = tuple(sorted(set(int(v) for v in agents)))
    targets = tuple(sorted(set(int(v) for v in targets)))
    for v in agents + targets:
        if not 0 <= v < sheaf.graph.vertex_count:
            raise ValueError(f"unknown vertex {v}")
    overlap = set(agents) & set(targets)
    if overlap:
        raise ValueError(f"vertices {sorted(overlap)} listed as both agent and target")
    if not agents or not targets:
        raise ValueError("need at least one agent and one target")
    missing = set(range(sheaf.graph.vertex_count)) - set(agents) - set(targets)
    if missing:
        raise ValueError(f"vertices {sorted(missing)} belong to neither side of the partition")

    agent_graph, _ = sheaf.graph.induced_subgraph(agents)
    if not agent_graph.is_connected():
        raise ValueError("agent communication graph is not connected")
    agent_set = set(agents)
    for t in targets:
        if not any(n in agent_set for n in sheaf.graph.neighbors(t)):
            raise ValueError(f"target vertex {t} is not sensed by any agent")

    lap = sheaf_laplacian(sheaf, sparse=False)
    agent_cols = np.concatenate([np.arange(sheaf.vertex_slice(v).start, sheaf.vertex_slice(v).stop) for v in agents])
    target_cols = np.concatenate([np.arange(sheaf.vertex_slice(v).start, sheaf.vertex_slice(v).stop) for v in targets])
    interaction = lap[np.ix_(agent_cols, agent_cols)].copy()
    coupling = -lap[np.ix_(agent_cols, target_cols)]

    agent_dims = [sheaf.vertex_dims[v] for v in agents]
    offsets = np.concatenate(([0], np.cumsum(agent_dims)))
    sensing = np.zeros_like(interaction)
    for k, v in enumerate(agents):
        block = np.zeros((agent_dims[k], agent_dims[k]))
        for n in sheaf.graph.neighbors(v):
            if n in agent_set:
                continue
            f = sheaf.restrictions[(v, normalize_edge((v, n)))]
            block += f.T @ f
        sensing[offsets[k]:offsets[k + 1], offsets[k]:offsets[k + 1]] = block

    agent_lap = np.asarray(sheaf_laplacian(induced_subsheaf(sheaf, agents), sparse=False))

    return TrackingProblem(
        sheaf=sheaf,
        agents=agents,
        targets=targets,
        interaction=interaction,
        coupling=coupling,
        sensing_degree=sensing,
        agent_laplacian=agent_lap,
    )


def offset_load(problem: TrackingProblem, edge_offsets: Mapping[Edge, np.ndarray] | None) -> np.ndarray:
    """Agent-side load vector of commanded per-edge shifts.

    ``edge_offsets[e]`` is the commanded value of the coboundary on edge
    ``e`` (formation geometry); the returned vector ``w`` shifts the
    equilibrium equation to ``H q = B p + w``.
    """
    w = np.zeros(problem.agent_dim)
    if not edge_offsets:
        return w
    sheaf = problem.sheaf
    index = sheaf.graph.edge_index()
    agent_pos = {v: k for k, v in enumerate(problem.agents)}
    for raw, value in edge_offsets.items():
        e = normalize_edge(raw)
        if e not in index:
            raise ValueError(f"offset on unknown edge {e}")
        value = np.asarray(value, dtype=float)
        want = sheaf.edge_dims[index[e]]
        if value.shape != (want,):
            raise ValueError(f"offset on edge {e} has shape {value.shape}, expected ({want},)")
        for v, sign in ((e[0], 1.0), (e[1], -1.0)):
            if v in agent_pos:
                k = agent_pos[v]
                w[problem.agent_slice(k)] += sign * (sheaf.restrictions[(v, e)].T @ value)
    return w


def harmonic_extension(
    problem: TrackingProblem,
    p: np.ndarray,
    load: np.ndarray | None = None,
    method: str = "direct",
    allow_least_squares: bool = False,
) -> np.ndarray:
    """Agent configuration extending the target configuration ``p``.

    Solves ``H q = B p (+ load)``.  A singular ``H`` raises
    :class:`InfeasibleProblemError` carrying the obstruction directions,
    unless ``allow_least_squares`` explicitly requests the minimum-norm
    pseudo-solution.

    ``method="cg"`` switches to a conjugate-gradient iteration; the default
    is the cached symmetric positive-definite factorization.
    """
    p = np.asarray(p, dtype=float).ravel()
    if p.shape != (problem.target_dim,):
        raise ValueError(f"target cochain has shape {p.shape}, expected ({problem.target_dim},)")
    rhs = problem.coupling @ p
    if load is not None:
        rhs = rhs + np.asarray(load, dtype=float)

    if not problem.feasible:
        if allow_least_squares:
            sol, *_ = np.linalg.lstsq(problem.interaction, rhs, rcond=None)
            return sol
        _, report = cohomology.check_feasibility(problem.sheaf, problem.targets)
        raise InfeasibleProblemError(
            "harmonic extension is not unique: "
            f"{report.dimension} agent direction(s) are unconstrained by the targets",
            report,
        )

    if method == "direct":
        return problem.solve(rhs)
    if method == "cg":
        sol, info = scipy.sparse.linalg.cg(problem.interaction, rhs, rtol=1e-12, atol=0.0, maxiter=10 * problem.agent_dim)
        if info != 0:
            raise RuntimeError(f"conjugate-gradient solve did not converge (info={info})")
        return sol
    raise ValueError(f"unknown solve method {method!r}")


def dirichlet_energy(sheaf: CellularSheaf, x) -> float:
    """Half the squared coboundary norm, ``0.5 * ||delta x||^2``."""
    edge = coboundary_apply(sheaf, x)
    vec = edge.vector
    return 0.5 * float(vec @ vec)


def disagreement_ensemble(
    problem: TrackingProblem,
    q: np.ndarray,
    p: np.ndarray,
    load: np.ndarray | None = None,
) -> np.ndarray:
    """Stacked disagreement ``H q - B p (- load)`` across all agents.

    Equals ``-H e`` for the tracking error ``e = q* - q``.
    """
    q = np.asarray(q, dtype=float).ravel()
    p = np.asarray(p, dtype=float).ravel()
    if q.shape != (problem.agent_dim,):
        raise ValueError(f"agent cochain has shape {q.shape}, expected ({problem.agent_dim},)")
    if p.shape != (problem.target_dim,):
        raise ValueError(f"target cochain has shape {p.shape}, expected ({problem.target_dim},)")
    eta = problem.interaction @ q - problem.coupling @ p
    if load is not None:
        eta = eta - np.asarray(load, dtype=float)
    return eta
