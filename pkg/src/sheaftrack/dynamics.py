"""Continuous-time models: drifts, control effectiveness, disturbances,
analytic background flow fields, and the periodic reference path.

Agent dynamics are ``x' = f(x, t) + g(x, t) u + w(t)`` with a full-row-rank
effectiveness matrix ``g``; targets are the same without the control term.
The background flow superposes regularized point sources/sinks, line
vortices, and Gaussian axial jets; evaluation is pure and deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping, Sequence

import numpy as np

from . import _kernels
from .cohomology import RANK_RTOL


class EffectivenessRankError(ValueError):
    """Control effectiveness matrix is not full row rank, so no right
    inverse exists and the control channel cannot realize arbitrary
    state-space corrections."""


def zero_drift(x: np.ndarray, t: float) -> np.ndarray:
    return np.zeros_like(x)


def zero_disturbance_for(dim: int) -> Callable[[float], np.ndarray]:
    zero = np.zeros(dim)

    def disturbance(t: float) -> np.ndarray:
        return zero

    return disturbance


def pseudoinverse(g: np.ndarray) -> np.ndarray:
    """Minimum-norm right inverse of a full-row-rank matrix.

    Raises :class:`EffectivenessRankError` when the rows are dependent at
    the working precision.
    """
    g = np.asarray(g, dtype=float)
    if g.ndim != 2:
        raise ValueError("effectiveness matrix must be 2-D")
    n, s = g.shape
    u, svals, vt = np.linalg.svd(g, full_matrices=False)
    tol = max(n, s) * (svals[0] if svals.size else 0.0) * RANK_RTOL
    rank = int(np.sum(svals > tol))
    if rank < n:
        raise EffectivenessRankError(
            f"control effectiveness matrix must have full row rank: rank {rank} < {n} rows"
        )
    return (vt.T / svals) @ u.T


@dataclass(frozen=True)
class SinusoidDisturbance:
    """Componentwise ``a_j sin(f_j t + phi_j)`` with known norm bound."""

    amplitudes: tuple[float, ...]
    frequencies: tuple[float, ...]
    phases: tuple[float, ...]

    def __post_init__(self):
        if not len(self.amplitudes) == len(self.frequencies) == len(self.phases):
            raise ValueError("amplitudes, frequencies, phases must have equal length")

    @property
    def bound(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def __call__(self, t: float) -> np.ndarray:
        a = np.asarray(self.amplitudes)
        f = np.asarray(self.frequencies)
        ph = np.asarray(self.phases)
        return a * np.sin(f * t + ph)


@dataclass(frozen=True)
class AgentModel:
    """One controllable agent: drift, control effectiveness, disturbance.

    ``effectiveness_matrix`` declares a constant ``g``; its right inverse is
    then computed once.  A state/time-varying ``g`` is supplied as the
    ``effectiveness`` callable instead and is re-inverted at every
    evaluation point.
    """

    state_dim: int
    control_dim: int
    drift: Callable[[np.ndarray, float], np.ndarray] = zero_drift
    effectiveness: Callable[[np.ndarray, float], np.ndarray] | None = None
    effectiveness_matrix: np.ndarray | None = None
    disturbance: Callable[[float], np.ndarray] | None = None
    disturbance_bound: float = 0.0

    def __post_init__(self):
        if self.state_dim < 1 or self.control_dim < 1:
            raise ValueError("state and control dimensions must be positive")
        if self.effectiveness is not None and self.effectiveness_matrix is not None:
            raise ValueError("give either a constant effectiveness matrix or a callable, not both")
        if self.effectiveness is None and self.effectiveness_matrix is None:
            if self.state_dim != self.control_dim:
                raise ValueError("default identity effectiveness needs control_dim == state_dim")
            object.__setattr__(self, "effectiveness_matrix", np.eye(self.state_dim))
        if self.effectiveness_matrix is not None:
            mat = np.asarray(self.effectiveness_matrix, dtype=float)
            if mat.shape != (self.state_dim, self.control_dim):
                raise ValueError(
                    f"effectiveness matrix has shape {mat.shape}, expected "
                    f"({self.state_dim}, {self.control_dim})"
                )
            mat.setflags(write=False)
            object.__setattr__(self, "effectiveness_matrix", mat)
        if self.disturbance is None:
            object.__setattr__(self, "disturbance", zero_disturbance_for(self.state_dim))
        if self.disturbance_bound < 0:
            raise ValueError("disturbance bound must be nonnegative")

    @classmethod
    def single_integrator(cls, dim: int, **kwargs) -> "AgentModel":
        return cls(state_dim=dim, control_dim=dim, **kwargs)

    @cached_property
    def effectiveness_pinv(self) -> np.ndarray | None:
        if self.effectiveness_matrix is None:
            return None
        return pseudoinverse(self.effectiveness_matrix)

    def effectiveness_at(self, x: np.ndarray, t: float) -> np.ndarray:
        if self.effectiveness_matrix is not None:
            return self.effectiveness_matrix
        return np.asarray(self.effectiveness(x, t), dtype=float)


@dataclass(frozen=True)
class TargetModel:
    """One uncontrolled target: drift and bounded disturbance."""

    state_dim: int
    drift: Callable[[np.ndarray, float], np.ndarray] = zero_drift
    disturbance: Callable[[float], np.ndarray] | None = None
    disturbance_bound: float = 0.0

    def __post_init__(self):
        if self.state_dim < 1:
            raise ValueError("state dimension must be positive")
        if self.disturbance is None:
            object.__setattr__(self, "disturbance", zero_disturbance_for(self.state_dim))
        if self.disturbance_bound < 0:
            raise ValueError("disturbance bound must be nonnegative")


def _normalized_rows(rows: np.ndarray, cols: slice, what: str) -> np.ndarray:
    for r in range(rows.shape[0]):
        norm = np.linalg.norm(rows[r, cols])
        if norm == 0.0:
            raise ValueError(f"{what} {r} has zero direction vector")
        rows[r, cols] /= norm
    return rows


@dataclass(frozen=True)
class FlowField:
    """Superposition of point sources/sinks, line vortices, and Gaussian
    axial jets, each softened by the ``regularization`` length.

    Parameter tables are row-per-component:
      sources   rows ``(px, py, pz, strength)``
      vortices  rows ``(cx, cy, cz, ax, ay, az, strength)``; rotation about
                the axis follows the right-hand rule for positive strength
      gaussians rows ``(cx, cy, cz, dx, dy, dz, strength, width, length)``
    Axis and direction vectors are normalized at construction.
    """

    sources: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    vortices: np.ndarray = field(default_factory=lambda: np.zeros((0, 7)))
    gaussians: np.ndarray = field(default_factory=lambda: np.zeros((0, 9)))
    regularization: float = 1e-2

    def __post_init__(self):
        if self.regularization <= 0:
            raise ValueError("regularization length must be positive")
        src = np.array(self.sources, dtype=float).reshape(-1, 4)
        vor = np.array(self.vortices, dtype=float).reshape(-1, 7)
        gau = np.array(self.gaussians, dtype=float).reshape(-1, 9)
        vor = _normalized_rows(vor, slice(3, 6), "vortex")
        gau = _normalized_rows(gau, slice(3, 6), "gaussian jet")
        if np.any(gau[:, 7] <= 0) or np.any(gau[:, 8] <= 0):
            raise ValueError("gaussian jet widths and lengths must be positive")
        for arr in (src, vor, gau):
            arr.setflags(write=False)
        object.__setattr__(self, "sources", src)
        object.__setattr__(self, "vortices", vor)
        object.__setattr__(self, "gaussians", gau)

    def velocity_many(self, points: np.ndarray) -> np.ndarray:
        """Field velocity at each row of ``points`` (shape (P, 3))."""
        return _kernels.field_velocity_batch(
            np.asarray(points, dtype=float),
            self.sources,
            self.vortices,
            self.gaussians,
            self.regularization,
        )

    def velocity(self, point: np.ndarray, t: float = 0.0) -> np.ndarray:
        """Field velocity at one 3-D point; time-invariant (``t`` ignored)."""
        return self.velocity_many(np.asarray(point, dtype=float).reshape(1, 3))[0]

    def velocity_planar_many(self, points_xy: np.ndarray) -> np.ndarray:
        """Sample the field in the z=0 plane and keep the planar components."""
        pts = np.asarray(points_xy, dtype=float)
        lifted = np.zeros((pts.shape[0], 3))
        lifted[:, :2] = pts
        return self.velocity_many(lifted)[:, :2]


def field_velocity(flow: FlowField, point: np.ndarray, t: float = 0.0) -> np.ndarray:
    """Total background-flow velocity at a point (sum of all components)."""
    return flow.velocity(point, t)


@dataclass(frozen=True)
class LissajousPath:
    """Periodic reference whose velocity is
    ``(A a cos(a t + phase_x), B b cos(b t), C c cos(c t + phase_z))``."""

    amplitudes: tuple[float, float, float]
    frequencies: tuple[float, float, float]
    phase_x: float = 0.0
    phase_z: float = 0.0

    def velocity(self, t: float) -> np.ndarray:
        ax, ay, az = self.amplitudes
        fx, fy, fz = self.frequencies
        return np.array(
            [
                ax * fx * math.cos(fx * t + self.phase_x),
                ay * fy * math.cos(fy * t),
                az * fz * math.cos(fz * t + self.phase_z),
            ]
        )

    def displacement(self, t0: float, t1: float) -> np.ndarray:
        """Exact integral of the velocity from ``t0`` to ``t1``."""
        ax, ay, az = self.amplitudes
        fx, fy, fz = self.frequencies
        return np.array(
            [
                ax * (math.sin(fx * t1 + self.phase_x) - math.sin(fx * t0 + self.phase_x)),
                ay * (math.sin(fy * t1) - math.sin(fy * t0)),
                az * (math.sin(fz * t1 + self.phase_z) - math.sin(fz * t0 + self.phase_z)),
            ]
        )


def lissajous_velocity(path: LissajousPath, t: float) -> np.ndarray:
    """Reference velocity of the periodic path at time ``t``."""
    return path.velocity(t)


@dataclass(frozen=True)
class OffsetConsensus:
    """Coupled drift steering a group toward commanded pairwise offsets.

    Rate for member ``k``: ``gain * sum_{l in N_k} ((x_l + o_kl) - x_k)``
    with antisymmetric offsets ``o_kl = desired x_k - desired x_l``.  The
    equal-and-opposite structure preserves the group centroid.
    """

    gain: float
    dim: int
    neighbors: tuple[tuple[int, ...], ...]
    offsets: Mapping[tuple[int, int], np.ndarray]

    def __post_init__(self):
        offs = {}
        for (k, l), value in self.offsets.items():
            value = np.asarray(value, dtype=float)
            if value.shape != (self.dim,):
                raise ValueError(f"offset ({k},{l}) has shape {value.shape}, expected ({self.dim},)")
            offs[(k, l)] = value
        for (k, l), value in list(offs.items()):
            mirror = offs.get((l, k))
            if mirror is None:
                offs[(l, k)] = -value
            elif not np.allclose(mirror, -value, atol=1e-12):
                raise ValueError(f"offsets ({k},{l}) and ({l},{k}) are not equal and opposite")
        for k, nbrs in enumerate(self.neighbors):
            for l in nbrs:
                if (k, l) not in offs:
                    offs[(k, l)] = np.zeros(self.dim)
                    offs[(l, k)] = np.zeros(self.dim)
        object.__setattr__(self, "offsets", offs)

    @classmethod
    def from_formation(
        cls,
        gain: float,
        points: np.ndarray,
        edges: Sequence[tuple[int, int]],
    ) -> "OffsetConsensus":
        """Consensus toward the relative geometry of ``points`` over ``edges``."""
        points = np.asarray(points, dtype=float)
        count, dim = points.shape
        nbrs: list[set[int]] = [set() for _ in range(count)]
        offsets = {}
        for k, l in edges:
            nbrs[k].add(l)
            nbrs[l].add(k)
            offsets[(k, l)] = points[k] - points[l]
        return cls(
            gain=gain,
            dim=dim,
            neighbors=tuple(tuple(sorted(n)) for n in nbrs),
            offsets=offsets,
        )

    @cached_property
    def _linear_form(self) -> tuple[np.ndarray, np.ndarray]:
        """Precomputed ``rates = A @ flat_states + b`` (the coupling is affine)."""
        count = len(self.neighbors)
        n = count * self.dim
        matrix = np.zeros((n, n))
        bias = np.zeros(n)
        eye = np.eye(self.dim)
        for k, nbrs in enumerate(self.neighbors):
            rows = slice(k * self.dim, (k + 1) * self.dim)
            for l in nbrs:
                matrix[rows, l * self.dim:(l + 1) * self.dim] += eye
                matrix[rows, k * self.dim:(k + 1) * self.dim] -= eye
                bias[rows] += self.offsets[(k, l)]
        return self.gain * matrix, self.gain * bias

    def rates(self, states: np.ndarray, t: float = 0.0) -> np.ndarray:
        """Consensus velocity for each group member (shape (M, dim))."""
        states = np.asarray(states, dtype=float)
        matrix, bias = self._linear_form
        return (matrix @ states.ravel() + bias).reshape(states.shape)

    def stacked_rates(self, flat_states: np.ndarray, t: float = 0.0) -> np.ndarray:
        """Same coupling over an already-flattened state stack."""
        matrix, bias = self._linear_form
        return matrix @ flat_states + bias
