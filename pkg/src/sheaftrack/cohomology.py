"""Degree-0 sheaf cohomology: global sections, relative sections, feasibility.

Global sections are the kernel of the coboundary; relative sections are
kernel vectors supported away from a boundary vertex set.  Tracking a target
set is well posed exactly when the relative cohomology with respect to the
targets vanishes, which is decided here by a numerical rank computation on
the restricted coboundary (not on the Laplacian, to avoid squaring the
condition number).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .sheaf import CellularSheaf, Cochain, coboundary

# Machine-epsilon-scaled rank rule: singular values below
# max(m, n) * sigma_max * RANK_RTOL count as zero.
RANK_RTOL = 1e-12


@dataclass(frozen=True)
class CohomologyReport:
    """Dimension and an orthonormal basis of a degree-0 (relative) kernel."""

    dimension: int
    basis: tuple[Cochain, ...]
    rank_tolerance: float

    def basis_matrix(self) -> np.ndarray:
        """Basis vectors as columns (empty (n, 0) matrix when trivial)."""
        if not self.basis:
            return np.zeros((0, 0))
        return np.column_stack([c.vector for c in self.basis])


def _nullspace(matrix: np.ndarray) -> tuple[np.ndarray, float]:
    """Orthonormal kernel basis (columns) and the rank tolerance used."""
    m, n = matrix.shape
    if n == 0:
        return np.zeros((0, 0)), 0.0
    if m == 0:
        return np.eye(n), 0.0
    _, svals, vt = np.linalg.svd(matrix, full_matrices=True)
    smax = svals[0] if svals.size else 0.0
    tol = max(m, n) * smax * RANK_RTOL
    rank = int(np.sum(svals > tol))
    return vt[rank:].T.copy(), tol


def _validate_subset(sheaf: CellularSheaf, vertices: Iterable[int]) -> tuple[int, ...]:
    members = sorted(set(int(v) for v in vertices))
    for v in members:
        if not 0 <= v < sheaf.graph.vertex_count:
            raise ValueError(f"unknown vertex {v}")
    return tuple(members)


def global_sections(sheaf: CellularSheaf) -> CohomologyReport:
    """Orthonormal basis of the space of global sections (ker of coboundary)."""
    return relative_cohomology(sheaf, ())


def relative_cohomology(sheaf: CellularSheaf, boundary: Iterable[int]) -> CohomologyReport:
    """Sections vanishing on ``boundary``, as full-support 0-cochains.

    Implemented by deleting the boundary vertices' block columns of the
    coboundary and computing the kernel of what remains; basis vectors are
    re-embedded with zero blocks on the boundary.
    """
    members = _validate_subset(sheaf, boundary)
    excluded = set(members)
    keep = [v for v in range(sheaf.graph.vertex_count) if v not in excluded]
    if not keep:
        return CohomologyReport(dimension=0, basis=(), rank_tolerance=0.0)

    delta = np.asarray(coboundary(sheaf, sparse=False))
    cols = np.concatenate([np.arange(sheaf.vertex_slice(v).start, sheaf.vertex_slice(v).stop) for v in keep])
    kernel, tol = _nullspace(delta[:, cols])

    basis = []
    for col in range(kernel.shape[1]):
        full = np.zeros(sheaf.total_vertex_dim)
        full[cols] = kernel[:, col]
        basis.append(Cochain.from_vector(sheaf, 0, full))
    return CohomologyReport(dimension=len(basis), basis=tuple(basis), rank_tolerance=tol)


def check_feasibility(sheaf: CellularSheaf, targets: Iterable[int]) -> tuple[bool, CohomologyReport]:
    """Is tracking the given target set well posed?

    True exactly when no nonzero section vanishes on the targets; when false,
    the report's basis spans the unconstrained agent directions (the
    obstruction).
    """
    report = relative_cohomology(sheaf, targets)
    return report.dimension == 0, report


def first_cohomology_dimension(sheaf: CellularSheaf) -> int:
    """Dimension of degree-1 cohomology via rank-nullity (no representatives)."""
    delta = np.asarray(coboundary(sheaf, sparse=False))
    m, n = delta.shape
    if m == 0:
        return 0
    svals = np.linalg.svd(delta, compute_uv=False)
    tol = max(m, n) * (svals[0] if svals.size else 0.0) * RANK_RTOL
    rank = int(np.sum(svals > tol))
    return m - rank
