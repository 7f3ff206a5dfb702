"""Coverage graph construction and the spectral toolbox built on it.

The coverage graph connects two stations when their coverage radii overlap.
Its Laplacian spectrum drives every stability criterion, so the eigensolver
(cyclic Jacobi rotations) and the Gershgorin disc computation live here too.
The Jacobi solver is deliberately dependency-free: the matrices involved are
small and symmetric, and keeping the rotation loop explicit makes the
off-diagonal residual a checkable quantity rather than a black box.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_EIG_TOL = 1e-12
MAX_JACOBI_SWEEPS = 100
SYMMETRY_TOL = 1e-9


class AsymmetricMatrixError(Exception):
    """Input matrix is not symmetric within tolerance."""


class DisconnectedGraphError(Exception):
    """Operation requires a connected graph."""


@dataclass(frozen=True)
class CoverageGraph:
    """Undirected 0/1 adjacency over base stations."""

    adjacency: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("adjacency must be square")
        if np.any(np.diag(a) != 0):
            raise ValueError("adjacency diagonal must be zero")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        object.__setattr__(self, "adjacency", a)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def degree(self) -> np.ndarray:
        return np.diag(self.adjacency.sum(axis=1))

    def neighbors(self, i: int) -> list[int]:
        return [int(j) for j in np.nonzero(self.adjacency[i])[0]]

    def edges(self) -> list[tuple[int, int]]:
        """Undirected edges as (i, j) with i < j, sorted."""
        i_idx, j_idx = np.nonzero(np.triu(self.adjacency, k=1))
        return list(zip(i_idx.tolist(), j_idx.tolist()))


@dataclass(frozen=True)
class SpectrumResult:
    """Eigenvalues sorted ascending plus the achieved off-diagonal residual."""

    eigenvalues: np.ndarray
    achieved_tolerance: float


@dataclass(frozen=True)
class GershgorinDisc:
    center: float
    radius: float


def build_coverage_graph(positions: list[tuple[float, float]],
                         radii: list[float]) -> CoverageGraph:
    """Connect stations whose coverage radii together exceed their distance.

    Ties (radii summing exactly to the distance) are not connected.
    """
    if len(positions) != len(radii):
        raise ValueError("positions and radii must have the same length")
    if len(positions) < 1:
        raise ValueError("need at least one node")
    pos = np.asarray(positions, dtype=float)
    rad = np.asarray(radii, dtype=float)
    n = len(pos)
    adjacency = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = float(np.hypot(*(pos[i] - pos[j])))
            if rad[i] + rad[j] > d:
                adjacency[i, j] = adjacency[j, i] = 1.0
    return CoverageGraph(adjacency)


def laplacian(graph: CoverageGraph) -> np.ndarray:
    """L = D - A; every row sums to zero."""
    return graph.degree - graph.adjacency


def connected_components(adjacency: np.ndarray) -> int:
    """Count connected components by breadth-first search over the
    nonzero off-diagonal pattern."""
    a = np.asarray(adjacency)
    n = a.shape[0]
    seen = np.zeros(n, dtype=bool)
    components = 0
    for start in range(n):
        if seen[start]:
            continue
        components += 1
        stack = [start]
        seen[start] = True
        while stack:
            v = stack.pop()
            for w in range(n):
                if w != v and not seen[w] and a[v, w] != 0:
                    seen[w] = True
                    stack.append(w)
    return components


def _off_diagonal_norm(m: np.ndarray) -> float:
    off = m - np.diag(np.diag(m))
    return float(np.sqrt((off * off).sum()))


def _jacobi_rotate(a: np.ndarray, v: np.ndarray, p: int, q: int) -> None:
    """Zero a[p, q] with a Givens rotation, accumulating vectors into v."""
    if a[p, q] == 0.0:
        return
    diff = a[q, q] - a[p, p]
    if abs(a[p, q]) < 1e-300 * abs(diff):
        t = a[p, q] / diff
    else:
        phi = diff / (2.0 * a[p, q])
        t = 1.0 / (abs(phi) + np.sqrt(phi * phi + 1.0))
        if phi < 0.0:
            t = -t
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c

    rot_p = a[:, p].copy()
    rot_q = a[:, q].copy()
    a[:, p] = c * rot_p - s * rot_q
    a[:, q] = s * rot_p + c * rot_q
    row_p = a[p, :].copy()
    row_q = a[q, :].copy()
    a[p, :] = c * row_p - s * row_q
    a[q, :] = s * row_p + c * row_q
    a[p, q] = 0.0
    a[q, p] = 0.0

    vec_p = v[:, p].copy()
    vec_q = v[:, q].copy()
    v[:, p] = c * vec_p - s * vec_q
    v[:, q] = s * vec_p + c * vec_q


def jacobi_eigh(m: np.ndarray, tol: float = DEFAULT_EIG_TOL) -> tuple[np.ndarray, np.ndarray, float]:
    """Cyclic Jacobi diagonalization of a symmetric matrix.

    Returns (eigenvalues ascending, eigenvectors as columns, achieved
    off-diagonal Frobenius norm).  Rotation sweeps stop once the off-diagonal
    norm falls at or below ``tol`` or after MAX_JACOBI_SWEEPS sweeps.
    """
    a = np.array(m, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    if n == 1:
        return np.array([a[0, 0]]), v, 0.0
    scale = max(1.0, float(np.abs(a).max()))
    for _ in range(MAX_JACOBI_SWEEPS):
        if _off_diagonal_norm(a) <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) > tol * scale / (n * n):
                    _jacobi_rotate(a, v, p, q)
    values = np.diag(a).copy()
    order = np.argsort(values, kind="stable")
    return values[order], v[:, order], _off_diagonal_norm(a)


def symmetric_eigenvalues(m: np.ndarray, tol: float = DEFAULT_EIG_TOL) -> SpectrumResult:
    """Eigenvalues of a symmetric matrix, sorted ascending.

    Raises AsymmetricMatrixError when the input is asymmetric beyond
    SYMMETRY_TOL; callers holding a general matrix must symmetrize it first
    via (M + M^T) / 2.
    """
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    scale = max(1.0, float(np.abs(a).max()))
    if float(np.abs(a - a.T).max()) > SYMMETRY_TOL * scale:
        raise AsymmetricMatrixError("asymmetric input; symmetrize via (M + M^T)/2 first")
    sym = (a + a.T) / 2.0
    values, _, residual = jacobi_eigh(sym, tol)
    return SpectrumResult(eigenvalues=values, achieved_tolerance=residual)


def gershgorin_discs(m: np.ndarray) -> list[GershgorinDisc]:
    """One disc per row: center at the diagonal entry, radius the summed
    absolute off-diagonal row entries."""
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    discs = []
    for i in range(a.shape[0]):
        radius = float(np.abs(a[i]).sum() - abs(a[i, i]))
        discs.append(GershgorinDisc(center=float(a[i, i]), radius=radius))
    return discs


def convergence_factor(lap: np.ndarray, eps: float) -> float:
    """Worst contraction factor max_{i>=2} |1 - eps * lambda_i| of a
    consensus step on a connected graph."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    lap = np.asarray(lap, dtype=float)
    if connected_components(lap) > 1:
        raise DisconnectedGraphError("graph is disconnected; consensus cannot reach a single value")
    spectrum = symmetric_eigenvalues(lap)
    nonzero_modes = spectrum.eigenvalues[1:]
    return float(np.max(np.abs(1.0 - eps * nonzero_modes)))
