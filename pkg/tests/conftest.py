"""Shared fixtures and independent oracles for the test suite."""
from __future__ import annotations

import numpy as np
import pytest

from loadsync.topology import CoverageGraph, connected_components


def k2_graph() -> CoverageGraph:
    return CoverageGraph(np.array([[0.0, 1.0], [1.0, 0.0]]))


def path_graph(n: int) -> CoverageGraph:
    a = np.zeros((n, n))
    for i in range(n - 1):
        a[i, i + 1] = a[i + 1, i] = 1.0
    return CoverageGraph(a)


def complete_graph(n: int) -> CoverageGraph:
    a = np.ones((n, n)) - np.eye(n)
    return CoverageGraph(a)


def star_graph(leaves: int) -> CoverageGraph:
    n = leaves + 1
    a = np.zeros((n, n))
    a[0, 1:] = 1.0
    a[1:, 0] = 1.0
    return CoverageGraph(a)


def lattice_graph(rows: int, cols: int) -> CoverageGraph:
    n = rows * cols
    a = np.zeros((n, n))
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                a[i, i + 1] = a[i + 1, i] = 1.0
            if r + 1 < rows:
                a[i, i + cols] = a[i + cols, i] = 1.0
    return CoverageGraph(a)


def random_connected_graph(rng: np.random.Generator, max_n: int = 32) -> CoverageGraph:
    """Erdos-Renyi draw, resampled until connected."""
    n = int(rng.integers(2, max_n + 1))
    p = min(1.0, 2.5 * np.log(max(n, 2)) / n)
    while True:
        a = (rng.random((n, n)) < p).astype(float)
        a = np.triu(a, k=1)
        a = a + a.T
        if connected_components(a + np.eye(n) * 0) == 1 and a.any():
            return CoverageGraph(a)


def charpoly_eigenvalues(m: np.ndarray) -> np.ndarray:
    """Eigenvalues as characteristic-polynomial roots (Faddeev-LeVerrier
    coefficients, then the companion-root solver).  Independent of the
    Jacobi rotation path under test."""
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    coeffs = np.zeros(n + 1)
    coeffs[0] = 1.0
    work = np.zeros_like(m)
    for k in range(1, n + 1):
        work = m @ work + coeffs[k - 1] * m
        coeffs[k] = -np.trace(work) / k
    roots = np.roots(coeffs)
    return np.sort(roots.real)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(2024)
