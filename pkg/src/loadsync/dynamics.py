"""Load evolution as a networked dynamical system.

A node's load moves under a per-node self term f_i (the in-cell scheduler)
and per-edge coupling terms g_ij (the handover algorithm), wired through the
coverage graph.  This module holds the generic callable-based model, its
linearization around the balanced equilibrium, a forward-Euler integrator
for the continuous form, and the two discrete update laws: the conservative
consensus step and the non-conservative step with its symmetric/antisymmetric
decomposition into an effective Laplacian plus a disturbance vector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .topology import CoverageGraph

EQUILIBRIUM_TOL = 1e-9
FD_STEP = 1e-6
BLOWUP_LIMIT = 10.0

CONTINUOUS = "continuous"
DISCRETE_CONSERVATIVE = "discrete-conservative"
DISCRETE_NONCONSERVATIVE = "discrete-nonconservative"


class NonSmoothDynamicsError(Exception):
    """Finite differencing produced a non-finite derivative."""


SelfFn = Callable[[float], float]
CouplingFn = Callable[[float, float], float]


@dataclass(frozen=True)
class DynamicsSpec:
    """Per-node self functions and per-pair coupling functions around a
    common equilibrium load.

    ``coupling_fns`` may be a single callable (shared by every ordered pair)
    or a mapping from ordered pairs (i, j) to callables.  Construction checks
    the synchronization preconditions: every f_i vanishes at the equilibrium
    and every g_ij vanishes on the diagonal.
    """

    n: int
    self_fns: Sequence[SelfFn]
    coupling_fns: CouplingFn | Mapping[tuple[int, int], CouplingFn]
    equilibrium: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one node")
        if len(self.self_fns) != self.n:
            raise ValueError("one self function per node required")
        rho = self.equilibrium
        for i, f in enumerate(self.self_fns):
            if abs(f(rho)) > EQUILIBRIUM_TOL:
                raise ValueError(f"f_{i} does not vanish at the equilibrium: {f(rho)}")
        if callable(self.coupling_fns):
            if abs(self.coupling_fns(rho, rho)) > EQUILIBRIUM_TOL:
                raise ValueError("coupling does not vanish on the diagonal")
        else:
            for (i, j), g in self.coupling_fns.items():
                if abs(g(rho, rho)) > EQUILIBRIUM_TOL:
                    raise ValueError(f"g_{i}{j} does not vanish on the diagonal")

    def coupling(self, i: int, j: int) -> CouplingFn:
        if callable(self.coupling_fns):
            return self.coupling_fns
        try:
            return self.coupling_fns[(i, j)]
        except KeyError:
            raise KeyError(f"no coupling defined for pair ({i}, {j})")

    @classmethod
    def homogeneous(cls, n: int, self_fn: SelfFn, coupling_fn: CouplingFn,
                    equilibrium: float) -> "DynamicsSpec":
        return cls(n=n, self_fns=tuple([self_fn] * n),
                   coupling_fns=coupling_fn, equilibrium=equilibrium)


def proportional_self(gain: float, equilibrium: float) -> SelfFn:
    """In-cell scheduler pulling the load back toward the equilibrium."""
    return lambda rho: -gain * (rho - equilibrium)


def diffusive_coupling(gain: float) -> CouplingFn:
    """Linear load sharing from the more loaded node to the less loaded one."""
    return lambda rho_i, rho_j: -gain * (rho_i - rho_j)


def sine_coupling() -> CouplingFn:
    """Bounded load sharing that saturates for large differences."""
    return lambda rho_i, rho_j: math.sin(rho_j - rho_i)


@dataclass(frozen=True)
class LinearModel:
    """First-order model around the equilibrium.

    ``d_f`` and ``k`` hold the diagonals of the corresponding diagonal
    matrices; ``q`` is the adjacency-masked coupling-slope matrix, ``m`` the
    full system matrix and ``s`` its exactly symmetric part.
    """

    d_f: np.ndarray
    h: np.ndarray
    q: np.ndarray
    k: np.ndarray
    m: np.ndarray
    s: np.ndarray
    adjacency: np.ndarray

    def __post_init__(self):
        if not np.allclose(self.k, self.q.sum(axis=1), atol=0):
            raise ValueError("k must equal the row sums of q")
        if not np.array_equal(self.s, self.s.T):
            raise ValueError("s must be exactly symmetric")


@dataclass
class EpsilonMatrix:
    """Per-edge transfer fractions for one non-conservative step.

    Entries may be asymmetric; each must lie in [0, 1) with a zero diagonal.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("values must be square")
        if np.any(v < 0) or np.any(v >= 1):
            raise ValueError("transfer fractions must lie in [0, 1)")
        if np.any(np.diag(v) != 0):
            raise ValueError("diagonal must be zero")
        self.values = v

    def symmetric_part(self) -> np.ndarray:
        return (self.values + self.values.T) / 2.0

    def antisymmetric_part(self) -> np.ndarray:
        return (self.values - self.values.T) / 2.0


@dataclass
class Trajectory:
    """Recorded states of one simulated run, one row per step."""

    states: np.ndarray
    omegas: np.ndarray
    step_kind: str
    blown_up: bool = False

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.omegas = np.asarray(self.omegas, dtype=float)


def _central_difference(fn: Callable[[float], float], x: float, step: float = FD_STEP) -> float:
    d = (fn(x + step) - fn(x - step)) / (2.0 * step)
    if not math.isfinite(d):
        raise NonSmoothDynamicsError(f"non-finite derivative at {x}")
    return d


def linearize(spec: DynamicsSpec, graph: CoverageGraph, fd_step: float = FD_STEP) -> LinearModel:
    """First-order expansion of the dynamics around the equilibrium.

    Self slopes come from central differences of f_i; coupling slopes
    h_ij are the partial derivative of g_ij in its first argument on the
    diagonal, again by central differences.
    """
    if graph.n != spec.n:
        raise ValueError("graph size does not match the dynamics")
    rho = spec.equilibrium
    a = graph.adjacency

    d_f = np.array([_central_difference(f, rho, fd_step) for f in spec.self_fns])

    h = np.zeros((spec.n, spec.n))
    for i in range(spec.n):
        for j in range(spec.n):
            if i != j and a[i, j]:
                g = spec.coupling(i, j)
                h[i, j] = _central_difference(lambda x, g=g: g(x, rho), rho, fd_step)

    q = a * h
    k = q.sum(axis=1)
    m = np.diag(d_f) + np.diag(k) - q
    s = (m + m.T) / 2.0
    return LinearModel(d_f=d_f, h=h, q=q, k=k, m=m, s=s, adjacency=a.copy())


def integrate_continuous(spec: DynamicsSpec, graph: CoverageGraph, rho0: np.ndarray,
                         dt: float = 0.01, steps: int = 1000) -> Trajectory:
    """Forward-Euler trajectory of the continuous load dynamics.

    Terminates early with the blow-up flag set if any load leaves
    [-BLOWUP_LIMIT, BLOWUP_LIMIT]; that is an instability diagnostic, not an
    error.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    rho = np.array(rho0, dtype=float)
    if rho.shape != (spec.n,):
        raise ValueError("initial state has wrong length")
    a = graph.adjacency
    states = [rho.copy()]
    blown_up = False
    for _ in range(steps):
        rate = np.array([spec.self_fns[i](rho[i]) for i in range(spec.n)])
        for i in range(spec.n):
            for j in range(spec.n):
                if i != j and a[i, j]:
                    rate[i] += spec.coupling(i, j)(rho[i], rho[j])
        rho = rho + dt * rate
        states.append(rho.copy())
        if np.any(np.abs(rho) > BLOWUP_LIMIT):
            blown_up = True
            break
    return Trajectory(states=np.array(states), omegas=np.empty((0, spec.n)),
                      step_kind=CONTINUOUS, blown_up=blown_up)


def step_conservative(rho: np.ndarray, eps: float, graph: CoverageGraph,
                      self_fns: Sequence[SelfFn] | None = None) -> np.ndarray:
    """One symmetric averaging step rho' = (I - eps L) rho.

    The mean load is preserved exactly up to rounding.  ``self_fns``
    optionally adds the per-node scheduler term of the general discrete
    update; it is off by default because inter-BS balancing alone is the
    regime under test.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    rho = np.asarray(rho, dtype=float)
    a = graph.adjacency
    new = rho + eps * (a @ rho - a.sum(axis=1) * rho)
    if self_fns is not None:
        new = new + np.array([f(x) for f, x in zip(self_fns, rho)])
    return new


def step_nonconservative(rho: np.ndarray, eps: EpsilonMatrix, graph: CoverageGraph,
                         self_fns: Sequence[SelfFn] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """One asymmetric transfer step.

    Returns (next state, omega) where omega is the antisymmetric residual;
    the identity rho' = (I - L_hat) rho + omega holds with L_hat built from
    the symmetrized fractions.
    """
    rho = np.asarray(rho, dtype=float)
    a = graph.adjacency
    e = eps.values * a
    new = rho + e @ rho - e.sum(axis=1) * rho
    w = eps.antisymmetric_part() * a
    omega = w @ rho - w.sum(axis=1) * rho
    if self_fns is not None:
        new = new + np.array([f(x) for f, x in zip(self_fns, rho)])
    return new, omega


def effective_laplacian(eps: EpsilonMatrix, graph: CoverageGraph) -> np.ndarray:
    """Symmetric Laplacian of the averaged transfer fractions, L_hat."""
    e_sym = eps.symmetric_part() * graph.adjacency
    return np.diag(e_sym.sum(axis=1)) - e_sym


def error_state(rho: np.ndarray) -> np.ndarray:
    """Deviation from the current mean; components sum to zero."""
    rho = np.asarray(rho, dtype=float)
    return rho - rho.mean()


def mean_drift(omega: np.ndarray) -> float:
    """Per-step drift of the mean load caused by non-conservation."""
    return float(np.asarray(omega, dtype=float).mean())
