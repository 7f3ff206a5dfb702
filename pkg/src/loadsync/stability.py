"""Stability criteria for the balanced equilibrium and the oscillation bound.

Each check returns a StabilityReport with a three-way verdict.  The
sufficient conditions (sign tests, Gershgorin rows) claim "stable" only with
slack beyond STRICT_TOL; their failure alone never claims "unstable",
because they are sufficient, not necessary.  "Unstable" requires positive
spectral evidence: a positive eigenvalue of a symmetric system matrix, a
positive trace (which forces an eigenvalue with positive real part), or a
non-contracting consensus factor.

The oscillation bound evaluates the disturbance-driven error ceiling
(alpha_max / (1 - gamma_max))^2, with gamma measured on the subspace
orthogonal to the all-ones vector: the mean mode of a stochastic-like step
matrix is always 1 and carries no error, so leaving it in would make the
bound vacuous.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import (DISCRETE_NONCONSERVATIVE, DynamicsSpec, EpsilonMatrix,
                       LinearModel, Trajectory, effective_laplacian, error_state,
                       linearize)
from .topology import (CoverageGraph, connected_components, convergence_factor,
                       gershgorin_discs, jacobi_eigh, symmetric_eigenvalues)

STRICT_TOL = 1e-9

STABLE = "stable"
UNSTABLE = "unstable"
INCONCLUSIVE = "inconclusive"

HOMOGENEOUS_CONTINUOUS = "homogeneous-continuous"
HETERO_CONSERVATIVE = "heterogeneous-conservative"
HETERO_NONCONSERVATIVE = "heterogeneous-nonconservative"
DISCRETE_CONSERVATIVE_REGIME = "discrete-conservative"
DISCRETE_NONCONSERVATIVE_REGIME = "discrete-nonconservative"

_PROBE_OFFSETS = (-0.053, 0.029, 0.071)


class RegimeMismatchError(Exception):
    """The model handed to a check does not belong to that check's regime."""


@dataclass(frozen=True)
class StabilityReport:
    regime: str
    verdict: str
    evidence: dict = field(default_factory=dict)

    def render(self) -> str:
        lines = [f"regime: {self.regime}", f"verdict: {self.verdict}"]
        for key in sorted(self.evidence):
            value = self.evidence[key]
            if isinstance(value, np.ndarray):
                value = np.array2string(value, precision=9, max_line_width=120)
            lines.append(f"{key}: {value}")
        return "\n".join(lines)


@dataclass(frozen=True)
class OscillationBound:
    """Ceiling on the squared error norm under non-conservative transfer."""

    gamma_max: float
    alpha_max: float
    v_tilde: float
    bounded: bool
    gamma_series: np.ndarray
    alpha_series: np.ndarray


def _is_homogeneous(spec: DynamicsSpec) -> bool:
    rho = spec.equilibrium
    f0 = spec.self_fns[0]
    for f in spec.self_fns[1:]:
        for d in _PROBE_OFFSETS:
            if abs(f(rho + d) - f0(rho + d)) > STRICT_TOL:
                return False
    if not callable(spec.coupling_fns):
        pairs = list(spec.coupling_fns.values())
        g0 = pairs[0]
        for g in pairs[1:]:
            for d1 in _PROBE_OFFSETS:
                for d2 in _PROBE_OFFSETS:
                    if abs(g(rho + d1, rho + d2) - g0(rho + d1, rho + d2)) > STRICT_TOL:
                        return False
    return True


def check_homogeneous(spec: DynamicsSpec, graph: CoverageGraph | None = None) -> StabilityReport:
    """Sign test for identical nodes: both the self slope at the equilibrium
    and the coupling slope at zero difference must be negative.

    With a graph, the evidence carries the full mode spectrum
    f'(rho) + g'(0) * lambda_i, which also supplies proof of instability
    when some mode is positive.
    """
    if not _is_homogeneous(spec):
        raise RegimeMismatchError("spec is not homogeneous across nodes/edges")
    rho = spec.equilibrium
    from .dynamics import _central_difference
    f_prime = _central_difference(spec.self_fns[0], rho)
    g0 = spec.coupling_fns if callable(spec.coupling_fns) else next(iter(spec.coupling_fns.values()))
    g_prime = _central_difference(lambda x: g0(x, rho), rho)

    evidence: dict = {"f_prime": f_prime, "g_prime": g_prime}
    modes = None
    if graph is not None:
        lap_eigs = symmetric_eigenvalues(graph.degree - graph.adjacency).eigenvalues
        modes = f_prime + g_prime * lap_eigs
        evidence["mode_eigenvalues"] = modes

    if f_prime < -STRICT_TOL and g_prime < -STRICT_TOL:
        verdict = STABLE
    elif f_prime > STRICT_TOL or (modes is not None and np.max(modes) > STRICT_TOL):
        verdict = UNSTABLE
    else:
        verdict = INCONCLUSIVE
    return StabilityReport(regime=HOMOGENEOUS_CONTINUOUS, verdict=verdict, evidence=evidence)


def _edge_list(adjacency: np.ndarray) -> list[tuple[int, int]]:
    idx = np.nonzero(adjacency)
    return [(int(i), int(j)) for i, j in zip(*idx) if i != j]


def check_conservative_hetero(model: LinearModel) -> StabilityReport:
    """Sign test for symmetric coupling: every self slope and every
    present-edge coupling slope must be negative.

    The symmetric system matrix makes the spectrum decisive in the failure
    direction: a positive eigenvalue of M is proof of instability, while the
    sign conditions plus Gershgorin already pin all eigenvalues at or below
    the worst self slope when they hold.
    """
    asym = float(np.abs(model.q - model.q.T).max())
    if asym > STRICT_TOL:
        raise RegimeMismatchError(
            "coupling slopes are asymmetric: use the nonconservative check")

    edges = _edge_list(model.adjacency)
    bad_nodes = [i for i, fp in enumerate(model.d_f) if fp > STRICT_TOL]
    bad_edges = [(i, j) for i, j in edges if model.h[i, j] > STRICT_TOL]
    signs_ok = (np.all(model.d_f < -STRICT_TOL)
                and all(model.h[i, j] < -STRICT_TOL for i, j in edges))

    m_sym = (model.m + model.m.T) / 2.0
    spectrum = symmetric_eigenvalues(m_sym).eigenvalues
    discs = gershgorin_discs(model.m)
    margins = np.array([d.center + d.radius for d in discs])

    evidence: dict = {
        "m_eigenvalues": spectrum,
        "disc_right_edges": margins,
        "self_slopes": model.d_f,
        "violating_nodes": bad_nodes,
        "violating_edges": bad_edges,
    }
    if signs_ok:
        verdict = STABLE
    elif spectrum[-1] > STRICT_TOL:
        verdict = UNSTABLE
    else:
        verdict = INCONCLUSIVE
    return StabilityReport(regime=HETERO_CONSERVATIVE, verdict=verdict, evidence=evidence)


def check_nonconservative_hetero(model: LinearModel) -> StabilityReport:
    """Row-dominance test for asymmetric coupling.

    For every node the combined outflow rate |2 f_i' + sum_j a_ij h_ij| must
    be at least the inflow rate |sum_j a_ji h_ji|; together with the sign
    conditions this places every Gershgorin disc of the symmetric part in the
    closed left half-plane.  Row failures are inconclusive on their own; a
    positive trace of M is the instability certificate (the eigenvalue real
    parts sum to it).
    """
    n = model.m.shape[0]
    a = model.adjacency
    out_rate = np.array([np.dot(a[i], model.h[i]) for i in range(n)])
    in_rate = np.array([np.dot(a[:, i], model.h[:, i]) for i in range(n)])
    lhs = np.abs(2.0 * model.d_f + out_rate)
    rhs = np.abs(in_rate)
    row_slack = lhs - rhs

    edges = _edge_list(a)
    signs_ok = (np.all(model.d_f < -STRICT_TOL)
                and all(model.h[i, j] <= STRICT_TOL for i, j in edges))
    rows_ok = bool(np.all(row_slack > STRICT_TOL))

    s_spectrum = symmetric_eigenvalues(model.s).eigenvalues
    evidence: dict = {
        "row_slack": row_slack,
        "s_eigenvalues": s_spectrum,
        "self_slopes": model.d_f,
        "violating_rows": [int(i) for i in np.nonzero(row_slack <= STRICT_TOL)[0]],
        "trace": float(np.trace(model.m)),
    }
    if signs_ok and rows_ok:
        verdict = STABLE
    elif np.trace(model.m) > STRICT_TOL:
        verdict = UNSTABLE
    else:
        verdict = INCONCLUSIVE
    return StabilityReport(regime=HETERO_NONCONSERVATIVE, verdict=verdict, evidence=evidence)


def check_discrete_step(lap: np.ndarray, eps: float) -> StabilityReport:
    """Convergence test of the discrete averaging step: the step size must
    stay below 2 / lambda_max, equivalently the worst mode factor below 1."""
    lap = np.asarray(lap, dtype=float)
    components = connected_components(lap)
    if components > 1:
        return StabilityReport(regime=DISCRETE_CONSERVATIVE_REGIME, verdict=INCONCLUSIVE,
                               evidence={"components": components})
    spectrum = symmetric_eigenvalues(lap).eigenvalues
    lam_max = float(spectrum[-1])
    eta = convergence_factor(lap, eps)
    evidence = {
        "lambda_max": lam_max,
        "eta": eta,
        "eps": eps,
        "eps_limit": 2.0 / lam_max,
        "eigenvalues": spectrum,
    }
    verdict = STABLE if eta <= 1.0 - STRICT_TOL else UNSTABLE
    return StabilityReport(regime=DISCRETE_CONSERVATIVE_REGIME, verdict=verdict,
                           evidence=evidence)


def mean_orthogonal_basis(n: int) -> np.ndarray:
    """Orthonormal columns spanning the complement of the all-ones vector."""
    basis = np.zeros((n, n - 1))
    for k in range(1, n):
        scale = 1.0 / np.sqrt(k * (k + 1))
        basis[:k, k - 1] = scale
        basis[k, k - 1] = -k * scale
    return basis


def deflated_gamma(step_matrix: np.ndarray) -> float:
    """Largest absolute eigenvalue of a symmetric step matrix restricted to
    the mean-orthogonal subspace."""
    n = step_matrix.shape[0]
    if n == 1:
        return 0.0
    p = mean_orthogonal_basis(n)
    reduced = p.T @ step_matrix @ p
    reduced = (reduced + reduced.T) / 2.0
    values, _, _ = jacobi_eigh(reduced)
    return float(np.max(np.abs(values)))


def oscillation_bound(trajectory: Trajectory, eps_history: list[EpsilonMatrix],
                      graph: CoverageGraph) -> OscillationBound:
    """Error ceiling for a recorded non-conservative run.

    Per step, alpha is the mean-removed disturbance norm and gamma the
    deflated spectral radius of the averaging matrix; the bound combines
    their suprema.  gamma_max >= 1 leaves the ceiling undefined and only the
    series are meaningful.
    """
    if trajectory.step_kind != DISCRETE_NONCONSERVATIVE:
        raise ValueError("oscillation bound needs a non-conservative trajectory")
    steps = trajectory.omegas.shape[0]
    if steps == 0:
        raise ValueError("trajectory has no recorded disturbances")
    if len(eps_history) != steps:
        raise ValueError("one transfer matrix per recorded step required")

    n = graph.n
    identity = np.eye(n)
    gammas = np.empty(steps)
    alphas = np.empty(steps)
    previous_values = None
    previous_gamma = None
    for k in range(steps):
        values = eps_history[k].values
        # stationary stretches share one spectral radius computation
        if previous_values is None or not np.array_equal(values, previous_values):
            l_hat = effective_laplacian(eps_history[k], graph)
            previous_gamma = deflated_gamma(identity - l_hat)
            previous_values = values
        gammas[k] = previous_gamma
        w = trajectory.omegas[k]
        alphas[k] = float(np.linalg.norm(w - w.mean()))

    gamma_max = float(gammas.max())
    alpha_max = float(alphas.max())
    bounded = gamma_max < 1.0
    v_tilde = (alpha_max / (1.0 - gamma_max)) ** 2 if bounded else float("nan")
    return OscillationBound(gamma_max=gamma_max, alpha_max=alpha_max, v_tilde=v_tilde,
                            bounded=bounded, gamma_series=gammas, alpha_series=alphas)


def lyapunov_series(trajectory: Trajectory) -> np.ndarray:
    """Squared error norm V(e(k)) for every recorded state."""
    states = trajectory.states
    errors = states - states.mean(axis=1, keepdims=True)
    return (errors * errors).sum(axis=1)
