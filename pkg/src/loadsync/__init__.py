"""Load balancing between base stations as a networked dynamical system:
radio-layer load model, coverage-graph spectra, discrete and continuous
balancing dynamics, stability criteria with an oscillation bound, the
threshold/accommodation handover algorithm with its ranking variants, and a
seeded simulation harness."""

from .balancer import (ALG1, ALG2, ALG3, GREEDY, BalancerParams, HandoverEvent,
                       HandoverRequest, LoadState)
from .dynamics import DynamicsSpec, EpsilonMatrix, LinearModel, Trajectory
from .harness import Scenario, ScenarioConfig, SimulationTrace
from .radio import BaseStation, RadioConstants, User
from .stability import OscillationBound, StabilityReport
from .topology import CoverageGraph, GershgorinDisc, SpectrumResult

__all__ = [
    "ALG1", "ALG2", "ALG3", "GREEDY",
    "BalancerParams", "BaseStation", "CoverageGraph", "DynamicsSpec",
    "EpsilonMatrix", "GershgorinDisc", "HandoverEvent", "HandoverRequest",
    "LinearModel", "LoadState", "OscillationBound", "RadioConstants",
    "Scenario", "ScenarioConfig", "SimulationTrace", "SpectrumResult",
    "StabilityReport", "Trajectory", "User",
]
