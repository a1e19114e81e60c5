"""Reliability-targeted design of active-RIS-assisted satellite downlinks."""
from activeris.channel import LinkParams, ScenarioConfig, ScenarioSample, sample_many, sample_scenario
from activeris.errors import CapabilityError, DimensionError, DomainError, ProvenanceError
from activeris.saa import SAACoefficients, build_feasibility_model, stack_coefficients
from activeris.sinr import AmpNoiseModel, SinrCoefficients, evaluate_sinr
from activeris.solve import Design, GIntervalSet, bisect_tau, solve_design

__version__ = "0.1.0"

__all__ = [
    "AmpNoiseModel",
    "CapabilityError",
    "Design",
    "DimensionError",
    "DomainError",
    "GIntervalSet",
    "LinkParams",
    "ProvenanceError",
    "SAACoefficients",
    "ScenarioConfig",
    "ScenarioSample",
    "SinrCoefficients",
    "bisect_tau",
    "build_feasibility_model",
    "evaluate_sinr",
    "sample_many",
    "sample_scenario",
    "solve_design",
    "stack_coefficients",
]
