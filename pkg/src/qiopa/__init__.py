"""Quantum-injected parametric amplifier as a universal 1->2 cloner and U-NOT gate."""

from .cloning_metrics import FidelityReport, fidelity_report, post_select_amplified, universality_scan
from .detection_sim import ExperimentSetup, InjectionModel, MeasurementMode, run_trials
from .fock_core import StateVector, Truncation
from .opa_model import NAMED_QUBITS, PolarizationQubit, evolve, first_order_output, prepare_injected

__version__ = "0.1.0"

__all__ = [
    "FidelityReport",
    "fidelity_report",
    "post_select_amplified",
    "universality_scan",
    "ExperimentSetup",
    "InjectionModel",
    "MeasurementMode",
    "run_trials",
    "StateVector",
    "Truncation",
    "NAMED_QUBITS",
    "PolarizationQubit",
    "evolve",
    "first_order_output",
    "prepare_injected",
]
