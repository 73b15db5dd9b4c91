"""Contraction certificates and simulation for bimodal Filippov systems."""

__version__ = "0.1.0"

from ._kernels import BACKEND, available_backends
from .certify import (
    Certificate,
    ConditionResult,
    Domain,
    certify,
    certify_filippov,
    certify_pwa,
    certify_relay,
    check_jump_condition,
    check_mode_contraction,
    check_pavlov,
    planar_no_limit_cycle,
    rank1_zero_condition,
    search_metric,
)
from .expr import Environment, diff, evaluate, gradient, jacobian, parse, render
from .measures import (
    Metric,
    induced_norm,
    lmi_check,
    matrix_measure,
    measure_limit_oracle,
    rank1_measure,
    vector_norm,
)
from .sim import (
    SimOptions,
    Trajectory,
    decay_study,
    entrainment_study,
    epsilon_sweep,
    integrate_filippov,
    integrate_regularized,
)
from .system import (
    FilippovSystem,
    PWASystem,
    RegionLabel,
    RelaySystem,
    TransitionFunction,
    classify_point,
    load_system,
    regularized_field,
    regularized_jacobian,
    sliding_field,
)

__all__ = [
    "BACKEND",
    "available_backends",
    "Certificate",
    "ConditionResult",
    "Domain",
    "Environment",
    "FilippovSystem",
    "Metric",
    "PWASystem",
    "RegionLabel",
    "RelaySystem",
    "SimOptions",
    "Trajectory",
    "TransitionFunction",
    "certify",
    "certify_filippov",
    "certify_pwa",
    "certify_relay",
    "check_jump_condition",
    "check_mode_contraction",
    "check_pavlov",
    "classify_point",
    "decay_study",
    "diff",
    "entrainment_study",
    "epsilon_sweep",
    "evaluate",
    "gradient",
    "induced_norm",
    "integrate_filippov",
    "integrate_regularized",
    "jacobian",
    "lmi_check",
    "load_system",
    "matrix_measure",
    "measure_limit_oracle",
    "parse",
    "planar_no_limit_cycle",
    "rank1_measure",
    "rank1_zero_condition",
    "regularized_field",
    "regularized_jacobian",
    "render",
    "search_metric",
    "sliding_field",
    "vector_norm",
]
