"""Delay bounds for MIMO links over Gilbert-Elliott paths."""

from .bound import DelayBound, Infeasible, NonConvergent, SolverConfig, delay_bound
from .channel import GainPool, MimoConfig, log_det_capacity
from .config import ExperimentConfig, rate_conversion
from .dof import DofChain, build_chain, dof_of_substate
from .ge import GEParams, params_for_fading_speed
from .mgf import (
    ConstantRateService,
    MarkovService,
    PeriodicSource,
    TandemService,
    compose_hops,
)
from .sim import SimConfig, SimResult, run

__all__ = [
    "ConstantRateService", "DelayBound", "DofChain", "ExperimentConfig",
    "GEParams", "GainPool", "Infeasible", "MarkovService", "MimoConfig",
    "NonConvergent", "PeriodicSource", "SimConfig", "SimResult",
    "SolverConfig", "TandemService", "build_chain", "compose_hops",
    "delay_bound", "dof_of_substate", "log_det_capacity",
    "params_for_fading_speed", "rate_conversion", "run",
]
