"""
数值核心模块包
相空间采样、哈密顿量、噪声增量、积分核、观测量与精确参考
"""

from .rng import CounterRNG, StreamTag
from .spins import (
    BlochVector,
    ProductStateSpec,
    SpinEnsembleState,
    rotation_to_direction,
    sample_down_configuration,
    sample_initial_ensemble,
)
from .hamiltonian import (
    CavityCoupling,
    CouplingMatrix,
    LatticeSpec,
    LocalFields,
    ModelSpec,
    build_model,
    build_power_law_couplings,
    mean_field_drift,
)
from .integrator import SimulationPlan, TimeGrid, TrajectorySpec, euler_maruyama_step
from .observables import ObservableAccumulator, ObservableSeries, RawLayout
from .oracle import DensityMatrix, LiouvillianSpec, build_liouvillian, evolve_master_equation, mean_field_reference

__all__ = [
    "CounterRNG",
    "StreamTag",
    "BlochVector",
    "ProductStateSpec",
    "SpinEnsembleState",
    "rotation_to_direction",
    "sample_down_configuration",
    "sample_initial_ensemble",
    "CavityCoupling",
    "CouplingMatrix",
    "LatticeSpec",
    "LocalFields",
    "ModelSpec",
    "build_model",
    "build_power_law_couplings",
    "mean_field_drift",
    "SimulationPlan",
    "TimeGrid",
    "TrajectorySpec",
    "euler_maruyama_step",
    "ObservableAccumulator",
    "ObservableSeries",
    "RawLayout",
    "DensityMatrix",
    "LiouvillianSpec",
    "build_liouvillian",
    "evolve_master_equation",
    "mean_field_reference",
]
