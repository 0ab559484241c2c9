"""
数据模型包
"""

from .schemas import (
    # 通用
    StrictModel,
    # 噪声通道
    NoiseChannelKind,
    NoiseChannelSpec,
    DECAY_KINDS,
    # 模型
    CouplingAxis,
    LatticeConfig,
    CouplingBlockConfig,
    FieldsConfig,
    DisorderConfig,
    CavityConfig,
    ModelConfig,
    # 初始态与运行
    InitialStateConfig,
    RunConfig,
    PairCorrelationRequest,
    ObservableRequest,
    ScenarioConfig,
    # 元数据与报告
    SpinLengthSummary,
    SteadyStateValue,
    RunMetadata,
    CompareEntry,
    CompareReport,
    SweepFailure,
    SweepReport,
)

__all__ = [
    "StrictModel",
    "NoiseChannelKind",
    "NoiseChannelSpec",
    "DECAY_KINDS",
    "CouplingAxis",
    "LatticeConfig",
    "CouplingBlockConfig",
    "FieldsConfig",
    "DisorderConfig",
    "CavityConfig",
    "ModelConfig",
    "InitialStateConfig",
    "RunConfig",
    "PairCorrelationRequest",
    "ObservableRequest",
    "ScenarioConfig",
    "SpinLengthSummary",
    "SteadyStateValue",
    "RunMetadata",
    "CompareEntry",
    "CompareReport",
    "SweepFailure",
    "SweepReport",
]
