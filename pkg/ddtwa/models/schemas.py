"""
Pydantic数据模型定义
场景配置、噪声通道、运行元数据与比较报告
"""

import math
from enum import Enum
from typing import Optional, List, Any, Dict, Union, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class StrictModel(BaseModel):
    """拒绝未知字段的基础模型"""
    model_config = ConfigDict(extra="forbid")


# ==================== 噪声通道 ====================

class NoiseChannelKind(str, Enum):
    """耗散通道类型"""
    DEPHASING_INDIVIDUAL = "dephasing_individual"
    DEPHASING_COLLECTIVE = "dephasing_collective"
    DEPHASING_COLORED = "dephasing_colored"
    DECAY_STANDARD = "decay_standard"
    DECAY_IMPROVED = "decay_improved"
    DECAY_QLE = "decay_qle"
    CAVITY_LOSS = "cavity_loss"


DECAY_KINDS = (
    NoiseChannelKind.DECAY_STANDARD,
    NoiseChannelKind.DECAY_IMPROVED,
    NoiseChannelKind.DECAY_QLE,
)


class NoiseChannelSpec(StrictModel):
    """
    单个耗散通道

    rate 的含义随 kind 变化:
    dephasing_individual -> Γφ, dephasing_collective -> Γφ^C,
    decay_* -> Γ, cavity_loss -> κ。
    dephasing_colored 使用 sigma (噪声强度) 与 tau_c (关联时间)。
    """
    kind: NoiseChannelKind = Field(..., description="通道类型")
    rate: float = Field(0.0, ge=0, description="通道速率 (Γφ, Γφ^C, Γ 或 κ)")
    sigma: float = Field(0.0, ge=0, description="色噪声强度 σ (速率单位)")
    tau_c: Optional[float] = Field(None, gt=0, description="色噪声关联时间 τ_c")
    collective: bool = Field(False, description="色噪声是否为所有自旋共享的单一过程")

    @model_validator(mode="after")
    def _check_colored(self) -> "NoiseChannelSpec":
        if self.kind == NoiseChannelKind.DEPHASING_COLORED and self.tau_c is None:
            raise ValueError("dephasing_colored 通道必须提供 tau_c > 0")
        return self

    @property
    def max_rate(self) -> float:
        """通道的特征速率，用于默认步长"""
        if self.kind == NoiseChannelKind.DEPHASING_COLORED:
            return max(self.sigma, 1.0 / self.tau_c)
        return self.rate


# ==================== 模型配置 ====================

class CouplingAxis(str, Enum):
    """相互作用轴对"""
    XX = "xx"
    YY = "yy"
    ZZ = "zz"

    @property
    def component(self) -> int:
        return {"xx": 0, "yy": 1, "zz": 2}[self.value]


class LatticeConfig(StrictModel):
    """晶格配置: 简单立方(或更低维)晶格，或显式坐标"""
    dimensions: Optional[List[int]] = Field(None, min_length=1, max_length=3, description="各方向格点数, 例如 [10, 10, 10]")
    spacing: float = Field(1.0, gt=0, description="晶格常数")
    positions: Optional[List[List[float]]] = Field(None, description="显式格点坐标 (每行三个分量)")

    @model_validator(mode="after")
    def _check_geometry(self) -> "LatticeConfig":
        if (self.dimensions is None) == (self.positions is None):
            raise ValueError("lattice 必须且只能提供 dimensions 或 positions 之一")
        if self.dimensions is not None and any(d < 1 for d in self.dimensions):
            raise ValueError("lattice.dimensions 必须全部 >= 1")
        if self.positions is not None and any(len(p) != 3 for p in self.positions):
            raise ValueError("lattice.positions 每行必须包含三个分量")
        return self

    @property
    def n_sites(self) -> int:
        if self.positions is not None:
            return len(self.positions)
        return math.prod(self.dimensions)


class CouplingBlockConfig(StrictModel):
    """幂律相互作用块 J_ij = J' / |r_i - r_j|^alpha"""
    axis: CouplingAxis = Field(..., description="轴对 xx / yy / zz")
    J: float = Field(..., description="参考耦合速率 J")
    alpha: float = Field(0.0, ge=0, description="幂律指数; 0 表示全连接")
    normalize_by_N: bool = Field(True, description="是否附加 1/N 归一化")
    cutoff_ratio: float = Field(0.0, ge=0, description="|J_ij| 低于 cutoff_ratio * J' 的项被丢弃")


class FieldsConfig(StrictModel):
    """均匀驱动场"""
    Omega: float = Field(0.0, description="驱动强度 Ω")
    axis: Literal["x", "y", "z"] = Field("x", description="驱动方向")
    detunings: Optional[List[float]] = Field(None, description="静态逐自旋失谐 ω_i (沿 z)")


class DisorderConfig(StrictModel):
    """高斯失谐无序"""
    sigma2: float = Field(0.0, ge=0, description="失谐方差 σ²")
    frozen: bool = Field(False, description="True: 所有轨迹共享一次无序实现")


class CavityConfig(StrictModel):
    """腔模耦合 (驱动 Dicke 模型)"""
    g: float = Field(..., ge=0, description="集体耦合速率 g")
    kappa: float = Field(0.0, ge=0, description="场振幅衰减速率 κ")
    Omega: float = Field(0.0, description="沿 x 的相干驱动 Ω")
    photon_cutoff: Optional[int] = Field(None, ge=2, description="oracle 光子截断能级数 n_ph; 缺省按初始振幅自动选择")


class ModelConfig(StrictModel):
    """哈密顿量模型配置"""
    n_spins: Optional[int] = Field(None, ge=1, description="自旋数 (无晶格时必填)")
    lattice: Optional[LatticeConfig] = None
    couplings: List[CouplingBlockConfig] = Field(default_factory=list)
    fields: FieldsConfig = Field(default_factory=FieldsConfig)
    disorder: DisorderConfig = Field(default_factory=DisorderConfig)
    cavity: Optional[CavityConfig] = None

    @model_validator(mode="after")
    def _check_size(self) -> "ModelConfig":
        if self.lattice is None and self.n_spins is None:
            raise ValueError("model 必须提供 n_spins 或 lattice")
        if self.lattice is not None:
            if self.n_spins is not None and self.n_spins != self.lattice.n_sites:
                raise ValueError(
                    f"model.n_spins={self.n_spins} 与晶格格点数 {self.lattice.n_sites} 不一致")
        for block in self.couplings:
            if block.alpha > 0 and self.lattice is None:
                raise ValueError("alpha > 0 的相互作用块需要 lattice")
        n = self.spin_count
        if self.fields.detunings is not None and len(self.fields.detunings) != n:
            raise ValueError(f"fields.detunings 长度必须为 {n}")
        return self

    @property
    def spin_count(self) -> int:
        if self.lattice is not None:
            return self.lattice.n_sites
        return self.n_spins


# ==================== 初始态 ====================

class InitialStateConfig(StrictModel):
    """
    乘积态配置 (ProductStateSpec)
    theta/phi 为标量时广播到所有自旋
    """
    theta: Union[float, List[float]] = Field(math.pi, description="极角 [0, π]; 默认全部朝下")
    phi: Union[float, List[float]] = Field(0.0, description="方位角 [0, 2π)")
    alpha0: Optional[List[float]] = Field(None, min_length=2, max_length=2, description="腔模相干振幅 [Re, Im]")

    @field_validator("theta", "phi")
    @classmethod
    def _finite(cls, value):
        values = value if isinstance(value, list) else [value]
        if not all(math.isfinite(v) for v in values):
            raise ValueError("方向角必须为有限值")
        return value

    @property
    def alpha0_complex(self) -> Optional[complex]:
        if self.alpha0 is None:
            return None
        return complex(self.alpha0[0], self.alpha0[1])


# ==================== 运行配置 ====================

class RunConfig(StrictModel):
    """时间网格与轨迹配置"""
    t_end: float = Field(..., gt=0, description="积分终止时间")
    dt: Optional[float] = Field(None, gt=0, description="时间步长; 缺省按速率规则自动选择")
    output_stride: int = Field(1, ge=1, description="每隔多少步记录一次")
    n_t: int = Field(1000, ge=1, description="轨迹数")
    seed: int = Field(0, ge=0, description="主随机种子")
    workers: Optional[int] = Field(None, ge=1, description="worker 数量提示")
    steady_state_window: Optional[float] = Field(None, gt=0, le=1, description="稳态平均窗口 (占总时长的比例)")
    allow_failures: bool = Field(False, description="记录并剔除发散轨迹而非整体失败")


# ==================== 观测量请求 ====================

class PairCorrelationRequest(StrictModel):
    """两体关联 <{σ_i^k σ_j^l}_sym>"""
    i: int = Field(..., ge=0)
    j: int = Field(..., ge=0)
    k: Literal["x", "y", "z"] = "z"
    l: Literal["x", "y", "z"] = "z"

    @model_validator(mode="after")
    def _distinct(self) -> "PairCorrelationRequest":
        if self.i == self.j:
            raise ValueError("两体关联要求 i != j")
        return self

    @property
    def name(self) -> str:
        return f"corr_{self.i}_{self.j}_{self.k}{self.l}"


class ObservableRequest(StrictModel):
    """需要估计的观测量"""
    per_spin_means: bool = False
    collective_means: bool = True
    collective_variances: bool = True
    squeezing: bool = True
    photon_number: bool = True
    g2: bool = True
    spin_length: bool = True
    pair_correlations: List[PairCorrelationRequest] = Field(default_factory=list)


# ==================== 场景 ====================

class ScenarioConfig(StrictModel):
    """完整场景配置文件"""
    schema_version: int = Field(..., description="配置 schema 版本")
    name: str = Field("scenario", description="场景名称")
    model: ModelConfig
    noise: List[NoiseChannelSpec] = Field(default_factory=list)
    initial_state: InitialStateConfig = Field(default_factory=InitialStateConfig)
    run: RunConfig
    observables: ObservableRequest = Field(default_factory=ObservableRequest)

    @model_validator(mode="after")
    def _check_consistency(self) -> "ScenarioConfig":
        n = self.model.spin_count
        for field_name in ("theta", "phi"):
            value = getattr(self.initial_state, field_name)
            if isinstance(value, list) and len(value) != n:
                raise ValueError(f"initial_state.{field_name} 长度必须为 {n}")
        kinds = [c.kind for c in self.noise]
        if NoiseChannelKind.CAVITY_LOSS in kinds:
            if self.model.cavity is None:
                raise ValueError("cavity_loss 通道需要 model.cavity")
            if self.model.cavity.kappa > 0:
                raise ValueError("cavity.kappa 与 cavity_loss 通道不能同时设置")
        if self.initial_state.alpha0 is not None and self.model.cavity is None:
            raise ValueError("initial_state.alpha0 需要 model.cavity")
        for pair in self.observables.pair_correlations:
            if pair.i >= n or pair.j >= n:
                raise ValueError(f"两体关联索引超出范围: {pair.name}")
        return self


# ==================== 元数据与报告 ====================

class SpinLengthSummary(BaseModel):
    """自旋长度诊断摘要"""
    initial: Optional[float] = None
    minimum: Optional[float] = None
    maximum: Optional[float] = None
    final: Optional[float] = None
    final_window_drift_rate: Optional[float] = Field(None, description="末尾窗口内 d<<s^2>>/dt")


class SteadyStateValue(BaseModel):
    """稳态窗口平均值"""
    mean: Optional[float] = None
    stderr: Optional[float] = None


class RunMetadata(BaseModel):
    """输出数据表的伴随元数据"""
    model_config = ConfigDict(protected_namespaces=())

    command: str = Field(..., description="run / oracle / mean_field")
    version: str = Field(..., description="软件版本字符串")
    scenario: Dict[str, Any] = Field(..., description="完整解析后的场景配置")
    seed: int
    n_t: int
    dt: float
    t_end: float
    output_stride: int
    model_hash: str
    mean_coupling_jbar: float = Field(0.0, description="J̄ = Σ_{i≠j} J_ij / N")
    jbar_convention: str = "ordered pairs i != j, summed over all coupling blocks"
    wall_clock_seconds: float = 0.0
    seconds_per_step_per_trajectory: Optional[float] = None
    spin_length: SpinLengthSummary = Field(default_factory=SpinLengthSummary)
    failure_count: int = 0
    failed_trajectories: List[int] = Field(default_factory=list)
    flags: List[str] = Field(default_factory=list)
    steady_state: Dict[str, SteadyStateValue] = Field(default_factory=dict)


class CompareEntry(BaseModel):
    """单个观测量的比较结果"""
    observable: str
    max_deviation_units: float = Field(..., description="最大偏差 (以组合容差为单位, <= 1 为通过)")
    max_z: Optional[float] = Field(None, description="最大 z 分数 |Δ| / √(σ_a² + σ_b²); 两边误差均为 0 时为空")
    max_abs_deviation: float
    at_time: Optional[float] = None
    compared_points: int = 0
    undefined_mismatches: int = Field(0, description="只在一张表中有定义的时间点数; 非零即不通过")
    passed: bool


class CompareReport(BaseModel):
    """比较报告"""
    passed: bool
    z_threshold: float
    abs_floor: float
    relative: float = 0.0
    entries: List[CompareEntry] = Field(default_factory=list)


class SweepFailure(BaseModel):
    """扫描中失败的子运行"""
    value: Any
    error: str


class SweepReport(BaseModel):
    """参数扫描报告"""
    parameter: str
    values: List[Any] = Field(default_factory=list)
    failures: List[SweepFailure] = Field(default_factory=list)
