"""
哈密顿量模型
晶格、幂律相互作用、局域场、无序与腔耦合的构建，以及平均场漂移的计算
"""

import hashlib
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .rng import CounterRNG, StreamTag
from .spins import SpinEnsembleState
from ..models.schemas import CouplingAxis, ModelConfig, LatticeConfig

logger = logging.getLogger(__name__)

_AXIS_INDEX = {"x": 0, "y": 1, "z": 2}


@dataclass
class LatticeSpec:
    """格点坐标 (N, 3)"""
    positions: np.ndarray
    dimensions: Optional[Tuple[int, ...]] = None
    spacing: float = 1.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        if cKDTree(self.positions).query_pairs(0.0):
            raise ValueError("晶格中存在重合格点 (距离为零)")

    @classmethod
    def cubic(cls, dimensions: Sequence[int], spacing: float = 1.0) -> "LatticeSpec":
        """开边界的 (超)立方晶格，维数不足三维时其余坐标补零"""
        axes = [np.arange(d) * spacing for d in dimensions]
        grid = np.meshgrid(*axes, indexing="ij")
        coords = np.stack([g.ravel() for g in grid], axis=-1)
        if coords.shape[1] < 3:
            coords = np.hstack([coords, np.zeros((coords.shape[0], 3 - coords.shape[1]))])
        return cls(coords, tuple(dimensions), spacing)

    @classmethod
    def from_config(cls, config: LatticeConfig) -> "LatticeSpec":
        if config.positions is not None:
            return cls(np.asarray(config.positions), None, config.spacing)
        return cls.cubic(config.dimensions, config.spacing)

    @property
    def n_sites(self) -> int:
        return self.positions.shape[0]


@dataclass
class CouplingMatrix:
    """
    单个轴对上的自旋-自旋相互作用

    稀疏块按 i < j 存一次，作用时对称展开为 CSR 矩阵 (邻居表);
    全连接块 (alpha = 0) 以秩一集体项 collective 存储，不展开成对。
    """
    axis: CouplingAxis
    n_spins: int
    rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    cols: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    collective: Optional[float] = None

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if np.any(self.rows >= self.cols):
            raise ValueError("相互作用对必须满足 i < j")
        sym_rows = np.concatenate([self.rows, self.cols])
        sym_cols = np.concatenate([self.cols, self.rows])
        sym_vals = np.concatenate([self.values, self.values])
        self._matrix = sp.csr_matrix((sym_vals, (sym_rows, sym_cols)), shape=(self.n_spins, self.n_spins))

    @property
    def is_collective(self) -> bool:
        return self.collective is not None

    @property
    def n_pairs(self) -> int:
        if self.is_collective:
            return self.n_spins * (self.n_spins - 1) // 2
        return int(self.values.shape[0])

    def local_field(self, component: np.ndarray) -> np.ndarray:
        """
        计算 Σ_j J_ij s_j (沿本块的轴)

        Args:
            component: 形状 (B, N) 的自旋分量

        Returns:
            形状 (B, N) 的场
        """
        if self.is_collective:
            total = component.sum(axis=1, keepdims=True)
            return self.collective * (total - component)
        return np.asarray((self._matrix @ component.T).T)

    def ordered_sum(self) -> float:
        """Σ_{i≠j} J_ij (有序对)"""
        if self.is_collective:
            return self.collective * self.n_spins * (self.n_spins - 1)
        return 2.0 * float(self.values.sum())

    def dense(self) -> np.ndarray:
        """完整对称矩阵 (仅用于小系统)"""
        if self.is_collective:
            return self.collective * (np.ones((self.n_spins, self.n_spins)) - np.eye(self.n_spins))
        return self._matrix.toarray()

    def pairs(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """以 (i, j, J_ij), i < j 形式返回全部耦合"""
        if self.is_collective:
            i, j = np.triu_indices(self.n_spins, k=1)
            return i, j, np.full(i.shape, self.collective)
        return self.rows, self.cols, self.values


@dataclass
class LocalFields:
    """逐自旋静态场 Ω_i (N, 3)"""
    vectors: np.ndarray

    @classmethod
    def uniform(cls, omega: float, axis: str, n: int, detunings: Optional[Sequence[float]] = None) -> "LocalFields":
        """均匀驱动 Ω 沿 axis, 加上可选的静态失谐 ω_i 沿 z"""
        vectors = np.zeros((n, 3))
        vectors[:, _AXIS_INDEX[axis]] += omega
        if detunings is not None:
            vectors[:, 2] += np.asarray(detunings, dtype=np.float64)
        return cls(vectors)

    @property
    def n_spins(self) -> int:
        return self.vectors.shape[0]


@dataclass
class CavityCoupling:
    """驱动 Dicke 模型的腔耦合参数"""
    g: float
    n_spins: int
    kappa: float = 0.0
    drive: float = 0.0

    def __post_init__(self):
        if self.g < 0 or self.kappa < 0 or self.n_spins < 1:
            raise ValueError("腔耦合参数要求 g >= 0, kappa >= 0, N >= 1")


@dataclass
class ModelSpec:
    """
    完整确定漂移项的模型数据

    构建后只读，多个 worker 共享。
    """
    n_spins: int
    fields: LocalFields
    couplings: List[CouplingMatrix] = field(default_factory=list)
    cavity: Optional[CavityCoupling] = None
    lattice: Optional[LatticeSpec] = None
    disorder_sigma2: float = 0.0
    disorder_frozen: bool = False
    frozen_detunings: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.fields.n_spins != self.n_spins:
            raise ValueError("局域场长度与自旋数不一致")
        for block in self.couplings:
            if block.n_spins != self.n_spins:
                raise ValueError("相互作用矩阵维数与自旋数不一致")
        if self.cavity is not None and self.cavity.n_spins != self.n_spins:
            raise ValueError("腔耦合的 N 与自旋数不一致")
        if self.lattice is not None and self.lattice.n_sites != self.n_spins:
            raise ValueError("晶格格点数与自旋数不一致")

    @property
    def has_cavity(self) -> bool:
        return self.cavity is not None

    def mean_coupling(self) -> float:
        """重标时间单位 J̄ = Σ_{i≠j} J_ij / N (有序对, 对所有块求和)"""
        return sum(block.ordered_sum() for block in self.couplings) / self.n_spins

    def detunings(self, rng: Optional[CounterRNG], trajectories: Sequence[int]) -> Optional[np.ndarray]:
        """当前批次的无序失谐 (B, N)，无无序时返回 None"""
        if self.disorder_sigma2 <= 0:
            return None
        if self.disorder_frozen:
            return np.broadcast_to(self.frozen_detunings, (len(trajectories), self.n_spins))
        return sample_disorder(self.disorder_sigma2, self.n_spins, rng, trajectories)

    def characteristic_rates(self) -> List[float]:
        """用于默认步长的特征速率 (局域场、相互作用、腔耦合)"""
        rates = [float(np.max(np.linalg.norm(self.fields.vectors, axis=1)))]
        for block in self.couplings:
            if block.is_collective:
                rates.append(2.0 * abs(block.collective) * (self.n_spins - 1) * np.sqrt(3.0))
            elif block.values.size:
                row_sums = np.asarray(abs(block._matrix).sum(axis=1)).ravel()
                rates.append(2.0 * float(row_sums.max()) * np.sqrt(3.0))
        if self.disorder_sigma2 > 0:
            rates.append(3.0 * np.sqrt(self.disorder_sigma2))
        if self.cavity is not None:
            rates.extend([2.0 * self.cavity.g, abs(self.cavity.drive), self.cavity.kappa])
        return rates

    def model_hash(self) -> str:
        """模型数据的内容哈希，写入元数据"""
        digest = hashlib.sha256()
        digest.update(np.int64(self.n_spins).tobytes())
        digest.update(self.fields.vectors.tobytes())
        for block in self.couplings:
            digest.update(block.axis.value.encode())
            i, j, v = (block.rows, block.cols, block.values)
            digest.update(i.tobytes() + j.tobytes() + v.tobytes())
            digest.update(repr(block.collective).encode())
        if self.cavity is not None:
            digest.update(repr((self.cavity.g, self.cavity.kappa, self.cavity.drive)).encode())
        digest.update(repr((self.disorder_sigma2, self.disorder_frozen)).encode())
        if self.frozen_detunings is not None:
            digest.update(self.frozen_detunings.tobytes())
        return digest.hexdigest()[:16]


def collective_couplings(
    n_spins: int,
    J: float,
    normalize_by_N: bool = True,
    cutoff_ratio: float = 0.0,
    axis: CouplingAxis = CouplingAxis.ZZ,
) -> CouplingMatrix:
    """全连接 (alpha = 0) 相互作用, 存为秩一集体项; cutoff_ratio > 1 时丢弃全部项"""
    reference = J / n_spins if normalize_by_N else J
    if cutoff_ratio > 1.0 or reference == 0.0:
        return CouplingMatrix(axis=axis, n_spins=n_spins)
    return CouplingMatrix(axis=axis, n_spins=n_spins, collective=reference)


def build_power_law_couplings(
    lattice: LatticeSpec,
    J: float,
    alpha: float,
    normalize_by_N: bool = True,
    cutoff_ratio: float = 0.0,
    axis: CouplingAxis = CouplingAxis.ZZ,
) -> CouplingMatrix:
    """
    幂律相互作用 J_ij = J' / |r_i - r_j|^alpha, J' = J/N (normalize_by_N) 或 J

    |J_ij| < cutoff_ratio * |J'| 的项被丢弃; alpha = 0 存为秩一集体项。

    Args:
        lattice: 格点坐标
        J: 参考耦合
        alpha: 幂律指数 (>= 0)
        normalize_by_N: 是否附加 1/N
        cutoff_ratio: 截断比例 (>= 0)
        axis: 轴对

    Returns:
        CouplingMatrix
    """
    if alpha < 0 or cutoff_ratio < 0:
        raise ValueError("alpha 与 cutoff_ratio 必须 >= 0")
    n = lattice.n_sites
    if alpha == 0:
        return collective_couplings(n, J, normalize_by_N, cutoff_ratio, axis)
    reference = J / n if normalize_by_N else J

    tree = cKDTree(lattice.positions)
    if cutoff_ratio > 0:
        radius = cutoff_ratio ** (-1.0 / alpha)
        pairs = tree.query_pairs(radius * (1.0 + 1e-12), output_type="ndarray")
    else:
        i, j = np.triu_indices(n, k=1)
        pairs = np.stack([i, j], axis=-1)
    if pairs.size == 0:
        return CouplingMatrix(axis=axis, n_spins=n)

    pairs = np.sort(pairs, axis=1)
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    distance = np.linalg.norm(lattice.positions[pairs[:, 0]] - lattice.positions[pairs[:, 1]], axis=1)
    if np.any(distance == 0):
        raise ValueError("晶格中存在重合格点 (距离为零)")
    values = reference / distance ** alpha
    keep = np.abs(values) >= cutoff_ratio * abs(reference)
    logger.info(f"幂律相互作用构建完成: axis={axis.value}, alpha={alpha}, 保留 {int(keep.sum())} 对")
    return CouplingMatrix(axis=axis, n_spins=n, rows=pairs[keep, 0], cols=pairs[keep, 1], values=values[keep])


def sample_disorder(sigma2: float, n: int, rng: CounterRNG, trajectories: Sequence[int]) -> np.ndarray:
    """
    高斯失谐 ω_i ~ N(0, sigma2)，每条轨迹独立抽取一次

    Returns:
        形状 (B, N) 的数组
    """
    if sigma2 < 0:
        raise ValueError("sigma2 必须 >= 0")
    if sigma2 == 0:
        return np.zeros((len(trajectories), n))
    g = rng.normals(np.asarray(trajectories), n, 0, StreamTag.DISORDER)[..., 0]
    return np.sqrt(sigma2) * g


def build_model(config: ModelConfig, rng: Optional[CounterRNG] = None) -> ModelSpec:
    """由场景配置构建 ModelSpec"""
    n = config.spin_count
    lattice = LatticeSpec.from_config(config.lattice) if config.lattice is not None else None
    couplings = []
    for block in config.couplings:
        if block.alpha == 0:
            couplings.append(collective_couplings(n, block.J, block.normalize_by_N, block.cutoff_ratio, block.axis))
        else:
            couplings.append(build_power_law_couplings(
                lattice, block.J, block.alpha, block.normalize_by_N, block.cutoff_ratio, block.axis))
    fields = LocalFields.uniform(config.fields.Omega, config.fields.axis, n, config.fields.detunings)
    cavity = None
    if config.cavity is not None:
        cavity = CavityCoupling(g=config.cavity.g, n_spins=n, kappa=config.cavity.kappa, drive=config.cavity.Omega)
    frozen = None
    if config.disorder.sigma2 > 0 and config.disorder.frozen:
        if rng is None:
            raise ValueError("冻结无序需要随机源")
        frozen = sample_disorder(config.disorder.sigma2, n, rng, [0])[0]
    return ModelSpec(
        n_spins=n,
        fields=fields,
        couplings=couplings,
        cavity=cavity,
        lattice=lattice,
        disorder_sigma2=config.disorder.sigma2,
        disorder_frozen=config.disorder.frozen,
        frozen_detunings=frozen,
    )


def effective_fields(
    state: SpinEnsembleState,
    model: ModelSpec,
    detunings: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Ω_eff^i = Ω_i + ω_i e_z + 2 Σ_j J_ij s_j (+ 腔场), 形状 (B, N, 3)"""
    s = state.spins
    omega = np.broadcast_to(model.fields.vectors, s.shape).copy()
    if detunings is not None:
        omega[..., 2] += detunings
    for block in model.couplings:
        k = block.axis.component
        omega[..., k] += 2.0 * block.local_field(s[..., k])
    if model.cavity is not None:
        scale = 2.0 * model.cavity.g / np.sqrt(model.cavity.n_spins)
        omega[..., 0] += scale * state.cavity.real[:, None] + model.cavity.drive
        omega[..., 1] -= scale * state.cavity.imag[:, None]
    return omega


def mean_field_drift(
    state: SpinEnsembleState,
    model: ModelSpec,
    detunings: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    平均场漂移 ds_i/dt = Ω_eff^i × s_i 与腔场 dα/dt

    全连接块通过一次集体求和 (O(N)) 计算，稀疏块通过邻居表计算。

    Args:
        state: 当前相空间点
        model: 模型
        detunings: 本批次失谐 (B, N)

    Returns:
        (ds/dt 形状 (B, N, 3), dα/dt 形状 (B,) 或 None)
    """
    if state.n_spins != model.n_spins:
        raise ValueError(f"状态自旋数 {state.n_spins} 与模型自旋数 {model.n_spins} 不一致")
    if model.has_cavity and state.cavity is None:
        raise ValueError("模型包含腔模但状态缺少腔振幅")
    omega = effective_fields(state, model, detunings)
    ds = np.cross(omega, state.spins)
    dalpha = None
    if model.cavity is not None:
        s = state.spins
        coupling = model.cavity.g / np.sqrt(4.0 * model.cavity.n_spins)
        lowering = s[..., 0].sum(axis=1) - 1j * s[..., 1].sum(axis=1)
        dalpha = -1j * coupling * lowering
    return ds, dalpha
