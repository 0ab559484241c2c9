"""
观测量估计
逐轨迹原始矩的累积、集体自旋矩、压缩参数、光子统计与自旋长度诊断。
导出量的标准误差由样本协方差经 delta 方法传播得到。
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .spins import SpinEnsembleState
from ..models.schemas import ObservableRequest, PairCorrelationRequest, SteadyStateValue

logger = logging.getLogger(__name__)

AXES = ("x", "y", "z")
_AXIS_INDEX = {"x": 0, "y": 1, "z": 2}
# 3×3 对称矩阵的上三角 (k <= l)
UPPER_PAIRS: Tuple[Tuple[int, int], ...] = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


@dataclass
class RawLayout:
    """
    逐轨迹原始向量的布局

    [M_k (3)] [M_k M_l (6)] [P_kl = Σ_i s_i^k s_i^l (6)] [Re α, Im α, |α|², |α|⁴ (有腔模时)] [两体乘积]
    其中 M_k = Σ_i s_i^k。
    """
    n_spins: int
    has_cavity: bool = False
    pairs: List[PairCorrelationRequest] = field(default_factory=list)

    M = slice(0, 3)
    MM = slice(3, 9)
    P = slice(9, 15)

    @property
    def cavity_slice(self) -> Optional[slice]:
        return slice(15, 19) if self.has_cavity else None

    @property
    def pair_offset(self) -> int:
        return 19 if self.has_cavity else 15

    @property
    def size(self) -> int:
        return self.pair_offset + len(self.pairs)

    def raw(self, state: SpinEnsembleState) -> np.ndarray:
        """计算本批次每条轨迹的原始向量, 形状 (B, R)"""
        s = state.spins
        out = np.empty((state.batch_size, self.size))
        m = s.sum(axis=1)
        out[:, self.M] = m
        for column, (k, l) in enumerate(UPPER_PAIRS):
            out[:, 3 + column] = m[:, k] * m[:, l]
            out[:, 9 + column] = np.einsum("bn,bn->b", s[..., k], s[..., l])
        if self.has_cavity:
            alpha = state.cavity
            abs2 = alpha.real ** 2 + alpha.imag ** 2
            out[:, 15] = alpha.real
            out[:, 16] = alpha.imag
            out[:, 17] = abs2
            out[:, 18] = abs2 ** 2
        for offset, pair in enumerate(self.pairs):
            out[:, self.pair_offset + offset] = s[:, pair.i, _AXIS_INDEX[pair.k]] * s[:, pair.j, _AXIS_INDEX[pair.l]]
        return out


class ObservableAccumulator:
    """
    原始矩的求和器

    每个 worker 持有自己的实例; 汇总时按批次顺序 merge，保证逐位可复现。
    """

    def __init__(self, layout: RawLayout, n_times: int, window_start: Optional[int] = None, per_spin: bool = False):
        self.layout = layout
        self.n_times = n_times
        self.window_start = window_start
        self.per_spin = per_spin
        r = layout.size
        self.count = 0
        self.sums = np.zeros((n_times, r))
        self.outer = np.zeros((n_times, r, r))
        self.spin_sum = np.zeros((n_times, layout.n_spins, 3)) if per_spin else None
        self.spin_sq = np.zeros((n_times, layout.n_spins, 3)) if per_spin else None
        self.window_count = 0
        self.window_sum = np.zeros(r)
        self.window_outer = np.zeros((r, r))
        self._buffer: Optional[np.ndarray] = None
        self._buffer_points = 0
        self._batch = 0

    def start_batch(self, batch_size: int):
        self._batch = batch_size
        self._buffer = np.zeros((batch_size, self.layout.size))
        self._buffer_points = 0

    def record(self, t_index: int, state: SpinEnsembleState):
        """累积第 t_index 个记录点"""
        r = self.layout.raw(state)
        self.sums[t_index] += r.sum(axis=0)
        self.outer[t_index] += r.T @ r
        if self.per_spin:
            self.spin_sum[t_index] += state.spins.sum(axis=0)
            self.spin_sq[t_index] += (state.spins ** 2).sum(axis=0)
        if self.window_start is not None and t_index >= self.window_start:
            self._buffer += r
            self._buffer_points += 1

    def finish_batch(self):
        self.count += self._batch
        if self.window_start is not None and self._buffer_points > 0:
            averaged = self._buffer / self._buffer_points
            self.window_sum += averaged.sum(axis=0)
            self.window_outer += averaged.T @ averaged
            self.window_count += self._batch
        self._buffer = None
        self._batch = 0

    def merge(self, other: "ObservableAccumulator"):
        """并入另一个累积器 (调用顺序决定浮点求和顺序)"""
        if other.sums.shape != self.sums.shape:
            raise ValueError("累积器形状不一致，无法合并")
        self.count += other.count
        self.sums += other.sums
        self.outer += other.outer
        if self.per_spin:
            self.spin_sum += other.spin_sum
            self.spin_sq += other.spin_sq
        self.window_count += other.window_count
        self.window_sum += other.window_sum
        self.window_outer += other.window_outer

    def moments(self) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        """(均值 (T, R), 样本协方差 (T, R, R); n_t = 1 时协方差为 None)"""
        return _moments(self.sums, self.outer, self.count)

    def window_moments(self) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        if self.window_count == 0:
            raise ValueError("未启用稳态窗口或窗口内没有记录点")
        mean, cov = _moments(self.window_sum[None], self.window_outer[None], self.window_count)
        return mean, cov

    def spin_moments(self) -> Tuple[Optional[np.ndarray], Optional[np.ndarray]]:
        """逐自旋均值与标准误差 (T, N, 3)"""
        if not self.per_spin:
            return None, None
        n = self.count
        mean = self.spin_sum / n
        if n < 2:
            return mean, np.full(mean.shape, np.nan)
        var = np.maximum(self.spin_sq / n - mean ** 2, 0.0) * n / (n - 1)
        return mean, np.sqrt(var / n)


def _moments(sums: np.ndarray, outer: np.ndarray, count: int) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    if count < 1:
        raise ValueError("没有可用的轨迹")
    mean = sums / count
    if count < 2:
        return mean, None
    cov = (outer / count - mean[..., :, None] * mean[..., None, :]) * count / (count - 1)
    return mean, cov


# ==================== 估计量 ====================

def collective_spin_moments(mean: np.ndarray, layout: RawLayout) -> Tuple[np.ndarray, np.ndarray]:
    """
    集体自旋一阶与对称化二阶矩

    ⟨S_k⟩ = ½⟨M_k⟩
    ⟨S_k S_l⟩_sym = ¼(⟨M_k M_l⟩ - ⟨P_kl⟩) + δ_kl N/4
    同格点项使用算符恒等式 (σ^k)² = 1，而非采样平方。

    Args:
        mean: 原始向量均值 (..., R)
        layout: 原始向量布局

    Returns:
        (⟨S⟩ 形状 (..., 3), ⟨S_k S_l⟩_sym 形状 (..., 3, 3))
    """
    n = layout.n_spins
    first = 0.5 * mean[..., layout.M]
    second = np.empty(mean.shape[:-1] + (3, 3))
    for column, (k, l) in enumerate(UPPER_PAIRS):
        value = 0.25 * (mean[..., 3 + column] - mean[..., 9 + column])
        if k == l:
            value = value + 0.25 * n
        second[..., k, l] = value
        second[..., l, k] = value
    return first, second


def collective_variances(mean: np.ndarray, layout: RawLayout) -> np.ndarray:
    """(ΔS_k)², 形状 (..., 3)"""
    first, second = collective_spin_moments(mean, layout)
    return np.diagonal(second, axis1=-2, axis2=-1) - first ** 2


def perpendicular_basis(direction: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    与 m̂ 正交平面的基: n̂₁ = normalize(ẑ × m̂)，‖ẑ × m̂‖ < 1e-12 时取 x̂; n̂₂ = m̂ × n̂₁
    """
    z_cross = np.stack((-direction[..., 1], direction[..., 0], np.zeros(direction.shape[:-1])), axis=-1)
    norm = np.linalg.norm(z_cross, axis=-1)
    degenerate = norm < 1e-12
    n1 = np.where(degenerate[..., None], np.array([1.0, 0.0, 0.0]), z_cross / np.where(degenerate, 1.0, norm)[..., None])
    n2 = np.cross(direction, n1)
    return n1, n2


def squeezing_parameter(spin_mean: np.ndarray, second: np.ndarray, n_spins: int, epsilon: float) -> np.ndarray:
    """
    Wineland 压缩参数 ξ² = N · min_φ (ΔS_φ^⊥)² / |⟨S⟩|²

    最小值由正交平面内 2×2 协方差矩阵的较小本征值解析给出;
    |⟨S⟩| <= epsilon·N 时该时间点为 NaN。
    """
    length = np.linalg.norm(spin_mean, axis=-1)
    defined = length > epsilon * n_spins
    direction = spin_mean / np.where(defined, length, 1.0)[..., None]
    n1, n2 = perpendicular_basis(direction)
    cov = second - spin_mean[..., :, None] * spin_mean[..., None, :]
    a = np.einsum("...i,...ij,...j->...", n1, cov, n1)
    b = np.einsum("...i,...ij,...j->...", n1, cov, n2)
    d = np.einsum("...i,...ij,...j->...", n2, cov, n2)
    smallest = 0.5 * (a + d) - np.sqrt(0.25 * (a - d) ** 2 + b ** 2)
    xi2 = n_spins * smallest / np.where(defined, length, 1.0) ** 2
    return np.where(defined, xi2, np.nan)


def photon_statistics(abs2: np.ndarray, abs4: np.ndarray, floor: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    对称序 Wigner 矩到正规序的换算

    ⟨a†a⟩ = ⟨|α|²⟩ - 1/2
    ⟨a†a†aa⟩ = ⟨|α|⁴⟩ - 2⟨|α|²⟩ + 1/2
    g²(0) = ⟨a†a†aa⟩ / ⟨a†a⟩², ⟨a†a⟩ <= floor 时为 NaN
    """
    abs2 = np.asarray(abs2, dtype=np.float64)
    abs4 = np.asarray(abs4, dtype=np.float64)
    number = abs2 - 0.5
    pairs = abs4 - 2.0 * abs2 + 0.5
    defined = number > floor
    g2 = np.where(defined, pairs / np.where(defined, number, 1.0) ** 2, np.nan)
    return number, g2


def symmetric_photon_moments(number: np.ndarray, pair_number: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """photon_statistics 的逆变换: 正规序 (⟨a†a⟩, ⟨a†a†aa⟩) -> 对称序 (⟨|α|²⟩, ⟨|α|⁴⟩)"""
    abs2 = np.asarray(number) + 0.5
    abs4 = np.asarray(pair_number) + 2.0 * abs2 - 0.5
    return abs2, abs4


def spin_length_diagnostic(mean: np.ndarray, layout: RawLayout) -> np.ndarray:
    """⟨⟨s²⟩⟩ = Σ_i ⟨s_i²⟩ / N"""
    p = mean[..., layout.P]
    return (p[..., 0] + p[..., 3] + p[..., 5]) / layout.n_spins


def propagate_stderr(
    estimator: Callable[[np.ndarray], np.ndarray],
    mean: np.ndarray,
    cov: Optional[np.ndarray],
    count: int,
    exact: bool = False,
) -> np.ndarray:
    """
    delta 方法: Var[f(μ̂)] ≈ ∇fᵀ Σ ∇f / n

    梯度由逐分量中心差分计算 (对所有时间点向量化)。cov 为 None 时:
    exact 表示精确矩 (误差为 0)，否则误差无定义 (NaN, 例如 n_t = 1)。
    """
    value = estimator(mean)
    if cov is None:
        fill = 0.0 if exact else np.nan
        return np.where(np.isfinite(value), fill, np.nan)
    r = mean.shape[-1]
    gradient = np.zeros(mean.shape)
    for j in range(r):
        h = 1e-6 * np.maximum(1.0, np.abs(mean[..., j]))
        shift = np.zeros(mean.shape)
        shift[..., j] = h
        gradient[..., j] = (estimator(mean + shift) - estimator(mean - shift)) / (2.0 * h)
    variance = np.einsum("...i,...ij,...j->...", gradient, cov, gradient) / count
    return np.sqrt(np.maximum(variance, 0.0))


# ==================== 结果序列 ====================

@dataclass
class ObservableSeries:
    """
    时间序列结果: 每个观测量一对 (估计值, 标准误差)

    列名为 time 与 <name>_mean / <name>_stderr。
    """
    times: np.ndarray
    columns: Dict[str, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)
    steady_state: Dict[str, SteadyStateValue] = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        for name, (mean, stderr) in self.columns.items():
            if len(mean) != len(self.times) or len(stderr) != len(self.times):
                raise ValueError(f"观测量 {name} 的列长度与时间点数量不一致")

    @property
    def names(self) -> List[str]:
        return list(self.columns.keys())

    def mean(self, name: str) -> np.ndarray:
        return self.columns[name][0]

    def stderr(self, name: str) -> np.ndarray:
        return self.columns[name][1]

    def to_frame(self) -> pd.DataFrame:
        """转换为 DataFrame (NaN 对应空单元格)"""
        data = {"time": self.times}
        for name, (mean, stderr) in self.columns.items():
            data[f"{name}_mean"] = mean
            data[f"{name}_stderr"] = stderr
        return pd.DataFrame(data)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "ObservableSeries":
        if "time" not in frame.columns:
            raise ValueError("数据表缺少 time 列")
        columns = {}
        for column in frame.columns:
            if column.endswith("_mean"):
                name = column[: -len("_mean")]
                stderr_column = f"{name}_stderr"
                stderr = frame[stderr_column].to_numpy(dtype=np.float64) if stderr_column in frame else np.zeros(len(frame))
                columns[name] = (frame[column].to_numpy(dtype=np.float64), stderr)
        return cls(frame["time"].to_numpy(dtype=np.float64), columns)


def scalar_estimators(
    layout: RawLayout, request: ObservableRequest, epsilon: float, photon_floor: float
) -> Dict[str, Callable[[np.ndarray], np.ndarray]]:
    """按请求构建 名称 -> f(原始均值) 的估计量表 (保持输出列顺序)"""
    estimators: Dict[str, Callable[[np.ndarray], np.ndarray]] = {}
    if request.collective_means:
        for k, axis in enumerate(AXES):
            estimators[f"S{axis}"] = lambda mu, k=k: 0.5 * mu[..., k]
    if request.collective_variances:
        for k, axis in enumerate(AXES):
            estimators[f"dS{axis}2"] = lambda mu, k=k: collective_variances(mu, layout)[..., k]
    if request.squeezing:
        def xi2(mu):
            first, second = collective_spin_moments(mu, layout)
            return squeezing_parameter(first, second, layout.n_spins, epsilon)
        estimators["xi2"] = xi2
    if layout.has_cavity:
        if request.photon_number:
            estimators["photon_number"] = lambda mu: mu[..., 17] - 0.5
        if request.g2:
            estimators["g2"] = lambda mu: photon_statistics(mu[..., 17], mu[..., 18], photon_floor)[1]
    if request.spin_length:
        estimators["spin_length"] = lambda mu: spin_length_diagnostic(mu, layout)
    return estimators


def estimate_series(
    layout: RawLayout,
    request: ObservableRequest,
    times: np.ndarray,
    mean: np.ndarray,
    cov: Optional[np.ndarray],
    count: int,
    epsilon: float,
    photon_floor: float,
    spin_mean: Optional[np.ndarray] = None,
    spin_stderr: Optional[np.ndarray] = None,
    negative_photon_sigma: float = 3.0,
    exact: bool = False,
) -> ObservableSeries:
    """
    由原始矩构建 ObservableSeries

    exact 为 True 时视为精确矩 (oracle 路径)，标准误差为 0。
    """
    columns: Dict[str, Tuple[np.ndarray, np.ndarray]] = {}
    for name, estimator in scalar_estimators(layout, request, epsilon, photon_floor).items():
        columns[name] = (estimator(mean), propagate_stderr(estimator, mean, cov, count, exact))
    if request.per_spin_means and spin_mean is not None:
        for i in range(layout.n_spins):
            for k, axis in enumerate(AXES):
                stderr = spin_stderr[:, i, k] if spin_stderr is not None else np.zeros(len(times))
                columns[f"sigma{i}_{axis}"] = (spin_mean[:, i, k], stderr)
    for offset, pair in enumerate(layout.pairs):
        estimator = lambda mu, c=layout.pair_offset + offset: mu[..., c]
        columns[pair.name] = (estimator(mean), propagate_stderr(estimator, mean, cov, count, exact))

    flags = []
    if "photon_number" in columns:
        number, stderr = columns["photon_number"]
        tolerance = negative_photon_sigma * np.nan_to_num(stderr, nan=0.0)
        if np.any(number < -tolerance - 1e-12):
            logger.warning("光子数估计为负且超出统计误差，可能为采样噪声")
            flags.append("negative_photon_number")
    return ObservableSeries(np.asarray(times), columns, flags)


def estimate_window(
    layout: RawLayout,
    request: ObservableRequest,
    mean: np.ndarray,
    cov: Optional[np.ndarray],
    count: int,
    epsilon: float,
    photon_floor: float,
    exact: bool = False,
) -> Dict[str, SteadyStateValue]:
    """稳态窗口平均值 (逐轨迹时间平均后再做系综估计)"""
    values = {}
    for name, estimator in scalar_estimators(layout, request, epsilon, photon_floor).items():
        value = float(estimator(mean)[0])
        stderr = float(propagate_stderr(estimator, mean, cov, count, exact)[0])
        values[name] = SteadyStateValue(
            mean=value if np.isfinite(value) else None,
            stderr=stderr if np.isfinite(stderr) else None,
        )
    for offset, pair in enumerate(layout.pairs):
        estimator = lambda mu, c=layout.pair_offset + offset: mu[..., c]
        stderr = float(propagate_stderr(estimator, mean, cov, count, exact)[0])
        values[pair.name] = SteadyStateValue(
            mean=float(mean[0, layout.pair_offset + offset]),
            stderr=stderr if np.isfinite(stderr) else None,
        )
    return values


def summarize_spin_length(times: np.ndarray, values: np.ndarray, window_fraction: float) -> Dict[str, Optional[float]]:
    """自旋长度摘要: 初值、极值、终值与末尾窗口内的线性漂移率"""
    if len(values) == 0:
        return {}
    start = int(np.searchsorted(times, times[-1] * (1.0 - window_fraction) - 1e-12))
    drift = None
    if len(times) - start >= 2:
        drift = float(np.polyfit(times[start:], values[start:], 1)[0])
    return {
        "initial": float(values[0]),
        "minimum": float(np.min(values)),
        "maximum": float(np.max(values)),
        "final": float(values[-1]),
        "final_window_drift_rate": drift,
    }


def exact_raw_moments(
    layout: RawLayout,
    spin_mean: np.ndarray,
    spin_second: np.ndarray,
    pair_values: Optional[np.ndarray] = None,
    cavity_moments: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    把精确量子期望值编码成原始均值向量，使 oracle 复用同一套估计量

    同格点项取算符恒等式 P_kl = N δ_kl，于是 ⟨M_k M_l⟩ = 4⟨S_k S_l⟩_sym。

    Args:
        layout: 原始向量布局
        spin_mean: ⟨S_k⟩ (T, 3)
        spin_second: ⟨S_k S_l⟩_sym (T, 3, 3)
        pair_values: 两体关联 (T, n_pairs)
        cavity_moments: (Re⟨a⟩, Im⟨a⟩, ⟨a†a⟩, ⟨a†a†aa⟩) (T, 4)

    Returns:
        (T, R) 原始均值
    """
    t = spin_mean.shape[0]
    mean = np.zeros((t, layout.size))
    mean[:, layout.M] = 2.0 * spin_mean
    for column, (k, l) in enumerate(UPPER_PAIRS):
        mean[:, 3 + column] = 4.0 * spin_second[:, k, l]
        mean[:, 9 + column] = layout.n_spins if k == l else 0.0
    if layout.has_cavity and cavity_moments is not None:
        abs2, abs4 = symmetric_photon_moments(cavity_moments[:, 2], cavity_moments[:, 3])
        mean[:, 15] = cavity_moments[:, 0]
        mean[:, 16] = cavity_moments[:, 1]
        mean[:, 17] = abs2
        mean[:, 18] = abs4
    if pair_values is not None and len(layout.pairs):
        mean[:, layout.pair_offset:] = pair_values
    return mean
