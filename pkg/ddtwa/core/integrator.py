"""
Euler-Maruyama 积分核
时间网格、单步推进，以及按批次向量化执行的轨迹循环
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .hamiltonian import ModelSpec, effective_fields, mean_field_drift
from .noise import (
    OUState,
    cavity_loss_increment,
    colored_dephasing_drift,
    decay_increment,
    decay_increment_improved,
    decay_increment_qle,
    dephasing_length_drift,
    dephasing_increment,
    ou_initialize,
    ou_step,
)
from .observables import ObservableAccumulator, RawLayout
from .rng import CounterRNG, StreamTag
from .spins import ProductStateSpec, SpinEnsembleState, sample_initial_ensemble
from ..exceptions import TrajectoryDivergenceError
from ..models.schemas import NoiseChannelKind, NoiseChannelSpec

logger = logging.getLogger(__name__)

MARKOV_DEPHASING_KINDS = (NoiseChannelKind.DEPHASING_INDIVIDUAL, NoiseChannelKind.DEPHASING_COLLECTIVE)


@dataclass(frozen=True)
class TimeGrid:
    """固定步长时间网格"""
    t_end: float
    dt: float
    output_stride: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt 必须 > 0")
        if self.t_end < self.dt * (1.0 - 1e-12):
            raise ValueError(f"t_end={self.t_end} 必须 >= dt={self.dt}")
        if self.output_stride < 1:
            raise ValueError("output_stride 必须 >= 1")

    @property
    def n_steps(self) -> int:
        """步数; t_end 不是 dt 的整数倍时向上取整"""
        return max(1, int(np.ceil(self.t_end / self.dt - 1e-9)))

    @property
    def output_steps(self) -> np.ndarray:
        """记录点对应的步数 (共 ⌊n_steps/k⌋ + 1 个)"""
        return np.arange(0, self.n_steps + 1, self.output_stride)

    @property
    def output_times(self) -> np.ndarray:
        return self.output_steps * self.dt

    @property
    def n_outputs(self) -> int:
        return self.n_steps // self.output_stride + 1

    def window_start(self, fraction: float) -> int:
        """末尾 fraction 时间窗口内第一个记录点的下标"""
        if not 0 < fraction <= 1:
            raise ValueError("稳态窗口比例必须在 (0, 1] 内")
        times = self.output_times
        threshold = times[-1] * (1.0 - fraction)
        return int(np.searchsorted(times, threshold - 1e-12 * max(1.0, times[-1])))


@dataclass(frozen=True)
class TrajectorySpec:
    """轨迹数、主种子与 worker 数量提示 (None 时使用系综服务的默认 worker 数)"""
    n_t: int
    master_seed: int = 0
    worker_count: Optional[int] = None

    def __post_init__(self):
        if self.n_t < 1:
            raise ValueError("n_t 必须 >= 1")
        if self.master_seed < 0:
            raise ValueError("master_seed 必须为非负整数")
        if self.worker_count is not None and self.worker_count < 1:
            raise ValueError("worker_count 必须 >= 1")


def effective_channels(model: ModelSpec, channels: Sequence[NoiseChannelSpec]) -> List[NoiseChannelSpec]:
    """把 cavity.kappa 展开为显式的 cavity_loss 通道"""
    resolved = list(channels)
    if model.cavity is not None and model.cavity.kappa > 0:
        resolved.append(NoiseChannelSpec(kind=NoiseChannelKind.CAVITY_LOSS, rate=model.cavity.kappa))
    kinds = {c.kind for c in resolved}
    if NoiseChannelKind.CAVITY_LOSS in kinds and model.cavity is None:
        raise ValueError("cavity_loss 通道需要腔模")
    if NoiseChannelKind.DEPHASING_COLORED in kinds and len(kinds) > 1:
        logger.warning("色噪声退相位与马尔可夫通道同时启用，此组合未经验证")
    return resolved


def default_time_step(
    model: ModelSpec,
    channels: Sequence[NoiseChannelSpec],
    initial: ProductStateSpec,
    rng: CounterRNG,
    t_end: float,
    safety: float,
    n_t: Optional[int] = None,
    length_z: Optional[float] = None,
) -> float:
    """
    默认步长 dt = safety / max(|Ω_eff|_typ, Γ, Γφ, κ, 1/τ_c, σ, g)

    典型场强取自轨迹 0 的初始采样。给出 n_t 与 length_z 且存在马尔可夫退相位时，
    再把 dt 限制在 8·length_z² / (Γφ_tot² · t_end · n_t) 以内: 此时离散化造成的
    自旋长度漂移 (约 2Γφ_tot² dt t_end) 不超过 ⟨⟨s²⟩⟩ 标准误差的 length_z 倍。
    """
    state = sample_initial_ensemble(initial, model.n_spins, rng, [0], with_cavity=model.has_cavity)
    omega = effective_fields(state, model, model.detunings(rng, [0]))
    rates = [float(np.max(np.linalg.norm(omega, axis=-1)))]
    rates.extend(c.max_rate for c in channels)
    if model.cavity is not None:
        rates.extend([model.cavity.g, model.cavity.kappa])
    if model.disorder_sigma2 > 0:
        rates.append(3.0 * np.sqrt(model.disorder_sigma2))
    top = max(rates)
    dt = t_end * safety if top <= 0 else min(t_end, safety / top)

    gamma_phi = sum(c.rate for c in channels if c.kind in MARKOV_DEPHASING_KINDS)
    if n_t and length_z and gamma_phi > 0 and t_end > 0:
        bound = 8.0 * length_z ** 2 / (gamma_phi ** 2 * t_end * n_t)
        if bound < dt:
            logger.info(
                f"退相位长度漂移限制步长: dt {dt:.3g} -> {bound:.3g} "
                f"(Γφ={gamma_phi:.3g}, n_t={n_t}, 预计相对漂移 {dephasing_length_drift(gamma_phi, bound, t_end):.2e})"
            )
            dt = bound
    return dt


def check_stability(dt: float, model: ModelSpec, channels: Sequence[NoiseChannelSpec], threshold: float) -> bool:
    """dt·rate 超过阈值时记录告警，返回是否在阈值内"""
    rates = model.characteristic_rates() + [c.max_rate for c in channels]
    worst = dt * max(rates) if rates else 0.0
    if worst > threshold:
        logger.warning(f"步长可能过大: dt * max(rate) = {worst:.3g} > {threshold}")
        return False
    return True


def initialize_ou(
    channels: Sequence[NoiseChannelSpec], rng: CounterRNG, trajectories: np.ndarray, n_spins: int
) -> Dict[int, OUState]:
    """为每个色噪声通道从平稳分布采样初始 ξ"""
    states = {}
    for index, channel in enumerate(channels):
        if channel.kind != NoiseChannelKind.DEPHASING_COLORED:
            continue
        slots = 1 if channel.collective else n_spins
        g = rng.normals(trajectories, slots, index, StreamTag.OU_INITIAL)[..., 0]
        states[index] = ou_initialize(channel.sigma, g)
    return states


def euler_maruyama_step(
    state: SpinEnsembleState,
    model: ModelSpec,
    channels: Sequence[NoiseChannelSpec],
    dt: float,
    rng: CounterRNG,
    trajectories: np.ndarray,
    step: int,
    detunings: Optional[np.ndarray] = None,
    ou: Optional[Dict[int, OUState]] = None,
) -> Tuple[SpinEnsembleState, Dict[int, OUState]]:
    """
    显式 Euler-Maruyama 单步

    所有漂移与增量都在步前状态上求值。第 c 个通道在 (轨迹, 自旋, 步, CHANNEL_BASE + c)
    处抽取 Wiener 增量; 集体退相位与腔损耗只占用一个槽位。

    Args:
        state: 步前状态
        model: 模型
        channels: 通道列表 (已由 effective_channels 展开)
        dt: 步长
        rng: 计数器型随机源
        trajectories: 本批次的轨迹索引
        step: 步数 (随机计数器的一部分)
        detunings: 本批次失谐
        ou: 色噪声状态

    Returns:
        (新状态, 新的色噪声状态)

    Raises:
        TrajectoryDivergenceError: 出现非有限分量
    """
    ou = ou or {}
    s = state.spins
    n = state.n_spins
    ds, dalpha = mean_field_drift(state, model, detunings)
    spins = s + ds * dt
    cavity = None if state.cavity is None else state.cavity + dalpha * dt
    root_dt = np.sqrt(dt)
    new_ou = dict(ou)

    for index, channel in enumerate(channels):
        tag = StreamTag.CHANNEL_BASE + index
        kind = channel.kind
        if kind == NoiseChannelKind.DEPHASING_INDIVIDUAL:
            dW = rng.normals(trajectories, n, step, tag)[..., 0] * root_dt
            spins += dephasing_increment(s, channel.rate, dt, dW)
        elif kind == NoiseChannelKind.DEPHASING_COLLECTIVE:
            dW = rng.normals(trajectories, 1, step, tag)[..., 0] * root_dt
            spins += dephasing_increment(s, channel.rate, dt, dW)
        elif kind == NoiseChannelKind.DEPHASING_COLORED:
            xi = ou[index]
            spins += colored_dephasing_drift(s, xi.xi) * dt
            d_eta = rng.normals(trajectories, xi.n_processes, step, tag)[..., 0] * root_dt
            new_ou[index] = ou_step(xi, channel.tau_c, channel.sigma, dt, d_eta)
        elif kind == NoiseChannelKind.DECAY_STANDARD:
            dW = rng.normals(trajectories, n, step, tag)[..., 0] * root_dt
            spins += decay_increment(s, channel.rate, dt, dW)
        elif kind in (NoiseChannelKind.DECAY_IMPROVED, NoiseChannelKind.DECAY_QLE):
            g = rng.normals(trajectories, n, step, tag) * root_dt
            increment = decay_increment_improved if kind == NoiseChannelKind.DECAY_IMPROVED else decay_increment_qle
            spins += increment(s, channel.rate, dt, g[..., 0], g[..., 1])
        elif kind == NoiseChannelKind.CAVITY_LOSS:
            g = rng.normals(trajectories, 1, step, tag)[:, 0, :] * root_dt
            cavity = cavity + cavity_loss_increment(state.cavity, channel.rate, dt, g[:, 0], g[:, 1])

    finite = np.all(np.isfinite(spins), axis=(1, 2))
    if cavity is not None:
        finite &= np.isfinite(cavity)
    if not np.all(finite):
        failed = [int(t) for t in np.asarray(trajectories)[~finite]]
        raise TrajectoryDivergenceError(failed[0], step, state.time, failed)
    return SpinEnsembleState(spins, cavity, state.time + dt), new_ou


@dataclass
class SimulationPlan:
    """一次系综运行所需的全部只读数据，由各 worker 共享"""
    model: ModelSpec
    channels: List[NoiseChannelSpec]
    grid: TimeGrid
    initial: ProductStateSpec
    rng: CounterRNG
    layout: RawLayout
    window_start: Optional[int] = None
    per_spin: bool = False

    def new_accumulator(self) -> ObservableAccumulator:
        return ObservableAccumulator(
            self.layout, self.grid.n_outputs, window_start=self.window_start, per_spin=self.per_spin
        )


def run_batch(trajectories: Sequence[int], plan: SimulationPlan) -> ObservableAccumulator:
    """
    向量化推进一批轨迹并累积原始矩

    每条轨迹的结果只依赖 (主种子, 轨迹索引)，与同批其他轨迹无关。

    Raises:
        TrajectoryDivergenceError: 列出本批次所有发散轨迹
    """
    indices = np.asarray(trajectories, dtype=np.int64)
    model = plan.model
    grid = plan.grid
    accumulator = plan.new_accumulator()
    state = sample_initial_ensemble(plan.initial, model.n_spins, plan.rng, indices, with_cavity=model.has_cavity)
    detunings = model.detunings(plan.rng, indices)
    ou = initialize_ou(plan.channels, plan.rng, indices, model.n_spins)

    accumulator.start_batch(len(indices))
    accumulator.record(0, state)
    output = 1
    for step in range(1, grid.n_steps + 1):
        state, ou = euler_maruyama_step(
            state, model, plan.channels, grid.dt, plan.rng, indices, step, detunings, ou
        )
        if step % grid.output_stride == 0:
            accumulator.record(output, state)
            output += 1
    accumulator.finish_batch()
    return accumulator


def run_trajectory(index: int, plan: SimulationPlan) -> ObservableAccumulator:
    """单条轨迹 (批大小为 1 的 run_batch)"""
    try:
        return run_batch([index], plan)
    except TrajectoryDivergenceError:
        logger.error(f"轨迹 {index} 积分失败", exc_info=True)
        raise
