"""
系综运行服务模块
把轨迹按固定批次分发到线程池，并按批次顺序归约
"""

import time
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from ..config import get_settings
from ..core.integrator import SimulationPlan, TrajectorySpec, run_batch, run_trajectory
from ..core.observables import ObservableAccumulator, ObservableSeries, estimate_series, estimate_window
from ..exceptions import NumericalError, TrajectoryDivergenceError

logger = logging.getLogger(__name__)


@dataclass
class EnsembleResult:
    """一次系综运行的结果"""
    series: ObservableSeries
    count: int
    failed_trajectories: List[int] = field(default_factory=list)
    wall_clock_seconds: float = 0.0
    seconds_per_step_per_trajectory: Optional[float] = None


class EnsembleService:
    """
    系综运行服务类
    负责轨迹批次的并行调度、失败轨迹的剔除与结果估计
    """

    _instance: Optional["EnsembleService"] = None

    def __new__(cls):
        """单例模式"""
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        self._initialized = getattr(self, '_initialized', False)
        self._default_workers: int = getattr(self, '_default_workers', 1)
        self._batch_size: int = getattr(self, '_batch_size', 256)

    def initialize(self, default_workers: Optional[int] = None, batch_size: Optional[int] = None) -> None:
        """
        初始化系综服务

        Args:
            default_workers: 未指定时使用的 worker 数
            batch_size: 每批轨迹数 (与 worker 数无关)
        """
        if self._initialized:
            logger.info("系综服务已初始化，跳过重复初始化")
            return
        settings = get_settings()
        self._default_workers = default_workers or settings.DEFAULT_WORKERS
        self._batch_size = batch_size or settings.TRAJECTORY_BATCH_SIZE
        if self._batch_size < 1:
            raise ValueError("TRAJECTORY_BATCH_SIZE 必须 >= 1")
        self._initialized = True
        logger.info(f"系综服务初始化完成 (workers={self._default_workers}, batch={self._batch_size})")

    @property
    def is_initialized(self) -> bool:
        """检查是否已初始化"""
        return self._initialized

    def batches(self, n_t: int) -> List[List[int]]:
        """按固定大小划分轨迹索引"""
        return [list(range(start, min(start + self._batch_size, n_t))) for start in range(0, n_t, self._batch_size)]

    def run_trajectory(self, index: int, plan: SimulationPlan) -> ObservableAccumulator:
        """运行单条轨迹 (结果只依赖主种子与索引)"""
        if not self.is_initialized:
            raise RuntimeError("系综服务未初始化")
        return run_trajectory(index, plan)

    def _run_batch(
        self, indices: Sequence[int], plan: SimulationPlan, allow_failures: bool
    ) -> Tuple[Optional[ObservableAccumulator], List[int]]:
        """运行一批; 允许失败时剔除发散轨迹后重跑 (计数器随机源保证幸存轨迹逐位不变)"""
        remaining = list(indices)
        failed: List[int] = []
        while remaining:
            try:
                return run_batch(remaining, plan), failed
            except TrajectoryDivergenceError as e:
                if not allow_failures:
                    raise
                logger.warning(f"剔除发散轨迹 {e.failed_trajectories} (第 {e.step} 步)")
                failed.extend(e.failed_trajectories)
                excluded = set(e.failed_trajectories)
                remaining = [i for i in remaining if i not in excluded]
        return None, failed

    def run_ensemble(
        self,
        plan: SimulationPlan,
        trajectories: TrajectorySpec,
        request,
        allow_failures: bool = False,
    ) -> EnsembleResult:
        """
        运行全部轨迹并估计观测量

        Args:
            plan: 共享的只读运行数据
            trajectories: 轨迹数、种子与 worker 数
            request: 观测量请求
            allow_failures: True 时记录并剔除发散轨迹

        Returns:
            EnsembleResult

        Raises:
            TrajectoryDivergenceError: 不允许失败时任一轨迹发散
            NumericalError: 全部轨迹均发散
        """
        if not self.is_initialized:
            raise RuntimeError("系综服务未初始化")
        settings = get_settings()
        workers = trajectories.worker_count or self._default_workers
        batches = self.batches(trajectories.n_t)
        logger.info(
            f"开始系综运行: n_t={trajectories.n_t}, N={plan.model.n_spins}, 步数={plan.grid.n_steps}, "
            f"批次={len(batches)}, workers={workers}"
        )

        started = time.perf_counter()
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda batch: self._run_batch(batch, plan, allow_failures), batches))
        wall_clock = time.perf_counter() - started

        total = plan.new_accumulator()
        failed: List[int] = []
        for accumulator, batch_failures in results:
            failed.extend(batch_failures)
            if accumulator is not None:
                total.merge(accumulator)
        if total.count == 0:
            raise NumericalError(f"全部 {trajectories.n_t} 条轨迹均发散，请减小步长 dt")
        if failed:
            logger.warning(f"共剔除 {len(failed)} 条发散轨迹")

        mean, cov = total.moments()
        spin_mean, spin_stderr = total.spin_moments()
        series = estimate_series(
            plan.layout, request, plan.grid.output_times, mean, cov, total.count,
            settings.SQUEEZING_EPSILON, settings.PHOTON_NUMBER_FLOOR,
            spin_mean=spin_mean, spin_stderr=spin_stderr,
            negative_photon_sigma=settings.NEGATIVE_PHOTON_SIGMA,
        )
        if plan.window_start is not None:
            window_mean, window_cov = total.window_moments()
            series.steady_state = estimate_window(
                plan.layout, request, window_mean, window_cov, total.window_count,
                settings.SQUEEZING_EPSILON, settings.PHOTON_NUMBER_FLOOR,
            )

        per_step = wall_clock / (plan.grid.n_steps * trajectories.n_t)
        logger.info(f"系综运行完成: 耗时 {wall_clock:.2f}s, 每步每轨迹 {per_step:.3e}s")
        return EnsembleResult(
            series=series,
            count=total.count,
            failed_trajectories=sorted(failed),
            wall_clock_seconds=wall_clock,
            seconds_per_step_per_trajectory=per_step,
        )


# 全局服务实例
ensemble_service = EnsembleService()


def get_ensemble_service() -> EnsembleService:
    """获取系综服务实例"""
    return ensemble_service
