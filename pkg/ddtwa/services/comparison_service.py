"""
比较服务模块
逐列比较两张数据表 (通常为随机引擎与 oracle)
"""

import logging
from typing import List, Optional

import numpy as np

from ..config import get_settings
from ..core.observables import ObservableSeries
from ..exceptions import ConfigError
from ..models.schemas import CompareEntry, CompareReport

logger = logging.getLogger(__name__)


class ComparisonService:
    """
    比较服务类

    容差 = max(z_threshold·√(σ_a² + σ_b²), abs_floor, relative·|参考值|)，
    偏差不超过容差即通过。
    """

    _instance: Optional["ComparisonService"] = None

    def __new__(cls):
        """单例模式"""
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        self._initialized = getattr(self, '_initialized', False)

    def initialize(self) -> None:
        self._initialized = True
        logger.info("比较服务初始化完成")

    @property
    def is_initialized(self) -> bool:
        """检查是否已初始化"""
        return self._initialized

    def compare(
        self,
        run: ObservableSeries,
        reference: ObservableSeries,
        z_threshold: Optional[float] = None,
        abs_floor: Optional[float] = None,
        relative: float = 0.0,
        observables: Optional[List[str]] = None,
    ) -> CompareReport:
        """
        比较两张数据表

        Args:
            run: 待检验的数据表
            reference: 参考数据表 (相对容差以其为基准)
            z_threshold: z 分数阈值
            abs_floor: 绝对容差下限
            relative: 相对容差
            observables: 只比较这些观测量; 缺省为两表共有的全部观测量

        Returns:
            CompareReport

        Raises:
            ConfigError: 时间网格或观测量集合不匹配
        """
        if not self.is_initialized:
            raise RuntimeError("比较服务未初始化")
        settings = get_settings()
        z_threshold = settings.COMPARE_Z_THRESHOLD if z_threshold is None else z_threshold
        abs_floor = settings.COMPARE_ABS_FLOOR if abs_floor is None else abs_floor

        if len(run.times) != len(reference.times) or not np.allclose(run.times, reference.times, rtol=1e-9, atol=1e-12):
            raise ConfigError("两张数据表的时间网格不一致", ["time"])
        if observables:
            missing = [name for name in observables if name not in run.columns or name not in reference.columns]
            if missing:
                raise ConfigError(f"数据表缺少观测量: {missing}", missing)
            names = list(observables)
        else:
            names = [name for name in run.names if name in reference.columns]
        if not names:
            raise ConfigError("两张数据表没有共同的观测量", [])

        entries = [
            self._compare_column(name, run, reference, z_threshold, abs_floor, relative)
            for name in names
        ]
        passed = all(entry.passed for entry in entries)
        if passed:
            logger.info(f"比较通过: {len(entries)} 个观测量")
        else:
            failing = [entry.observable for entry in entries if not entry.passed]
            logger.warning(f"比较未通过: {failing}")
        return CompareReport(
            passed=passed, z_threshold=z_threshold, abs_floor=abs_floor, relative=relative, entries=entries
        )

    @staticmethod
    def _compare_column(
        name: str,
        run: ObservableSeries,
        reference: ObservableSeries,
        z_threshold: float,
        abs_floor: float,
        relative: float,
    ) -> CompareEntry:
        a, b = run.mean(name), reference.mean(name)
        sigma = np.sqrt(np.nan_to_num(run.stderr(name)) ** 2 + np.nan_to_num(reference.stderr(name)) ** 2)
        defined_a, defined_b = np.isfinite(a), np.isfinite(b)
        valid = defined_a & defined_b
        # 只有一边有定义的点视为无穷偏差; 两边都无定义 (例如 g2 在光子数下限以下) 时不参与判定
        one_sided = defined_a ^ defined_b
        mismatches = int(one_sided.sum())
        if not np.any(valid) and mismatches == 0:
            return CompareEntry(observable=name, max_deviation_units=0.0, max_z=None,
                                max_abs_deviation=0.0, at_time=None, compared_points=0, passed=True)

        max_units, at_time, max_abs, max_z = 0.0, None, 0.0, None
        if np.any(valid):
            deviation = np.abs(a - b)[valid]
            sigma = sigma[valid]
            tolerance = np.maximum.reduce(
                [z_threshold * sigma, np.full(sigma.shape, abs_floor), relative * np.abs(b[valid])])
            units = np.where(tolerance > 0, deviation / np.where(tolerance > 0, tolerance, 1.0),
                             np.where(deviation > 0, np.inf, 0.0))
            worst = int(np.argmax(units))
            max_units, at_time = float(units[worst]), float(run.times[valid][worst])
            max_abs = float(np.max(deviation))
            if np.any(sigma > 0):
                z = np.where(sigma > 0, deviation / np.where(sigma > 0, sigma, 1.0), 0.0)
                max_z = float(np.max(z))
        if mismatches:
            max_units, at_time = float("inf"), float(run.times[one_sided][0])
            logger.warning(f"观测量 {name} 有 {mismatches} 个时间点只在一张表中有定义")
        return CompareEntry(
            observable=name,
            max_deviation_units=max_units,
            max_z=max_z,
            max_abs_deviation=max_abs,
            at_time=at_time,
            compared_points=int(valid.sum()),
            undefined_mismatches=mismatches,
            passed=bool(max_units <= 1.0),
        )


# 全局服务实例
comparison_service = ComparisonService()


def get_comparison_service() -> ComparisonService:
    """获取比较服务实例"""
    return comparison_service
