"""
精确参考服务模块
封装稠密主方程积分与平均场参考
"""

import time
import logging
from typing import Optional, Sequence

from ..config import get_settings
from ..core.hamiltonian import ModelSpec
from ..core.integrator import TimeGrid
from ..core.observables import ObservableSeries
from ..core.oracle import (
    OracleTolerances,
    build_liouvillian,
    check_dimension,
    default_photon_cutoff,
    evolve_master_equation,
    initial_density_matrix,
    mean_field_reference,
)
from ..core.spins import ProductStateSpec
from ..models.schemas import NoiseChannelSpec, ObservableRequest

logger = logging.getLogger(__name__)


class OracleService:
    """
    精确参考服务类
    负责维数检查、生成元构建与积分
    """

    _instance: Optional["OracleService"] = None

    def __new__(cls):
        """单例模式"""
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        self._initialized = getattr(self, '_initialized', False)
        self._tolerances: Optional[OracleTolerances] = getattr(self, '_tolerances', None)
        self._dimension_cap: int = getattr(self, '_dimension_cap', 4096)

    def initialize(self) -> None:
        """从配置读取容差与维数上限"""
        if self._initialized:
            logger.info("oracle 服务已初始化，跳过重复初始化")
            return
        settings = get_settings()
        self._dimension_cap = settings.ORACLE_DIMENSION_CAP
        self._tolerances = OracleTolerances(
            trace=settings.ORACLE_TRACE_TOLERANCE,
            hermiticity=settings.ORACLE_HERMITICITY_TOLERANCE,
            photon_cutoff=settings.PHOTON_CUTOFF_TOLERANCE,
            rk4_stability=settings.ORACLE_RK4_STABILITY,
        )
        self._initialized = True
        logger.info(f"oracle 服务初始化完成 (维数上限 {self._dimension_cap})")

    @property
    def is_initialized(self) -> bool:
        """检查是否已初始化"""
        return self._initialized

    @property
    def dimension_cap(self) -> int:
        return self._dimension_cap

    def evolve(
        self,
        model: ModelSpec,
        channels: Sequence[NoiseChannelSpec],
        grid: TimeGrid,
        initial: ProductStateSpec,
        request: ObservableRequest,
        photon_cutoff: Optional[int] = None,
        window_start: Optional[int] = None,
    ) -> ObservableSeries:
        """
        精确主方程积分

        Raises:
            OracleDimensionError: D 超出上限
            ConfigError: 场景含 oracle 无法表示的通道
        """
        if not self.is_initialized:
            raise RuntimeError("oracle 服务未初始化")
        settings = get_settings()
        n_photon = 1
        if model.has_cavity:
            n_photon = photon_cutoff or default_photon_cutoff(initial.cavity_alpha0)
        dimension = check_dimension(model.n_spins, n_photon, self._dimension_cap)
        logger.info(f"构建 Lindblad 生成元: N={model.n_spins}, n_ph={n_photon}, D={dimension}")

        started = time.perf_counter()
        spec = build_liouvillian(model, channels, n_photon)
        rho0 = initial_density_matrix(initial, spec.n_photon)
        series = evolve_master_equation(
            rho0, spec, grid, request,
            epsilon=settings.SQUEEZING_EPSILON,
            photon_floor=settings.PHOTON_NUMBER_FLOOR,
            tolerances=self._tolerances,
            window_start=window_start,
        )
        logger.info(f"oracle 完成，耗时 {time.perf_counter() - started:.2f}s")
        return series

    def mean_field(
        self,
        model: ModelSpec,
        channels: Sequence[NoiseChannelSpec],
        grid: TimeGrid,
        initial: ProductStateSpec,
        request: ObservableRequest,
        window_start: Optional[int] = None,
    ) -> ObservableSeries:
        """平均场参考"""
        if not self.is_initialized:
            raise RuntimeError("oracle 服务未初始化")
        settings = get_settings()
        return mean_field_reference(
            model, channels, grid, initial, request,
            epsilon=settings.SQUEEZING_EPSILON,
            photon_floor=settings.PHOTON_NUMBER_FLOOR,
            window_start=window_start,
        )


# 全局服务实例
oracle_service = OracleService()


def get_oracle_service() -> OracleService:
    """获取 oracle 服务实例"""
    return oracle_service
