"""
异常定义
每一类异常对应CLI的一个退出码
"""

from typing import List, Optional


class DDTWAError(Exception):
    """所有模拟器异常的基类"""

    exit_code: int = 1


class ConfigError(DDTWAError):
    """场景配置无效"""

    exit_code = 1

    def __init__(self, message: str, offending_keys: Optional[List[str]] = None):
        super().__init__(message)
        self.offending_keys = offending_keys or []


class NumericalError(DDTWAError):
    """数值积分失败"""

    exit_code = 2


class TrajectoryDivergenceError(NumericalError):
    """轨迹出现非有限值，通常意味着步长过大"""

    def __init__(self, trajectory_index: int, step: int, time: float,
                 failed_trajectories: Optional[List[int]] = None):
        super().__init__(
            f"轨迹 {trajectory_index} 在第 {step} 步 (t={time:.6g}) 出现非有限值，请减小步长 dt"
        )
        self.trajectory_index = trajectory_index
        self.step = step
        self.time = time
        self.failed_trajectories = failed_trajectories or [trajectory_index]


class OracleIntegrityError(NumericalError):
    """密度矩阵迹或厄米性漂移超出容差"""


class OracleCutoffError(NumericalError):
    """光子截断能级布居超出容差"""


class OracleDimensionError(NumericalError):
    """希尔伯特空间维数超出上限"""

    exit_code = 1

    def __init__(self, dimension: int, cap: int):
        super().__init__(f"系统维数 D={dimension} 超出 oracle 上限 {cap} (ORACLE_DIMENSION_CAP)")
        self.dimension = dimension
        self.cap = cap


class ComparisonError(DDTWAError):
    """比较未通过"""

    exit_code = 3
