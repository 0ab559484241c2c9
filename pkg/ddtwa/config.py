"""
配置管理模块
支持环境变量和默认配置的灵活切换
"""

from pathlib import Path
from functools import lru_cache

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """应用配置类"""

    # 基础配置
    APP_NAME: str = "DDTWA Spin Ensemble Simulator"
    APP_VERSION: str = "1.0.0"
    DEBUG: bool = False
    LOG_LEVEL: str = "INFO"

    # 输出配置
    OUTPUT_DIR: str = str(Path.cwd() / "output")
    SCENARIO_SCHEMA_VERSION: int = 1

    # 轨迹并行配置
    DEFAULT_WORKERS: int = 1
    TRAJECTORY_BATCH_SIZE: int = 256  # 与worker数量无关，保证结果逐位可复现

    # 积分步长配置
    STEP_SIZE_SAFETY: float = 0.01  # dt = STEP_SIZE_SAFETY / max(rate)
    STABILITY_WARNING_THRESHOLD: float = 0.1  # dt * max(rate) 超过此值时告警
    LENGTH_DRIFT_Z: float = 2.0  # 自动步长下退相位长度漂移不超过此倍数的标准误差

    # 精确主方程(oracle)配置
    ORACLE_DIMENSION_CAP: int = 4096
    ORACLE_TRACE_TOLERANCE: float = 1e-8
    ORACLE_HERMITICITY_TOLERANCE: float = 1e-10
    ORACLE_RK4_STABILITY: float = 0.5  # 每个子步 h * ||L|| 的上限
    PHOTON_CUTOFF_TOLERANCE: float = 1e-6  # 最高两个Fock能级布居上限

    # 观测量配置
    SQUEEZING_EPSILON: float = 1e-6  # |<S>| <= eps * N 时 xi^2 无定义
    PHOTON_NUMBER_FLOOR: float = 1e-3  # <a^dag a> 低于此值时 g2 无定义
    NEGATIVE_PHOTON_SIGMA: float = 3.0
    STEADY_STATE_WINDOW: float = 0.25  # 默认取末尾 25% 时间窗口

    # 比较配置
    COMPARE_Z_THRESHOLD: float = 4.0
    COMPARE_ABS_FLOOR: float = 1e-9

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"
        case_sensitive = True
        extra = "ignore"  # 允许.env中存在未在Settings中定义的字段


@lru_cache()
def get_settings() -> Settings:
    """获取缓存的配置实例"""
    return Settings()


def ensure_directories(output_dir: str) -> Path:
    """确保输出目录存在"""
    path = Path(output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path
