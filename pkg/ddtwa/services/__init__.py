"""
服务模块包
"""

from .storage_service import StorageService, get_storage_service
from .ensemble_service import EnsembleService, EnsembleResult, get_ensemble_service
from .oracle_service import OracleService, get_oracle_service
from .comparison_service import ComparisonService, get_comparison_service
from .scenario_service import ScenarioService, ScenarioContext, get_scenario_service

__all__ = [
    "StorageService",
    "get_storage_service",
    "EnsembleService",
    "EnsembleResult",
    "get_ensemble_service",
    "OracleService",
    "get_oracle_service",
    "ComparisonService",
    "get_comparison_service",
    "ScenarioService",
    "ScenarioContext",
    "get_scenario_service",
]
