"""
场景服务模块
场景配置的加载、覆盖与校验，由配置构建运行对象，并编排 run / oracle / sweep
"""

import copy
import json
import time
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from ..config import get_settings
from ..core.hamiltonian import ModelSpec, build_model
from ..core.integrator import (
    SimulationPlan,
    TimeGrid,
    TrajectorySpec,
    check_stability,
    default_time_step,
    effective_channels,
)
from ..core.observables import ObservableSeries, RawLayout, summarize_spin_length
from ..core.rng import CounterRNG
from ..core.spins import ProductStateSpec
from ..exceptions import ConfigError, DDTWAError
from ..models.schemas import (
    NoiseChannelSpec,
    RunMetadata,
    ScenarioConfig,
    SpinLengthSummary,
    SweepFailure,
    SweepReport,
)
from .ensemble_service import get_ensemble_service
from .oracle_service import get_oracle_service

logger = logging.getLogger(__name__)


@dataclass
class ScenarioContext:
    """由场景配置构建的运行对象"""
    config: ScenarioConfig
    model: ModelSpec
    channels: List[NoiseChannelSpec]
    grid: TimeGrid
    initial: ProductStateSpec
    rng: CounterRNG
    layout: RawLayout
    window_fraction: Optional[float]
    window_start: Optional[int]

    def plan(self) -> SimulationPlan:
        return SimulationPlan(
            model=self.model,
            channels=self.channels,
            grid=self.grid,
            initial=self.initial,
            rng=self.rng,
            layout=self.layout,
            window_start=self.window_start,
            per_spin=self.config.observables.per_spin_means,
        )


def parse_override(override: str) -> Tuple[List[str], Any]:
    """
    解析 --set key.path=value

    value 按 JSON 字面量解析，失败时作为字符串。
    """
    if "=" not in override:
        raise ConfigError(f"覆盖项格式应为 key.path=value: {override}", [override])
    key, raw = override.split("=", 1)
    path = [part for part in key.strip().split(".") if part]
    if not path:
        raise ConfigError(f"覆盖项缺少键: {override}", [override])
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


def apply_override(document: Dict[str, Any], path: Sequence[str], value: Any) -> Dict[str, Any]:
    """在字典 (及列表, 以整数下标访问) 中按路径设置值，缺失的中间层自动创建"""
    node: Any = document
    for depth, part in enumerate(path[:-1]):
        if isinstance(node, list):
            try:
                node = node[int(part)]
            except (ValueError, IndexError):
                raise ConfigError(f"无效的列表下标: {'.'.join(path[:depth + 1])}", [".".join(path)])
        else:
            if node.get(part) is None:
                node[part] = {}
            node = node[part]
    last = path[-1]
    if isinstance(node, list):
        try:
            node[int(last)] = value
        except (ValueError, IndexError):
            raise ConfigError(f"无效的列表下标: {'.'.join(path)}", [".".join(path)])
    elif isinstance(node, dict):
        node[last] = value
    else:
        raise ConfigError(f"无法在非对象节点上设置: {'.'.join(path)}", [".".join(path)])
    return document


class ScenarioService:
    """
    场景服务类
    负责配置校验、对象构建以及各命令的运行编排
    """

    _instance: Optional["ScenarioService"] = None

    def __new__(cls):
        """单例模式"""
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        self._initialized = getattr(self, '_initialized', False)

    def initialize(self) -> None:
        """初始化依赖的服务"""
        if self._initialized:
            logger.info("场景服务已初始化，跳过重复初始化")
            return
        get_ensemble_service().initialize()
        get_oracle_service().initialize()
        self._initialized = True
        logger.info("场景服务初始化完成")

    @property
    def is_initialized(self) -> bool:
        """检查是否已初始化"""
        return self._initialized

    # ==================== 配置 ====================

    def load_document(self, path: str) -> Dict[str, Any]:
        """读取 JSON 场景文件"""
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"配置文件不存在: {path}", [str(path)])
        try:
            document = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"配置文件不是合法 JSON: {path}: {e}", [str(path)])
        if not isinstance(document, dict):
            raise ConfigError("配置文件顶层必须是对象", [str(path)])
        return document

    def validate(self, document: Dict[str, Any]) -> ScenarioConfig:
        """
        校验场景字典

        Raises:
            ConfigError: 列出所有出错的键
        """
        settings = get_settings()
        try:
            config = ScenarioConfig.model_validate(document)
        except ValidationError as e:
            keys = [".".join(str(part) for part in error["loc"]) or "<root>" for error in e.errors()]
            details = "; ".join(f"{key}: {error['msg']}" for key, error in zip(keys, e.errors()))
            raise ConfigError(f"场景配置无效: {details}", keys)
        if config.schema_version != settings.SCENARIO_SCHEMA_VERSION:
            raise ConfigError(
                f"不支持的 schema_version={config.schema_version} (当前 {settings.SCENARIO_SCHEMA_VERSION})",
                ["schema_version"],
            )
        return config

    def load_config(self, path: str, overrides: Optional[Sequence[str]] = None) -> ScenarioConfig:
        """读取、覆盖并校验场景配置"""
        document = self.load_document(path)
        for override in overrides or []:
            key_path, value = parse_override(override)
            apply_override(document, key_path, value)
        return self.validate(document)

    def with_overrides(self, config: ScenarioConfig, overrides: Dict[str, Any]) -> ScenarioConfig:
        """在已校验的配置上再施加覆盖 (sweep 与命令行选项使用)"""
        document = copy.deepcopy(config.model_dump(mode="json"))
        for key, value in overrides.items():
            apply_override(document, [part for part in key.split(".") if part], value)
        return self.validate(document)

    # ==================== 对象构建 ====================

    def build(self, config: ScenarioConfig) -> ScenarioContext:
        """由场景配置构建模型、通道、时间网格与随机源"""
        settings = get_settings()
        rng = CounterRNG(config.run.seed)
        try:
            model = build_model(config.model, rng)
            channels = effective_channels(model, config.noise)
            initial = ProductStateSpec.from_config(config.initial_state, model.n_spins)
        except ValueError as e:
            raise ConfigError(f"模型构建失败: {e}", ["model"])

        dt = config.run.dt
        if dt is None:
            dt = default_time_step(
                model, channels, initial, rng, config.run.t_end, settings.STEP_SIZE_SAFETY,
                n_t=config.run.n_t, length_z=settings.LENGTH_DRIFT_Z,
            )
            logger.info(f"自动选择步长 dt={dt:.6g}")
        try:
            grid = TimeGrid(config.run.t_end, dt, config.run.output_stride)
        except ValueError as e:
            raise ConfigError(f"时间网格无效: {e}", ["run.dt", "run.t_end"])
        check_stability(dt, model, channels, settings.STABILITY_WARNING_THRESHOLD)

        fraction = config.run.steady_state_window
        window_start = grid.window_start(fraction) if fraction is not None else None
        layout = RawLayout(model.n_spins, model.has_cavity, list(config.observables.pair_correlations))
        return ScenarioContext(
            config=config,
            model=model,
            channels=channels,
            grid=grid,
            initial=initial,
            rng=rng,
            layout=layout,
            window_fraction=fraction,
            window_start=window_start,
        )

    # ==================== 运行 ====================

    def run(self, config: ScenarioConfig, workers: Optional[int] = None) -> Tuple[ObservableSeries, RunMetadata]:
        """随机系综运行"""
        if not self.is_initialized:
            raise RuntimeError("场景服务未初始化")
        context = self.build(config)
        run = config.run
        trajectories = TrajectorySpec(n_t=run.n_t, master_seed=run.seed, worker_count=workers or run.workers)
        result = get_ensemble_service().run_ensemble(
            context.plan(), trajectories, config.observables, allow_failures=run.allow_failures
        )
        metadata = self._metadata(
            "run", context, result.series,
            wall_clock=result.wall_clock_seconds,
            per_step=result.seconds_per_step_per_trajectory,
            failed=result.failed_trajectories,
        )
        return result.series, metadata

    def oracle(self, config: ScenarioConfig, mean_field: bool = False) -> Tuple[ObservableSeries, RunMetadata]:
        """精确主方程 (或平均场参考) 运行"""
        if not self.is_initialized:
            raise RuntimeError("场景服务未初始化")
        context = self.build(config)
        service = get_oracle_service()
        started = time.perf_counter()
        if mean_field:
            series = service.mean_field(
                context.model, context.channels, context.grid, context.initial,
                config.observables, window_start=context.window_start,
            )
        else:
            photon_cutoff = config.model.cavity.photon_cutoff if config.model.cavity is not None else None
            series = service.evolve(
                context.model, context.channels, context.grid, context.initial,
                config.observables, photon_cutoff=photon_cutoff, window_start=context.window_start,
            )
        metadata = self._metadata(
            "mean_field" if mean_field else "oracle", context, series,
            wall_clock=time.perf_counter() - started,
        )
        return series, metadata

    def sweep(
        self,
        config: ScenarioConfig,
        parameter: str,
        values: Sequence[Any],
        command: str = "run",
        workers: Optional[int] = None,
    ) -> Tuple[pd.DataFrame, SweepReport]:
        """
        参数扫描: 对每个值运行场景，把稳态 (或末时刻) 观测量汇总成一张表

        子运行失败按值记录，扫描继续。
        """
        if not self.is_initialized:
            raise RuntimeError("场景服务未初始化")
        rows: List[Dict[str, Any]] = []
        report = SweepReport(parameter=parameter, values=list(values))
        for value in values:
            logger.info(f"扫描 {parameter}={value}")
            try:
                sub_config = self.with_overrides(config, {parameter: value})
                if command == "run":
                    series, _ = self.run(sub_config, workers)
                else:
                    series, _ = self.oracle(sub_config, mean_field=(command == "mean_field"))
            except DDTWAError as e:
                logger.error(f"扫描 {parameter}={value} 失败: {e}", exc_info=True)
                report.failures.append(SweepFailure(value=value, error=str(e)))
                continue
            rows.append(self._sweep_row(parameter, value, series))
        frame = pd.DataFrame(rows) if rows else pd.DataFrame(columns=[parameter])
        return frame, report

    @staticmethod
    def _sweep_row(parameter: str, value: Any, series: ObservableSeries) -> Dict[str, Any]:
        row: Dict[str, Any] = {parameter: value}
        if series.steady_state:
            for name, estimate in series.steady_state.items():
                row[f"{name}_mean"] = estimate.mean if estimate.mean is not None else np.nan
                row[f"{name}_stderr"] = estimate.stderr if estimate.stderr is not None else np.nan
        else:
            for name in series.names:
                row[f"{name}_mean"] = series.mean(name)[-1]
                row[f"{name}_stderr"] = series.stderr(name)[-1]
        return row

    # ==================== 元数据 ====================

    def _metadata(
        self,
        command: str,
        context: ScenarioContext,
        series: ObservableSeries,
        wall_clock: float = 0.0,
        per_step: Optional[float] = None,
        failed: Optional[List[int]] = None,
    ) -> RunMetadata:
        """构建伴随元数据; 场景中写入解析后的 dt，使输出可仅凭元数据复现"""
        settings = get_settings()
        config = context.config
        resolved = config.model_dump(mode="json")
        resolved["run"]["dt"] = context.grid.dt

        spin_length = SpinLengthSummary()
        if "spin_length" in series.columns:
            spin_length = SpinLengthSummary(**summarize_spin_length(
                series.times, series.mean("spin_length"), context.window_fraction or settings.STEADY_STATE_WINDOW
            ))
        return RunMetadata(
            command=command,
            version=f"{settings.APP_NAME} {settings.APP_VERSION}",
            scenario=resolved,
            seed=config.run.seed,
            n_t=config.run.n_t,
            dt=context.grid.dt,
            t_end=config.run.t_end,
            output_stride=config.run.output_stride,
            model_hash=context.model.model_hash(),
            mean_coupling_jbar=context.model.mean_coupling(),
            wall_clock_seconds=wall_clock,
            seconds_per_step_per_trajectory=per_step,
            spin_length=spin_length,
            failure_count=len(failed or []),
            failed_trajectories=failed or [],
            flags=list(series.flags),
            steady_state=series.steady_state,
        )


# 全局服务实例
scenario_service = ScenarioService()


def get_scenario_service() -> ScenarioService:
    """获取场景服务实例"""
    return scenario_service
