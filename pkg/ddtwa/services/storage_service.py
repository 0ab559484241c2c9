"""
输出存储服务模块
数据表 (CSV) 与伴随元数据 (JSON) 的读写
"""

import logging
from pathlib import Path
from typing import Optional, Tuple

import pandas as pd
from pydantic import BaseModel

from ..config import ensure_directories
from ..core.observables import ObservableSeries
from ..exceptions import ConfigError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12e"


class StorageService:
    """
    输出存储服务类
    负责数据表和元数据文件的命名、写入与读取
    """

    _instance: Optional["StorageService"] = None

    def __new__(cls):
        """单例模式"""
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        self._initialized = getattr(self, '_initialized', False)
        self._output_dir: Optional[Path] = getattr(self, '_output_dir', None)

    def initialize(self, output_dir: str) -> None:
        """
        初始化存储服务

        Args:
            output_dir: 输出根目录
        """
        self._output_dir = ensure_directories(output_dir)
        self._initialized = True
        logger.info(f"存储服务初始化完成，输出目录: {self._output_dir}")

    @property
    def is_initialized(self) -> bool:
        """检查是否已初始化"""
        return self._initialized and self._output_dir is not None

    @property
    def output_dir(self) -> Path:
        if not self.is_initialized:
            raise RuntimeError("存储服务未初始化")
        return self._output_dir

    def output_paths(self, name: str, command: str) -> Tuple[Path, Path]:
        """数据表与元数据的路径: <name>_<command>.csv / .json"""
        stem = f"{name}_{command}"
        return self.output_dir / f"{stem}.csv", self.output_dir / f"{stem}.json"

    def write_frame(self, frame: pd.DataFrame, path: Path) -> Path:
        """以固定浮点格式写出 CSV (NaN 写为空单元格)"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")
        logger.info(f"数据表已写入: {path}")
        return path

    def write_table(self, series: ObservableSeries, path: Path) -> Path:
        return self.write_frame(series.to_frame(), path)

    def read_table(self, path: str) -> ObservableSeries:
        """读取数据表"""
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"数据表不存在: {path}", [str(path)])
        try:
            frame = pd.read_csv(path)
        except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise ConfigError(f"数据表无法解析: {path}: {e}", [str(path)])
        try:
            return ObservableSeries.from_frame(frame)
        except ValueError as e:
            raise ConfigError(f"数据表格式无效: {path}: {e}", [str(path)])

    def write_document(self, document: BaseModel, path: Path) -> Path:
        """写出 pydantic 模型为 JSON 文档 (元数据 / 报告)"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(document.model_dump_json(indent=2), encoding="utf-8")
        logger.info(f"文档已写入: {path}")
        return path


# 全局服务实例
storage_service = StorageService()


def get_storage_service() -> StorageService:
    """获取存储服务实例"""
    return storage_service
