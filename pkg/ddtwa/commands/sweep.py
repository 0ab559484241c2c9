"""
sweep 命令
对一个配置参数逐值运行并汇总
"""

import json
import logging
from argparse import Namespace
from typing import Any, List

from ..exceptions import ConfigError
from ..services import get_scenario_service, get_storage_service
from .common import load_scenario

logger = logging.getLogger(__name__)


def parse_values(raw: str) -> List[Any]:
    """--values 接受 JSON 数组或逗号分隔列表; 空字符串表示空列表"""
    raw = (raw or "").strip()
    if not raw:
        return []
    if raw.startswith("["):
        try:
            values = json.loads(raw)
        except json.JSONDecodeError as e:
            raise ConfigError(f"--values 不是合法的 JSON 数组: {e}", ["values"])
        if not isinstance(values, list):
            raise ConfigError("--values 必须是数组", ["values"])
        return values
    values = []
    for item in raw.split(","):
        item = item.strip()
        try:
            values.append(json.loads(item))
        except json.JSONDecodeError:
            values.append(item)
    return values


def execute(args: Namespace) -> int:
    """子运行失败不会中止扫描; 报告中逐值列出"""
    if not args.parameter:
        raise ConfigError("sweep 需要 --parameter", ["parameter"])
    scenario = get_scenario_service()
    storage = get_storage_service()
    config = load_scenario(args)
    values = parse_values(args.values)
    mode = "mean_field" if args.mean_field else args.sweep_mode

    frame, report = scenario.sweep(config, args.parameter, values, command=mode, workers=args.threads)
    stem = f"{config.name}_sweep_{args.parameter.replace('.', '_')}"
    storage.write_frame(frame, storage.output_dir / f"{stem}.csv")
    storage.write_document(report, storage.output_dir / f"{stem}.json")
    if report.failures:
        logger.warning(f"{len(report.failures)} 个子运行失败")
    return 0
