"""
oracle 命令
对同一场景做精确主方程积分 (或平均场参考)，输出与 run 相同格式的数据表
"""

import logging
from argparse import Namespace

from ..services import get_scenario_service, get_storage_service
from .common import load_scenario

logger = logging.getLogger(__name__)


def execute(args: Namespace) -> int:
    scenario = get_scenario_service()
    storage = get_storage_service()
    config = load_scenario(args)

    series, metadata = scenario.oracle(config, mean_field=args.mean_field)
    table_path, metadata_path = storage.output_paths(config.name, metadata.command)
    storage.write_table(series, table_path)
    storage.write_document(metadata, metadata_path)
    return 0
