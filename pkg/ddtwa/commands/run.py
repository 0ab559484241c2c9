"""
run 命令
执行随机系综运行并写出数据表与元数据
"""

import logging
from argparse import Namespace

from ..services import get_scenario_service, get_storage_service
from .common import load_scenario

logger = logging.getLogger(__name__)


def execute(args: Namespace) -> int:
    """运行场景，返回退出码"""
    scenario = get_scenario_service()
    storage = get_storage_service()
    config = load_scenario(args)

    series, metadata = scenario.run(config, workers=args.threads)
    table_path, metadata_path = storage.output_paths(config.name, "run")
    storage.write_table(series, table_path)
    storage.write_document(metadata, metadata_path)
    if metadata.failure_count:
        logger.warning(f"{metadata.failure_count} 条轨迹被剔除，详见 {metadata_path}")
    return 0
