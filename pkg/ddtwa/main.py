"""
DDTWA 自旋系综模拟器 - 命令行主程序
开放自旋系综的耗散离散截断 Wigner 近似，附带稠密主方程参考
"""

import argparse
import logging
import sys
from typing import List, Optional

from .config import get_settings
from .commands import (
    run_command,
    oracle_command,
    compare_command,
    sweep_command,
    schema_command,
)
from .exceptions import ConfigError, DDTWAError
from .services import get_comparison_service, get_scenario_service, get_storage_service

logger = logging.getLogger(__name__)

COMMANDS = {
    "run": run_command,
    "oracle": oracle_command,
    "compare": compare_command,
    "sweep": sweep_command,
    "schema": schema_command,
}


def build_parser() -> argparse.ArgumentParser:
    """构建命令行解析器"""
    parser = argparse.ArgumentParser(
        prog="ddtwa",
        description="开放自旋系综的 DDTWA 蒙特卡洛模拟器",
    )
    parser.add_argument("--command", required=True, choices=sorted(COMMANDS), help="要执行的命令")
    parser.add_argument("--config", help="场景配置文件 (JSON)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY.PATH=VALUE",
                        help="覆盖场景配置项，可重复")
    parser.add_argument("--seed", type=int, help="主种子 (覆盖 run.seed)")
    parser.add_argument("--trajectories", type=int, help="轨迹数 (覆盖 run.n_t)")
    parser.add_argument("--threads", type=int, help="并行 worker 数")
    parser.add_argument("--output-dir", help="输出目录")
    parser.add_argument("--log-level", help="日志级别 (默认取 LOG_LEVEL 配置)")

    oracle_group = parser.add_argument_group("oracle / sweep")
    oracle_group.add_argument("--mean-field", action="store_true", help="使用平均场参考代替精确主方程")

    compare_group = parser.add_argument_group("compare")
    compare_group.add_argument("--run-table", help="待检验的数据表")
    compare_group.add_argument("--oracle-table", help="参考数据表")
    compare_group.add_argument("--z-threshold", type=float, help="z 分数阈值")
    compare_group.add_argument("--abs-floor", type=float, help="绝对容差下限")
    compare_group.add_argument("--relative", type=float, default=0.0, help="相对容差")
    compare_group.add_argument("--observables", nargs="+", help="只比较这些观测量")

    sweep_group = parser.add_argument_group("sweep")
    sweep_group.add_argument("--parameter", help="扫描的配置键，如 noise.0.rate")
    sweep_group.add_argument("--values", default="", help="JSON 数组或逗号分隔的取值")
    sweep_group.add_argument("--sweep-mode", default="run", choices=["run", "oracle"],
                             help="每个取值执行的命令")
    return parser


def initialize_services(output_dir: Optional[str]) -> None:
    """初始化所有服务"""
    settings = get_settings()
    get_storage_service().initialize(output_dir or settings.OUTPUT_DIR)
    get_scenario_service().initialize()
    get_comparison_service().initialize()


def main(argv: Optional[List[str]] = None) -> int:
    """
    命令行入口

    Returns:
        退出码: 0 成功, 1 配置错误, 2 数值失败, 3 比较未通过
    """
    settings = get_settings()
    args = build_parser().parse_args(argv)

    logging.basicConfig(
        level=getattr(logging, (args.log_level or settings.LOG_LEVEL).upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )

    try:
        if args.command != "schema":
            initialize_services(args.output_dir)
        return COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error(f"配置错误: {e}")
        if e.offending_keys:
            logger.error(f"出错的键: {', '.join(e.offending_keys)}")
        return e.exit_code
    except DDTWAError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except Exception as e:
        logger.error(f"未预期的错误: {e}", exc_info=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
