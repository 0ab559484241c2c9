"""
compare 命令
比较两张数据表并写出机器可读的报告
"""

import logging
from argparse import Namespace
from pathlib import Path

from ..exceptions import ComparisonError, ConfigError
from ..services import get_comparison_service, get_storage_service

logger = logging.getLogger(__name__)


def execute(args: Namespace) -> int:
    """
    比较 --run-table 与 --oracle-table

    Raises:
        ComparisonError: 任一观测量超出容差 (报告已写出)
    """
    if not args.run_table or not args.oracle_table:
        raise ConfigError("compare 需要 --run-table 与 --oracle-table", ["run_table", "oracle_table"])
    storage = get_storage_service()
    run = storage.read_table(args.run_table)
    reference = storage.read_table(args.oracle_table)

    report = get_comparison_service().compare(
        run,
        reference,
        z_threshold=args.z_threshold,
        abs_floor=args.abs_floor,
        relative=args.relative,
        observables=args.observables,
    )
    report_path = storage.output_dir / f"{Path(args.run_table).stem}_compare.json"
    storage.write_document(report, report_path)
    for entry in report.entries:
        status = "通过" if entry.passed else "未通过"
        logger.info(
            f"{entry.observable}: {status}, 最大偏差 {entry.max_deviation_units:.3g} 容差单位, "
            f"|Δ|={entry.max_abs_deviation:.3e}"
        )
    if not report.passed:
        failing = [entry.observable for entry in report.entries if not entry.passed]
        raise ComparisonError(f"比较未通过: {failing}，报告见 {report_path}")
    return 0
