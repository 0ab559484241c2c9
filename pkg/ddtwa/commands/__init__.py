"""
命令模块包
"""

from .run import execute as run_command
from .oracle import execute as oracle_command
from .compare import execute as compare_command
from .sweep import execute as sweep_command
from .schema import execute as schema_command

__all__ = [
    "run_command",
    "oracle_command",
    "compare_command",
    "sweep_command",
    "schema_command",
]
