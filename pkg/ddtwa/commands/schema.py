"""
schema 命令
输出场景配置的 JSON schema
"""

import json
from argparse import Namespace

from ..models import ScenarioConfig


def execute(args: Namespace) -> int:
    print(json.dumps(ScenarioConfig.model_json_schema(), indent=2, ensure_ascii=False))
    return 0
