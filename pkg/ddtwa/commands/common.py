"""
命令共用的配置加载
"""

from argparse import Namespace

from ..exceptions import ConfigError
from ..models import ScenarioConfig
from ..services import get_scenario_service


def load_scenario(args: Namespace) -> ScenarioConfig:
    """读取 --config，依次施加 --set 以及 --seed / --trajectories"""
    if not args.config:
        raise ConfigError(f"{args.command} 需要 --config", ["config"])
    scenario = get_scenario_service()
    config = scenario.load_config(args.config, args.set or [])
    extra = {}
    if args.seed is not None:
        extra["run.seed"] = args.seed
    if args.trajectories is not None:
        extra["run.n_t"] = args.trajectories
    if extra:
        config = scenario.with_overrides(config, extra)
    return config
