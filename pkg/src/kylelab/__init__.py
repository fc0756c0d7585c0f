"""Multi-agent market-game laboratory.

Endogenous price formation among an informed trader, a liquidity trader,
noise flow, and competing market makers trained by independent PPO, together
with the analytical solvers (recursive Kyle equilibrium, risk-averse optimal
acquisition) and price-discovery / execution diagnostics.
"""

__version__ = "0.1.0"

from .equilibrium import KyleEquilibrium, equilibrium_schedule, solve_kyle
from .execution import ExecutionSchedule, ImpactPath, expected_cost, optimal_schedule, solve_mu
from .game import (
    EpisodeTrace,
    GameConfig,
    LobMode,
    MarketGame,
    PolicyParam,
    ResetMode,
    Variant,
    run_episode,
)
from .market import LobSnapshot, NetOrderFlow, Quote, allocate_pro_rata, effective_lambda, vwap
from .marl import evaluate_policies, train_marl
from .ppo import GaussianPolicy, MlpPolicy, PpoConfig, RolloutBuffer, load_policy, save_policy
from .strategies import (
    ShortfallReport,
    StrategyKind,
    analytical_schedule,
    evaluate_strategy,
    implementation_shortfall,
    twap_schedule,
    vwap_schedule,
)

__all__ = [
    "__version__",
    "KyleEquilibrium", "solve_kyle", "equilibrium_schedule",
    "ImpactPath", "ExecutionSchedule", "solve_mu", "optimal_schedule", "expected_cost",
    "GameConfig", "Variant", "LobMode", "PolicyParam", "ResetMode",
    "MarketGame", "EpisodeTrace", "run_episode",
    "Quote", "LobSnapshot", "NetOrderFlow", "allocate_pro_rata", "vwap", "effective_lambda",
    "GaussianPolicy", "MlpPolicy", "PpoConfig", "RolloutBuffer", "save_policy", "load_policy",
    "train_marl", "evaluate_policies",
    "StrategyKind", "ShortfallReport", "twap_schedule", "vwap_schedule",
    "analytical_schedule", "evaluate_strategy", "implementation_shortfall",
]
