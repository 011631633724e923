"""
specrec - Adaptive channel recommendation for dynamic spectrum access.

Models recommendation-based channel selection as an average-reward MDP, searches
for the throughput-maximising branching policy with Model Reference Adaptive
Search, and compares it against random, static, heuristic and Q-learning schemes
on a slotted network simulator, including heterogeneous channels.
"""

from .campaign import CampaignRunner, ResultRow, emit_results, gain_table, run_campaign
from .channel import ChannelParams, MatrixFamily, MatrixType, family_params
from .config import Config, ExperimentConfig
from .database import Database
from .errors import (
    ChainConsistencyError,
    ConfigurationError,
    ConvergenceError,
    DomainError,
    NoFeasibleCandidateError,
    ReducibleChainError,
    SpecrecError,
)
from .hetero import HeteroModel, HeteroWeightPolicy, mras_solve_hetero
from .mdp import (
    MdpModel,
    Policy,
    TransitionFormula,
    ZeroStateSemantics,
    policy_throughput,
    stationary_distribution,
    transition_prob_exact,
)
from .mras import MrasConfig, solve
from .qlearn import QConfig, train
from .simulator import Scheme, SimConfig, run_simulation
from .utils import FileUtils, SeedUtils, StatsUtils

__version__ = "0.1.0"

__all__ = [
    "CampaignRunner",
    "ChainConsistencyError",
    "ChannelParams",
    "Config",
    "ConfigurationError",
    "ConvergenceError",
    "Database",
    "DomainError",
    "ExperimentConfig",
    "FileUtils",
    "HeteroModel",
    "HeteroWeightPolicy",
    "MatrixFamily",
    "MatrixType",
    "MdpModel",
    "MrasConfig",
    "NoFeasibleCandidateError",
    "Policy",
    "QConfig",
    "ReducibleChainError",
    "ResultRow",
    "Scheme",
    "SeedUtils",
    "SimConfig",
    "SpecrecError",
    "StatsUtils",
    "TransitionFormula",
    "ZeroStateSemantics",
    "emit_results",
    "family_params",
    "gain_table",
    "mras_solve_hetero",
    "policy_throughput",
    "run_campaign",
    "run_simulation",
    "solve",
    "stationary_distribution",
    "train",
    "transition_prob_exact",
]
