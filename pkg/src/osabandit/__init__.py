"""Learning rules for opportunistic spectrum access under imperfect sensing."""
from .genie import GenieValue, genie_best_set_partial, genie_value_full, genie_value_monte_carlo
from .harness import ConfigError, ExperimentConfig, emit_csv, load_config, read_csv, run_experiment
from .model import ChannelModel, DegenerateChannelError, cond_reward, reference_model, sensed_free_prob
from .optimizer import FitResult, OutcomeTable, fit_theta, objective
from .policies import POLICY_NAMES, FitOptions, make_policy
from .regret import BoundInputs, RegretTrace, alg3_regret_bound, regret_trace
from .simulate import simulate

__all__ = [
    "BoundInputs", "ChannelModel", "ConfigError", "DegenerateChannelError", "ExperimentConfig", "FitOptions",
    "FitResult", "GenieValue", "OutcomeTable", "POLICY_NAMES", "RegretTrace", "alg3_regret_bound",
    "cond_reward", "emit_csv", "fit_theta", "genie_best_set_partial", "genie_value_full",
    "genie_value_monte_carlo", "load_config", "make_policy", "objective", "reference_model", "read_csv",
    "regret_trace", "run_experiment", "sensed_free_prob", "simulate",
]
