"""Model-based Bayesian reinforcement learning for POMDP dialogue domains."""

from .beliefs import BeliefState
from .dirichlet import DirichletParams, fit
from .distributions import Distribution
from .domain import (
    DialogueState,
    DomainSpec,
    NBestList,
    belief_reward,
    load_domain,
    reward,
    save_domain,
)
from .harness import ExperimentConfig, kl_divergence, run_episode, run_experiment
from .learner import LearnerConfig, LearnerState, belief_update, parameter_update
from .models import (
    MultinomialModel,
    RuleModel,
    build_model,
    instantiate,
    parameter_count,
    predict_user_act,
)
from .planner import DialoguePlannerView, PlanConfig, plan, q_value, select_action
from .simulator import (
    SimulatorState,
    actual_next_act_distribution,
    episode_done,
    new_simulator,
    step,
)

__version__ = "0.1.0"

__all__ = [
    "BeliefState",
    "DialogueState",
    "DirichletParams",
    "Distribution",
    "DomainSpec",
    "ExperimentConfig",
    "LearnerConfig",
    "LearnerState",
    "MultinomialModel",
    "NBestList",
    "PlanConfig",
    "DialoguePlannerView",
    "RuleModel",
    "SimulatorState",
    "actual_next_act_distribution",
    "belief_reward",
    "belief_update",
    "build_model",
    "episode_done",
    "fit",
    "instantiate",
    "kl_divergence",
    "load_domain",
    "new_simulator",
    "parameter_count",
    "parameter_update",
    "plan",
    "predict_user_act",
    "q_value",
    "reward",
    "run_episode",
    "run_experiment",
    "save_domain",
    "select_action",
    "step",
]
