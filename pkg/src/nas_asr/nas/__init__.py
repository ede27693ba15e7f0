"""Architecture search: the decision space, the LSTM controller updated by
REINFORCE, child network training, and the search loop."""

from .child import (
    ChildNetwork,
    ChildResult,
    ChildTrainConfig,
    InfeasibleArch,
    compute_reward,
    instantiate_child,
    train_child,
)
from .controller import (
    ControllerState,
    create_controller,
    reinforce_update,
    sample_arch,
    spec_logprob,
)
from .search import load_search_log, make_trainer_evaluator, run_search, select_best
from .search_space import (
    ArchSpec,
    BlockSpec,
    SearchSpace,
    decision_plan,
    format_arch,
    parse_arch,
)

__all__ = [
    "ArchSpec",
    "BlockSpec",
    "ChildNetwork",
    "ChildResult",
    "ChildTrainConfig",
    "ControllerState",
    "InfeasibleArch",
    "SearchSpace",
    "compute_reward",
    "create_controller",
    "decision_plan",
    "format_arch",
    "instantiate_child",
    "load_search_log",
    "make_trainer_evaluator",
    "parse_arch",
    "reinforce_update",
    "run_search",
    "sample_arch",
    "select_best",
    "spec_logprob",
    "train_child",
]
