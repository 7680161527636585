"""Budget-limited algorithm selection on replayed learning curves.

The environment is a reveal game: actions spend budget to uncover points of
pre-computed train/valid learning curves, rewards track the hidden test
performance of the algorithm the agent currently nominates as best, and the
accumulated reward equals the area under the any-time learning curve.
"""

from .agents import (
    AGENT_CLASSES,
    Agent,
    AvgRankAgent,
    BosAgent,
    DdqnAgent,
    DdqnConfig,
    FreezeThawAgent,
    FreezeThawState,
    RandSearchAgent,
    ReplayBuffer,
    avgrank_meta_train,
    bos_act,
    ddqn_act,
    ddqn_encode,
    ddqn_targets,
    ddqn_train_step,
    entropy_search_gain,
    fit_curve_model,
    freezethaw_act,
    make_agent,
    predicted_best,
    randsearch_act,
)
from .curvestore import (
    AlgorithmSpec,
    DatasetSpec,
    LearningCurve,
    ManifestError,
    MetaDataset,
    best_final_algorithm,
    final_rank,
    load_metadataset,
    query_curve,
    save_metadataset,
)
from .env import (
    Action,
    Observation,
    ReplayEnv,
    RewardConfig,
    StepResult,
    accumulated_alc,
    normalized_time,
    reward,
    step_integral,
)
from .harness import (
    EpisodeTrajectory,
    EvalConfig,
    RunReport,
    analyze_trajectory,
    compare_reports,
    meta_test_ids,
    meta_train_view,
    run_ablation,
    run_episode,
    run_meta_test,
    run_meta_train,
    write_report_csv,
    write_report_json,
    write_trajectories,
)
from .synthgen import CurveFamilyParams, GenSpec, crossing_count, generate, power_law
from .valuenet import (
    Mlp,
    OptimizerState,
    backward,
    backward_batch,
    copy_params,
    forward,
    init_mlp,
    init_optimizer,
    load_checkpoint,
    opt_step,
    save_checkpoint,
)

__version__ = "0.1.0"

__all__ = [
    "AGENT_CLASSES",
    "Action",
    "Agent",
    "AlgorithmSpec",
    "AvgRankAgent",
    "BosAgent",
    "CurveFamilyParams",
    "DatasetSpec",
    "DdqnAgent",
    "DdqnConfig",
    "EpisodeTrajectory",
    "EvalConfig",
    "FreezeThawAgent",
    "FreezeThawState",
    "GenSpec",
    "LearningCurve",
    "ManifestError",
    "MetaDataset",
    "Mlp",
    "Observation",
    "OptimizerState",
    "RandSearchAgent",
    "ReplayBuffer",
    "ReplayEnv",
    "RewardConfig",
    "RunReport",
    "StepResult",
    "accumulated_alc",
    "analyze_trajectory",
    "avgrank_meta_train",
    "backward",
    "backward_batch",
    "best_final_algorithm",
    "bos_act",
    "compare_reports",
    "copy_params",
    "crossing_count",
    "ddqn_act",
    "ddqn_encode",
    "ddqn_targets",
    "ddqn_train_step",
    "entropy_search_gain",
    "final_rank",
    "fit_curve_model",
    "forward",
    "freezethaw_act",
    "generate",
    "init_mlp",
    "init_optimizer",
    "load_checkpoint",
    "load_metadataset",
    "make_agent",
    "meta_test_ids",
    "meta_train_view",
    "normalized_time",
    "opt_step",
    "power_law",
    "predicted_best",
    "query_curve",
    "randsearch_act",
    "reward",
    "run_ablation",
    "run_episode",
    "run_meta_test",
    "run_meta_train",
    "save_checkpoint",
    "save_metadataset",
    "step_integral",
    "write_report_csv",
    "write_report_json",
    "write_trajectories",
]
