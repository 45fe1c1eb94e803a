"""Online learning of state-to-sound mappings from per-trial listener feedback."""

from .analysis import (
    CohortResult,
    HeatmapGrid,
    RunRecord,
    export_trials_csv,
    heatmap,
    load_cohort,
    ranked_pair_statistic,
    steps_summary,
)
from .bandit import (
    FeedbackEvent,
    Hyperparameters,
    LearnerSession,
    QTable,
    RewardUpdate,
    SessionStateError,
    TrialOutcome,
    compute_reward,
    select_action,
    session_summary,
    uncertainty,
    update_q,
)
from .grid import (
    ActionId,
    DEFAULT_STATES,
    ParameterGrid,
    decode_action,
    encode_action,
)
from .simulate import SimulationConfig, run_cohort
from .simusers import GroundTruthMap, SimulatedUser, pitch_dominant_ground_truth
from .sound import (
    AcousticParams,
    BaseSample,
    LevelMapping,
    RenderConfig,
    SoundLibrary,
    default_base_sample,
    generate_library,
    load_library,
    render_loop,
)

__version__ = "0.1.0"

__all__ = [
    "ActionId",
    "AcousticParams",
    "BaseSample",
    "CohortResult",
    "DEFAULT_STATES",
    "FeedbackEvent",
    "GroundTruthMap",
    "HeatmapGrid",
    "Hyperparameters",
    "LearnerSession",
    "LevelMapping",
    "ParameterGrid",
    "QTable",
    "RenderConfig",
    "RewardUpdate",
    "RunRecord",
    "SessionStateError",
    "SimulatedUser",
    "SimulationConfig",
    "SoundLibrary",
    "TrialOutcome",
    "compute_reward",
    "decode_action",
    "default_base_sample",
    "encode_action",
    "export_trials_csv",
    "generate_library",
    "heatmap",
    "load_cohort",
    "load_library",
    "pitch_dominant_ground_truth",
    "ranked_pair_statistic",
    "render_loop",
    "run_cohort",
    "select_action",
    "session_summary",
    "steps_summary",
    "uncertainty",
    "update_q",
]
