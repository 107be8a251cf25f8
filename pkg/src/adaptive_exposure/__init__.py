"""Closed-loop adaptive exposure engine with simulated EDA responders."""

from .content import (
    Action,
    SpiderConfig,
    apply_action,
    decode_state,
    encode_state,
    legal_actions,
    normalized_vector,
)
from .reward import DesiredSchedule, RewardParams, desired_at, reward
from .agents import QLearningAdapter, QLearningParams, RulesAdapter, correction_factor, rules_step
from .signals import Calibration, EdaTrace, ScrFeatures, calibrate, detect_scr_peaks, read_trace, scl_level, scr_features, write_trace
from .patients import ExposureState, Patient, PatientModel, latent_anxiety, persona, random_patient
from .session import (
    EngineParams,
    SafetyPolicy,
    SessionDriver,
    SessionPlan,
    SessionTrace,
    default_plan,
    load_trace,
    run_experiment,
    run_session,
    safety_check,
    save_trace,
)
from .service import create_app
from .analysis import (
    ClusterModel,
    cross_cluster_matrix,
    elbow_k,
    kmeans,
    max_anxiety_spider,
    segment_mse,
    segment_summaries,
    wilcoxon_signed_rank,
)

__version__ = "0.1.0"
