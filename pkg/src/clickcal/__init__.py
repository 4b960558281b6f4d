"""Confidence-calibrated click rewards and GRPO on a synthetic grounding task."""
from .codec import PredictionRecord, RecordFormatError, emit_prediction, parse_prediction, read_records, write_records
from .env import SyntheticTask, TaskConfig, ToyPolicy, generate_tasks, load_policy, sample_rollout, save_policy
from .geometry import BBox, InvalidParameterError, Point, build_field, contains, truncated_confidence
from .grpo import GroupSample, UpdateConfig, group_advantages, grpo_objective, update_step
from .metrics import calibration_report, heatmap, predict, stability, write_heatmap
from .rewards import RewardBreakdown, confidence_reward, total_reward
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "BBox", "GroupSample", "InvalidParameterError", "Point", "PredictionRecord", "RecordFormatError",
    "RewardBreakdown", "SyntheticTask", "TaskConfig", "ToyPolicy", "TrainConfig", "UpdateConfig",
    "build_field", "calibration_report", "confidence_reward", "contains", "emit_prediction", "generate_tasks", "group_advantages",
    "grpo_objective", "heatmap", "load_policy", "parse_prediction", "predict", "read_records", "sample_rollout",
    "save_policy", "stability", "total_reward", "train", "truncated_confidence", "update_step", "write_heatmap", "write_records",
]
