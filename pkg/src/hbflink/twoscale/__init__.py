"""Learned two-timescale hybrid precoding: models, training, evaluation and adapters."""

from .adapters import (apply_head, drifted, last_layer_policy, transfer_finetune, two_step_feedback_training,
                       zero_pad_rf)
from .analog import (LongTermPhaseState, SlidingWindow, gamma, phases_to_analog, quantize_phases,
                     update_long_term_phases)
from .dims import SystemDims
from .evaluation import SCHEMES, DelaySettings, EvalResult, evaluate, scheme_overhead
from .models import LongTermModel, NetOptions, ShortTermModel, TwoScaleSystem, zero_pad_pilots
from .training import EpochLog, TrainLog, TrainSchedule, train_single_timescale, train_two_timescale

__all__ = [
    "DelaySettings", "EpochLog", "EvalResult", "LongTermModel", "LongTermPhaseState", "NetOptions", "SCHEMES",
    "ShortTermModel", "SlidingWindow", "SystemDims", "TrainLog", "TrainSchedule", "TwoScaleSystem", "apply_head",
    "drifted", "evaluate", "gamma", "last_layer_policy", "phases_to_analog", "quantize_phases", "scheme_overhead",
    "train_single_timescale", "train_two_timescale", "transfer_finetune", "two_step_feedback_training",
    "update_long_term_phases", "zero_pad_pilots", "zero_pad_rf",
]
