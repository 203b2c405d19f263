from .checkpoint import Checkpoint, load_checkpoint, model_from_checkpoint, save_checkpoint
from .engine import (EvalResult, MetricRow, TrainConfig, TrainResult, confusion_result, evaluate,
                     train_fused, train_stream)
from .optim import (Adam, AdamState, EarlyStop, LRSchedule, ParamGroup, adam_step, clip_grad_norm,
                    make_param_groups)
