"""Multi-agent tensor fusion for trajectory prediction."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import ConfigError, ModelConfig, ShapeError
from .metrics import EvalReport, ade_fde, best_of_n, evaluate, mae_at, rmse_at
from .model import MATF, VARIANTS
from .training import TrainConfig, train_deterministic, train_gan

__version__ = "0.1.0"
