"""Hierarchical paragraph encoders for question generation, on a small numpy autodiff core."""

from .config import ARCHITECTURES, ModelConfig, RunConfig, TrainConfig, DataConfig, load_config, toy_model_config
from .data import QGInstance, Vocab
from .decoding import beam_decode, beam_search, greedy_decode
from .evaluation import bleu, evaluate, rouge_l
from .exceptions import ConfigError, DataFormatError, DimensionError, DomainError
from .models import build
from .tensor import Tensor, backward, no_grad
from .training import gradcheck, train

__version__ = "0.1.0"

__all__ = [
    "ARCHITECTURES", "ModelConfig", "RunConfig", "TrainConfig", "DataConfig", "load_config", "toy_model_config",
    "QGInstance", "Vocab", "beam_decode", "beam_search", "greedy_decode", "bleu", "evaluate", "rouge_l",
    "ConfigError", "DataFormatError", "DimensionError", "DomainError", "build", "Tensor", "backward", "no_grad",
    "gradcheck", "train",
]
