"""Structured prompt optimization for few-shot text classification.

A frozen hashing encoder feeds learnable prompt fusion, structured label
embeddings and a joint cross-entropy / alignment / orthogonality objective,
all differentiated by a small tape-based autodiff core.
"""

from .autodiff import NumericError, ShapeError, Tape, TapeError, grad_check
from .data import Dataset, Example, kshot_sample, load_agnews_csv, synth_generate
from .encoder import EncoderTable, build_encoder, encode, tokenize
from .kernels import BACKEND
from .labels import LabelSpace, build_label_space
from .metrics import MetricsReport, confusion_metrics, evaluate, macro_auc
from .objective import DivergenceError, ModelState, TrainConfig, fit, init_state, total_loss
from .prompts import PromptBank, init_prompts

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Dataset",
    "DivergenceError",
    "EncoderTable",
    "Example",
    "LabelSpace",
    "MetricsReport",
    "ModelState",
    "NumericError",
    "PromptBank",
    "ShapeError",
    "Tape",
    "TapeError",
    "TrainConfig",
    "build_encoder",
    "build_label_space",
    "confusion_metrics",
    "encode",
    "evaluate",
    "fit",
    "grad_check",
    "init_prompts",
    "init_state",
    "kshot_sample",
    "load_agnews_csv",
    "macro_auc",
    "synth_generate",
    "tokenize",
    "total_loss",
]
