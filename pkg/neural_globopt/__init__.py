"""Learned global optimizer for noisy one-dimensional functions."""

from neural_globopt.evaluator import evaluate, spline_baseline
from neural_globopt.funcgen import make_case
from neural_globopt.models import Config
from neural_globopt.trainer.core import train

__version__ = "0.1.0"
__all__ = ["Config", "evaluate", "make_case", "spline_baseline", "train"]
