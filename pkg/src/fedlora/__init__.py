"""Deterministic simulator of wireless federated low-rank fine-tuning with
importance-aware sparsification, error feedback, and Lyapunov-controlled
communication."""

from .bounds import TheoryConsts, GammaBreakdown, theorem1_gamma_term
from .config import ExperimentConfig, load_config
from .lora import LoraAdapter, init_adapter
from .simulate import RunResult, run

__all__ = [
    "TheoryConsts", "GammaBreakdown", "theorem1_gamma_term",
    "ExperimentConfig", "load_config", "LoraAdapter", "init_adapter",
    "RunResult", "run",
]
