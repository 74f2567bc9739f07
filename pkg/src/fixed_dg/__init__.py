"""Desk-scale domain-generalization lab.

Feature-level Mixup with large-margin training and adversarial/CORAL
invariance, synthetic multi-domain benchmarks, and a brute-force
verifier for the divergence bounds behind the method.
"""

__version__ = "0.1.0"

from .autodiff import BNStats, Tape, Tensor
from .datagen import DomainDataset, WindowSpec
from .losses import MarginConfig
from .mixup import BetaParams, MixPlan
from .models import ArchSpec, Cnn1dBody, MlpBody, ModelBundle, build_model
from .optim import AdamState, adam_step
from .trainer import ALGORITHMS, AlgorithmConfig, RunResult, evaluate, leave_one_domain_out, train

__all__ = [
    "ALGORITHMS",
    "AdamState",
    "AlgorithmConfig",
    "ArchSpec",
    "BNStats",
    "BetaParams",
    "Cnn1dBody",
    "DomainDataset",
    "MarginConfig",
    "MixPlan",
    "MlpBody",
    "ModelBundle",
    "RunResult",
    "Tape",
    "Tensor",
    "WindowSpec",
    "adam_step",
    "build_model",
    "evaluate",
    "leave_one_domain_out",
    "train",
    "__version__",
]
