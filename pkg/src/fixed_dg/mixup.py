"""Beta sampling, batch pairing, and convex mixing of tensors and labels.

The same machinery drives all three mixing variants: raw inputs, a
random hidden activation, or the bottleneck feature. A MixPlan carries
one shared lambda and one pairing permutation for a whole batch; domain
labels are never mixed.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, Tensor
from .errors import ConfigError, ShapeError

MIX_INPUT = "input"
MIX_HIDDEN = "hidden"
MIX_BOTTLENECK = "bottleneck"

_REJECTION_CAP = 100_000


@dataclass(frozen=True)
class BetaParams:
    """Symmetric Beta(alpha, alpha), optionally truncated to [a, b] in [0, 1]."""

    alpha: float
    truncate: tuple | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError(f"beta alpha must be > 0, got {self.alpha}")
        if self.truncate is not None:
            a, b = self.truncate
            if not (0.0 <= a < b <= 1.0):
                raise ConfigError(f"truncation interval must satisfy 0 <= a < b <= 1, got [{a}, {b}]")


@dataclass
class MixPlan:
    """One mixing application: shared lambda, batch pairing, and where to mix."""

    lam: float
    perm: np.ndarray
    site: str = MIX_BOTTLENECK
    hidden_layer: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must lie in [0,1], got {self.lam}")
        if self.site not in (MIX_INPUT, MIX_HIDDEN, MIX_BOTTLENECK):
            raise ConfigError(f"unknown mix site '{self.site}'")


def sample_beta(params: BetaParams, rng: np.random.Generator) -> float:
    """Draw from Beta(alpha, alpha), rejection-filtered into the truncation interval."""
    if params.truncate is None:
        return float(rng.beta(params.alpha, params.alpha))
    a, b = params.truncate
    for _ in range(_REJECTION_CAP):
        x = float(rng.beta(params.alpha, params.alpha))
        if a <= x <= b:
            return x
    raise ConfigError(f"rejection sampling failed to hit [{a}, {b}] after {_REJECTION_CAP} draws")


def pair_shuffle(batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random pairing permutation of [0, batch_size)."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    return rng.permutation(batch_size)


def mix_arrays(a: np.ndarray, b: np.ndarray, lam: float) -> np.ndarray:
    if a.shape != b.shape:
        raise ShapeError("mix", f"shapes {a.shape} and {b.shape} differ")
    return lam * a + (1.0 - lam) * b


def mix_tensors(tape: Tape, a: Tensor, b: Tensor, lam: float) -> Tensor:
    """lam*a + (1-lam)*b on the tape, differentiable through both operands."""
    if a.data.shape != b.data.shape:
        raise ShapeError("mix", f"shapes {a.data.shape} and {b.data.shape} differ")
    return tape.add(tape.scale(a, lam), tape.scale(b, 1.0 - lam))


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ShapeError("one_hot", f"label out of range for {num_classes} classes")
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def mix_labels(y_i: np.ndarray, y_j: np.ndarray, lam: float) -> np.ndarray:
    """Convex combination of probability rows; preserves unit mass."""
    y_i, y_j = np.asarray(y_i, float), np.asarray(y_j, float)
    if y_i.shape != y_j.shape:
        raise ShapeError("mix_labels", f"class counts differ: {y_i.shape} vs {y_j.shape}")
    for y in (y_i, y_j):
        if np.any(y < 0) or not np.allclose(y.sum(axis=-1), 1.0, atol=1e-9):
            raise ShapeError("mix_labels", "labels must be probability rows")
    return lam * y_i + (1.0 - lam) * y_j


def apply_mix_plan_arrays(x: np.ndarray, labels: np.ndarray, plan: MixPlan):
    """Mix raw batch rows with their plan partners; returns (x_mix, label_mix)."""
    if len(plan.perm) != x.shape[0] or labels.shape[0] != x.shape[0]:
        raise ShapeError("apply_mix_plan", f"perm/labels length mismatch with batch of {x.shape[0]}")
    x_mix = mix_arrays(x, x[plan.perm], plan.lam)
    y_mix = mix_labels(labels, labels[plan.perm], plan.lam)
    return x_mix, y_mix


def apply_mix_plan_tensors(tape: Tape, t: Tensor, labels: np.ndarray, plan: MixPlan):
    """Tape variant of apply_mix_plan_arrays for hidden/bottleneck activations."""
    if len(plan.perm) != t.data.shape[0] or labels.shape[0] != t.data.shape[0]:
        raise ShapeError("apply_mix_plan", f"perm/labels length mismatch with batch of {t.data.shape[0]}")
    partner = tape.gather_rows(t, plan.perm)
    t_mix = mix_tensors(tape, t, partner, plan.lam)
    y_mix = mix_labels(labels, labels[plan.perm], plan.lam)
    return t_mix, y_mix
