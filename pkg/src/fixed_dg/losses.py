"""Training losses: cross-entropy, first-order large-margin, CORAL, adversarial.

The large-margin loss hinges the score gap to each rival class,
normalized by the norm of the input-gradient difference of the two
scores — a first-order estimate of the distance to that pairwise
decision boundary. The denominator is treated as a constant
(stop-gradient) and is exact whenever the classifier head is linear.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, Tensor
from .errors import ConfigError, DegenerateBoundaryError, NumericsError, ShapeError
from .mixup import one_hot


@dataclass(frozen=True)
class MarginConfig:
    """gamma: target boundary distance; top_k: rivals averaged; L2 pairing (q=2)."""

    gamma: float = 1.0
    top_k: int = 1
    denom_eps: float = 1e-8

    def __post_init__(self):
        if self.gamma < 0:
            raise ConfigError(f"margin gamma must be >= 0, got {self.gamma}")
        if self.top_k < 1:
            raise ConfigError(f"margin top_k must be >= 1, got {self.top_k}")


def cross_entropy(tape: Tape, logits: Tensor, target_probs: np.ndarray) -> Tensor:
    """Mean over the batch of -sum_k t_k log softmax(logits)_k."""
    return tape.softmax_xent(logits, target_probs)


def classifier_pair_grad_norms(classifier_fn, features_value: np.ndarray) -> np.ndarray:
    """L2 norms of per-sample input-gradient differences between class scores.

    Runs one backward pass per class on a scratch tape (rows are
    independent, so the gradient of the column sum is the per-sample
    gradient). Returns [B, K, K] with entry (b, k1, k2) =
    ||grad_z h_k1(z_b) - grad_z h_k2(z_b)||_2.
    """
    features_value = np.asarray(features_value, dtype=np.float64)
    b = features_value.shape[0]
    scratch = Tape()
    leaf = scratch.leaf(features_value)
    logits = classifier_fn(scratch, leaf)
    k = logits.data.shape[1]
    grads = []
    for c in range(k):
        col = scratch.gather_cols(logits, np.full(b, c))
        gmap = scratch.backward(scratch.sum(col))
        grads.append(gmap[leaf.node_id])
    g = np.stack(grads)  # [K, B, F]
    diff = g[:, None, :, :] - g[None, :, :, :]
    norms = np.sqrt((diff * diff).sum(axis=-1)).transpose(2, 0, 1)
    if not np.all(np.isfinite(norms)):
        raise NumericsError("non-finite input-gradient norms in margin denominator")
    return norms


def large_margin_loss(
    tape: Tape,
    classifier_fn,
    features: Tensor,
    labels: np.ndarray,
    cfg: MarginConfig,
    *,
    logits: Tensor | None = None,
    pair_norms: np.ndarray | None = None,
) -> Tensor:
    """Mean over the batch of the top_k largest per-rival hinge terms.

    Per sample i and rival k != y_i:
        term_k = max(0, gamma + (h_k - h_y) / (||grad h_k - grad h_y||_2 + eps))
    Gradients flow through the score gap only; the denominator and the
    top-k selection indices are constants.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if logits is None:
        logits = classifier_fn(tape, features)
    b, k = logits.data.shape
    if k < 2:
        raise ConfigError(f"margin loss needs >= 2 classes, got {k}")
    if not 1 <= cfg.top_k <= k - 1:
        raise ConfigError(f"margin top_k must be in [1, {k - 1}], got {cfg.top_k}")
    if labels.shape != (b,) or labels.min() < 0 or labels.max() >= k:
        raise ShapeError("large_margin_loss", f"labels must be [B] class indices below {k}")
    if pair_norms is None:
        pair_norms = classifier_pair_grad_norms(classifier_fn, features.data)

    rows = np.arange(b)
    denom = pair_norms[rows, :, labels]  # [B, K]: ||grad h_k - grad h_{y_i}||
    inv = np.zeros_like(denom)
    rival = np.ones((b, k), dtype=bool)
    rival[rows, labels] = False
    inv[rival] = 1.0 / (denom[rival] + cfg.denom_eps)

    h_y = tape.gather_cols(logits, labels)
    ones_row = tape.leaf(np.ones((1, k)), requires_grad=False)
    h_y_mat = tape.matmul(tape.reshape(h_y, (b, 1)), ones_row)
    gap = tape.sub(logits, h_y_mat)
    terms = tape.relu(tape.add_const(tape.mul_const(gap, inv), cfg.gamma))
    terms = tape.mul_const(terms, rival.astype(float))

    # constant top-k selection; own-class entries sort last
    key = terms.data.copy()
    key[rows, labels] = -1.0
    order = np.argsort(-key, axis=1, kind="stable")
    acc = tape.gather_cols(terms, order[:, 0])
    for j in range(1, cfg.top_k):
        acc = tape.add(acc, tape.gather_cols(terms, order[:, j]))
    return tape.mean(tape.scale(acc, 1.0 / cfg.top_k))


def mixed_margin_loss(
    tape: Tape,
    classifier_fn,
    features: Tensor,
    y_i: np.ndarray,
    y_j: np.ndarray,
    lam: float,
    cfg: MarginConfig,
    *,
    logits: Tensor | None = None,
) -> Tensor:
    """lam * margin(features, y_i) + (1 - lam) * margin(features, y_j)."""
    if logits is None:
        logits = classifier_fn(tape, features)
    pair_norms = classifier_pair_grad_norms(classifier_fn, features.data)
    l_i = large_margin_loss(tape, classifier_fn, features, y_i, cfg, logits=logits, pair_norms=pair_norms)
    l_j = large_margin_loss(tape, classifier_fn, features, y_j, cfg, logits=logits, pair_norms=pair_norms)
    return tape.add(tape.scale(l_i, lam), tape.scale(l_j, 1.0 - lam))


def boundary_distance_linear(w: np.ndarray, b: np.ndarray, z: np.ndarray, k1: int, k2: int) -> float:
    """Exact point-to-boundary distance for a linear scorer h(z) = W z + b."""
    dw = np.asarray(w, float)[k1] - np.asarray(w, float)[k2]
    db = float(np.asarray(b, float)[k1] - np.asarray(b, float)[k2])
    nrm = float(np.linalg.norm(dw))
    if nrm == 0.0:
        raise DegenerateBoundaryError(f"classes {k1} and {k2} have identical weight rows")
    return abs(float(dw @ np.asarray(z, float)) + db) / nrm


def coral_loss(tape: Tape, domain_features: list) -> Tensor:
    """Mean over domain pairs of ||C_i - C_j||_F^2 / (4 F^2), unbiased covariances."""
    if len(domain_features) < 2:
        raise ConfigError(f"coral needs >= 2 domains, got {len(domain_features)}")
    f_dim = domain_features[0].data.shape[1]
    covs = []
    for t in domain_features:
        n, f = t.data.shape
        if n < 2:
            raise ShapeError("coral_loss", f"domain batch of {n} is too small for a covariance")
        if f != f_dim:
            raise ShapeError("coral_loss", f"feature widths differ: {f} vs {f_dim}")
        centered = tape.sub(t, tape.mean_rows(t))
        covs.append(tape.scale(tape.matmul(tape.transpose(centered), centered), 1.0 / (n - 1)))

    pair_terms = []
    for i in range(len(covs)):
        for j in range(i + 1, len(covs)):
            d = tape.sub(covs[i], covs[j])
            pair_terms.append(tape.sum(tape.mul(d, d)))
    # accumulate in value order so domain reordering cannot change the fp result
    order = np.argsort([t.data for t in pair_terms], kind="stable")
    acc = pair_terms[order[0]]
    for idx in order[1:]:
        acc = tape.add(acc, pair_terms[idx])
    return tape.scale(acc, 1.0 / (len(pair_terms) * 4.0 * f_dim * f_dim))


def domain_adv_loss(tape: Tape, dom_logits: Tensor, domain_labels: np.ndarray, num_domains: int) -> Tensor:
    """Cross-entropy of the discriminator against true domain indices."""
    domain_labels = np.asarray(domain_labels, dtype=np.int64)
    if domain_labels.size and domain_labels.max() >= num_domains:
        raise ShapeError("domain_adv_loss", f"domain index {domain_labels.max()} >= {num_domains}")
    return cross_entropy(tape, dom_logits, one_hot(domain_labels, num_domains))
