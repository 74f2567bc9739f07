"""Brute-force verification of the divergence bounds on finite instances.

Hypothesis classes are finite sets of halfspace indicators
h(x) = 1[w.x >= c], so every sup/min is an exact enumeration; the
pairwise symmetric-difference class is evaluated through a +/-1 Gram
matrix, one matmul per distribution. Distributions are finite weighted
samples. Every check below is therefore exact up to float arithmetic,
which is what makes these functions usable as oracles.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

_TOL = 1e-12


@dataclass(frozen=True)
class HypothesisClass:
    """Finite class of binary halfspace classifiers h(x) = 1[normal.x >= offset]."""

    normals: np.ndarray  # [H, d]
    offsets: np.ndarray  # [H]
    description: str = "halfspaces"

    def __post_init__(self):
        if self.normals.ndim != 2 or self.offsets.shape != (self.normals.shape[0],):
            raise ConfigError("normals must be [H, d] with matching [H] offsets")
        if self.normals.shape[0] == 0:
            raise ConfigError("hypothesis class must be nonempty")

    def __len__(self):
        return self.normals.shape[0]

    def predict(self, points: np.ndarray) -> np.ndarray:
        """[N, d] points -> [H, N] float 0/1 predictions."""
        points = np.asarray(points, dtype=np.float64)
        return (points @ self.normals.T >= self.offsets[None, :]).T.astype(np.float64)


def threshold_class(grid, dim: int = 1, axes=None, both_directions: bool = False) -> HypothesisClass:
    """Axis-aligned thresholds 1[x_a >= t] over a grid of t values."""
    grid = np.asarray(grid, dtype=np.float64)
    axes = range(dim) if axes is None else axes
    normals, offsets = [], []
    for a in axes:
        e = np.zeros(dim)
        e[a] = 1.0
        for t in grid:
            normals.append(e.copy())
            offsets.append(t)
            if both_directions:
                normals.append(-e)
                offsets.append(-t)
    return HypothesisClass(np.array(normals), np.array(offsets), f"thresholds[{len(normals)}]")


def linear_class(n_angles: int, offset_grid) -> HypothesisClass:
    """Quantized 2-D linear separators 1[cos(a) x0 + sin(a) x1 >= c]."""
    angles = np.pi * np.arange(n_angles) / n_angles
    normals, offsets = [], []
    for a in angles:
        for c in np.asarray(offset_grid, dtype=np.float64):
            normals.append([np.cos(a), np.sin(a)])
            offsets.append(c)
    return HypothesisClass(np.array(normals), np.array(offsets), f"linear[{len(normals)}]")


@dataclass
class EmpiricalDist:
    """Finite weighted sample, optionally with binary labels."""

    points: np.ndarray
    weights: np.ndarray | None = None
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        n = self.points.shape[0]
        if n == 0:
            raise DataError("empirical distribution needs at least one point")
        if self.weights is None:
            self.weights = np.full(n, 1.0 / n)
        else:
            self.weights = np.asarray(self.weights, dtype=np.float64)
            if self.weights.shape != (n,) or np.any(self.weights < 0):
                raise DataError("weights must be nonnegative, one per point")
            if abs(self.weights.sum() - 1.0) > 1e-12:
                raise DataError(f"weights must sum to 1, got {self.weights.sum()!r}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape != (n,) or not np.isin(self.labels, (0, 1)).all():
                raise DataError("labels must be one binary value per point")


# -- divergences ---------------------------------------------------------------


def h_divergence(p: EmpiricalDist, q: EmpiricalDist, hc: HypothesisClass) -> float:
    """2 sup_h |Pr_P(h=1) - Pr_Q(h=1)|, exact over the finite class."""
    pr_p = hc.predict(p.points) @ p.weights
    pr_q = hc.predict(q.points) @ q.weights
    return float(2.0 * np.abs(pr_p - pr_q).max())


def _pair_gram(dist: EmpiricalDist, hc: HypothesisClass) -> np.ndarray:
    """G[h,g] = E_dist[s_h s_g] with s = +/-1 predictions; Pr[h XOR g] = (1-G)/2."""
    s = 1.0 - 2.0 * hc.predict(dist.points)
    return (s * dist.weights[None, :]) @ s.T


def h_delta_h_divergence(p: EmpiricalDist, q: EmpiricalDist, hc: HypothesisClass) -> float:
    """Divergence over all pairwise-XOR hypotheses, enumerated via Gram matrices."""
    return float(np.abs(_pair_gram(q, hc) - _pair_gram(p, hc)).max())


def hypothesis_errors(dist: EmpiricalDist, hc: HypothesisClass) -> np.ndarray:
    """epsilon_D(h) for every h: weighted disagreement with the labels."""
    if dist.labels is None:
        raise DataError("labeled distribution required")
    preds = hc.predict(dist.points)
    return (np.abs(preds - dist.labels[None, :]) * dist.weights[None, :]).sum(axis=1)


def ideal_joint_error(p: EmpiricalDist, q: EmpiricalDist, hc: HypothesisClass) -> float:
    """min_h epsilon_P(h) + epsilon_Q(h)."""
    return float((hypothesis_errors(p, hc) + hypothesis_errors(q, hc)).min())


# -- bound checks ---------------------------------------------------------------


@dataclass
class BoundReport:
    name: str
    num_hypotheses: int
    max_violation: float  # max over h of LHS - RHS; <= slack expected
    min_margin: float  # min over h of RHS - LHS
    mean_margin: float
    worst_lhs: float
    worst_rhs: float
    terms: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.max_violation <= _TOL


def _report(name, lhs, rhs, terms=None) -> BoundReport:
    margins = rhs - lhs
    worst = int(np.argmin(margins))
    return BoundReport(
        name=name,
        num_hypotheses=len(lhs),
        max_violation=float(-margins.min()),
        min_margin=float(margins.min()),
        mean_margin=float(margins.mean()),
        worst_lhs=float(lhs[worst]),
        worst_rhs=float(rhs[worst]),
        terms=terms or {},
    )


def check_da_bound(p: EmpiricalDist, q: EmpiricalDist, hc: HypothesisClass) -> BoundReport:
    """Two-distribution bound: eps_Q(h) <= lambda'' + eps_P(h) + d_HdH(Q,P)/2 for every h."""
    lam = ideal_joint_error(p, q, hc)
    half_d = 0.5 * h_delta_h_divergence(q, p, hc)
    lhs = hypothesis_errors(q, hc)
    rhs = lam + hypothesis_errors(p, hc) + half_d
    return _report("da_bound", lhs, rhs, {"ideal_joint": lam, "half_d_hdh": half_d})


def _check_phi(phi, m):
    phi = np.asarray(phi, dtype=np.float64)
    if phi.shape != (m,) or np.any(phi < 0) or abs(phi.sum() - 1.0) > 1e-12:
        raise DataError("phi must be nonnegative weights over the sources summing to 1")
    return phi


def max_pairwise_divergence(sources, hc) -> float:
    m = len(sources)
    return max(
        h_delta_h_divergence(sources[i], sources[j], hc) for i in range(m) for j in range(i + 1, m)
    )


def mixture_dist(sources, phi) -> EmpiricalDist:
    """Sum_i phi_i P_i as a weighted union of the empirical samples."""
    phi = _check_phi(phi, len(sources))
    points = np.concatenate([s.points for s in sources])
    weights = np.concatenate([f * s.weights for f, s in zip(phi, sources)])
    labels = None
    if all(s.labels is not None for s in sources):
        labels = np.concatenate([s.labels for s in sources])
    return EmpiricalDist(points, weights, labels)


def membership_O(s: EmpiricalDist, sources, phi, hc) -> bool:
    """sum_i phi_i d_HdH(P_i, S) <= max_{i,j} d_HdH(P_i, P_j)."""
    phi = _check_phi(phi, len(sources))
    lhs = sum(f * h_delta_h_divergence(p, s, hc) for f, p in zip(phi, sources))
    return lhs <= max_pairwise_divergence(sources, hc) + _TOL


def membership_Oprime(s: EmpiricalDist, sources, phi, hc) -> bool:
    """d_HdH(sum_i phi_i P_i, S) <= max_{i,j} d_HdH(P_i, P_j)."""
    lhs = h_delta_h_divergence(mixture_dist(sources, phi), s, hc)
    return lhs <= max_pairwise_divergence(sources, hc) + _TOL


@dataclass
class InclusionReport:
    num_candidates: int
    num_in_O: int
    num_in_Oprime: int
    counterexamples: list  # candidate indices with S in O but not O'
    min_triangle_slack: float  # min over candidates of sum_i phi_i d(P_i,S) - d(mix,S)

    @property
    def ok(self) -> bool:
        return not self.counterexamples and self.min_triangle_slack >= -_TOL


def verify_inclusion(candidates, sources, phi, hc) -> InclusionReport:
    """Checks membership_O(S) => membership_Oprime(S) for every candidate."""
    phi = _check_phi(phi, len(sources))
    mix = mixture_dist(sources, phi)
    n_o = n_op = 0
    counterexamples = []
    slacks = []
    for idx, s in enumerate(candidates):
        convex = sum(f * h_delta_h_divergence(p, s, hc) for f, p in zip(phi, sources))
        direct = h_delta_h_divergence(mix, s, hc)
        slacks.append(convex - direct)
        in_o = membership_O(s, sources, phi, hc)
        in_op = membership_Oprime(s, sources, phi, hc)
        n_o += in_o
        n_op += in_op
        if in_o and not in_op:
            counterexamples.append(idx)
    return InclusionReport(
        num_candidates=len(candidates),
        num_in_O=n_o,
        num_in_Oprime=n_op,
        counterexamples=counterexamples,
        min_triangle_slack=float(min(slacks)),
    )


def check_dg_bound_sources(q: EmpiricalDist, sources, phi, hc, candidates=()) -> BoundReport:
    """Convex-combination bound with the O coverage set.

    eps_Q(h) <= sum_i phi_i lambda_i + sum_i phi_i eps_{P_i}(h)
                + min_{S in O} d_HdH(S, Q)/2 + max_{i,j} d_HdH(P_i, P_j)/2

    Candidate S's are screened for O membership; the sources themselves are
    always in O, so the min term is always well defined.
    """
    phi = _check_phi(phi, len(sources))
    lam_phi = sum(f * ideal_joint_error(q, p, hc) for f, p in zip(phi, sources))
    src_err = sum(f * hypothesis_errors(p, hc) for f, p in zip(phi, sources))
    pool = list(candidates) + list(sources)
    in_o = [s for s in pool if membership_O(s, sources, phi, hc)]
    min_d = min(h_delta_h_divergence(s, q, hc) for s in in_o)
    max_pair = max_pairwise_divergence(sources, hc)
    lhs = hypothesis_errors(q, hc)
    rhs = lam_phi + src_err + 0.5 * min_d + 0.5 * max_pair
    return _report(
        "dg_bound_sources", lhs, rhs,
        {"lambda_phi": lam_phi, "min_d_SQ": min_d, "max_pairwise": max_pair, "num_in_O": len(in_o)},
    )


def check_dg_bound_mixture(q: EmpiricalDist, sources, phi, hc, candidates=()) -> BoundReport:
    """Mixture bound with the O' coverage set.

    For every S in O' (labeled): eps_Q(h) <= lambda(Q,S) + lambda(S, mix)
    + sum_i phi_i eps_{P_i}(h) + d_HdH(S,Q)/2 + max_{i,j} d_HdH(P_i,P_j)/2.
    The reported RHS takes, per h, the tightest admissible S (each S gives
    a valid bound, so the min does too). The mixture itself is always in O'.
    """
    phi = _check_phi(phi, len(sources))
    mix = mixture_dist(sources, phi)
    src_err = sum(f * hypothesis_errors(p, hc) for f, p in zip(phi, sources))
    max_pair = max_pairwise_divergence(sources, hc)
    pool = [mix] + [s for s in candidates if s.labels is not None]
    in_op = [s for s in pool if membership_Oprime(s, sources, phi, hc)]
    lhs = hypothesis_errors(q, hc)
    best_rhs = None
    for s in in_op:
        lam = ideal_joint_error(q, s, hc) + ideal_joint_error(s, mix, hc)
        rhs = lam + src_err + 0.5 * h_delta_h_divergence(s, q, hc) + 0.5 * max_pair
        best_rhs = rhs if best_rhs is None else np.minimum(best_rhs, rhs)
    return _report(
        "dg_bound_mixture", lhs, best_rhs,
        {"max_pairwise": max_pair, "num_in_Oprime": len(in_op)},
    )


# -- shrinkage and the two Mixup-error estimators --------------------------------


def sample_truncated_beta(alpha: float, lo: float, hi: float, size: int, rng) -> np.ndarray:
    """Vectorized rejection sampling of Beta(alpha, alpha) into [lo, hi]."""
    out = np.empty(size)
    filled = 0
    for _ in range(10_000):
        draw = rng.beta(alpha, alpha, size=size - filled)
        keep = draw[(draw >= lo) & (draw <= hi)]
        out[filled : filled + keep.size] = keep
        filled += keep.size
        if filled == size:
            return out
    raise ConfigError(f"rejection sampling into [{lo},{hi}] did not converge")


@dataclass
class ShrinkageReport:
    theta_bar: float
    max_se_units_x: float  # max_i ||mean residual delta_i|| / SE of that norm
    max_se_units_y: float
    max_abs_residual_x: float
    max_abs_residual_y: float
    trials: int

    @property
    def ok(self) -> bool:
        return self.max_se_units_x <= 3.0 and self.max_se_units_y <= 3.0


def _se_units(total, total_sq, trials):
    """Per point: ||mean residual||_2 over the coordinates, in standard errors."""
    mean = total / trials
    var = np.maximum(total_sq / trials - mean**2, 0.0) * trials / (trials - 1)
    norm = np.sqrt((mean * mean).sum(axis=1))
    se = np.sqrt(var.sum(axis=1) / trials)
    units = np.where(se > 0, norm / np.where(se > 0, se, 1.0), np.where(norm > 0, np.inf, 0.0))
    return float(units.max()), float(np.abs(mean).max())


def mixup_shrinkage_check(
    points: np.ndarray, labels: np.ndarray, alpha: float, trials: int, seed: int = 0, chunk: int = 2000
) -> ShrinkageReport:
    """Monte-Carlo check that Mixup shrinks samples toward the mean.

    With theta ~ Beta_{[1/2,1]}(alpha, alpha) and j uniform, the mix
    x~_i = theta x_i + (1-theta) x_j decomposes as
    xbar + theta (x_i - xbar) + delta_i with delta_i = (1-theta)(x_j - xbar),
    so the residual delta_i must have zero mean; asserted within 3
    standard errors per coordinate (same for the one-hot labels).
    """
    if trials < 10_000:
        raise ConfigError(f"need >= 10^4 trials for the shrinkage check, got {trials}")
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    labels = np.asarray(labels)
    if labels.ndim == 1:
        k = int(labels.max()) + 1
        labels = np.eye(k)[labels.astype(np.int64)]
    n = points.shape[0]
    rng = np.random.default_rng(seed)

    dev_x = points - points.mean(axis=0)[None, :]  # x_j - xbar, indexed by j
    dev_y = labels - labels.mean(axis=0)[None, :]
    sum_x = np.zeros_like(points)
    sumsq_x = np.zeros_like(points)
    sum_y = np.zeros_like(labels, dtype=np.float64)
    sumsq_y = np.zeros_like(labels, dtype=np.float64)
    theta_total = 0.0
    done = 0
    while done < trials:
        c = min(chunk, trials - done)
        theta = sample_truncated_beta(alpha, 0.5, 1.0, c, rng)
        j = rng.integers(n, size=(c, n))
        w = (1.0 - theta)[:, None, None]
        dx = w * dev_x[j]  # delta_i per draw, [c, n, d]
        dy = w * dev_y[j]
        sum_x += dx.sum(axis=0)
        sumsq_x += (dx * dx).sum(axis=0)
        sum_y += dy.sum(axis=0)
        sumsq_y += (dy * dy).sum(axis=0)
        theta_total += theta.sum()
        done += c

    units_x, resid_x = _se_units(sum_x, sumsq_x, trials)
    units_y, resid_y = _se_units(sum_y, sumsq_y, trials)
    return ShrinkageReport(
        theta_bar=float(theta_total / trials),
        max_se_units_x=units_x,
        max_se_units_y=units_y,
        max_abs_residual_x=resid_x,
        max_abs_residual_y=resid_y,
        trials=trials,
    )


def mixup_error_all_pairs(points, targets, predict_fn, loss_fn, alpha, trials, rng) -> float:
    """All-ordered-pairs Mixup risk with lambda ~ Beta(alpha, alpha), Monte Carlo over lambda."""
    points = np.asarray(points, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    n = points.shape[0]
    total = 0.0
    for _ in range(trials):
        lam = float(rng.beta(alpha, alpha))
        xt = lam * points[:, None, :] + (1 - lam) * points[None, :, :]
        yt = lam * targets[:, None] + (1 - lam) * targets[None, :]
        total += float(loss_fn(predict_fn(xt.reshape(n * n, -1)), yt.reshape(n * n)).mean())
    return total / trials


def mixup_error_resampled(points, targets, predict_fn, loss_fn, alpha, trials, rng) -> float:
    """Resampled Mixup risk with theta ~ Beta_{[1/2,1]}(alpha, alpha), j uniform."""
    points = np.asarray(points, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    n = points.shape[0]
    total = 0.0
    for _ in range(trials):
        theta = float(sample_truncated_beta(alpha, 0.5, 1.0, 1, rng)[0])
        j = rng.integers(n, size=n)
        xt = theta * points + (1 - theta) * points[j]
        yt = theta * targets + (1 - theta) * targets[j]
        total += float(loss_fn(predict_fn(xt), yt).mean())
    return total / trials


# -- default verification suites (the `bounds` CLI subcommand) -------------------
# Sample counts are powers of two and phi weights are dyadic, so every
# probability below is an exact binary fraction and the emitted slacks are
# exact — never negative by rounding.


def _rand_dist(rng, n=16, d=2, labeled=False) -> EmpiricalDist:
    return EmpiricalDist(
        rng.uniform(0.0, 1.0, (n, d)),
        labels=rng.integers(0, 2, n) if labeled else None,
    )


def run_default_suites(seed: int = 0) -> list:
    """All verification suites on default grids; rows of checked inequalities."""
    rng = np.random.default_rng(seed)
    hc = threshold_class(np.linspace(0.0, 1.0, 11), dim=2)
    rows = []

    def row(suite, instance, inequality, lhs, rhs):
        rows.append(
            {"suite": suite, "instance": instance, "inequality": inequality,
             "lhs": float(lhs), "rhs": float(rhs), "slack": float(rhs) - float(lhs)}
        )

    for i in range(100):
        p, q, r = (_rand_dist(rng) for _ in range(3))
        d_pq = h_delta_h_divergence(p, q, hc)
        d_qr = h_delta_h_divergence(q, r, hc)
        d_pr = h_delta_h_divergence(p, r, hc)
        row("divergence", i, "symmetry: |d(P,Q)-d(Q,P)| <= 0", abs(d_pq - h_delta_h_divergence(q, p, hc)), 0.0)
        row("divergence", i, "zero on equal: d(P,P) <= 0", h_delta_h_divergence(p, p, hc), 0.0)
        row("divergence", i, "range: d <= 2", d_pq, 2.0)
        row("divergence", i, "range: 0 <= d", 0.0, d_pq)
        row("divergence", i, "triangle: d(P,R) <= d(P,Q)+d(Q,R)", d_pr, d_pq + d_qr)

    for i in range(50):
        p = _rand_dist(rng, labeled=True)
        q = _rand_dist(rng, labeled=True)
        rep = check_da_bound(p, q, hc)
        row("da_bound", i, "eps_Q(h) <= ideal + eps_P(h) + d/2 (worst h)", rep.worst_lhs, rep.worst_rhs)

    phi = (0.25, 0.25, 0.5)
    for i in range(10):
        sources = [_rand_dist(rng, labeled=True) for _ in range(3)]
        q = _rand_dist(rng, labeled=True)
        cands = [_rand_dist(rng, labeled=True) for _ in range(20)]
        rep2 = check_dg_bound_sources(q, sources, phi, hc, cands)
        row("dg_sources", i, "convex-combination bound (worst h)", rep2.worst_lhs, rep2.worst_rhs)
        rep4 = check_dg_bound_mixture(q, sources, phi, hc, cands)
        row("dg_mixture", i, "mixture bound (worst h)", rep4.worst_lhs, rep4.worst_rhs)

    for i in range(20):
        sources = [_rand_dist(rng) for _ in range(3)]
        cands = [_rand_dist(rng) for _ in range(50)]
        rep = verify_inclusion(cands, sources, phi, hc)
        row("inclusion", i, "|O| <= |O'|", rep.num_in_O, rep.num_in_Oprime)
        row("inclusion", i, "counterexamples <= 0", len(rep.counterexamples), 0.0)
        row("inclusion", i, "triangle: d(mix,S) <= sum phi_i d(P_i,S)", -rep.min_triangle_slack, 0.0)

    pts = rng.uniform(-1.0, 1.0, (50, 2))
    labs = rng.integers(0, 4, 50)
    for alpha in (0.2, 1.0, 2.0):
        rep = mixup_shrinkage_check(pts, labs, alpha, trials=100_000, seed=seed)
        row("shrinkage", f"alpha={alpha}", "max |mean residual| in SE units <= 3 (inputs)", rep.max_se_units_x, 3.0)
        row("shrinkage", f"alpha={alpha}", "max |mean residual| in SE units <= 3 (labels)", rep.max_se_units_y, 3.0)

    return rows

