"""Training loop for all algorithms, model selection, and leave-one-domain-out.

Every step draws batch_per_domain samples from each source domain
(without replacement within an epoch, short tail dropped), assembles
one combined batch, computes the algorithm's loss, and takes one Adam
step. Validation accuracy is measured after each epoch; the best epoch
(earliest on ties) provides the retained checkpoint.

Algorithm wiring:
  ERM            cross-entropy
  Mixup          CE on input-mixed batch, mixed labels
  ManifoldMixup  same, mixed at a random hidden activation
  DANN           CE + discriminator CE behind gradient reversal
  CORAL          CE + covariance alignment across source domains
  FIX_DANN       bottleneck-feature mixup + CE + DANN term (unmixed features)
  FIX_CORAL      bottleneck-feature mixup + CE + CORAL term (unmixed features)
  FIXED          FIX_DANN with the large-margin loss replacing CE
  *_Margin       base algorithm with the large-margin loss replacing CE

eta == 0 disables the adversarial branch entirely (it passes zero
gradient to shared parameters anyway), which makes the documented
degenerations exact: FIXED(lambda==1, eta=0) == ERM_Margin and
FIX_DANN(lambda==1) == DANN, step for step.
"""

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import Tape
from .datagen import DomainDataset, loo_splits, split_train_val
from .errors import ConfigError, DataError, NumericsError, TrainingDiverged
from .losses import (
    MarginConfig,
    coral_loss,
    cross_entropy,
    domain_adv_loss,
    large_margin_loss,
    mixed_margin_loss,
)
from .mixup import (
    MIX_BOTTLENECK,
    MIX_HIDDEN,
    MIX_INPUT,
    BetaParams,
    MixPlan,
    mix_arrays,
    mix_labels,
    one_hot,
    pair_shuffle,
    sample_beta,
)
from .models import ArchSpec, Cnn1dBody, MlpBody, ModelBundle, build_model
from .optim import AdamState, adam_step

ALGORITHMS = (
    "ERM",
    "Mixup",
    "ManifoldMixup",
    "DANN",
    "CORAL",
    "FIX_DANN",
    "FIX_CORAL",
    "FIXED",
    "ERM_Margin",
    "DANN_Margin",
    "Mixup_Margin",
)

_MIX_SITE = {
    "Mixup": MIX_INPUT,
    "Mixup_Margin": MIX_INPUT,
    "ManifoldMixup": MIX_HIDDEN,
    "FIX_DANN": MIX_BOTTLENECK,
    "FIX_CORAL": MIX_BOTTLENECK,
    "FIXED": MIX_BOTTLENECK,
}
_USES_DISC = {"DANN", "DANN_Margin", "FIX_DANN", "FIXED"}
_USES_CORAL = {"CORAL", "FIX_CORAL"}
_USES_MARGIN = {"FIXED", "ERM_Margin", "DANN_Margin", "Mixup_Margin"}
_NEEDS_MULTI_SOURCE = _USES_DISC | _USES_CORAL


@dataclass
class AlgorithmConfig:
    algorithm: str = "ERM"
    epochs: int = 150
    batch_per_domain: int = 32
    lr: float = 1e-2
    weight_decay: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    mixup_alpha: float = 0.2
    adv_eta: float = 1.0
    disc_weight: float = 1.0
    coral_weight: float = 1.0
    margin: MarginConfig = field(default_factory=MarginConfig)
    margin_add_ce: bool = False
    fixed_lambda: float | None = None  # test hook: force lambda instead of sampling
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm '{self.algorithm}' (have {', '.join(ALGORITHMS)})")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_per_domain < 1:
            raise ConfigError(f"batch_per_domain must be >= 1, got {self.batch_per_domain}")


@dataclass
class EpochRecord:
    epoch: int
    losses: dict
    val_acc: float


@dataclass
class RunResult:
    epochs: list
    selected_epoch: int
    best_val_acc: float
    target_acc: float | None
    target_domain: str | None
    source_domains: list
    wall_time: float
    seed: int
    config: dict


@dataclass
class EvalResult:
    per_domain: dict  # name -> accuracy
    macro: float
    overall: float


@dataclass
class LodoResult:
    rows: list  # (held_out_name, RunResult)
    average_target_acc: float
    bundles: dict | None = None  # held_out_name -> best-epoch ModelBundle, when kept


def default_arch(ds: DomainDataset, bottleneck_dim: int = 64, body=None) -> ArchSpec:
    if body is None:
        body = MlpBody() if len(ds.feature_shape) == 1 else Cnn1dBody()
    return ArchSpec(
        in_shape=tuple(ds.feature_shape),
        num_classes=ds.num_classes,
        num_domains=ds.num_domains,
        body=body,
        bottleneck_dim=bottleneck_dim,
    )


def make_mix_plan(cfg: AlgorithmConfig, batch_size: int, num_sites: int, rng) -> MixPlan | None:
    site = _MIX_SITE.get(cfg.algorithm)
    if site is None:
        return None
    lam = cfg.fixed_lambda if cfg.fixed_lambda is not None else sample_beta(BetaParams(cfg.mixup_alpha), rng)
    perm = pair_shuffle(batch_size, rng)
    hidden = int(rng.integers(num_sites)) if site == MIX_HIDDEN else None
    return MixPlan(lam=lam, perm=perm, site=site, hidden_layer=hidden)


def algorithm_step_loss(tape: Tape, bundle: ModelBundle, cfg: AlgorithmConfig, x, y, dom, plan):
    """One training-step loss. Returns (loss Tensor, float components, ForwardOut)."""
    k = bundle.spec.num_classes
    needs_disc = cfg.algorithm in _USES_DISC and cfg.adv_eta > 0

    x_in = x
    model_plan = plan
    if plan is not None and plan.site == MIX_INPUT:
        x_in = mix_arrays(x, x[plan.perm], plan.lam)
        model_plan = None
    fw = bundle.forward(
        tape, x_in, training=True, eta=cfg.adv_eta, mix_plan=model_plan, with_domain=needs_disc
    )

    parts = {}
    if cfg.algorithm in _USES_MARGIN:
        if plan is not None:
            cls = mixed_margin_loss(
                tape, bundle.classifier_logits, fw.z_cls, y, y[plan.perm], plan.lam, cfg.margin,
                logits=fw.logits,
            )
        else:
            cls = large_margin_loss(
                tape, bundle.classifier_logits, fw.z_cls, y, cfg.margin, logits=fw.logits
            )
        parts["margin"] = float(cls.data)
        if cfg.margin_add_ce:
            targets = (
                mix_labels(one_hot(y, k), one_hot(y[plan.perm], k), plan.lam)
                if plan is not None
                else one_hot(y, k)
            )
            ce = cross_entropy(tape, fw.logits, targets)
            parts["ce"] = float(ce.data)
            cls = tape.add(cls, ce)
    else:
        targets = (
            mix_labels(one_hot(y, k), one_hot(y[plan.perm], k), plan.lam)
            if plan is not None
            else one_hot(y, k)
        )
        cls = cross_entropy(tape, fw.logits, targets)
        parts["ce"] = float(cls.data)

    total = cls
    if needs_disc:
        dl = domain_adv_loss(tape, fw.dom_logits, dom, bundle.spec.num_domains)
        parts["disc"] = float(dl.data)
        total = tape.add(total, tape.scale(dl, cfg.disc_weight))
    if cfg.algorithm in _USES_CORAL:
        feats = [tape.gather_rows(fw.z, np.flatnonzero(dom == d)) for d in np.unique(dom)]
        cl = coral_loss(tape, feats)
        parts["coral"] = float(cl.data)
        total = tape.add(total, tape.scale(cl, cfg.coral_weight))

    parts["total"] = float(total.data)
    return total, parts, fw


def train(cfg: AlgorithmConfig, sources: DomainDataset, val: DomainDataset, arch: ArchSpec | None = None):
    """Train one model; returns (best-epoch ModelBundle, RunResult)."""
    t0 = time.perf_counter()
    m = sources.num_domains
    if cfg.algorithm in _NEEDS_MULTI_SOURCE and m < 2:
        raise ConfigError(f"{cfg.algorithm} needs >= 2 source domains, got {m}")
    if arch is None:
        arch = default_arch(sources)
    if arch.num_domains != m:
        raise ConfigError(f"arch expects {arch.num_domains} domains but sources have {m}")

    rng = np.random.default_rng(cfg.seed)
    bundle = build_model(arch, rng)
    opt = AdamState(lr=cfg.lr, weight_decay=cfg.weight_decay, beta1=cfg.beta1, beta2=cfg.beta2)

    b = cfg.batch_per_domain
    smallest = min(d.x.shape[0] for d in sources.domains)
    steps_per_epoch = smallest // b
    if steps_per_epoch < 1:
        raise DataError(f"smallest source domain has {smallest} samples; need >= batch size {b}")

    dom_labels = np.repeat(np.arange(m), b)
    records = []
    best = (-1.0, -1, None)  # (val_acc, epoch, state)
    for epoch in range(cfg.epochs):
        orders = [rng.permutation(d.x.shape[0]) for d in sources.domains]
        sums: dict[str, float] = {}
        for step in range(steps_per_epoch):
            xs, ys = [], []
            for d, order in zip(sources.domains, orders):
                take = order[step * b : (step + 1) * b]
                xs.append(d.x[take])
                ys.append(d.y[take])
            x = np.concatenate(xs)
            y = np.concatenate(ys)
            plan = make_mix_plan(cfg, x.shape[0], bundle.num_mix_sites, rng)
            tape = Tape()
            try:
                loss, parts, fw = algorithm_step_loss(tape, bundle, cfg, x, y, dom_labels, plan)
                gmap = tape.backward(loss)
            except NumericsError as e:
                raise TrainingDiverged(epoch, step, str(e)) from e
            grads = {name: gmap[leaf.node_id] for name, leaf in fw.params.items()}
            adam_step(bundle.params, grads, opt)
            for key, v in parts.items():
                sums[key] = sums.get(key, 0.0) + v

        losses = {key: v / steps_per_epoch for key, v in sums.items()}
        val_acc = evaluate(bundle, val).overall
        records.append(EpochRecord(epoch=epoch, losses=losses, val_acc=val_acc))
        if val_acc > best[0]:
            best = (val_acc, epoch, bundle.clone_state())

    bundle.restore_state(best[2])
    result = RunResult(
        epochs=records,
        selected_epoch=best[1],
        best_val_acc=best[0],
        target_acc=None,
        target_domain=None,
        source_domains=sources.domain_names(),
        wall_time=time.perf_counter() - t0,
        seed=cfg.seed,
        config=asdict(cfg),
    )
    return bundle, result


def evaluate(bundle: ModelBundle, ds: DomainDataset, chunk: int = 512) -> EvalResult:
    """Argmax accuracy per domain plus macro average; eval mode, deterministic."""
    per = {}
    correct_total = 0
    n_total = 0
    for d in ds.domains:
        n = d.x.shape[0]
        if n == 0:
            raise DataError(f"cannot evaluate empty domain '{d.name}'")
        correct = 0
        for lo in range(0, n, chunk):
            logits = bundle.predict_logits(d.x[lo : lo + chunk])
            correct += int((logits.argmax(axis=1) == d.y[lo : lo + chunk]).sum())
        per[d.name] = correct / n
        correct_total += correct
        n_total += n
    macro = float(np.mean(list(per.values())))
    return EvalResult(per_domain=per, macro=macro, overall=correct_total / n_total)


def leave_one_domain_out(
    cfg: AlgorithmConfig,
    dataset: DomainDataset,
    arch_for=None,
    split_ratio: float = 0.8,
    keep_bundles: bool = False,
) -> LodoResult:
    """Hold out each domain in turn: train on the rest (split 8:2), test on it.

    arch_for: optional callable sources_dataset -> ArchSpec (the
    discriminator width must match the number of source domains).
    """
    if dataset.num_domains < 2:
        raise ConfigError(f"leave-one-domain-out needs >= 2 domains, got {dataset.num_domains}")
    rows = []
    bundles = {} if keep_bundles else None
    for target_name, sources, target in loo_splits(dataset):
        tr, va = split_train_val(sources, ratio=split_ratio, seed=cfg.seed)
        arch = arch_for(sources) if arch_for is not None else default_arch(sources)
        bundle, result = train(cfg, tr, va, arch=arch)
        ev = evaluate(bundle, target)
        result.target_acc = ev.overall
        result.target_domain = target_name
        rows.append((target_name, result))
        if keep_bundles:
            bundles[target_name] = bundle
    avg = float(np.mean([r.target_acc for _, r in rows]))
    return LodoResult(rows=rows, average_target_acc=avg, bundles=bundles)


# -- run records ---------------------------------------------------------------


def write_run_jsonl(result: RunResult, path) -> None:
    """One record per epoch plus a final sentinel record."""
    with open(path, "w") as f:
        for rec in result.epochs:
            f.write(json.dumps({"epoch": rec.epoch, "losses": rec.losses, "val_acc": rec.val_acc}) + "\n")
        final = {
            "final": True,
            "selected_epoch": result.selected_epoch,
            "best_val_acc": result.best_val_acc,
            "target_acc": result.target_acc,
            "target_domain": result.target_domain,
            "source_domains": result.source_domains,
            "wall_time": result.wall_time,
            "seed": result.seed,
            "config": result.config,
        }
        f.write(json.dumps(final) + "\n")


def read_run_jsonl(path):
    """Returns (epoch records, final record or None if the run is incomplete)."""
    epochs, final = [], None
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if rec.get("final"):
                final = rec
            else:
                epochs.append(rec)
    return epochs, final
