"""Network construction: feature body, bottleneck, classifier, discriminator.

Two bodies are supported: an MLP for low-dimensional synthetic data and
a 1-D CNN for multichannel time series (blocks of conv -> relu -> pool
-> batch-norm). The bottleneck is a single linear layer; its output is
the feature the invariance losses and feature-level mixing operate on.
The classifier and the domain discriminator are single linear heads on
that feature, the discriminator behind a gradient-reversal.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .autodiff import BNStats, Tape, Tensor
from .errors import ConfigError, ShapeError
from .mixup import MIX_BOTTLENECK, MIX_HIDDEN, MixPlan, mix_tensors

_MAGIC = b"FDGCKPT1"


@dataclass(frozen=True)
class MlpBody:
    hidden: tuple = (16, 16)


@dataclass(frozen=True)
class Cnn1dBody:
    channels: tuple = (16, 32)
    kernel: int = 9
    pool: int = 2


@dataclass(frozen=True)
class ArchSpec:
    in_shape: tuple  # (F,) for MLP, (C, T) for Cnn1d
    num_classes: int
    num_domains: int
    body: object = field(default_factory=MlpBody)
    bottleneck_dim: int = 64

    def __post_init__(self):
        dims = (*self.in_shape, self.num_classes, self.num_domains, self.bottleneck_dim)
        if any(d <= 0 for d in dims):
            raise ConfigError(f"all architecture dimensions must be positive: {self}")


@dataclass
class ForwardOut:
    """Everything a training step needs from one recorded forward pass."""

    params: dict  # name -> leaf Tensor on this tape
    z: Tensor  # bottleneck feature, unmixed
    z_cls: Tensor  # classifier input (mixed when the plan says so)
    logits: Tensor
    dom_logits: Tensor | None


def _uniform_init(rng, shape, fan_in):
    s = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-s, s, size=shape)


class ModelBundle:
    """Parameter store plus the forward recipe for one architecture."""

    def __init__(self, spec: ArchSpec, params: dict, bn: dict):
        self.spec = spec
        self.params = params
        self.bn = bn

    # number of activations eligible for hidden-site mixing (blocks + bottleneck)
    @property
    def num_mix_sites(self) -> int:
        body = self.spec.body
        n_blocks = len(body.hidden) if isinstance(body, MlpBody) else len(body.channels)
        return n_blocks + 1

    def clone_state(self) -> tuple:
        return (
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.bn.items()},
        )

    def restore_state(self, state: tuple) -> None:
        params, bn = state
        for k in self.params:
            self.params[k][...] = params[k]
        for k in self.bn:
            self.bn[k].mean[:] = bn[k].mean
            self.bn[k].var[:] = bn[k].var

    # -- forward ---------------------------------------------------------

    def forward(
        self,
        tape: Tape,
        x: np.ndarray,
        *,
        training: bool,
        eta: float = 1.0,
        mix_plan: MixPlan | None = None,
        with_domain: bool = False,
    ) -> ForwardOut:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != tuple(self.spec.in_shape):
            raise ShapeError("forward", f"input shape {x.shape[1:]} != expected {tuple(self.spec.in_shape)}")
        leaves = {name: tape.leaf(arr) for name, arr in self.params.items()}
        h = tape.leaf(x, requires_grad=False)

        hidden_site = None
        if mix_plan is not None and mix_plan.site == MIX_HIDDEN:
            hidden_site = mix_plan.hidden_layer
            if hidden_site is None or not 0 <= hidden_site < self.num_mix_sites:
                raise ConfigError(f"hidden mix layer must be in [0, {self.num_mix_sites}), got {hidden_site}")

        body = self.spec.body
        if isinstance(body, MlpBody):
            for i in range(len(body.hidden)):
                h = tape.relu(tape.add(tape.matmul(h, leaves[f"feat.{i}.W"]), leaves[f"feat.{i}.b"]))
                if hidden_site == i:
                    h = self._mix(tape, h, mix_plan)
        else:
            for i in range(len(body.channels)):
                h = tape.conv1d(h, leaves[f"feat.{i}.conv.W"], leaves[f"feat.{i}.conv.b"],
                                stride=1, padding=body.kernel // 2)
                h = tape.relu(h)
                h = tape.maxpool1d(h, body.pool)
                h = tape.batchnorm(h, leaves[f"feat.{i}.bn.gamma"], leaves[f"feat.{i}.bn.beta"],
                                   self.bn[f"feat.{i}.bn"], training)
                if hidden_site == i:
                    h = self._mix(tape, h, mix_plan)
            h = tape.reshape(h, (x.shape[0], -1))

        z = tape.add(tape.matmul(h, leaves["bottleneck.W"]), leaves["bottleneck.b"])

        z_cls = z
        if mix_plan is not None and (
            mix_plan.site == MIX_BOTTLENECK or hidden_site == self.num_mix_sites - 1
        ):
            z_cls = self._mix(tape, z, mix_plan)

        logits = tape.add(tape.matmul(z_cls, leaves["classifier.W"]), leaves["classifier.b"])

        dom_logits = None
        if with_domain:
            rev = tape.grad_reverse(z, eta)
            dom_logits = tape.add(tape.matmul(rev, leaves["disc.W"]), leaves["disc.b"])

        return ForwardOut(params=leaves, z=z, z_cls=z_cls, logits=logits, dom_logits=dom_logits)

    @staticmethod
    def _mix(tape, t, plan):
        partner = tape.gather_rows(t, plan.perm)
        return mix_tensors(tape, t, partner, plan.lam)

    def classifier_logits(self, tape: Tape, feats: Tensor) -> Tensor:
        """Classifier head alone, for margin-loss input-gradient probes."""
        w = tape.leaf(self.params["classifier.W"])
        b = tape.leaf(self.params["classifier.b"])
        return tape.add(tape.matmul(feats, w), b)

    def predict_logits(self, x: np.ndarray) -> np.ndarray:
        return self.forward(Tape(), x, training=False).logits.data

    def features(self, x: np.ndarray) -> np.ndarray:
        return self.forward(Tape(), x, training=False).z.data


def _flat_feature_dim(spec: ArchSpec) -> int:
    body = spec.body
    if isinstance(body, MlpBody):
        return body.hidden[-1] if body.hidden else spec.in_shape[0]
    c, t = spec.in_shape
    for _ in body.channels:
        if t < body.pool:
            raise ConfigError(f"input length {spec.in_shape[1]} too short for {len(body.channels)} pool stages")
        t //= body.pool
    return body.channels[-1] * t


def build_model(spec: ArchSpec, rng: np.random.Generator) -> ModelBundle:
    """Initialize all parameters with uniform fan-in scaling; deterministic per rng."""
    params: dict[str, np.ndarray] = {}
    bn: dict[str, BNStats] = {}
    body = spec.body

    if isinstance(body, MlpBody):
        if len(spec.in_shape) != 1:
            raise ConfigError(f"MLP body expects flat inputs, got shape {spec.in_shape}")
        width = spec.in_shape[0]
        for i, h in enumerate(body.hidden):
            params[f"feat.{i}.W"] = _uniform_init(rng, (width, h), width)
            params[f"feat.{i}.b"] = _uniform_init(rng, (h,), width)
            width = h
    elif isinstance(body, Cnn1dBody):
        if len(spec.in_shape) != 2:
            raise ConfigError(f"Cnn1d body expects (channels, length) inputs, got shape {spec.in_shape}")
        cin = spec.in_shape[0]
        for i, cout in enumerate(body.channels):
            fan = cin * body.kernel
            params[f"feat.{i}.conv.W"] = _uniform_init(rng, (cout, cin, body.kernel), fan)
            params[f"feat.{i}.conv.b"] = _uniform_init(rng, (cout,), fan)
            params[f"feat.{i}.bn.gamma"] = np.ones(cout)
            params[f"feat.{i}.bn.beta"] = np.zeros(cout)
            bn[f"feat.{i}.bn"] = BNStats.fresh(cout)
            cin = cout
    else:
        raise ConfigError(f"unknown body type {type(body).__name__}")

    flat = _flat_feature_dim(spec)
    params["bottleneck.W"] = _uniform_init(rng, (flat, spec.bottleneck_dim), flat)
    params["bottleneck.b"] = _uniform_init(rng, (spec.bottleneck_dim,), flat)
    params["classifier.W"] = _uniform_init(rng, (spec.bottleneck_dim, spec.num_classes), spec.bottleneck_dim)
    params["classifier.b"] = _uniform_init(rng, (spec.num_classes,), spec.bottleneck_dim)
    params["disc.W"] = _uniform_init(rng, (spec.bottleneck_dim, spec.num_domains), spec.bottleneck_dim)
    params["disc.b"] = _uniform_init(rng, (spec.num_domains,), spec.bottleneck_dim)
    return ModelBundle(spec, params, bn)


# -- checkpoint io ------------------------------------------------------------
# Layout: 8-byte magic, u64 little-endian header length, UTF-8 JSON header
# {"arch": ..., "tensors": [{"name", "shape"}, ...]}, then the tensors'
# float64 little-endian bytes concatenated in header order. Running BN stats
# are stored as ordinary tensors under <layer>.running_mean / .running_var.


def _arch_to_json(spec: ArchSpec) -> dict:
    body = spec.body
    if isinstance(body, MlpBody):
        bj = {"kind": "mlp", "hidden": list(body.hidden)}
    else:
        bj = {"kind": "cnn1d", "channels": list(body.channels), "kernel": body.kernel, "pool": body.pool}
    return {
        "in_shape": list(spec.in_shape),
        "num_classes": spec.num_classes,
        "num_domains": spec.num_domains,
        "bottleneck_dim": spec.bottleneck_dim,
        "body": bj,
    }


def _arch_from_json(j: dict) -> ArchSpec:
    bj = j["body"]
    if bj["kind"] == "mlp":
        body = MlpBody(hidden=tuple(bj["hidden"]))
    else:
        body = Cnn1dBody(channels=tuple(bj["channels"]), kernel=bj["kernel"], pool=bj["pool"])
    return ArchSpec(
        in_shape=tuple(j["in_shape"]),
        num_classes=j["num_classes"],
        num_domains=j["num_domains"],
        body=body,
        bottleneck_dim=j["bottleneck_dim"],
    )


def save_checkpoint(bundle: ModelBundle, path) -> None:
    tensors = dict(sorted(bundle.params.items()))
    for name, st in sorted(bundle.bn.items()):
        tensors[f"{name}.running_mean"] = st.mean
        tensors[f"{name}.running_var"] = st.var
    header = {
        "arch": _arch_to_json(bundle.spec),
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in tensors.items()],
    }
    hbytes = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<Q", len(hbytes)))
        f.write(hbytes)
        for a in tensors.values():
            f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelBundle:
    with open(path, "rb") as f:
        if f.read(8) != _MAGIC:
            raise ConfigError(f"{path}: not a model checkpoint")
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen).decode("utf-8"))
        tensors = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            n = int(np.prod(shape)) if shape else 1
            buf = f.read(8 * n)
            tensors[entry["name"]] = np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)

    spec = _arch_from_json(header["arch"])
    params = {n: a for n, a in tensors.items() if not n.endswith((".running_mean", ".running_var"))}
    bn = {}
    for n in list(tensors):
        if n.endswith(".running_mean"):
            layer = n[: -len(".running_mean")]
            bn[layer] = BNStats(mean=tensors[n].copy(), var=tensors[f"{layer}.running_var"].copy())
    return ModelBundle(spec, params, bn)
