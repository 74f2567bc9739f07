"""Run configuration: dotted-key text files with a closed, typed schema.

Format: one ``section.key = value`` per line, ``#`` comments. Unknown
keys are rejected (catches typos like ``margin.gama``), values are
coerced to the schema type, and every value has a default except the
generator choice and the seed, which must be explicit.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from . import datagen
from .errors import ConfigError
from .losses import MarginConfig
from .models import ArchSpec, Cnn1dBody, MlpBody
from .trainer import ALGORITHMS, AlgorithmConfig

_REQUIRED = object()

# key -> (type tag, default). Tags: int, float, bool, str, ints, floats, strs.
_SCHEMA = {
    "data.generator": ("str", _REQUIRED),
    "data.seed": ("int", _REQUIRED),
    "data.n_per_domain": ("int", 200),
    "data.rotations": ("floats", (0.0, 30.0, 60.0, 90.0)),
    "data.noise": ("float", 0.1),
    "data.num_classes": ("int", 4),
    "data.num_domains": ("int", 4),
    "data.n_per_class": ("int", 40),
    "data.length": ("int", 64),
    "data.channels": ("int", 3),
    "data.domain_shift": ("float", 15.0),
    "data.csv_path": ("str", ""),
    "data.csv_format": ("str", "flat"),
    "data.window": ("bool", False),
    "data.window_width": ("int", 128),
    "data.window_stride": ("int", 64),
    "data.split_ratio": ("float", 0.8),
    "algorithm.name": ("str", "ERM"),
    "algorithm.epochs": ("int", 150),
    "algorithm.batch": ("int", 32),
    "algorithm.lr": ("float", 1e-2),
    "algorithm.weight_decay": ("float", 5e-4),
    "algorithm.seed": ("int", -1),  # -1: fall back to data.seed
    "mixup.alpha": ("float", 0.2),
    "margin.gamma": ("float", 1.0),
    "margin.top_k": ("int", 1),
    "margin.denom_eps": ("float", 1e-8),
    "margin.add_ce": ("bool", False),
    "adv.eta": ("float", 1.0),
    "adv.disc_weight": ("float", 1.0),
    "coral.weight": ("float", 1.0),
    "model.bottleneck_dim": ("int", 64),
    "model.hidden": ("ints", (16, 16)),
    "model.channels": ("ints", (16, 32)),
    "model.kernel": ("int", 9),
    "model.pool": ("int", 2),
    "report.out_dir": ("str", "runs"),
    "report.emit_plots": ("bool", False),
    "bench.algorithms": ("strs", ("ERM", "Mixup", "FIX_DANN", "FIXED")),
    "bench.seeds": ("int", 3),
}

_GENERATORS = ("rotated_moons", "gaussian", "synthetic_har", "csv")


def _coerce(key: str, tag: str, raw: str):
    try:
        if tag == "int":
            return int(raw)
        if tag == "float":
            return float(raw)
        if tag == "bool":
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if tag == "str":
            return raw
        items = [p.strip() for p in raw.split(",") if p.strip()]
        if tag == "ints":
            return tuple(int(p) for p in items)
        if tag == "floats":
            return tuple(float(p) for p in items)
        if tag == "strs":
            return tuple(items)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse '{raw}' as {tag}") from None
    raise ConfigError(f"{key}: unknown schema tag {tag}")


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key: str):
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key '{key}'")
        return self.values[key]

    def algorithm_config(self, *, algorithm: str | None = None, seed: int | None = None) -> AlgorithmConfig:
        v = self.values
        name = algorithm if algorithm is not None else v["algorithm.name"]
        if name not in ALGORITHMS:
            raise ConfigError(f"algorithm.name: unknown algorithm '{name}'")
        if seed is None:
            seed = v["algorithm.seed"] if v["algorithm.seed"] >= 0 else v["data.seed"]
        return AlgorithmConfig(
            algorithm=name,
            epochs=v["algorithm.epochs"],
            batch_per_domain=v["algorithm.batch"],
            lr=v["algorithm.lr"],
            weight_decay=v["algorithm.weight_decay"],
            mixup_alpha=v["mixup.alpha"],
            adv_eta=v["adv.eta"],
            disc_weight=v["adv.disc_weight"],
            coral_weight=v["coral.weight"],
            margin=MarginConfig(
                gamma=v["margin.gamma"], top_k=v["margin.top_k"], denom_eps=v["margin.denom_eps"]
            ),
            margin_add_ce=v["margin.add_ce"],
            seed=seed,
        )


def parse_config_text(text: str, *, base_dir: str = ".") -> RunConfig:
    values = {}
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {i}: expected 'key = value', got '{stripped}'")
        key, raw = (p.strip() for p in stripped.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"line {i}: unknown config key '{key}'")
        if key in values:
            raise ConfigError(f"line {i}: duplicate key '{key}'")
        values[key] = _coerce(key, _SCHEMA[key][0], raw)

    for key, (tag, default) in _SCHEMA.items():
        if key not in values:
            if default is _REQUIRED:
                raise ConfigError(f"missing required config key '{key}'")
            values[key] = default

    if values["data.generator"] not in _GENERATORS:
        raise ConfigError(f"data.generator: unknown generator '{values['data.generator']}' (have {_GENERATORS})")
    if values["data.generator"] == "csv":
        path = values["data.csv_path"]
        if not path:
            raise ConfigError("data.csv_path is required when data.generator = csv")
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
            values["data.csv_path"] = path
        if not os.path.exists(path):
            raise ConfigError(f"data.csv_path: no such file '{path}'")
    return RunConfig(values)


def parse_config(path) -> RunConfig:
    with open(path) as f:
        return parse_config_text(f.read(), base_dir=os.path.dirname(os.path.abspath(path)))


def build_dataset(cfg: RunConfig) -> datagen.DomainDataset:
    """Materialize the dataset the data section describes."""
    v = cfg.values
    gen = v["data.generator"]
    seed = v["data.seed"]
    if gen == "rotated_moons":
        ds = datagen.gen_rotated_moons(v["data.n_per_domain"], v["data.rotations"], v["data.noise"], seed)
    elif gen == "gaussian":
        k, m = v["data.num_classes"], v["data.num_domains"]
        base = 2.0 * np.stack(
            [np.cos(2 * np.pi * np.arange(k) / k), np.sin(2 * np.pi * np.arange(k) / k)], axis=1
        )
        means = []
        for d in range(m):
            a = np.deg2rad(d * v["data.domain_shift"])
            rot = np.array([[np.cos(a), np.sin(a)], [-np.sin(a), np.cos(a)]])
            means.append(base @ rot)
        ds = datagen.gen_gaussian_domains(means, v["data.noise"], v["data.n_per_class"], seed)
    elif gen == "synthetic_har":
        ds = datagen.gen_synthetic_har(
            datagen.default_har_protos(v["data.num_classes"]),
            datagen.default_har_transforms(v["data.num_domains"], v["data.noise"], v["data.channels"]),
            v["data.n_per_class"],
            v["data.length"],
            v["data.channels"],
            seed,
        )
    else:
        ds = datagen.load_csv(v["data.csv_path"], datagen.CsvSchema(kind=v["data.csv_format"]))
    if v["data.window"]:
        ds = datagen.window_dataset(ds, datagen.WindowSpec(v["data.window_width"], v["data.window_stride"]))
    return ds


def arch_builder(cfg: RunConfig):
    """sources_dataset -> ArchSpec, honoring the model section."""
    v = cfg.values

    def build(sources: datagen.DomainDataset) -> ArchSpec:
        if len(sources.feature_shape) == 1:
            body = MlpBody(hidden=v["model.hidden"])
        else:
            body = Cnn1dBody(channels=v["model.channels"], kernel=v["model.kernel"], pool=v["model.pool"])
        return ArchSpec(
            in_shape=tuple(sources.feature_shape),
            num_classes=sources.num_classes,
            num_domains=sources.num_domains,
            body=body,
            bottleneck_dim=v["model.bottleneck_dim"],
        )

    return build


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    for key, (tag, _) in _SCHEMA.items():
        v = cfg.values[key]
        if tag in ("ints", "floats", "strs"):
            rendered = ",".join(repr(x) if tag == "floats" else str(x) for x in v)
        elif tag == "float":
            rendered = repr(v)
        elif tag == "bool":
            rendered = "true" if v else "false"
        else:
            rendered = str(v)
        lines.append(f"{key} = {rendered}")
    return "\n".join(lines) + "\n"
