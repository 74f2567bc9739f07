"""Synthetic multi-domain datasets, windowing, splits, and CSV ingestion.

Two CSV layouts are supported (documented in the README):

* flat:  ``domain,label,f0,f1,...`` — one sample per row, 1-D features.
* long:  ``domain,label,c,t,value`` — one scalar per row; a row with
  c == 0 and t == 0 starts a new [channels, length] sample (series are
  emitted channel-major, so every sample begins at (0, 0)).
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError

TWO_PI = 2.0 * np.pi


@dataclass
class Domain:
    domain_id: int
    name: str
    x: np.ndarray  # [N, *feature_shape]
    y: np.ndarray  # [N] int class indices


@dataclass
class DomainDataset:
    domains: list
    num_classes: int

    def __post_init__(self):
        shapes = {d.x.shape[1:] for d in self.domains}
        if len(shapes) > 1:
            raise DataError(f"domains disagree on feature shape: {sorted(map(str, shapes))}")
        for d in self.domains:
            if d.y.size and (d.y.min() < 0 or d.y.max() >= self.num_classes):
                raise DataError(f"domain '{d.name}' has labels outside [0, {self.num_classes})")

    @property
    def feature_shape(self):
        return self.domains[0].x.shape[1:]

    @property
    def num_domains(self):
        return len(self.domains)

    def domain_names(self):
        return [d.name for d in self.domains]


@dataclass(frozen=True)
class WindowSpec:
    width: int = 128
    stride: int = 64

    def __post_init__(self):
        if self.width < 1 or self.stride < 1:
            raise DataError(f"window width/stride must be >= 1, got {self.width}/{self.stride}")


# -- generators ---------------------------------------------------------------


def _rotate(points, angle_rad):
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return points @ np.array([[c, s], [-s, c]])


def gen_rotated_moons(n_per_domain: int, rotations_deg, noise: float, seed: int) -> DomainDataset:
    """Two-moons per domain, each domain rotated by its angle (degrees).

    Moons are centered before rotation; additive noise is clipped at
    5 sigma so coordinates stay within the documented |coord| <= 2 + 5*noise.
    """
    if n_per_domain < 2:
        raise DataError(f"n_per_domain must be >= 2, got {n_per_domain}")
    if len(rotations_deg) < 2:
        raise DataError("need at least 2 domain rotations")
    rng = np.random.default_rng(seed)
    domains = []
    n1 = n_per_domain // 2
    n0 = n_per_domain - n1
    for d, deg in enumerate(rotations_deg):
        t0 = rng.uniform(0.0, np.pi, n0)
        t1 = rng.uniform(0.0, np.pi, n1)
        outer = np.stack([np.cos(t0), np.sin(t0)], axis=1)
        inner = np.stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)], axis=1)
        pts = np.concatenate([outer, inner]) - np.array([0.5, 0.25])
        pts = _rotate(pts, np.deg2rad(deg))
        if noise > 0:
            pts = pts + np.clip(rng.normal(0.0, noise, pts.shape), -5.0 * noise, 5.0 * noise)
        labels = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
        domains.append(Domain(d, f"rot{deg:g}", pts, labels))
    return DomainDataset(domains, num_classes=2)


def gen_gaussian_domains(class_means, sigma: float, n_per_class: int, seed: int) -> DomainDataset:
    """Isotropic Gaussian clusters; class_means is [domain][class][dim]."""
    ks = {len(means) for means in class_means}
    if len(ks) != 1:
        raise DataError(f"domains disagree on class count: {sorted(ks)}")
    k = ks.pop()
    rng = np.random.default_rng(seed)
    domains = []
    for d, means in enumerate(class_means):
        xs, ys = [], []
        for c, mu in enumerate(means):
            mu = np.asarray(mu, dtype=np.float64)
            xs.append(mu + sigma * rng.standard_normal((n_per_class, mu.shape[0])))
            ys.append(np.full(n_per_class, c, dtype=np.int64))
        domains.append(Domain(d, f"g{d}", np.concatenate(xs), np.concatenate(ys)))
    return DomainDataset(domains, num_classes=k)


_WAVES = {
    "sine": np.sin,
    "square": lambda th: np.sign(np.sin(th)),
    "saw": lambda th: 2.0 * ((th / TWO_PI) % 1.0) - 1.0,
}


def gen_synthetic_har(
    class_protos,
    domain_transforms,
    n_per_class: int,
    length: int,
    channels: int,
    seed: int,
) -> DomainDataset:
    """Multichannel periodic series: class fixes the waveform, domain the nuisance.

    class_protos: list of (freq_cycles, amplitude, waveform-name).
    domain_transforms: list of (gain, phase_offset, noise_sigma); gain may
    be a scalar or a per-channel sequence.
    Each sample gets its own random phase, so same-class samples are
    identical up to phase when noise is zero and the transform is identity.
    """
    if len(class_protos) < 2 or len(domain_transforms) < 2:
        raise DataError("need >= 2 classes and >= 2 domains")
    rng = np.random.default_rng(seed)
    t = np.arange(length) / length
    chan_offset = TWO_PI * np.arange(channels) / channels
    domains = []
    for d, (gain, phase_off, noise_sigma) in enumerate(domain_transforms):
        gain = np.broadcast_to(np.asarray(gain, dtype=np.float64), (channels,))
        xs, ys = [], []
        for c, (freq, amp, wave) in enumerate(class_protos):
            if wave not in _WAVES:
                raise DataError(f"unknown waveform '{wave}' (have {sorted(_WAVES)})")
            phases = rng.uniform(0.0, TWO_PI, n_per_class)
            theta = (
                TWO_PI * freq * t[None, None, :]
                + phases[:, None, None]
                + chan_offset[None, :, None]
                + phase_off
            )
            sig = amp * _WAVES[wave](theta) * gain[None, :, None]
            if noise_sigma > 0:
                sig = sig + rng.normal(0.0, noise_sigma, sig.shape)
            xs.append(sig)
            ys.append(np.full(n_per_class, c, dtype=np.int64))
        domains.append(Domain(d, f"har{d}", np.concatenate(xs), np.concatenate(ys)))
    return DomainDataset(domains, num_classes=len(class_protos))


def default_har_protos(num_classes: int):
    """Class prototypes (freq cycles, amplitude, waveform) spread over waveforms."""
    waves = ("sine", "square", "saw")
    return [(2.0 + c, 1.0 + 0.5 * (c % 3), waves[c % len(waves)]) for c in range(num_classes)]


def default_har_transforms(num_domains: int, noise: float, channels: int):
    """Domain nuisances: alternating per-channel gains, phase shift, sensor noise."""
    out = []
    for d in range(num_domains):
        gain = 1.0 + 0.25 * d * np.where(np.arange(channels) % 2 == 0, 1.0, -0.5)
        out.append((gain, d * np.pi / 3.0, noise))
    return out


# -- preprocessing ------------------------------------------------------------


def sliding_window(series: np.ndarray, spec: WindowSpec) -> np.ndarray:
    """[channels, T] -> [num_windows, channels, width] of contiguous slices."""
    series = np.asarray(series)
    if series.ndim != 2:
        raise DataError(f"sliding_window expects [channels, T], got shape {series.shape}")
    t = series.shape[1]
    if t < spec.width:
        raise DataError(f"series of length {t} is shorter than window width {spec.width}")
    n = (t - spec.width) // spec.stride + 1
    return np.stack([series[:, i * spec.stride : i * spec.stride + spec.width] for i in range(n)])


def window_dataset(ds: DomainDataset, spec: WindowSpec) -> DomainDataset:
    """Window every [C, T] sample; labels repeat per window."""
    domains = []
    for d in ds.domains:
        xs, ys = [], []
        for i in range(d.x.shape[0]):
            w = sliding_window(d.x[i], spec)
            xs.append(w)
            ys.append(np.full(w.shape[0], d.y[i], dtype=np.int64))
        domains.append(Domain(d.domain_id, d.name, np.concatenate(xs), np.concatenate(ys)))
    return DomainDataset(domains, ds.num_classes)


def split_train_val(ds: DomainDataset, ratio: float = 0.8, seed: int = 0):
    """Per-domain stratified split; train gets floor(ratio * n) per class."""
    if not 0.0 < ratio < 1.0:
        raise DataError(f"split ratio must be in (0,1), got {ratio}")
    rng = np.random.default_rng(seed)
    tr_domains, va_domains = [], []
    for d in ds.domains:
        if d.x.shape[0] < 5:
            raise DataError(f"domain '{d.name}' has {d.x.shape[0]} samples; need >= 5 to split")
        tr_idx, va_idx = [], []
        for c in range(ds.num_classes):
            idx = np.flatnonzero(d.y == c)
            idx = idx[rng.permutation(idx.size)]
            cut = int(np.floor(ratio * idx.size))
            tr_idx.append(idx[:cut])
            va_idx.append(idx[cut:])
            if idx.size and cut == 0:
                warnings.warn(f"class {c} of domain '{d.name}' has no training samples after split")
            if idx.size and cut == idx.size:
                warnings.warn(f"class {c} of domain '{d.name}' has no validation samples after split")
        tr_idx = np.sort(np.concatenate(tr_idx))
        va_idx = np.sort(np.concatenate(va_idx))
        tr_domains.append(Domain(d.domain_id, d.name, d.x[tr_idx], d.y[tr_idx]))
        va_domains.append(Domain(d.domain_id, d.name, d.x[va_idx], d.y[va_idx]))
    return DomainDataset(tr_domains, ds.num_classes), DomainDataset(va_domains, ds.num_classes)


def loo_splits(ds: DomainDataset):
    """Yield (held_out_domain, sources_dataset, target_dataset) for each domain."""
    for i, target in enumerate(ds.domains):
        sources = [d for j, d in enumerate(ds.domains) if j != i]
        yield target.name, DomainDataset(sources, ds.num_classes), DomainDataset([target], ds.num_classes)


# -- csv ----------------------------------------------------------------------


@dataclass(frozen=True)
class CsvSchema:
    kind: str = "flat"  # "flat" or "long"
    domain_col: str = "domain"
    label_col: str = "label"

    def __post_init__(self):
        if self.kind not in ("flat", "long"):
            raise DataError(f"unknown csv schema kind '{self.kind}'")


def _parse_float(field: str, line_no: int) -> float:
    try:
        v = float(field)
    except ValueError:
        raise DataError(f"line {line_no}: non-numeric value '{field}'") from None
    if not np.isfinite(v):
        raise DataError(f"line {line_no}: non-finite value '{field}'")
    return v


def _parse_int(field: str, line_no: int) -> int:
    try:
        return int(field)
    except ValueError:
        raise DataError(f"line {line_no}: non-integer value '{field}'") from None


def save_csv(ds: DomainDataset, path, schema: CsvSchema = CsvSchema()) -> None:
    with open(path, "w") as f:
        if schema.kind == "flat":
            if len(ds.feature_shape) != 1:
                raise DataError(f"flat csv needs 1-d features, dataset has shape {ds.feature_shape}")
            cols = [f"f{i}" for i in range(ds.feature_shape[0])]
            f.write(",".join([schema.domain_col, schema.label_col] + cols) + "\n")
            for d in ds.domains:
                for x, y in zip(d.x, d.y):
                    f.write(f"{d.domain_id},{y}," + ",".join(repr(float(v)) for v in x) + "\n")
        else:
            if len(ds.feature_shape) != 2:
                raise DataError(f"long csv needs [C,T] samples, dataset has shape {ds.feature_shape}")
            f.write(",".join([schema.domain_col, schema.label_col, "c", "t", "value"]) + "\n")
            for d in ds.domains:
                for x, y in zip(d.x, d.y):
                    for c in range(x.shape[0]):
                        for t in range(x.shape[1]):
                            f.write(f"{d.domain_id},{y},{c},{t},{repr(float(x[c, t]))}\n")


def _group_rows(rows):
    """Group (domain, label, features) rows into per-domain dense-label arrays."""
    dom_ids = sorted({r[0] for r in rows})
    labels = sorted({r[1] for r in rows})
    label_map = {orig: i for i, orig in enumerate(labels)}
    domains = []
    for d in dom_ids:
        xs = [r[2] for r in rows if r[0] == d]
        ys = [label_map[r[1]] for r in rows if r[0] == d]
        domains.append(Domain(d, f"domain{d}", np.stack(xs), np.asarray(ys, dtype=np.int64)))
    return DomainDataset(domains, num_classes=len(labels))


def load_csv(path, schema: CsvSchema = CsvSchema()) -> DomainDataset:
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f]
    if not lines:
        raise DataError(f"{path}: empty file")
    header = lines[0].split(",")

    if schema.kind == "flat":
        if header[:2] != [schema.domain_col, schema.label_col]:
            raise DataError(
                f"line 1: expected header to start with '{schema.domain_col},{schema.label_col}', got {header[:2]}"
            )
        n_feat = len(header) - 2
        if n_feat < 1:
            raise DataError("line 1: flat csv needs at least one feature column")
        rows = []
        for i, ln in enumerate(lines[1:], start=2):
            if not ln:
                continue
            parts = ln.split(",")
            if len(parts) != len(header):
                raise DataError(f"line {i}: expected {len(header)} fields, got {len(parts)}")
            dom = _parse_int(parts[0], i)
            lab = _parse_int(parts[1], i)
            feats = np.array([_parse_float(p, i) for p in parts[2:]])
            rows.append((dom, lab, feats))
        if not rows:
            raise DataError(f"{path}: no data rows")
        return _group_rows(rows)

    expected = [schema.domain_col, schema.label_col, "c", "t", "value"]
    if header != expected:
        unknown = [h for h in header if h not in expected]
        raise DataError(f"line 1: expected header {expected}, got {header}" + (f" (unknown columns {unknown})" if unknown else ""))
    samples = []  # (dom, lab, {(c,t): v})
    current = None
    for i, ln in enumerate(lines[1:], start=2):
        if not ln:
            continue
        parts = ln.split(",")
        if len(parts) != 5:
            raise DataError(f"line {i}: expected 5 fields, got {len(parts)}")
        dom = _parse_int(parts[0], i)
        lab = _parse_int(parts[1], i)
        c = _parse_int(parts[2], i)
        t = _parse_int(parts[3], i)
        v = _parse_float(parts[4], i)
        if c == 0 and t == 0:
            current = (dom, lab, {})
            samples.append(current)
        if current is None:
            raise DataError(f"line {i}: series does not start at c=0,t=0")
        if (dom, lab) != current[:2]:
            raise DataError(f"line {i}: domain/label changed mid-sample")
        current[2][(c, t)] = v
    if not samples:
        raise DataError(f"{path}: no data rows")

    rows = []
    for dom, lab, cells in samples:
        cs = 1 + max(ct[0] for ct in cells)
        ts = 1 + max(ct[1] for ct in cells)
        if len(cells) != cs * ts:
            raise DataError(f"sample of domain {dom} label {lab}: ragged series ({len(cells)} cells for {cs}x{ts})")
        arr = np.empty((cs, ts))
        for (c, t), v in cells.items():
            arr[c, t] = v
        rows.append((dom, lab, arr))
    return _group_rows(rows)
