"""Result aggregation, PCA feature projection, and plot/table emission.

Plots are hand-emitted SVG (class -> color, domain -> marker); tables
come out as CSV plus an aligned text rendering. Everything here is
deterministic, including the PCA axis signs.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass
class ReportRow:
    algorithm: str
    held_out: str
    mean: float
    std: float | None  # present only with >= 2 seeds
    n_seeds: int


def aggregate_runs(final_records) -> list:
    """Group final run records by (algorithm, held-out domain); adds AVG rows."""
    groups: dict[tuple, list] = {}
    for rec in final_records:
        if rec.get("target_acc") is None:
            continue
        key = (rec["config"]["algorithm"], rec["target_domain"])
        groups.setdefault(key, []).append(float(rec["target_acc"]))
    rows = []
    per_alg: dict[str, list] = {}
    for (alg, dom), accs in sorted(groups.items()):
        std = float(np.std(accs, ddof=1)) if len(accs) >= 2 else None
        rows.append(ReportRow(alg, dom, float(np.mean(accs)), std, len(accs)))
        per_alg.setdefault(alg, []).append(float(np.mean(accs)))
    for alg, means in sorted(per_alg.items()):
        rows.append(ReportRow(alg, "AVG", float(np.mean(means)), None, len(means)))
    return rows


def table_text(rows) -> str:
    header = ("algorithm", "held_out", "mean_acc", "std", "seeds")
    cells = [header]
    for r in rows:
        cells.append(
            (r.algorithm, r.held_out, f"{r.mean:.4f}", "-" if r.std is None else f"{r.std:.4f}", str(r.n_seeds))
        )
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def write_table_csv(rows, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["algorithm", "held_out", "mean_acc", "std", "seeds"])
        for r in rows:
            w.writerow([r.algorithm, r.held_out, repr(r.mean), "" if r.std is None else repr(r.std), r.n_seeds])


# -- PCA projection -------------------------------------------------------------


def pca_project(features: np.ndarray) -> np.ndarray:
    """Top-2 principal components with a deterministic sign convention.

    Each component is flipped so its largest-magnitude loading is
    positive. All-identical inputs have no principal directions and
    raise.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 3 or x.shape[1] < 2:
        raise DataError(f"pca needs [N>=3, F>=2] features, got {x.shape}")
    centered = x - x.mean(axis=0)
    if not np.any(centered):
        raise DataError("pca: all points identical, projection undefined")
    cov = centered.T @ centered / (x.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:2]
    comps = evecs[:, order]
    for i in range(2):
        j = int(np.argmax(np.abs(comps[:, i])))
        if comps[j, i] < 0:
            comps[:, i] = -comps[:, i]
    return centered @ comps


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def _marker(x, y, domain, color):
    r = 4.0
    if domain % 4 == 0:  # circle
        return f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r}" fill="{color}" fill-opacity="0.75"/>'
    if domain % 4 == 1:  # square
        return (
            f'<rect x="{x - r:.2f}" y="{y - r:.2f}" width="{2 * r}" height="{2 * r}" '
            f'fill="{color}" fill-opacity="0.75"/>'
        )
    if domain % 4 == 2:  # triangle
        pts = f"{x:.2f},{y - r:.2f} {x - r:.2f},{y + r:.2f} {x + r:.2f},{y + r:.2f}"
        return f'<polygon points="{pts}" fill="{color}" fill-opacity="0.75"/>'
    pts = f"{x:.2f},{y - r:.2f} {x + r:.2f},{y:.2f} {x:.2f},{y + r:.2f} {x - r:.2f},{y:.2f}"  # diamond
    return f'<polygon points="{pts}" fill="{color}" fill-opacity="0.75"/>'


def write_scatter_svg(points, labels, domains, path, size: int = 480, pad: int = 24) -> None:
    points = np.asarray(points, dtype=np.float64)
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)

    def sx(v):
        return pad + (v - lo[0]) / span[0] * (size - 2 * pad)

    def sy(v):
        return size - pad - (v - lo[1]) / span[1] * (size - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    for p, lab, dom in zip(points, labels, domains):
        parts.append(_marker(sx(p[0]), sy(p[1]), int(dom), _PALETTE[int(lab) % len(_PALETTE)]))
    parts.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(parts) + "\n")


def write_points_csv(points, labels, domains, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["pc1", "pc2", "label", "domain"])
        for p, lab, dom in zip(points, labels, domains):
            w.writerow([repr(float(p[0])), repr(float(p[1])), int(lab), int(dom)])


def project_embeddings(features, labels, domains, out_prefix) -> np.ndarray:
    """PCA-project features and emit <prefix>.svg + <prefix>.csv; returns the points."""
    pts = pca_project(features)
    write_scatter_svg(pts, labels, domains, f"{out_prefix}.svg")
    write_points_csv(pts, labels, domains, f"{out_prefix}.csv")
    return pts
