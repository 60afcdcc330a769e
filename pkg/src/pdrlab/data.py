"""Synthetic classification datasets and the CSV interchange format.

All generators are deterministic functions of their seed. Labels are small
ints; None marks an unlabeled example in memory and -1 marks it on disk.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .tensor import RandomSource

UNLABELED = -1  # on-disk sentinel only


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (n, d)
    labels: tuple  # int per example, None where unlabeled
    n_classes: int
    provenance: dict

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] != len(self.labels):
            raise ValueError("features and labels disagree on example count")
        self.features.setflags(write=False)

    @property
    def n_examples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def labeled_indices(self) -> np.ndarray:
        return np.array([i for i, y in enumerate(self.labels) if y is not None], dtype=np.int64)


def _moon_arcs(n: int):
    """Noiseless two-moons coordinates and labels, balanced classes."""
    n0 = (n + 1) // 2
    n1 = n - n0
    t0 = np.linspace(0.0, np.pi, n0)
    t1 = np.linspace(0.0, np.pi, max(n1, 1))[:n1]
    upper = np.column_stack([np.cos(t0), np.sin(t0)])
    lower = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    features = np.vstack([upper, lower])
    labels = np.array([0] * n0 + [1] * n1)
    return features, labels


def make_two_moons(n: int, noise_std: float, seed: int) -> Dataset:
    """Two interleaved half-circle arcs with isotropic Gaussian noise.

    The upper moon is the unit arc; the lower moon is the mirrored arc at
    the standard offsets (x shifted +1, y by -0.5), so the classes are not
    linearly separable. Class counts are ceil(n/2) and floor(n/2).
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    features, labels = _moon_arcs(n)
    if noise_std > 0:
        rng = RandomSource(seed).split(1)
        features = features + noise_std * rng.generator().standard_normal(features.shape)
    return Dataset(features, tuple(int(y) for y in labels), 2,
                   {"generator": "two-moons", "n": n, "noise_std": noise_std, "seed": seed})


def _simplex_means(k: int, dim: int, separation: float) -> np.ndarray:
    """k means with every pairwise distance equal to separation.

    Columns of the Helmert basis give a regular simplex with side sqrt(2)
    in k-1 dimensions; scale it and pad with zeros up to dim.
    """
    if dim < k - 1:
        raise ValueError(f"{k} equidistant means need at least {k - 1} dimensions, got {dim}")
    helmert = np.zeros((k - 1, k))
    for j in range(1, k):
        helmert[j - 1, :j] = 1.0
        helmert[j - 1, j] = -j
        helmert[j - 1] /= np.sqrt(j * (j + 1))
    means = np.zeros((k, dim))
    means[:, : k - 1] = helmert.T * (separation / np.sqrt(2.0))
    return means


def make_gaussian_mixture(n: int, k: int, dim: int, separation: float, seed: int) -> Dataset:
    """Unit-covariance Gaussian blobs at mutually equidistant means."""
    if k < 2 or dim < 1 or n < 1:
        raise ValueError("need n >= 1, k >= 2, dim >= 1")
    if separation < 0:
        raise ValueError("separation must be >= 0")
    means = _simplex_means(k, dim, separation)
    counts = [n // k + (1 if c < n % k else 0) for c in range(k)]
    labels = np.repeat(np.arange(k), counts)
    noise = RandomSource(seed).split(1).generator().standard_normal((n, dim))
    features = means[labels] + noise
    return Dataset(features, tuple(int(y) for y in labels), k,
                   {"generator": "gaussian-mixture", "n": n, "k": k, "dim": dim,
                    "separation": separation, "seed": seed})


def apply_domain_shift(ds: Dataset, angle: float, scale: float, seed: int) -> Dataset:
    """Rotate features by `angle` in a seeded random 2-plane, then scale.

    The map is linear and invertible (inverse: divide by scale, rotate by
    -angle in the same plane). angle=0, scale=1 returns the features
    unchanged bit for bit.
    """
    d = ds.n_features
    if d < 2:
        raise ValueError("domain shift needs at least 2 feature dimensions")
    if scale <= 0:
        raise ValueError("scale must be positive")
    rng = RandomSource(seed)
    u = rng.split(0).generator().standard_normal(d)
    u /= np.linalg.norm(u)
    v = rng.split(1).generator().standard_normal(d)
    v -= (v @ u) * u
    v /= np.linalg.norm(v)
    rot = (
        np.eye(d)
        + (np.cos(angle) - 1.0) * (np.outer(u, u) + np.outer(v, v))
        + np.sin(angle) * (np.outer(u, v) - np.outer(v, u))
    )
    features = scale * (ds.features @ rot.T)
    prov = dict(ds.provenance)
    prov["shift"] = {"angle": angle, "scale": scale, "seed": seed}
    return Dataset(features, ds.labels, ds.n_classes, prov)


def make_spurious_pair(n: int, core_noise: float, seed: int):
    """Train/eval pair with a planted shortcut feature.

    Both sets are two-moons in the first two (core) dimensions. A third
    dimension is +1/-1 perfectly aligned with the label at train time and
    perfectly inverted at eval time; marginal feature ranges match, so the
    sets are indistinguishable without reading the correlation.
    """
    base = RandomSource(seed)
    out = []
    for split_id, sign in (("train", 1.0), ("adversarial_eval", -1.0)):
        # identical arc layout, independent core noise per split
        feats, labels = _moon_arcs(n)
        if core_noise > 0:
            stream = base.split(10 if sign > 0 else 11)
            feats = feats + core_noise * stream.generator().standard_normal(feats.shape)
        spur = sign * (2.0 * labels - 1.0)  # +/-1, aligned with label on train
        features = np.column_stack([feats, spur])
        out.append(Dataset(features, tuple(int(y) for y in labels), 2,
                           {"generator": "bias-pair", "split": split_id, "n": n,
                            "core_noise": core_noise, "seed": seed}))
    return out[0], out[1]


def moons_core_rule(features: np.ndarray) -> np.ndarray:
    """Label by the nearest noiseless moon arc, using only the first two dims.

    This is the (near-)ideal rule on two-moons geometry; it ignores any
    extra feature dimensions.
    """
    pts = np.asarray(features, dtype=np.float64)[:, :2]
    t = np.linspace(0.0, np.pi, 512)
    upper = np.column_stack([np.cos(t), np.sin(t)])
    lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    d0 = np.min(np.sum((pts[:, None, :] - upper[None]) ** 2, axis=2), axis=1)
    d1 = np.min(np.sum((pts[:, None, :] - lower[None]) ** 2, axis=2), axis=1)
    return (d1 < d0).astype(np.int64)


def withhold_labels(ds: Dataset, fraction: float, seed: int) -> Dataset:
    """Keep labels on exactly round(fraction * n) examples, stratified.

    Per-class kept counts stay within one of the proportional share; which
    examples keep their label is a seeded choice within each class.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    if any(y is None for y in ds.labels):
        raise ValueError("withhold_labels expects a fully labeled dataset")
    n = ds.n_examples
    total_keep = int(round(fraction * n))
    by_class = {}
    for i, y in enumerate(ds.labels):
        by_class.setdefault(y, []).append(i)
    classes = sorted(by_class)
    floors = {c: int(np.floor(fraction * len(by_class[c]))) for c in classes}
    remainders = sorted(
        classes, key=lambda c: (-(fraction * len(by_class[c]) - floors[c]), c)
    )
    short = total_keep - sum(floors.values())
    keep_counts = dict(floors)
    for c in remainders[:short]:
        keep_counts[c] += 1
    rng = RandomSource(seed)
    kept = set()
    for c in classes:
        idx = np.asarray(by_class[c])
        order = rng.split(c).generator().permutation(len(idx))
        kept.update(idx[order[: keep_counts[c]]].tolist())
    labels = tuple(y if i in kept else None for i, y in enumerate(ds.labels))
    prov = dict(ds.provenance)
    prov["withheld"] = {"fraction": fraction, "seed": seed, "kept": total_keep}
    return Dataset(ds.features, labels, ds.n_classes, prov)


def write_csv(ds: Dataset, path) -> None:
    """Write features and labels; header f0..f{d-1},label; -1 = unlabeled."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{j}" for j in range(ds.n_features)] + ["label"])
        for row, y in zip(ds.features, ds.labels):
            writer.writerow([repr(float(v)) for v in row] + [UNLABELED if y is None else int(y)])


def read_csv(path) -> Dataset:
    """Read the CSV format back; malformed rows fail with their line number."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}:1: empty file") from None
        d = len(header) - 1
        if d < 1 or header != [f"f{j}" for j in range(d)] + ["label"]:
            raise ValueError(f"{path}:1: bad header {header!r}")
        feats, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != d + 1:
                raise ValueError(f"{path}:{lineno}: expected {d + 1} fields, got {len(row)}")
            try:
                feats.append([float(v) for v in row[:d]])
                y = int(row[d])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric field") from None
            if y < UNLABELED:
                raise ValueError(f"{path}:{lineno}: bad label {y}")
            labels.append(None if y == UNLABELED else y)
    if not feats:
        raise ValueError(f"{path}: no data rows")
    features = np.asarray(feats, dtype=np.float64)
    if not np.all(np.isfinite(features)):
        raise ValueError(f"{path}: non-finite feature values")
    n_classes = max((y for y in labels if y is not None), default=1) + 1
    return Dataset(features, tuple(labels), max(n_classes, 2), {"source": str(path)})


def relabel_unlabeled_fraction(ds: Dataset) -> float:
    labeled = sum(1 for y in ds.labels if y is not None)
    return 1.0 - labeled / ds.n_examples
