"""Synthetic classification data with known clean labels plus label-noise
injection (symmetric and instance-dependent).

Clean labels ride along for evaluation only; training code receives
features and noisy labels. Datasets round-trip through a single CSV.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import truncnorm


@dataclass
class NoisyDataset:
    features: np.ndarray      # (N, d)
    clean_labels: np.ndarray  # (N,) evaluation only
    noisy_labels: np.ndarray  # (N,) training labels
    num_classes: int
    train_idx: np.ndarray
    test_idx: np.ndarray
    noise_meta: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def n_train(self):
        return self.train_idx.size

    def train_arrays(self):
        """(features, noisy_labels) on the train split; no clean labels."""
        return self.features[self.train_idx], self.noisy_labels[self.train_idx]

    def test_arrays(self):
        return self.features[self.test_idx], self.clean_labels[self.test_idx]

    def clean_train_mask(self):
        """Oracle mask over the train split: True where the label is unflipped."""
        tr = self.train_idx
        return self.noisy_labels[tr] == self.clean_labels[tr]

    def realized_noise_rate(self):
        return float(np.mean(~self.clean_train_mask()))

    def train_feature_std(self):
        return self.features[self.train_idx].std(axis=0)

    def to_csv(self, path):
        """Columns: id, split, clean_label, noisy_label, f0..f{d-1}."""
        split = np.empty(self.features.shape[0], dtype=object)
        split[self.train_idx] = "train"
        split[self.test_idx] = "test"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["id", "split", "clean_label", "noisy_label"]
                + [f"f{j}" for j in range(self.dim)]
            )
            for i in range(self.features.shape[0]):
                writer.writerow(
                    [i, split[i], int(self.clean_labels[i]), int(self.noisy_labels[i])]
                    + [repr(float(v)) for v in self.features[i]]
                )

    @classmethod
    def from_csv(cls, path):
        ids, splits, clean, noisy, feats = [], [], [], [], []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            d = len(header) - 4
            for row in reader:
                ids.append(int(row[0]))
                splits.append(row[1])
                clean.append(int(row[2]))
                noisy.append(int(row[3]))
                feats.append([float(v) for v in row[4 : 4 + d]])
        order = np.argsort(ids)
        splits = np.asarray(splits, dtype=object)[order]
        clean = np.asarray(clean)[order]
        noisy = np.asarray(noisy)[order]
        feats = np.asarray(feats, dtype=float)[order]
        train_idx = np.flatnonzero(splits == "train")
        test_idx = np.flatnonzero(splits == "test")
        ds = cls(
            features=feats,
            clean_labels=clean,
            noisy_labels=noisy,
            num_classes=int(max(clean.max(), noisy.max())) + 1,
            train_idx=train_idx,
            test_idx=test_idx,
            noise_meta={"kind": "loaded"},
        )
        ds.noise_meta["realized_rate"] = ds.realized_noise_rate()
        return ds


def _spread_centers(num_classes, dim, separation, rng):
    """Random centers with pairwise distance >= separation (resampling)."""
    scale = max(separation, 1.0)
    centers = [rng.normal(0.0, scale, size=dim)]
    for _ in range(1, num_classes):
        for _attempt in range(10_000):
            cand = rng.normal(0.0, scale, size=dim)
            if all(np.linalg.norm(cand - c) >= separation for c in centers):
                centers.append(cand)
                break
        else:
            raise RuntimeError("could not place class centers; lower separation")
    return np.stack(centers)


def make_blobs(num_classes, per_class, dim, class_separation, seed, test_fraction=0.2):
    """Gaussian clusters with unit covariance; clean labels, noiseless.

    per_class counts samples per class before the train/test split;
    the split is stratified with test_fraction per class.
    """
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    if dim < 2:
        raise ValueError("need dim >= 2")
    if per_class <= 0 or not 0.0 < test_fraction < 1.0:
        raise ValueError("bad per_class or test_fraction")
    rng = np.random.default_rng(seed)
    centers = _spread_centers(num_classes, dim, class_separation, rng)

    feats, labels = [], []
    for c in range(num_classes):
        feats.append(rng.normal(0.0, 1.0, size=(per_class, dim)) + centers[c])
        labels.append(np.full(per_class, c))
    features = np.concatenate(feats)
    labels = np.concatenate(labels)

    n = features.shape[0]
    perm = rng.permutation(n)
    features, labels = features[perm], labels[perm]

    n_test_per_class = max(1, int(round(per_class * test_fraction)))
    test_parts = []
    for c in range(num_classes):
        cls_idx = np.flatnonzero(labels == c)
        test_parts.append(cls_idx[:n_test_per_class])
    test_idx = np.sort(np.concatenate(test_parts))
    mask = np.ones(n, dtype=bool)
    mask[test_idx] = False
    train_idx = np.flatnonzero(mask)

    return NoisyDataset(
        features=features,
        clean_labels=labels,
        noisy_labels=labels.copy(),
        num_classes=num_classes,
        train_idx=train_idx,
        test_idx=test_idx,
        noise_meta={
            "kind": "none",
            "target_rate": 0.0,
            "realized_rate": 0.0,
            "centers": centers,
            "seed": seed,
        },
    )


def inject_symmetric_noise(dataset, rate, seed):
    """Flip each train label with probability rate to a uniform other class."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"rate must be in [0, 1), got {rate}")
    rng = np.random.default_rng(seed)
    noisy = dataset.clean_labels.copy()
    tr = dataset.train_idx
    flip = rng.random(tr.size) < rate
    # uniform over the other classes: shift by 1..C-1 mod C
    shift = rng.integers(1, dataset.num_classes, size=tr.size)
    flipped = (dataset.clean_labels[tr] + shift) % dataset.num_classes
    noisy[tr[flip]] = flipped[flip]
    out = NoisyDataset(
        features=dataset.features,
        clean_labels=dataset.clean_labels,
        noisy_labels=noisy,
        num_classes=dataset.num_classes,
        train_idx=dataset.train_idx,
        test_idx=dataset.test_idx,
        noise_meta={"kind": "symmetric", "target_rate": rate, "seed": seed},
    )
    out.noise_meta["realized_rate"] = out.realized_noise_rate()
    return out


# inverse temperature of the flip-target softmax over standardised scores
_SCORE_SHARPNESS = 2.0


def inject_instance_dependent_noise(dataset, rate, seed):
    """Feature-dependent flips: per-sample flip probability from a truncated
    normal (mean rate, std 0.1, support [0,1]); flip targets sampled from a
    softmax over per-class random projection scores of the wrong classes.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"rate must be in [0, 1), got {rate}")
    noisy = dataset.clean_labels.copy()
    meta = {"kind": "instance", "target_rate": rate, "seed": seed}
    if rate == 0.0:
        out = NoisyDataset(
            features=dataset.features,
            clean_labels=dataset.clean_labels,
            noisy_labels=noisy,
            num_classes=dataset.num_classes,
            train_idx=dataset.train_idx,
            test_idx=dataset.test_idx,
            noise_meta=meta,
        )
        out.noise_meta["realized_rate"] = 0.0
        return out

    rng = np.random.default_rng(seed)
    tr = dataset.train_idx
    std = 0.1
    q = truncnorm.rvs(
        (0.0 - rate) / std, (1.0 - rate) / std, loc=rate, scale=std,
        size=tr.size, random_state=rng,
    )
    flip = rng.random(tr.size) < q

    projections = rng.normal(0.0, 1.0, size=(dataset.num_classes, dataset.dim))
    scores = dataset.features[tr] @ projections.T  # (n_train, C)
    wrong = scores.copy()
    wrong[np.arange(tr.size), dataset.clean_labels[tr]] = np.nan
    # standardise per sample so the softmax keeps mass on several wrong
    # classes instead of degenerating to a deterministic flip target
    mu = np.nanmean(wrong, axis=1, keepdims=True)
    sd = np.maximum(np.nanstd(wrong, axis=1, keepdims=True), 1e-12)
    z = _SCORE_SHARPNESS * (wrong - mu) / sd
    z = np.where(np.isnan(z), -np.inf, z)
    z = z - z.max(axis=1, keepdims=True)
    probs = np.exp(z)
    probs /= probs.sum(axis=1, keepdims=True)
    cum = probs.cumsum(axis=1)
    draws = rng.random(tr.size)
    targets = (draws[:, None] > cum).sum(axis=1)

    noisy[tr[flip]] = targets[flip]
    meta["projections"] = projections
    meta["flip_prob"] = q
    out = NoisyDataset(
        features=dataset.features,
        clean_labels=dataset.clean_labels,
        noisy_labels=noisy,
        num_classes=dataset.num_classes,
        train_idx=dataset.train_idx,
        test_idx=dataset.test_idx,
        noise_meta=meta,
    )
    out.noise_meta["realized_rate"] = out.realized_noise_rate()
    return out


def jitter(features, feature_std, rng, scale=0.1):
    """Additive Gaussian perturbation, sigma = scale * per-feature std."""
    sigma = scale * np.asarray(feature_std)
    return features + rng.normal(0.0, 1.0, size=features.shape) * sigma
