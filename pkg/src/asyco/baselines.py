"""Comparison machinery: 1-D two-component GMM for small-loss selection,
plain supervised training (CE or BCE), and the closed list of ablation
variants.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .consensus import SubsetTag
from .nn import LossKind, MlpModel, SgdMomentum


@dataclass
class Gmm1d:
    """Two-component Gaussian mixture over scalar losses."""

    means: np.ndarray
    variances: np.ndarray
    weights: np.ndarray
    no_separation: bool = False
    log_likelihoods: list = field(default_factory=list)

    def posteriors(self, x):
        """Responsibilities (N, 2); rows sum to 1."""
        x = np.asarray(x, dtype=float)[:, None]
        logp = (
            -0.5 * (x - self.means) ** 2 / self.variances
            - 0.5 * np.log(2.0 * np.pi * self.variances)
            + np.log(self.weights)
        )
        logp -= logp.max(axis=1, keepdims=True)
        p = np.exp(logp)
        return p / p.sum(axis=1, keepdims=True)

    @property
    def clean_component(self):
        """Index of the lower-mean component."""
        return int(np.argmin(self.means))


_VAR_FLOOR = 1e-6


def fit_gmm_em(losses, max_iters=100, tol=1e-6):
    """EM fit of a two-component 1-D GMM.

    Init: means at the 10th/90th percentiles, equal weights, shared
    variance. Log-likelihood is non-decreasing; stops on max_iters or
    improvement < tol. All-equal input returns a single effective
    component with no_separation set.
    """
    x = np.asarray(losses, dtype=float)
    if x.size < 10:
        raise ValueError(f"need at least 10 losses, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("losses must be finite")
    if np.ptp(x) == 0:
        m = float(x[0])
        return Gmm1d(
            means=np.array([m, m]),
            variances=np.array([_VAR_FLOOR, _VAR_FLOOR]),
            weights=np.array([0.5, 0.5]),
            no_separation=True,
        )

    means = np.percentile(x, [10.0, 90.0]).astype(float)
    variances = np.full(2, max(x.var(), _VAR_FLOOR))
    weights = np.full(2, 0.5)
    lls = []
    for _ in range(max_iters):
        xc = x[:, None]
        logp = (
            -0.5 * (xc - means) ** 2 / variances
            - 0.5 * np.log(2.0 * np.pi * variances)
            + np.log(weights)
        )
        shift = logp.max(axis=1, keepdims=True)
        tot = shift[:, 0] + np.log(np.exp(logp - shift).sum(axis=1))
        ll = float(tot.sum())
        resp = np.exp(logp - tot[:, None])

        nk = resp.sum(axis=0)
        weights = nk / x.size
        means = (resp * xc).sum(axis=0) / nk
        variances = np.maximum((resp * (xc - means) ** 2).sum(axis=0) / nk, _VAR_FLOOR)

        if lls and ll - lls[-1] < tol:
            lls.append(ll)
            break
        lls.append(ll)

    gmm = Gmm1d(means=means, variances=variances, weights=weights, log_likelihoods=lls)
    if abs(means[0] - means[1]) < 1e-9:
        gmm.no_separation = True
    return gmm


def small_loss_select(losses, gmm, threshold=0.5):
    """Clean mask: posterior of the lower-mean component above threshold."""
    if gmm.no_separation:
        warnings.warn("GMM found no separation; marking all samples clean")
        return np.ones(np.asarray(losses).size, dtype=bool)
    post = gmm.posteriors(losses)[:, gmm.clean_component]
    return post > threshold


def gmm_clean_mask(losses, max_iters=100, tol=1e-6, threshold=0.5):
    """fit + select in one call (refit from scratch every time)."""
    return small_loss_select(losses, fit_gmm_em(losses, max_iters, tol), threshold)


def train_supervised(dataset, hidden_dims, epochs, kind=LossKind.CE, lr=0.02,
                     momentum=0.9, weight_decay=5e-4, batch_size=128, seed=0):
    """Plain supervised loop on the noisy labels; returns (model, accs).

    accs is the per-epoch test accuracy of the argmax prediction
    (length == epochs; empty for epochs=0).
    """
    x_train, y_train = dataset.train_arrays()
    x_test, y_test = dataset.test_arrays()
    dims = [dataset.dim, *hidden_dims, dataset.num_classes]
    model = MlpModel.init(dims, seed=seed)
    opt = SgdMomentum(lr=lr, momentum=momentum, weight_decay=weight_decay)
    rng = np.random.default_rng(seed)
    targets = nn.one_hot(y_train, dataset.num_classes)

    accs = []
    for epoch in range(epochs):
        perm = rng.permutation(x_train.shape[0])
        for start in range(0, perm.size, batch_size):
            sel = perm[start : start + batch_size]
            try:
                _, grads = nn.loss_and_grad(model, x_train[sel], targets[sel], kind)
            except nn.DivergedError as err:
                raise nn.DivergedError(
                    f"{err} (epoch {epoch}, batch {start // batch_size})"
                ) from err
            opt.step(model, grads)
        pred = model.forward(x_test).argmax(axis=1)
        accs.append(float(np.mean(pred == y_test)))
    return model, accs


def train_plain_ce(dataset, hidden_dims, epochs, **kwargs):
    """The standard-CE baseline."""
    return train_supervised(dataset, hidden_dims, epochs, kind=LossKind.CE, **kwargs)


@dataclass(frozen=True)
class AblationSpec:
    """Decision-rule overrides applied inside the trainer.

    remap_w replaces the selection value for the listed tags; yhat_mode
    one of {"default", "tilde", "n"}; ref_loss/freeze_ref alter how the
    reference net trains.
    """

    name: str
    remap_w: tuple = ()  # tuple of (SubsetTag, w) pairs
    yhat_mode: str = "default"
    ref_loss: LossKind = LossKind.BCE
    freeze_ref: bool = False


_VARIANTS = {
    "original": AblationSpec("original"),
    "ry-noisy": AblationSpec("ry-noisy", remap_w=((SubsetTag.RY, 0),)),
    "u-noisy": AblationSpec("u-noisy", remap_w=((SubsetTag.UNMATCHED, 0),)),
    "u-clean": AblationSpec("u-clean", remap_w=((SubsetTag.UNMATCHED, 1),)),
    "small-loss-subsets": AblationSpec(
        # clean = Core u NY, everything else noisy
        "small-loss-subsets",
        remap_w=(
            (SubsetTag.CORE, 1),
            (SubsetTag.NY, 1),
            (SubsetTag.SIDE_CORE, 0),
            (SubsetTag.NR, 0),
            (SubsetTag.RY, 0),
            (SubsetTag.UNMATCHED, 0),
        ),
    ),
    "ref-ce": AblationSpec("ref-ce", ref_loss=LossKind.CE),
    "freeze-ref": AblationSpec("freeze-ref", freeze_ref=True),
    "yhat-tilde": AblationSpec("yhat-tilde", yhat_mode="tilde"),
    "yhat-n": AblationSpec("yhat-n", yhat_mode="n"),
}

# human-readable spellings accepted alongside the canonical slugs
_ALIASES = {
    "small-loss subsets": "small-loss-subsets",
    "small loss subsets": "small-loss-subsets",
    "frozen after warmup": "freeze-ref",
    "frozen-after-warmup": "freeze-ref",
    "ce": "ref-ce",
    "yhat=y_tilde": "yhat-tilde",
    "yhat=y_n": "yhat-n",
}

ALL_VARIANTS = [name for name in _VARIANTS if name != "original"]


def ablation_variants(name):
    """Resolve a variant name (canonical slug or alias) to its overrides."""
    key = name.strip().lower()
    key = _ALIASES.get(key, key)
    try:
        return _VARIANTS[key]
    except KeyError:
        raise ValueError(
            f"unknown ablation variant {name!r}; known: {sorted(_VARIANTS)}"
        ) from None
