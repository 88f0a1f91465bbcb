"""Training orchestrator: supervised warmup of both nets, then per-epoch
multi-view decisions driving the classification-net update (selective CE
plus a consistency term on noisy samples) and the reference-net update
(BCE against the iteratively refreshed re-label targets).
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import baselines, data, nn
from .baselines import ablation_variants
from .consensus import TAG_ORDER, DecisionBatch, decide_batch
from .metrics import ExperimentReport, precision_recall_f1
from .nn import LossKind, MlpModel, SgdMomentum


class TrainingDivergedError(RuntimeError):
    """NaN/Inf loss; carries epoch and batch index for diagnostics."""

    def __init__(self, message, epoch, batch_index):
        super().__init__(message)
        self.epoch = epoch
        self.batch_index = batch_index


@dataclass
class AsyCoConfig:
    total_epochs: int = 60
    warmup_epochs: int = 10
    k: int = 1
    lambda_u: float = 25.0
    sharpen_t: float = 0.5
    lr: float = 0.02
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 128
    seed: int = 0
    hidden_dims: tuple = (64, 64)
    ablation_variant: str | None = None
    consistency_mode: str = "jitter"  # "jitter" or "same-input"
    jitter_scale: float = 0.1
    lr_decay_epoch: int | None = None
    lr_decay_factor: float = 0.1

    def validate(self, num_classes=None):
        if not 0 <= self.warmup_epochs <= self.total_epochs:
            raise ValueError("need 0 <= warmup_epochs <= total_epochs")
        if self.k < 1 or (num_classes is not None and self.k > num_classes):
            raise ValueError(f"k={self.k} out of range")
        if self.lambda_u < 0:
            raise ValueError("lambda_u must be non-negative")
        if self.sharpen_t <= 0:
            raise ValueError("sharpen_t must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.consistency_mode not in ("jitter", "same-input"):
            raise ValueError(f"unknown consistency_mode {self.consistency_mode!r}")
        if self.ablation_variant is not None:
            ablation_variants(self.ablation_variant)

    def ablation(self):
        if self.ablation_variant is None:
            return ablation_variants("original")
        return ablation_variants(self.ablation_variant)


@dataclass
class EpochState:
    """Frozen per-epoch decision state plus derived bookkeeping."""

    epoch: int
    decisions: DecisionBatch
    w: np.ndarray          # effective selection values (after ablation)
    y_hat: np.ndarray      # effective re-label table (n_train, |Y|)
    counts: dict
    sel_metrics: tuple     # (precision, recall, f1)


def _make_models(config, dataset):
    dims = [dataset.dim, *config.hidden_dims, dataset.num_classes]
    n_model = MlpModel.init(dims, seed=config.seed)
    r_model = MlpModel.init(dims, seed=config.seed + 1)
    return n_model, r_model


def _opt(config):
    return SgdMomentum(
        lr=config.lr, momentum=config.momentum, weight_decay=config.weight_decay
    )


def apply_ablation(decisions, labels, n_pred, num_classes, spec):
    """Effective (w, y_hat) after the variant's decision-rule overrides."""
    w = decisions.w.copy()
    y_hat = decisions.y_hat.astype(float)
    for tag, value in spec.remap_w:
        w[decisions.tag_mask(tag)] = value
    if spec.yhat_mode == "tilde":
        y_hat = nn.one_hot(labels, num_classes)
    elif spec.yhat_mode == "n":
        y_hat = nn.one_hot(n_pred, num_classes)
    elif spec.yhat_mode != "default":
        raise ValueError(f"unknown yhat_mode {spec.yhat_mode!r}")
    return w, y_hat


def warmup(config, dataset):
    """Supervised warmup: n with CE, r with BCE, both on the noisy labels."""
    config.validate(dataset.num_classes)
    n_model, r_model = _make_models(config, dataset)
    n_opt, r_opt = _opt(config), _opt(config)
    batch_rng = np.random.default_rng([config.seed, 0])
    x_train, y_train = dataset.train_arrays()
    targets = nn.one_hot(y_train, dataset.num_classes)
    for epoch in range(config.warmup_epochs):
        _warmup_epoch(
            n_model, r_model, n_opt, r_opt, x_train, targets,
            config.batch_size, batch_rng, epoch,
        )
    return n_model, r_model


def _warmup_epoch(n_model, r_model, n_opt, r_opt, x_train, targets,
                  batch_size, batch_rng, epoch):
    perm = batch_rng.permutation(x_train.shape[0])
    for bi, start in enumerate(range(0, perm.size, batch_size)):
        sel = perm[start : start + batch_size]
        try:
            _, g_n = nn.loss_and_grad(n_model, x_train[sel], targets[sel], LossKind.CE)
            _, g_r = nn.loss_and_grad(r_model, x_train[sel], targets[sel], LossKind.BCE)
        except nn.DivergedError as err:
            raise TrainingDivergedError(str(err), epoch, bi) from err
        n_opt.step(n_model, g_n)
        r_opt.step(r_model, g_r)


def compute_epoch_state(epoch, n_model, r_model, dataset, config, spec):
    """Freeze decisions from the current model snapshots (eval mode,
    un-augmented inputs); returns (state, n_logits, r_logits, decide_ns)."""
    x_train, y_train = dataset.train_arrays()
    n_logits = n_model.forward(x_train)
    r_logits = r_model.forward(x_train)
    if not (np.isfinite(n_logits).all() and np.isfinite(r_logits).all()):
        raise TrainingDivergedError("non-finite logits at epoch end", epoch, -1)
    t0 = time.perf_counter_ns()
    decisions = decide_batch(y_train, n_logits, r_logits, config.k)
    decide_ns = time.perf_counter_ns() - t0
    w, y_hat = apply_ablation(
        decisions, y_train, n_logits.argmax(axis=1), dataset.num_classes, spec
    )
    state = EpochState(
        epoch=epoch,
        decisions=decisions,
        w=w,
        y_hat=y_hat,
        counts=decisions.counts(),
        sel_metrics=precision_recall_f1(w == 1, dataset.clean_train_mask()),
    )
    return state, n_logits, r_logits, decide_ns


def run_epoch_asyco(state, n_model, r_model, n_opt, r_opt, dataset, config,
                    batch_rng, jitter_rng, spec=None):
    """One post-warmup epoch with the frozen decisions in `state`.

    Classification net: CE over w=+1 samples with the training label plus
    lambda-weighted MSE consistency over w=0 samples (sharpened clean-input
    prediction as a fixed target vs the prediction on a perturbed input);
    w=-1 samples are excluded. Reference net: BCE against y_hat over all
    train samples (unless the variant freezes it).
    """
    if spec is None:
        spec = config.ablation()
    x_train, y_train = dataset.train_arrays()
    targets = nn.one_hot(y_train, dataset.num_classes)
    feat_std = dataset.train_feature_std()

    perm = batch_rng.permutation(x_train.shape[0])
    for bi, start in enumerate(range(0, perm.size, config.batch_size)):
        sel = perm[start : start + config.batch_size]
        w = state.w[sel]
        clean = sel[w == 1]
        noisy = sel[w == 0]
        grads = None
        try:
            if clean.size:
                _, grads = nn.loss_and_grad(
                    n_model, x_train[clean], targets[clean], LossKind.CE
                )
            if noisy.size and config.lambda_u > 0:
                probs = nn.softmax(n_model.forward(x_train[noisy]))
                sharp = nn.sharpen(probs, config.sharpen_t)  # fixed target
                if config.consistency_mode == "jitter":
                    x_in = data.jitter(
                        x_train[noisy], feat_std, jitter_rng, config.jitter_scale
                    )
                else:
                    x_in = x_train[noisy]
                _, g_mse = nn.loss_and_grad(n_model, x_in, sharp, LossKind.MSE)
                if grads is None:
                    grads = (
                        [config.lambda_u * g for g in g_mse[0]],
                        [config.lambda_u * g for g in g_mse[1]],
                    )
                else:
                    grads = (
                        [a + config.lambda_u * b for a, b in zip(grads[0], g_mse[0])],
                        [a + config.lambda_u * b for a, b in zip(grads[1], g_mse[1])],
                    )
        except nn.DivergedError as err:
            raise TrainingDivergedError(str(err), state.epoch, bi) from err
        if grads is not None:
            n_opt.step(n_model, grads)

    if not spec.freeze_ref:
        y_hat = state.y_hat
        if spec.ref_loss is LossKind.CE:
            # multi-label targets normalised to a distribution for CE
            y_hat = y_hat / y_hat.sum(axis=1, keepdims=True)
        perm = batch_rng.permutation(x_train.shape[0])
        for bi, start in enumerate(range(0, perm.size, config.batch_size)):
            sel = perm[start : start + config.batch_size]
            try:
                _, g_r = nn.loss_and_grad(
                    r_model, x_train[sel], y_hat[sel], spec.ref_loss
                )
            except nn.DivergedError as err:
                raise TrainingDivergedError(str(err), state.epoch, bi) from err
            r_opt.step(r_model, g_r)


def _epoch_report_row(epoch, phase, state, n_model, r_model, dataset, config,
                      n_logits, r_logits, decide_ns):
    x_train, y_train = dataset.train_arrays()
    x_test, y_test = dataset.test_arrays()
    targets = nn.one_hot(y_train, dataset.num_classes)
    losses, _ = nn._loss_and_dlogits(n_logits, targets, LossKind.CE)

    t0 = time.perf_counter_ns()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        gmm_mask = baselines.gmm_clean_mask(losses)
    gmm_ns = time.perf_counter_ns() - t0
    _, _, gmm_f1 = precision_recall_f1(gmm_mask, dataset.clean_train_mask())

    test_pred = n_model.forward(x_test).argmax(axis=1)
    order = np.argsort(-r_logits, axis=1, kind="stable")[:, : config.k]
    hit = float(
        (order == dataset.clean_labels[dataset.train_idx][:, None]).any(axis=1).mean()
    )

    precision, recall, f1 = state.sel_metrics
    row = {
        "epoch": epoch,
        "phase": phase,
        "test_acc": float(np.mean(test_pred == y_test)),
        "sel_precision": precision,
        "sel_recall": recall,
        "sel_f1": f1,
        "gmm_f1": gmm_f1,
        "relabel_topk_hit": hit,
        "sel_time_multiview_ns": decide_ns,
        "sel_time_gmm_ns": gmm_ns,
    }
    for tag in TAG_ORDER:
        row[f"n_{tag.value}"] = state.counts[tag]
        mask = state.decisions.tag_mask(tag)
        row[f"loss_{tag.value}"] = float(losses[mask].mean()) if mask.any() else float("nan")
    return row


def train_asyco(config, dataset):
    """Full run: warmup then consensus-driven epochs. Returns the final
    classification net and the per-epoch report (the reference net never
    touches the evaluation path)."""
    n_model, r_model, report, _ = train_asyco_models(config, dataset)
    return n_model, report


def train_asyco_models(config, dataset):
    """Like train_asyco but also returns the reference net and final state."""
    config.validate(dataset.num_classes)
    spec = config.ablation()
    n_model, r_model = _make_models(config, dataset)
    n_opt, r_opt = _opt(config), _opt(config)
    batch_rng = np.random.default_rng([config.seed, 0])
    jitter_rng = np.random.default_rng([config.seed, 1])
    x_train, y_train = dataset.train_arrays()
    targets = nn.one_hot(y_train, dataset.num_classes)

    report = ExperimentReport()
    state = None
    if config.warmup_epochs == 0 and config.total_epochs > 0:
        state, _, _, _ = compute_epoch_state(-1, n_model, r_model, dataset, config, spec)
    for epoch in range(config.total_epochs):
        if config.lr_decay_epoch is not None and epoch == config.lr_decay_epoch:
            n_opt.lr *= config.lr_decay_factor
            r_opt.lr *= config.lr_decay_factor
        if epoch < config.warmup_epochs:
            phase = "warmup"
            _warmup_epoch(
                n_model, r_model, n_opt, r_opt, x_train, targets,
                config.batch_size, batch_rng, epoch,
            )
        else:
            phase = "asyco"
            # decisions frozen at the end of the previous epoch
            run_epoch_asyco(
                replace(state, epoch=epoch), n_model, r_model, n_opt, r_opt,
                dataset, config, batch_rng, jitter_rng, spec,
            )
        state, n_logits, r_logits, decide_ns = compute_epoch_state(
            epoch, n_model, r_model, dataset, config, spec
        )
        report.add_row(
            **_epoch_report_row(
                epoch, phase, state, n_model, r_model, dataset, config,
                n_logits, r_logits, decide_ns,
            )
        )

    warmup_end = config.warmup_epochs - 1
    report.summary = {
        "config": _config_echo(config),
        "realized_noise_rate": dataset.realized_noise_rate(),
        "n_train": int(dataset.n_train),
        "num_classes": int(dataset.num_classes),
        "final_test_acc": report.rows[-1]["test_acc"] if report.rows else None,
        "best_test_acc": max((r["test_acc"] for r in report.rows), default=None),
        "final_sel_f1": report.rows[-1]["sel_f1"] if report.rows else None,
        "final_relabel_topk_hit": (
            report.rows[-1]["relabel_topk_hit"] if report.rows else None
        ),
        "warmup_relabel_topk_hit": (
            report.rows[warmup_end]["relabel_topk_hit"]
            if 0 <= warmup_end < len(report.rows)
            else None
        ),
    }
    return n_model, r_model, report, state


def _config_echo(config):
    echo = {}
    for key, value in vars(config).items():
        if isinstance(value, tuple):
            value = list(value)
        echo[key] = value
    return echo
