"""Oracle-based evaluation: selection quality against the clean-label
oracle, re-label hit rates, per-subset loss histograms, selection timing,
and CE-vs-BCE accuracy curves. Also owns report serialization (CSV/JSON).
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines, nn
from .consensus import TAG_ORDER, decide_batch
from .nn import LossKind

SCHEMA_VERSION = 1

REPORT_COLUMNS = (
    ["epoch", "phase", "test_acc", "sel_precision", "sel_recall", "sel_f1",
     "gmm_f1", "relabel_topk_hit"]
    + [f"n_{t.value}" for t in TAG_ORDER]
    + [f"loss_{t.value}" for t in TAG_ORDER]
)
TIMING_COLUMNS = ["epoch", "sel_time_multiview_ns", "sel_time_gmm_ns"]


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


@dataclass
class ExperimentReport:
    """Per-epoch metric rows plus a summary; serializes deterministically.

    Wall-clock columns go to a separate timings CSV so the main report is
    byte-identical across repeated runs of the same config+seed.
    """

    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def add_row(self, **kwargs):
        self.rows.append(dict(kwargs))

    def column(self, name):
        return [row.get(name) for row in self.rows]

    def report_csv(self):
        lines = [",".join(REPORT_COLUMNS)]
        for row in self.rows:
            lines.append(",".join(_fmt(row.get(col, "")) for col in REPORT_COLUMNS))
        return "\n".join(lines) + "\n"

    def timings_csv(self):
        lines = [",".join(TIMING_COLUMNS)]
        for row in self.rows:
            lines.append(",".join(_fmt(row.get(col, 0)) for col in TIMING_COLUMNS))
        return "\n".join(lines) + "\n"

    def summary_json(self):
        payload = {"schema_version": SCHEMA_VERSION, **self.summary}
        return json.dumps(payload, indent=2, sort_keys=True, default=_fmt) + "\n"

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(self.report_csv())
        (out / "timings.csv").write_text(self.timings_csv())
        (out / "summary.json").write_text(self.summary_json())


def precision_recall_f1(predicted_clean, truly_clean):
    """Standard P/R/F1 for the predicted-clean set vs the oracle set."""
    predicted_clean = np.asarray(predicted_clean, dtype=bool)
    truly_clean = np.asarray(truly_clean, dtype=bool)
    tp = int(np.sum(predicted_clean & truly_clean))
    n_pred = int(predicted_clean.sum())
    n_true = int(truly_clean.sum())
    if n_pred == 0:
        warnings.warn("empty predicted-clean set; precision defined as 0")
        precision = 0.0
    else:
        precision = tp / n_pred
    recall = tp / n_true if n_true else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def selection_metrics(decisions, dataset):
    """P/R/F1 of the w=+1 set against the unflipped-label oracle."""
    if len(decisions) != dataset.n_train:
        raise ValueError("decisions must cover the train split")
    return precision_recall_f1(decisions.w == 1, dataset.clean_train_mask())


def relabel_hit_rate(r_model, dataset, k):
    """Fraction of train samples whose clean label is in r's top-K logits."""
    x_train = dataset.features[dataset.train_idx]
    clean = dataset.clean_labels[dataset.train_idx]
    logits = r_model.forward(x_train)
    order = np.argsort(-logits, axis=1, kind="stable")[:, :k]
    hits = (order == clean[:, None]).any(axis=1)
    return float(hits.mean())


def subset_loss_histogram(n_model, dataset, decisions, bins=50):
    """Per-tag CE-loss histograms over shared bin edges.

    Returns rows (tag, bin_lo, bin_hi, count); edges span
    [0, 99.5th percentile of all losses].
    """
    x_train, y_train = dataset.train_arrays()
    targets = nn.one_hot(y_train, dataset.num_classes)
    losses = nn.per_sample_losses(n_model, x_train, targets, LossKind.CE)
    hi = float(np.percentile(losses, 99.5))
    edges = np.linspace(0.0, max(hi, 1e-12), bins + 1)
    rows = []
    for tag in TAG_ORDER:
        mask = decisions.tag_mask(tag)
        counts, _ = np.histogram(losses[mask], bins=edges)
        for j in range(bins):
            rows.append((tag.value, float(edges[j]), float(edges[j + 1]), int(counts[j])))
    return rows


def tag_mean_losses(n_model, dataset, decisions):
    """Mean CE loss per subset tag (nan for empty tags)."""
    x_train, y_train = dataset.train_arrays()
    targets = nn.one_hot(y_train, dataset.num_classes)
    losses = nn.per_sample_losses(n_model, x_train, targets, LossKind.CE)
    out = {}
    for tag in TAG_ORDER:
        mask = decisions.tag_mask(tag)
        out[tag] = float(losses[mask].mean()) if mask.any() else float("nan")
    return out


def time_selection(method, *, losses=None, labels=None, n_logits=None,
                   r_logits=None, k=1, repeats=5):
    """Median wall-clock (ns) of one selection pass, warm cache.

    method "multiview" times decide_batch; "gmm" times fit_gmm_em plus
    small_loss_select.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if method == "multiview":
        if labels is None or n_logits is None or r_logits is None:
            raise ValueError("multiview timing needs labels, n_logits, r_logits")
        def call():
            decide_batch(labels, n_logits, r_logits, k)
        if np.asarray(labels).size == 0:
            return 0
    elif method == "gmm":
        if losses is None:
            raise ValueError("gmm timing needs losses")
        if np.asarray(losses).size < 10:
            return 0
        def call():
            baselines.gmm_clean_mask(losses)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            call()  # warm
    else:
        raise ValueError(f"unknown selection method: {method}")

    samples = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        call()  # warm cache
        for _ in range(max(repeats, 5)):
            t0 = time.perf_counter_ns()
            call()
            samples.append(time.perf_counter_ns() - t0)
    return int(np.median(samples))


def ce_vs_bce_curves(dataset, hidden_dims, epochs, seed=0, **train_kwargs):
    """Per-epoch test accuracy of a CE-trained and a BCE-trained model.

    Same architecture and seed for both runs; argmax prediction either way.
    """
    _, ce_accs = baselines.train_supervised(
        dataset, hidden_dims, epochs, kind=LossKind.CE, seed=seed, **train_kwargs
    )
    _, bce_accs = baselines.train_supervised(
        dataset, hidden_dims, epochs, kind=LossKind.BCE, seed=seed, **train_kwargs
    )
    return {"ce": ce_accs, "bce": bce_accs}
