"""Multi-view consensus: label views, agreement degree, subset assignment,
and the per-sample selection (w) and re-labelling (y_hat) variables.

Each training sample carries three binary label views of length |Y|:
the training label (one-hot), the classification net's one-hot prediction,
and the reference net's top-K prediction. Their three pairwise dot products
determine a subset tag and, from it, how the sample is routed during
training.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum

import numpy as np


class ConsistencyError(RuntimeError):
    """An infeasible dot-product combination was produced (internal bug)."""


class SubsetTag(Enum):
    CORE = "core"
    SIDE_CORE = "side_core"
    NY = "ny"
    NR = "nr"
    RY = "ry"
    UNMATCHED = "unmatched"


# order fixed: integer codes used by DecisionBatch
TAG_ORDER = [
    SubsetTag.CORE,
    SubsetTag.SIDE_CORE,
    SubsetTag.NY,
    SubsetTag.NR,
    SubsetTag.RY,
    SubsetTag.UNMATCHED,
]
_TAG_CODE = {t: i for i, t in enumerate(TAG_ORDER)}

# (y~.yn, yn.yr, y~.yr) -> tag; the two missing combinations are infeasible
_TRIPLE_TO_TAG = {
    (1, 1, 1): SubsetTag.CORE,
    (0, 1, 1): SubsetTag.SIDE_CORE,
    (1, 0, 0): SubsetTag.NY,
    (0, 1, 0): SubsetTag.NR,
    (0, 0, 1): SubsetTag.RY,
    (0, 0, 0): SubsetTag.UNMATCHED,
}

# lookup indexed by a*4 + b*2 + c; -1 marks infeasible combinations
_CODE_LUT = np.full(8, -1, dtype=np.int8)
for (_a, _b, _c), _tag in _TRIPLE_TO_TAG.items():
    _CODE_LUT[_a * 4 + _b * 2 + _c] = _TAG_CODE[_tag]

_W_BY_TAG = {
    SubsetTag.CORE: 1,
    SubsetTag.SIDE_CORE: 1,
    SubsetTag.RY: 1,
    SubsetTag.NY: 0,
    SubsetTag.NR: 0,
    SubsetTag.UNMATCHED: -1,
}


@dataclass
class LabelViews:
    """The three binary label views for one sample."""

    y_tilde: np.ndarray
    y_n: np.ndarray
    y_r: np.ndarray

    def __post_init__(self):
        self.y_tilde = np.asarray(self.y_tilde, dtype=np.int64)
        self.y_n = np.asarray(self.y_n, dtype=np.int64)
        self.y_r = np.asarray(self.y_r, dtype=np.int64)

    def validate(self):
        n = self.y_tilde.size
        if self.y_n.size != n or self.y_r.size != n:
            raise ValueError("label views must all have length |Y|")
        for v in (self.y_tilde, self.y_n, self.y_r):
            if not np.all((v == 0) | (v == 1)):
                raise ValueError("label views must be binary")
        if self.y_tilde.sum() != 1 or self.y_n.sum() != 1:
            raise ValueError("y_tilde and y_n must be one-hot")
        k = int(self.y_r.sum())
        if not 1 <= k <= n:
            raise ValueError(f"y_r must have between 1 and |Y| ones, has {k}")


@dataclass
class SampleDecision:
    """Subset tag plus the derived training variables for one sample."""

    tag: SubsetTag
    ag: int
    w: int
    y_hat: np.ndarray


def one_hot_prediction(logits):
    """One-hot vector at the argmax; ties broken by lowest index."""
    z = np.asarray(logits, dtype=float)
    if z.size == 0:
        raise ValueError("empty logits")
    out = np.zeros(z.size, dtype=np.int64)
    out[int(np.argmax(z))] = 1
    return out


def top_k_prediction(logits, k):
    """Binary vector with ones at the K largest logits.

    Boundary ties broken by lowest index; top-K sets are nested in K.
    """
    z = np.asarray(logits, dtype=float)
    if not 1 <= k <= z.size:
        raise ValueError(f"k={k} out of range for {z.size} classes")
    order = np.argsort(-z, kind="stable")
    out = np.zeros(z.size, dtype=np.int64)
    out[order[:k]] = 1
    return out


def _dot_triple(views):
    views.validate()
    a = int(views.y_tilde @ views.y_n)
    b = int(views.y_n @ views.y_r)
    c = int(views.y_tilde @ views.y_r)
    return a, b, c


def agreement_degree(views):
    """Sum of the three pairwise dot products between views, in {0,1,2,3}."""
    return sum(_dot_triple(views))


def classify_subset(views):
    """Map the dot-product triple to its subset tag (see _TRIPLE_TO_TAG)."""
    triple = _dot_triple(views)
    tag = _TRIPLE_TO_TAG.get(triple)
    if tag is None:
        # y_tilde == y_n forces the last two dot products equal, so
        # (1,1,0)/(1,0,1) can only arise from a bug upstream
        raise ConsistencyError(f"infeasible dot-product triple {triple}")
    return tag


def selection_variable(views):
    """+1 clean, 0 noisy, -1 unmatched (discard)."""
    a, b, c = _dot_triple(views)
    if a + b + c == 0:
        return -1
    return 1 if c == 1 else 0


def relabel_variable(views):
    """Re-labelling target: y_n on SideCore, y_tilde + y_n on NR, else y_tilde."""
    tag = classify_subset(views)
    if tag is SubsetTag.SIDE_CORE:
        return views.y_n.copy()
    if tag is SubsetTag.NR:
        return views.y_tilde + views.y_n
    return views.y_tilde.copy()


class DecisionBatch(Sequence):
    """Array-backed sequence of SampleDecision.

    Stores tags/ag/w/y_hat as flat numpy arrays so batch decisions over
    tens of thousands of samples stay cheap; indexing materialises a
    SampleDecision on demand.
    """

    def __init__(self, tag_codes, ag, w, y_hat):
        self.tag_codes = tag_codes
        self.ag = ag
        self.w = w
        self.y_hat = y_hat

    def __len__(self):
        return self.tag_codes.size

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        return SampleDecision(
            tag=TAG_ORDER[self.tag_codes[i]],
            ag=int(self.ag[i]),
            w=int(self.w[i]),
            y_hat=self.y_hat[i].copy(),
        )

    def counts(self):
        """Subset sizes as a dict over all six tags."""
        binc = np.bincount(self.tag_codes, minlength=len(TAG_ORDER))
        return {tag: int(binc[_TAG_CODE[tag]]) for tag in TAG_ORDER}

    def tag_mask(self, tag):
        return self.tag_codes == _TAG_CODE[tag]

    def to_csv_rows(self, sample_ids, epoch):
        """Rows (sample_id, epoch, tag, ag, w, yhat indices joined by '|')."""
        rows = []
        for sid, code, ag, w, yh in zip(
            sample_ids, self.tag_codes, self.ag, self.w, self.y_hat
        ):
            idx = "|".join(str(j) for j in np.flatnonzero(yh))
            rows.append((int(sid), int(epoch), TAG_ORDER[code].value, int(ag), int(w), idx))
        return rows


def decide_batch(labels, n_logits, r_logits, k):
    """Vectorised per-sample decisions for a whole batch.

    labels: (B,) integer training labels; n_logits/r_logits: (B, |Y|).
    Equivalent to applying the per-sample operations independently.
    """
    labels = np.asarray(labels)
    n_logits = np.asarray(n_logits, dtype=float)
    r_logits = np.asarray(r_logits, dtype=float)
    if n_logits.ndim != 2 or n_logits.shape != r_logits.shape:
        raise ValueError(
            f"logit shapes {n_logits.shape} vs {r_logits.shape} must match and be 2-D"
        )
    b, num_classes = n_logits.shape
    if labels.shape != (b,):
        raise ValueError(f"labels shape {labels.shape}, expected ({b},)")
    if not 1 <= k <= num_classes:
        raise ValueError(f"k={k} out of range for {num_classes} classes")

    n_pred = n_logits.argmax(axis=1)
    r_mask = np.zeros((b, num_classes), dtype=np.int8)
    if k == 1:
        # argmax already breaks ties by lowest index
        r_mask[np.arange(b), r_logits.argmax(axis=1)] = 1
    else:
        # stable sort on negated logits = lowest-index tie-break, nested in k
        topk_cols = np.argsort(-r_logits, axis=1, kind="stable")[:, :k]
        np.put_along_axis(r_mask, topk_cols, 1, axis=1)

    rows = np.arange(b)
    a = (n_pred == labels).astype(np.int8)
    bb = r_mask[rows, n_pred]
    c = r_mask[rows, labels]
    codes = _CODE_LUT[a * 4 + bb * 2 + c]
    if np.any(codes < 0):
        raise ConsistencyError("infeasible dot-product triple in batch")

    ag = (a + bb + c).astype(np.int64)
    w = np.where(ag == 0, -1, np.where(c == 1, 1, 0)).astype(np.int64)

    y_hat = np.zeros((b, num_classes), dtype=np.int8)
    y_hat[rows, labels] = 1
    sc = codes == _TAG_CODE[SubsetTag.SIDE_CORE]
    y_hat[sc] = 0
    y_hat[rows[sc], n_pred[sc]] = 1
    nr = codes == _TAG_CODE[SubsetTag.NR]
    y_hat[rows[nr], n_pred[nr]] = 1  # second label on NR (disjoint from y_tilde)
    return DecisionBatch(codes, ag, w, y_hat)
