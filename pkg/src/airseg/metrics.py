"""Evaluation metrics and paired significance tests.

Overlap metrics (DSC, IoU, precision) come from voxel confusion counts;
tree metrics (TD, BD) measure how much of the ground-truth centerline and
how many of its branches the prediction covers.  The Wilcoxon signed-rank
test uses an exact subset-sum distribution for small untied samples and a
tie-corrected normal approximation otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sstats

from .errors import (
    AllZeroDifferences,
    DegenerateVariance,
    DimMismatch,
    EmptyTree,
    UndefinedMetric,
)
from .morphology import Connectivity, keep_largest_component
from .tree import AirwayTree
from .volume import BinaryMask


@dataclass
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class TestResult:
    statistic: float
    p_value: float
    method: str  # wilcoxon_exact | wilcoxon_normal | paired_t
    n_effective: int


def confusion(pred: BinaryMask, gt: BinaryMask) -> ConfusionCounts:
    if pred.dims != gt.dims:
        raise DimMismatch(f"pred dims {pred.dims} != gt dims {gt.dims}")
    p = pred.data
    g = gt.data
    tp = int((p & g).sum())
    fp = int((p & ~g).sum())
    fn = int((~p & g).sum())
    tn = int((~p & ~g).sum())
    return ConfusionCounts(tp, fp, fn, tn)


def dsc(c: ConfusionCounts) -> float:
    denom = 2 * c.tp + c.fp + c.fn
    if denom == 0:
        raise UndefinedMetric("DSC undefined: no foreground in pred or gt")
    return 2.0 * c.tp / denom


def iou(c: ConfusionCounts) -> float:
    denom = c.tp + c.fp + c.fn
    if denom == 0:
        raise UndefinedMetric("IoU undefined: no foreground in pred or gt")
    return c.tp / denom


def precision(c: ConfusionCounts) -> float:
    denom = c.tp + c.fp
    if denom == 0:
        raise UndefinedMetric("precision undefined: empty prediction")
    return c.tp / denom


def _tree_voxel_array(gt_tree: AirwayTree) -> np.ndarray:
    voxels = gt_tree.voxels()
    if not voxels:
        raise EmptyTree("ground-truth tree has no voxels")
    return np.array(sorted(voxels), dtype=np.int64)


def tree_detected_ratio(pred: BinaryMask, gt_tree: AirwayTree) -> float:
    """Fraction of ground-truth centerline voxels inside the prediction."""
    idx = _tree_voxel_array(gt_tree)
    hit = pred.data[idx[:, 0], idx[:, 1], idx[:, 2]]
    return float(hit.sum()) / len(idx)


def branch_detected_ratio(
    pred: BinaryMask,
    gt_tree: AirwayTree,
    threshold: float = 0.8,
    mode: str = "fraction",
) -> float:
    """Fraction of branches covered by the prediction.

    mode "fraction": a branch counts as detected when at least `threshold`
    of its path voxels lie inside pred.  mode "any_voxel": one covered voxel
    suffices (threshold ignored).
    """
    if mode not in ("fraction", "any_voxel"):
        raise ValueError(f"unknown BD mode {mode!r}")
    if mode == "fraction" and not 0.0 < threshold <= 1.0:
        raise ValueError("BD threshold must lie in (0, 1]")
    if not gt_tree.branches:
        raise EmptyTree("ground-truth tree has no branches")
    detected = 0
    for b in gt_tree.branches:
        idx = np.array(b.path, dtype=np.int64)
        hit = int(pred.data[idx[:, 0], idx[:, 1], idx[:, 2]].sum())
        if mode == "any_voxel":
            ok = hit >= 1
        else:
            ok = hit >= threshold * len(b.path)
        detected += int(ok)
    return detected / len(gt_tree.branches)


def evaluate_segmentation(
    pred: BinaryMask,
    gt: BinaryMask,
    gt_tree: AirwayTree,
    postprocess: bool = True,
    bd_threshold: float = 0.8,
) -> dict[str, float]:
    """DSC/IoU/precision/TD/BD with largest-component post-processing by default."""
    if postprocess:
        pred = keep_largest_component(pred, Connectivity.twentysix)
    c = confusion(pred, gt)
    try:
        d, i = dsc(c), iou(c)
    except UndefinedMetric:
        d = i = 1.0  # both empty: perfect agreement
    p = precision(c) if (c.tp + c.fp) > 0 else 0.0
    return {
        "dsc": d,
        "iou": i,
        "precision": p,
        "td": tree_detected_ratio(pred, gt_tree),
        "bd": branch_detected_ratio(pred, gt_tree, bd_threshold),
    }


# --- significance tests ---------------------------------------------------------


def _subset_sum_counts(ranks: np.ndarray) -> np.ndarray:
    """counts[s] = number of rank subsets with sum s (ranks are integers)."""
    total = int(ranks.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in ranks:
        r = int(r)
        nxt = counts.copy()
        nxt[r:] += counts[: len(counts) - r]
        counts = nxt
    return counts


def wilcoxon_signed_rank(pairs) -> TestResult:
    """Two-sided Wilcoxon signed-rank test on paired values.

    Zero differences are dropped.  With n <= 25 untied absolute differences
    the p-value is exact: the probability, over all 2^n sign assignments,
    that min(W+, W-) is at most the observed statistic.  Otherwise a normal
    approximation with tie correction and 0.5 continuity correction is used.
    """
    pairs = [(float(a), float(b)) for a, b in pairs]
    if not pairs:
        raise AllZeroDifferences("no pairs supplied")
    d = np.array([a - b for a, b in pairs])
    d = d[d != 0.0]
    n = len(d)
    if n == 0:
        raise AllZeroDifferences("all paired differences are zero")

    absd = np.abs(d)
    ranks = sstats.rankdata(absd)
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)
    has_ties = len(np.unique(absd)) != n

    if n <= 25 and not has_ties:
        int_ranks = np.rint(ranks).astype(np.int64)
        counts = _subset_sum_counts(int_ranks)
        total = int(int_ranks.sum())
        wi = int(round(w))
        low = counts[: wi + 1].sum()
        high = counts[total - wi :].sum()
        overlap = counts[wi] if total - wi <= wi else 0.0
        p = min(1.0, (low + high - overlap) / 2.0**n)
        return TestResult(w, float(p), "wilcoxon_exact", n)

    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(absd, return_counts=True)
    var -= float((tie_counts**3 - tie_counts).sum()) / 48.0
    if var <= 0:
        return TestResult(w, 1.0, "wilcoxon_normal", n)
    z = (w - mu + 0.5) / np.sqrt(var)
    p = min(1.0, 2.0 * float(sstats.norm.cdf(z)))
    return TestResult(w, p, "wilcoxon_normal", n)


def paired_t_test(pairs) -> TestResult:
    """Two-sided paired t-test; raises on degenerate difference variance."""
    pairs = [(float(a), float(b)) for a, b in pairs]
    if len(pairs) < 2:
        raise DegenerateVariance("paired t-test needs at least two pairs")
    d = np.array([a - b for a, b in pairs])
    n = len(d)
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        raise DegenerateVariance("paired differences have zero variance")
    t = float(d.mean() / (sd / np.sqrt(n)))
    p = 2.0 * float(sstats.t.sf(abs(t), n - 1))
    return TestResult(t, min(1.0, p), "paired_t", n)
