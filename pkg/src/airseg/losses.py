"""Training loss components and their combinations.

Five components: soft Dice, binary cross entropy, branch overlap on the
ground-truth tree's voxels, centerline overlap, and the critic-based
Wasserstein term with its gradient penalty.  Every component that feeds
the segmenter returns an analytic per-voxel gradient alongside its value.

The centerline component is special: the reported value skeletonizes the
thresholded prediction (which is not differentiable), so training uses a
recall-style surrogate whose gradient lives on the ground-truth centerline
voxels; ``centerline_surrogate`` exposes that relaxation directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, EmptyBatch, EmptyCenterline, EmptyTree
from .morphology import CenterlineMask, skeletonize
from .tree import AirwayTree
from .volume import BinaryMask, ProbVolume, VolumeDims

DEFAULT_SMOOTH = 1e-6
BCE_CLAMP = 1e-7


@dataclass
class LossWeights:
    """Weights w1..w5 on (dice, bce, branch, centerline, wd)."""

    w1: float = 0.2
    w2: float = 0.2
    w3: float = 0.2
    w4: float = 0.2
    w5: float = 0.2

    def __post_init__(self):
        if min(self.w1, self.w2, self.w3, self.w4, self.w5) < 0:
            raise ValueError("loss weights must be non-negative")

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.w1, self.w2, self.w3, self.w4, self.w5)


@dataclass
class LossBreakdown:
    dice: float
    bce: float
    branch: float
    centerline: float
    wd: float
    total: float

    def to_dict(self) -> dict:
        return {
            "dice": self.dice,
            "bce": self.bce,
            "branch": self.branch,
            "centerline": self.centerline,
            "wd": self.wd,
            "total": self.total,
        }


def _check_dims(a: VolumeDims, b: VolumeDims) -> None:
    if a != b:
        raise DimMismatch(f"volume dims differ: {a} vs {b}")


def dice_loss(
    pred: ProbVolume, gt: BinaryMask, smooth: float = DEFAULT_SMOOTH
) -> tuple[float, np.ndarray]:
    """Soft Dice loss 1 - (2*sum(p*g)+s)/(sum(p)+sum(g)+s) and d/dp."""
    _check_dims(pred.dims, gt.dims)
    p = pred.data.astype(np.float64)
    g = gt.data.astype(np.float64)
    inter = float((p * g).sum())
    denom = float(p.sum() + g.sum() + smooth)
    value = 1.0 - (2.0 * inter + smooth) / denom
    grad = -(2.0 * g * denom - (2.0 * inter + smooth)) / denom**2
    return value, grad


def bce_loss(pred: ProbVolume, gt: BinaryMask) -> tuple[float, np.ndarray]:
    """Mean binary cross entropy with probabilities clamped to [eps, 1-eps]."""
    _check_dims(pred.dims, gt.dims)
    p = np.clip(pred.data.astype(np.float64), BCE_CLAMP, 1.0 - BCE_CLAMP)
    g = gt.data.astype(np.float64)
    n = p.size
    value = float(-(g * np.log(p) + (1.0 - g) * np.log(1.0 - p)).sum() / n)
    inside = (pred.data > BCE_CLAMP) & (pred.data < 1.0 - BCE_CLAMP)
    grad = np.where(inside, (-g / p + (1.0 - g) / (1.0 - p)) / n, 0.0)
    return value, grad


def branch_loss(
    pred: ProbVolume,
    gt_tree: AirwayTree,
    gt: BinaryMask,
    smooth: float = DEFAULT_SMOOTH,
) -> tuple[float, np.ndarray]:
    """Overlap loss restricted to the union of ground-truth branch paths."""
    _check_dims(pred.dims, gt.dims)
    voxels = gt_tree.voxels()
    if not voxels:
        raise EmptyTree("ground-truth tree has no voxels")
    idx = np.array(sorted(voxels), dtype=np.int64)
    p = pred.data.astype(np.float64)
    g = gt.data.astype(np.float64)
    pv = p[idx[:, 0], idx[:, 1], idx[:, 2]]
    gv = g[idx[:, 0], idx[:, 1], idx[:, 2]]
    denom = float(gv.sum() + smooth)
    value = 1.0 - (float((pv * gv).sum()) + smooth) / denom
    grad = np.zeros_like(p)
    grad[idx[:, 0], idx[:, 1], idx[:, 2]] = -gv / denom
    return value, grad


def centerline_surrogate(
    pred: ProbVolume, gt_cl: CenterlineMask, smooth: float = DEFAULT_SMOOTH
) -> tuple[float, np.ndarray]:
    """Differentiable centerline recall: 1 - (sum of p over cl + s)/(|cl| + s)."""
    _check_dims(pred.dims, gt_cl.dims)
    cl = gt_cl.data
    total = int(cl.sum())
    if total == 0:
        raise EmptyCenterline("ground-truth centerline is empty")
    p = pred.data.astype(np.float64)
    denom = total + smooth
    value = 1.0 - (float(p[cl].sum()) + smooth) / denom
    grad = np.where(cl, -1.0 / denom, 0.0)
    return value, grad


def centerline_loss(
    pred: ProbVolume,
    gt_cl: CenterlineMask,
    smooth: float = DEFAULT_SMOOTH,
    binarize_threshold: float = 0.5,
    mode: str = "machine",
) -> tuple[float, np.ndarray]:
    """Centerline overlap 1 - (sum(E_pred * E_GT)+s)/(sum(E_GT)+s).

    E_pred is the skeleton of the thresholded prediction; E_GT is the
    supplied centerline (machine-extracted or expert-corrected, selected by
    `mode`, which does not change the arithmetic).  The returned gradient is
    the surrogate's, since skeletonization is not differentiable.
    """
    if mode not in ("machine", "corrected"):
        raise ValueError(f"unknown centerline mode {mode!r}")
    if not 0.0 < binarize_threshold < 1.0:
        raise ValueError("binarize threshold must lie in (0, 1)")
    _check_dims(pred.dims, gt_cl.dims)
    cl = gt_cl.data
    total = int(cl.sum())
    if total == 0:
        raise EmptyCenterline("ground-truth centerline is empty")
    pred_mask = BinaryMask(pred.dims, pred.data >= binarize_threshold)
    e_pred = skeletonize(pred_mask).data
    value = 1.0 - (float((e_pred & cl).sum()) + smooth) / (total + smooth)
    _, grad = centerline_surrogate(pred, gt_cl, smooth)
    return value, grad


def wasserstein_loss(d_ulb, d_lb) -> float:
    """Mean critic score on unlabeled minus mean on labeled features."""
    d_ulb = np.asarray(d_ulb, dtype=np.float64)
    d_lb = np.asarray(d_lb, dtype=np.float64)
    if d_ulb.size == 0 or d_lb.size == 0:
        raise EmptyBatch("wasserstein_loss needs non-empty score lists")
    return float(d_ulb.mean() - d_lb.mean())


def _pair_up(h_s: np.ndarray, h_t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = max(len(h_s), len(h_t))
    si = np.arange(n) % len(h_s)
    ti = np.arange(n) % len(h_t)
    return h_s[si], h_t[ti]


def gradient_penalty(critic, h_s, h_t, max_norm: float = 10.0, rng=None) -> float:
    """Mean squared deviation of interpolate gradient norms from 1.

    For each (unlabeled, labeled) pair, formed by zipping with the shorter
    batch cycled, draw alpha ~ U(0,1), interpolate, take the critic's
    analytic input gradient, clip its norm to max_norm, and accumulate
    (||g|| - 1)^2.
    """
    h_s = np.atleast_2d(np.asarray(h_s, dtype=np.float64))
    h_t = np.atleast_2d(np.asarray(h_t, dtype=np.float64))
    if h_s.shape[0] == 0 or h_t.shape[0] == 0:
        raise EmptyBatch("gradient_penalty needs non-empty batches")
    if rng is None:
        raise ValueError("gradient_penalty requires a seeded rng")
    xs, xt = _pair_up(h_s, h_t)
    acc = 0.0
    for i in range(len(xs)):
        alpha = rng.random()
        x = xs[i] + alpha * (xt[i] - xs[i])
        g = critic.input_gradient(x)
        norm = float(np.linalg.norm(g))
        if norm > max_norm:
            norm = max_norm
        acc += (norm - 1.0) ** 2
    return acc / len(xs)


def wd_loss(critic, h_s, h_t, max_norm: float = 10.0, rng=None) -> float:
    """Wasserstein term plus gradient penalty (h_s unlabeled, h_t labeled)."""
    h_s = np.atleast_2d(np.asarray(h_s, dtype=np.float64))
    h_t = np.atleast_2d(np.asarray(h_t, dtype=np.float64))
    if h_s.shape[0] == 0 or h_t.shape[0] == 0:
        raise EmptyBatch("wd_loss needs non-empty batches")
    d_ulb = np.array([critic.forward(f) for f in h_s])
    d_lb = np.array([critic.forward(f) for f in h_t])
    return wasserstein_loss(d_ulb, d_lb) + gradient_penalty(
        critic, h_s, h_t, max_norm, rng
    )


def total_loss(
    dice: float,
    bce: float,
    branch: float,
    centerline: float,
    wd: float,
    weights: LossWeights | None = None,
    mode: str = "eq5",
) -> LossBreakdown:
    """Combine components: weighted sum (eq5) or unweighted without the
    centerline term (eq3)."""
    if mode == "eq5":
        w = weights if weights is not None else LossWeights()
        total = (
            w.w1 * dice + w.w2 * bce + w.w3 * branch + w.w4 * centerline + w.w5 * wd
        )
    elif mode == "eq3":
        total = dice + bce + branch + wd
    else:
        raise ValueError(f"unknown loss mode {mode!r}")
    return LossBreakdown(
        float(dice), float(bce), float(branch), float(centerline), float(wd),
        float(total),
    )
