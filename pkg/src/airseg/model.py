"""Toy-scale networks: pooled-statistics feature extractor, a five-layer
critic trained with the Wasserstein + gradient-penalty objective, and a
voxelwise neighborhood segmenter.

All gradients are hand-derived backpropagation; there is no autodiff.
Training functions are pure with respect to (inputs, seed): the same seed
gives bit-identical parameters.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import losses
from .errors import (
    EmptyBatch,
    EmptyPatch,
    EmptyTrainingSet,
    MalformedHeader,
    ShapeMismatch,
    TruncatedData,
)
from .morphology import CenterlineMask
from .rng import SplitMix64
from .tree import AirwayTree
from .volume import BinaryMask, ImageVolume, ProbVolume, VolumeDims

FEATURE_LEN = 64
CRITIC_WIDTHS = (FEATURE_LEN, 32, 32, 16, 8, 1)
_LOGIT_CLIP = 36.0


# --- feature extractor --------------------------------------------------------


def _octant_stats(a: np.ndarray) -> list[float]:
    """mean/std/min/max per octant; halves overlap at odd splits so every
    octant is non-empty."""
    nx, ny, nz = a.shape
    cuts = [
        ((0, (nx + 1) // 2), (nx // 2, nx)),
        ((0, (ny + 1) // 2), (ny // 2, ny)),
        ((0, (nz + 1) // 2), (nz // 2, nz)),
    ]
    out: list[float] = []
    for xs in cuts[0]:
        for ys in cuts[1]:
            for zs in cuts[2]:
                sub = a[xs[0] : xs[1], ys[0] : ys[1], zs[0] : zs[1]]
                out.extend(
                    [
                        float(sub.mean()),
                        float(sub.std()),
                        float(sub.min()),
                        float(sub.max()),
                    ]
                )
    return out


def _downsample2(a: np.ndarray) -> np.ndarray:
    """2x mean pooling with edge replication at odd boundaries."""
    pads = [(0, s % 2) for s in a.shape]
    a = np.pad(a, pads, mode="edge")
    nx, ny, nz = a.shape
    return a.reshape(nx // 2, 2, ny // 2, 2, nz // 2, 2).mean(axis=(1, 3, 5))


def extract_features(img: ImageVolume) -> np.ndarray:
    """Deterministic 64-vector: per-octant stats at full and half scale."""
    a = img.data.astype(np.float64)
    if a.size == 0:
        raise EmptyPatch("cannot extract features from an empty patch")
    feats = _octant_stats(a) + _octant_stats(_downsample2(a))
    return np.array(feats, dtype=np.float64)


# --- critic -------------------------------------------------------------------


@dataclass
class CriticParams:
    """Five affine layers, ReLU after the first four, scalar output."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def init(cls, rng: SplitMix64, widths: tuple[int, ...] = CRITIC_WIDTHS):
        # deliberately small init: the fresh critic starts near zero output
        # with input-gradient norms well below 1, and the gradient penalty
        # then pulls norms up toward 1 as training proceeds
        ws, bs = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            scale = 0.3 * np.sqrt(2.0 / fan_in)
            w = np.array(
                [[rng.gauss() for _ in range(fan_in)] for _ in range(fan_out)]
            ) * scale
            ws.append(w)
            bs.append(np.zeros(fan_out))
        return cls(ws, bs)

    def _check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=np.float64)
        if f.shape != (self.weights[0].shape[1],):
            raise ShapeMismatch(
                f"feature length {f.shape} != critic input {self.weights[0].shape[1]}"
            )
        return f

    def _forward_trace(self, f: np.ndarray):
        acts = [f]
        masks = []
        a = f
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = w @ a + b
            if i < last:
                m = z > 0
                a = np.where(m, z, 0.0)
                masks.append(m)
            else:
                a = z
            acts.append(a)
        return acts, masks

    def forward(self, f: np.ndarray) -> float:
        acts, _ = self._forward_trace(self._check(f))
        return float(acts[-1][0])

    def forward_batch(self, feats: np.ndarray) -> np.ndarray:
        return np.array([self.forward(f) for f in np.atleast_2d(feats)])

    def input_gradient(self, f: np.ndarray) -> np.ndarray:
        """dD/df with the ReLU subgradient at exactly 0 taken as 0."""
        _, masks = self._forward_trace(self._check(f))
        delta = np.ones(1)
        for i in range(len(self.weights) - 1, 0, -1):
            delta = self.weights[i].T @ delta
            delta = delta * masks[i - 1]
        return self.weights[0].T @ delta

    def score_gradients(self, f: np.ndarray):
        """dD/dW_i, dD/db_i at one input (plain backprop to parameters)."""
        acts, masks = self._forward_trace(self._check(f))
        gw = [np.zeros_like(w) for w in self.weights]
        gb = [np.zeros_like(b) for b in self.biases]
        delta = np.ones(1)
        for i in range(len(self.weights) - 1, -1, -1):
            gw[i] = np.outer(delta, acts[i])
            gb[i] = delta.copy()
            if i > 0:
                delta = (self.weights[i].T @ delta) * masks[i - 1]
        return gw, gb

    def penalty_gradients(self, x: np.ndarray, max_norm: float):
        """Parameter gradients of (||dD/dx|| - 1)^2 at interpolate x.

        ReLU masks are treated as locally constant.  When the norm exceeds
        max_norm the clipped penalty is constant, so the gradient is zero.
        """
        _, masks = self._forward_trace(self._check(x))
        n_layers = len(self.weights)
        # d-chain: backprop deltas for the scalar output (no bias influence)
        d = [None] * n_layers
        delta = np.ones(1)
        d[n_layers - 1] = delta
        for i in range(n_layers - 1, 0, -1):
            delta = (self.weights[i].T @ delta) * masks[i - 1]
            d[i - 1] = delta
        g = self.weights[0].T @ d[0]
        norm = float(np.linalg.norm(g))
        gw = [np.zeros_like(w) for w in self.weights]
        gb = [np.zeros_like(b) for b in self.biases]
        value = (min(norm, max_norm) - 1.0) ** 2
        if norm == 0.0 or norm > max_norm:
            return value, gw, gb
        u = 2.0 * (norm - 1.0) * g / norm
        # e-chain: forward-propagate the norm sensitivity through the masks
        e = u
        for i in range(n_layers):
            gw[i] = np.outer(d[i], e)
            if i < n_layers - 1:
                e = (self.weights[i] @ e) * masks[i]
        return value, gw, gb


def critic_forward(p: CriticParams, f: np.ndarray) -> float:
    return p.forward(f)


def critic_input_gradient(p: CriticParams, f: np.ndarray) -> np.ndarray:
    return p.input_gradient(f)


def _batched_trace(p: CriticParams, feats: np.ndarray):
    acts = [feats]
    masks = []
    a = feats
    last = len(p.weights) - 1
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        z = a @ w.T + b
        if i < last:
            m = z > 0
            a = z * m
            masks.append(m)
        else:
            a = z
        acts.append(a)
    return acts, masks


def _batched_score_grads(p: CriticParams, feats: np.ndarray):
    """Mean dD/dtheta over a feature batch (batched backprop)."""
    n = feats.shape[0]
    acts, masks = _batched_trace(p, feats)
    gw = []
    gb = []
    delta = np.ones((n, 1))
    for i in range(len(p.weights) - 1, -1, -1):
        gw.append(delta.T @ acts[i] / n)
        gb.append(delta.mean(axis=0))
        if i > 0:
            delta = (delta @ p.weights[i]) * masks[i - 1]
    return gw[::-1], gb[::-1]


def _batched_penalty_grads(p: CriticParams, xs: np.ndarray, max_norm: float):
    """Mean d/dtheta of (||dD/dx|| - 1)^2 over interpolates (masks frozen;
    clipped or zero-gradient rows contribute nothing)."""
    n = xs.shape[0]
    _, masks = _batched_trace(p, xs)
    n_layers = len(p.weights)
    d_chain: list[np.ndarray] = [None] * n_layers
    delta = np.ones((n, 1))
    d_chain[n_layers - 1] = delta
    for i in range(n_layers - 1, 0, -1):
        delta = (delta @ p.weights[i]) * masks[i - 1]
        d_chain[i - 1] = delta
    g = d_chain[0] @ p.weights[0]
    norms = np.linalg.norm(g, axis=1)
    active = (norms > 0.0) & (norms <= max_norm)
    safe = np.where(norms > 0.0, norms, 1.0)
    u = np.where(active[:, None], 2.0 * (norms - 1.0)[:, None] * g / safe[:, None], 0.0)
    gw = []
    e = u
    for i in range(n_layers):
        gw.append(d_chain[i].T @ e / n)
        if i < n_layers - 1:
            e = (e @ p.weights[i].T) * masks[i]
    gb = [np.zeros_like(b) for b in p.biases]
    return gw, gb


# --- training configuration ----------------------------------------------------


@dataclass
class TrainConfig:
    learning_rate: float = 1.0
    critic_learning_rate: float = 0.01
    epochs: int = 2
    batch_size: int = 1
    seed: int = 0
    loss_mode: str = "eq5"
    weights: losses.LossWeights = field(default_factory=losses.LossWeights)
    critic_steps: int = 60
    max_norm: float = 10.0
    # multiplier on the gradient-penalty term inside the critic's training
    # objective; the reported wd loss value always uses coefficient 1
    penalty_weight: float = 10.0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.critic_learning_rate <= 0:
            raise ValueError("learning rates must be positive")
        if self.epochs < 0 or self.critic_steps < 0:
            raise ValueError("epochs and critic_steps must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.loss_mode not in ("eq3", "eq5"):
            raise ValueError(f"unknown loss mode {self.loss_mode!r}")
        if self.max_norm <= 0:
            raise ValueError("max_norm must be positive")


def train_critic(
    p: CriticParams,
    labeled_feats: np.ndarray,
    unlabeled_feats: np.ndarray,
    cfg: TrainConfig,
    rng: SplitMix64,
) -> CriticParams:
    """Gradient ascent on mean D(labeled) - mean D(unlabeled) - penalty."""
    lb = np.atleast_2d(np.asarray(labeled_feats, dtype=np.float64))
    ulb = np.atleast_2d(np.asarray(unlabeled_feats, dtype=np.float64))
    if lb.shape[0] == 0 or ulb.shape[0] == 0:
        raise EmptyBatch("train_critic needs non-empty feature sets")
    cur = CriticParams(
        [w.copy() for w in p.weights], [b.copy() for b in p.biases]
    )
    for _ in range(cfg.critic_steps):
        gw, gb = _batched_score_grads(cur, lb)
        uw, ub = _batched_score_grads(cur, ulb)
        xs, xt = losses._pair_up(ulb, lb)
        alphas = np.array([rng.random() for _ in range(len(xs))])
        interp = xs + alphas[:, None] * (xt - xs)
        pw, pb = _batched_penalty_grads(cur, interp, cfg.max_norm)
        lam = cfg.penalty_weight
        for i in range(len(gw)):
            cur.weights[i] += cfg.critic_learning_rate * (gw[i] - uw[i] - lam * pw[i])
            cur.biases[i] += cfg.critic_learning_rate * (gb[i] - ub[i] - lam * pb[i])
    return cur


# --- segmenter -----------------------------------------------------------------


@dataclass
class SegmenterParams:
    """Per-voxel classifier on the k^3 intensity neighborhood."""

    k: int
    w1: np.ndarray  # (k^3, hidden)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden,)
    b2: float

    @classmethod
    def init(cls, rng: SplitMix64, k: int = 5, hidden: int = 16, dtype=np.float64):
        n_in = k**3
        scale = np.sqrt(1.0 / n_in)
        w1 = np.array(
            [[rng.gauss() for _ in range(hidden)] for _ in range(n_in)]
        ) * scale
        w2 = np.array([rng.gauss() for _ in range(hidden)]) * np.sqrt(1.0 / hidden)
        return cls(
            k, w1.astype(dtype), np.zeros(hidden, dtype), w2.astype(dtype), 0.0
        )

    def copy(self) -> "SegmenterParams":
        return SegmenterParams(
            self.k, self.w1.copy(), self.b1.copy(), self.w2.copy(), float(self.b2)
        )

    @property
    def dtype(self):
        return self.w1.dtype


def _neighborhood_matrix(img: ImageVolume, k: int, dtype=np.float64) -> np.ndarray:
    """(n_voxels, k^3) intensity neighborhoods, clamped at the borders."""
    half = k // 2
    padded = np.pad(img.data.astype(dtype), half, mode="edge")
    win = sliding_window_view(padded, (k, k, k))
    return win.reshape(img.dims.count, k**3)


def _forward_probs(p: SegmenterParams, x: np.ndarray):
    z1 = x @ p.w1 + p.b1
    h = np.maximum(z1, 0.0)
    logit = h @ p.w2 + p.b2
    probs = 1.0 / (1.0 + np.exp(-np.clip(logit, -_LOGIT_CLIP, _LOGIT_CLIP)))
    return probs, h, z1


def segmenter_predict(p: SegmenterParams, img: ImageVolume) -> ProbVolume:
    """Per-voxel probabilities in (0, 1); deterministic."""
    x = _neighborhood_matrix(img, p.k, p.dtype)
    probs, _, _ = _forward_probs(p, x)
    return ProbVolume(img.dims, probs.reshape(img.dims.shape()))


@dataclass
class TrainSample:
    """One labeled training case for the segmenter."""

    image: ImageVolume
    gt_mask: BinaryMask
    gt_tree: AirwayTree
    centerline: CenterlineMask


def segmenter_param_gradients(
    p: SegmenterParams, x: np.ndarray, grad_p: np.ndarray, forward=None
):
    """Backprop a per-voxel dL/dp vector to parameter gradients.

    `forward` can carry a (probs, h, z1) triple from an earlier
    _forward_probs call to avoid recomputing it.
    """
    probs, h, z1 = _forward_probs(p, x) if forward is None else forward
    dlogit = grad_p.astype(p.dtype) * probs * (1.0 - probs)
    gw2 = h.T @ dlogit
    gb2 = float(dlogit.sum())
    dh = np.outer(dlogit, p.w2)
    dz1 = dh * (z1 > 0)
    gw1 = x.T @ dz1
    gb1 = dz1.sum(axis=0)
    return gw1, gb1, gw2, gb2


def train_segmenter(
    p: SegmenterParams,
    samples: list[TrainSample],
    cfg: TrainConfig,
    rng: SplitMix64,
    wd_value: float = 0.0,
) -> tuple[SegmenterParams, list[losses.LossBreakdown]]:
    """SGD on the combined loss; returns updated params and per-epoch curve.

    The recorded centerline component is the differentiable surrogate (the
    quantity actually optimized); wd_value is logged and weighted into the
    total but contributes no parameter gradient.  Sample order is fixed, so
    the run is a pure function of (inputs, seed).
    """
    if not samples:
        raise EmptyTrainingSet("train_segmenter needs at least one sample")
    cur = p.copy()
    curve: list[losses.LossBreakdown] = []
    w = cfg.weights
    for _ in range(cfg.epochs):
        sums = np.zeros(4)
        pending: list[tuple] = []
        for sample in samples:
            x = _neighborhood_matrix(sample.image, cur.k, cur.dtype)
            forward = _forward_probs(cur, x)
            pv = ProbVolume(
                sample.image.dims, forward[0].reshape(sample.image.dims.shape())
            )
            d_val, d_grad = losses.dice_loss(pv, sample.gt_mask)
            b_val, b_grad = losses.bce_loss(pv, sample.gt_mask)
            br_val, br_grad = losses.branch_loss(pv, sample.gt_tree, sample.gt_mask)
            cl_val, cl_grad = losses.centerline_surrogate(pv, sample.centerline)
            sums += (d_val, b_val, br_val, cl_val)
            if cfg.loss_mode == "eq5":
                grad = (
                    w.w1 * d_grad + w.w2 * b_grad + w.w3 * br_grad + w.w4 * cl_grad
                )
            else:
                grad = d_grad + b_grad + br_grad
            pending.append((x, grad.reshape(-1), forward))
            if len(pending) >= cfg.batch_size:
                _apply_step(cur, pending, cfg.learning_rate)
                pending = []
        if pending:
            _apply_step(cur, pending, cfg.learning_rate)
        mean = sums / len(samples)
        curve.append(
            losses.total_loss(
                mean[0], mean[1], mean[2], mean[3], wd_value, w, cfg.loss_mode
            )
        )
    return cur, curve


def _apply_step(p: SegmenterParams, batch: list[tuple], lr: float) -> None:
    gw1 = np.zeros_like(p.w1)
    gb1 = np.zeros_like(p.b1)
    gw2 = np.zeros_like(p.w2)
    gb2 = 0.0
    for x, grad_p, forward in batch:
        a, b, c, d = segmenter_param_gradients(p, x, grad_p, forward)
        gw1 += a / len(batch)
        gb1 += b / len(batch)
        gw2 += c / len(batch)
        gb2 += d / len(batch)
    p.w1 -= lr * gw1
    p.b1 -= lr * gb1
    p.w2 -= lr * gw2
    p.b2 -= lr * gb2


# --- checkpoints ---------------------------------------------------------------

_CKPT_MAGIC = "ckpt1"


def save_checkpoint(path: str | os.PathLike, arrays: dict[str, np.ndarray], meta: dict) -> None:
    """JSON header (shapes + metadata) followed by f32 little-endian payload."""
    names = sorted(arrays)
    header = {
        "magic": _CKPT_MAGIC,
        "arrays": [{"name": n, "shape": list(arrays[n].shape)} for n in names],
        "meta": meta,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":"), sort_keys=True).encode())
        fh.write(b"\n")
        for n in names:
            fh.write(np.ascontiguousarray(arrays[n], dtype="<f4").tobytes())


def load_checkpoint(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise MalformedHeader("missing checkpoint header")
    try:
        header = json.loads(raw[:nl].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedHeader(str(exc)) from exc
    if header.get("magic") != _CKPT_MAGIC:
        raise MalformedHeader("bad checkpoint magic")
    arrays: dict[str, np.ndarray] = {}
    off = nl + 1
    for spec in header["arrays"]:
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        nbytes = count * 4
        if off + nbytes > len(raw):
            raise TruncatedData(f"checkpoint payload short at {spec['name']}")
        arrays[spec["name"]] = np.frombuffer(
            raw[off : off + nbytes], dtype="<f4"
        ).reshape(spec["shape"])
        off += nbytes
    if off != len(raw):
        raise MalformedHeader("trailing bytes after checkpoint payload")
    return arrays, header["meta"]


def segmenter_to_arrays(p: SegmenterParams) -> dict[str, np.ndarray]:
    return {
        "w1": p.w1,
        "b1": p.b1,
        "w2": p.w2,
        "b2": np.array([p.b2]),
    }


def segmenter_from_arrays(arrays: dict[str, np.ndarray], k: int) -> SegmenterParams:
    return SegmenterParams(
        k,
        arrays["w1"].astype(np.float64),
        arrays["b1"].astype(np.float64),
        arrays["w2"].astype(np.float64),
        float(arrays["b2"][0]),
    )
