"""Sample-scoring strategies and deterministic top-k selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyPool, EmptyVolume, KTooLarge
from .model import CriticParams
from .rng import SplitMix64
from .volume import ProbVolume


@dataclass
class QueryScore:
    sample_id: str
    uncertainty: float
    discriminative: float
    total: float

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "uncertainty": self.uncertainty,
            "discriminative": self.discriminative,
            "total": self.total,
        }


@dataclass
class WdScoreConfig:
    """Weights on the normalized L2/L1 uncertainty terms plus the selection
    parameter balancing the critic's discriminative score."""

    a: float = 0.5
    b: float = 0.5
    lam: float = 1.0

    def __post_init__(self):
        if self.a < 0 or self.b < 0 or self.a + self.b <= 0:
            raise ValueError("need a, b >= 0 with a + b > 0")
        if self.lam < 0:
            raise ValueError("selection parameter must be >= 0")


def _check_nonempty(probs: ProbVolume) -> np.ndarray:
    p = probs.data.astype(np.float64)
    if p.size == 0:
        raise EmptyVolume("probability volume has no voxels")
    return p


def score_least_confidence(probs: ProbVolume) -> float:
    """Mean of 1 - max(p, 1-p); lies in [0, 0.5]."""
    p = _check_nonempty(probs)
    return float(np.minimum(p, 1.0 - p).mean())


def score_entropy(probs: ProbVolume) -> float:
    """Mean of -p * log2(p) with the p = 0 term defined as 0."""
    p = _check_nonempty(probs)
    terms = np.where(p > 0.0, -p * np.log2(np.where(p > 0.0, p, 1.0)), 0.0)
    return float(terms.mean())


def score_random(sample_ids: list[str], rng: SplitMix64) -> list[QueryScore]:
    """Independent U(0,1) score per id, in id order, from the seeded stream."""
    if not sample_ids:
        raise EmptyPool("no sample ids to score")
    out = []
    for sid in sample_ids:
        u = rng.random()
        out.append(QueryScore(sid, u, 0.0, u))
    return out


def score_wd(
    probs: ProbVolume,
    feat: np.ndarray,
    critic: CriticParams,
    cfg: WdScoreConfig,
    sample_id: str = "",
) -> QueryScore:
    """Normalized-norm uncertainty minus the critic's discriminative score.

    With r(v) = min(p, 1-p), uncertainty = a * ||r||_2 / (0.5 sqrt(N))
    + b * ||r||_1 / (0.5 N): each norm is divided by its attainable upper
    bound so both terms lie in [0, 1].  total = uncertainty - lam * D(feat);
    a lower critic score means more dissimilar from the labeled pool.
    """
    p = _check_nonempty(probs)
    r = np.minimum(p, 1.0 - p).ravel()
    n = r.size
    l2 = float(np.linalg.norm(r)) / (0.5 * np.sqrt(n))
    l1 = float(np.abs(r).sum()) / (0.5 * n)
    uncertainty = cfg.a * l2 + cfg.b * l1
    discriminative = critic.forward(np.asarray(feat, dtype=np.float64))
    total = uncertainty - cfg.lam * discriminative
    return QueryScore(sample_id, uncertainty, discriminative, total)


def select_top_k(scores: list[QueryScore], k: int) -> list[str]:
    """Ids of the k largest totals, descending; ties broken by ascending id."""
    if k > len(scores):
        raise KTooLarge(f"k={k} exceeds pool of {len(scores)}")
    ranked = sorted(scores, key=lambda s: (-s.total, s.sample_id))
    return [s.sample_id for s in ranked[:k]]
