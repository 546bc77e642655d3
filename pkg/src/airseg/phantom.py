"""Synthetic branching-tube phantoms with known tree truth.

A phantom is a union of capsules along a random binary tree of segments
growing downward from near the top face.  Junctions sit at segment
endpoints, each bifurcation spawning two children, so a tree with j
junctions decomposes into exactly 2j + 1 skeleton branches.  Segments are
rejection-sampled so that non-adjacent tubes never touch and junctions
stay at least four voxels apart, which keeps skeleton parsing faithful to
the recorded branch count.

corrupt_centerline simulates machine-extraction flaws by attaching small
loop and stub artifacts to a clean centerline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyCenterline, SpecInfeasible
from .morphology import CenterlineMask, dilate, skeletonize
from .rng import SplitMix64, derive, normal_array
from .volume import BinaryMask, ImageVolume, VolumeDims


@dataclass
class PhantomSpec:
    """Tube-tree generation parameters.

    Phantom appearance is bimodal: most samples are bright thick tubes
    (`contrast`, `radius`), while a `hard_fraction` minority is dim and thin
    (`hard_contrast`, `hard_radius`), spanning a continuum of difficulty the
    way distal airways do.  A model trained only on easy samples mispredicts
    the hard minority, which is exactly the structure query strategies
    exploit.
    """

    dims: VolumeDims = field(default_factory=lambda: VolumeDims(32, 32, 32))
    branch_count: tuple[int, int] = (3, 5)
    radius: tuple[float, float] = (1.8, 2.2)
    noise: float = 0.06
    distal_dilation: bool = False
    contrast: tuple[float, float] = (0.55, 1.0)
    hard_contrast: tuple[float, float] = (0.26, 0.45)
    hard_radius: tuple[float, float] = (1.8, 2.2)
    hard_fraction: float = 0.35
    background: float = 0.12
    # brightness of the vessel-like structures painted along the machine
    # extractor's loop/stub artifacts; brighter than any airway so only a
    # non-monotone intensity response can reject them
    distractor_intensity: float = 1.6

    def to_dict(self) -> dict:
        return {
            "dims": [self.dims.nx, self.dims.ny, self.dims.nz],
            "branch_count": list(self.branch_count),
            "radius": list(self.radius),
            "noise": self.noise,
            "distal_dilation": self.distal_dilation,
            "contrast": list(self.contrast),
            "hard_contrast": list(self.hard_contrast),
            "hard_radius": list(self.hard_radius),
            "hard_fraction": self.hard_fraction,
            "background": self.background,
            "distractor_intensity": self.distractor_intensity,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        return cls(
            dims=VolumeDims(*d["dims"]),
            branch_count=tuple(d["branch_count"]),
            radius=tuple(d["radius"]),
            noise=float(d["noise"]),
            distal_dilation=bool(d["distal_dilation"]),
            contrast=tuple(d["contrast"]),
            hard_contrast=tuple(d.get("hard_contrast", (0.26, 0.45))),
            hard_radius=tuple(d.get("hard_radius", (1.8, 2.2))),
            hard_fraction=float(d.get("hard_fraction", 0.35)),
            background=float(d["background"]),
            distractor_intensity=float(d.get("distractor_intensity", 1.6)),
        )


@dataclass
class _Segment:
    start: np.ndarray
    end: np.ndarray
    radius: float
    parent: int  # -1 for root
    is_leaf: bool = True

    @property
    def direction(self) -> np.ndarray:
        v = self.end - self.start
        return v / np.linalg.norm(v)

    def points(self, step: float = 0.5) -> np.ndarray:
        n = max(2, int(np.ceil(np.linalg.norm(self.end - self.start) / step)) + 1)
        t = np.linspace(0.0, 1.0, n)[:, None]
        return self.start[None, :] + t * (self.end - self.start)[None, :]


def _feasible_counts(lo: int, hi: int) -> list[int]:
    """Binary-tree chain counts are 1 or odd >= 3; even targets are unreachable."""
    return [b for b in range(lo, hi + 1) if b == 1 or (b >= 3 and b % 2 == 1)]


def _rotate_about(v: np.ndarray, axis: np.ndarray, angle: float) -> np.ndarray:
    axis = axis / np.linalg.norm(axis)
    c, s = np.cos(angle), np.sin(angle)
    return v * c + np.cross(axis, v) * s + axis * np.dot(axis, v) * (1 - c)


def _orthonormal(v: np.ndarray) -> np.ndarray:
    probe = np.array([1.0, 0.0, 0.0]) if abs(v[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(v, probe)
    return u / np.linalg.norm(u)


class _TreeBuilder:
    def __init__(self, rng: SplitMix64, spec: PhantomSpec, radius: tuple[float, float]):
        self.rng = rng
        self.spec = spec
        self.radius = radius
        self.dims = spec.dims
        scale = min(self.dims.nx, self.dims.ny, self.dims.nz)
        self.len_min = max(5.0, scale * 0.16)
        self.len_max = max(6.5, scale * 0.28)
        self.segments: list[_Segment] = []

    def _in_bounds(self, p: np.ndarray, margin: float) -> bool:
        d = self.dims
        return (
            margin <= p[0] <= d.nx - 1 - margin
            and margin <= p[1] <= d.ny - 1 - margin
            and margin <= p[2] <= d.nz - 1 - margin
        )

    def _clear_of(
        self,
        cand: _Segment,
        others: list[_Segment],
        shared: list[bool],
        junction: np.ndarray,
    ) -> bool:
        """True when cand keeps tube-safe distance from every other segment.

        Segments meeting cand at the junction are allowed to merge inside a
        small junction ball; beyond it their axes must stay a voxel apart so
        thinning keeps one chain per segment.
        """
        pts = cand.points()
        for seg, is_shared in zip(others, shared):
            other = seg.points()
            if is_shared:
                cutoff = cand.radius + seg.radius + 2.5
                keep_p = np.linalg.norm(pts - junction[None, :], axis=1) >= cutoff
                keep_q = np.linalg.norm(other - junction[None, :], axis=1) >= cutoff
                if not keep_p.any() or not keep_q.any():
                    continue
                dist = np.linalg.norm(
                    pts[keep_p][:, None, :] - other[keep_q][None, :, :], axis=2
                )
                if dist.min() < cand.radius + seg.radius + 1.0:
                    return False
            else:
                dist = np.linalg.norm(pts[:, None, :] - other[None, :, :], axis=2)
                if dist.min() < cand.radius + seg.radius + 1.5:
                    return False
        return True

    def build(self, n_branches: int) -> list[_Segment]:
        rng = self.rng
        d = self.dims
        r0 = rng.uniform(*self.radius)
        margin = r0 + 2.0
        for _ in range(40):
            start = np.array(
                [
                    d.nx / 2 + rng.uniform(-d.nx * 0.1, d.nx * 0.1),
                    d.ny / 2 + rng.uniform(-d.ny * 0.1, d.ny * 0.1),
                    d.nz - 1 - margin,
                ]
            )
            direction = np.array(
                [rng.uniform(-0.25, 0.25), rng.uniform(-0.25, 0.25), -1.0]
            )
            direction /= np.linalg.norm(direction)
            length = rng.uniform(self.len_min, self.len_max)
            end = start + direction * length
            if self._in_bounds(end, margin):
                self.segments = [_Segment(start, end, r0, -1)]
                break
        else:
            raise SpecInfeasible("could not place the root tube")

        tips = [0]
        while len(self.segments) < n_branches:
            if not tips:
                raise SpecInfeasible(
                    f"could not place {n_branches} branches in {d.shape()}"
                )
            parent_idx = tips.pop(0)
            children = self._try_split(parent_idx)
            if children is None:
                continue  # this tip is exhausted; try the next one
            self.segments[parent_idx].is_leaf = False
            tips.extend(children)
        return self.segments

    def _try_split(self, parent_idx: int) -> list[int] | None:
        rng = self.rng
        parent = self.segments[parent_idx]
        junction = parent.end
        pdir = parent.direction
        parent_len = float(np.linalg.norm(parent.end - parent.start))
        child_r = max(self.radius[0] * 0.75, parent.radius * 0.9)
        child_len_hi = max(self.len_min + 0.5, parent_len * 0.9)
        margin = child_r + 1.5
        for _ in range(80):
            u = _orthonormal(pdir)
            u = _rotate_about(u, pdir, rng.uniform(0.0, 2 * np.pi))
            theta1 = rng.uniform(0.5, 1.0)
            theta2 = rng.uniform(0.5, 1.0)
            dirs = [_rotate_about(pdir, u, theta1), _rotate_about(pdir, u, -theta2)]
            if any(cd[2] > -0.05 for cd in dirs):
                continue  # keep the tree flowing downward
            made: list[_Segment] = []
            ok = True
            for cd in dirs:
                length = rng.uniform(self.len_min, child_len_hi)
                end = junction + cd * length
                cand = _Segment(junction.copy(), end, child_r, parent_idx)
                others = self.segments + made
                shared = [
                    i == parent_idx or seg.parent == parent_idx
                    for i, seg in enumerate(self.segments)
                ] + [True] * len(made)
                if not self._in_bounds(end, margin) or not self._clear_of(
                    cand, others, shared, junction
                ):
                    ok = False
                    break
                made.append(cand)
            if ok and len(made) == 2:
                base = len(self.segments)
                self.segments.extend(made)
                return [base, base + 1]
        return None


def _rasterize(segments: list[_Segment], dims: VolumeDims, distal: bool) -> np.ndarray:
    mask = np.zeros(dims.shape(), dtype=bool)
    for seg in segments:
        r_start = seg.radius
        r_end = seg.radius * (1.8 if (distal and seg.is_leaf) else 1.0)
        r_max = max(r_start, r_end)
        lo = np.maximum(np.floor(np.minimum(seg.start, seg.end) - r_max - 1), 0)
        hi = np.minimum(
            np.ceil(np.maximum(seg.start, seg.end) + r_max + 1),
            np.array(dims.shape()) - 1,
        )
        lo = lo.astype(int)
        hi = hi.astype(int)
        xs = np.arange(lo[0], hi[0] + 1)
        ys = np.arange(lo[1], hi[1] + 1)
        zs = np.arange(lo[2], hi[2] + 1)
        gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
        pts = np.stack([gx, gy, gz], axis=-1).astype(np.float64)
        ab = seg.end - seg.start
        denom = float(ab @ ab)
        t = np.clip(((pts - seg.start) @ ab) / denom, 0.0, 1.0)
        closest = seg.start + t[..., None] * ab
        dist = np.linalg.norm(pts - closest, axis=-1)
        radius_at = r_start + (r_end - r_start) * t
        mask[lo[0] : hi[0] + 1, lo[1] : hi[1] + 1, lo[2] : hi[2] + 1] |= (
            dist <= radius_at
        )
    return mask


@dataclass
class PhantomSample:
    image: ImageVolume
    gt_mask: BinaryMask
    branch_count: int
    contrast: float
    clean_centerline: CenterlineMask
    machine_centerline: CenterlineMask


def generate_phantom(seed: int, spec: PhantomSpec) -> PhantomSample:
    """Deterministic phantom with its clean and machine-extracted centerlines.

    The image is background plus contrast on the tube mask plus Gaussian
    noise; contrast is drawn per phantom from the easy or hard range.  The
    machine centerline is the clean skeleton passed through
    corrupt_centerline, and bright vessel-like structures are painted into
    the image along the corruption's artifacts: the simulated extractor was
    fooled by structures that really are in the image, so training on
    machine centerlines teaches a model to follow them while expert
    correction teaches it to reject them.
    """
    d = spec.dims
    if min(d.nx, d.ny, d.nz) < 16:
        raise SpecInfeasible("phantom dims must be at least 16^3")
    lo, hi = spec.branch_count
    feasible = _feasible_counts(lo, hi)
    if not feasible:
        raise SpecInfeasible(
            f"no binary-tree branch count in range [{lo}, {hi}] "
            "(reachable counts are 1 and odd numbers >= 3)"
        )
    rng = SplitMix64(derive(seed, 101))
    target = feasible[rng.randint(len(feasible))]
    hard = rng.random() < spec.hard_fraction
    contrast = rng.uniform(*(spec.hard_contrast if hard else spec.contrast))
    radius = spec.hard_radius if hard else spec.radius
    segments = None
    last_err: SpecInfeasible | None = None
    for _ in range(6):
        try:
            segments = _TreeBuilder(rng, spec, radius).build(target)
            break
        except SpecInfeasible as exc:
            last_err = exc
    if segments is None:
        raise last_err if last_err is not None else SpecInfeasible("placement failed")
    gt_data = _rasterize(segments, d, spec.distal_dilation)
    gt = BinaryMask(d, gt_data)

    clean = skeletonize(gt)
    machine = corrupt_centerline(clean, derive(seed, 5))
    artifacts = BinaryMask(d, machine.data & ~clean.data)
    artifact_body = dilate(artifacts).data

    noise = normal_array(derive(seed, 102), d.count).reshape(d.shape())
    structures = np.maximum(
        contrast * gt_data.astype(np.float64),
        spec.distractor_intensity * artifact_body.astype(np.float64),
    )
    img = spec.background + structures + spec.noise * noise
    image = ImageVolume(d, (1.0, 1.0, 1.0), img.astype(np.float32))
    return PhantomSample(image, gt, len(segments), contrast, clean, machine)


_AXIS_PAIRS = [(0, 1), (0, 2), (1, 2)]


def corrupt_centerline(cl: CenterlineMask, seed: int) -> CenterlineMask:
    """Attach 1-3 loop/stub artifacts to a centerline (output is a superset)."""
    coords = sorted(map(tuple, np.argwhere(cl.data).tolist()))
    if not coords:
        raise EmptyCenterline("cannot corrupt an empty centerline")
    rng = SplitMix64(derive(seed, 707))
    data = cl.data.copy()
    dims = cl.dims
    n_artifacts = 1 + rng.randint(3)
    for _ in range(n_artifacts):
        v = np.array(coords[rng.randint(len(coords))], dtype=np.float64)
        if rng.random() < 0.75:
            added = _add_loop(data, dims, v, rng)
            if added:
                continue
        _add_stub(data, dims, v, rng)
    return CenterlineMask(dims, data)


def _add_loop(data: np.ndarray, dims: VolumeDims, v: np.ndarray, rng) -> bool:
    radius = 3 + rng.randint(2)
    ax1, ax2 = _AXIS_PAIRS[rng.randint(3)]
    e1 = np.zeros(3)
    e1[ax1] = 1.0
    e2 = np.zeros(3)
    e2[ax2] = 1.0
    center = v + radius * e1
    for a in (ax1, ax2):
        if center[a] - radius < 0 or center[a] + radius > dims.shape()[a] - 1:
            return False
    thetas = np.linspace(0.0, 2 * np.pi, 8 * radius, endpoint=False)
    for t in thetas:
        p = center + radius * (np.cos(t) * e1 + np.sin(t) * e2)
        x, y, z = np.rint(p).astype(int)
        if dims.contains(x, y, z):
            data[x, y, z] = True
    return True


def _add_stub(data: np.ndarray, dims: VolumeDims, v: np.ndarray, rng) -> None:
    d = np.array(
        [rng.randint(3) - 1, rng.randint(3) - 1, rng.randint(3) - 1], dtype=np.int64
    )
    if not d.any():
        d = np.array([1, 0, 0])
    length = 2 + rng.randint(3)
    p = v.astype(np.int64)
    for _ in range(length):
        p = p + d
        if not dims.contains(*p):
            break
        data[p[0], p[1], p[2]] = True
