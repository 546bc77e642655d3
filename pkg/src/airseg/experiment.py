"""The human-in-the-loop round protocol: pools, querying, annotation,
retraining, evaluation, and experiment persistence.

One round is: score the unlabeled pool with the configured strategy,
select the top batch, obtain annotations (simulated oracle or submitted
human edits), move the samples into the labeled pool, retrain the
segmenter (warm start), evaluate on the validation set, and persist a
round record.  The selection for round r is computed by the model trained
in round r-1, so in human mode a selection is always exposed for
annotation before the next advance.

Everything stochastic derives from the experiment seed, making runs (and
their on-disk logs) bit-reproducible.  Round wall-clock times are kept in
memory and in a separate timings file, never inside the round records.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import losses, metrics, model, query
from .errors import (
    DimMismatch,
    MissingGroundTruth,
    PendingHumanAnnotations,
    PoolExhausted,
    SpecInfeasible,
)
from .jsonio import dumps_canonical
from .model import SegmenterParams, TrainConfig, TrainSample
from .morphology import (
    CenterlineMask,
    Connectivity,
    dilate,
    keep_largest_component,
    skeletonize,
)
from .phantom import PhantomSpec, corrupt_centerline, generate_phantom
from .query import QueryScore, WdScoreConfig
from .rng import SplitMix64, derive
from .tree import AirwayTree, build_skeleton_graph, detect_cycles, parse_tree
from .volume import BinaryMask, ImageVolume, read_volume, write_volume

import json

STRATEGIES = ("random", "least_confidence", "entropy", "wd")


@dataclass
class Sample:
    id: str
    image: ImageVolume
    gt_mask: BinaryMask | None
    machine_centerline: CenterlineMask | None
    corrected_centerline: CenterlineMask | None
    labeled: bool
    provenance: str  # initial | queried:<round> | validation | test
    seed: int = 0
    contrast: float = 0.0
    gt_tree: AirwayTree | None = None
    clean_centerline: CenterlineMask | None = None
    features: np.ndarray | None = None
    true_branch_count: int = 0


@dataclass
class Annotation:
    sample_id: str
    mask: BinaryMask
    centerline: CenterlineMask
    annotator: str  # "oracle" or "human:<name>"


@dataclass
class ExperimentConfig:
    strategy: str = "entropy"
    rounds: int = 8
    batch_per_round: int = 5
    initial_labeled_count: int = 5
    pool_size: int = 40
    validation_count: int = 6
    test_count: int = 6
    centerline_mode: str = "corrected"  # corrected | machine
    train: TrainConfig = field(default_factory=TrainConfig)
    wd: WdScoreConfig = field(default_factory=WdScoreConfig)
    seed: int = 0
    oracle: str = "simulated"  # simulated | human
    phantom: PhantomSpec = field(default_factory=PhantomSpec)
    bd_threshold: float = 0.8
    postprocess: bool = True
    # per-round training budget: epochs are raised on small labeled pools so
    # that every round sees at least this many sample-epochs (train.epochs
    # stays the floor)
    min_sample_epochs: int = 60
    # neighborhood size of the desk-scale voxel classifier; 3 keeps the
    # window inside the phantom tubes so one decision boundary covers every
    # contrast level
    segmenter_k: int = 3

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.oracle not in ("simulated", "human"):
            raise ValueError(f"unknown oracle {self.oracle!r}")
        if self.centerline_mode not in ("corrected", "machine"):
            raise ValueError(f"unknown centerline mode {self.centerline_mode!r}")
        # pool_size counts the starting unlabeled pool; the initial labeled
        # set sits on top of it, so the query budget must fit the pool alone
        if self.batch_per_round * self.rounds > self.pool_size:
            raise ValueError("batch_per_round * rounds exceeds pool_size")

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "rounds": self.rounds,
            "batch_per_round": self.batch_per_round,
            "initial_labeled_count": self.initial_labeled_count,
            "pool_size": self.pool_size,
            "validation_count": self.validation_count,
            "test_count": self.test_count,
            "centerline_mode": self.centerline_mode,
            "train": {
                "learning_rate": self.train.learning_rate,
                "critic_learning_rate": self.train.critic_learning_rate,
                "epochs": self.train.epochs,
                "batch_size": self.train.batch_size,
                "seed": self.train.seed,
                "loss_mode": self.train.loss_mode,
                "weights": list(self.train.weights.as_tuple()),
                "critic_steps": self.train.critic_steps,
                "max_norm": self.train.max_norm,
            },
            "wd": {"a": self.wd.a, "b": self.wd.b, "lambda": self.wd.lam},
            "seed": self.seed,
            "oracle": self.oracle,
            "phantom": self.phantom.to_dict(),
            "bd_threshold": self.bd_threshold,
            "postprocess": self.postprocess,
            "min_sample_epochs": self.min_sample_epochs,
            "segmenter_k": self.segmenter_k,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        t = d.get("train", {})
        w = t.get("weights", [0.2, 0.2, 0.2, 0.2, 0.2])
        train = TrainConfig(
            learning_rate=t.get("learning_rate", 0.05),
            critic_learning_rate=t.get("critic_learning_rate", 0.01),
            epochs=t.get("epochs", 2),
            batch_size=t.get("batch_size", 1),
            seed=t.get("seed", 0),
            loss_mode=t.get("loss_mode", "eq5"),
            weights=losses.LossWeights(*w),
            critic_steps=t.get("critic_steps", 60),
            max_norm=t.get("max_norm", 10.0),
        )
        wd = d.get("wd", {})
        return cls(
            strategy=d.get("strategy", "entropy"),
            rounds=d.get("rounds", 8),
            batch_per_round=d.get("batch_per_round", 5),
            initial_labeled_count=d.get("initial_labeled_count", 5),
            pool_size=d.get("pool_size", 40),
            validation_count=d.get("validation_count", 8),
            test_count=d.get("test_count", 8),
            centerline_mode=d.get("centerline_mode", "corrected"),
            train=train,
            wd=WdScoreConfig(
                a=wd.get("a", 0.5), b=wd.get("b", 0.5), lam=wd.get("lambda", 1.0)
            ),
            seed=d.get("seed", 0),
            oracle=d.get("oracle", "simulated"),
            phantom=PhantomSpec.from_dict(d["phantom"])
            if "phantom" in d
            else PhantomSpec(),
            bd_threshold=d.get("bd_threshold", 0.8),
            postprocess=d.get("postprocess", True),
            min_sample_epochs=d.get("min_sample_epochs", 60),
            segmenter_k=d.get("segmenter_k", 3),
        )


# Paper-scale presets kept as named configurations; they assume an external
# full-size model and are not run by the desk-scale test suite.
PRESETS: dict[str, dict] = {
    "desk": ExperimentConfig().to_dict(),
    "paper_15pct": {"initial_labeled_count": 52, "rounds": 10, "batch_per_round": 10, "pool_size": 964},
    "paper_35pct": {"initial_labeled_count": 206, "rounds": 15, "batch_per_round": 10, "pool_size": 810},
    "paper_55pct": {"initial_labeled_count": 409, "rounds": 15, "batch_per_round": 10, "pool_size": 607},
    "paper_75pct": {"initial_labeled_count": 612, "rounds": 15, "batch_per_round": 10, "pool_size": 404},
}


@dataclass
class RoundRecord:
    round_index: int
    selected: list[QueryScore]
    val_metrics: dict[str, float]
    curve: list[losses.LossBreakdown]
    checkpoint: str
    wall_clock: float

    def to_dict(self) -> dict:
        return {
            "round": self.round_index,
            "selected": [s.to_dict() for s in self.selected],
            "val_metrics": self.val_metrics,
            "curve": [c.to_dict() for c in self.curve],
            "checkpoint": self.checkpoint,
        }


def sample_clean_centerline(s: Sample) -> CenterlineMask:
    """Skeleton of the sample's ground-truth mask (computed once)."""
    if s.clean_centerline is None:
        if s.gt_mask is None:
            raise MissingGroundTruth(f"sample {s.id} has no ground truth")
        s.clean_centerline = skeletonize(s.gt_mask)
    return s.clean_centerline


def sample_tree(s: Sample) -> AirwayTree:
    if s.gt_tree is None:
        s.gt_tree = parse_tree(build_skeleton_graph(sample_clean_centerline(s)))
    return s.gt_tree


def sample_machine_centerline(s: Sample) -> CenterlineMask:
    """Machine-extracted centerline: the clean skeleton with simulated
    extraction artifacts (loops and stubs)."""
    if s.machine_centerline is None:
        s.machine_centerline = corrupt_centerline(
            sample_clean_centerline(s), derive(s.seed, 5)
        )
    return s.machine_centerline


def oracle_simulated(sample: Sample) -> Annotation:
    """Expert stand-in: replays the generator ground truth with a clean skeleton."""
    if sample.gt_mask is None:
        raise MissingGroundTruth(f"sample {sample.id} has no ground truth")
    return Annotation(
        sample.id,
        sample.gt_mask,
        sample_clean_centerline(sample),
        "oracle",
    )


def validate_annotation(sample: Sample, ann: Annotation) -> None:
    """Enforce dims and the floating-centerline rule (cl within 1-dilation)."""
    if ann.mask.dims != sample.image.dims or ann.centerline.dims != sample.image.dims:
        raise DimMismatch("annotation dims do not match the sample")
    grown = dilate(ann.mask, Connectivity.twentysix, 1)
    if bool((ann.centerline.data & ~grown.data).any()):
        from .errors import InvalidAnnotation

        raise InvalidAnnotation(
            "centerline voxels float outside the annotated mask's 1-dilation"
        )


class Experiment:
    """Single-writer experiment state driving the query/annotate/train loop."""

    def __init__(self, cfg: ExperimentConfig, out_dir: str | Path | None = None):
        self.cfg = cfg
        self.dir = Path(out_dir) if out_dir is not None else None
        self.samples: dict[str, Sample] = {}
        self.records: list[RoundRecord] = []
        self.round_index = -1  # round 0 = initial training
        self.current_selection: list[QueryScore] = []
        self.submitted: dict[str, Annotation] = {}
        self.critic: model.CriticParams | None = None
        self.wd_value = 0.0
        if self.dir is not None:
            (self.dir / "samples").mkdir(parents=True, exist_ok=True)
            (self.dir / "rounds").mkdir(exist_ok=True)
            (self.dir / "checkpoints").mkdir(exist_ok=True)
        self._build_samples()
        self.params = SegmenterParams.init(
            SplitMix64(derive(cfg.seed, 20)),
            k=cfg.segmenter_k,
            hidden=16,
            dtype=np.float32,
        )
        if self.dir is not None:
            self._persist_static()
        self._run_training_round(selected=[])
        self._prepare_selection()

    # ---- pools -------------------------------------------------------------

    @property
    def pool_ids(self) -> list[str]:
        return sorted(
            s.id for s in self.samples.values() if s.provenance.split(":")[0] in ("initial", "queried")
        )

    @property
    def labeled_ids(self) -> list[str]:
        return sorted(s.id for s in self.samples.values() if s.labeled)

    @property
    def unlabeled_ids(self) -> list[str]:
        return sorted(
            s.id
            for s in self.samples.values()
            if not s.labeled and s.provenance.split(":")[0] in ("initial", "queried")
        )

    @property
    def validation_ids(self) -> list[str]:
        return sorted(s.id for s in self.samples.values() if s.provenance == "validation")

    @property
    def test_ids(self) -> list[str]:
        return sorted(s.id for s in self.samples.values() if s.provenance == "test")

    def pending_ids(self) -> list[str]:
        return sorted(
            s.sample_id
            for s in self.current_selection
            if s.sample_id not in self.submitted
        )

    # ---- construction --------------------------------------------------------

    def _make_sample(self, sid: str, seed: int, spec: PhantomSpec, provenance: str) -> Sample:
        ph = generate_phantom(seed, spec)
        return Sample(
            id=sid,
            image=ph.image,
            gt_mask=ph.gt_mask,
            machine_centerline=ph.machine_centerline,
            corrected_centerline=None,
            labeled=False,
            provenance=provenance,
            seed=seed,
            contrast=ph.contrast,
            clean_centerline=ph.clean_centerline,
            features=model.extract_features(ph.image),
            true_branch_count=ph.branch_count,
        )

    def _build_samples(self) -> None:
        cfg = self.cfg
        shift = dataclasses.replace(
            cfg.phantom, distal_dilation=True, noise=cfg.phantom.noise * 1.5
        )
        for i in range(cfg.initial_labeled_count + cfg.pool_size):
            sid = f"p{i:03d}"
            self.samples[sid] = self._make_sample(
                sid, derive(cfg.seed, 11, i), cfg.phantom, "initial"
            )
        # stratified validation: alternate easy and hard phantoms so the
        # round curves respond to hard-sample coverage with low variance
        val_easy = dataclasses.replace(cfg.phantom, hard_fraction=0.0)
        val_hard = dataclasses.replace(cfg.phantom, hard_fraction=1.0)
        for i in range(cfg.validation_count):
            sid = f"v{i:03d}"
            self.samples[sid] = self._make_sample(
                sid,
                derive(cfg.seed, 12, i),
                val_hard if i % 2 else val_easy,
                "validation",
            )
        for i in range(cfg.test_count):
            sid = f"t{i:03d}"
            self.samples[sid] = self._make_sample(
                sid, derive(cfg.seed, 13, i), shift, "test"
            )
        # cold start on routine (easy-contrast) cases, deterministically: the
        # hard minority begins entirely unlabeled, so finding it is the query
        # strategies' job
        easy_floor = cfg.phantom.hard_contrast[1]
        pool = self.pool_ids
        easy_first = [s for s in pool if self.samples[s].contrast >= easy_floor]
        initial = (easy_first + [s for s in pool if s not in set(easy_first)])[
            : cfg.initial_labeled_count
        ]
        for sid in initial:
            self._apply_annotation(oracle_simulated(self.samples[sid]), round_index=0)

    def _apply_annotation(self, ann: Annotation, round_index: int) -> None:
        s = self.samples[ann.sample_id]
        human = ann.annotator != "oracle"
        s.gt_mask = ann.mask
        s.corrected_centerline = ann.centerline
        s.labeled = True
        if round_index > 0:
            s.provenance = f"queried:{round_index}"
        if human:
            # human edits may change the mask; derived structures recompute lazily
            s.clean_centerline = None
            s.gt_tree = None
            s.machine_centerline = None
        if self.dir is not None:
            sdir = self.dir / "samples"
            write_volume(ann.mask, sdir / f"{ann.sample_id}.ann_mask.vvol")
            write_volume(ann.centerline, sdir / f"{ann.sample_id}.corrected_cl.vvol")

    # ---- scoring and selection ------------------------------------------------

    def _training_centerline(self, s: Sample) -> CenterlineMask:
        if self.cfg.centerline_mode == "corrected":
            assert s.corrected_centerline is not None
            return s.corrected_centerline
        return sample_machine_centerline(s)

    def _score_pool(self) -> list[QueryScore]:
        cfg = self.cfg
        ids = self.unlabeled_ids
        if not ids:
            return []
        next_round = self.round_index + 1
        if cfg.strategy == "random":
            rng = SplitMix64(derive(cfg.seed, 23, next_round))
            return query.score_random(ids, rng)
        scores: list[QueryScore] = []
        if cfg.strategy == "wd":
            self._refresh_critic(next_round)
        for sid in ids:
            s = self.samples[sid]
            pv = model.segmenter_predict(self.params, s.image)
            if cfg.strategy == "least_confidence":
                u = query.score_least_confidence(pv)
                scores.append(QueryScore(sid, u, 0.0, u))
            elif cfg.strategy == "entropy":
                u = query.score_entropy(pv)
                scores.append(QueryScore(sid, u, 0.0, u))
            else:
                assert self.critic is not None
                scores.append(
                    query.score_wd(pv, s.features, self.critic, cfg.wd, sid)
                )
        return scores

    def _refresh_critic(self, round_index: int) -> None:
        cfg = self.cfg
        lb = [self.samples[i].features for i in self.labeled_ids]
        ulb = [self.samples[i].features for i in self.unlabeled_ids]
        if not lb or not ulb:
            self.critic = None
            self.wd_value = 0.0
            return
        fresh = model.CriticParams.init(SplitMix64(derive(cfg.seed, 21, round_index)))
        self.critic = model.train_critic(
            fresh,
            np.array(lb),
            np.array(ulb),
            cfg.train,
            SplitMix64(derive(cfg.seed, 25, round_index)),
        )
        self.wd_value = losses.wd_loss(
            self.critic,
            np.array(ulb),
            np.array(lb),
            cfg.train.max_norm,
            SplitMix64(derive(cfg.seed, 24, round_index)),
        )

    def _prepare_selection(self) -> None:
        cfg = self.cfg
        self.submitted = {}
        if self.round_index >= cfg.rounds:
            self.current_selection = []
            return
        if len(self.unlabeled_ids) < cfg.batch_per_round:
            self.current_selection = []
            return
        scores = self._score_pool()
        chosen = set(query.select_top_k(scores, cfg.batch_per_round))
        self.current_selection = [s for s in scores if s.sample_id in chosen]
        self.current_selection.sort(key=lambda s: (-s.total, s.sample_id))

    # ---- the round loop ---------------------------------------------------------

    def submit_annotation(self, ann: Annotation) -> None:
        if ann.sample_id not in self.samples:
            raise KeyError(ann.sample_id)
        selected = {s.sample_id for s in self.current_selection}
        if ann.sample_id not in selected or ann.sample_id in self.submitted:
            raise PendingHumanAnnotations(
                f"sample {ann.sample_id} is not awaiting annotation"
            )
        validate_annotation(self.samples[ann.sample_id], ann)
        self.submitted[ann.sample_id] = ann

    def advance_round(self) -> RoundRecord:
        cfg = self.cfg
        if self.round_index >= cfg.rounds or not self.current_selection:
            raise PoolExhausted("round budget or unlabeled pool exhausted")
        next_round = self.round_index + 1
        if cfg.oracle == "human":
            missing = self.pending_ids()
            if missing:
                raise PendingHumanAnnotations(
                    f"{len(missing)} annotations outstanding: {missing}"
                )
            annotations = [self.submitted[s.sample_id] for s in self.current_selection]
        else:
            annotations = [
                oracle_simulated(self.samples[s.sample_id])
                for s in self.current_selection
            ]
        for ann in annotations:
            self._apply_annotation(ann, next_round)
        record = self._run_training_round(selected=list(self.current_selection))
        self._prepare_selection()
        return record

    def _run_training_round(self, selected: list[QueryScore]) -> RoundRecord:
        cfg = self.cfg
        t0 = time.perf_counter()
        self.round_index += 1
        train_samples = [
            TrainSample(
                image=self.samples[i].image,
                gt_mask=self.samples[i].gt_mask,
                gt_tree=sample_tree(self.samples[i]),
                centerline=self._training_centerline(self.samples[i]),
            )
            for i in self.labeled_ids
        ]
        if cfg.strategy == "wd" and self.critic is None:
            self._refresh_critic(self.round_index)
        epochs = max(
            cfg.train.epochs,
            -(-cfg.min_sample_epochs // max(1, len(train_samples))),
        )
        train_cfg = dataclasses.replace(cfg.train, epochs=epochs)
        self.params, curve = model.train_segmenter(
            self.params,
            train_samples,
            train_cfg,
            SplitMix64(derive(cfg.seed, 22, self.round_index)),
            wd_value=self.wd_value,
        )
        val = self._evaluate(self.validation_ids)
        record = RoundRecord(
            round_index=self.round_index,
            selected=selected,
            val_metrics=val,
            curve=curve,
            checkpoint=f"checkpoints/{self.round_index:03d}.bin",
            wall_clock=time.perf_counter() - t0,
        )
        self.records.append(record)
        if self.dir is not None:
            self._persist_round(record)
        return record

    # ---- evaluation ----------------------------------------------------------

    def predict_mask(self, sample: Sample, postprocess: bool | None = None) -> BinaryMask:
        pv = model.segmenter_predict(self.params, sample.image)
        mask = BinaryMask(sample.image.dims, pv.data >= 0.5)
        post = self.cfg.postprocess if postprocess is None else postprocess
        if post:
            mask = keep_largest_component(mask, Connectivity.twentysix)
        return mask

    def _evaluate(self, ids: list[str], with_cycles: bool = False) -> dict[str, float]:
        sums: dict[str, float] = {}
        for sid in ids:
            s = self.samples[sid]
            pred = self.predict_mask(s)
            m = metrics.evaluate_segmentation(
                pred,
                s.gt_mask,
                sample_tree(s),
                postprocess=False,  # predict_mask already applied it
                bd_threshold=self.cfg.bd_threshold,
            )
            if with_cycles:
                m["cycle_count"] = float(
                    detect_cycles(build_skeleton_graph(skeletonize(pred)))
                )
            for k, v in m.items():
                sums[k] = sums.get(k, 0.0) + v
        return {k: v / len(ids) for k, v in sums.items()}

    def test_metrics(self) -> dict[str, float]:
        """Final-model metrics on the distribution-shifted test set."""
        return self._evaluate(self.test_ids, with_cycles=True)

    # ---- persistence -----------------------------------------------------------

    def _persist_static(self) -> None:
        assert self.dir is not None
        (self.dir / "config.json").write_text(
            dumps_canonical(self.cfg.to_dict()) + "\n"
        )
        for sid in sorted(self.samples):
            s = self.samples[sid]
            sdir = self.dir / "samples"
            write_volume(s.image, sdir / f"{sid}.image.vvol")
            write_volume(s.gt_mask, sdir / f"{sid}.gt.vvol")
            write_volume(sample_machine_centerline(s), sdir / f"{sid}.machine_cl.vvol")
            if s.corrected_centerline is not None:
                write_volume(s.corrected_centerline, sdir / f"{sid}.corrected_cl.vvol")

    def _persist_round(self, record: RoundRecord) -> None:
        assert self.dir is not None
        path = self.dir / "rounds" / f"{record.round_index:03d}.json"
        path.write_text(dumps_canonical(record.to_dict()) + "\n")
        model.save_checkpoint(
            self.dir / record.checkpoint,
            model.segmenter_to_arrays(self.params),
            {"round": record.round_index, "k": self.params.k, "seed": self.cfg.seed},
        )
        self._write_manifest()
        with open(self.dir / "timings.txt", "a") as fh:
            fh.write(f"round {record.round_index} {record.wall_clock:.3f}s\n")

    def _write_manifest(self) -> None:
        assert self.dir is not None
        entries = []
        for sid in sorted(self.samples):
            s = self.samples[sid]
            role = s.provenance.split(":")[0]
            if role in ("initial", "queried"):
                role = "pool"
            entries.append(
                {
                    "id": sid,
                    "role": role,
                    "labeled": s.labeled,
                    "provenance": s.provenance,
                }
            )
        manifest = {
            "samples": entries,
            "round": self.round_index,
            "strategy": self.cfg.strategy,
            "labeled": len(self.labeled_ids),
            "unlabeled": len(self.unlabeled_ids),
        }
        (self.dir / "manifest.json").write_text(dumps_canonical(manifest) + "\n")

    @classmethod
    def load(cls, exp_dir: str | Path) -> "Experiment":
        """Rebuild a persisted experiment: phantoms are regenerated from the
        seed, human annotations replayed from disk, and the latest checkpoint
        restored.  An unapplied (pending) selection is recomputed."""
        exp_dir = Path(exp_dir)
        cfg = ExperimentConfig.from_dict(
            json.loads((exp_dir / "config.json").read_text())
        )
        manifest = json.loads((exp_dir / "manifest.json").read_text())
        exp = cls.__new__(cls)
        exp.cfg = cfg
        exp.dir = exp_dir
        exp.samples = {}
        exp.records = []
        exp.round_index = -1
        exp.current_selection = []
        exp.submitted = {}
        exp.critic = None
        exp.wd_value = 0.0
        exp._build_samples()
        # replay labeled state and annotations
        for entry in manifest["samples"]:
            sid = entry["id"]
            s = exp.samples[sid]
            s.provenance = entry["provenance"]
            if entry["labeled"] and not s.labeled:
                mask = read_volume(exp_dir / "samples" / f"{sid}.ann_mask.vvol")
                cl = read_volume(exp_dir / "samples" / f"{sid}.corrected_cl.vvol")
                s.gt_mask = mask
                s.corrected_centerline = CenterlineMask(cl.dims, cl.data)
                s.labeled = True
        exp.round_index = manifest["round"]
        for rp in sorted((exp_dir / "rounds").glob("*.json")):
            d = json.loads(rp.read_text())
            exp.records.append(
                RoundRecord(
                    round_index=d["round"],
                    selected=[
                        QueryScore(
                            e["sample_id"],
                            e["uncertainty"],
                            e["discriminative"],
                            e["total"],
                        )
                        for e in d["selected"]
                    ],
                    val_metrics=d["val_metrics"],
                    curve=[
                        losses.LossBreakdown(**c) for c in d["curve"]
                    ],
                    checkpoint=d["checkpoint"],
                    wall_clock=0.0,
                )
            )
        arrays, meta = model.load_checkpoint(
            exp_dir / f"checkpoints/{exp.round_index:03d}.bin"
        )
        exp.params = model.segmenter_from_arrays(arrays, int(meta["k"]))
        exp._prepare_selection()
        return exp


@dataclass
class ExperimentLog:
    config: ExperimentConfig
    records: list[RoundRecord]
    test: dict[str, float]


def run_experiment(
    cfg: ExperimentConfig, out_dir: str | Path | None = None
) -> ExperimentLog:
    """Run the whole loop with the simulated oracle and evaluate on the
    shifted test set."""
    exp = Experiment(cfg, out_dir)
    while exp.round_index < cfg.rounds and exp.current_selection:
        exp.advance_round()
    test = exp.test_metrics()
    if exp.dir is not None:
        (exp.dir / "test_metrics.json").write_text(dumps_canonical(test) + "\n")
    return ExperimentLog(cfg, exp.records, test)


def rounds_to_reach(
    log: ExperimentLog, metric: str = "dsc", target: float = 0.85
) -> int:
    """First round whose validation metric reaches the target, else rounds+1."""
    for rec in log.records:
        if rec.val_metrics.get(metric, 0.0) >= target:
            return rec.round_index
    return log.config.rounds + 1
