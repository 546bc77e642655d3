"""HTTP/JSON API over a live experiment for the human annotator.

All GETs are pure snapshots of the experiment state; the only mutations
are annotation submission and round advancement, both serialized through
a single lock.  Round advancement trains on a background worker and swaps
the updated state in atomically, so concurrent readers always see a
consistent pre-round or post-round view.

Mask submissions are run-length encoded per z-row: each run is
[z, y, x_start, length].  Centerlines are plain voxel triples.
"""

from __future__ import annotations

import threading

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pathlib import Path
from pydantic import BaseModel

from .errors import (
    InvalidAnnotation,
    DimMismatch,
    PendingHumanAnnotations,
    PoolExhausted,
)
from .experiment import (
    Annotation,
    Experiment,
    Sample,
    sample_machine_centerline,
)
from .morphology import CenterlineMask
from .tree import build_skeleton_graph, parse_tree
from .volume import BinaryMask, VolumeDims

_AXES = {"x": 0, "y": 1, "z": 2}


class AnnotationBody(BaseModel):
    mask_runs: list[list[int]]
    centerline: list[list[int]]
    annotator: str = "human:anonymous"


def decode_mask_runs(runs: list[list[int]], dims: VolumeDims) -> BinaryMask:
    data = np.zeros(dims.shape(), dtype=bool)
    for run in runs:
        if len(run) != 4:
            raise InvalidAnnotation(f"mask run {run} must be [z, y, x_start, length]")
        z, y, x0, length = run
        if not (
            0 <= z < dims.nz
            and 0 <= y < dims.ny
            and 0 <= x0 < dims.nx
            and length >= 1
            and x0 + length <= dims.nx
        ):
            raise InvalidAnnotation(f"mask run {run} out of bounds")
        data[x0 : x0 + length, y, z] = True
    return BinaryMask(dims, data)


def encode_mask_runs(mask: BinaryMask) -> list[list[int]]:
    runs: list[list[int]] = []
    data = mask.data
    for z in range(mask.dims.nz):
        for y in range(mask.dims.ny):
            row = data[:, y, z]
            xs = np.flatnonzero(row)
            if xs.size == 0:
                continue
            start = prev = int(xs[0])
            for x in xs[1:]:
                x = int(x)
                if x == prev + 1:
                    prev = x
                    continue
                runs.append([z, y, start, prev - start + 1])
                start = prev = x
            runs.append([z, y, start, prev - start + 1])
    return runs


def decode_centerline(voxels: list[list[int]], dims: VolumeDims) -> CenterlineMask:
    data = np.zeros(dims.shape(), dtype=bool)
    for v in voxels:
        if len(v) != 3 or not dims.contains(*v):
            raise InvalidAnnotation(f"centerline voxel {v} out of bounds")
        data[v[0], v[1], v[2]] = True
    return CenterlineMask(dims, data)


def _coords_list(mask_data: np.ndarray) -> list[list[int]]:
    return [[int(x), int(y), int(z)] for x, y, z in np.argwhere(mask_data)]


def _slice_selector(axis: str, index: int):
    sel = [slice(None)] * 3
    sel[_AXES[axis]] = index
    return tuple(sel)


class ExperimentServer:
    """Serves immutable snapshots of the experiment; the snapshot refreshes
    only at commit points (construction, annotation submit, round end), so
    concurrent readers never observe a half-applied round."""

    def __init__(self, experiment: Experiment):
        self.exp = experiment
        self.lock = threading.Lock()
        self.training = False
        self._pred_cache: dict[tuple[int, str], BinaryMask] = {}
        self._snapshot: dict = {}
        self._rounds: list[dict] = []
        self._refresh_snapshot()

    def _refresh_snapshot(self) -> None:
        exp = self.exp
        self._snapshot = {
            "round": exp.round_index,
            "strategy": exp.cfg.strategy,
            "labeled": len(exp.labeled_ids),
            "unlabeled": len(exp.unlabeled_ids),
            "pending_annotations": len(exp.pending_ids())
            if exp.cfg.oracle == "human"
            else 0,
            "rounds_budget": exp.cfg.rounds,
            "selection": [s.sample_id for s in exp.current_selection],
        }
        self._rounds = [r.to_dict() for r in exp.records]
        self._pred_cache.clear()

    # ---- read paths ------------------------------------------------------

    def state(self) -> dict:
        return {**self._snapshot, "training": self.training}

    def rounds(self) -> list[dict]:
        return self._rounds

    def sample(self, sid: str) -> Sample:
        try:
            return self.exp.samples[sid]
        except KeyError:
            raise HTTPException(404, f"unknown sample {sid}")

    def _prediction(self, sid: str) -> BinaryMask:
        key = (len(self._rounds), sid)
        if key not in self._pred_cache:
            self._pred_cache[key] = self.exp.predict_mask(self.sample(sid))
        return self._pred_cache[key]

    def slice_response(self, sid: str, axis: str, index: int, overlays: list[str]) -> dict:
        s = self.sample(sid)
        if axis not in _AXES:
            raise HTTPException(422, f"axis must be one of x, y, z, got {axis!r}")
        dims = s.image.dims
        limit = dims.shape()[_AXES[axis]]
        if not 0 <= index < limit:
            raise HTTPException(422, f"slice index {index} out of range [0, {limit})")
        sel = _slice_selector(axis, index)
        plane = s.image.data[sel].astype(np.float64)
        lo, hi = float(s.image.data.min()), float(s.image.data.max())
        scale = 255.0 / (hi - lo) if hi > lo else 0.0
        gray = np.clip((plane - lo) * scale, 0, 255).astype(np.uint8)
        width, height = gray.shape  # first remaining axis is u, second is v
        out = {
            "axis": axis,
            "index": index,
            "width": int(width),
            "height": int(height),
            # row-major: rows run along the second remaining axis
            "image": [int(v) for v in gray.T.reshape(-1)],
            "overlays": {},
        }
        available = {
            "pred": lambda: self._prediction(sid).data,
            "gt": lambda: s.gt_mask.data if s.gt_mask is not None else None,
            "machine_centerline": lambda: sample_machine_centerline(s).data
            if s.gt_mask is not None
            else None,
            "corrected_centerline": lambda: s.corrected_centerline.data
            if s.corrected_centerline is not None
            else None,
        }
        for name in overlays:
            if name not in available:
                raise HTTPException(422, f"unknown overlay {name!r}")
            data = available[name]()
            if data is None:
                out["overlays"][name] = []
                continue
            keep = np.zeros_like(data)
            keep[sel] = data[sel]
            out["overlays"][name] = _coords_list(keep)
        return out

    def tree_json(self, sid: str) -> dict:
        s = self.sample(sid)
        if s.corrected_centerline is not None:
            cl = s.corrected_centerline
        elif s.gt_mask is not None:
            cl = sample_machine_centerline(s)
        else:
            raise HTTPException(404, f"sample {sid} has no centerline")
        if not cl.data.any():
            raise HTTPException(404, f"sample {sid} has an empty centerline")
        return parse_tree(build_skeleton_graph(cl)).to_json_dict()

    # ---- mutations --------------------------------------------------------

    def submit(self, sid: str, body: AnnotationBody) -> None:
        s = self.sample(sid)
        dims = s.image.dims
        mask = decode_mask_runs(body.mask_runs, dims)
        cl = decode_centerline(body.centerline, dims)
        ann = Annotation(sid, mask, cl, body.annotator)
        with self.lock:
            if self.training:
                raise HTTPException(409, "training in progress")
            try:
                self.exp.submit_annotation(ann)
            except KeyError:
                raise HTTPException(404, f"unknown sample {sid}")
            except PendingHumanAnnotations as exc:
                raise HTTPException(409, str(exc))
            except (InvalidAnnotation, DimMismatch) as exc:
                raise HTTPException(422, str(exc))
            self._refresh_snapshot()

    def advance(self) -> dict:
        with self.lock:
            if self.training:
                raise HTTPException(409, "training already running")
            exp = self.exp
            if exp.round_index >= exp.cfg.rounds or not exp.current_selection:
                raise HTTPException(409, "round budget or pool exhausted")
            if exp.cfg.oracle == "human" and exp.pending_ids():
                raise HTTPException(
                    409, f"{len(exp.pending_ids())} annotations outstanding"
                )
            self.training = True
        next_round = self.exp.round_index + 1

        def work():
            try:
                self.exp.advance_round()
            finally:
                with self.lock:
                    self._refresh_snapshot()
                    self.training = False

        threading.Thread(target=work, name="round-advance", daemon=True).start()
        return {"round": next_round}


def create_app(experiment_dir: str, experiment: Experiment | None = None) -> FastAPI:
    exp = experiment if experiment is not None else Experiment.load(experiment_dir)
    server = ExperimentServer(exp)
    app = FastAPI(title="airseg annotation server")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.server = server

    @app.get("/api/state")
    def get_state():
        return server.state()

    @app.get("/api/rounds")
    def get_rounds():
        return server.rounds()

    @app.get("/api/samples")
    def get_samples():
        exp = server.exp
        pending = set(exp.pending_ids())
        selected = {s.sample_id for s in exp.current_selection}
        return [
            {
                "id": sid,
                "labeled": exp.samples[sid].labeled,
                "provenance": exp.samples[sid].provenance,
                "dims": list(exp.samples[sid].image.dims.shape()),
                "selected": sid in selected,
                "pending": sid in pending,
            }
            for sid in sorted(exp.samples)
        ]

    @app.get("/api/samples/{sid}/slice")
    def get_slice(sid: str, axis: str = "z", index: int = 0, overlays: str = ""):
        names = [n for n in overlays.split(",") if n]
        return server.slice_response(sid, axis, index, names)

    @app.get("/api/samples/{sid}/tree")
    def get_tree(sid: str):
        return server.tree_json(sid)

    @app.get("/api/samples/{sid}/annotation")
    def get_annotation(sid: str):
        s = server.sample(sid)
        if s.corrected_centerline is None or s.gt_mask is None or not s.labeled:
            sub = server.exp.submitted.get(sid)
            if sub is None:
                raise HTTPException(404, f"sample {sid} has no stored annotation")
            mask, cl = sub.mask, sub.centerline
        else:
            mask, cl = s.gt_mask, s.corrected_centerline
        return {
            "sample_id": sid,
            "mask_runs": encode_mask_runs(mask),
            "centerline": _coords_list(cl.data),
        }

    @app.post("/api/samples/{sid}/annotation", status_code=204)
    def post_annotation(sid: str, body: AnnotationBody):
        server.submit(sid, body)
        return JSONResponse(status_code=204, content=None)

    @app.post("/api/rounds/advance", status_code=202)
    def post_advance():
        return JSONResponse(status_code=202, content=server.advance())

    ui_dir = Path(__file__).resolve().parent.parent.parent / "frontend" / "dist"
    if ui_dir.is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app
