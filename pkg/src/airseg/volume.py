"""Dense 3D volume types, the VVOL on-disk container, and patch extraction.

Voxel data lives in numpy arrays of shape ``(nx, ny, nz)`` indexed as
``data[x, y, z]``.  The canonical linear order is x-fastest
(``index = x + nx * (y + ny * z)``), which is Fortran ravel order for this
shape; every serialisation and oracle in the project assumes it.

VVOL container: line 1 is a single-line JSON header
``{"magic": "vvol1", "dtype": "u8"|"f32", "kind": "image"|"mask"|"prob",
"shape": [nx, ny, nz], "spacing": [sx, sy, sz]}`` terminated by ``\\n``,
followed by the raw payload (little-endian for f32, one byte 0/1 per voxel
for masks).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimMismatch,
    IoFailure,
    MalformedHeader,
    OutOfBounds,
    TruncatedData,
    ValueOutOfRange,
)

MAGIC = "vvol1"


@dataclass(frozen=True)
class VolumeDims:
    nx: int
    ny: int
    nz: int

    def __post_init__(self):
        if self.nx <= 0 or self.ny <= 0 or self.nz <= 0:
            raise ValueOutOfRange(f"voxel counts must be positive, got {self}")

    @property
    def count(self) -> int:
        return self.nx * self.ny * self.nz

    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    def contains(self, x: int, y: int, z: int) -> bool:
        return 0 <= x < self.nx and 0 <= y < self.ny and 0 <= z < self.nz


def _check_data(dims: VolumeDims, data: np.ndarray) -> np.ndarray:
    if data.shape != dims.shape():
        raise DimMismatch(f"data shape {data.shape} != dims {dims.shape()}")
    return data


@dataclass
class ImageVolume:
    """Real-valued intensity volume with physical voxel spacing in mm."""

    dims: VolumeDims
    spacing: tuple[float, float, float]
    data: np.ndarray

    def __post_init__(self):
        if any(s <= 0 for s in self.spacing):
            raise ValueOutOfRange(f"spacing must be positive, got {self.spacing}")
        self.data = _check_data(self.dims, np.asarray(self.data))


@dataclass
class BinaryMask:
    """One boolean per voxel."""

    dims: VolumeDims
    data: np.ndarray

    def __post_init__(self):
        self.data = _check_data(self.dims, np.asarray(self.data).astype(bool))

    def count_true(self) -> int:
        return int(self.data.sum())


@dataclass
class ProbVolume:
    """Per-voxel probability, every value in [0, 1]."""

    dims: VolumeDims
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.size and (float(arr.min()) < 0.0 or float(arr.max()) > 1.0):
            raise ValueOutOfRange(
                f"probabilities outside [0,1]: min {arr.min()}, max {arr.max()}"
            )
        self.data = _check_data(self.dims, arr)


@dataclass(frozen=True)
class PatchSpec:
    """Axis-aligned sub-box: origin (inclusive, non-negative) plus dims."""

    origin: tuple[int, int, int]
    dims: VolumeDims

    def check_within(self, parent: VolumeDims) -> None:
        ox, oy, oz = self.origin
        if min(ox, oy, oz) < 0:
            raise OutOfBounds(f"negative origin {self.origin}")
        if (
            ox + self.dims.nx > parent.nx
            or oy + self.dims.ny > parent.ny
            or oz + self.dims.nz > parent.nz
        ):
            raise OutOfBounds(f"patch {self} exceeds parent dims {parent}")


Volume = ImageVolume | BinaryMask | ProbVolume

_DEFAULT_SPACING = (1.0, 1.0, 1.0)


def _kind_of(vol: Volume) -> str:
    if isinstance(vol, BinaryMask):
        return "mask"
    if isinstance(vol, ProbVolume):
        return "prob"
    return "image"


def write_volume(vol: Volume, path: str | os.PathLike) -> None:
    """Serialise to the VVOL container; the file re-reads bit-identically.

    f32 kinds are written as little-endian float32 (in-memory float64 data
    is cast), masks as one byte 0/1 per voxel, both in x-fastest order.
    """
    kind = _kind_of(vol)
    spacing = vol.spacing if isinstance(vol, ImageVolume) else _DEFAULT_SPACING
    header = {
        "magic": MAGIC,
        "dtype": "u8" if kind == "mask" else "f32",
        "kind": kind,
        "shape": [vol.dims.nx, vol.dims.ny, vol.dims.nz],
        "spacing": [float(s) for s in spacing],
    }
    if kind == "mask":
        payload = vol.data.astype(np.uint8).tobytes(order="F")
    else:
        payload = vol.data.astype("<f4").tobytes(order="F")
    try:
        with open(path, "wb") as fh:
            fh.write(json.dumps(header, separators=(",", ":")).encode() + b"\n")
            fh.write(payload)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def read_volume(path: str | os.PathLike) -> Volume:
    """Parse a VVOL file; the header's kind selects the returned type."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc

    nl = raw.find(b"\n")
    if nl < 0:
        raise MalformedHeader("missing header line")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedHeader(f"unparseable header: {exc}") from exc
    if not isinstance(header, dict) or header.get("magic") != MAGIC:
        raise MalformedHeader(f"bad magic in header: {header!r}")

    dtype = header.get("dtype")
    kind = header.get("kind")
    shape = header.get("shape")
    spacing = header.get("spacing", list(_DEFAULT_SPACING))
    if (
        dtype not in ("u8", "f32")
        or kind not in ("image", "mask", "prob")
        or not isinstance(shape, list)
        or len(shape) != 3
        or not all(isinstance(v, int) and v > 0 for v in shape)
        or not isinstance(spacing, list)
        or len(spacing) != 3
    ):
        raise MalformedHeader(f"invalid header fields: {header!r}")
    if (kind == "mask") != (dtype == "u8"):
        raise MalformedHeader(f"dtype {dtype} inconsistent with kind {kind}")

    dims = VolumeDims(*shape)
    payload = raw[nl + 1 :]
    itemsize = 1 if dtype == "u8" else 4
    expected = dims.count * itemsize
    if len(payload) < expected:
        raise TruncatedData(f"payload {len(payload)} bytes, expected {expected}")
    if len(payload) > expected:
        raise MalformedHeader(f"{len(payload) - expected} trailing bytes after payload")

    if dtype == "u8":
        flat = np.frombuffer(payload, dtype=np.uint8)
        if flat.size and int(flat.max()) > 1:
            raise ValueOutOfRange("mask payload contains bytes other than 0/1")
        data = flat.reshape(dims.shape(), order="F").astype(bool)
        return BinaryMask(dims, data)

    flat = np.frombuffer(payload, dtype="<f4").astype(np.float32)
    data = flat.reshape(dims.shape(), order="F")
    if kind == "prob":
        if data.size and (float(data.min()) < 0.0 or float(data.max()) > 1.0):
            raise ValueOutOfRange("prob payload outside [0,1]")
        return ProbVolume(dims, data)
    return ImageVolume(dims, tuple(float(s) for s in spacing), data)


def extract_patch(vol: Volume, spec: PatchSpec) -> Volume:
    """Copy the sub-box so that output voxel (i,j,k) == input (origin+(i,j,k))."""
    spec.check_within(vol.dims)
    ox, oy, oz = spec.origin
    sub = vol.data[
        ox : ox + spec.dims.nx, oy : oy + spec.dims.ny, oz : oz + spec.dims.nz
    ].copy()
    if isinstance(vol, BinaryMask):
        return BinaryMask(spec.dims, sub)
    if isinstance(vol, ProbVolume):
        return ProbVolume(spec.dims, sub)
    return ImageVolume(spec.dims, vol.spacing, sub)
