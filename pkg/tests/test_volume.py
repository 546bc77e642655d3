import json

import numpy as np
import pytest

from airseg.errors import (
    MalformedHeader,
    OutOfBounds,
    TruncatedData,
    ValueOutOfRange,
)
from airseg.volume import (
    BinaryMask,
    ImageVolume,
    PatchSpec,
    ProbVolume,
    VolumeDims,
    extract_patch,
    read_volume,
    write_volume,
)


def test_mask_u8_payload_roundtrip(tmp_path):
    path = tmp_path / "m.vvol"
    header = {
        "magic": "vvol1",
        "dtype": "u8",
        "kind": "mask",
        "shape": [2, 2, 2],
        "spacing": [1.0, 1.0, 1.0],
    }
    path.write_bytes(json.dumps(header).encode() + b"\n" + b"\x01" * 8)
    vol = read_volume(path)
    assert isinstance(vol, BinaryMask)
    assert vol.data.all() and vol.dims == VolumeDims(2, 2, 2)


def test_truncated_payload(tmp_path):
    path = tmp_path / "m.vvol"
    header = {
        "magic": "vvol1",
        "dtype": "u8",
        "kind": "mask",
        "shape": [2, 2, 2],
        "spacing": [1, 1, 1],
    }
    path.write_bytes(json.dumps(header).encode() + b"\n" + b"\x01" * 7)
    with pytest.raises(TruncatedData):
        read_volume(path)


def test_malformed_header(tmp_path):
    path = tmp_path / "m.vvol"
    path.write_bytes(b'{"magic":"nope"}\n')
    with pytest.raises(MalformedHeader):
        read_volume(path)
    path.write_bytes(b"not json at all\n")
    with pytest.raises(MalformedHeader):
        read_volume(path)


def test_prob_out_of_range_payload(tmp_path):
    path = tmp_path / "p.vvol"
    header = {
        "magic": "vvol1",
        "dtype": "f32",
        "kind": "prob",
        "shape": [1, 1, 2],
        "spacing": [1, 1, 1],
    }
    payload = np.array([0.5, 1.5], dtype="<f4").tobytes()
    path.write_bytes(json.dumps(header).encode() + b"\n" + payload)
    with pytest.raises(ValueOutOfRange):
        read_volume(path)


def test_f32_half_payload_words(tmp_path):
    dims = VolumeDims(2, 2, 2)
    vol = ProbVolume(dims, np.full(dims.shape(), 0.5, dtype=np.float32))
    path = tmp_path / "p.vvol"
    write_volume(vol, path)
    raw = path.read_bytes()
    payload = raw[raw.find(b"\n") + 1 :]
    assert payload == np.array([0.5] * 8, dtype="<f4").tobytes()


def test_single_voxel_mask_payload(tmp_path):
    dims = VolumeDims(1, 1, 1)
    path = tmp_path / "one.vvol"
    write_volume(BinaryMask(dims, np.zeros((1, 1, 1), bool)), path)
    raw = path.read_bytes()
    assert raw[raw.find(b"\n") + 1 :] == b"\x00"


def test_roundtrip_random_volumes(tmp_path, rs):
    for trial in range(100):
        dims = VolumeDims(rs.randint(1, 6), rs.randint(1, 6), rs.randint(1, 6))
        kind = trial % 3
        path = tmp_path / f"v{trial}.vvol"
        if kind == 0:
            vol = BinaryMask(dims, rs.rand(*dims.shape()) < 0.5)
        elif kind == 1:
            vol = ProbVolume(dims, rs.rand(*dims.shape()).astype(np.float32))
        else:
            vol = ImageVolume(
                dims,
                (0.5, 0.7, 1.2),
                rs.randn(*dims.shape()).astype(np.float32),
            )
        write_volume(vol, path)
        back = read_volume(path)
        assert type(back) is type(vol)
        assert back.dims == vol.dims
        assert np.array_equal(back.data, vol.data)
        # byte-level: a second write is identical
        path2 = tmp_path / f"v{trial}b.vvol"
        write_volume(back, path2)
        assert path.read_bytes() == path2.read_bytes()


def test_x_fastest_linear_order(tmp_path):
    dims = VolumeDims(3, 2, 2)
    data = np.arange(12, dtype=np.float32).reshape(dims.shape(), order="F")
    path = tmp_path / "o.vvol"
    write_volume(ImageVolume(dims, (1, 1, 1), data), path)
    raw = path.read_bytes()
    flat = np.frombuffer(raw[raw.find(b"\n") + 1 :], dtype="<f4")
    # index = x + nx*(y + ny*z) must recover data[x, y, z]
    for x in range(3):
        for y in range(2):
            for z in range(2):
                assert flat[x + 3 * (y + 2 * z)] == data[x, y, z]


def test_prob_rejects_out_of_range_values(rs):
    dims = VolumeDims(2, 2, 2)
    for _ in range(50):
        vals = rs.randn(*dims.shape())
        if vals.min() < 0 or vals.max() > 1:
            with pytest.raises(ValueOutOfRange):
                ProbVolume(dims, vals)
        else:
            ProbVolume(dims, vals)


def test_extract_patch_identity_and_offset(rs):
    dims = VolumeDims(4, 3, 2)
    vol = ImageVolume(dims, (1, 1, 1), rs.randn(*dims.shape()))
    same = extract_patch(vol, PatchSpec((0, 0, 0), dims))
    assert np.array_equal(same.data, vol.data)

    two = ImageVolume(VolumeDims(2, 1, 1), (1, 1, 1), np.array([[[1.0]], [[2.0]]]))
    sub = extract_patch(two, PatchSpec((1, 0, 0), VolumeDims(1, 1, 1)))
    assert sub.data[0, 0, 0] == 2.0


def test_extract_patch_matches_naive_oracle(rs):
    dims = VolumeDims(8, 8, 8)
    vol = ImageVolume(dims, (1, 1, 1), rs.randn(*dims.shape()))
    for _ in range(50):
        pd = VolumeDims(rs.randint(1, 9), rs.randint(1, 9), rs.randint(1, 9))
        origin = (
            rs.randint(0, 9 - pd.nx),
            rs.randint(0, 9 - pd.ny),
            rs.randint(0, 9 - pd.nz),
        )
        patch = extract_patch(vol, PatchSpec(origin, pd))
        for i in range(pd.nx):
            for j in range(pd.ny):
                for k in range(pd.nz):
                    assert (
                        patch.data[i, j, k]
                        == vol.data[origin[0] + i, origin[1] + j, origin[2] + k]
                    )


def test_extract_patch_out_of_bounds():
    dims = VolumeDims(4, 4, 4)
    vol = BinaryMask(dims, np.zeros(dims.shape(), bool))
    with pytest.raises(OutOfBounds):
        extract_patch(vol, PatchSpec((2, 0, 0), VolumeDims(3, 1, 1)))
    with pytest.raises(OutOfBounds):
        extract_patch(vol, PatchSpec((-1, 0, 0), VolumeDims(1, 1, 1)))


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "m.vvol"
    header = {
        "magic": "vvol1",
        "dtype": "u8",
        "kind": "mask",
        "shape": [1, 1, 1],
        "spacing": [1, 1, 1],
    }
    path.write_bytes(json.dumps(header).encode() + b"\n" + b"\x01\x00")
    with pytest.raises(MalformedHeader):
        read_volume(path)


def test_mask_payload_must_be_binary(tmp_path):
    path = tmp_path / "m.vvol"
    header = {
        "magic": "vvol1",
        "dtype": "u8",
        "kind": "mask",
        "shape": [1, 1, 1],
        "spacing": [1, 1, 1],
    }
    path.write_bytes(json.dumps(header).encode() + b"\n" + b"\x02")
    with pytest.raises(ValueOutOfRange):
        read_volume(path)
