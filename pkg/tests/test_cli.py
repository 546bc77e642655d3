import json
from pathlib import Path

import numpy as np
import pytest

from airseg import metrics
from airseg.cli import main
from airseg.experiment import ExperimentConfig, run_experiment
from airseg.jsonio import dumps_canonical
from airseg.model import TrainConfig
from airseg.morphology import keep_largest_component, skeletonize
from airseg.phantom import PhantomSpec
from airseg.tree import build_skeleton_graph, detect_cycles, parse_tree
from airseg.volume import BinaryMask, VolumeDims, read_volume, write_volume


def write_tube(path, dims=VolumeDims(12, 6, 6), span=10):
    data = np.zeros(dims.shape(), bool)
    data[:span, 2:4, 2:4] = True
    write_volume(BinaryMask(dims, data), path)
    return BinaryMask(dims, data)


def test_skeletonize_command(tmp_path, capsys):
    src = tmp_path / "in.vvol"
    dst = tmp_path / "out.vvol"
    mask = write_tube(src)
    assert main(["skeletonize", str(src), str(dst)]) == 0
    out = read_volume(dst)
    want = skeletonize(mask)
    assert np.array_equal(out.data, want.data)


def test_skeletonize_missing_file(tmp_path):
    assert main(["skeletonize", str(tmp_path / "nope.vvol"), str(tmp_path / "o.vvol")]) == 2


def test_usage_error_is_exit_1():
    assert main(["skeletonize"]) == 1
    assert main(["not-a-command"]) == 1


def test_metrics_command_identical(tmp_path, capsys):
    src = tmp_path / "m.vvol"
    write_tube(src)
    assert main(["metrics", str(src), str(src)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["dsc"] == 1.0 and report["iou"] == 1.0 and report["precision"] == 1.0
    assert report["td"] == 1.0 and report["bd"] == 1.0
    assert list(report) == ["dsc", "iou", "precision", "td", "bd", "cycle_count"]


def test_metrics_command_disjoint(tmp_path, capsys):
    dims = VolumeDims(12, 6, 6)
    a = np.zeros(dims.shape(), bool)
    a[0:3, 0:2, 0:2] = True
    b = np.zeros(dims.shape(), bool)
    b[6:12, 2:4, 2:4] = True
    pa, pb = tmp_path / "a.vvol", tmp_path / "b.vvol"
    write_volume(BinaryMask(dims, a), pa)
    write_volume(BinaryMask(dims, b), pb)
    assert main(["metrics", str(pa), str(pb)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["dsc"] == 0.0 and report["td"] == 0.0


def test_metrics_command_matches_in_process(tmp_path, capsys, rs):
    dims = VolumeDims(12, 8, 8)
    gt_data = np.zeros(dims.shape(), bool)
    gt_data[2:10, 3:5, 3:5] = True
    pred_data = gt_data & (rs.rand(*dims.shape()) < 0.9)
    pred_data |= rs.rand(*dims.shape()) < 0.02
    gt = BinaryMask(dims, gt_data)
    pred = BinaryMask(dims, pred_data)
    pp, gp = tmp_path / "p.vvol", tmp_path / "g.vvol"
    write_volume(pred, pp)
    write_volume(gt, gp)
    assert main(["metrics", str(pp), str(gp), "--bd-threshold", "0.7"]) == 0
    report = json.loads(capsys.readouterr().out)

    tree = parse_tree(build_skeleton_graph(skeletonize(gt)))
    post = keep_largest_component(pred)
    want = metrics.evaluate_segmentation(post, gt, tree, postprocess=False, bd_threshold=0.7)
    for k in ("dsc", "iou", "precision", "td", "bd"):
        assert abs(report[k] - float(format(want[k], ".9g"))) < 1e-9
    assert report["cycle_count"] == detect_cycles(build_skeleton_graph(skeletonize(post)))


def test_metrics_dim_mismatch(tmp_path):
    a = tmp_path / "a.vvol"
    b = tmp_path / "b.vvol"
    write_tube(a, VolumeDims(12, 6, 6))
    write_tube(b, VolumeDims(10, 6, 6), span=8)
    assert main(["metrics", str(a), str(b)]) == 2


def test_phantom_command_deterministic(tmp_path, capsys):
    out1 = tmp_path / "p1"
    out2 = tmp_path / "p2"
    args = ["phantom", "--seed", "9", "--dims", "24,24,24", "--branches", "1,5", "--out"]
    assert main(args + [str(out1)]) == 0
    capsys.readouterr()
    assert main(args + [str(out2)]) == 0
    capsys.readouterr()
    for name in ("image.vvol", "gt.vvol", "centerline.vvol", "meta.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    meta = json.loads((out1 / "meta.json").read_text())
    gt = read_volume(out1 / "gt.vvol")
    from airseg.tree import prune_short_branches

    t = prune_short_branches(parse_tree(build_skeleton_graph(skeletonize(gt))), 3)
    assert len(t.branches) == meta["branch_count"]


def test_phantom_infeasible_is_exit_2(tmp_path):
    assert (
        main(["phantom", "--seed", "1", "--dims", "20,20,20", "--branches", "2,2",
              "--out", str(tmp_path / "x")])
        == 2
    )


def test_run_command_matches_in_process(tmp_path, capsys):
    cfg = ExperimentConfig(
        strategy="least_confidence",
        rounds=1,
        batch_per_round=2,
        initial_labeled_count=2,
        pool_size=2,
        validation_count=2,
        test_count=1,
        train=TrainConfig(epochs=1),
        phantom=PhantomSpec(dims=VolumeDims(20, 20, 20), branch_count=(1, 3)),
        seed=3,
        min_sample_epochs=4,
    )
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(dumps_canonical(cfg.to_dict()))
    out_dir = tmp_path / "exp"
    assert main(["run", "--config", str(cfg_path), "--out", str(out_dir)]) == 0
    report = json.loads(capsys.readouterr().out)

    want = run_experiment(cfg, tmp_path / "exp2")
    assert report["rounds"] == len(want.records) - 1
    for k, v in want.test.items():
        assert abs(report["test"][k] - v) < 1e-6
    for name in sorted((out_dir / "rounds").iterdir()):
        twin = tmp_path / "exp2" / "rounds" / name.name
        assert name.read_bytes() == twin.read_bytes()


def test_run_command_invalid_strategy(tmp_path):
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps({"strategy": "bogus"}))
    assert main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "e")]) == 1


def test_float_formatting_stable():
    assert dumps_canonical({"x": 0.1234567891234}, float_digits=9) == '{"x":0.123456789}'
    assert dumps_canonical({"x": 1.0}, float_digits=9) == '{"x":1.0}'
    assert dumps_canonical({"x": 3}, float_digits=9) == '{"x":3}'
