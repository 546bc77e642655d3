import numpy as np
import pytest

from airseg.errors import EmptyGraph
from airseg.morphology import CenterlineMask
from airseg.tree import (
    build_skeleton_graph,
    detect_cycles,
    parse_tree,
    prune_short_branches,
)
from airseg.volume import VolumeDims

from .conftest import mask_from_coords


def centerline(coords, dims=VolumeDims(16, 16, 16)):
    m = mask_from_coords(coords, dims)
    return CenterlineMask(m.dims, m.data)


# A chord-free octagonal ring in the z = 0 plane (26-connectivity).
RING = [
    (3, 3, 0),
    (4, 3, 0),
    (5, 4, 0),
    (5, 5, 0),
    (4, 6, 0),
    (3, 6, 0),
    (2, 5, 0),
    (2, 4, 0),
]


def test_empty_graph():
    g = build_skeleton_graph(centerline([]))
    assert g.nodes == [] and g.edge_count == 0
    assert detect_cycles(g) == 0
    with pytest.raises(EmptyGraph):
        parse_tree(g)


def test_straight_line_graph_and_tree():
    line = [(x, 5, 5) for x in range(5)]
    g = build_skeleton_graph(centerline(line))
    assert len(g.nodes) == 5 and g.edge_count == 4
    t = parse_tree(g)
    assert len(t.branches) == 1
    assert t.branches[0].parent_index is None
    assert t.cycle_count == 0
    assert len(t.branches[0].path) == 5


def test_graph_matches_pairwise_chebyshev_oracle(rs):
    dims = VolumeDims(10, 10, 10)
    for _ in range(30):
        data = rs.rand(*dims.shape()) < 0.06
        coords = [tuple(c) for c in np.argwhere(data)]
        g = build_skeleton_graph(centerline(coords, dims))
        want = set()
        for i, a in enumerate(coords):
            for b in coords[i + 1 :]:
                if max(abs(a[k] - b[k]) for k in range(3)) == 1:
                    want.add((min(a, b), max(a, b)))
        got = {
            (min(v, w), max(v, w)) for v in g.nodes for w in g.adjacency[v]
        }
        assert got == want


def test_cycle_rank():
    assert detect_cycles(build_skeleton_graph(centerline(RING))) == 1
    ring_b = [(x + 7, y + 6, z + 7) for x, y, z in RING]
    assert detect_cycles(build_skeleton_graph(centerline(RING + ring_b))) == 2
    y_tree = [(5, 5, z) for z in range(6, 12)] + [
        (5 - i, 5, 6 - i) for i in range(1, 6)
    ] + [(5 + i, 5, 6 - i) for i in range(1, 6)]
    assert detect_cycles(build_skeleton_graph(centerline(y_tree))) == 0


def test_y_tree_parse():
    trunk = [(5, 5, z) for z in range(6, 12)]
    arm1 = [(5 - i, 5, 6 - i) for i in range(1, 6)]
    arm2 = [(5 + i, 5, 6 - i) for i in range(1, 6)]
    t = parse_tree(build_skeleton_graph(centerline(trunk + arm1 + arm2)))
    assert len(t.branches) == 3
    root = t.branch(t.root_index)
    assert root.parent_index is None
    assert root.path[0] == (5, 5, 11)  # highest-z endpoint
    assert sorted(root.children_indices) == [2, 3]
    junction = (5, 5, 6)
    for idx in root.children_indices:
        child = t.branch(idx)
        assert child.parent_index == root.index
        assert child.path[0] == junction  # shared junction voxel
    # every skeleton voxel belongs to at least one branch
    assert t.voxels() == set(trunk + arm1 + arm2)
    # non-junction voxels belong to exactly one branch
    counts = {}
    for b in t.branches:
        for v in b.path:
            counts[v] = counts.get(v, 0) + 1
    assert all(n == 1 for v, n in counts.items() if v != junction)


def test_ring_with_stem_deterministic():
    # diagonal in-plane stem: its first voxel touches the ring only at (5,5,0)
    stem = [(5 + i, 5 + i, 0) for i in range(1, 4)]
    g = build_skeleton_graph(centerline(RING + stem))
    assert detect_cycles(g) == 1
    t1 = parse_tree(g)
    t2 = parse_tree(g)
    assert t1.cycle_count == 1
    assert t1.to_json_dict() == t2.to_json_dict()
    assert t1.voxels() == set(RING + stem)


def test_cycle_detects_iff_parse_reports(rs):
    dims = VolumeDims(12, 12, 12)
    for _ in range(30):
        data = rs.rand(*dims.shape()) < 0.05
        coords = [tuple(c) for c in np.argwhere(data)]
        if not coords:
            continue
        g = build_skeleton_graph(centerline(coords, dims))
        t = parse_tree(g)
        assert (detect_cycles(g) == 0) == (t.cycle_count == 0)
        assert t.voxels() == set(coords)


def test_explicit_root():
    line = [(x, 2, 2) for x in range(6)]
    t = parse_tree(build_skeleton_graph(centerline(line)), (0, 2, 2))
    assert t.branch(t.root_index).path[0] == (0, 2, 2)


def test_prune_identity_at_min_len_1():
    trunk = [(5, 5, z) for z in range(4, 10)]
    t = parse_tree(build_skeleton_graph(centerline(trunk)))
    p = prune_short_branches(t, 1)
    assert p.to_json_dict() == t.to_json_dict()


def test_prune_short_arm_merges_chain():
    trunk = [(5, 5, z) for z in range(4, 10)]
    long_arm = [(5 - i, 5, 4 - i) for i in range(1, 5)]
    stub = [(6, 6, 3)]
    t = parse_tree(build_skeleton_graph(centerline(trunk + long_arm + stub)))
    assert len(t.branches) == 3
    p = prune_short_branches(t, 3)
    assert len(p.branches) == 1
    assert len(p.branches[0].path) == 10  # trunk + junction + long arm merged
    again = prune_short_branches(p, 3)
    assert again.to_json_dict() == p.to_json_dict()


def test_prune_never_removes_root():
    # two-voxel root chain with one long child: root stays even below min_len
    stem = [(5, 5, 10), (5, 5, 9)]
    arm = [(5, 5, 8 - i) for i in range(6)]
    t = parse_tree(build_skeleton_graph(centerline(stem + arm)))
    p = prune_short_branches(t, 4)
    assert (5, 5, 10) in p.voxels()


def test_serialization_shape():
    line = [(x, 2, 2) for x in range(4)]
    t = parse_tree(build_skeleton_graph(centerline(line)))
    d = t.to_json_dict()
    assert set(d) == {"branches", "root_index", "cycle_count"}
    assert d["branches"][0]["path"] == [[x, 2, 2] for x in range(4)]
    assert d["branches"][0]["parent"] is None
