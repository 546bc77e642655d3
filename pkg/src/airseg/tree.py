"""Skeleton graphs and branch-level tree parsing.

A centerline mask becomes a graph (voxels as nodes, 26-neighbor pairs as
edges), cycles are broken deterministically, and the remaining forest is
decomposed into indexed branches: maximal chains of degree-2 voxels running
between junctions (degree >= 3) and endpoints.  Junction voxels are shared
between a parent branch's tail and its children's heads, which keeps
per-branch voxel sums well defined.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyGraph, OutOfBounds
from .morphology import CenterlineMask

Coord = tuple[int, int, int]


@dataclass
class SkeletonGraph:
    nodes: list[Coord]
    adjacency: dict[Coord, tuple[Coord, ...]]

    @property
    def edge_count(self) -> int:
        return sum(len(v) for v in self.adjacency.values()) // 2

    def degree(self, v: Coord) -> int:
        return len(self.adjacency[v])


@dataclass
class Branch:
    index: int
    path: list[Coord]
    parent_index: int | None = None
    children_indices: list[int] = field(default_factory=list)


@dataclass
class AirwayTree:
    branches: list[Branch]
    root_index: int
    cycle_count: int

    def branch(self, index: int) -> Branch:
        return self.branches[index - 1]

    def voxels(self) -> set[Coord]:
        out: set[Coord] = set()
        for b in self.branches:
            out.update(b.path)
        return out

    def to_json_dict(self) -> dict:
        return {
            "branches": [
                {
                    "index": b.index,
                    "parent": b.parent_index,
                    "children": list(b.children_indices),
                    "path": [[int(x), int(y), int(z)] for x, y, z in b.path],
                }
                for b in self.branches
            ],
            "root_index": self.root_index,
            "cycle_count": self.cycle_count,
        }


def build_skeleton_graph(cl: CenterlineMask) -> SkeletonGraph:
    """Graph over true voxels with an edge for every 26-neighbor pair."""
    coords = np.argwhere(cl.data)
    nodes = sorted(map(tuple, coords.tolist()))
    node_set = set(nodes)
    adjacency: dict[Coord, tuple[Coord, ...]] = {}
    for v in nodes:
        x, y, z = v
        nbrs = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    if dx == dy == dz == 0:
                        continue
                    w = (x + dx, y + dy, z + dz)
                    if w in node_set:
                        nbrs.append(w)
        adjacency[v] = tuple(sorted(nbrs))
    return SkeletonGraph(nodes, adjacency)


def detect_cycles(g: SkeletonGraph) -> int:
    """Cycle rank E - V + C of the graph."""
    n = len(g.nodes)
    if n == 0:
        return 0
    comp = _component_count(g)
    return g.edge_count - n + comp


def _component_count(g: SkeletonGraph) -> int:
    seen: set[Coord] = set()
    count = 0
    for v in g.nodes:
        if v in seen:
            continue
        count += 1
        stack = [v]
        seen.add(v)
        while stack:
            u = stack.pop()
            for w in g.adjacency[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
    return count


class _UnionFind:
    def __init__(self):
        self.parent: dict[Coord, Coord] = {}

    def find(self, v: Coord) -> Coord:
        root = v
        while self.parent.setdefault(root, root) != root:
            root = self.parent[root]
        while self.parent[v] != root:
            self.parent[v], v = root, self.parent[v]
        return root

    def union(self, a: Coord, b: Coord) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[max(ra, rb)] = min(ra, rb)
        return True


def _break_cycles(g: SkeletonGraph) -> tuple[dict[Coord, list[Coord]], int]:
    """Drop every edge that is the lexicographically smallest edge of a cycle.

    Processing edges in descending order and keeping those that join new
    components (max spanning forest) removes exactly the edges that are the
    minimum of some cycle, one per independent cycle.
    """
    edges = sorted(
        {(min(v, w), max(v, w)) for v in g.nodes for w in g.adjacency[v]},
        reverse=True,
    )
    uf = _UnionFind()
    kept: dict[Coord, list[Coord]] = {v: [] for v in g.nodes}
    removed = 0
    for a, b in edges:
        if uf.union(a, b):
            kept[a].append(b)
            kept[b].append(a)
        else:
            removed += 1
    for v in kept:
        kept[v] = sorted(kept[v])
    return kept, removed


def _pick_root(nodes: list[Coord], adj: dict[Coord, list[Coord]]) -> Coord:
    """Highest-z endpoint; falls back to all nodes when no endpoint exists."""
    candidates = [v for v in nodes if len(adj[v]) <= 1]
    if not candidates:
        candidates = nodes
    return min(candidates, key=lambda v: (-v[2], v[0], v[1]))


def parse_tree(
    g: SkeletonGraph, root_policy: str | Coord = "highest_z"
) -> AirwayTree:
    """Decompose the skeleton into indexed branches from a root.

    root_policy is either "highest_z" or an explicit voxel coordinate.
    Branch indices follow breadth-first discovery order from the root;
    disconnected skeleton components are parsed after the root's component
    with their own highest-z sub-roots (parentless branches).
    """
    if not g.nodes:
        raise EmptyGraph("cannot parse an empty skeleton graph")
    adj, cycle_count = _break_cycles(g)

    if root_policy == "highest_z":
        root = _pick_root(g.nodes, adj)
    else:
        root = tuple(root_policy)  # type: ignore[arg-type]
        if root not in adj:
            raise OutOfBounds(f"explicit root {root} is not a skeleton voxel")

    branches: list[Branch] = []
    used_edges: set[tuple[Coord, Coord]] = set()
    covered: set[Coord] = set()

    def edge_key(a: Coord, b: Coord) -> tuple[Coord, Coord]:
        return (min(a, b), max(a, b))

    def walk_chain(start: Coord, first: Coord) -> list[Coord]:
        """Follow degree-2 voxels from start through first to a chain end."""
        path = [start, first]
        used_edges.add(edge_key(start, first))
        prev, cur = start, first
        while len(adj[cur]) == 2:
            nxt = adj[cur][0] if adj[cur][0] != prev else adj[cur][1]
            used_edges.add(edge_key(cur, nxt))
            path.append(nxt)
            prev, cur = cur, nxt
        return path

    def emit(path: list[Coord], parent: int | None) -> int:
        idx = len(branches) + 1
        branches.append(Branch(idx, path, parent))
        if parent is not None:
            branches[parent - 1].children_indices.append(idx)
        covered.update(path)
        return idx

    def parse_component(sub_root: Coord) -> None:
        queue: list[tuple[Coord, int | None]] = []
        deg = len(adj[sub_root])
        if deg == 0:
            emit([sub_root], None)
            return
        if deg == 2:
            # interior root: its whole chain is one branch, both ends enqueued
            left = walk_chain(sub_root, adj[sub_root][0])
            right = walk_chain(sub_root, adj[sub_root][1])
            path = list(reversed(left))[:-1] + right
            idx = emit(path, None)
            for end in (path[0], path[-1]):
                if len(adj[end]) >= 3:
                    queue.append((end, idx))
        else:
            queue.append((sub_root, None))
        while queue:
            at, parent_idx = queue.pop(0)
            covered.add(at)
            for nbr in adj[at]:
                if edge_key(at, nbr) in used_edges:
                    continue
                path = walk_chain(at, nbr)
                idx = emit(path, parent_idx)
                if parent_idx is None:
                    # remaining chains off a parentless junction root hang
                    # from the first chain, which owns the root voxel
                    parent_idx = idx
                end = path[-1]
                if len(adj[end]) >= 3:
                    queue.append((end, idx))

    parse_component(root)
    root_index = 1
    for v in g.nodes:
        if v not in covered:
            comp = _collect_component(v, adj)
            sub_root = _pick_root(comp, adj)
            parse_component(sub_root)

    return AirwayTree(branches, root_index, cycle_count)


def _collect_component(v: Coord, adj: dict[Coord, list[Coord]]) -> list[Coord]:
    seen = {v}
    stack = [v]
    while stack:
        u = stack.pop()
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return sorted(seen)


def prune_short_branches(t: AirwayTree, min_len: int) -> AirwayTree:
    """Drop leaf branches shorter than min_len voxels, cascading re-merges.

    The root branch survives unconditionally.  Removal happens on the voxel
    set followed by a re-parse from the original root, so chains whose
    junction dropped to degree 2 merge back into single branches.
    """
    if min_len < 1:
        raise ValueError("min_len must be >= 1")
    root_voxel = t.branch(t.root_index).path[0]
    voxels = t.voxels()
    cycle_count = t.cycle_count
    current = t
    while True:
        doomed: set[Coord] = set()
        for b in current.branches:
            if b.index == current.root_index or b.parent_index is None:
                continue
            if not b.children_indices and len(b.path) < min_len:
                doomed.update(b.path[1:])
        if not doomed:
            return current
        voxels -= doomed
        g = _graph_from_voxels(sorted(voxels))
        current = parse_tree(g, root_voxel)
        current.cycle_count = cycle_count


def _graph_from_voxels(nodes: list[Coord]) -> SkeletonGraph:
    node_set = set(nodes)
    adjacency = {}
    for x, y, z in nodes:
        nbrs = [
            (x + dx, y + dy, z + dz)
            for dx in (-1, 0, 1)
            for dy in (-1, 0, 1)
            for dz in (-1, 0, 1)
            if (dx, dy, dz) != (0, 0, 0) and (x + dx, y + dy, z + dz) in node_set
        ]
        adjacency[(x, y, z)] = tuple(sorted(nbrs))
    return SkeletonGraph(nodes, adjacency)
