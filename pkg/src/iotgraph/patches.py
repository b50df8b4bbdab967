"""1-hop patch decomposition and the patch-alignment graph."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Patch:
    """A node together with its 1-hop neighborhood.

    ``local_coords`` is filled by the patch localization stage; row order
    follows ``members``.
    """

    anchor: int
    members: tuple            # sorted node ids, anchor included
    local_coords: np.ndarray | None = None

    def __post_init__(self):
        assert self.anchor in self.members
        assert len(set(self.members)) == len(self.members)

    def index_of(self, node):
        return self.members.index(node)


@dataclass
class PatchSet:
    patches: list

    def __iter__(self):
        return iter(self.patches)

    def __len__(self):
        return len(self.patches)

    def __getitem__(self, i):
        return self.patches[i]

    def by_anchor(self, anchor):
        for p in self.patches:
            if p.anchor == anchor:
                return p
        raise KeyError(anchor)


@dataclass
class PatchGraph:
    """Alignment adjacency: patch pairs sharing strictly more than k nodes."""

    num_patches: int
    min_overlap: int
    adjacency: dict           # (a, j) with a < j -> tuple of shared node ids

    def neighbors(self, a):
        out = []
        for (i, j) in self.adjacency:
            if i == a:
                out.append(j)
            elif j == a:
                out.append(i)
        return sorted(out)

    def shared(self, a, j):
        key = (a, j) if a < j else (j, a)
        return self.adjacency.get(key, ())


def extract_patches(num_end_nodes, edges) -> PatchSet:
    """One patch per end-node: the node plus its 1-hop neighbors.

    Edges touching ids >= num_end_nodes (gateways) are ignored; patches are
    built over the end-node set only.
    """
    neighbors = {i: set() for i in range(num_end_nodes)}
    for a, b in edges:
        if a < num_end_nodes and b < num_end_nodes:
            neighbors[a].add(b)
            neighbors[b].add(a)
    patches = [Patch(anchor=i, members=tuple(sorted(neighbors[i] | {i})))
               for i in range(num_end_nodes)]
    return PatchSet(patches=patches)


def shared_nodes(patch_a: Patch, patch_j: Patch):
    """Sorted intersection of the two member lists."""
    return tuple(sorted(set(patch_a.members) & set(patch_j.members)))


def patch_alignment_graph(patchset: PatchSet, k: int = 2) -> PatchGraph:
    """Pairs of patches with shared-node count strictly greater than k."""
    if k < 0:
        raise ValueError("k must be >= 0")
    adjacency = {}
    n = len(patchset)
    member_sets = [set(p.members) for p in patchset]
    for a in range(n):
        for j in range(a + 1, n):
            common = member_sets[a] & member_sets[j]
            if len(common) > k:
                adjacency[(a, j)] = tuple(sorted(common))
    return PatchGraph(num_patches=n, min_overlap=k, adjacency=adjacency)


def dump_patch_graph(graph: PatchGraph, path):
    """Debug edge-list dump: one 'a j n_shared' line per alignable pair."""
    with open(path, "w") as f:
        for (a, j), shared in sorted(graph.adjacency.items()):
            f.write(f"{a} {j} {len(shared)}\n")
