import numpy as np
import pytest

from iotgraph.patches import (extract_patches, shared_nodes,
                              patch_alignment_graph, dump_patch_graph)


# path 0-1-2-3 plus chord (0, 2); gateway edge (1, 4) must be ignored
EDGES = {(0, 1), (1, 2), (2, 3), (0, 2), (1, 4)}


def test_patch_members():
    ps = extract_patches(4, EDGES)
    assert ps[0].members == (0, 1, 2)
    assert ps[1].members == (0, 1, 2)       # gateway 4 excluded
    assert ps[2].members == (0, 1, 2, 3)
    assert ps[3].members == (2, 3)
    assert ps.by_anchor(2).anchor == 2


def test_shared_nodes():
    ps = extract_patches(4, EDGES)
    assert shared_nodes(ps[0], ps[2]) == (0, 1, 2)
    assert shared_nodes(ps[0], ps[3]) == (2,)


def test_alignment_graph_strict_threshold():
    ps = extract_patches(4, EDGES)
    g = patch_alignment_graph(ps, k=2)
    # only pairs sharing strictly more than 2 nodes qualify
    assert set(g.adjacency) == {(0, 1), (0, 2), (1, 2)}
    assert g.shared(2, 0) == (0, 1, 2)
    assert g.neighbors(0) == [1, 2]
    assert g.shared(0, 3) == ()
    with pytest.raises(ValueError):
        patch_alignment_graph(ps, k=-1)


def test_dump_patch_graph(tmp_path):
    ps = extract_patches(4, EDGES)
    g = patch_alignment_graph(ps, k=2)
    path = tmp_path / "pg.txt"
    dump_patch_graph(g, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "0 1 3"
