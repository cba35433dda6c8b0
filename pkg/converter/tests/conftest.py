"""Synthetic source-distribution fixtures.

Real downloads never happen in tests; every test builds miniature files in
the two upstream layouts (split pickle set, single npz archive) and feeds
them through the same parse/normalize/emit path the CLI uses.
"""

import os
import pickle

import numpy as np
import pytest
import scipy.sparse as sp

import sgr_convert.sources as sources

FEAT_DIM = 4
NUM_CLASSES = 3

# graph dict deliberately contains a duplicate (0,2), a self-loop (2,2),
# and test-block edges; node 7 is a test.index gap -> isolated node
TOY_GRAPH = {0: [1, 2, 2], 1: [0], 2: [0, 2], 3: [4], 4: [3],
             6: [0], 8: [9], 9: [8]}
TOY_TEST_INDEX = (6, 8, 9)
TOY_N = 10
TOY_DIRECTED_EDGES = 10  # {0-1, 0-2, 3-4, 0-6, 8-9} both ways
TOY_SELF_LOOPS = 1       # node 2
TOY_LABELS = [0, 1, 2, 0, 1, 2, 0, -1, 1, 2]


def write_planetoid(src_dir, name="toy", test_index=TOY_TEST_INDEX,
                    x_width=FEAT_DIM, graph=None):
    """Write a complete ind.<name>.* pickle set; returns src_dir."""
    os.makedirs(src_dir, exist_ok=True)
    rng = np.random.default_rng(0)
    allx = sp.csr_matrix(rng.random((6, FEAT_DIM)).astype(np.float32))
    x = sp.csr_matrix(rng.random((3, x_width)).astype(np.float32))
    ally = np.eye(NUM_CLASSES, dtype=np.int32)[[0, 1, 2, 0, 1, 2]]
    y = ally[:3]
    tx = sp.csr_matrix(rng.random((3, FEAT_DIM)).astype(np.float32))
    ty = np.eye(NUM_CLASSES, dtype=np.int32)[[0, 1, 2]]
    if graph is None:
        graph = TOY_GRAPH
    for part, obj in [("x", x), ("y", y), ("tx", tx), ("ty", ty),
                      ("allx", allx), ("ally", ally), ("graph", graph)]:
        with open(os.path.join(src_dir, f"ind.{name}.{part}"), "wb") as fh:
            pickle.dump(obj, fh, protocol=2)
    with open(os.path.join(src_dir, f"ind.{name}.test.index"), "w") as fh:
        fh.write("\n".join(str(i) for i in test_index) + "\n")
    return src_dir


def write_npz(src_dir, name="toynpz", dense_attr=False, square=True):
    """Write a gnn-benchmark style archive; returns its path.

    Adjacency is directed on purpose: (0,2) has no reverse and node 4
    carries a self-loop, so normalization has real work to do.
    """
    os.makedirs(src_dir, exist_ok=True)
    n = 5
    pairs = [(0, 1), (1, 0), (2, 3), (3, 2), (4, 4), (0, 2)]
    rows = np.array([p[0] for p in pairs])
    cols = np.array([p[1] for p in pairs])
    adj = sp.coo_matrix((np.ones(len(pairs)), (rows, cols)),
                        shape=(n, n if square else n + 1)).tocsr()
    attr = sp.csr_matrix(np.arange(n * 3, dtype=np.float32).reshape(n, 3))
    labels = np.array([0, 1, 0, 1, 2], dtype=np.int64)
    path = os.path.join(src_dir, f"{name}.npz")
    payload = {
        "adj_data": adj.data, "adj_indices": adj.indices,
        "adj_indptr": adj.indptr, "adj_shape": np.array(adj.shape),
        "labels": labels,
    }
    if dense_attr:
        payload["attr_matrix"] = attr.toarray()
    else:
        payload.update(attr_data=attr.data, attr_indices=attr.indices,
                       attr_indptr=attr.indptr,
                       attr_shape=np.array(attr.shape))
    np.savez(path, **payload)
    return path


NPZ_N = 5
NPZ_DIRECTED_EDGES = 6  # {0-1, 2-3, 0-2} both ways
NPZ_SELF_LOOPS = 1      # node 4


@pytest.fixture
def toy_registered(monkeypatch):
    """Register the fixture dataset ids so the normal lookup path finds
    them; no entry in the published-counts table, so no count gate."""
    monkeypatch.setitem(sources.DATASETS, "toy", ("planetoid", "toy"))
    monkeypatch.setitem(sources.DATASETS, "toynpz",
                        ("gnn-benchmark", "toynpz"))


@pytest.fixture
def planetoid_dir(tmp_path, toy_registered):
    return write_planetoid(str(tmp_path / "src"))
