"""Fetching and parsing of the standard dataset distributions.

Planetoid citation sets (cora, citeseer, pubmed) ship as the eight
`ind.<name>.<part>` pickle files from the original repository; the co-author
and co-purchase sets (cs, photo, computers) ship as single npz archives in
the gnn-benchmark layout. Both are parsed into one neutral intermediate:
(edge set as a directed scipy matrix or pair list, dense float32 features,
integer labels).
"""

from __future__ import annotations

import os
import pickle
import time
import urllib.error
import urllib.request
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DownloadError, SourceFormatError

PLANETOID_BASE = "https://github.com/kimiyoung/planetoid/raw/master/data"
GNN_BENCHMARK_BASE = "https://github.com/shchur/gnn-benchmark/raw/master/data/npz"

PLANETOID_PARTS = ("x", "y", "tx", "ty", "allx", "ally", "graph", "test.index")

# dataset id -> (family, remote file stem)
DATASETS = {
    "cora": ("planetoid", "cora"),
    "citeseer": ("planetoid", "citeseer"),
    "pubmed": ("planetoid", "pubmed"),
    "cs": ("gnn-benchmark", "ms_academic_cs"),
    "photo": ("gnn-benchmark", "amazon_electronics_photo"),
    "computers": ("gnn-benchmark", "amazon_electronics_computers"),
}

_RETRIES = 3
_TIMEOUT = 60.0


@dataclass
class RawDataset:
    """Parsed source data before normalization.

    directed_pairs holds every (u, v) edge exactly as the source states it,
    duplicates and self-loops included; normalization decides their fate.
    """

    name: str
    directed_pairs: np.ndarray  # (E, 2) int64
    features: np.ndarray        # (N, F) float32
    labels: np.ndarray          # (N,) int64, -1 = unlabeled


def fetch(url: str, dest: str) -> str:
    """Download url to dest with bounded retries; returns dest."""
    last: Exception | None = None
    for attempt in range(_RETRIES):
        try:
            with urllib.request.urlopen(url, timeout=_TIMEOUT) as resp:
                payload = resp.read()
            tmp = dest + ".tmp"
            with open(tmp, "wb") as fh:
                fh.write(payload)
            os.replace(tmp, dest)
            return dest
        except (urllib.error.URLError, OSError) as exc:
            last = exc
            if attempt + 1 < _RETRIES:
                time.sleep(2.0 ** attempt)
    raise DownloadError(f"failed to fetch {url} after {_RETRIES} attempts: {last}")


def source_files(dataset: str, source_dir: str, download: bool = True) -> list[str]:
    """Paths of this dataset's source files under source_dir, fetching any
    that are missing when download is allowed."""
    family, stem = DATASETS[dataset]
    os.makedirs(source_dir, exist_ok=True)
    if family == "planetoid":
        names = [f"ind.{stem}.{part}" for part in PLANETOID_PARTS]
        urls = [f"{PLANETOID_BASE}/{n}" for n in names]
    else:
        names = [f"{stem}.npz"]
        urls = [f"{GNN_BENCHMARK_BASE}/{n}" for n in names]
    paths = []
    for name, url in zip(names, urls):
        path = os.path.join(source_dir, name)
        if not os.path.exists(path):
            if not download:
                raise DownloadError(f"source file {path} missing and downloads disabled")
            fetch(url, path)
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# planetoid pickles


def _load_pickle(path: str):
    try:
        with open(path, "rb") as fh:
            # the upstream files were written by python 2
            return pickle.load(fh, encoding="latin1")
    except Exception as exc:
        raise SourceFormatError(f"cannot unpickle {path}: {exc}") from exc


def _as_dense(m) -> np.ndarray:
    if sp.issparse(m):
        return np.asarray(m.todense())
    return np.asarray(m)


def parse_planetoid(name: str, paths: list[str]) -> RawDataset:
    """Reassemble the split Planetoid distribution.

    Row order is train (allx) followed by test (tx), with the test block
    written back through the shuffled index list. Index gaps in test.index
    (CiteSeer has them) become isolated nodes with zero features and no
    label; they are real nodes in the published statistics and must be kept.
    """
    by_part = dict(zip(PLANETOID_PARTS, paths))
    x = _load_pickle(by_part["x"])
    tx = _load_pickle(by_part["tx"])
    allx = _load_pickle(by_part["allx"])
    ty = np.asarray(_load_pickle(by_part["ty"]))
    ally = np.asarray(_load_pickle(by_part["ally"]))
    graph = _load_pickle(by_part["graph"])
    if x.shape[1] != allx.shape[1]:
        raise SourceFormatError(
            f"{name}: x/allx feature widths disagree "
            f"({x.shape[1]} vs {allx.shape[1]})")

    with open(by_part["test.index"]) as fh:
        test_idx = np.array([int(line) for line in fh.read().split()],
                            dtype=np.int64)
    if len(test_idx) == 0:
        raise SourceFormatError(f"{name}: empty test.index")
    lo, hi = int(test_idx.min()), int(test_idx.max())
    span = hi - lo + 1

    # widen the test block to the full index span; gap rows stay all-zero
    tx_full = sp.lil_matrix((span, allx.shape[1]), dtype=np.float32)
    tx_full[test_idx - lo] = sp.csr_matrix(tx, dtype=np.float32)
    ty_full = np.zeros((span, ally.shape[1]), dtype=ally.dtype)
    ty_full[test_idx - lo] = ty

    features = sp.vstack([sp.csr_matrix(allx, dtype=np.float32),
                          tx_full.tocsr()]).tocsr()
    onehot = np.vstack([ally, ty_full])
    n = features.shape[0]
    if lo != allx.shape[0]:
        raise SourceFormatError(
            f"{name}: test block starts at {lo}, expected {allx.shape[0]}")

    labels = np.where(onehot.sum(axis=1) > 0,
                      onehot.argmax(axis=1), -1).astype(np.int64)

    pairs = []
    for u, nbrs in graph.items():
        for v in nbrs:
            pairs.append((int(u), int(v)))
    directed = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    if directed.size and (directed.min() < 0 or directed.max() >= n):
        raise SourceFormatError(f"{name}: edge endpoint outside [0, {n})")

    return RawDataset(name=name, directed_pairs=directed,
                      features=np.asarray(_as_dense(features), dtype=np.float32),
                      labels=labels)


# ---------------------------------------------------------------------------
# gnn-benchmark npz


def parse_gnn_benchmark(name: str, path: str) -> RawDataset:
    """Parse the single-archive CSR layout used by the co-author and
    co-purchase datasets."""
    try:
        with np.load(path, allow_pickle=False) as z:
            adj = sp.csr_matrix(
                (z["adj_data"], z["adj_indices"], z["adj_indptr"]),
                shape=tuple(z["adj_shape"]))
            if "attr_data" in z:
                attr = sp.csr_matrix(
                    (z["attr_data"], z["attr_indices"], z["attr_indptr"]),
                    shape=tuple(z["attr_shape"])).toarray()
            elif "attr_matrix" in z:
                attr = np.asarray(z["attr_matrix"])
            else:
                raise SourceFormatError(f"{name}: no feature matrix in archive")
            labels = np.asarray(z["labels"], dtype=np.int64)
    except (KeyError, ValueError, OSError) as exc:
        raise SourceFormatError(f"cannot parse {path}: {exc}") from exc

    if adj.shape[0] != adj.shape[1]:
        raise SourceFormatError(f"{name}: adjacency not square {adj.shape}")
    if attr.shape[0] != adj.shape[0] or labels.shape[0] != adj.shape[0]:
        raise SourceFormatError(f"{name}: node count mismatch across arrays")

    coo = adj.tocoo()
    directed = np.stack([coo.row.astype(np.int64),
                         coo.col.astype(np.int64)], axis=1)
    return RawDataset(name=name, directed_pairs=directed,
                      features=np.asarray(attr, dtype=np.float32),
                      labels=labels)


def load_raw(dataset: str, source_dir: str, download: bool = True) -> RawDataset:
    if dataset not in DATASETS:
        raise SourceFormatError(
            f"unknown dataset {dataset!r}; pick one of {sorted(DATASETS)}")
    paths = source_files(dataset, source_dir, download=download)
    family, _ = DATASETS[dataset]
    if family == "planetoid":
        return parse_planetoid(dataset, paths)
    return parse_gnn_benchmark(dataset, paths[0])
