"""Normalization and emission: raw source data -> SGR1 + manifest entry.

The emitted adjacency is undirected (both directions stored), deduplicated,
and has no self-loops. The published statistics table counts a source
self-loop as one directed edge, so stripping them can leave the emitted
count short by exactly that number; the manifest records the stripped count
and the delta instead of failing, and any other mismatch is an error.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError
from .sgr1 import write_sgr1
from .sources import RawDataset, load_raw

# dataset id -> (nodes, directed edges, feature dim, classes) as published
TABLE8 = {
    "cora": (2708, 10556, 1433, 7),
    "citeseer": (3327, 9228, 3703, 6),
    "pubmed": (19717, 88651, 500, 3),
    "cs": (18333, 163788, 6805, 15),
    "photo": (7650, 238163, 745, 8),
    "computers": (13752, 491722, 767, 10),
}


@dataclass
class DatasetManifest:
    name: str
    nodes: int
    directed_edges: int
    features: int
    classes: int
    checksum: str
    self_loops_stripped: int
    # emitted - published; 0 when exact, -self_loops_stripped when the
    # published count books each stripped self-loop as one directed edge
    edge_count_delta: int

    def to_json_dict(self) -> dict:
        return asdict(self)


def normalize_edges(n: int, directed_pairs: np.ndarray
                    ) -> tuple[np.ndarray, np.ndarray, int]:
    """Symmetrize, deduplicate, and strip self-loops.

    Returns (row_ptr, col_idx, distinct self-loop count). The stripped count
    is per node, matching how the published table books a self-loop as a
    single directed edge.
    """
    if directed_pairs.size == 0:
        return np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64), 0
    u, v = directed_pairs[:, 0], directed_pairs[:, 1]
    loops = int(np.unique(u[u == v]).size)
    keep = u != v
    if not keep.any():
        return np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64), loops
    m = sp.coo_matrix((np.ones(int(keep.sum())), (u[keep], v[keep])),
                      shape=(n, n)).tocsr()
    m = m + m.T
    m.data[:] = 1.0
    m.sort_indices()
    return (m.indptr.astype(np.int64), m.indices.astype(np.int64), loops)


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def convert_raw(raw: RawDataset, out_path: str) -> DatasetManifest:
    """Normalize one parsed dataset, write SGR1, and build its manifest."""
    n = raw.features.shape[0]
    row_ptr, col_idx, loops = normalize_edges(n, raw.directed_pairs)
    known = raw.labels[raw.labels >= 0]
    classes = int(known.max()) + 1 if known.size else 0
    write_sgr1(out_path, row_ptr, col_idx, raw.features,
               raw.labels.astype(np.int32), classes)

    manifest = DatasetManifest(
        name=raw.name,
        nodes=n,
        directed_edges=int(len(col_idx)),
        features=int(raw.features.shape[1]),
        classes=classes,
        checksum=_sha256(out_path),
        self_loops_stripped=loops,
        edge_count_delta=0,
    )

    expected = TABLE8.get(raw.name)
    if expected is not None:
        exp_n, exp_e, exp_f, exp_c = expected
        for field, got, want in (("nodes", manifest.nodes, exp_n),
                                 ("features", manifest.features, exp_f),
                                 ("classes", manifest.classes, exp_c)):
            if got != want:
                raise ValidationError(
                    f"{raw.name}: {field} {got} does not match the published "
                    f"statistics table ({want})")
        delta = manifest.directed_edges - exp_e
        if delta != 0 and delta + manifest.self_loops_stripped != 0:
            raise ValidationError(
                f"{raw.name}: directed edges {manifest.directed_edges} "
                f"(+{manifest.self_loops_stripped} stripped self-loops) does "
                f"not match the published statistics table ({exp_e})")
        manifest.edge_count_delta = delta
    return manifest


def convert(dataset: str, out_dir: str, source_dir: str | None = None,
            download: bool = True) -> DatasetManifest:
    """Fetch (or reuse cached) sources, emit <out_dir>/<dataset>.sgr1, and
    merge the manifest entry into <out_dir>/manifest.json."""
    os.makedirs(out_dir, exist_ok=True)
    if source_dir is None:
        source_dir = os.path.join(out_dir, "sources")
    raw = load_raw(dataset, source_dir, download=download)
    out_path = os.path.join(out_dir, f"{dataset}.sgr1")
    manifest = convert_raw(raw, out_path)
    _merge_manifest(os.path.join(out_dir, "manifest.json"), manifest)
    return manifest


def _merge_manifest(path: str, entry: DatasetManifest) -> None:
    table: dict = {}
    if os.path.exists(path):
        with open(path) as fh:
            table = json.load(fh)
    table[entry.name] = entry.to_json_dict()
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(table, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
