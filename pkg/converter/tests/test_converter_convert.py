"""Normalization, manifest construction, and published-count gating."""

import hashlib
import json
import os

import numpy as np
import pytest

from sgr_convert.convert import TABLE8
from sgr_convert.convert import convert, convert_raw, normalize_edges
from sgr_convert.errors import DownloadError, ValidationError
from sgr_convert.sgr1 import check_csr, check_symmetry, read_sgr1
from sgr_convert.sources import RawDataset

from conftest import (TOY_DIRECTED_EDGES, TOY_LABELS, TOY_N, TOY_SELF_LOOPS,
                      write_npz)


def pairs(*uv):
    return np.array(uv, dtype=np.int64).reshape(-1, 2)


def edge_set(row_ptr, col_idx):
    out = set()
    for i in range(len(row_ptr) - 1):
        for j in col_idx[row_ptr[i]: row_ptr[i + 1]]:
            out.add((i, int(j)))
    return out


class TestNormalizeEdges:
    def test_single_direction_gets_symmetrized(self):
        row_ptr, col_idx, loops = normalize_edges(3, pairs((0, 1)))
        assert edge_set(row_ptr, col_idx) == {(0, 1), (1, 0)}
        assert loops == 0

    def test_duplicates_collapse(self):
        row_ptr, col_idx, _ = normalize_edges(
            2, pairs((0, 1), (0, 1), (1, 0), (1, 0), (1, 0)))
        assert edge_set(row_ptr, col_idx) == {(0, 1), (1, 0)}

    def test_self_loops_stripped_and_counted_per_node(self):
        # node 1 appears with two self-loop entries but counts once
        row_ptr, col_idx, loops = normalize_edges(
            3, pairs((1, 1), (1, 1), (2, 2), (0, 1)))
        assert loops == 2
        assert edge_set(row_ptr, col_idx) == {(0, 1), (1, 0)}

    def test_empty_input(self):
        row_ptr, col_idx, loops = normalize_edges(4, pairs())
        assert loops == 0
        assert len(col_idx) == 0
        np.testing.assert_array_equal(row_ptr, np.zeros(5, dtype=np.int64))

    def test_only_self_loops(self):
        row_ptr, col_idx, loops = normalize_edges(2, pairs((0, 0), (1, 1)))
        assert loops == 2
        assert len(col_idx) == 0

    def test_output_passes_structure_checks(self):
        rng = np.random.default_rng(3)
        raw = rng.integers(0, 30, size=(200, 2))
        row_ptr, col_idx, _ = normalize_edges(30, raw)
        check_csr(30, row_ptr, col_idx)
        check_symmetry(30, row_ptr, col_idx)


def toy_raw(name="unknown-id", n=4):
    # triangle 0-1-2 plus a self-loop at 3, node 3 otherwise isolated
    return RawDataset(
        name=name,
        directed_pairs=pairs((0, 1), (1, 2), (2, 0), (3, 3)),
        features=np.arange(n * 2, dtype=np.float32).reshape(n, 2),
        labels=np.array([0, 1, 1, -1], dtype=np.int64),
    )


class TestConvertRaw:
    def test_manifest_fields(self, tmp_path):
        out = str(tmp_path / "g.sgr1")
        m = convert_raw(toy_raw(), out)
        assert (m.nodes, m.directed_edges, m.features, m.classes) == (4, 6, 2, 2)
        assert m.self_loops_stripped == 1
        assert m.edge_count_delta == 0
        digest = hashlib.sha256(open(out, "rb").read()).hexdigest()
        assert m.checksum == digest

    def test_emitted_file_is_clean(self, tmp_path):
        out = str(tmp_path / "g.sgr1")
        convert_raw(toy_raw(), out)
        p = read_sgr1(out)
        check_symmetry(p.n, p.row_ptr, p.col_idx)  # read already ran check_csr
        assert edge_set(p.row_ptr, p.col_idx) == {
            (0, 1), (1, 0), (1, 2), (2, 1), (0, 2), (2, 0)}

    def test_published_counts_exact_match(self, tmp_path, monkeypatch):
        monkeypatch.setitem(TABLE8, "gated", (4, 6, 2, 2))
        m = convert_raw(toy_raw(name="gated"), str(tmp_path / "g.sgr1"))
        assert m.edge_count_delta == 0

    def test_published_counts_allow_recorded_self_loop_shortfall(
            self, tmp_path, monkeypatch):
        # the table books the self-loop as one directed edge: 6 + 1 = 7
        monkeypatch.setitem(TABLE8, "gated", (4, 7, 2, 2))
        m = convert_raw(toy_raw(name="gated"), str(tmp_path / "g.sgr1"))
        assert m.self_loops_stripped == 1
        assert m.edge_count_delta == -1

    @pytest.mark.parametrize("expected,field", [
        ((5, 6, 2, 2), "nodes"),
        ((4, 6, 3, 2), "features"),
        ((4, 6, 2, 4), "classes"),
        ((4, 9, 2, 2), "edges"),
    ])
    def test_published_count_mismatch_rejected(self, tmp_path, monkeypatch,
                                               expected, field):
        monkeypatch.setitem(TABLE8, "gated", expected)
        with pytest.raises(ValidationError, match="published"):
            convert_raw(toy_raw(name="gated"), str(tmp_path / "g.sgr1"))

    def test_edge_count_off_by_one_rejected(self, tmp_path, monkeypatch):
        monkeypatch.setitem(TABLE8, "gated", (4, 8, 2, 2))
        with pytest.raises(ValidationError, match="directed edges"):
            convert_raw(toy_raw(name="gated"), str(tmp_path / "g.sgr1"))

    def test_all_unlabeled_gives_zero_classes(self, tmp_path):
        raw = toy_raw()
        raw.labels = np.full(4, -1, dtype=np.int64)
        m = convert_raw(raw, str(tmp_path / "g.sgr1"))
        assert m.classes == 0


class TestConvertEndToEnd:
    def test_emits_file_and_manifest(self, planetoid_dir, tmp_path):
        out = str(tmp_path / "out")
        m = convert("toy", out, source_dir=planetoid_dir, download=False)
        assert m.nodes == TOY_N
        assert m.directed_edges == TOY_DIRECTED_EDGES
        assert m.self_loops_stripped == TOY_SELF_LOOPS
        table = json.load(open(os.path.join(out, "manifest.json")))
        assert table["toy"]["checksum"] == m.checksum
        assert table["toy"]["self_loops_stripped"] == TOY_SELF_LOOPS
        p = read_sgr1(os.path.join(out, "toy.sgr1"))
        np.testing.assert_array_equal(p.labels, TOY_LABELS)

    def test_rerun_is_idempotent(self, planetoid_dir, tmp_path):
        out = str(tmp_path / "out")
        first = convert("toy", out, source_dir=planetoid_dir, download=False)
        second = convert("toy", out, source_dir=planetoid_dir, download=False)
        assert first.checksum == second.checksum
        table = json.load(open(os.path.join(out, "manifest.json")))
        assert list(table) == ["toy"]

    def test_manifest_merges_multiple_datasets(self, planetoid_dir,
                                               tmp_path, toy_registered):
        out = str(tmp_path / "out")
        write_npz(planetoid_dir)
        convert("toy", out, source_dir=planetoid_dir, download=False)
        convert("toynpz", out, source_dir=planetoid_dir, download=False)
        table = json.load(open(os.path.join(out, "manifest.json")))
        assert sorted(table) == ["toy", "toynpz"]

    def test_npz_family_end_to_end(self, tmp_path, toy_registered):
        src = str(tmp_path / "src")
        write_npz(src)
        m = convert("toynpz", str(tmp_path / "out"), source_dir=src,
                    download=False)
        # directed (0,2) gains its reverse; the node-4 self-loop is stripped
        assert m.directed_edges == 6
        assert m.self_loops_stripped == 1

    def test_missing_sources_surface_as_download_error(self, tmp_path,
                                                       toy_registered):
        with pytest.raises(DownloadError):
            convert("toy", str(tmp_path / "out"),
                    source_dir=str(tmp_path / "empty"), download=False)


class TestEngineInterop:
    def test_engine_loads_emitted_file(self, planetoid_dir, tmp_path):
        # the engine package is a consumer of the format, nothing more;
        # this is the one place the two packages meet
        from sgcl.graph import load_graph

        out = str(tmp_path / "out")
        convert("toy", out, source_dir=planetoid_dir, download=False)
        g = load_graph(os.path.join(out, "toy.sgr1"))
        assert g.name == "toy"
        assert g.n == TOY_N
        assert g.adjacency.nnz == TOY_DIRECTED_EDGES
        assert g.num_classes == 3
        np.testing.assert_array_equal(g.labels, TOY_LABELS)
