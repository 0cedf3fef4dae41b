import json

import numpy as np
import pytest

from haste import tensor_store as ts


class TestTensorRoundTrip:
    def test_small_matrix_identity(self, tmp_path):
        t = np.arange(6, dtype=np.float32).reshape(2, 3)
        path = tmp_path / "t.hste"
        ts.write_tensor(path, t)
        back = ts.read_tensor(path)
        assert back.dtype == np.float32
        assert np.array_equal(back, t)

    def test_random_shapes_bit_exact(self, tmp_path, rng):
        for trial in range(30):
            ndim = int(rng.integers(1, 4))
            shape = tuple(int(rng.integers(1, 6)) for _ in range(ndim))
            t = rng.normal(size=shape).astype(np.float32)
            path = tmp_path / f"t{trial}.hste"
            ts.write_tensor(path, t)
            back = ts.read_tensor(path)
            assert back.shape == t.shape
            assert back.tobytes() == t.tobytes()

    def test_single_element_file_size(self, tmp_path):
        # Header fields: magic(4) + version(4) + dtype(1) + ndim(1) +
        # reserved(2), then one u64 dim and one f32 payload element.
        path = tmp_path / "one.hste"
        ts.write_tensor(path, np.array([0.0], dtype=np.float32))
        assert path.stat().st_size == 4 + 4 + 1 + 1 + 2 + 8 + 4 == 24

    def test_header_layout(self, tmp_path):
        path = tmp_path / "t.hste"
        ts.write_tensor(path, np.zeros((2, 3), dtype=np.float32))
        raw = path.read_bytes()
        assert raw[:4] == b"HSTE"
        assert int.from_bytes(raw[4:8], "little") == 1  # version
        assert raw[8] == 0  # dtype f32
        assert raw[9] == 2  # ndim
        assert raw[10:12] == b"\x00\x00"  # reserved
        assert int.from_bytes(raw[12:20], "little") == 2
        assert int.from_bytes(raw[20:28], "little") == 3

    def test_nan_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="non-finite element"):
            ts.write_tensor(tmp_path / "t.hste", np.array([np.nan], dtype=np.float32))

    def test_inf_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="non-finite element"):
            ts.write_tensor(tmp_path / "t.hste", np.array([np.inf, 1.0]))

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "t.hste"
        ts.write_tensor(path, np.ones(3, dtype=np.float32))
        raw = bytearray(path.read_bytes())
        raw[:4] = b"NOPE"
        path.write_bytes(bytes(raw))
        with pytest.raises(ValueError, match="bad magic"):
            ts.read_tensor(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "t.hste"
        ts.write_tensor(path, np.ones(3, dtype=np.float32))
        path.write_bytes(path.read_bytes()[:-2])
        with pytest.raises(ValueError, match="payload size mismatch"):
            ts.read_tensor(path)


def _write_manifest_with_blocks(tmp_path, shapes, n=None):
    layers = []
    for i, shape in enumerate(shapes):
        name = f"layer{i}"
        file = f"{name}.hste"
        ts.write_tensor(tmp_path / file, np.ones(shape, dtype=np.float32))
        layers.append({"name": name, "file": file, "dim": shape[1]})
    manifest = {"n": n if n is not None else shapes[0][0], "layers": layers,
                "labels": None, "predictions": None}
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(manifest))
    return path


class TestEmbeddingSet:
    def test_two_layers_consistent(self, tmp_path):
        path = _write_manifest_with_blocks(tmp_path, [(4, 8), (4, 16)])
        e = ts.read_embedding_set(path)
        assert e.n == 4
        assert e.layer_names == ("layer0", "layer1")
        assert e.layer("layer1").shape == (4, 16)

    def test_row_count_mismatch(self, tmp_path):
        path = _write_manifest_with_blocks(tmp_path, [(4, 8), (5, 8)])
        with pytest.raises(ValueError, match="row-count mismatch"):
            ts.read_embedding_set(path)

    def test_no_layers(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps({"n": 0, "layers": []}))
        with pytest.raises(ValueError, match="no layers"):
            ts.read_embedding_set(path)

    def test_duplicate_layer_name(self, tmp_path):
        ts.write_tensor(tmp_path / "a.hste", np.ones((2, 2), dtype=np.float32))
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps({
            "n": 2,
            "layers": [{"name": "a", "file": "a.hste", "dim": 2},
                       {"name": "a", "file": "a.hste", "dim": 2}],
        }))
        with pytest.raises(ValueError, match="duplicate layer name"):
            ts.read_embedding_set(path)

    def test_missing_file(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps({
            "n": 2, "layers": [{"name": "a", "file": "gone.hste", "dim": 2}],
        }))
        with pytest.raises(FileNotFoundError):
            ts.read_embedding_set(path)

    def test_order_preserved(self, tmp_path):
        path = _write_manifest_with_blocks(tmp_path, [(3, 2), (3, 4), (3, 6)])
        e = ts.read_embedding_set(path)
        assert e.layer_names == ("layer0", "layer1", "layer2")


class TestLabels:
    def test_basic(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("index,label\n0,1\n1,0\n")
        lv = ts.read_labels(path, 2)
        assert lv.labels.tolist() == [1, 0]
        assert lv.num_classes == 2

    def test_rows_sorted_by_index(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("index,label\n1,0\n0,1\n")
        lv = ts.read_labels(path, 2)
        assert lv.labels.tolist() == [1, 0]

    def test_index_gap(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("index,label\n0,1\n2,0\n")
        with pytest.raises(ValueError, match="index gap at 1"):
            ts.read_labels(path, 2)

    def test_duplicate_index(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("index,label\n0,1\n0,0\n")
        with pytest.raises(ValueError, match="duplicate index"):
            ts.read_labels(path, 2)

    def test_label_out_of_range(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("index,label\n0,5\n")
        with pytest.raises(ValueError, match="label out of range"):
            ts.read_labels(path, 3)

    def test_roundtrip_lf_endings(self, tmp_path):
        lv = ts.LabelVector(labels=np.array([2, 0, 1]), num_classes=3)
        path = tmp_path / "labels.csv"
        ts.write_labels(path, lv)
        raw = path.read_bytes()
        assert b"\r" not in raw
        back = ts.read_labels(path, 3)
        assert back.labels.tolist() == [2, 0, 1]


class TestPredictions:
    def test_row_sum_enforced(self, tmp_path):
        path = tmp_path / "p.hste"
        ts.write_tensor(path, np.array([[0.5, 0.4]], dtype=np.float32))
        with pytest.raises(ValueError, match="sums to"):
            ts.read_predictions(path)

    def test_valid_rows_load(self, tmp_path, rng):
        from oracles import random_prediction_matrix

        rows = random_prediction_matrix(rng, 20, 5)
        path = tmp_path / "p.hste"
        ts.write_tensor(path, rows)
        pm = ts.read_predictions(path)
        assert pm.n == 20 and pm.num_classes == 5

    def test_negative_entry_rejected(self, tmp_path):
        path = tmp_path / "p.hste"
        ts.write_tensor(path, np.array([[-0.1, 1.1]], dtype=np.float32))
        with pytest.raises(ValueError, match=r"lie in \[0, 1\]"):
            ts.read_predictions(path)


class TestSubset:
    def test_roundtrip(self, tmp_path):
        s = ts.SubsetIndex(indices=np.array([4, 1, 3]), source_n=6,
                           method="ca", params={"fraction": 0.5})
        path = tmp_path / "s.json"
        ts.write_subset(path, s)
        back = ts.read_subset(path)
        assert back.indices.tolist() == [4, 1, 3]  # order preserved
        assert back.source_n == 6
        assert back.method == "ca"
        assert back.params == {"fraction": 0.5}

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="out of range"):
            ts.SubsetIndex(indices=np.array([0, 7]), source_n=5)

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError, match="distinct"):
            ts.SubsetIndex(indices=np.array([1, 1]), source_n=5)


class TestScores:
    def test_roundtrip_with_blank_accuracy(self, tmp_path):
        rows = [("a", "leep", -0.5, 0.9), ("b", "leep", -0.7, None)]
        path = tmp_path / "scores.csv"
        ts.write_scores(path, rows)
        back = ts.read_scores(path)
        assert back[0] == ("a", "leep", -0.5, 0.9)
        assert back[1] == ("b", "leep", -0.7, None)

    def test_header_enforced(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("a,b,c\n")
        with pytest.raises(ValueError, match="expected header"):
            ts.read_scores(path)
