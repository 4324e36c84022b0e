import json

import numpy as np
import pytest
import torch

from depthvos.archive import ArchiveError, load_archive, save_archive


@pytest.fixture
def arrays():
    rng = np.random.default_rng(7)
    return {
        "fusion.s1.w1": rng.standard_normal((8, 12)).astype(np.float32),
        "fusion.s1.b1": rng.standard_normal(8).astype(np.float32),
        "segmenter.head.weight": rng.standard_normal((1, 4, 1, 1)).astype(np.float32),
    }


def shapes(arrays):
    return {k: v.shape for k, v in arrays.items()}


def test_round_trip_bit_identical(tmp_path, arrays):
    save_archive(tmp_path / "arch", arrays)
    loaded = load_archive(tmp_path / "arch", expected=shapes(arrays))
    assert set(loaded) == set(arrays)
    for k in arrays:
        assert loaded[k].dtype == np.float32
        np.testing.assert_array_equal(loaded[k], arrays[k])


def test_tensor_inputs_round_trip(tmp_path):
    t = {"a.w": torch.randn(3, 5)}
    save_archive(tmp_path / "arch", t)
    loaded = load_archive(tmp_path / "arch")
    np.testing.assert_array_equal(loaded["a.w"], t["a.w"].numpy())


def test_missing_required_array_named(tmp_path, arrays):
    save_archive(tmp_path / "arch", {k: v for k, v in arrays.items() if k != "fusion.s1.b1"})
    with pytest.raises(ArchiveError, match="fusion.s1.b1"):
        load_archive(tmp_path / "arch", expected=shapes(arrays))


def test_unknown_array_rejected(tmp_path, arrays):
    save_archive(tmp_path / "arch", {**arrays, "rogue.w": np.zeros(2, dtype=np.float32)})
    with pytest.raises(ArchiveError, match="rogue.w"):
        load_archive(tmp_path / "arch", expected=shapes(arrays))


def test_shape_mismatch_named(tmp_path, arrays):
    save_archive(tmp_path / "arch", arrays)
    wrong = shapes(arrays)
    wrong["fusion.s1.w1"] = (8, 11)
    with pytest.raises(ArchiveError, match="fusion.s1.w1"):
        load_archive(tmp_path / "arch", expected=wrong)


def test_truncated_blob_is_integrity_error(tmp_path, arrays):
    save_archive(tmp_path / "arch", arrays)
    blob = tmp_path / "arch" / "weights.bin"
    blob.write_bytes(blob.read_bytes()[:-8])
    with pytest.raises(ArchiveError, match="truncated"):
        load_archive(tmp_path / "arch", expected=shapes(arrays))


def test_corrupt_index_rejected(tmp_path, arrays):
    save_archive(tmp_path / "arch", arrays)
    (tmp_path / "arch" / "index.json").write_text("{not json")
    with pytest.raises(ArchiveError, match="corrupt"):
        load_archive(tmp_path / "arch")


def test_missing_archive(tmp_path):
    with pytest.raises(ArchiveError, match="no archive"):
        load_archive(tmp_path / "nowhere")


def test_byte_len_consistency_checked(tmp_path, arrays):
    save_archive(tmp_path / "arch", arrays)
    idx_path = tmp_path / "arch" / "index.json"
    idx = json.loads(idx_path.read_text())
    idx["fusion.s1.w1"]["byte_len"] = 12
    idx_path.write_text(json.dumps(idx))
    with pytest.raises(ArchiveError, match="fusion.s1.w1"):
        load_archive(tmp_path / "arch")
