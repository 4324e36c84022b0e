import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from depthvos.core import (
    Frame,
    MaskMap,
    ProbabilityVolume,
    ShapeError,
    argmax_decode,
    pad_mask_to_multiple,
    pad_to_multiple,
)


def _img(h, w, seed=0):
    rng = np.random.default_rng(seed)
    return rng.random((3, h, w)).astype(np.float32)


class TestPadToMultiple:
    def test_already_multiple_unchanged(self):
        f = pad_to_multiple(_img(64, 64), 16)
        assert (f.H, f.W) == (64, 64)
        assert (f.orig_h, f.orig_w) == (64, 64)

    def test_mirror_rows(self):
        img = _img(60, 60)
        f = pad_to_multiple(img, 16)
        assert (f.H, f.W) == (64, 64)
        got = f.data.numpy()
        np.testing.assert_array_equal(got[:, :60, :60], img)
        for j in range(4):
            np.testing.assert_array_equal(got[:, 60 + j, :60], img[:, 59 - j, :])
            np.testing.assert_array_equal(got[:, :60, 60 + j], img[:, :, 59 - j])

    def test_480x854(self):
        f = pad_to_multiple(_img(480, 854), 16)
        assert (f.H, f.W) == (480, 864)

    def test_rejects_empty(self):
        with pytest.raises(ShapeError):
            pad_to_multiple(np.zeros((3, 0, 5), dtype=np.float32))

    def test_rejects_bad_values(self):
        img = _img(8, 8)
        img[0, 0, 0] = 1.5
        with pytest.raises(ValueError):
            pad_to_multiple(img)

    def test_rejects_bad_multiple(self):
        with pytest.raises(ValueError):
            pad_to_multiple(_img(8, 8), 0)

    @settings(max_examples=100, deadline=None)
    @given(
        h=st.integers(min_value=1, max_value=97),
        w=st.integers(min_value=1, max_value=97),
        seed=st.integers(min_value=0, max_value=10_000),
    )
    def test_pad_crop_round_trip(self, h, w, seed):
        img = _img(h, w, seed)
        f = pad_to_multiple(img, 16)
        f.validate()
        np.testing.assert_array_equal(f.crop_to_orig().numpy(), img)

    def test_mask_pad_matches_frame_pad(self):
        labels = np.arange(60 * 60, dtype=np.int32).reshape(60, 60) % 3
        padded = pad_mask_to_multiple(labels, 16)
        assert padded.shape == (64, 64)
        np.testing.assert_array_equal(padded[60, :60], labels[59, :])


class TestArgmaxDecode:
    def test_one_hot_identity(self):
        rng = np.random.default_rng(1)
        labels = rng.integers(0, 3, (8, 8))
        probs = np.zeros((3, 8, 8), dtype=np.float32)
        for c in range(3):
            probs[c][labels == c] = 1.0
        m = argmax_decode(ProbabilityVolume(torch.from_numpy(probs)))
        np.testing.assert_array_equal(m.labels, labels)

    def test_uniform_goes_background(self):
        p = ProbabilityVolume(torch.full((3, 4, 4), 1 / 3))
        m = argmax_decode(p)
        assert (m.labels == 0).all()

    @settings(max_examples=50, deadline=None)
    @given(
        seed=st.integers(min_value=0, max_value=10_000),
        scale=st.floats(min_value=1e-3, max_value=1e3, allow_nan=False),
    )
    def test_positive_scale_invariance(self, seed, scale):
        rng = np.random.default_rng(seed)
        raw = rng.random((4, 6, 6)).astype(np.float64)
        a = argmax_decode(ProbabilityVolume(torch.from_numpy(raw)))
        b = argmax_decode(ProbabilityVolume(torch.from_numpy(raw * scale)))
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_ties_break_low(self):
        probs = torch.zeros(3, 2, 2)
        probs[1] = 0.5
        probs[2] = 0.5
        m = argmax_decode(ProbabilityVolume(probs))
        assert (m.labels == 1).all()


class TestTypes:
    def test_frame_rejects_wrong_rank(self):
        with pytest.raises(ShapeError):
            Frame(data=torch.zeros(64, 64), orig_h=64, orig_w=64)

    def test_frame_validate_catches_range(self):
        f = Frame(data=torch.full((3, 16, 16), 2.0), orig_h=16, orig_w=16)
        with pytest.raises(ValueError):
            f.validate()

    def test_mask_label_range(self):
        m = MaskMap(labels=np.array([[0, 3]], dtype=np.int32), num_objects=2)
        with pytest.raises(ValueError):
            m.validate()

    def test_probability_sums_checked(self):
        p = ProbabilityVolume(torch.full((2, 4, 4), 0.6))
        with pytest.raises(ValueError):
            p.validate()

    def test_probability_valid_case(self):
        p = ProbabilityVolume(torch.full((2, 4, 4), 0.5))
        p.validate()
