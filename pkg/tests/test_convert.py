import shutil

import pytest

from depthvos.data import (
    DataError,
    SynthConfig,
    convert_external_layout,
    load_sequence,
    synth_video,
)


@pytest.fixture
def external_layout(tmp_path):
    """Rearrange a synthetic clip into the conventional frames/annotations split."""
    man = synth_video(SynthConfig(seed=0, n_frames=4), tmp_path / "src")
    root = tmp_path / "ext"
    (root / "JPEGImages").mkdir(parents=True)
    (root / "Annotations").mkdir()
    (root / "Depth").mkdir()
    for idx, rec in enumerate(man.frames):
        shutil.copy(man.root / rec.image, root / "JPEGImages" / f"{idx:05d}.png")
        if idx in (0, 2):  # sparse annotation
            shutil.copy(man.root / rec.mask, root / "Annotations" / f"{idx:05d}.png")
        shutil.copy(man.root / rec.depth, root / "Depth" / f"{idx:05d}.png")
    return root


def test_convert_external_layout(external_layout):
    man = convert_external_layout(external_layout, "ext-seq", num_objects=2, depth="Depth")
    assert man.annotated == (0, 2)
    assert man.frames[1].mask is None
    assert man.frames[0].depth is not None
    frames, masks, depths = load_sequence(man)
    assert len(frames) == 4
    assert set(masks) == {0, 2}
    assert all(d is not None for d in depths)


def test_convert_without_depth(external_layout):
    man = convert_external_layout(external_layout, "ext-seq", num_objects=2)
    assert all(r.depth is None for r in man.frames)


def test_convert_missing_images(tmp_path):
    with pytest.raises(DataError):
        convert_external_layout(tmp_path, "x", num_objects=1)
