"""Depth-fused memory-based video object segmentation, desk scale."""

__version__ = "0.1.0"

from .core import (
    Frame,
    FeaturePyramid,
    MaskMap,
    ProbabilityVolume,
    ShapeError,
    argmax_decode,
    pad_to_multiple,
)
from .encoders import EncoderSpec, align_geometric_input, encode_geometric, encode_visual
from .fusion import FusionModule, fuse_pyramids, init_fusion
from .metrics import (
    DatasetReport,
    SequenceScore,
    boundary_f,
    evaluate_dataset,
    evaluate_sequence,
    j_and_f,
    jaccard,
)
from .model import (
    ModelConfig,
    VOSModel,
    build_model,
    init_from_first_frame,
    load_checkpoint,
    propagate_sequence,
    save_checkpoint,
    segment_frame,
)
from .segmenter import MemoryBank, MemoryEntry, memory_read, memory_write, soft_aggregate
from .training import StageConfig, segmentation_loss, train_stage, train_two_stages
from .tta import (
    Variant,
    apply_variant,
    ensemble,
    invert_probability,
    make_variants,
    propagate_with_tta,
)
from .data import (
    LoadedSequence,
    SequenceManifest,
    SynthConfig,
    load_manifest,
    load_sequence,
    render_sequence,
    sample_pseudo_video,
    synth_video,
)
from .archive import ArchiveError, load_archive, save_archive
