"""Pseudo-color mammograms by multi-scale morphological sifting."""

from ._core import (
    DetectorParams,
    ScaleBand,
    SiftConfig,
    __version__,
    blob_detect,
    compose_pcm,
    compute_scale_bands,
    dice,
    line_offsets,
    open_line,
    partial_aufc,
    preprocess,
    round_to_odd,
    run_pipeline,
    sift,
    tpr_at_fpi,
    wavelet_downsample,
    write_phantom_dataset,
)

__all__ = [
    "DetectorParams",
    "ScaleBand",
    "SiftConfig",
    "__version__",
    "blob_detect",
    "compose_pcm",
    "compute_scale_bands",
    "dice",
    "line_offsets",
    "open_line",
    "partial_aufc",
    "preprocess",
    "round_to_odd",
    "run_pipeline",
    "sift",
    "tpr_at_fpi",
    "wavelet_downsample",
    "write_phantom_dataset",
]
