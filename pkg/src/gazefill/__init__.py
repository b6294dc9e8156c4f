"""Reconstruction of missing segments in smooth-pursuit gaze recordings.

Pipeline: decimate -> attention-based imputation -> shape-preserving cubic
upsampling -> convolutional refinement, benchmarked against PCHIP/SSA/KNN
baselines with time- and frequency-domain metrics on synthetic corpora.
"""

from .core import (
    Dataset,
    GazeSequence,
    MissingMask,
    NormalizationParams,
    SequenceMeta,
    load_dataset,
    load_sequences,
    save_dataset,
    split_by_participant,
    zscore,
)

__version__ = "0.1.0"
