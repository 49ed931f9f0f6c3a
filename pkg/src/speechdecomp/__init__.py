"""Voiced / unvoiced / noise decomposition of noisy speech with signal-adaptive segmentation."""
from .codebook import Codebook, CodebookMatch, estimate_variances, search, train_codebook
from .core import ArModel, SignalBuffer, ar_fit, ar_psd, itakura_saito, levinson
from .filters import extract_unvoiced, extract_voiced, joint_diagonalize, vslf_wiener
from .harmonic import HarmonicEstimate, PitchSearchConfig, nls_pitch, select_order
from .joint import JointConfig, SegmentFit, joint_estimate
from .metrics import lsd, mix_at_isnr, seg_snr
from .pipeline import (Decomposition, DecompositionReport, PipelineConfig, decompose,
                       decompose_file, read_wav, write_wav)
from .segmentation import SegmentGrid, SegmentationResult, dp_segment
from .whitening import Whitener, initial_noise_estimate

__version__ = "0.1.0"

__all__ = [
    "ArModel", "Codebook", "CodebookMatch", "Decomposition", "DecompositionReport",
    "HarmonicEstimate", "JointConfig", "PipelineConfig", "PitchSearchConfig", "SegmentFit",
    "SegmentGrid", "SegmentationResult", "SignalBuffer", "Whitener", "ar_fit", "ar_psd",
    "decompose", "decompose_file", "dp_segment", "estimate_variances", "extract_unvoiced",
    "extract_voiced", "initial_noise_estimate", "itakura_saito", "joint_diagonalize",
    "joint_estimate", "levinson", "lsd", "mix_at_isnr", "nls_pitch", "read_wav", "search",
    "seg_snr", "select_order", "train_codebook", "vslf_wiener", "write_wav",
]
