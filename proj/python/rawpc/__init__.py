"""Partial-channel architecture search for raw-waveform spoofing countermeasures."""

from ._rawpc import (
    ConfigError,
    DataError,
    Genotype,
    Model,
    NumericError,
    RunConfig,
    ScratchRun,
    SearchRun,
    ShapeError,
    compute_eer,
    cosine_lr,
    derive_genotype,
    min_tdcf,
    reference_genotype,
    sample_mask,
    sinc_kernels,
    synth_task,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Genotype",
    "Model",
    "NumericError",
    "RunConfig",
    "ScratchRun",
    "SearchRun",
    "ShapeError",
    "compute_eer",
    "cosine_lr",
    "derive_genotype",
    "min_tdcf",
    "reference_genotype",
    "sample_mask",
    "sinc_kernels",
    "synth_task",
]
