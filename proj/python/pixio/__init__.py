"""Pixio: masked pixel autoencoder pre-training, curation and probing."""

from ._pixio import (
    ConfigError,
    ContractError,
    Encoder,
    FormatError,
    color_entropy,
    delta1,
    gradcheck,
    rmse,
    run_cli,
    sample_block_mask,
    synthetic_images,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "Encoder",
    "FormatError",
    "color_entropy",
    "delta1",
    "gradcheck",
    "rmse",
    "run_cli",
    "sample_block_mask",
    "synthetic_images",
]
