"""Normalization perturbation on a synthetic domain-shift benchmark."""

from ._core import (
    ConfigError,
    __version__,
    batch_stat_variance,
    channel_mean_std,
    eval_checkpoint,
    make_benchmark,
    mmd,
    np_forward,
    np_plus_forward,
    np_reference,
    sample_noise,
    train,
)

__all__ = [
    "ConfigError",
    "__version__",
    "batch_stat_variance",
    "channel_mean_std",
    "eval_checkpoint",
    "make_benchmark",
    "mmd",
    "np_forward",
    "np_plus_forward",
    "np_reference",
    "sample_noise",
    "train",
]
