"""Batch-means error bars and residual normalisation."""

from typing import NamedTuple

import numpy as np

N_BATCHES = 20
# Residuals with all error bars at roundoff level are reported against this
# floor instead of dividing by zero.
ERROR_FLOOR = 1e-10


class Estimate(NamedTuple):
    """Sample mean with its batch-means standard error.

    For complex samples the error is `se(Re) + 1j * se(Im)`.
    """

    mean: complex
    stderr: complex


def batch_means(samples: np.ndarray, n_batches: int = N_BATCHES) -> Estimate:
    """Mean and standard error of a stationary series along axis 0.

    The series is cut into `n_batches` contiguous batches (fewer if it is
    shorter); the error is the standard deviation of batch averages over
    sqrt(number of batches).
    """
    samples = np.asarray(samples)
    n = samples.shape[0]
    if n == 0:
        raise ValueError("batch_means needs at least one sample")
    mean = samples.mean(axis=0)
    n_batches = min(n_batches, n)
    if n_batches < 2:
        return Estimate(mean, np.zeros_like(mean))

    usable = (n // n_batches) * n_batches
    batches = samples[:usable].reshape(
        (n_batches, usable // n_batches) + samples.shape[1:]
    ).mean(axis=1)
    if np.iscomplexobj(batches):
        err = _batch_error(batches.real) + 1j * _batch_error(batches.imag)
    else:
        err = _batch_error(batches)
    return Estimate(mean, err)


def _batch_error(batches: np.ndarray) -> np.ndarray:
    return batches.std(axis=0, ddof=1) / np.sqrt(batches.shape[0])


def combined_error(*errors: float) -> float:
    return float(np.sqrt(sum(abs(e) ** 2 for e in errors)))


def residual_units(residual: float, *errors: float) -> float:
    """Express |residual| in units of the combined error."""
    return abs(residual) / max(combined_error(*errors), ERROR_FLOOR)
