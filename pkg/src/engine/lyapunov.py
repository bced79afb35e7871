"""Lyapunov spectrum of the transfer cocycle by QR reorthogonalization."""

import logging
from collections.abc import Iterator
from typing import NamedTuple

import numpy as np
from pydantic import BaseModel

from .algebra import exterior_power_norm
from .exceptions import TransferOverflowError
from .model import DisorderConfig, sample_realization
from .stats import ERROR_FLOOR, N_BATCHES, batch_means, combined_error
from .transfer import stream_propagators, transfer

logger = logging.getLogger("engine.lyapunov")

REORTHO_EVERY = 10
_TAG_FRAME = 4


class LyapunovSpectrum(NamedTuple):
    """2L exponents in descending order with batch-means errors."""

    gamma: np.ndarray
    stderr: np.ndarray
    n_cells: int
    z: complex


class PartialSum(NamedTuple):
    value: float
    stderr: float


class SymmetryReport(BaseModel):
    reflection_units: float
    pairing_units: float
    reflection_max: float
    pairing_max: float


class LevelGap(NamedTuple):
    p: int
    gap: float
    significance: float


def _grouped_products(
    config: DisorderConfig,
    z: complex,
    n_cells: int,
    reortho_every: int,
    seed: int | None,
    first_cell: int,
) -> Iterator[np.ndarray]:
    """Products of `reortho_every` consecutive cell propagators; the last
    group may be shorter."""
    pending = None
    for stack in stream_propagators(config, z, n_cells, first_cell, seed):
        if pending is not None:
            stack = np.concatenate([pending, stack])
        full = (len(stack) // reortho_every) * reortho_every
        pending = stack[full:] if full < len(stack) else None
        if full == 0:
            continue
        groups = stack[:full].reshape(
            (-1, reortho_every) + stack.shape[1:]
        )
        product = groups[:, 0]
        for k in range(1, reortho_every):
            product = groups[:, k] @ product
        yield from product
    if pending is not None:
        product = pending[0]
        for cell in pending[1:]:
            product = cell @ product
        yield product


def _qr_stream(
    config: DisorderConfig,
    z: complex,
    n_cells: int,
    frame: np.ndarray,
    reortho_every: int,
    seed: int | None,
    first_cell: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-group log growth of each frame direction, plus group lengths."""
    logs, lengths = [], []
    Q = frame
    done = 0
    for product in _grouped_products(
        config, z, n_cells, reortho_every, seed, first_cell
    ):
        Q, R = np.linalg.qr(product @ Q)
        diagonal = np.abs(np.diag(R))
        if not np.all(np.isfinite(diagonal)) or np.any(diagonal == 0):
            raise TransferOverflowError(done)
        length = min(reortho_every, n_cells - done)
        done += length
        logs.append(np.log(diagonal))
        lengths.append(length)
    return np.array(logs), np.array(lengths, dtype=float)


def _estimate(logs: np.ndarray, lengths: np.ndarray, n_cells: int):
    totals = logs.sum(axis=0) / n_cells
    full = lengths == lengths[0]
    rates = logs[full] / lengths[0]
    _, stderr = batch_means(rates, N_BATCHES)
    return totals, np.asarray(stderr, dtype=float)


def lyapunov_spectrum(
    config: DisorderConfig,
    z: complex,
    n_cells: int,
    seed: int | None = None,
    reortho_every: int = REORTHO_EVERY,
    first_cell: int = 1,
) -> LyapunovSpectrum:
    """All 2L exponents from a streamed full-frame QR accumulation.

    Exponents are accumulated logs of |diag R| per unit length; errors come
    from batch means over the per-group growth rates.
    """
    if reortho_every < 1:
        raise ValueError(f"reortho_every must be positive, got {reortho_every}")
    if n_cells < 10 * reortho_every:
        raise ValueError(
            f"n_cells = {n_cells} must be at least 10·reortho_every "
            f"= {10 * reortho_every}"
        )
    n = 2 * config.L
    logs, lengths = _qr_stream(
        config,
        z,
        n_cells,
        np.eye(n, dtype=complex),
        reortho_every,
        seed,
        first_cell,
    )
    gamma, stderr = _estimate(logs, lengths, n_cells)
    order = np.argsort(-gamma, kind="stable")
    logger.debug("lyapunov z=%s n=%d gamma=%s", z, n_cells, gamma[order])
    return LyapunovSpectrum(gamma[order], stderr[order], n_cells, complex(z))


def top_sum(
    config: DisorderConfig,
    z: complex,
    n_cells: int,
    p: int,
    seed: int | None = None,
    reortho_every: int = REORTHO_EVERY,
    first_cell: int = 1,
) -> PartialSum:
    """Σ_{l≤p} γ_l from the volume growth of a generic p-frame."""
    n = 2 * config.L
    if not 1 <= p <= n:
        raise ValueError(f"p must lie in [1, {n}], got {p}")
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(np.random.SeedSequence([seed, _TAG_FRAME, p]))
    start = rng.standard_normal((n, p)) + 1j * rng.standard_normal((n, p))
    frame, _ = np.linalg.qr(start)
    logs, lengths = _qr_stream(
        config, z, n_cells, frame, reortho_every, seed, first_cell
    )
    total = logs.sum(axis=1)
    full = lengths == lengths[0]
    _, stderr = batch_means(total[full] / lengths[0], N_BATCHES)
    return PartialSum(float(total.sum() / n_cells), float(stderr))


def exterior_growth(
    config: DisorderConfig,
    z: complex,
    n_cells: int,
    p: int,
    seed: int | None = None,
) -> float:
    """(1/n) ln ‖Λ^{2p} T‖ of the raw product; keep n small enough that the
    product stays representable."""
    realization = sample_realization(config, n_cells, seed)
    T = transfer(realization, config, z)
    return float(np.log(exterior_power_norm(T.M, p)) / n_cells)


def symmetry_diagnostics(spectrum: LyapunovSpectrum) -> SymmetryReport:
    """Reflection γ_l ↔ −γ_{2L−l+1} and Kramers pairing γ_{2p−1} = γ_{2p},
    as worst residuals and in units of combined errors."""
    gamma, stderr = spectrum.gamma, spectrum.stderr
    n = len(gamma)
    reflection = np.abs(gamma + gamma[::-1])
    reflection_err = np.sqrt(stderr**2 + stderr[::-1] ** 2)
    pairing = np.abs(gamma[0::2] - gamma[1::2])
    pairing_err = np.sqrt(stderr[0::2] ** 2 + stderr[1::2] ** 2)
    return SymmetryReport(
        reflection_units=float(
            np.max(reflection / np.maximum(reflection_err, ERROR_FLOOR))
        ),
        pairing_units=float(np.max(pairing / np.maximum(pairing_err, ERROR_FLOOR))),
        reflection_max=float(reflection[: n // 2].max()),
        pairing_max=float(pairing.max()),
    )


def vanishing_count(spectrum: LyapunovSpectrum, confidence: float = 3.0) -> int:
    """k such that 2k exponents are compatible with zero at `confidence`
    standard errors."""
    bound = confidence * np.maximum(spectrum.stderr, ERROR_FLOOR)
    count = int(np.sum(np.abs(spectrum.gamma) <= bound))
    if count % 2:
        logger.warning(
            "odd number (%d) of vanishing exponents at z=%s; Kramers pairing "
            "is not resolved at this length",
            count,
            spectrum.z,
        )
    return count // 2


def gap_profile(spectrum: LyapunovSpectrum) -> list[LevelGap]:
    """Gaps between consecutive Kramers levels (pair means), with their
    significance in error units."""
    gamma, stderr = spectrum.gamma, spectrum.stderr
    levels = (gamma[0::2] + gamma[1::2]) / 2
    level_err = np.sqrt(stderr[0::2] ** 2 + stderr[1::2] ** 2) / 2
    gaps = []
    for p in range(len(levels) - 1):
        gap = float(levels[p] - levels[p + 1])
        error = combined_error(level_err[p], level_err[p + 1])
        gaps.append(LevelGap(p + 1, gap, gap / max(error, ERROR_FLOOR)))
    return gaps
