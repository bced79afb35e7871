"""Kotani functionals w^z_± along an orbit and the identities tying them to
Lyapunov exponents and the averaged Green matrix.

Per cell, w₊ collects ln det of the forward α-cocycle of the M₊ plane and
w₋ minus that of the M₋ plane. Jumps contribute −ln det(D − M₊B) and
ln det(D* + B*M₋) (values after the jump); smooth pieces contribute
−∫Tr(R + M₊(Q − z)) and ∫Tr(R* − M₋(Q − z)) integrated exactly.
"""

import logging
import math
from typing import NamedTuple

import numpy as np
from pydantic import BaseModel

from .green import averaged_green_stack, warmup_cells
from .lyapunov import top_sum
from .model import DisorderConfig, Realization, sample_realization
from .stats import N_BATCHES, Estimate, batch_means, combined_error, residual_units
from .weyl import OrbitPath, cell_quadrature, orbit_path

logger = logging.getLogger("engine.kotani")

PASS_UNITS = 3.0
FAIL_UNITS = 5.0
BRANCH_ALERT = math.pi / 2


class OrbitSample(NamedTuple):
    """M₊ and M₋ along the cells of `realization` (warm-up already removed).

    Jump blocks are those of `realization.jumps`.
    """

    realization: Realization
    plus: OrbitPath
    minus: OrbitPath
    z: complex


class IdentityCheck(BaseModel):
    name: str
    lhs: float
    rhs: float
    residual: float
    units: float
    passed: bool


class KotaniReport(BaseModel):
    z: tuple[float, float]
    n_cells: int
    w_plus: tuple[float, float]
    w_plus_stderr: tuple[float, float]
    w_minus: tuple[float, float]
    w_minus_stderr: tuple[float, float]
    gamma: float
    gamma_stderr: float
    trace_green: tuple[float, float]
    trace_green_stderr: tuple[float, float]
    checks: list[IdentityCheck]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)


def _pair(value: complex) -> tuple[float, float]:
    value = complex(value)
    return (value.real, value.imag)


def _check(
    name: str,
    lhs: float,
    rhs: float,
    *errors: float,
    threshold: float = PASS_UNITS,
) -> IdentityCheck:
    residual = lhs - rhs
    units = residual_units(residual, *errors)
    return IdentityCheck(
        name=name,
        lhs=float(lhs),
        rhs=float(rhs),
        residual=float(residual),
        units=float(units),
        passed=bool(units < threshold),
    )


def jump_blocks(realization: Realization):
    """A, B, C, D blocks of every e^{JV_j}."""
    L = realization.jumps.shape[-1] // 2
    jumps = realization.jumps
    return (
        jumps[:, :L, :L],
        jumps[:, :L, L:],
        jumps[:, L:, :L],
        jumps[:, L:, L:],
    )


def orbit_sample(
    config: DisorderConfig,
    z: complex,
    n_cells: int,
    seed: int | None = None,
    warmup: int | None = None,
    realization: Realization | None = None,
) -> OrbitSample:
    """Transport M₋ forward and M₊ backward over n_cells + 2·warmup cells,
    both seeded from i·1, and keep the central n_cells."""
    z = complex(z)
    if z.imag <= 0:
        raise ValueError("orbit samples need Im z > 0")
    warmup = warmup_cells(z) if warmup is None else warmup
    if realization is None:
        realization = sample_realization(config, n_cells + 2 * warmup, seed)
    elif realization.n_cells != n_cells + 2 * warmup:
        raise ValueError(
            f"realization has {realization.n_cells} cells, expected "
            f"{n_cells + 2 * warmup}"
        )
    plus = orbit_path(realization, config, z, 1)
    minus = orbit_path(realization, config, z, -1)
    stop = warmup + n_cells
    window = realization.cells(
        realization.first_cell + warmup, realization.first_cell + stop - 1
    )
    return OrbitSample(window, plus.window(warmup, stop), minus.window(warmup, stop), z)


def _branch_monitor(log_alpha: np.ndarray, z: complex):
    worst = float(np.max(np.abs(log_alpha.imag))) if len(log_alpha) else 0.0
    if worst > BRANCH_ALERT:
        logger.warning(
            "per-cell log increment %.3f exceeds π/2 at z=%s; Im w is branch "
            "sensitive",
            worst,
            z,
        )


def estimate_w(sample: OrbitSample, sign: int) -> Estimate:
    """Orbit average of w^z_± per unit length (one jump per cell)."""
    if sign == 1:
        per_cell = sample.plus.log_alpha
    elif sign == -1:
        per_cell = -sample.minus.log_alpha
    else:
        raise ValueError(f"sign must be +1 or -1, got {sign}")
    _branch_monitor(per_cell, sample.z)
    return batch_means(per_cell, N_BATCHES)


def trace_green(sample: OrbitSample, config: DisorderConfig, n_nodes: int = 8):
    """Orbit average of Tr Ĝ^z(x)."""

    def trace(M_plus, M_minus):
        return np.trace(averaged_green_stack(M_plus, M_minus), axis1=-2, axis2=-1)

    per_cell = cell_quadrature(
        [sample.plus, sample.minus], sample.realization, config, trace, n_nodes
    )
    return batch_means(per_cell, N_BATCHES)


def _herglotz_quotient(M: np.ndarray) -> np.ndarray:
    """Tr((1 + M*M)(Im M)⁻¹) for a stack of M."""
    L = M.shape[-1]
    im_part = (M - np.swapaxes(M.conj(), -1, -2)) / 2j
    gram = np.eye(L) + np.swapaxes(M.conj(), -1, -2) @ M
    return np.trace(gram @ np.linalg.inv(im_part), axis1=-2, axis2=-1).real


def herglotz_average(
    sample: OrbitSample, config: DisorderConfig, sign: int, n_nodes: int = 8
) -> Estimate:
    """Im z · orbit average of Tr((1 + |M_±|²)(Im M_±)⁻¹)."""
    path = sample.plus if sign == 1 else sample.minus
    per_cell = cell_quadrature(
        [path], sample.realization, config, _herglotz_quotient, n_nodes
    )
    mean, stderr = batch_means(per_cell, N_BATCHES)
    return Estimate(sample.z.imag * mean, sample.z.imag * stderr)


def u_values(M: np.ndarray) -> np.ndarray:
    """Eigenvalues, descending, of U = (Im M)^{1/2}(1 + |M|²)⁻¹(Im M)^{1/2}
    for a stack of M."""
    L = M.shape[-1]
    im_part = (M - np.swapaxes(M.conj(), -1, -2)) / 2j
    values, vectors = np.linalg.eigh(im_part)
    root = vectors @ (np.sqrt(values)[..., None] * np.swapaxes(vectors.conj(), -1, -2))
    gram = np.eye(L) + np.swapaxes(M.conj(), -1, -2) @ M
    U = root @ np.linalg.solve(gram, root)
    U = (U + np.swapaxes(U.conj(), -1, -2)) / 2
    return np.linalg.eigvalsh(U)[..., ::-1]


def _gamma(config, z, n_cells, seed):
    return top_sum(config, z, n_cells, config.L, seed)


def check_identity_i(sample: OrbitSample) -> IdentityCheck:
    """Re w₊ = Re w₋."""
    w_plus = estimate_w(sample, 1)
    w_minus = estimate_w(sample, -1)
    return _check(
        "re_w_plus_equals_re_w_minus",
        w_plus.mean.real,
        w_minus.mean.real,
        w_plus.stderr.real,
        w_minus.stderr.real,
    )


def check_identity_ii(
    config: DisorderConfig,
    z: complex,
    n_cells: int,
    seed: int | None = None,
    sample: OrbitSample | None = None,
) -> list[IdentityCheck]:
    """γ^z = −Re w^z_± for both signs, γ^z the sum of the top L exponents."""
    sample = orbit_sample(config, z, n_cells, seed) if sample is None else sample
    gamma = _gamma(config, z, n_cells, seed)
    checks = []
    for sign, label in ((1, "plus"), (-1, "minus")):
        w = estimate_w(sample, sign)
        checks.append(
            _check(
                f"gamma_equals_minus_re_w_{label}",
                gamma.value,
                -w.mean.real,
                gamma.stderr,
                w.stderr.real,
            )
        )
    return checks


def check_identity_iv(
    config: DisorderConfig,
    z: complex,
    n_cells: int,
    seed: int | None = None,
    sample: OrbitSample | None = None,
) -> list[IdentityCheck]:
    """2γ^z = Im z · E Tr((1 + |M_±|²)(Im M_±)⁻¹) for both signs."""
    sample = orbit_sample(config, z, n_cells, seed) if sample is None else sample
    gamma = _gamma(config, z, n_cells, seed)
    checks = []
    for sign, label in ((1, "plus"), (-1, "minus")):
        rhs = herglotz_average(sample, config, sign)
        checks.append(
            _check(
                f"two_gamma_equals_herglotz_average_{label}",
                2 * gamma.value,
                rhs.mean,
                2 * gamma.stderr,
                rhs.stderr,
            )
        )
    return checks


def _w_difference(config, z, h, n_cells, seed, warmup, sign):
    """(w^{z+h} − w^{z−h})/(2h) on a common realization."""
    realization = sample_realization(config, n_cells + 2 * warmup, seed)
    upper = orbit_sample(config, z + h, n_cells, seed, warmup, realization)
    lower = orbit_sample(config, z - h, n_cells, seed, warmup, realization)
    w_up, w_low = estimate_w(upper, sign), estimate_w(lower, sign)
    if sign == 1:
        paired = upper.plus.log_alpha - lower.plus.log_alpha
    else:
        paired = lower.minus.log_alpha - upper.minus.log_alpha
    _, stderr = batch_means(paired / (2 * h), N_BATCHES)
    return (w_up.mean - w_low.mean) / (2 * h), stderr


def check_thouless(
    config: DisorderConfig,
    z: complex,
    n_cells: int,
    h: complex = 0.05,
    seed: int | None = None,
    sign: int = 1,
) -> IdentityCheck:
    """∂_z w^z = E Tr Ĝ^z with a central difference, Richardson-extrapolated
    from steps h and h/2; the extrapolation correction enters the error."""
    z, h = complex(z), complex(h)
    if z.imag - abs(h) <= 0:
        raise ValueError("need Im z > |h| for the central difference")
    warmup = warmup_cells(complex(z.real, z.imag - abs(h)))
    coarse, coarse_err = _w_difference(config, z, h, n_cells, seed, warmup, sign)
    fine, fine_err = _w_difference(config, z, h / 2, n_cells, seed, warmup, sign)
    derivative = (4 * fine - coarse) / 3
    bias = abs(fine - coarse) / 3
    sample = orbit_sample(config, z, n_cells, seed, warmup)
    trace = trace_green(sample, config)
    lhs, rhs = complex(derivative), complex(trace.mean)
    residual = abs(lhs - rhs)
    error = combined_error(
        abs(fine_err), abs(coarse_err) / 3, abs(trace.stderr), bias
    )
    units = residual_units(residual, error)
    return IdentityCheck(
        name=f"thouless_{'plus' if sign == 1 else 'minus'}",
        lhs=float(abs(lhs)),
        rhs=float(abs(rhs)),
        residual=float(residual),
        units=float(units),
        passed=bool(units < PASS_UNITS),
    )


def partial_sum_inequality(
    config: DisorderConfig,
    E: float,
    eps: float,
    k: int,
    n_cells: int,
    seed: int | None = None,
    sign: int = 1,
) -> IdentityCheck:
    """E Σ_{l≤k} 1/u_l at E + iε against (2/ε)(γ_{top L} − γ_{top L−k}) at
    E ∓ iε. `residual` is the slack rhs − lhs; the check passes when the
    slack is above −3 error units."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if not 1 <= k <= config.L:
        raise ValueError(f"k must lie in [1, {config.L}], got {k}")
    z = complex(E, eps)
    sample = orbit_sample(config, z, n_cells, seed)
    path = sample.plus if sign == 1 else sample.minus

    def inverse_sum(M):
        return np.sum(1.0 / u_values(M)[..., :k], axis=-1)

    per_cell = cell_quadrature([path], sample.realization, config, inverse_sum)
    lhs = batch_means(per_cell, N_BATCHES)

    z_conj = complex(E, -sign * eps)
    upper = top_sum(config, z_conj, n_cells, config.L, seed)
    if k < config.L:
        lower = top_sum(config, z_conj, n_cells, config.L - k, seed)
        partial, partial_err = upper.value - lower.value, combined_error(
            upper.stderr, lower.stderr
        )
    else:
        partial, partial_err = upper.value, upper.stderr
    rhs = 2 / eps * partial
    rhs_err = 2 / eps * partial_err
    slack = rhs - float(lhs.mean)
    units = slack / max(combined_error(float(lhs.stderr), rhs_err), 1e-10)
    return IdentityCheck(
        name=f"partial_sum_k{k}_{'plus' if sign == 1 else 'minus'}",
        lhs=float(lhs.mean),
        rhs=float(rhs),
        residual=float(slack),
        units=float(units),
        passed=bool(units >= -PASS_UNITS),
    )


def u_monotonicity(
    config: DisorderConfig,
    E: float,
    epsilons: list[float],
    k: int,
    n_cells: int,
    seed: int | None = None,
    sign: int = 1,
) -> list[Estimate]:
    """Orbit averages of ε/u_k at E + iε for increasing ε; the sequence is
    expected to be nondecreasing. Uses one realization for all ε."""
    epsilons = sorted(epsilons)
    if not 1 <= k <= config.L:
        raise ValueError(f"k must lie in [1, {config.L}], got {k}")
    warmup = warmup_cells(complex(E, epsilons[0]))
    realization = sample_realization(config, n_cells + 2 * warmup, seed)
    results = []
    for eps in epsilons:
        sample = orbit_sample(config, complex(E, eps), n_cells, seed, warmup, realization)
        path = sample.plus if sign == 1 else sample.minus

        def ratio(M, eps=eps):
            return eps / u_values(M)[..., k - 1]

        per_cell = cell_quadrature([path], sample.realization, config, ratio)
        mean, stderr = batch_means(per_cell, N_BATCHES)
        results.append(Estimate(float(mean), float(stderr)))
    return results


def kotani_report(
    config: DisorderConfig,
    z: complex,
    n_cells: int,
    seed: int | None = None,
    h: complex = 0.05,
) -> KotaniReport:
    """All four identities at one energy on one realization."""
    z = complex(z)
    sample = orbit_sample(config, z, n_cells, seed)
    w_plus = estimate_w(sample, 1)
    w_minus = estimate_w(sample, -1)
    gamma = _gamma(config, z, n_cells, seed)
    trace = trace_green(sample, config)
    checks = [check_identity_i(sample)]
    checks += check_identity_ii(config, z, n_cells, seed, sample)
    checks.append(check_thouless(config, z, n_cells, h, seed))
    checks += check_identity_iv(config, z, n_cells, seed, sample)
    failed = [c.name for c in checks if not c.passed]
    if failed:
        logger.warning("identity checks failed at z=%s: %s", z, ", ".join(failed))
    return KotaniReport(
        z=_pair(z),
        n_cells=n_cells,
        w_plus=_pair(w_plus.mean),
        w_plus_stderr=_pair(w_plus.stderr),
        w_minus=_pair(w_minus.mean),
        w_minus_stderr=_pair(w_minus.stderr),
        gamma=gamma.value,
        gamma_stderr=gamma.stderr,
        trace_green=_pair(trace.mean),
        trace_green_stderr=_pair(trace.stderr),
        checks=checks,
    )
