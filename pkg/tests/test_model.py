import numpy as np
import pytest
from pydantic import ValidationError

from src.engine.algebra import matrix_exponential, structure_constants
from src.engine.exceptions import StructureError
from src.engine.model import (
    BLOCK_SIZE,
    REFERENCE_ENSEMBLES,
    DisorderConfig,
    LambdaDistribution,
    PotentialDistribution,
    PotentialProfile,
    cell_grid,
    entries_from_matrix,
    gapped_value,
    potential_at,
    reference_config,
    sample_offset,
    sample_realization,
    sample_two_sided,
)


def _profile(W, widths=(1.0,)):
    values = [entries_from_matrix(w) for w in np.broadcast_to(W, (len(widths),) + W.shape)]
    return PotentialProfile(values=values, widths=list(widths))


@pytest.mark.parametrize("name", sorted(REFERENCE_ENSEMBLES))
def test_reference_ensembles_validate(name):
    config = reference_config(name, seed=4)
    assert config.seed == 4
    assert len(config.profiles) == config.K


def test_unknown_reference_ensemble():
    with pytest.raises(KeyError):
        reference_config("no-such-ensemble")


def test_config_round_trips_through_json(coupled_l2):
    restored = DisorderConfig.model_validate_json(coupled_l2.model_dump_json())
    assert restored.model_dump() == coupled_l2.model_dump()


def test_profile_count_must_match_K():
    with pytest.raises(ValidationError):
        DisorderConfig(L=2, K=1)


def test_reversal_breaking_profile_is_rejected():
    W = np.diag([1.0, 0.0, 0.0, 0.0]).astype(complex)
    with pytest.raises(ValidationError):
        DisorderConfig(L=2, K=1, profiles=[_profile(W)])
    config = DisorderConfig(L=2, K=1, profiles=[_profile(W)], time_reversal=False)
    assert not config.time_reversal


def test_non_hermitian_profile_is_rejected_without_reversal():
    W = np.zeros((4, 4), dtype=complex)
    W[0, 1] = 1.0
    with pytest.raises(ValidationError):
        DisorderConfig(L=2, K=1, profiles=[_profile(W)], time_reversal=False)


def test_profile_widths_must_sum_to_one():
    with pytest.raises(ValidationError):
        _profile(np.eye(4, dtype=complex), widths=(0.5, 0.4))


def test_lambda_atoms_need_length_K():
    with pytest.raises(ValidationError):
        DisorderConfig(
            L=2,
            K=1,
            profiles=[_profile(gapped_value())],
            lambda_dist=LambdaDistribution(kind="atoms", atoms=[[1.0, 2.0]]),
        )


def test_cell_grid_merges_breakpoints():
    config = DisorderConfig(
        L=2,
        K=2,
        profiles=[
            _profile(np.eye(4, dtype=complex), widths=(0.5, 0.5)),
            _profile(gapped_value(), widths=(0.25, 0.75)),
        ],
    )
    grid = cell_grid(config)
    np.testing.assert_allclose(grid.edges, [0.0, 0.25, 0.5, 1.0])
    np.testing.assert_allclose(grid.widths, [0.25, 0.25, 0.5])
    assert grid.values.shape == (2, 3, 4, 4)
    assert cell_grid(config) is grid


def test_sampling_is_reproducible_cell_by_cell(coupled_l2):
    long = sample_realization(coupled_l2, 3 * BLOCK_SIZE, seed=5)
    part = sample_realization(coupled_l2, 500, seed=5, first_cell=1001)
    np.testing.assert_array_equal(part.potentials, long.potentials[1000:1500])
    np.testing.assert_array_equal(part.lambdas, long.lambdas[1000:1500])
    assert part.offset == long.offset


def test_seeds_give_different_samples(coupled_l2):
    a = sample_realization(coupled_l2, 10, seed=1)
    b = sample_realization(coupled_l2, 10, seed=2)
    assert not np.allclose(a.lambdas, b.lambdas)


def test_two_sided_realization(coupled_l2):
    real = sample_two_sided(coupled_l2, 100, seed=2)
    assert real.first_cell == -99
    assert real.last_cell == 100
    assert real.n_cells == 200
    assert real.left_edge(1) == pytest.approx(real.origin)
    left = sample_realization(coupled_l2, 100, seed=2, first_cell=-99)
    np.testing.assert_array_equal(left.potentials, real.potentials[:100])


def test_jumps_are_exponentials_of_potentials(coupled_l2):
    real = sample_realization(coupled_l2, 5, seed=3)
    J = structure_constants(2).J
    np.testing.assert_allclose(real.jumps, matrix_exponential(J @ real.potentials))


def test_sub_realization_bounds(coupled_l2):
    real = sample_realization(coupled_l2, 10, seed=3)
    sub = real.cells(3, 5)
    assert sub.first_cell == 3 and sub.n_cells == 3
    with pytest.raises(StructureError):
        real.cells(0, 5)


def test_offset(free_l2, coupled_l2):
    assert sample_offset(free_l2) == 0.0
    s = sample_offset(coupled_l2, seed=9)
    assert 0.0 <= s < 1.0
    assert sample_offset(coupled_l2, seed=9) == s


def test_cell_of_and_potential_at(coupled_l2):
    real = sample_realization(coupled_l2, 10, seed=6)
    x = real.left_edge(4) + 0.3
    assert real.cell_of(x) == 4
    W = coupled_l2.profiles[0].matrices(2)[0]
    np.testing.assert_allclose(potential_at(real, coupled_l2, x), real.lambdas[3, 0] * W)
    with pytest.raises(ValueError):
        potential_at(real, coupled_l2, real.left_edge(12))


def test_potential_distributions(rng):
    zero = PotentialDistribution().sample(rng, 3, 2)
    assert zero.shape == (3, 4, 4) and not zero.any()
    gaussian = PotentialDistribution(kind="gaussian", scale=0.3, truncate=True)
    draws = gaussian.sample(rng, 50, 2)
    np.testing.assert_allclose(draws, np.swapaxes(draws.conj(), -1, -2), atol=1e-14)


def test_lambda_laws(rng):
    uniform = LambdaDistribution(low=-2.0, high=-1.0).sample(rng, 100, 3)
    assert uniform.shape == (100, 3)
    assert np.all((uniform >= -2.0) & (uniform < -1.0))
    atoms = LambdaDistribution(kind="atoms", atoms=[[1.0], [2.0]], weights=[0, 1])
    assert np.all(atoms.sample(rng, 20, 1) == 2.0)
    with pytest.raises(ValidationError):
        LambdaDistribution(low=1.0, high=1.0)


def test_sample_realization_needs_cells(coupled_l2):
    with pytest.raises(ValueError):
        sample_realization(coupled_l2, 0)
