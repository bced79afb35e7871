class RunConfig:
    n_cells: int = 100_000
    n_realizations: int = 1
    epsilon: float = 0.1
    threads: int = 4
    reortho_every: int = 10


class ThresholdConfig:
    pass_units: float = 3.0
    fail_units: float = 5.0
    vanishing_confidence: float = 3.0
    m_symmetry_tol: float = 1e-6


class WeylConfig:
    tol: float = 1e-8
    riccati_tol: float = 1e-6


class OracleConfig:
    X: int = 200
    bins: int = 40
    window: tuple[float, float] = (-2.0, 2.0)
    max_relative_deviation: float = 0.1


class SelftestConfig:
    n_seeds: int = 100
    membership_tol: float = 1e-11
    kdu_tol: float = 1e-10
    cayley_tol: float = 1e-11
