from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # Determinant / degree tolerances
    tol_singular: float = 1e-12  # relative to the matrix norm scale
    tol_boundary: float = 1e-3   # required margin of y away from g(∂U)
    tol_root: float = 1e-10      # ‖g(x) − y‖ accepted for a certificate point
    tol_regular: float = 1e-4    # relative σ_min(Dg) below which a root is degenerate
    tol_subspace: float = 1e-9   # (f − L) must land in F1 within this

    # Multistart root enumeration
    seeds_per_dim: int = 12
    min_seeds: int = 64
    max_seeds: int = 4096
    newton_max_iters: int = 60
    perturbation_retries: int = 5  # R_p, every retry must agree

    # Boundary sampling for admissibility checks
    boundary_samples_per_dim: int = 33
    max_boundary_samples: int = 20000

    # Selection ε schedule for multitriple degrees
    eps_halvings_max: int = 8

    # Discretization
    tol_constraint: float = 1e-9  # |‖u‖₁ − 1| for ∂Ω membership
    tol_rank: float = 1e-10       # relative singular value cut for rank decisions
    lambda_window: float = 1.0
    lambda_scan_points: int = 50

    # Bordered Newton solver
    newton_tol_scale: float = 1e-10  # tol_newton = scale·(1 + ‖L_h‖_∞)
    solver_max_iters: int = 50
    divergence_patience: int = 5

    # Persistence tracing
    usc_lipschitz: float = 10.0  # excess bound per unit Δε
    usc_slack: float = 1e-8

    # Concurrency (1 = serial)
    workers: int = 4

    # App
    random_seed: int = 20240601
    log_level: str = "INFO"

    model_config = {"env_file": ".env", "env_file_encoding": "utf-8", "extra": "ignore"}
