"""Numerical settings that affect results.

Every tolerance, grid size and budget used by the engine lives here so the
run manifest can record them from a single place. Modules read these
constants instead of hard-coding their own.
"""

from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class EngineSettings:
    # incomplete beta continued fraction
    betainc_tol: float = 1e-15
    betainc_max_iter: int = 20000
    # quantile bisection (absolute, parameter scale)
    quantile_tol: float = 1e-10
    # mixture components below this posterior weight are dropped
    mixture_prune: float = 1e-8
    # default probability-scale grid for GridDensity
    grid_points: int = 2001
    # two-arm effect probability quadrature
    simpson_tol: float = 1e-8
    simpson_initial_panels: int = 32
    simpson_max_depth: int = 40
    # predictive probability enumeration
    ppos_cell_budget: int = 4_000_000
    # exact dynamic programming limits
    exact_one_arm_max_n: int = 400
    exact_two_arm_max_n: int = 60
    exact_cell_budget: int = 64_000_000
    # Bayesian OC integration over a Beta design prior
    design_prior_grid: int = 201
    # calibration
    cutoff_step: float = 1e-4
    # borrowing
    map_mean_points: int = 99
    map_concentration_points: int = 21
    map_concentration_range: tuple = (1.0, 1000.0)
    commensurate_logit_halfwidth: float = 6.0
    # dose finding
    crm_grid_points: int = 801
    crm_grid_range: tuple = (-4.0, 4.0)
    crm_prior_sd: float = 1.34
    mtd_smoothing: float = 0.05
    overdose_min_treated: int = 3


DEFAULTS = EngineSettings()


def settings_record(settings: EngineSettings = DEFAULTS) -> dict:
    """Return the settings as a plain dict for the manifest."""
    out = asdict(settings)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}
