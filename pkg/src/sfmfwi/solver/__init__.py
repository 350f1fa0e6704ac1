from .wave import (
    C_STENCIL,
    SolverConfig,
    add_gaussian_noise,
    check_cfl,
    data_misfit,
    max_stable_dt,
    measured_snr_db,
    model_gradient,
    simulate_shots,
    subsample_indices,
    subsample_shots,
)
