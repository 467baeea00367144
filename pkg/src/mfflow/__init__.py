"""Particle simulators for mean-field gradient flows of two-layer ReLU nets.

Submodules:
    sphere     split-sphere geometry, angle/radial laws, disintegration
    meanfield  full (d+1)-dimensional particle flow with symmetrization
    linear     linear-network flow for odd targets, exponential-rate checks
    reduced    exact 1-D angle flow with Monte Carlo kernel estimators
    runner     experiment configs, training loops, CSV artifacts
    cli        command line entry point

Re-exports resolve lazily so that importing the package does not pull in
numpy; the CLI relies on this to pin BLAS thread counts via environment
variables before any numerical module loads.
"""

from importlib import import_module

__version__ = "0.1.0"

_EXPORTS = {
    "ConfigError": "errors",
    "DegenerateParticleError": "errors",
    "GroupTooLargeError": "errors",
    "IllPosedError": "errors",
    "InsufficientDataError": "errors",
    "MfflowError": "errors",
    "NumericalBlowupError": "errors",
    "SchemaError": "errors",
    "UndefinedDistanceError": "errors",
    "Dataset": "linear",
    "LinearFlowState": "linear",
    "fit_exponential_rate": "linear",
    "gd_on_q_baseline": "linear",
    "h_matrix": "linear",
    "init_linear_state": "linear",
    "linear_velocity": "linear",
    "ols_optimum": "linear",
    "q_value_and_grad": "linear",
    "step_mean_field_linear": "linear",
    "OrthogonalTransform": "meanfield",
    "ParticleCloud": "meanfield",
    "TargetSpec": "meanfield",
    "batch_loss": "meanfield",
    "coordinate_permutation": "meanfield",
    "group_closure": "meanfield",
    "init_cloud": "meanfield",
    "invariance_defect": "meanfield",
    "neg_identity": "meanfield",
    "odd_part_loss_gap": "meanfield",
    "perp_dependence_scan": "meanfield",
    "predict": "meanfield",
    "project_to_angles": "meanfield",
    "reflection": "meanfield",
    "sphere_batch": "meanfield",
    "step": "meanfield",
    "symmetrize_batch": "meanfield",
    "symmetrize_cloud": "meanfield",
    "transform_cloud": "meanfield",
    "velocity": "meanfield",
    "McBatch": "reduced",
    "QuadratureSpec": "reduced",
    "ReducedCloud": "reduced",
    "StepEvents": "reduced",
    "alpha_expected": "reduced",
    "angle_histogram": "reduced",
    "draw_mc_batch": "reduced",
    "estimate_g_v": "reduced",
    "init_reduced": "reduced",
    "kernel_chi": "reduced",
    "kernel_psi": "reduced",
    "masses": "reduced",
    "objective_a": "reduced",
    "objective_a_quadrature": "reduced",
    "phi_tilde": "reduced",
    "phi_tilde_matrix": "reduced",
    "phi_tilde_zero_angle": "reduced",
    "reduced_predict": "reduced",
    "step_reduced": "reduced",
    "w2_to_dirac": "reduced",
    "RandomSource": "rng",
    "AngleLaw": "sphere",
    "SplitDims": "sphere",
    "compose_disintegration": "sphere",
    "gauss_angle_nodes": "sphere",
    "gauss_beta_nodes": "sphere",
    "gauss_radial_nodes": "sphere",
    "sample_angle_gamma": "sphere",
    "sample_radial_gamma_p": "sphere",
    "sample_uniform_sphere": "sphere",
    "sphere_surface_area": "sphere",
    "ExperimentConfig": "runner",
    "compare_reduction": "runner",
    "emit_figure_data": "runner",
    "run": "runner",
}

__all__ = ["__version__", *sorted(_EXPORTS)]


def __getattr__(name: str):
    module_name = _EXPORTS.get(name)
    if module_name is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    value = getattr(import_module(f".{module_name}", __name__), name)
    globals()[name] = value
    return value


def __dir__():
    return sorted(set(globals()) | set(_EXPORTS))
