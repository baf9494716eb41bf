"""Local independence testing and graph discovery for multivariate event streams."""

from locindep.basis import SplineBasis, build_design, make_bspline_basis, roughness_penalty
from locindep.core import (
    DirectedGraph,
    ExponentialKernel,
    IntensityModelSpec,
    LinkFunction,
    MarkedEventSequence,
    PointProcessError,
    integrated_kernel_matrix,
    kernel_eval,
    make_link,
    spectral_radius,
    true_intensity,
    validate_events,
)
from locindep.discovery import CAConfig, learn_graph_ca, shd
from locindep.estimation import FitConfig, FittedIntensityModel, fit_mle, wald_grid_test
from locindep.experiments import (
    CalibrationConfig,
    LevelPowerConfig,
    ShdConfig,
    run_calibration_suite,
    run_level_power,
    run_shd_experiment,
)
from locindep.fileio import read_events, read_graph, write_events, write_graph
from locindep.litest import LITestConfig, LITestResult, test_local_independence
from locindep.simulate import (
    STRUCTURE_NAMES,
    RandomGraphConfig,
    SimulationConfig,
    build_benchmark_structure,
    rescaled_gaps,
    restrict_to_observed,
    sample_random_graph,
    simulate_hawkes,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "DirectedGraph",
    "ExponentialKernel",
    "IntensityModelSpec",
    "LinkFunction",
    "MarkedEventSequence",
    "PointProcessError",
    "integrated_kernel_matrix",
    "kernel_eval",
    "make_link",
    "spectral_radius",
    "true_intensity",
    "validate_events",
    "SplineBasis",
    "build_design",
    "make_bspline_basis",
    "roughness_penalty",
    "FitConfig",
    "FittedIntensityModel",
    "fit_mle",
    "wald_grid_test",
    "LITestConfig",
    "LITestResult",
    "test_local_independence",
    "CAConfig",
    "learn_graph_ca",
    "shd",
    "LevelPowerConfig",
    "ShdConfig",
    "CalibrationConfig",
    "run_level_power",
    "run_shd_experiment",
    "run_calibration_suite",
    "read_events",
    "write_events",
    "read_graph",
    "write_graph",
    "STRUCTURE_NAMES",
    "RandomGraphConfig",
    "SimulationConfig",
    "build_benchmark_structure",
    "rescaled_gaps",
    "restrict_to_observed",
    "sample_random_graph",
    "simulate_hawkes",
]
