"""Constructive mixture-of-experts approximation of conditional densities."""
from .analysis import (
    ConvergenceReport,
    QuadratureGrid,
    conditional_mass,
    exceedance_measure,
    indicator_gate_error,
    integrated_kl,
    kl_l2_bound_check,
    lp_norm,
    run_convergence,
    sup_norm,
)
from .constructor import (
    FlatMoE,
    HierarchicalMoE,
    Schedule,
    approximate_slice,
    assemble_moe,
    build_eta,
    build_upsilon,
    construct_approximant,
    flatten_moe,
    to_gaussian_gated,
)
from .density import (
    Box,
    FiniteMixture,
    KernelFamily,
    LocationScaleExpert,
    TargetDensity,
    expert_density,
    get_kernel,
    make_target,
    mixture_density,
    target_eval,
)
from .gating import (
    EqualCovGaussianGating,
    GaussianGating,
    SoftmaxGating,
    equalcov_gaussian_to_softmax,
    eval_gaussian_gates,
    eval_softmax_gates,
    gate_argmax_cells,
    sharp_gates,
    softmax_to_gaussian,
)
from .kernels import BACKEND
from .partition import FinePartition, build_partition, cell_of, indicator

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Box",
    "ConvergenceReport",
    "EqualCovGaussianGating",
    "FinePartition",
    "FiniteMixture",
    "FlatMoE",
    "GaussianGating",
    "HierarchicalMoE",
    "KernelFamily",
    "LocationScaleExpert",
    "QuadratureGrid",
    "Schedule",
    "SoftmaxGating",
    "TargetDensity",
    "approximate_slice",
    "assemble_moe",
    "build_eta",
    "build_partition",
    "build_upsilon",
    "cell_of",
    "conditional_mass",
    "construct_approximant",
    "equalcov_gaussian_to_softmax",
    "eval_gaussian_gates",
    "eval_softmax_gates",
    "exceedance_measure",
    "expert_density",
    "flatten_moe",
    "gate_argmax_cells",
    "get_kernel",
    "indicator",
    "indicator_gate_error",
    "integrated_kl",
    "kl_l2_bound_check",
    "lp_norm",
    "make_target",
    "mixture_density",
    "run_convergence",
    "sharp_gates",
    "softmax_to_gaussian",
    "sup_norm",
    "target_eval",
    "to_gaussian_gated",
    "__version__",
]
