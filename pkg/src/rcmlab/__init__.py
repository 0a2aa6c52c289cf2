"""Random-conductance walks on finite lattices: exact kernels, limit-profile
and regularity diagnostics, and the fluctuating-interface models they feed.

The package is organized bottom up: `lattice` builds boxes, `environment`
draws edge weights (static or time dependent), `heatkernel` propagates the
walk exactly, `walker` samples it, `llt`/`regularity` measure how close the
kernel sits to its limiting profile and which functional inequalities hold
along the way, and `glmodel` couples everything to gradient interface
dynamics.  `cli` wraps the lot into reproducible experiments.
"""

__version__ = "0.1.0"

from .environment import (ConductanceField, DistSpec, constant_field,
                          lift_static, make_speed, resampling_environment,
                          sample_iid)
from .heatkernel import (HeatKernelField, SolverParams, solve_dynamic,
                         solve_static)
from .lattice import LatticeBox, build_box
from .llt import GaussianKernel, constant_env_sigma2, isotropic_kernel

__all__ = [
    "ConductanceField", "DistSpec", "GaussianKernel", "HeatKernelField",
    "LatticeBox", "SolverParams", "build_box", "constant_env_sigma2",
    "constant_field", "isotropic_kernel", "lift_static", "make_speed",
    "resampling_environment", "sample_iid", "solve_dynamic", "solve_static",
    "__version__",
]
