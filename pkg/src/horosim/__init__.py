"""Simulation and verification toolkit for the H^2 sigma model on periodic lattices."""

from .errors import (
    EffectiveSampleSizeError,
    FactorizationError,
    FieldOverflowError,
    HorosimError,
    LatticeError,
    ObservableError,
)
from .hessian import HessianReport, hessian_effective, theorem2_certificate
from .lattice import LatticeShape, build_lattice, gradient_form, laplacian
from .linalg import SymmetricOperator
from .model import (
    Ensemble,
    FieldConfig,
    ModelParams,
    action_horo,
    action_matrix,
    build_D,
    effective_action,
    grad_effective_action,
    horo_to_matrix,
)
from .sampler import ChainConfig, Kernel, run_chain, run_chains
from .stats import Estimate

__version__ = "0.1.0"
