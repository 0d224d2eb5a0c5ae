"""Dark-state adiabatic-passage squeezing in atom-cavity systems.

Modules
-------
core      operator algebra on truncated product spaces
model     physical parameters, derived couplings and the Hamiltonian hierarchy
dynamics  ramp schedules, unitary and Lindblad evolution, protocol runners
analysis  squeezing metrics, spectral gaps and the decoherence error budget
oracle    cross-level validation checks
cli       command-line front end
"""
from .core import (
    AlgebraError,
    Boson,
    Dicke,
    DimensionError,
    HilbertSpec,
    Multilevel,
    QOperator,
    QuantumState,
    SpaceMismatchError,
)
from .kernels import BACKEND as KERNEL_BACKEND
from .model import (
    ANGULAR,
    ATOMIC,
    FIELD,
    DerivedCouplings,
    ParameterError,
    PhysicalParams,
    ThresholdError,
    TruncationError,
    benchmark_params,
    derive_couplings,
    target_state,
)
from .analysis import ErrorBudget, error_budget, fidelity, gap_analytic, quadrature_variance, squeezing_db
from .dynamics import EvolveConfig, ModelLevel, ProtocolResult, Schedule, run_protocol, run_state_transfer

__version__ = "0.1.0"
