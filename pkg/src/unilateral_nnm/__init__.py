"""Oscillators with weak unilateral springs: expansions, simulation and nonlinear normal modes."""

from .fourier_kernels import CosineSeries, DomainError, positive_part_series, rectified_cos_coeffs
from .integrator import DivergenceError, IntegrationError, StepSizeError, TimeSeries, energy, simulate
from .ndof_expansion import (
    ExpansionNDof,
    UnsupportedCaseError,
    expand_mode_second_order,
    first_order_all_modes,
    periodic_initial_amplitudes,
)
from .nnm_solver import NNMResult, continue_nnm, shoot_residual, solve_nnm
from .one_dof import (
    CriticalCaseError,
    DegenerateAmplitudeError,
    Expansion1Dof,
    alpha2_quadrature,
    exact_frequency,
    expand,
    expand_critical,
    expand_homogeneous,
    expand_offset,
)
from .system import OscillatorSystem, ResonanceError, ValidationError, modal_from_physical, preset

__version__ = "0.1.0"
