"""Lindstedt series for state-dependent delay equations.

Quasi-periodic solutions, limit cycles and isochrones are computed as
truncated power series in a small parameter eps, and the truncations are
checked against direct integration.
"""

from .divisors import (DiophantineWitness, check_diophantine, solve_cohomology,
                       solve_cohomology_eps, solve_jordan_chain, solve_shifted)
from .errors import (ConsistencyError, ConvergenceError, DegenerateError, DiophantineError,
                     HistoryError, LindstedtError, ManifestError, NearResonanceError,
                     ObstructionError, SeedError, ShapeError, SingularJetError)
from .fourier import TorusFourier
from .jets import EpsSeries, implicit_delay_jet, jet_apply, jet_mul, shift_jet
from .limit_cycle import (CycleExpansion, FourierTaylor, cycle_residual, cycle_residual_scan,
                          quasi_newton_step, run_newton, solve_order_by_order)
from .lindstedt import (ExpansionResult, SDDEModel, expand_invariance, hamiltonian_frame,
                        normalize, reducible_frame, residual_scan, solve_linearized_hamiltonian,
                        solve_linearized_reducible)
from .models import catalog, get_model
from .oracle import HistorySegment, compare_trajectory, fit_order, integrate_sdde

__version__ = "0.1.0"
