"""
Grid-based minimization of degenerate orthotropic p-energies with a
verification harness for the associated gradient estimates.

The package splits into:

* :mod:`ortholip.grid`   - structured grids, fields, norms, cut-offs;
* :mod:`ortholip.energy` - integrands, problem specs, energies, residuals;
* :mod:`ortholip.solver` - Newton minimization and eps-continuation;
* :mod:`ortholip.oracle` - brute-force references for tiny instances;
* :mod:`ortholip.verify` - inequality instantiation, exponent ladders,
  the absorption lemma;
* :mod:`ortholip.cli`    - experiment orchestration.
"""

from .energy import (
    DegeneracyVector,
    LinearLowerOrder,
    NonlinearLowerOrder,
    NoLowerOrder,
    ProblemSpec,
    differentiated_system_residual,
    el_residual_norm,
    energy_total,
    first_variation,
    g_eps_prime,
    g_eps_second,
    g_eps_value,
    g_value,
)
from .grid import (
    Ball,
    CutoffProfile,
    GradientField,
    Grid,
    ScalarField,
    cell_gradient,
    cutoff_eta,
    gradient,
    linf_norm,
    load_field,
    lp_norm,
    mollify,
    save_field,
)
from .oracle import coordinate_descent_minimize, degenerate_minimizer_check, poisson_reference
from .solver import (
    ContinuationResult,
    ConvergenceError,
    SolveResult,
    continuation_solve,
    energy_estimate_check,
    harmonic_extension,
    solve_regularized,
    w1p_distance,
)

__version__ = "0.1.0"
