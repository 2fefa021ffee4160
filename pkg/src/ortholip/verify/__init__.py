"""Numerical verification harness: inequality checkers, exponent ladders,
the absorption lemma and the report container."""

from .checks import (
    ScalarMap,
    check_caccioppoli,
    check_lipschitz_estimate,
    check_power_caccioppoli,
    check_propagation,
    check_reverse_holder,
    check_staircase,
    check_uniform_estimate,
    check_weird_caccioppoli,
    fit_sigma_exponents,
    staircase_chain,
    uniform_estimate_record,
)
from .holefill import (
    HoleFillingInstance,
    hole_filling_check,
    hole_filling_coefficient,
    make_tight_profile,
)
from .ladder import LadderRow, LadderTable, ladder, staircase_indices, tau_monotonicity_check, two_star, zeta
from .report import InequalityReport, reports_to_csv, reports_to_json

__all__ = [
    "ScalarMap",
    "check_caccioppoli",
    "check_weird_caccioppoli",
    "check_staircase",
    "staircase_chain",
    "check_power_caccioppoli",
    "check_reverse_holder",
    "check_lipschitz_estimate",
    "check_uniform_estimate",
    "uniform_estimate_record",
    "fit_sigma_exponents",
    "check_propagation",
    "HoleFillingInstance",
    "hole_filling_coefficient",
    "hole_filling_check",
    "make_tight_profile",
    "LadderRow",
    "LadderTable",
    "ladder",
    "tau_monotonicity_check",
    "staircase_indices",
    "two_star",
    "zeta",
    "InequalityReport",
    "reports_to_csv",
    "reports_to_json",
]
