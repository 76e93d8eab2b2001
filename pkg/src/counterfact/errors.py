"""Exception hierarchy.

Every error carries a stable ``code`` string and belongs to one of three
categories that map onto CLI exit statuses: configuration (2), data (3) and
solver (4).
"""

from __future__ import annotations

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SOLVER = 4


class CounterfactError(Exception):
    code = "error"
    exit_status = EXIT_DATA

    def record(self) -> dict:
        return {"status": "error", "code": self.code, "message": str(self)}


class ConfigError(CounterfactError, ValueError):
    code = "config_error"
    exit_status = EXIT_CONFIG


class DataError(CounterfactError, ValueError):
    code = "data_error"
    exit_status = EXIT_DATA


class SolverError(CounterfactError, RuntimeError):
    code = "solver_error"
    exit_status = EXIT_SOLVER


# -- panel ------------------------------------------------------------------


class InvalidPanel(DataError):
    code = "invalid_panel"


class MissingCell(DataError):
    code = "missing_cell"

    def __init__(self, unit: str, time: int):
        super().__init__(f"no observation for unit {unit!r} at time {time}")
        self.unit = unit
        self.time = time


class UnbalancedPanel(DataError):
    code = "unbalanced_panel"


class UnknownUnit(DataError):
    code = "unknown_unit"

    def __init__(self, unit: str):
        super().__init__(f"unknown unit {unit!r}")
        self.unit = unit


class T0OutOfRange(DataError):
    code = "t0_out_of_range"


class NonNumericOutcome(DataError):
    code = "non_numeric_outcome"

    def __init__(self, row: int, value: str):
        super().__init__(f"row {row}: outcome value {value!r} is not a finite number")
        self.row = row


class EmptyDonorPool(DataError):
    code = "empty_donor_pool"


# -- estimators -------------------------------------------------------------


class SolverNonConvergence(SolverError):
    code = "solver_non_convergence"

    def __init__(self, iterations: int, residual: float):
        super().__init__(
            f"QP did not converge after {iterations} iterations (KKT residual {residual:.3e})"
        )
        self.iterations = iterations
        self.residual = residual


class NonConvergence(SolverError):
    code = "non_convergence"

    def __init__(self, iterations: int, what: str = "iteration"):
        super().__init__(f"{what} did not converge after {iterations} iterations")
        self.iterations = iterations


class RankDeficiency(SolverError):
    code = "rank_deficiency"


class InsufficientPrePeriods(DataError):
    code = "insufficient_pre_periods"


class InsufficientObservations(DataError):
    code = "insufficient_observations"


class SingularDesign(SolverError):
    code = "singular_design"


class NegativeBirths(ConfigError):
    code = "negative_births"


class AllPlacebosFailed(SolverError):
    code = "all_placebos_failed"


class NoSurvivingPlacebos(DataError):
    code = "no_surviving_placebos"


class TooFewDonorsForLevel(DataError):
    code = "too_few_donors_for_level"


class TooFewDonorsForPlaceboVariance(DataError):
    code = "too_few_donors_for_placebo_variance"


class DonorPoolTooLarge(ConfigError):
    code = "donor_pool_too_large"
