"""Error hierarchy shared by the engines, the CLI and the HTTP surface.

Input errors map to CLI exit code 2 and HTTP 400; numerical failures map to
exit code 3 and HTTP 422.
"""

from __future__ import annotations


class HedgingError(Exception):
    error_code = "hedging_error"
    exit_code = 1

    def __init__(self, message: str, *, field: str | None = None):
        super().__init__(message)
        self.message = message
        self.field = field

    def details(self) -> list[dict[str, str | None]]:
        return [{"field": self.field, "message": self.message}]


class InputError(HedgingError):
    error_code = "validation_error"
    exit_code = 2


class DomainError(InputError):
    error_code = "domain_error"


class InsufficientDataError(InputError):
    error_code = "insufficient_observations"


class ConfigError(InputError):
    error_code = "config_error"


class NumericalError(HedgingError):
    error_code = "numerical_error"
    exit_code = 3


class ArbitrageStepModelError(NumericalError):
    error_code = "arbitrage_step_model"


class DegenerateDownFactorError(NumericalError):
    error_code = "degenerate_down_factor"


class NearSingularCorrelationError(NumericalError):
    error_code = "near_singular_correlation"


class ColinearRiskLoadingsError(NumericalError):
    error_code = "colinear_risk_loadings"


class DegenerateProbabilityError(NumericalError):
    error_code = "degenerate_up_probability"
