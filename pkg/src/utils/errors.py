"""
Error types for the lab.

Every error carries the module it came from, so the CLI can print a
module-qualified message and map the category onto an exit code.
"""

from typing import List, Optional


class PamlabError(Exception):
    """Base class for all lab errors"""

    exit_code = 1

    def __init__(self, message: str, module: str = "pamlab"):
        super().__init__(message)
        self.module = module
        self.message = message

    def __str__(self) -> str:
        return f"[{self.module}] {self.message}"


class ConfigError(PamlabError, ValueError):
    """Bad input: unknown keys, violated preconditions, invalid parameters"""

    exit_code = 2


class NumericalError(PamlabError, RuntimeError):
    """A computation could not produce a trustworthy number"""

    exit_code = 3


class AdmissibilityError(PamlabError, ValueError):
    """The covariance spec violates the regime constraints"""

    exit_code = 4

    def __init__(self, message: str, module: str = "covariance",
                 violations: Optional[List[str]] = None):
        super().__init__(message, module)
        self.violations = list(violations or [])
