"""
EG-OPO - Error Types
Exceptions raised by the library; the CLI maps them to exit codes
"""

from typing import Optional


class EgopoError(Exception):
    """Base class for every library error"""


class ConfigError(EgopoError, ValueError):
    """Invalid configuration (CLI exit code 1)"""


class DatasetParseError(EgopoError, ValueError):
    """Malformed dataset file; `row` is the 1-based data row (header excluded)"""

    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class NuisanceError(EgopoError):
    """Nuisance model could not be fitted or queried"""


class ScoreError(EgopoError):
    """AIPW score construction failed"""


class OracleError(EgopoError):
    """Policy optimization oracle received unusable input"""


class BudgetExceededError(OracleError):
    """Brute-force enumeration would exceed its budget"""


class CoverError(EgopoError, ValueError):
    """Invalid weight set or cover request"""
