"""Two-sample testing toolkit for post-deployment model monitoring."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    Column, Dataset, Hypothesis, Kind, Role, Schema, TestResult, decide, validate_dataset,
)
from .errors import MonitorError, SmallSampleAssumptionViolated  # noqa: E402

__all__ = [
    "Column", "Dataset", "Hypothesis", "Kind", "Role", "Schema", "TestResult", "decide",
    "validate_dataset", "MonitorError", "SmallSampleAssumptionViolated", "__version__",
]
