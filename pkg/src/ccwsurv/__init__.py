"""Clone-censor-weight estimation of treatment-duration effects on RMST."""

from ccwsurv.core import (
    Cohort,
    ContrastEstimate,
    Strategy,
    SubjectRecord,
    VisitGrid,
    observed_duration,
    strategy_indicator,
)

__all__ = [
    "Cohort",
    "ContrastEstimate",
    "Strategy",
    "SubjectRecord",
    "VisitGrid",
    "observed_duration",
    "strategy_indicator",
]

__version__ = "0.1.0"
