"""Analysis of long-term BMS telemetry from an off-grid LFP battery system."""

from .core import (
    BatterySystemSpec,
    CostScenario,
    DailySummary,
    OperationPattern,
    ProbabilityHistogram,
    SampleBatch,
    SolarLevel,
    TelemetryError,
    TelemetrySample,
    TimeSeries,
)

__version__ = "0.1.0"
