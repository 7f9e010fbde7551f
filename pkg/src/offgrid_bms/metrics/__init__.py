from .integrate import (
    DEFAULT_GAP_THRESHOLD,
    AccumulationResult,
    CRate,
    EmptyInterval,
    NonMonotonicTime,
    Throughput,
    ZeroCharge,
    accumulate_capacity,
    accumulate_energy,
    binned_throughput,
    c_rate,
    cycle_count,
    fluctuation,
    loss_rate,
    trapezoid_integral,
)
from .distributions import (
    NoFiniteWeights,
    PowerChannelStats,
    ZeroMean,
    charge_c_rate,
    count_histogram,
    discharge_c_rate,
    holding_weights,
    power_channel_stats,
    temp_spread,
    temp_spreads,
    time_weighted_histogram,
    weighted_histogram,
)
from .daily import AnnualRow, annual_report, annual_row, daily_summaries, day_phase_matrix, pattern_counts
