"""KPI digests for the report generator.

Throughput is bucketed linearly at 0.1 Mbps.  Delay spans four orders of
magnitude once queues saturate, so its buckets are log-spaced (10 buckets
per decade): one bucket step is a factor of 10^0.1, and the +/-1-bucket
admission tolerance becomes a relative tolerance.  The trend token comes
from a least-squares slope over the cross-UE mean throughput series with a
dead band of +/-1% of the series mean per second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from cfran.envsim import KpiSeries

THR_BUCKET_MBPS = 0.1
DELAY_DECADE_BUCKETS = 10
DELAY_FLOOR_MS = 0.1
THR_FLAG_MBPS = 5.0
DELAY_FLAG_MS = 15.0
TREND_DEADBAND_PER_S = 0.01


def thr_bucket_index(mean_thr_mbps: float) -> int:
    return math.floor(mean_thr_mbps / THR_BUCKET_MBPS + 0.5)


def thr_bucket_text(index: int) -> str:
    return f"{index * THR_BUCKET_MBPS:.1f}"


def thr_bucket_from_text(text: str) -> int:
    return thr_bucket_index(float(text))


def delay_bucket_index(mean_delay_ms: float) -> int:
    d = max(mean_delay_ms, DELAY_FLOOR_MS)
    return math.floor(DELAY_DECADE_BUCKETS * math.log10(d) + 0.5)


def delay_bucket_text(index: int) -> str:
    value = 10.0 ** (index / DELAY_DECADE_BUCKETS)
    return f"{value:.2f}" if index < DELAY_DECADE_BUCKETS else f"{value:.1f}"


def delay_bucket_from_text(text: str) -> int:
    return delay_bucket_index(float(text))


def trend_of(series: np.ndarray) -> str:
    """UP/DOWN/FLAT from the LS slope of a windowed series."""
    y = np.asarray(series, dtype=float)
    if y.shape[0] < 2:
        return "FLAT"
    x = np.arange(y.shape[0], dtype=float) * 0.2
    xc = x - x.mean()
    slope = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    band = TREND_DEADBAND_PER_S * abs(float(y.mean()))
    if slope > band:
        return "UP"
    if slope < -band:
        return "DOWN"
    return "FLAT"


@dataclass(frozen=True)
class ReportSummary:
    """Everything the report generator reads from a KPI series."""

    thr_bucket: int
    delay_bucket: int
    trend: str
    flag_thr_high: bool
    flag_delay_high: bool
    mean_thr_mbps: float
    mean_delay_ms: float

    @classmethod
    def from_kpis(cls, kpis: KpiSeries) -> "ReportSummary":
        thr = kpis.ue_mean_throughput()
        dly = kpis.ue_mean_delay()
        mean_thr = float(thr.mean())
        mean_dly = float(dly.mean())
        return cls(
            thr_bucket=thr_bucket_index(mean_thr),
            delay_bucket=delay_bucket_index(mean_dly),
            trend=trend_of(thr),
            flag_thr_high=bool((thr > THR_FLAG_MBPS).mean() > 0.5),
            flag_delay_high=bool((dly > DELAY_FLAG_MS).mean() > 0.5),
            mean_thr_mbps=mean_thr,
            mean_delay_ms=mean_dly,
        )

    def thr_text(self) -> str:
        return thr_bucket_text(self.thr_bucket)

    def delay_text(self) -> str:
        return delay_bucket_text(self.delay_bucket)
