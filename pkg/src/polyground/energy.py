"""GPU power traces to watt-hours and energy-per-1,000-queries figures.

A trace is a sequence of (seconds, watts) samples, typically logged at
10 Hz by a management-library poller. Total energy is the trapezoidal
time-integral of power (exact for piecewise-linear draw), converted to
watt-hours, and normalized per 1,000 inference queries for
hardware-budget comparisons. Gross draw is reported; no idle-baseline
subtraction is performed unless explicitly requested.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

GAP_FACTOR = 10.0


class PowerTraceError(ValueError):
    """Raised for malformed power trace files or invalid sample sequences."""


@dataclass(frozen=True)
class PowerTrace:
    """Ordered (t_seconds, watts) samples with strictly increasing timestamps."""

    times_s: np.ndarray = field(repr=False)
    watts: np.ndarray = field(repr=False)
    gaps: tuple[int, ...] = ()  # sample indices that begin an interval > 10x nominal

    def __post_init__(self):
        t = np.asarray(self.times_s, dtype=np.float64)
        p = np.asarray(self.watts, dtype=np.float64)
        if t.ndim != 1 or t.shape != p.shape:
            raise PowerTraceError("times and watts must be 1D arrays of equal length")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(p))):
            raise PowerTraceError("trace contains non-finite values")
        if np.any(p < 0):
            raise PowerTraceError("negative power sample")
        if t.size >= 2 and not np.all(np.diff(t) > 0):
            raise PowerTraceError("timestamps must be strictly increasing")
        object.__setattr__(self, "times_s", t)
        object.__setattr__(self, "watts", p)

    def __len__(self) -> int:
        return int(self.times_s.size)

    @property
    def duration_s(self) -> float:
        return float(self.times_s[-1] - self.times_s[0])


def integrate_energy(trace: PowerTrace) -> float:
    """Trapezoidal integral of power over the trace, in watt-hours."""
    if len(trace) < 2:
        raise PowerTraceError("need at least 2 samples to integrate")
    joules = float(np.trapezoid(trace.watts, trace.times_s))
    return joules / 3600.0


def e_per_1k(total_wh: float, n_queries: int) -> float:
    """Watt-hours normalized per 1,000 queries."""
    if n_queries < 1:
        raise ValueError(f"n_queries must be >= 1, got {n_queries}")
    return total_wh * 1000.0 / n_queries


@dataclass(frozen=True)
class EnergyReport:
    total_wh: float
    mean_watts: float
    duration_s: float
    n_queries: int
    e_per_1k: float

    def to_dict(self) -> dict:
        return {
            "total_wh": self.total_wh,
            "mean_watts": self.mean_watts,
            "duration_s": self.duration_s,
            "n_queries": self.n_queries,
            "e_per_1k": self.e_per_1k,
        }


def build_report(trace: PowerTrace, n_queries: int) -> EnergyReport:
    total_wh = integrate_energy(trace)
    duration = trace.duration_s
    return EnergyReport(
        total_wh=total_wh,
        mean_watts=total_wh * 3600.0 / duration,
        duration_s=duration,
        n_queries=n_queries,
        e_per_1k=e_per_1k(total_wh, n_queries),
    )


def save_report(report: EnergyReport, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")


def parse_power_csv(path) -> PowerTrace:
    """Parse a ``t_s,power_w`` CSV into a validated trace.

    Lines starting with ``#`` (phase markers written by the sampler) are
    ignored. Intervals longer than 10x the nominal sample period (the
    median interval) are recorded in ``trace.gaps``.
    """
    times, watts = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = None
        for lineno, row in enumerate(reader, start=1):
            if not row or row[0].startswith("#"):
                continue
            if header is None:
                header = [col.strip() for col in row]
                if header != ["t_s", "power_w"]:
                    raise PowerTraceError(f"{path}: expected header 't_s,power_w', got {row}")
                continue
            if len(row) != 2:
                raise PowerTraceError(f"{path}: row {lineno}: expected 2 fields, got {len(row)}")
            try:
                t, p = float(row[0]), float(row[1])
            except ValueError as exc:
                raise PowerTraceError(f"{path}: row {lineno}: {exc}") from exc
            if p < 0:
                raise PowerTraceError(f"{path}: row {lineno}: negative power {p}")
            if times and t <= times[-1]:
                raise PowerTraceError(
                    f"{path}: row {lineno}: non-increasing timestamp {t} after {times[-1]}"
                )
            times.append(t)
            watts.append(p)
    if header is None:
        raise PowerTraceError(f"{path}: missing header")

    gaps: tuple[int, ...] = ()
    if len(times) >= 3:
        intervals = np.diff(np.asarray(times))
        nominal = float(np.median(intervals))
        if nominal > 0:
            gaps = tuple(int(i) for i in np.flatnonzero(intervals > GAP_FACTOR * nominal))
    return PowerTrace(times_s=np.asarray(times), watts=np.asarray(watts), gaps=gaps)
