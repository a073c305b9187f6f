"""Quote-file ingestion, price series and lag-time sampling.

Times are handled in integer seconds since the Unix epoch. A series lives on
a nominal uniform grid (``nominal_step`` seconds); missing grid points are
gaps and are never interpolated.
"""

from __future__ import annotations

import calendar
import math
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .errors import MarketDataError, NoOriginError, QuoteFormatError

FORMATS = ("minute-ascii", "generic-csv")

# Fixed UTC offsets (minutes) for US Eastern Time. No DST rules are embedded:
# pick the offset that applies to the dataset, or split the data by season.
ET_OFFSETS = {"EST": -300, "EDT": -240}

_WEEKEND = (5, 6)  # Saturday, Sunday with Monday == 0


@dataclass(frozen=True, eq=False)
class PriceSeries:
    """Timestamped price trajectory on a nominal uniform grid.

    Parameters
    ----------
    epoch_times : array of int
        Seconds since the Unix epoch, strictly increasing.
    prices : array of float
        Finite, strictly positive prices.
    nominal_step : int
        Grid spacing in seconds; every gap between consecutive timestamps
        must be an integer multiple of it.
    """

    epoch_times: np.ndarray
    prices: np.ndarray
    nominal_step: int = 60

    def __post_init__(self):
        t = np.asarray(self.epoch_times, dtype=np.int64)
        p = np.asarray(self.prices, dtype=float)
        object.__setattr__(self, "epoch_times", t)
        object.__setattr__(self, "prices", p)
        object.__setattr__(self, "nominal_step", int(self.nominal_step))
        if t.ndim != 1 or p.shape != t.shape:
            raise MarketDataError("epoch_times and prices must be 1-D and equally long")
        if t.size == 0:
            raise MarketDataError("empty price series")
        if self.nominal_step <= 0:
            raise MarketDataError("nominal_step must be positive")
        gaps = np.diff(t)
        if np.any(gaps <= 0):
            raise MarketDataError("epoch_times must be strictly increasing")
        if np.any(gaps % self.nominal_step):
            raise MarketDataError(
                f"gap not a multiple of the nominal step ({self.nominal_step} s)")
        if not np.all(np.isfinite(p)) or np.any(p <= 0):
            raise MarketDataError("prices must be finite and positive")

    def __len__(self):
        return self.epoch_times.size

    def slice_times(self, start, stop):
        """Sub-series with ``start <= t <= stop`` (closed interval)."""
        lo = np.searchsorted(self.epoch_times, start, side="left")
        hi = np.searchsorted(self.epoch_times, stop, side="right")
        return PriceSeries(self.epoch_times[lo:hi], self.prices[lo:hi],
                           self.nominal_step)

    def shifted(self, offset):
        return PriceSeries(self.epoch_times, self.prices + offset, self.nominal_step)


@dataclass(frozen=True)
class WindowSpec:
    """Clock-anchored analysis window, e.g. 24 h starting at 18:00 local.

    ``origin_clock`` is an ``"hh:mm"`` string in local wall-clock time and
    ``utc_offset_minutes`` converts local time to UTC (local = UTC + offset).
    """

    origin_clock: str
    utc_offset_minutes: int = 0
    horizon: int = 86400
    skip_weekends: bool = True
    origin_seconds: int = field(init=False, repr=False)

    def __post_init__(self):
        try:
            hh, mm = str(self.origin_clock).split(":")
            secs = int(hh) * 3600 + int(mm) * 60
        except ValueError:
            raise MarketDataError(f"origin clock must be hh:mm, got {self.origin_clock!r}")
        if not 0 <= secs < 86400 or not 0 <= int(mm) < 60:
            raise MarketDataError(f"origin clock out of range: {self.origin_clock!r}")
        if self.horizon <= 0:
            raise MarketDataError("window horizon must be positive")
        object.__setattr__(self, "origin_seconds", secs)


@dataclass(frozen=True, eq=False)
class FluctuationSample:
    """Price differences ``p(t0 + lag) - p(t0)`` over the admissible origins."""

    lag: float
    deltas: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.deltas, dtype=float)
        object.__setattr__(self, "deltas", d)
        if d.ndim != 1 or d.size == 0:
            raise MarketDataError("a fluctuation sample needs at least one delta")

    @property
    def origin_count(self):
        return self.deltas.size


def _parse_minute_ascii(lines, utc_offset_minutes):
    times, prices = [], []
    for row, line in lines:
        fields = line.split(";")
        if len(fields) != 6:
            raise QuoteFormatError(row, f"expected 6 ';'-separated fields, got {len(fields)}")
        stamp = fields[0].strip()
        try:
            date, clock = stamp.split(" ")
            if len(date) != 8 or len(clock) != 6:
                raise ValueError
            y, mo, d = int(date[:4]), int(date[4:6]), int(date[6:])
            h, mi, s = int(clock[:2]), int(clock[2:4]), int(clock[4:])
            epoch = calendar.timegm((y, mo, d, h, mi, s, 0, 0, 0))
            if not (1 <= mo <= 12 and 1 <= d <= calendar.monthrange(y, mo)[1]
                    and h < 24 and mi < 60 and s < 60):
                raise ValueError
        except ValueError:
            raise QuoteFormatError(row, f"bad timestamp {stamp!r}")
        try:
            ohlcv = [float(x) for x in fields[1:]]
        except ValueError:
            raise QuoteFormatError(row, "non-numeric OHLC field")
        times.append(epoch - 60 * utc_offset_minutes)
        prices.append(ohlcv[3])
    return times, prices


def _parse_generic_csv(lines):
    times, prices = [], []
    for k, (row, line) in enumerate(lines):
        fields = [f.strip() for f in line.split(",")]
        if k == 0 and fields == ["time", "price"]:
            continue
        if len(fields) != 2:
            raise QuoteFormatError(row, f"expected 2 ','-separated fields, got {len(fields)}")
        try:
            t = float(fields[0])
            p = float(fields[1])
        except ValueError:
            raise QuoteFormatError(row, "non-numeric field")
        if not math.isfinite(t) or t != int(t):
            raise QuoteFormatError(row, "epoch seconds must be an integer")
        times.append(int(t))
        prices.append(p)
    return times, prices


def parse_quote_file(data, format_tag, utc_offset_minutes=0, nominal_step=None):
    """Parse raw quote bytes into a :class:`PriceSeries`.

    Parameters
    ----------
    data : bytes or str
        File contents.
    format_tag : {"minute-ascii", "generic-csv"}
        ``minute-ascii`` rows are ``YYYYMMDD HHMMSS;open;high;low;close;volume``
        in the file's local time (the close is kept); ``generic-csv`` rows are
        ``epoch_seconds,price`` with an optional ``time,price`` header.
    utc_offset_minutes : int
        Offset of the file's clock from UTC (minute-ascii only).
    nominal_step : int, optional
        Grid spacing in seconds. Defaults to 60 for minute-ascii and to the
        greatest common divisor of the timestamp gaps for generic-csv.
    """
    if format_tag not in FORMATS:
        raise MarketDataError(f"unknown format {format_tag!r}; expected one of {FORMATS}")
    text = data.decode("utf-8-sig") if isinstance(data, (bytes, bytearray)) else data
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines()) if ln.strip()]
    if not lines:
        raise MarketDataError("empty quote file")

    if format_tag == "minute-ascii":
        times, prices = _parse_minute_ascii(lines, utc_offset_minutes)
    else:
        times, prices = _parse_generic_csv(lines)
    if not times:
        raise MarketDataError("quote file has a header but no records")

    rows = [r for r, _ in lines][-len(times):]
    for k in range(1, len(times)):
        if times[k] == times[k - 1]:
            raise QuoteFormatError(rows[k], f"duplicate timestamp {times[k]}")
        if times[k] < times[k - 1]:
            raise QuoteFormatError(rows[k], "timestamps not increasing")
    for k, p in enumerate(prices):
        if not (math.isfinite(p) and p > 0):
            raise QuoteFormatError(rows[k], f"price must be positive, got {p}")

    if nominal_step is None:
        if format_tag == "minute-ascii":
            nominal_step = 60
        else:
            gaps = np.diff(times).tolist()
            nominal_step = reduce(math.gcd, gaps) if gaps else 60
    return PriceSeries(np.array(times, dtype=np.int64), np.array(prices), nominal_step)


def _check_lag(series, lag):
    if lag <= 0 or lag % series.nominal_step:
        raise MarketDataError(
            f"lag {lag} s must be a positive multiple of the nominal step "
            f"({series.nominal_step} s)")


def _day_anchor(day, window):
    """Epoch second of the window origin on local calendar day ``day``."""
    return day * 86400 + window.origin_seconds - 60 * window.utc_offset_minutes


def _local_weekday(day):
    return (day + 3) % 7  # 1970-01-01 was a Thursday


def daily_windows(series, window, max_end_gap=3600):
    """Split a series into clock-anchored windows, one per calendar day.

    A window starts at the local ``window.origin_clock`` instant and spans
    ``window.horizon`` seconds (both ends included). It is kept only if the
    anchor instant is present in the data, the anchor is not on a weekend
    (when ``skip_weekends``) and the window is not truncated: its last
    observation must lie within ``max_end_gap`` seconds of the window end.
    Windows whose horizon runs into a market closure are therefore dropped.
    """
    t = series.epoch_times
    offset = 60 * window.utc_offset_minutes
    first_day = (int(t[0]) + offset) // 86400
    last_day = (int(t[-1]) + offset) // 86400
    segments = []
    for day in range(first_day, last_day + 1):
        if window.skip_weekends and _local_weekday(day) in _WEEKEND:
            continue
        anchor = _day_anchor(day, window)
        k = np.searchsorted(t, anchor)
        if k >= t.size or t[k] != anchor:
            continue
        end = anchor + window.horizon
        seg = series.slice_times(anchor, end)
        if seg.epoch_times[-1] < end - max_end_gap:
            continue
        segments.append(seg)
    if not segments:
        raise MarketDataError(
            f"no complete {window.horizon} s window anchored at {window.origin_clock} "
            f"(UTC offset {window.utc_offset_minutes} min)")
    return segments


def _segment_deltas(segments, lag):
    out = []
    for seg in segments:
        target = seg.epoch_times[0] + lag
        k = np.searchsorted(seg.epoch_times, target)
        if k < len(seg) and seg.epoch_times[k] == target:
            out.append(seg.prices[k] - seg.prices[0])
    return np.array(out)


def fluctuations(series, lag, window=None, stride=1):
    """Price differences at a fixed lag.

    Without a window every grid point is a time origin (overlapping
    origins; ``stride`` keeps every ``stride``-th grid point). With a window
    the origins are the clock anchors of :func:`daily_windows` and each pair
    must fall inside its window. Pairs whose endpoint is missing from the
    data produce no sample.
    """
    _check_lag(series, lag)
    if window is not None:
        if lag > window.horizon:
            raise NoOriginError(f"lag {lag} s exceeds the window horizon")
        deltas = _segment_deltas(daily_windows(series, window), lag)
    else:
        t, p = series.epoch_times, series.prices
        if stride > 1:
            keep = ((t - t[0]) // series.nominal_step) % stride == 0
        else:
            keep = np.ones(t.size, dtype=bool)
        target = t + lag
        k = np.searchsorted(t, target)
        ok = k < t.size
        ok[ok] &= t[k[ok]] == target[ok]
        ok &= keep
        deltas = p[k[ok]] - p[ok]
    if deltas.size == 0:
        raise NoOriginError(
            f"no valid time origin for lag {lag} s (lag too large or data too sparse)")
    return FluctuationSample(lag, deltas)


def segment_fluctuations(segments, lag):
    """Fluctuations from pre-cut segments, one origin per segment start."""
    deltas = _segment_deltas(segments, lag)
    if deltas.size == 0:
        raise NoOriginError(f"no segment long enough for lag {lag} s")
    return FluctuationSample(lag, deltas)


def to_generic_csv(series):
    """Serialise a series in the generic-csv format (with header)."""
    lines = ["time,price"]
    lines += [f"{int(t)},{float(p):.17g}" for t, p in zip(series.epoch_times, series.prices)]
    return "\n".join(lines) + "\n"


def concat_series(parts):
    """Join series from several files into one; overlapping times are rejected."""
    parts = sorted(parts, key=lambda s: int(s.epoch_times[0]))
    if len(parts) == 1:
        return parts[0]
    times = np.concatenate([s.epoch_times for s in parts])
    if np.any(np.diff(times) <= 0):
        raise MarketDataError("input files overlap in time")
    step = reduce(math.gcd, [s.nominal_step for s in parts])
    return PriceSeries(times, np.concatenate([s.prices for s in parts]), step)
