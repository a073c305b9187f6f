"""Empirical estimators: fluctuation pdf/ccdf, MSPD, S(q, tau) and alpha_2."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoOriginError, ObservableError
from .market import FluctuationSample, PriceSeries, fluctuations, segment_fluctuations

DEFAULT_LAGS_MIN = (5, 25, 125, 625, 3125)


@dataclass(frozen=True, eq=False)
class Distribution:
    """Binned pdf or stepwise folded ccdf of price fluctuations at one lag.

    For ``kind == "pdf"`` the abscissae are bin centres and the ordinates
    densities; for ``kind == "ccdf"`` they are thresholds ``x`` and tail
    probabilities ``P(|dp| > x)``. ``counts`` holds the number of samples per
    bin (pdf) or beyond each threshold (ccdf); it is ``None`` for model output.
    """

    kind: str
    lag: float
    abscissae: np.ndarray
    ordinates: np.ndarray
    n_samples: int
    counts: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("pdf", "ccdf"):
            raise ObservableError(f"unknown distribution kind {self.kind!r}")
        object.__setattr__(self, "abscissae", np.asarray(self.abscissae, dtype=float))
        object.__setattr__(self, "ordinates", np.asarray(self.ordinates, dtype=float))
        if self.counts is not None:
            object.__setattr__(self, "counts", np.asarray(self.counts, dtype=np.int64))

    @property
    def bin_width(self):
        if self.kind != "pdf" or self.abscissae.size < 2:
            raise ObservableError("bin width is only defined for a binned pdf")
        return float(self.abscissae[1] - self.abscissae[0])

    def tail(self, x):
        """Right-continuous step evaluation of a ccdf at thresholds ``x``."""
        if self.kind != "ccdf":
            raise ObservableError("tail() needs a ccdf")
        x = np.asarray(x, dtype=float)
        k = np.searchsorted(self.abscissae, x, side="right") - 1
        return np.where(k < 0, 1.0, self.ordinates[np.clip(k, 0, None)])


@dataclass(frozen=True, eq=False)
class Curve:
    """Observable tabulated against lag (seconds), with samples per lag."""

    lags: np.ndarray
    values: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        lags = np.asarray(self.lags, dtype=float)
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "counts", np.asarray(self.counts, dtype=np.int64))
        if not (lags.shape == self.values.shape == self.counts.shape) or lags.ndim != 1:
            raise ObservableError("curve columns must be 1-D and equally long")
        if np.any(np.diff(lags) <= 0):
            raise ObservableError("curve lags must be strictly increasing")
        if np.any(self.counts <= 0):
            raise ObservableError("every tabulated lag needs a positive sample count")

    @property
    def lags_min(self):
        return self.lags / 60.0

    def __len__(self):
        return self.lags.size


@dataclass(frozen=True)
class Wavevector:
    q: float

    def __post_init__(self):
        if not (self.q > 0 and math.isfinite(self.q)):
            raise ObservableError(f"wavevector must be positive, got {self.q}")


def lag_ladder(start=5, factor=5, count=5):
    """Geometric lag grid in minutes, by default 5, 25, 125, 625, 3125."""
    return [start * factor ** k for k in range(count)]


def pdf_estimate(sample, bin_width):
    """Histogram density of the deltas on bins centred at multiples of ``bin_width``.

    The binning is symmetric about zero and always has at least three bins.
    A nonzero sample that would fit entirely into the central bin is
    rejected, since it carries no shape information at that resolution.
    """
    if not bin_width > 0:
        raise ObservableError("bin width must be positive")
    d = sample.deltas
    reach = float(np.max(np.abs(d)))
    k_max = int(np.floor(reach / bin_width + 0.5))
    if reach > 0 and k_max < 1:
        raise ObservableError(
            f"bin width {bin_width} too large: fewer than 3 bins span the sample")
    k_max = max(k_max, 1)
    idx = np.floor(d / bin_width + 0.5).astype(np.int64) + k_max
    counts = np.bincount(idx, minlength=2 * k_max + 1)
    centres = bin_width * np.arange(-k_max, k_max + 1)
    density = counts / (d.size * bin_width)
    return Distribution("pdf", sample.lag, centres, density, d.size, counts)


def ccdf_estimate(sample):
    """Folded empirical tail ``P(|dp| > x)``.

    Thresholds are 0 followed by the sorted distinct nonzero ``|dp|``.
    """
    a = np.sort(np.abs(sample.deltas))
    n = a.size
    thresholds = np.unique(a)
    if thresholds[0] != 0.0:
        thresholds = np.concatenate([[0.0], thresholds])
    beyond = n - np.searchsorted(a, thresholds, side="right")
    return Distribution("ccdf", sample.lag, thresholds, beyond / n, n, beyond)


def lag_samples(source, lag_grid, window=None, stride=1):
    """Fluctuation samples per lag (seconds); lags without origins are skipped.

    ``source`` is a :class:`PriceSeries` (optionally with a window) or a list
    of pre-cut segments, each contributing its first point as origin.
    """
    samples = []
    for lag in lag_grid:
        try:
            if isinstance(source, PriceSeries):
                s = fluctuations(source, lag, window=window, stride=stride)
            else:
                s = segment_fluctuations(source, lag)
        except NoOriginError:
            continue
        samples.append(s)
    return samples


def _curve(samples, fn):
    samples = sorted(samples, key=lambda s: s.lag)
    return Curve([s.lag for s in samples], [fn(s.deltas) for s in samples],
                 [s.origin_count for s in samples])


def mspd(source, lag_grid, window=None, stride=1):
    """Mean squared price displacement over the admissible origins per lag.

    Lags (seconds) with no admissible origin are left out of the curve.
    """
    samples = lag_samples(source, lag_grid, window, stride)
    return mspd_from_samples(samples)


def mspd_from_samples(samples):
    return _curve(samples, lambda d: float(np.mean(d * d)))


def sqt(samples, q):
    """Real part of the displacement characteristic function, ``<cos(q dp)>``.

    A sample with lag 0 yields exactly 1.
    """
    q = q.q if isinstance(q, Wavevector) else Wavevector(float(q)).q

    def value(d):
        return float(np.mean(np.cos(q * d)))

    samples = sorted(samples, key=lambda s: s.lag)
    vals = [1.0 if s.lag == 0 else value(s.deltas) for s in samples]
    return Curve([s.lag for s in samples], vals, [s.origin_count for s in samples])


def alpha2(samples):
    """One-dimensional non-Gaussian parameter ``<dp^4> / (3 <dp^2>^2) - 1``."""

    def value(d):
        m2 = np.mean(d * d)
        if m2 == 0:
            raise ObservableError("zero second moment: degenerate (constant) window")
        return float(np.mean(d ** 4) / (3.0 * m2 * m2) - 1.0)

    return _curve(samples, value)


def wavevector_from_localization(r_l):
    """Probe wavevector ``2 pi / (10 r_l)`` for a localization length ``r_l``."""
    if not r_l > 0:
        raise ObservableError(f"localization length must be positive, got {r_l}")
    return Wavevector(2.0 * math.pi / (10.0 * r_l))
