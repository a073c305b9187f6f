r"""Caged-jump van Hove function with Ornstein-Uhlenbeck vibration.

Displacement density ``G(p, t)`` of a price that vibrates inside a cage
(an OU process of stiffness ``alpha = D / l**2``) and leaves it by Gaussian
jumps of width ``d``. The first jump waits ``Exp(tau1)``, later ones
``Exp(tau2)``. In Fourier space

.. math::

    \tilde G(q,t) = e^{-t/\tau_1}\tilde f_v(q,t)
        + \tilde f_v(q,t)\,\tilde f(q,t)\,\tau_2\,
          \frac{e^{(\tilde f - 1)t/\tau_2} - e^{-t/\tau_1}}
               {\tau_2 - \tau_1 + \tilde f\tau_1},
    \qquad \tilde f = \tilde f_v\tilde f_j ,

and ``G(p, t)`` follows by a discrete inverse Fourier transform on a
symmetric power-of-two price grid. Times are in minutes, prices in price
units and ``D`` in price**2 per minute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import exprel

from .errors import GridError, ModelError
from .observables import Curve, Distribution

MIN_POINTS = 1024
MAX_DOUBLINGS = 3
NORM_TOL = 1e-6
RINGING_TOL = 1e-8
# Spectral truncation and periodic wrap-around must stay far below NORM_TOL.
NYQUIST_TOL = 1e-12
EDGE_MASS_TOL = 1e-10
MSPD_RTOL = 1e-4
# |y| below this uses the exprel form of the jump factor (see jump_ratio).
GUARD_BAND = 1.0


@dataclass(frozen=True)
class ModelParams:
    """Trap-model parameters.

    Attributes
    ----------
    D : float
        Short-time diffusion coefficient (price**2 / min).
    l : float
        Cage size, the stationary OU standard deviation (price).
    d : float
        Jump-kernel standard deviation (price).
    tau1, tau2 : float
        Mean waiting times of the first and of later jumps (min).
    """

    D: float
    l: float
    d: float
    tau1: float
    tau2: float

    NAMES = ("D", "l", "d", "tau1", "tau2")

    def __post_init__(self):
        for name in self.NAMES:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ModelError(f"parameter {name} must be positive and finite, got {v!r}")
            object.__setattr__(self, name, float(v))

    @property
    def alpha(self):
        return self.D / self.l ** 2

    def as_dict(self):
        return {n: getattr(self, n) for n in self.NAMES}

    def replace(self, **kw):
        vals = self.as_dict()
        vals.update(kw)
        return ModelParams(**vals)


# Reference parameter sets: one fitted to pooled pdfs, two fitted to morning
# (9:30) and evening (18:00) MSPD curves. D is read in price**2 / min.
PDF_FIT_PARAMS = ModelParams(D=2e-8, l=3.0e-3, d=1.5e-3, tau1=400.0, tau2=300.0)
MSPD_FIT_0930 = ModelParams(D=2e-4, l=3.00e-3, d=1.50e-3, tau1=400.0, tau2=300.0)
MSPD_FIT_1800 = ModelParams(D=1e-9, l=0.10e-3, d=0.15e-3, tau1=400.0, tau2=300.0)


def ou_variance(t, params):
    """OU displacement variance from the cage centre, ``l^2 (1 - exp(-2 alpha t))``."""
    t = np.asarray(t, dtype=float)
    return params.l ** 2 * -np.expm1(-2.0 * params.alpha * t)


def _positive_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ModelError("time must be positive")
    return t


def f_vib(p, t, params):
    """OU vibrational density at price offset ``p`` after time ``t``."""
    _positive_time(t)
    var = ou_variance(t, params)
    p = np.asarray(p, dtype=float)
    return np.exp(-0.5 * p * p / var) / np.sqrt(2.0 * math.pi * var)


def f_vib_hat(q, t, params):
    """Characteristic function of :func:`f_vib`."""
    _positive_time(t)
    q = np.asarray(q, dtype=float)
    return np.exp(-0.5 * q * q * ou_variance(t, params))


def f_jump_hat(q, params):
    q = np.asarray(q, dtype=float)
    return np.exp(-0.5 * q * q * params.d ** 2)


def f_hat(q, t, params):
    """Single-jump kernel: vibration at time ``t`` convolved with the jump."""
    q = np.asarray(q, dtype=float)
    return np.exp(-0.5 * q * q * (ou_variance(t, params) + params.d ** 2))


def waiting_densities(t, params):
    """Exponential densities of the first and subsequent waiting times."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ModelError("waiting time must be nonnegative")
    phi1 = np.exp(-t / params.tau1) / params.tau1
    phi2 = np.exp(-t / params.tau2) / params.tau2
    return phi1, phi2


def jump_ratio(f, t, tau1, tau2):
    r"""``tau2 (exp((f-1) t/tau2) - exp(-t/tau1)) / (tau2 - tau1 + f tau1)``.

    The denominator vanishes at ``f* = (tau1 - tau2) / tau1`` together with
    the numerator. Writing ``y = (f - f*) t / tau2`` the ratio equals
    ``(t/tau1) exp(-t/tau1) exprel(y)`` exactly, which is used for
    ``|y| < GUARD_BAND``; at ``y = 0`` it is the analytic limit
    ``(t/tau1) exp(-t/tau1)``. The direct quotient is used elsewhere, where
    it has no cancellation problem. ``tau1 == tau2`` needs no special case.
    """
    f = np.asarray(f, dtype=float)
    f_star = (tau1 - tau2) / tau1
    y = (f - f_star) * t / tau2
    near = np.abs(y) < GUARD_BAND
    out = np.empty(np.broadcast(f, y).shape)
    out[...] = (t / tau1) * math.exp(-t / tau1) * exprel(np.where(near, y, 0.0))
    far = ~near
    if np.any(far):
        fb = np.broadcast_to(f, out.shape)[far]
        num = np.exp((fb - 1.0) * t / tau2) - math.exp(-t / tau1)
        out[far] = tau2 * num / (tau2 - tau1 + fb * tau1)
    return out


def g_hat(q, t, params):
    """Fourier transform of the van Hove function at wavevector(s) ``q``."""
    t = float(_positive_time(t))
    fv = f_vib_hat(q, t, params)
    f = fv * f_jump_hat(q, params)
    return math.exp(-t / params.tau1) * fv + fv * f * jump_ratio(f, t, params.tau1, params.tau2)


def mean_jumps(t, params):
    """Mean number of jumps by time ``t`` (delayed renewal with exponential waits)."""
    t = np.asarray(t, dtype=float)
    no_jump = -np.expm1(-t / params.tau1)  # P(at least one jump)
    return no_jump + (t - params.tau1 * no_jump) / params.tau2


def mspd_closed_form(t, params):
    """Second moment of ``G(p, t)`` from the small-q expansion of ``g_hat``.

    Equals ``s + (s + d^2) J(t)`` with ``s`` the OU variance and ``J`` the mean
    jump count. Used for grid sizing and as a fast path in fitting.
    """
    s = ou_variance(t, params)
    return s + (s + params.d ** 2) * mean_jumps(t, params)


@dataclass(frozen=True)
class PriceGrid:
    """Symmetric grid ``p_j = -L + j * spacing`` with ``n_points`` samples."""

    half_width: float
    n_points: int

    def __post_init__(self):
        n = self.n_points
        if n < MIN_POINTS or n & (n - 1):
            raise GridError(f"n_points must be a power of two >= {MIN_POINTS}, got {n}")
        if not self.half_width > 0:
            raise GridError("half_width must be positive")

    @property
    def spacing(self):
        return 2.0 * self.half_width / self.n_points

    @property
    def prices(self):
        return self.spacing * (np.arange(self.n_points) - self.n_points // 2)

    @property
    def wavevectors(self):
        """Angular frequencies in FFT order."""
        return 2.0 * math.pi * np.fft.fftfreq(self.n_points, d=self.spacing)

    def check(self, params, t):
        """Raise :class:`GridError` if the documented sizing invariants fail."""
        t_max = float(np.max(t))
        if self.spacing > params.l / 10 * (1 + 1e-12):
            raise GridError(f"grid spacing {self.spacing:.3g} exceeds l/10")
        need = 20.0 * math.sqrt(float(mspd_closed_form(t_max, params)))
        if self.half_width < need * (1 - 1e-12):
            raise GridError(f"half width {self.half_width:.3g} below 20 rms displacements")


def auto_grid(params, t):
    """Smallest grid meeting the sizing rules for all times in ``t``.

    The spacing resolves ``l/10`` and a third of the narrowest Gaussian
    component (the no-jump OU peak at the earliest time); the half width
    covers 20 rms displacements at the latest time and 12 widths of the
    single-jump component at every time.
    """
    t = np.atleast_1d(_positive_time(t))
    s = ou_variance(t, params)
    spacing = min(params.l / 10, math.sqrt(float(s.min())) / 3)
    half = max(20.0 * math.sqrt(float(mspd_closed_form(t.max(), params))),
               12.0 * math.sqrt(float(np.max(2 * s + params.d ** 2))))
    n = max(MIN_POINTS, 1 << math.ceil(math.log2(2 * half / spacing)))
    return PriceGrid(half_width=0.5 * n * spacing, n_points=n)


def _inverse_fft(t, params, grid):
    ghat = g_hat(grid.wavevectors, t, params)
    g = np.fft.fftshift(np.fft.ifft(ghat).real) / grid.spacing
    # exact evenness: g[N/2 + k] and g[N/2 - k] get the same value
    n = grid.n_points
    mirrored = np.empty_like(g)
    mirrored[0] = g[0]
    mirrored[1:] = g[1:][::-1]
    return 0.5 * (g + mirrored), ghat


def _validate(g, ghat, grid):
    """Return the clipped density or raise GridError."""
    peak = g.max()
    if abs(ghat[grid.n_points // 2]) > NYQUIST_TOL:
        raise GridError("grid too coarse: spectrum not decayed at the Nyquist wavevector")
    edge = np.abs(grid.prices) > 0.9 * grid.half_width
    if g[edge].sum() * grid.spacing > EDGE_MASS_TOL:
        raise GridError("grid too narrow: density mass at the grid edge")
    if g.min() < -RINGING_TOL * peak:
        raise GridError("inverse transform rings above tolerance")
    g = np.where(g < 0, 0.0, g)
    drift = abs(g.sum() * grid.spacing - 1.0)
    if drift > NORM_TOL:
        raise GridError(f"normalization drift {drift:.2e}")
    return g


def _resolve(t, params, grid):
    """Evaluate on ``grid`` or, when it is None, on an auto grid with doublings."""
    if grid is not None:
        grid.check(params, t)
        g, ghat = _inverse_fft(t, params, grid)
        return _validate(g, ghat, grid), grid
    grid = auto_grid(params, t)
    for attempt in range(MAX_DOUBLINGS + 1):
        g, ghat = _inverse_fft(t, params, grid)
        try:
            return _validate(g, ghat, grid), grid
        except GridError as exc:
            if attempt == MAX_DOUBLINGS:
                raise
            if "narrow" in str(exc):
                grid = PriceGrid(2 * grid.half_width, 2 * grid.n_points)
            else:
                grid = PriceGrid(grid.half_width, 2 * grid.n_points)


def g_of_p(t, params, grid=None):
    """Van Hove density ``G(p, t)`` sampled on a symmetric price grid.

    Returns a pdf :class:`Distribution` whose lag is ``t`` converted to
    seconds. Negative ringing is clipped only below ``1e-8`` of the peak.
    """
    g, grid = _resolve(float(_positive_time(t)), params, grid)
    return Distribution("pdf", 60.0 * t, grid.prices, g, 0)


def model_ccdf(t, params, grid=None):
    """Folded tail ``P(|p| > x)`` on the nonnegative grid thresholds.

    Computed by trapezoidal integration of ``2 G`` from ``x`` to the grid
    edge; the edge point ``-L`` stands in for ``+L`` on the periodic grid.
    """
    g, grid = _resolve(float(_positive_time(t)), params, grid)
    n = grid.n_points
    half = np.append(g[n // 2:], g[0])  # p = 0, h, ..., L
    seg = 0.5 * (half[1:] + half[:-1]) * grid.spacing
    tail = 2.0 * np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    x = grid.spacing * np.arange(half.size)
    return Distribution("ccdf", 60.0 * t, x, tail, 0)


def folded_mass(x, t, params, grid=None):
    """``P(|p| <= x)`` at arbitrary thresholds by exact integration of the
    grid's trigonometric interpolant (no interpolation error).

    The grid is sized as in :func:`g_of_p`.
    """
    t = float(_positive_time(t))
    _, grid = _resolve(t, params, grid)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = grid.n_points
    k = np.arange(1, n // 2)
    q = 2.0 * math.pi * k / (n * grid.spacing)
    w = g_hat(q, t, params) / q
    dq = 2.0 * math.pi / (n * grid.spacing)
    out = np.empty(x.size)
    for i in range(0, x.size, 256):
        xs = x[i:i + 256]
        out[i:i + 256] = dq / math.pi * (xs + 2.0 * np.sin(np.outer(xs, q)) @ w)
    return out


def ccdf_at(x, t, params, grid=None):
    """Folded tail ``P(|p| > x)`` at arbitrary thresholds ``x >= 0``."""
    return 1.0 - folded_mass(x, t, params, grid)


def cdf_at(x, t, params, grid=None):
    """Signed cumulative distribution ``P(p <= x)``."""
    x = np.asarray(x, dtype=float)
    return 0.5 + 0.5 * np.sign(x) * folded_mass(np.abs(x), t, params, grid)


def spectral_second_moment(t, params):
    """``-d^2 G_hat / dq^2`` at ``q = 0`` by Richardson-extrapolated central
    differences."""
    scale = math.sqrt(float(mspd_closed_form(t, params)))
    h = 1e-3 / scale

    def second(h):
        g0 = g_hat(0.0, t, params)
        gh = g_hat(h, t, params)
        return float(2.0 * (g0 - gh) / (h * h))

    return (4.0 * second(h / 2) - second(h)) / 3.0


def model_mspd(t_grid, params, grid=None, method="quadrature"):
    """Model MSPD ``int p^2 G(p, t) dp`` as a :class:`Curve` (lags in seconds).

    With ``method="quadrature"`` each value is integrated on the price grid
    and cross-checked against :func:`spectral_second_moment`; a relative
    disagreement above ``1e-4`` raises :class:`ModelError`.
    ``method="closed"`` returns :func:`mspd_closed_form` directly.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    _positive_time(t_grid)
    if method == "closed":
        vals = mspd_closed_form(t_grid, params)
    elif method == "quadrature":
        vals = np.empty(t_grid.size)
        for i, t in enumerate(t_grid):
            g, gr = _resolve(float(t), params, grid)
            p = gr.prices
            vals[i] = float(np.sum(p * p * g) * gr.spacing)
            spec = spectral_second_moment(float(t), params)
            if abs(vals[i] - spec) > MSPD_RTOL * spec:
                raise ModelError(
                    f"MSPD quadrature {vals[i]:.6e} and spectral {spec:.6e} "
                    f"disagree at t={t} min")
    else:
        raise ModelError(f"unknown MSPD method {method!r}")
    return Curve(60.0 * t_grid, vals, np.ones(t_grid.size, dtype=np.int64))
