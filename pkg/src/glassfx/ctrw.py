"""Monte Carlo simulator of the caged-jump price process.

Between jumps the price vibrates around its cage centre as an OU process
started from the centre. At a jump (first after ``Exp(tau1)``, later ones
after ``Exp(tau2)``) the new cage is centred on the current price displaced
by ``N(0, d^2)`` and the vibration restarts from zero. The displacement
after ``n`` jumps is then a sum of ``n + 1`` vibrational excursions and ``n``
kernel jumps, the same structure as the model's ``f_vib * (f_vib f_jump)^n``.

OU transitions are exact for any step and jumps sit at their continuous
times, so the only role of ``dt`` is the output sampling grid.

Seeding: trajectory ``i`` of :func:`simulate` draws from
``Philox(SeedSequence(seed, spawn_key=(i,)))``, so it does not depend on
``n_traj`` or on scheduling. :func:`simulate_ensemble` uses a single Philox
stream for vectorised draws; it is deterministic in ``(seed, n_traj, times)``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .errors import SimulationError
from .market import FluctuationSample, PriceSeries, to_generic_csv
from .observables import Curve, pdf_estimate
from .trapmodel import ModelParams


def max_threads():
    """Thread cap from ``GLASSFX_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("GLASSFX_THREADS", "1")))
    except ValueError:
        return 1


def _rng(seed, *spawn_key):
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(spawn_key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SimConfig:
    params: ModelParams
    dt: float
    duration: float
    n_traj: int = 1
    seed: int = 0

    def __post_init__(self):
        p = self.params
        limit = min(1.0 / (10.0 * p.alpha), p.tau2 / 100.0)
        if not self.dt > 0 or self.dt > limit * (1 + 1e-12):
            raise SimulationError(
                f"dt={self.dt} min must be in (0, {limit:.4g}] = min(1/(10 alpha), tau2/100)")
        if self.duration < self.dt:
            raise SimulationError("duration must be at least one step")
        if self.n_traj < 1:
            raise SimulationError("n_traj must be >= 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise SimulationError("seed must be a 64-bit unsigned integer")

    @property
    def n_steps(self):
        return int(math.floor(self.duration / self.dt + 1e-9))


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    positions: np.ndarray
    jump_times: np.ndarray


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Displacements ``p(t) - p(0)`` of many trajectories at shared times."""

    times: np.ndarray
    displacements: np.ndarray  # shape (n_traj, n_times)


def _ou_var(params, dt):
    return params.l ** 2 * -np.expm1(-2.0 * params.alpha * np.asarray(dt, dtype=float))


def _jump_times(rng, params, duration):
    out = []
    t = rng.exponential(params.tau1)
    while t <= duration:
        out.append(t)
        t += rng.exponential(params.tau2)
    return np.array(out)


def _one_trajectory(config, index):
    p = config.params
    rng = _rng(config.seed, index)
    n = config.n_steps
    times = config.dt * np.arange(n + 1)
    jumps = _jump_times(rng, p, config.duration)
    a = math.exp(-p.alpha * config.dt)
    step_sd = math.sqrt(_ou_var(p, config.dt))

    pos = np.empty(n + 1)
    centre = 0.0
    bounds = np.concatenate([[0.0], jumps, [np.inf]])
    # grid indices belonging to each inter-jump segment
    cuts = np.searchsorted(times, bounds, side="left")
    for k in range(bounds.size - 1):
        start, stop = bounds[k], bounds[k + 1]
        i0, i1 = cuts[k], cuts[k + 1]
        if i1 > i0:
            first = rng.normal() * math.sqrt(_ou_var(p, times[i0] - start))
            drive = step_sd * rng.normal(size=i1 - i0)
            drive[0] = first
            v = lfilter([1.0], [1.0, -a], drive)
            pos[i0:i1] = centre + v
            v_last, t_last = v[-1], times[i1 - 1]
        else:
            v_last, t_last = 0.0, start
        if np.isfinite(stop):
            lag = stop - t_last
            v_jump = (v_last * math.exp(-p.alpha * lag)
                      + rng.normal() * math.sqrt(_ou_var(p, lag)))
            centre += v_jump + p.d * rng.normal()
    return Trajectory(times, pos, jumps)


def simulate(config):
    """Simulate ``config.n_traj`` trajectories sampled every ``dt`` minutes.

    Every trajectory starts at price 0 at the cage centre.
    """
    workers = min(max_threads(), config.n_traj)
    if workers == 1:
        return [_one_trajectory(config, i) for i in range(config.n_traj)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda i: _one_trajectory(config, i), range(config.n_traj)))


def simulate_ensemble(params, times, n_traj, seed=0):
    """Event-driven exact sampling of ``p(t) - p(0)`` at the given times.

    Suited to large ensembles observed at a few times: the cost scales with
    the number of jumps, not with ``duration / dt``.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(times < 0) or np.any(np.diff(times) <= 0):
        raise SimulationError("observation times must be nonnegative and increasing")
    if n_traj < 1:
        raise SimulationError("n_traj must be >= 1")
    rng = _rng(seed)
    alpha = params.alpha

    def advance(v, lag):
        return v * np.exp(-alpha * lag) + np.sqrt(_ou_var(params, lag)) * rng.normal(size=v.size)

    now = np.zeros(n_traj)
    centre = np.zeros(n_traj)
    vib = np.zeros(n_traj)
    next_jump = rng.exponential(params.tau1, size=n_traj)
    out = np.empty((n_traj, times.size))
    for j, t_obs in enumerate(times):
        while True:
            due = np.flatnonzero(next_jump <= t_obs)
            if due.size == 0:
                break
            v = advance(vib[due], next_jump[due] - now[due])
            centre[due] += v + params.d * rng.normal(size=due.size)
            vib[due] = 0.0
            now[due] = next_jump[due]
            next_jump[due] += rng.exponential(params.tau2, size=due.size)
        vib = advance(vib, t_obs - now)
        now[:] = t_obs
        out[:, j] = centre + vib
    return Ensemble(times, out)


def displacements(trajectories, t):
    """``p(t) - p(0)`` across an ensemble or a list of trajectories."""
    if isinstance(trajectories, Ensemble):
        k = np.flatnonzero(np.isclose(trajectories.times, t, rtol=1e-12, atol=1e-12))
        if k.size == 0:
            raise SimulationError(f"t={t} min is not an observation time of the ensemble")
        return trajectories.displacements[:, k[0]].copy()
    traj0 = trajectories[0]
    if t < 0 or t > traj0.times[-1] * (1 + 1e-12):
        raise SimulationError(f"t={t} min beyond the simulated duration")
    dt = traj0.times[1] - traj0.times[0] if traj0.times.size > 1 else 1.0
    k = int(round(t / dt))
    if abs(traj0.times[k] - t) > 1e-9 * max(1.0, t):
        raise SimulationError(f"t={t} min is not on the dt grid")
    return np.array([tr.positions[k] - tr.positions[0] for tr in trajectories])


def displacement_histogram(trajectories, t, bin_width):
    """Empirical ``G(p, t)`` as a pdf with bins centred on multiples of ``bin_width``."""
    d = displacements(trajectories, t)
    return pdf_estimate(FluctuationSample(60.0 * t, d), bin_width)


def ensemble_samples(ensemble):
    """One :class:`FluctuationSample` per observation time (lag in seconds)."""
    return [FluctuationSample(60.0 * t, ensemble.displacements[:, j])
            for j, t in enumerate(ensemble.times)]


def ensemble_mspd(ensemble):
    t = ensemble.times
    keep = t > 0
    d = ensemble.displacements[:, keep]
    return Curve(60.0 * t[keep], np.mean(d * d, axis=0),
                 np.full(int(keep.sum()), d.shape[0], dtype=np.int64))


def _series_from_positions(times_min, positions, base_price, start_epoch):
    secs = np.rint(np.asarray(times_min) * 60.0).astype(np.int64)
    if not np.allclose(secs, np.asarray(times_min) * 60.0, atol=1e-6):
        raise SimulationError("sampling times must fall on whole seconds")
    prices = base_price + positions
    if np.any(prices <= 0):
        raise SimulationError("base price too small: simulated price went nonpositive")
    step = int(secs[1] - secs[0]) if secs.size > 1 else 60
    return PriceSeries(start_epoch + secs, prices, step)


def synthesize_series(config, nominal_step, base_price=1.0, start_epoch=0):
    """One long trajectory resampled every ``nominal_step`` seconds as a PriceSeries."""
    ratio = nominal_step / (60.0 * config.dt)
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-9 * ratio:
        raise SimulationError("nominal_step must be a whole multiple of dt")
    traj = _one_trajectory(config, 0)
    return _series_from_positions(traj.times[::k], traj.positions[::k],
                                  base_price, start_epoch)


def trajectory_to_generic_csv(trajectory, base_price=1.0, start_epoch=0):
    """Export a trajectory in the generic-csv quote format."""
    series = _series_from_positions(trajectory.times, trajectory.positions,
                                    base_price, start_epoch)
    return to_generic_csv(series)
