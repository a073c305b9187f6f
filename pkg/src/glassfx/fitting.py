"""Parameter estimation for the trap model and for S(q, tau) relaxation forms.

Model fits work on log-parameters (all five are positive scales) and
minimise a weighted mean of squared log-residuals with Nelder-Mead.

Restart policy
--------------
1. Nelder-Mead from ``init`` and from ``n_random`` seeded log-normal
   perturbations of it (10 % spread).
2. The best end point is polished by restarting Nelder-Mead with a fresh
   simplex (5 % steps) until one restart changes the residual by less than
   ``rtol`` relative (``converged = True``) or ``max_restarts`` polishing
   rounds have run (``converged = False``; the result is still returned).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize

from .errors import FitError, GridError, ModelError
from .observables import Distribution
from .trapmodel import ModelParams, ccdf_at, model_mspd

PENALTY = 1e300
# a double S(q, tau) component lighter than this is reported as absent
SQT_MIN_WEIGHT = 1e-4


@dataclass(frozen=True)
class FitResult:
    values: dict
    frozen: frozenset = frozenset()
    residual: float = 0.0
    n_iter: int = 0
    converged: bool = False

    @property
    def params(self):
        return ModelParams(**self.values)

    def to_json(self):
        doc = {}
        for name, v in self.values.items():
            doc[name] = v
            doc[f"{name}_frozen"] = name in self.frozen
        doc.update(residual=self.residual, n_iter=self.n_iter, converged=self.converged)
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        names = [k for k in doc if f"{k}_frozen" in doc]
        return cls(values={k: float(doc[k]) for k in names},
                   frozen=frozenset(k for k in names if doc[f"{k}_frozen"]),
                   residual=float(doc["residual"]), n_iter=int(doc["n_iter"]),
                   converged=bool(doc["converged"]))


def _check_frozen(frozen):
    frozen = frozenset(frozen)
    unknown = frozen - set(ModelParams.NAMES)
    if unknown:
        raise FitError(f"unknown parameter(s) to freeze: {sorted(unknown)}")
    return frozen


class _LogSpaceProblem:
    """Maps free log-parameters to a ModelParams and a scalar residual."""

    def __init__(self, residuals, init, frozen):
        self.residuals = residuals
        self.init = init
        self.free = [n for n in ModelParams.NAMES if n not in frozen]
        if not self.free:
            raise FitError("all parameters are frozen; nothing to fit")
        self.nfev = 0

    def params(self, x):
        vals = self.init.as_dict()
        for name, xi in zip(self.free, x):
            vals[name] = math.exp(xi)
        return ModelParams(**vals)

    def x0(self):
        return np.log([getattr(self.init, n) for n in self.free])

    def __call__(self, x):
        self.nfev += 1
        if not np.all(np.isfinite(x)) or np.any(np.abs(x) > 700):
            return PENALTY
        try:
            r, w = self.residuals(self.params(x))
        except (GridError, ModelError):
            return PENALTY
        if not np.all(np.isfinite(r)):
            return PENALTY
        return float(np.sum(w * r * r))


def _nelder_mead(fun, x0, step, maxiter):
    n = x0.size
    simplex = np.vstack([x0] + [x0 + step * np.eye(n)[i] for i in range(n)])
    res = minimize(fun, x0, method="Nelder-Mead",
                   options=dict(initial_simplex=simplex, xatol=1e-9, fatol=np.inf,
                                maxiter=maxiter, maxfev=maxiter * 2))
    return res.x, float(res.fun), int(res.nit)


def _optimize(problem, seed, n_random=3, max_restarts=6, rtol=1e-8, maxiter=None):
    x0 = problem.x0()
    maxiter = maxiter or 300 * x0.size
    rng = np.random.default_rng(seed)
    f_init = problem(x0)
    starts = [x0] + [x0 + 0.1 * rng.standard_normal(x0.size) for _ in range(n_random)]
    best_x, best_f, n_iter = x0, f_init, 0
    for s in starts:
        x, f, it = _nelder_mead(problem, s, 0.1, maxiter)
        n_iter += it
        if f < best_f:
            best_x, best_f = x, f
    converged = False
    for _ in range(max_restarts):
        x, f, it = _nelder_mead(problem, best_x, 0.05, maxiter)
        n_iter += it
        change = best_f - min(f, best_f)
        if f < best_f:
            best_x, best_f = x, f
        if change <= rtol * max(best_f, 1e-300):
            converged = True
            break
    return best_x, best_f, n_iter, converged


def _result(problem, x, f, n_iter, converged, frozen):
    p = problem.params(x)
    values = p.as_dict()
    for name in frozen:  # bit-identical to the input
        values[name] = getattr(problem.init, name)
    return FitResult(values, frozenset(frozen), f, n_iter, converged)


def _normalized(w):
    w = np.asarray(w, dtype=float)
    total = w.sum()
    if not total > 0:
        raise FitError("no data point carries positive weight")
    return w / total


def fit_model_to_ccdfs(data, init, frozen=(), tail_floor=1e-4, weights=None,
                       seed=0, **opt):
    """Fit one parameter set to folded ccdfs at several lags simultaneously.

    Parameters
    ----------
    data : sequence of Distribution or (lag, Distribution)
        Empirical ccdfs; lags are in seconds as everywhere in Distribution.
    init : ModelParams
        Starting point; frozen parameters keep these values exactly.
    frozen : iterable of str
        Names among ``D, l, d, tau1, tau2`` held fixed.
    tail_floor : float
        Points with tail probability below this get zero weight.
    weights : sequence of arrays, optional
        Per-point weights, one array per distribution.
    """
    items = [(float(it[0]), it[1]) if isinstance(it, tuple) else (it.lag, it) for it in data]
    if len(items) < 2:
        raise FitError("need ccdfs at two or more lags")
    frozen = _check_frozen(frozen)
    xs, ys, ws, ts = [], [], [], []
    for k, (lag, dist) in enumerate(items):
        if dist.kind != "ccdf":
            raise FitError("fit_model_to_ccdfs needs ccdf distributions")
        x, y = dist.abscissae, dist.ordinates
        w = np.ones_like(y) if weights is None else np.asarray(weights[k], dtype=float)
        keep = (x > 0) & (y >= tail_floor)
        xs.append(x[keep])
        ys.append(np.log(y[keep]))
        ws.append(w[keep])
        ts.append(lag / 60.0)
    w_all = _normalized(np.concatenate(ws))

    def residuals(p):
        r = [np.log(np.clip(ccdf_at(x, t, p), 1e-300, None)) - y
             for x, y, t in zip(xs, ys, ts)]
        return np.concatenate(r), w_all

    problem = _LogSpaceProblem(residuals, init, frozen)
    x, f, it, conv = _optimize(problem, seed, **opt)
    return _result(problem, x, f, it, conv, frozen)


def fit_model_to_mspd(curve, init, frozen=(), weights=None, seed=0,
                      method="closed", **opt):
    """Fit the model MSPD to an empirical curve (lags in seconds).

    ``method`` is passed to :func:`~glassfx.trapmodel.model_mspd`; the
    default closed-form second moment equals the grid quadrature to well
    within its 1e-4 cross-check and is much cheaper inside the optimiser.
    """
    if len(curve) == 0:
        raise FitError("empty MSPD curve")
    if np.any(curve.values <= 0):
        raise FitError("MSPD values must be positive for log residuals")
    frozen = _check_frozen(frozen)
    t = curve.lags / 60.0
    y = np.log(curve.values)
    w = _normalized(np.ones_like(y) if weights is None else weights)

    def residuals(p):
        return np.log(model_mspd(t, p, method=method).values) - y, w

    problem = _LogSpaceProblem(residuals, init, frozen)
    x, f, it, conv = _optimize(problem, seed, **opt)
    return _result(problem, x, f, it, conv, frozen)


# -- S(q, tau) relaxation forms ------------------------------------------------

@dataclass(frozen=True)
class SqtFitForm:
    """Fitted relaxation form of S(q, tau); timescales in minutes.

    ``single``: ``exp(-(tau/tau0)**p)`` with values ``tau0, p``.
    ``double``: ``A1 exp(-(tau/tau_alpha)**alpha)
    + (1 - A1) exp(-(tau/tau_beta)**beta)``.
    """

    form: str
    values: dict
    residual: float = 0.0
    converged: bool = True
    effectively_single: bool = False
    message: str = field(default="", compare=False)

    def __call__(self, tau):
        return sqt_form(self.form, self.values, tau)

    def to_json(self):
        doc = dict(form=self.form, **self.values, residual=self.residual,
                   converged=self.converged, effectively_single=self.effectively_single)
        return json.dumps(doc, indent=2) + "\n"


def sqt_form(form, v, tau):
    tau = np.asarray(tau, dtype=float)
    with np.errstate(over="ignore"):  # exp(-inf) is the intended 0
        if form == "single":
            return np.exp(-(tau / v["tau0"]) ** v["p"])
        a = v["A1"]
        return (a * np.exp(-(tau / v["tau_alpha"]) ** v["alpha"])
                + (1 - a) * np.exp(-(tau / v["tau_beta"]) ** v["beta"]))


def _sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z)) if z > -700 else 0.0


def _fit_single(tau, s):
    sel = (s > 0.02) & (s < 0.98)
    if sel.sum() >= 2:
        slope, icpt = np.polyfit(np.log(tau[sel]), np.log(-np.log(s[sel])), 1)
        p0 = max(slope, 0.05)
        tau0 = math.exp(-icpt / p0)
    else:
        p0, tau0 = 1.0, 10.0 * tau.max()

    def resid(z):
        return np.exp(-(tau / math.exp(z[0])) ** math.exp(z[1])) - s

    res = least_squares(resid, [math.log(tau0), math.log(p0)], method="lm",
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
    vals = dict(tau0=math.exp(res.x[0]), p=math.exp(res.x[1]))
    return vals, float(np.sum(res.fun ** 2)), res.success


def _fit_double(tau, s):
    def unpack(z):
        return dict(A1=_sigmoid(z[0]), tau_alpha=math.exp(z[1]), alpha=math.exp(z[2]),
                    tau_beta=math.exp(z[3]), beta=math.exp(z[4]))

    def resid(z):
        if np.any(np.abs(z[1:]) > 300):
            return np.full(s.size, 1e6)
        return sqt_form("double", unpack(z), tau) - s

    best = None
    lo, hi = math.log(tau.min()), math.log(tau.max())
    for ta in np.exp(np.linspace(lo, hi, 5)):
        for ratio in (10.0, 100.0):
            for a1 in (0.2, 0.5, 0.8):
                z0 = [math.log(a1 / (1 - a1)), math.log(ta), 0.0, math.log(ta * ratio), 0.0]
                res = least_squares(resid, z0, method="lm", xtol=1e-15, ftol=1e-15,
                                    gtol=1e-15, max_nfev=5000)
                cost = float(np.sum(res.fun ** 2))
                if best is None or cost < best[1]:
                    best = (res, cost)
    res, cost = best
    vals = unpack(res.x)
    if vals["tau_alpha"] > vals["tau_beta"]:  # report the faster relaxation first
        vals = dict(A1=1 - vals["A1"], tau_alpha=vals["tau_beta"], alpha=vals["beta"],
                    tau_beta=vals["tau_alpha"], beta=vals["alpha"])
    return vals, cost, res.success


def fit_sqt(curve, form="single"):
    """Least-squares fit of a stretched/compressed exponential form to S(q, tau).

    ``curve`` lags are in seconds; fitted timescales are in minutes. A
    single fit whose ``tau0`` runs beyond 100 times the longest lag (no
    visible decay) is reported as not converged, and a double fit with
    ``tau_alpha`` and ``tau_beta`` within 1 %, or with one amplitude below
    ``SQT_MIN_WEIGHT``, is flagged effectively single.
    """
    if form not in ("single", "double"):
        raise FitError(f"unknown S(q, tau) form {form!r}")
    keep = curve.lags > 0
    tau = curve.lags[keep] / 60.0
    s = curve.values[keep]
    need = 5 if form == "single" else 8
    if tau.size < need:
        raise FitError(f"{form} fit needs at least {need} points with positive lag")
    if np.any(s < -0.05) or np.any(s > 1.05):
        raise FitError("S(q, tau) values must lie in [-0.05, 1.05]")

    if form == "single":
        vals, cost, ok = _fit_single(tau, s)
        diverged = vals["tau0"] > 100.0 * tau.max()
        return SqtFitForm("single", vals, cost, bool(ok and not diverged),
                          message="tau0 diverges: no decay in range" if diverged else "")
    vals, cost, ok = _fit_double(tau, s)
    message = ""
    if abs(vals["tau_alpha"] - vals["tau_beta"]) <= 0.01 * vals["tau_beta"]:
        message = "tau_alpha ~ tau_beta: effectively single"
    elif min(vals["A1"], 1.0 - vals["A1"]) < SQT_MIN_WEIGHT:
        message = "one component has negligible weight: effectively single"
    return SqtFitForm("double", vals, cost, bool(ok), effectively_single=bool(message),
                      message=message)


def model_ccdf_data(params, lags_min, thresholds):
    """Noise-free ccdf Distributions from the model, for round-trip checks."""
    out = []
    for t, x in zip(lags_min, thresholds):
        x = np.asarray(x, dtype=float)
        out.append(Distribution("ccdf", 60.0 * t, x, ccdf_at(x, t, params), 0))
    return out
