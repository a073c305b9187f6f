"""Command-line front end: ``glassfx <command> [options]``.

Every command writes its tables into ``--out`` (default: current
directory) together with ``manifest.json``. Exit status is 0 on success,
1 on data errors and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import ctrw, fitting, market, observables, tables, trapmodel
from .errors import GlassfxError
from .trapmodel import ModelParams

PRESETS = {
    "pdf-fit": trapmodel.PDF_FIT_PARAMS,
    "0930": trapmodel.MSPD_FIT_0930,
    "1800": trapmodel.MSPD_FIT_1800,
}


class UsageError(Exception):
    pass


def _lag_list(text):
    try:
        lags = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad lag list {text!r}") from None
    if not lags or any(b <= a for a, b in zip(lags, lags[1:])) or lags[0] <= 0:
        raise argparse.ArgumentTypeError("lags must be positive and strictly increasing")
    return lags


def _name_list(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _add_output(p):
    p.add_argument("-o", "--out", default=".", help="output directory (default: .)")


def _add_input(p, nargs="+"):
    p.add_argument("inputs", nargs=nargs, metavar="QUOTES", help="quote files")
    p.add_argument("--format", default="generic-csv", choices=market.FORMATS)
    p.add_argument("--utc-offset", type=int, default=0, metavar="MIN",
                   help="clock offset of the files and of --origin from UTC, minutes")


def _add_lags(p, default="5,25,125,625,3125"):
    p.add_argument("--lags", type=_lag_list, default=_lag_list(default),
                   help="comma-separated lags in minutes")


def _add_window(p):
    p.add_argument("--origin", metavar="HH:MM", help="clock-anchored daily windows")
    p.add_argument("--horizon", type=int, metavar="S",
                   help="window length in seconds (default: whole days covering the "
                        "longest lag, at least one)")
    p.add_argument("--keep-weekends", action="store_true")
    p.add_argument("--stride", type=int, default=1)


def _add_params(p):
    g = p.add_argument_group("model parameters (D in price^2/min, taus in min)")
    g.add_argument("--preset", choices=sorted(PRESETS))
    for name in ModelParams.NAMES:
        g.add_argument(f"--{name}", type=float)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="glassfx",
        description="Glassy-dynamics analysis of price series and the caged-jump model.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate quote files and write generic csv")
    _add_input(p)
    _add_output(p)

    for name, what in [("pdf", "binned fluctuation pdfs"), ("ccdf", "folded ccdfs"),
                       ("mspd", "mean squared price displacement"),
                       ("sqt", "S(q, tau)"), ("alpha2", "non-Gaussian parameter")]:
        p = sub.add_parser(name, help=what)
        _add_input(p)
        _add_lags(p)
        _add_window(p)
        _add_output(p)
        if name == "pdf":
            p.add_argument("--bin-width", type=float, required=True)
        if name == "sqt":
            g = p.add_mutually_exclusive_group(required=True)
            g.add_argument("--q", type=float)
            g.add_argument("--r-l", type=float, help="localization length; q = 2 pi / (10 r_l)")

    p = sub.add_parser("model", help="model pdf, ccdf and MSPD tables")
    _add_params(p)
    _add_lags(p)
    p.add_argument("--what", type=_name_list, default=["pdf", "ccdf", "mspd"])
    _add_output(p)

    p = sub.add_parser("fit-ccdf", help="fit the model to ccdf tables")
    p.add_argument("tables", nargs="+", metavar="CCDF_CSV")
    _add_params(p)
    p.add_argument("--freeze", type=_name_list, default=[])
    p.add_argument("--tail-floor", type=float, default=1e-4)
    p.add_argument("--max-points", type=int, default=200,
                   help="thresholds kept per table, evenly spread in rank")
    p.add_argument("--seed", type=int, default=0)
    _add_output(p)

    p = sub.add_parser("fit-mspd", help="fit the model to an MSPD table")
    p.add_argument("table", metavar="CURVE_CSV")
    _add_params(p)
    p.add_argument("--freeze", type=_name_list, default=[])
    p.add_argument("--seed", type=int, default=0)
    _add_output(p)

    p = sub.add_parser("fit-sqt", help="fit a relaxation form to an S(q, tau) table")
    p.add_argument("table", metavar="CURVE_CSV")
    p.add_argument("--form", choices=("single", "double"), default="single")
    _add_output(p)

    p = sub.add_parser("simulate", help="synthetic series or ensemble tables")
    _add_params(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ensemble", action="store_true",
                   help="many trajectories observed at --lags instead of one series")
    p.add_argument("--n-traj", type=int, default=10000)
    p.add_argument("--bin-width", type=float)
    p.add_argument("--dt", type=float, help="minutes; default: largest allowed")
    p.add_argument("--duration", type=float, default=7 * 1440.0, help="minutes")
    p.add_argument("--step", type=int, default=60, help="series sampling, seconds")
    p.add_argument("--base-price", type=float, default=1.0)
    p.add_argument("--start-epoch", type=int, default=0)
    _add_lags(p)
    _add_output(p)

    p = sub.add_parser("compare", help="empirical table against the model")
    p.add_argument("table", metavar="CSV", help="empirical ccdf, pdf or MSPD table")
    _add_params(p)
    _add_output(p)
    return parser


# -- helpers -------------------------------------------------------------------

def _params(args):
    if args.preset:
        base = PRESETS[args.preset].as_dict()
    else:
        base = {}
    for name in ModelParams.NAMES:
        v = getattr(args, name)
        if v is not None:
            base[name] = v
    missing = [n for n in ModelParams.NAMES if n not in base]
    if missing:
        raise UsageError("missing model parameter(s): "
                         + ", ".join(f"--{n}" for n in missing) + " (or use --preset)")
    return ModelParams(**base)


def _read_text(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except FileNotFoundError:
        raise UsageError(f"no such input file: {path}") from None


def _load_series(args):
    parts = []
    for path in args.inputs:
        try:
            with open(path, "rb") as fh:
                data = fh.read()
        except FileNotFoundError:
            raise UsageError(f"no such input file: {path}") from None
        parts.append(market.parse_quote_file(data, args.format, args.utc_offset))
    return market.concat_series(parts)


def _lag_seconds(lags_min):
    secs = []
    for m in lags_min:
        s = m * 60.0
        if abs(s - round(s)) > 1e-9:
            raise UsageError(f"lag {m} min is not a whole number of seconds")
        secs.append(int(round(s)))
    return secs


def _horizon(args):
    if args.horizon is not None:
        return args.horizon
    days = max(1, int(np.ceil(max(args.lags) * 60.0 / 86400 - 1e-12)))
    return 86400 * days


def _window(args):
    if not args.origin:
        return None
    return market.WindowSpec(args.origin, args.utc_offset, _horizon(args),
                             not args.keep_weekends)


def _tag(lag_min):
    return f"{lag_min:g}".replace(".", "p")


def _without_out(argv):
    """argv minus the output directory, so the manifest does not depend on it."""
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
        elif a in ("-o", "--out"):
            skip = True
        elif not (a.startswith("--out=") or (a.startswith("-o") and len(a) > 2)):
            out.append(a)
    return out


class _Run:
    """Collects outputs of one command and writes them with the manifest."""

    def __init__(self, args, argv):
        self.args, self.argv = args, argv
        self.files = {}
        self.inputs = []
        self.config = {}
        self.seed = None
        self.summary = None

    def add(self, name, text):
        self.files[name] = text

    def commit(self):
        out = self.args.out
        os.makedirs(out, exist_ok=True)
        for name, text in sorted(self.files.items()):
            tables.atomic_write(os.path.join(out, name), text)
        text = tables.manifest(self.args.command, _without_out(self.argv), self.inputs,
                               self.config, list(self.files), self.seed, self.summary)
        tables.atomic_write(os.path.join(out, "manifest.json"), text)


# -- commands ------------------------------------------------------------------

def _observable_samples(args, run):
    series = _load_series(args)
    run.inputs = list(args.inputs)
    window = _window(args)
    run.config.update(format=args.format, utc_offset=args.utc_offset, lags_min=args.lags,
                      origin=args.origin, horizon=_horizon(args),
                      skip_weekends=not args.keep_weekends, stride=args.stride)
    samples = observables.lag_samples(series, _lag_seconds(args.lags), window, args.stride)
    if not samples:
        raise market.MarketDataError("no lag has an admissible time origin")
    return samples


def cmd_ingest(args, run):
    series = _load_series(args)
    run.inputs = list(args.inputs)
    run.config.update(format=args.format, utc_offset=args.utc_offset,
                      n_points=len(series), nominal_step=series.nominal_step)
    run.add("series.csv", market.to_generic_csv(series))


def cmd_pdf(args, run):
    run.config["bin_width"] = args.bin_width
    for s in _observable_samples(args, run):
        d = observables.pdf_estimate(s, args.bin_width)
        run.add(f"pdf_{_tag(s.lag / 60)}.csv", tables.distribution_to_csv(d))


def cmd_ccdf(args, run):
    for s in _observable_samples(args, run):
        d = observables.ccdf_estimate(s)
        run.add(f"ccdf_{_tag(s.lag / 60)}.csv", tables.distribution_to_csv(d))


def cmd_mspd(args, run):
    samples = _observable_samples(args, run)
    run.add("mspd.csv", tables.curve_to_csv(observables.mspd_from_samples(samples)))


def cmd_sqt(args, run):
    q = (observables.Wavevector(args.q) if args.q is not None
         else observables.wavevector_from_localization(args.r_l))
    run.config["q"] = q.q
    samples = _observable_samples(args, run)
    run.add("sqt.csv", tables.curve_to_csv(observables.sqt(samples, q), f"q={tables.fmt(q.q)}"))


def cmd_alpha2(args, run):
    samples = _observable_samples(args, run)
    run.add("alpha2.csv", tables.curve_to_csv(observables.alpha2(samples)))


def cmd_model(args, run):
    p = _params(args)
    unknown = set(args.what) - {"pdf", "ccdf", "mspd"}
    if unknown:
        raise UsageError(f"--what accepts pdf, ccdf, mspd; got {sorted(unknown)}")
    run.config.update(params=p.as_dict(), lags_min=args.lags, what=args.what)
    for t in args.lags:
        if "pdf" in args.what:
            run.add(f"model_pdf_{_tag(t)}.csv",
                    tables.distribution_to_csv(trapmodel.g_of_p(t, p)))
        if "ccdf" in args.what:
            run.add(f"model_ccdf_{_tag(t)}.csv",
                    tables.distribution_to_csv(trapmodel.model_ccdf(t, p)))
    if "mspd" in args.what:
        run.add("model_mspd.csv", tables.curve_to_csv(trapmodel.model_mspd(args.lags, p)))


def _thin(dist, max_points, tail_floor):
    keep = np.flatnonzero((dist.abscissae > 0) & (dist.ordinates >= tail_floor))
    if keep.size > max_points:
        keep = keep[np.unique(np.linspace(0, keep.size - 1, max_points).round().astype(int))]
    return observables.Distribution("ccdf", dist.lag, dist.abscissae[keep],
                                    dist.ordinates[keep], dist.n_samples)


def cmd_fit_ccdf(args, run):
    init = _params(args)
    data = [tables.distribution_from_csv(_read_text(p)) for p in args.tables]
    data = [_thin(d, args.max_points, args.tail_floor) for d in data]
    run.inputs = list(args.tables)
    run.seed = args.seed
    run.config.update(init=init.as_dict(), freeze=sorted(args.freeze),
                      tail_floor=args.tail_floor, max_points=args.max_points)
    res = fitting.fit_model_to_ccdfs(data, init, args.freeze, tail_floor=args.tail_floor,
                                     seed=args.seed)
    run.add("fit.json", res.to_json())


def cmd_fit_mspd(args, run):
    init = _params(args)
    curve = tables.curve_from_csv(_read_text(args.table))
    run.inputs = [args.table]
    run.seed = args.seed
    run.config.update(init=init.as_dict(), freeze=sorted(args.freeze))
    res = fitting.fit_model_to_mspd(curve, init, args.freeze, seed=args.seed)
    run.add("fit.json", res.to_json())


def cmd_fit_sqt(args, run):
    curve = tables.curve_from_csv(_read_text(args.table))
    run.inputs = [args.table]
    run.config["form"] = args.form
    run.add("sqt_fit.json", fitting.fit_sqt(curve, args.form).to_json())


def cmd_simulate(args, run):
    p = _params(args)
    run.seed = args.seed
    if args.ensemble:
        run.config.update(params=p.as_dict(), mode="ensemble", n_traj=args.n_traj,
                          lags_min=args.lags, bin_width=args.bin_width)
        ens = ctrw.simulate_ensemble(p, args.lags, args.n_traj, args.seed)
        run.add("sim_mspd.csv", tables.curve_to_csv(ctrw.ensemble_mspd(ens)))
        for s in ctrw.ensemble_samples(ens):
            tag = _tag(s.lag / 60)
            run.add(f"sim_ccdf_{tag}.csv",
                    tables.distribution_to_csv(observables.ccdf_estimate(s)))
            if args.bin_width:
                run.add(f"sim_pdf_{tag}.csv", tables.distribution_to_csv(
                    observables.pdf_estimate(s, args.bin_width)))
        return
    limit = min(1.0 / (10.0 * p.alpha), p.tau2 / 100.0)
    dt = args.dt
    if dt is None:
        # largest step that divides the sampling interval
        k = int(np.ceil(args.step / 60.0 / limit - 1e-12))
        dt = args.step / 60.0 / max(k, 1)
    cfg = ctrw.SimConfig(p, dt, args.duration, 1, args.seed)
    run.config.update(params=p.as_dict(), mode="series", dt=dt, duration=args.duration,
                      step=args.step, base_price=args.base_price,
                      start_epoch=args.start_epoch)
    series = ctrw.synthesize_series(cfg, args.step, args.base_price, args.start_epoch)
    run.add("series.csv", market.to_generic_csv(series))


def _ks(emp, model_tail):
    return float(np.max(np.abs(emp - model_tail))) if emp.size else 0.0


def cmd_compare(args, run):
    p = _params(args)
    text = _read_text(args.table)
    run.inputs = [args.table]
    run.config["params"] = p.as_dict()
    if any(line.strip() == "x,y,n" for line in text.splitlines()):
        dist = tables.distribution_from_csv(text)
        t = dist.lag / 60.0
        x = dist.abscissae
        if dist.kind == "ccdf":
            model = trapmodel.ccdf_at(np.abs(x), t, p)
            # step ccdf: the sup over jumps is attained at either side of each step
            left = np.concatenate([[1.0], dist.ordinates[:-1]])
            stat = max(_ks(dist.ordinates, model), _ks(left, model))
            run.summary = {"kind": "ccdf", "lag_min": t, "ks": stat}
        else:
            w = dist.bin_width
            # bin-averaged model density; folded mass is split over +-x
            hi = trapmodel.folded_mass(np.abs(x) + w / 2, t, p)
            lo = trapmodel.folded_mass(np.maximum(np.abs(x) - w / 2, 0.0), t, p)
            model = np.where(x == 0, hi / w, (hi - lo) / (2 * w))
            run.summary = {"kind": "pdf", "lag_min": t,
                           "sup_norm": float(np.max(np.abs(dist.ordinates - model)))}
        rows = [f"{tables.fmt(a)},{tables.fmt(e)},{tables.fmt(m)}"
                for a, e, m in zip(x, dist.ordinates, model)]
        run.add("compare.csv", "\n".join(["x,empirical,model"] + rows) + "\n")
    else:
        curve = tables.curve_from_csv(text)
        model = trapmodel.model_mspd(curve.lags_min, p).values
        rel = np.abs(curve.values / model - 1.0)
        run.summary = {"kind": "mspd", "sup_rel": float(np.max(rel))}
        rows = [f"{tables.fmt(a)},{tables.fmt(e)},{tables.fmt(m)}"
                for a, e, m in zip(curve.lags_min, curve.values, model)]
        run.add("compare.csv", "\n".join(["lag,empirical,model"] + rows) + "\n")
    print(json.dumps(run.summary, sort_keys=True))


COMMANDS = {
    "ingest": cmd_ingest, "pdf": cmd_pdf, "ccdf": cmd_ccdf, "mspd": cmd_mspd,
    "sqt": cmd_sqt, "alpha2": cmd_alpha2, "model": cmd_model,
    "fit-ccdf": cmd_fit_ccdf, "fit-mspd": cmd_fit_mspd, "fit-sqt": cmd_fit_sqt,
    "simulate": cmd_simulate, "compare": cmd_compare,
}


def run(argv=None):
    """Run one command; returns the exit status."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    job = _Run(args, argv)
    try:
        COMMANDS[args.command](args, job)
        job.commit()
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"glassfx {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except GlassfxError as exc:
        print(f"glassfx {args.command}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"glassfx {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())
