"""CSV tables for curves and distributions, atomic writes and run manifests.

User-facing tables are in minutes; the in-memory objects keep lags in
seconds. Floats are written with 17 significant digits so that a written
table reads back to the same doubles.
"""

from __future__ import annotations

import hashlib
import json
import os
import platform
import tempfile

import numpy as np
import scipy

from .errors import ObservableError
from .observables import Curve, Distribution


def fmt(x):
    return f"{float(x):.17g}"


def _seconds(lag_min):
    s = float(lag_min) * 60.0
    r = round(s)
    # lags read back from minutes land on the whole seconds they came from
    return float(r) if abs(s - r) <= 1e-9 * max(1.0, abs(s)) else s


def curve_to_csv(curve, comment=None):
    lines = [f"# {comment}"] if comment else []
    lines.append("lag,value,count")
    lines += [f"{fmt(t / 60.0)},{fmt(v)},{int(c)}"
              for t, v, c in zip(curve.lags, curve.values, curve.counts)]
    return "\n".join(lines) + "\n"


def _rows(text, header):
    meta, rows, seen = {}, [], False
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, val = line[1:].strip().partition("=")
            if sep:
                meta[key.strip()] = val.strip()
            continue
        if not seen:
            if line != header:
                raise ObservableError(f"line {n}: expected header {header!r}, got {line!r}")
            seen = True
            continue
        fields = line.split(",")
        if len(fields) != 3:
            raise ObservableError(f"line {n}: expected 3 fields, got {len(fields)}")
        rows.append((n, fields))
    if not seen:
        raise ObservableError(f"missing header {header!r}")
    return meta, rows


def curve_from_csv(text):
    """Read a ``lag,value,count`` table (lags in minutes) into a :class:`Curve`."""
    _, rows = _rows(text, "lag,value,count")
    try:
        lags = [_seconds(f[0]) for _, f in rows]
        values = [float(f[1]) for _, f in rows]
        counts = [int(f[2]) for _, f in rows]
    except ValueError as exc:
        raise ObservableError(f"malformed curve table: {exc}") from None
    return Curve(lags, values, counts)


def distribution_to_csv(dist):
    lines = [f"# kind={dist.kind}", f"# lag_min={fmt(dist.lag / 60.0)}",
             f"# n_samples={int(dist.n_samples)}", "x,y,n"]
    counts = dist.counts if dist.counts is not None else [None] * dist.abscissae.size
    lines += [f"{fmt(x)},{fmt(y)},{'' if c is None else int(c)}"
              for x, y, c in zip(dist.abscissae, dist.ordinates, counts)]
    return "\n".join(lines) + "\n"


def distribution_from_csv(text):
    """Read an ``x,y,n`` table with its ``# kind``/``# lag_min`` metadata.

    An empty ``n`` column (model output) reads back as ``counts=None``.
    """
    meta, rows = _rows(text, "x,y,n")
    try:
        kind = meta["kind"]
        lag = _seconds(meta["lag_min"])
        n_samples = int(meta.get("n_samples", 0))
        x = [float(f[0]) for _, f in rows]
        y = [float(f[1]) for _, f in rows]
        raw = [f[2].strip() for _, f in rows]
        counts = None if all(c == "" for c in raw) else [int(c) for c in raw]
    except KeyError as exc:
        raise ObservableError(f"distribution table lacks '# {exc.args[0]}=' metadata") from None
    except ValueError as exc:
        raise ObservableError(f"malformed distribution table: {exc}") from None
    return Distribution(kind, lag, np.array(x), np.array(y), n_samples, counts)


def atomic_write(path, text):
    """Write ``text`` to ``path`` via a temporary file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def versions():
    from . import __version__
    return {"glassfx": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def manifest(command, argv, inputs, config, outputs, seed=None, summary=None):
    """Run manifest as JSON text. No timestamps, so reruns are byte-identical."""
    doc = {
        "command": command,
        "argv": list(argv),
        "inputs": [{"path": p, "sha256": sha256_file(p)} for p in inputs],
        "config": config,
        "seed": seed,
        "outputs": sorted(outputs),
        "versions": versions(),
    }
    if summary is not None:
        doc["summary"] = summary
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
