"""Long-format CSV for traces.

One row per recorded value::

    t,node,signal,component,value

Floats are written with ``repr`` so that reading the file back gives the
same bits.  Rows are ordered by time, then node, then signal, then
component.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .sim import SIGNALS, Trace

HEADER = ("t", "node", "signal", "component", "value")


def _rows(tr: Trace):
    names = [s for s in SIGNALS if s in tr.data]
    K, N = len(tr.t), tr.n_nodes
    for k in range(K):
        tk = repr(float(tr.t[k]))
        for j in range(N):
            for s in names:
                vals = tr.data[s][k, j].tolist()
                for c, v in enumerate(vals):
                    yield tk, j, s, c, repr(v)


def write_csv(tr: Trace, path) -> Path:
    """Write ``tr`` to ``path`` and return the path."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HEADER)
        w.writerows(_rows(tr))
    return path


def read_csv(path) -> Trace:
    """Parse a file written by :func:`write_csv` back into a :class:`Trace`.

    Only the grid and the signals are stored in the file; status fields of
    the returned trace keep their defaults, with ``t_end`` set to the last
    grid time.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rd = csv.reader(fh)
        head = tuple(next(rd, ()))
        if head != HEADER:
            raise ValueError(f"{path}: expected header {','.join(HEADER)}")
        times, nodes, sigs, comps, vals = [], [], [], [], []
        for row in rd:
            if not row:
                continue
            t, n, s, c, v = row
            times.append(float(t))
            nodes.append(int(n))
            sigs.append(s)
            comps.append(int(c))
            vals.append(float(v))
    if not times:
        raise ValueError(f"{path}: no data rows")
    t_grid = np.array(sorted(set(times)))
    k_of = {t: k for k, t in enumerate(t_grid.tolist())}
    N = max(nodes) + 1
    dims = {}
    for s, c in zip(sigs, comps):
        dims[s] = max(dims.get(s, 0), c + 1)
    data = {s: np.full((len(t_grid), N, d), np.nan) for s, d in dims.items()}
    for t, n, s, c, v in zip(times, nodes, sigs, comps, vals):
        data[s][k_of[t], n, c] = v
    data = {s: data[s] for s in SIGNALS if s in data} | {s: a for s, a in data.items() if s not in SIGNALS}
    return Trace(t_grid, data, t_end=float(t_grid[-1]))


def traces_equal(a: Trace, b: Trace) -> bool:
    """Bitwise equality of grids and signals (NaNs compare equal)."""
    if a.t.shape != b.t.shape or not np.array_equal(a.t, b.t):
        return False
    if set(a.data) != set(b.data):
        return False
    return all(np.array_equal(a.data[s], b.data[s], equal_nan=True) for s in a.data)


__all__ = ["HEADER", "write_csv", "read_csv", "traces_equal"]
