"""Plain-text snapshot and CSV/JSON artifact writers.

All files are written atomically (temporary file in the target directory,
then rename), so interrupted runs never leave truncated artifacts.  Floats
are serialized with repr for bit-stable round trips.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np


def atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x):
    return repr(float(x))


def snapshot_text(state, t, dt, rp, spaces) -> str:
    """Header lines, then one record per bulk node and per contact node."""
    lines = [
        f"# time {'inf' if t == float('inf') else _fmt(t)}",
        f"# dt {_fmt(dt)}",
        f"# mu {_fmt(rp.mu)}",
        f"# eps {_fmt(rp.eps)}",
        f"# bulk {spaces.n_scalar}",
    ]
    xy = spaces.mesh.vertices
    for i in range(spaces.n_scalar):
        lines.append(
            f"{i} {_fmt(xy[i, 0])} {_fmt(xy[i, 1])} {_fmt(state.theta[i])} "
            f"{_fmt(state.u[2 * i])} {_fmt(state.u[2 * i + 1])}"
        )
    lines.append(f"# surface {spaces.n_surface}")
    s = spaces.surface.arclength
    xi = state.xi if state.xi is not None else np.zeros(spaces.n_surface)
    zeta = state.zeta if state.zeta is not None else np.zeros(spaces.n_surface)
    eta = state.eta_density if state.eta_density is not None else np.zeros(spaces.n_surface)
    for i in range(spaces.n_surface):
        lines.append(
            f"{i} {_fmt(s[i])} {_fmt(state.theta_s[i])} {_fmt(state.chi[i])} "
            f"{_fmt(xi[i])} {_fmt(zeta[i])} {_fmt(eta[i])}"
        )
    return "\n".join(lines) + "\n"


def write_snapshot(path, state, t, dt, rp, spaces):
    atomic_write(path, snapshot_text(state, t, dt, rp, spaces))


def read_snapshot(path) -> dict:
    header = {}
    bulk, surface = [], []
    section = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                key = parts[0]
                if key in ("bulk", "surface"):
                    section = key
                else:
                    header[key] = float("inf") if parts[1] == "inf" else float(parts[1])
                continue
            vals = [float(v) for v in line.split()]
            (bulk if section == "bulk" else surface).append(vals)
    out = dict(header)
    bulk = np.array(bulk)
    surface = np.array(surface)
    out["theta"] = bulk[:, 3]
    out["u"] = np.column_stack([bulk[:, 4], bulk[:, 5]]).ravel()
    out["xy"] = bulk[:, 1:3]
    out["arclength"] = surface[:, 1]
    out["theta_s"] = surface[:, 2]
    out["chi"] = surface[:, 3]
    out["xi"] = surface[:, 4]
    out["zeta"] = surface[:, 5]
    out["eta_density"] = surface[:, 6]
    return out


def write_ledger_csv(path, ledger):
    import io

    buf = io.StringIO()
    ledger.to_csv(buf)
    atomic_write(path, buf.getvalue())


def write_json(path, payload):
    atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


class SnapshotSink:
    """Run sink writing numbered snapshot files into a directory."""

    def __init__(self, directory, rp, spaces):
        self.directory = directory
        self.rp = rp
        self.spaces = spaces
        self.count = 0

    def on_snapshot(self, t, dt, state):
        path = os.path.join(self.directory, f"snapshot_{self.count:05d}.txt")
        write_snapshot(path, state, t, dt, self.rp, self.spaces)
        self.count += 1
