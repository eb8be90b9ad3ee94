"""Runtime monitors: the energy ledger, the equilibrium detector, comparisons.

The ledger records, per accepted step, the free-energy breakdown, the
dissipation rates, the decay indicators and the constant-test-function
defects.  Dissipation is recomputed here through matrix quadratic forms, a
code path disjoint from the element-loop accumulation in
:func:`adhesim.assembly.dissipation_rate`; the two must agree to roundoff.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assembly import SEG_QBASIS, State, free_energy

LEDGER_COLUMNS = [
    "t",
    "dt",
    "E_mech",
    "E_adh",
    "E_imp",
    "E_th",
    "E_visc",
    "E_th_linear",
    "L_total",
    "D_grad_theta",
    "D_visc",
    "D_grad_theta_s",
    "D_chi_rate",
    "D_exchange",
    "D_total",
    "min_theta",
    "min_theta_s",
    "u_rate_W",
    "chi_rate_L2",
    "grad_theta_L2",
    "grad_theta_s_L2",
    "temp_jump_L2",
    "scalar_defect_bulk",
    "scalar_defect_surface",
    "newton_iters_total",
]

INDICATOR_NAMES = ("u_rate_W", "chi_rate_L2", "grad_theta_L2", "grad_theta_s_L2", "temp_jump_L2")


class InsufficientHistory(RuntimeError):
    pass


@dataclass
class OmegaLimitReport:
    window: float
    equilibrium: bool
    indicator_sups: dict
    terminal_time: float
    mean_temperature_gap: float
    stationary_residual: Optional[float] = None
    distances: Optional[dict] = None


class EnergyLedger:
    """Append-only per-step record of energies, rates and monitor quantities."""

    def __init__(self, forms, mat, rp, data_norm=None):
        self.forms = forms
        self.mat = mat
        self.rp = rp
        self.data_norm = data_norm  # aggregate size of data and initial state
        self.rows = []

    # ------------------------------------------------------------------- core
    def append(self, t, dt, st: State, st_prev: State, report=None):
        if self.rows and not (t > self.rows[-1]["t"]):
            raise ValueError("ledger timestamps must be strictly increasing")
        forms, mat = self.forms, self.mat
        row = {"t": float(t), "dt": float(dt)}
        row.update(free_energy(st, forms, mat, self.rp))

        # independent dissipation recomputation through quadratic forms
        u_t = (st.u - st_prev.u) / dt
        chi_t = (st.chi - st_prev.chi) / dt
        row["D_grad_theta"] = float(st.theta @ (forms.K @ st.theta))
        row["D_visc"] = float(u_t @ (forms.B_full @ u_t))
        row["D_grad_theta_s"] = float(st.theta_s @ (forms.Ks @ st.theta_s))
        row["D_chi_rate"] = float(chi_t @ (forms.Ms @ chi_t))
        diff_q = (
            forms.spaces.trace_scalar(st.theta)[forms.seg_local] @ SEG_QBASIS.T
            - forms.surf_at_quad(st.theta_s)
        )
        k_q = mat.exchange(forms.surf_at_quad(st.chi))
        row["D_exchange"] = float(np.sum(forms.seg_qw * k_q * diff_q**2))
        row["D_total"] = (
            row["D_grad_theta"]
            + row["D_visc"]
            + row["D_grad_theta_s"]
            + row["D_chi_rate"]
            + row["D_exchange"]
        )

        row["min_theta"] = float(np.min(st.theta))
        row["min_theta_s"] = float(np.min(st.theta_s))
        row["u_rate_W"] = forms.norm_W(u_t)
        row["chi_rate_L2"] = float(np.sqrt(max(chi_t @ (forms.Ms @ chi_t), 0.0)))
        row["grad_theta_L2"] = float(np.sqrt(max(row["D_grad_theta"], 0.0)))
        row["grad_theta_s_L2"] = float(np.sqrt(max(row["D_grad_theta_s"], 0.0)))
        row["temp_jump_L2"] = float(np.sqrt(np.sum(forms.seg_qw * diff_q**2)))
        if report is not None:
            row["scalar_defect_bulk"] = report.scalar_defect_bulk
            row["scalar_defect_surface"] = report.scalar_defect_surface
            row["newton_iters_total"] = int(sum(report.newton_iters.values()))
        else:
            row["scalar_defect_bulk"] = 0.0
            row["scalar_defect_surface"] = 0.0
            row["newton_iters_total"] = 0
        self.rows.append(row)
        return row

    # -------------------------------------------------------------- accessors
    def column(self, name):
        return np.array([r[name] for r in self.rows])

    def spans(self, window):
        return len(self.rows) >= 2 and self.rows[-1]["t"] - self.rows[0]["t"] >= window

    def energy_balance(self):
        """(L drop, accumulated dt*D) over the recorded interval."""
        drop = self.rows[0]["L_total"] - self.rows[-1]["L_total"]
        acc = sum(r["dt"] * r["D_total"] for r in self.rows[1:])
        return drop, acc

    def max_relative_uptick(self):
        """Largest per-step increase of the total, relative to its scale."""
        L = self.column("L_total")
        scale = max(np.max(np.abs(L)), 1e-300)
        return float(np.max(np.diff(L)) / scale) if len(L) > 1 else 0.0

    def to_csv(self, fh):
        writer = csv.DictWriter(fh, fieldnames=LEDGER_COLUMNS)
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k] for k in LEDGER_COLUMNS})


def ledger_append(ledger: EnergyLedger, st, st_prev, dt, forms=None, mat=None, report=None):
    """Append one step record; time continues from the last row."""
    t = ledger.rows[-1]["t"] + dt if ledger.rows else 0.0
    return ledger.append(t, dt, st, st_prev, report=report)


def compute_data_norm(forms, mat, rp, src, state0, t_end, samples=128) -> float:
    """Aggregate size of the data and the initial state, sampled in time.

    Combines the initial-field norms (with the regularized potentials standing
    in for the exact convex ones) with sampled sup/accumulated norms of the
    loads; recorded once per run as a ledger attribute.
    """
    from . import proximal as prox

    p = prox.YosidaParam(rp.mu)
    ones_b = np.ones(forms.spaces.n_scalar)
    val = float(ones_b @ (forms.M @ np.abs(state0.theta)))
    ones_s = np.ones(forms.spaces.n_surface)
    val += float(ones_s @ (forms.Ms @ np.abs(state0.theta_s)))
    val += forms.norm_W(state0.u)
    un_q = forms.contact_normal_at_quad(state0.u)
    val += forms.surf_integral(prox.impen_envelope(p, un_q))
    val += float(
        np.sqrt(
            max(state0.chi @ (forms.Ms @ state0.chi), 0.0)
            + max(state0.chi @ (forms.Ks @ state0.chi), 0.0)
        )
    )
    chi_q = forms.surf_at_quad(state0.chi)
    val += forms.surf_integral(np.asarray(mat.constraint.envelope(rp.mu, chi_q)))

    ts = np.linspace(0.0, t_end, samples)
    loads = [forms.spaces.restrict(src.load_dual(t, forms)) for t in ts]
    hs = [src.h_dual(t, forms) for t in ts]
    sup_F = max(forms.dual_norm_W(f) for f in loads)
    sup_h = max(forms.dual_norm_V(h) for h in hs)
    dt = ts[1] - ts[0] if samples > 1 else 1.0
    acc_Ft = sum(
        forms.dual_norm_W(loads[i + 1] - loads[i]) for i in range(len(loads) - 1)
    )
    acc_ht = sum(forms.dual_norm_V(hs[i + 1] - hs[i]) for i in range(len(hs) - 1))
    # L1-in-time of the entropy source in the flat norm
    minv = forms.factorized("riesz_V", forms.riesz_V)
    acc_h = sum(dt * np.sqrt(max(h @ minv.solve(h), 0.0)) for h in hs)
    return val + sup_F + acc_Ft + sup_h + acc_h + acc_ht


def mean_temperature_gap(st: State, forms) -> float:
    """|mean of theta over the body - mean of theta_s over the contact line|."""
    ones_b = np.ones(forms.spaces.n_scalar)
    ones_s = np.ones(forms.spaces.n_surface)
    vol = float(ones_b @ (forms.M @ ones_b))
    length = float(ones_s @ (forms.Ms @ ones_s))
    mb = float(ones_b @ (forms.M @ st.theta)) / vol
    ms = float(ones_s @ (forms.Ms @ st.theta_s)) / length
    return abs(mb - ms)


def detect_equilibrium(ledger: EnergyLedger, window, tol, terminal_state=None) -> OmegaLimitReport:
    """Windowed smallness test of the decay indicators."""
    if not ledger.spans(window):
        raise InsufficientHistory(
            f"ledger spans {ledger.rows[-1]['t'] - ledger.rows[0]['t'] if ledger.rows else 0.0:.3g},"
            f" need {window:.3g}"
        )
    t_end = ledger.rows[-1]["t"]
    t = ledger.column("t")
    in_window = t >= t_end - window
    sups = {}
    for name in INDICATOR_NAMES:
        sups[name] = float(np.max(ledger.column(name)[in_window]))
    flag = all(v < tol for v in sups.values())
    gap = float("nan")
    if terminal_state is not None:
        gap = mean_temperature_gap(terminal_state, ledger.forms)
    return OmegaLimitReport(
        window=float(window),
        equilibrium=bool(flag),
        indicator_sups=sups,
        terminal_time=float(t_end),
        mean_temperature_gap=gap,
    )


def indicator_slopes(ledger: EnergyLedger, fraction=0.2) -> dict:
    """Least-squares slope of each indicator over the trailing fraction of the run."""
    t = ledger.column("t")
    cut = t[-1] - fraction * (t[-1] - t[0])
    sel = t >= cut
    out = {}
    for name in INDICATOR_NAMES:
        y = ledger.column(name)[sel]
        x = t[sel]
        if len(x) < 2:
            out[name] = 0.0
            continue
        out[name] = float(np.polyfit(x, y, 1)[0])
    return out


def compare_to_stationary(terminal: State, stat, forms) -> dict:
    """Per-field discrete L2 and max distances between a trajectory endpoint
    and a stationary solve; the temperature comparison is against the constant."""
    if terminal.theta.shape[0] != forms.spaces.n_scalar or terminal.chi.shape[0] != forms.spaces.n_surface:
        raise ValueError("terminal state does not match the discretization")
    if stat.u_inf.shape != terminal.u.shape or stat.chi_inf.shape != terminal.chi.shape:
        raise ValueError("stationary state does not match the discretization")
    d_theta = terminal.theta - stat.theta_bar
    d_theta_s = terminal.theta_s - stat.theta_bar
    d_u = terminal.u - stat.u_inf
    d_chi = terminal.chi - stat.chi_inf
    M, Ms = forms.M, forms.Ms
    return {
        "theta_L2": float(np.sqrt(max(d_theta @ (M @ d_theta), 0.0))),
        "theta_max": float(np.max(np.abs(d_theta))),
        "theta_s_L2": float(np.sqrt(max(d_theta_s @ (Ms @ d_theta_s), 0.0))),
        "theta_s_max": float(np.max(np.abs(d_theta_s))),
        "u_W": forms.norm_W(d_u),
        "u_max": float(np.max(np.abs(d_u))),
        "chi_L2": float(np.sqrt(max(d_chi @ (Ms @ d_chi), 0.0))),
        "chi_max": float(np.max(np.abs(d_chi))),
    }


def state_distance(a: State, b: State, forms) -> float:
    """Single-number discrete L2 distance over all four fields (sweep tables)."""
    d_theta = a.theta - b.theta
    d_ts = a.theta_s - b.theta_s
    d_u = a.u - b.u
    d_chi = a.chi - b.chi
    M, Ms = forms.M, forms.Ms
    return float(
        np.sqrt(
            max(d_theta @ (M @ d_theta), 0.0)
            + max(d_ts @ (Ms @ d_ts), 0.0)
            + forms.norm_W(d_u) ** 2
            + max(d_chi @ (Ms @ d_chi), 0.0)
        )
    )
