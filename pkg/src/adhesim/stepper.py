"""Time integration of the regularized evolution problem.

Each step is staggered: first the adhesion parameter (semismooth Newton with
the smooth couplings frozen at the previous iterate), then the displacement
(semismooth Newton through the contact kink), then the two temperatures as a
single coupled Newton solve.  Convergence is measured in the discrete dual
norms, so the constant-test-function balances inherit the Newton tolerance.

The driver halves the step on a failed solve and doubles it after a run of
successes, clamped to the configured window.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

from . import diagnostics
from .assembly import (
    RegularizationParams,
    State,
    bulk_entropy_residual,
    damage_jacobian,
    damage_residual,
    entropy_jacobian,
    momentum_jacobian,
    momentum_residual,
    surface_entropy_residual,
)


class NewtonDivergence(RuntimeError):
    def __init__(self, sub_solve, norm, iters):
        super().__init__(f"newton diverged in {sub_solve} solve: |r|={norm:.3e} after {iters} its")
        self.sub_solve = sub_solve
        self.norm = norm
        self.iters = iters


class StepTooSmall(RuntimeError):
    def __init__(self, t, dt, detail):
        super().__init__(f"time step underflow at t={t:.6g} (dt={dt:.3e}): {detail}")
        self.t = t
        self.dt = dt
        self.detail = detail


@dataclass
class StepReport:
    t: float
    dt: float
    newton_iters: dict
    residual_norms: dict
    scalar_defect_bulk: float
    scalar_defect_surface: float


@dataclass
class Schedule:
    t_end: float
    dt0: float
    dt_min: float = 1e-8
    dt_max: float = 0.1
    snapshot_every: int = 0
    double_after: int = 5
    newton_tol: float = 1e-11
    newton_maxit: int = 30
    equilibrium_check_every: int = 10
    stop_at_equilibrium: bool = False
    indicator_tol: float = 1e-6
    window: float = 0.0  # 0 means 50 * dt_max


@dataclass
class RunResult:
    state: State
    ledger: "diagnostics.EnergyLedger"
    reports: list
    equilibrium: Optional[object]
    wall_time_s: float
    status: str = "completed"


def mollify_initial(forms, values, eps, where="bulk"):
    """Viscosity-matched smoothing of initial temperatures.

    Solves (M + sqrt(eps) K) v = M v0 on the requested space.  Constants are
    reproduced exactly and the mean value is conserved because the stiffness
    matrix annihilates constants.
    """
    if eps < 0:
        raise ValueError("eps must be non-negative")
    if eps == 0.0:
        return np.array(values, dtype=float, copy=True)
    if where == "bulk":
        M, K = forms.M, forms.K
    elif where == "surface":
        M, K = forms.Ms, forms.Ks
    else:
        raise ValueError("where must be 'bulk' or 'surface'")
    A = (M + np.sqrt(eps) * K).tocsc()
    return spla.splu(A).solve(M @ np.asarray(values, dtype=float))


def _newton(residual, jacobian, x0, dual_norm, tol, maxit, name):
    """Damped Newton loop with a residual-decrease line search."""
    x = np.array(x0, dtype=float, copy=True)
    r = residual(x)
    norm = dual_norm(r)
    if norm <= tol:
        return x, 0, norm
    for it in range(1, maxit + 1):
        J = jacobian(x)
        try:
            delta = spla.splu(J.tocsc()).solve(-r)
        except RuntimeError as exc:  # singular factorization
            raise NewtonDivergence(name, norm, it) from exc
        step = 1.0
        for _ in range(12):
            x_try = x + step * delta
            r_try = residual(x_try)
            norm_try = dual_norm(r_try)
            if norm_try < norm or norm_try <= tol:
                break
            step *= 0.5
        else:
            raise NewtonDivergence(name, norm, it)
        x, r, norm = x_try, r_try, norm_try
        if norm <= tol:
            return x, it, norm
    raise NewtonDivergence(name, norm, maxit)


def step(st_prev: State, dt, forms, mat, src, t, rp: RegularizationParams,
         newton_tol=1e-11, newton_maxit=30):
    """One staggered step ending at time t; returns the new state and a report."""
    spaces = forms.spaces
    # residual scales blow up ~1/dt, relax the absolute tolerance accordingly
    tol = newton_tol * max(1.0, 1e-4 / dt)
    iters = {}
    norms = {}

    # --- adhesion parameter, with theta_s and u frozen at the previous step
    work = State(theta=st_prev.theta, theta_s=st_prev.theta_s, u=st_prev.u, chi=st_prev.chi)

    def chi_residual(x):
        work.chi = x
        return damage_residual(work, st_prev, dt, forms, mat, rp)

    def chi_jacobian(x):
        work.chi = x
        return damage_jacobian(work, dt, forms, mat, rp)

    chi_new, its, nrm = _newton(
        chi_residual, chi_jacobian, st_prev.chi, forms.dual_norm_S, tol, newton_maxit, "chi"
    )
    iters["chi"], norms["chi"] = its, nrm

    # --- displacement, with the new chi and the previous temperature
    work = State(theta=st_prev.theta, theta_s=st_prev.theta_s, u=st_prev.u, chi=chi_new)

    def u_residual(x_free):
        work.u = spaces.expand(x_free)
        return momentum_residual(work, st_prev, dt, forms, mat, src, t, rp)

    def u_jacobian(x_free):
        work.u = spaces.expand(x_free)
        return momentum_jacobian(work, dt, forms, mat, rp)

    u_free, its, nrm = _newton(
        u_residual, u_jacobian, spaces.restrict(st_prev.u), forms.dual_norm_W, tol,
        newton_maxit, "u",
    )
    iters["u"], norms["u"] = its, nrm
    u_new = spaces.expand(u_free)

    # --- both temperatures jointly, with the new chi and displacement
    work = State(theta=st_prev.theta, theta_s=st_prev.theta_s, u=u_new, chi=chi_new)
    n_bulk = spaces.n_scalar

    def th_residual(x):
        work.theta = x[:n_bulk]
        work.theta_s = x[n_bulk:]
        rb = bulk_entropy_residual(work, st_prev, dt, forms, mat, src, t, rp)
        rs = surface_entropy_residual(work, st_prev, dt, forms, mat, rp)
        return np.concatenate([rb, rs])

    def th_jacobian(x):
        work.theta = x[:n_bulk]
        work.theta_s = x[n_bulk:]
        return entropy_jacobian(work, dt, forms, mat, rp)

    def th_dual_norm(r):
        return float(np.hypot(forms.dual_norm_V(r[:n_bulk]), forms.dual_norm_S(r[n_bulk:])))

    x0 = np.concatenate([st_prev.theta, st_prev.theta_s])
    x_new, its, nrm = _newton(th_residual, th_jacobian, x0, th_dual_norm, tol, newton_maxit, "theta")
    iters["theta"], norms["theta"] = its, nrm

    new = State(theta=x_new[:n_bulk], theta_s=x_new[n_bulk:], u=u_new, chi=chi_new)
    new.refresh_aux(forms, mat, rp)

    r_bulk = bulk_entropy_residual(new, st_prev, dt, forms, mat, src, t, rp)
    r_surf = surface_entropy_residual(new, st_prev, dt, forms, mat, rp)
    report = StepReport(
        t=t,
        dt=dt,
        newton_iters=iters,
        residual_norms=norms,
        scalar_defect_bulk=float(abs(np.sum(r_bulk))),
        scalar_defect_surface=float(abs(np.sum(r_surf))),
    )
    return new, report


def run(initial: State, schedule: Schedule, forms, mat, src, rp, sinks=(), ledger=None) -> RunResult:
    """March the staggered scheme to t_end with adaptive step control."""
    t0 = time.perf_counter()
    st = initial.copy()
    st.refresh_aux(forms, mat, rp)
    if ledger is None:
        ledger = diagnostics.EnergyLedger(forms, mat, rp)
    ledger.append(0.0, schedule.dt0, st, st)
    reports = []
    for sink in sinks:
        if hasattr(sink, "on_snapshot"):
            sink.on_snapshot(0.0, schedule.dt0, st)

    window = schedule.window if schedule.window > 0 else 50 * schedule.dt_max
    t = 0.0
    dt = min(schedule.dt0, schedule.dt_max)
    successes = 0
    accepted = 0
    equilibrium = None
    status = "completed"

    while t < schedule.t_end - 1e-12 * max(1.0, schedule.t_end):
        dt_try = min(dt, schedule.t_end - t)
        try:
            new, report = step(
                st, dt_try, forms, mat, src, t + dt_try, rp,
                newton_tol=schedule.newton_tol, newton_maxit=schedule.newton_maxit,
            )
        except NewtonDivergence as exc:
            successes = 0
            dt = dt_try / 2.0
            if dt < schedule.dt_min:
                raise StepTooSmall(
                    t, dt,
                    f"{exc.sub_solve} solve stalled at |r|={exc.norm:.3e}; "
                    f"last accepted step {accepted}",
                ) from exc
            continue

        t += dt_try
        accepted += 1
        row = ledger.append(t, dt_try, new, st, report=report)
        if min(row["min_theta"], row["min_theta_s"]) <= 0.0:
            # the regularized problem does not enforce pointwise positivity
            log.warning(
                "temperature positivity violated at t=%.6g (min theta %.3e, min theta_s %.3e)",
                t, row["min_theta"], row["min_theta_s"],
            )
        st = new
        reports.append(report)
        for sink in sinks:
            if hasattr(sink, "on_step"):
                sink.on_step(report)
            if schedule.snapshot_every and accepted % schedule.snapshot_every == 0:
                if hasattr(sink, "on_snapshot"):
                    sink.on_snapshot(t, dt_try, st)

        successes += 1
        if successes >= schedule.double_after:
            dt = min(2.0 * dt, schedule.dt_max)
            successes = 0

        if (
            schedule.equilibrium_check_every
            and accepted % schedule.equilibrium_check_every == 0
            and t >= window
        ):
            try:
                equilibrium = diagnostics.detect_equilibrium(
                    ledger, window, schedule.indicator_tol
                )
            except diagnostics.InsufficientHistory:
                equilibrium = None
            if equilibrium is not None and equilibrium.equilibrium and schedule.stop_at_equilibrium:
                status = "equilibrium"
                break

    for sink in sinks:
        if hasattr(sink, "on_snapshot"):
            sink.on_snapshot(t, dt, st)
        if hasattr(sink, "on_finish"):
            sink.on_finish(st, ledger)

    if equilibrium is None and ledger.spans(window):
        equilibrium = diagnostics.detect_equilibrium(ledger, window, schedule.indicator_tol)

    return RunResult(
        state=st,
        ledger=ledger,
        reports=reports,
        equilibrium=equilibrium,
        wall_time_s=time.perf_counter() - t0,
        status=status,
    )
