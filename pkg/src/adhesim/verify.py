"""Acceptance checks: every release criterion as an executable pass/fail item.

Each criterion function returns a :class:`CriterionResult`; suites group them
for the command line (`adhesim verify <suite>`).  The pytest acceptance module
drives the same functions, so the command line and the test suite cannot
drift apart.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import proximal as prox
from .assembly import (
    RegularizationParams,
    SourceData,
    assemble_constant_forms,
    bulk_entropy_residual,
    damage_residual,
    default_materials,
    dissipation_rate,
    free_energy,
    momentum_residual,
    surface_entropy_residual,
    zero_state,
)
from .config import RunConfig
from .diagnostics import state_distance
from .mesh import build_rect_mesh, build_spaces, extract_surface
from .oracle import DenseOracle, monolithic_step, multistart_stationary
from .stationary import residual_stationary, solve_stationary, stationary_from_state
from .stepper import mollify_initial, step


@dataclass
class CriterionResult:
    cid: int
    name: str
    passed: bool
    detail: str
    seconds: float


SUITES = {
    "proximal": (1,),
    "assembly": (3, 4),
    "stepper": (2, 5, 6, 7, 11),
    "longtime": (8, 10),
    "corollary": (9, 12),
}

_cache = {}


def _memo(key, builder):
    if key not in _cache:
        _cache[key] = builder()
    return _cache[key]


# ----------------------------------------------------------------- presets

def demo_energy_config(nx=16, eps=1e-3, mu=1e-2, t_end=10.0):
    """Zero-source dissipative demo used by the energy-law criterion."""
    return {
        "geometry": {"nx": nx, "ny": nx},
        "material": {
            "latent": {"l0": 0.5},
            "cohesion": {"w": 0.05, "s0": 0.2, "s1": 0.0},
            "exchange": {"base": 1.0, "amp": 0.5},
        },
        "regularization": {"eps": eps, "mu": mu},
        "sources": {},
        "initial": {
            "theta": {"sum": [{"const": 1.0}, {"sin": {"amp": 0.3, "kx": 3.0}}]},
            "theta_s": 0.7,
            "chi": 0.9,
        },
        "schedule": {"t_end": t_end, "dt0": 1e-3, "dt_max": 0.05},
        "diagnostics": {"stop_at_equilibrium": False},
    }


def longtime_config(nx=32, eps=1e-3, mu=1e-2, t_end=200.0):
    """Equilibrating configuration: entropy source cut off at t = 1."""
    return {
        "geometry": {"nx": nx, "ny": nx},
        "material": {
            "latent": {"l0": 0.3},
            "cohesion": {"w": 0.02, "s0": 0.3, "s1": 0.0},
            "exchange": {"base": 1.0, "amp": 0.5},
        },
        "regularization": {"eps": eps, "mu": mu},
        "sources": {
            "h": {"profile": {"sin": {"amp": 0.4, "kx": 2.0}}, "time": {"cutoff": {"t0": 1.0}}},
            "f": {"y": -0.02, "time": {"const": 1.0}},
        },
        "initial": {
            "theta": {"sum": [{"const": 1.0}, {"sin": {"amp": 0.2, "kx": 2.0, "ky": 1.0}}]},
            "theta_s": 0.8,
            "chi": 0.8,
        },
        "schedule": {"t_end": t_end, "dt0": 1e-2, "dt_max": 0.5},
        "diagnostics": {"indicator_tol": 1e-6, "window": 10.0, "stop_at_equilibrium": True},
    }


def corollary_config(mu, nx=8, t_end=30.0):
    """Complete-damage configuration: box [0,1], latent slope 1, cohesion slope 0.2."""
    return {
        "geometry": {"nx": nx, "ny": nx},
        "material": {
            "latent": {"l0": 1.0},
            "cohesion": {"w": 0.0, "s0": 0.0, "s1": 0.2},
            "exchange": {"base": 1.0, "amp": 0.5},
            "constraint": {"kind": "box", "lo": 0.0, "hi": 1.0},
        },
        "regularization": {"eps": 1e-3, "mu": mu},
        "sources": {"f": {"y": -0.02, "time": {"const": 1.0}}},
        "initial": {"theta": 1.0, "theta_s": 1.0, "chi": 0.8},
        "schedule": {"t_end": t_end, "dt0": 1e-2, "dt_max": 0.25},
        "diagnostics": {"indicator_tol": 1e-7, "window": 5.0, "stop_at_equilibrium": True},
    }


def sweep_config(nx=12, t_end=25.0):
    return {
        "geometry": {"nx": nx, "ny": nx},
        "material": {
            "latent": {"l0": 0.5},
            "cohesion": {"w": 0.05, "s0": 0.2, "s1": 0.0},
            "exchange": {"base": 1.0, "amp": 0.5},
        },
        "regularization": {"eps": 1e-3, "mu": 1e-2},
        "sources": {
            "h": {"profile": {"sin": {"amp": 0.3, "kx": 2.0}}, "time": {"cutoff": {"t0": 1.0}}},
            "f": {"y": -0.02, "time": {"const": 1.0}},
        },
        "initial": {
            "theta": {"sum": [{"const": 1.0}, {"sin": {"amp": 0.2, "kx": 2.0}}]},
            "theta_s": 0.8,
            "chi": 0.8,
        },
        "schedule": {"t_end": t_end, "dt0": 1e-2, "dt_max": 0.25},
        "diagnostics": {"indicator_tol": 1e-7, "window": 5.0, "stop_at_equilibrium": True},
    }


def _run_config(cfg_dict):
    cfg = RunConfig.from_dict(cfg_dict)
    spaces, mat, forms, rp, src, state, schedule = cfg.build()
    state.theta = mollify_initial(forms, state.theta, rp.eps)
    state.theta_s = mollify_initial(forms, state.theta_s, rp.eps, where="surface")
    from .stepper import run

    result = run(state, schedule, forms, mat, src, rp)
    return result, (spaces, mat, forms, rp, src, schedule)


# ---------------------------------------------------------------- criteria

def criterion_1_proximal() -> CriterionResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(12345)
    n = 100_000
    mu = 10.0 ** rng.uniform(-4, 1, n)
    x1 = rng.uniform(-50, 50, n)
    x2 = rng.uniform(-50, 50, n)
    tol = 1e-12
    slack = tol * (1.0 + np.maximum(np.abs(x1), np.abs(x2)))

    z1 = prox._log_resolvent(mu, x1)
    z2 = prox._log_resolvent(mu, x2)
    y1 = np.maximum(np.exp(z1), 1e-300)
    y2 = np.maximum(np.exp(z2), 1e-300)

    checks = {}
    checks["identity"] = np.max(np.abs(y1 + mu * z1 - x1) / np.maximum(1.0, np.abs(x1))) <= tol
    checks["positivity"] = bool(np.all(y1 > 0.0))
    checks["contraction"] = bool(np.all(np.abs(y1 - y2) <= np.abs(x1 - x2) + slack))
    checks["growth"] = bool(np.all(y1 <= np.abs(x1) + 2.0 + slack))
    checks["lipschitz"] = bool(np.all(np.abs(z1 - z2) <= np.abs(x1 - x2) / mu * (1 + tol) + slack))
    d1 = 1.0 / (y1 + mu)
    checks["deriv_lower"] = bool(np.all(d1 >= (1.0 - tol) / (np.abs(x1) + 2.0 + mu)))
    mask = (mu <= prox.MU_STAR) & (x1 > 0)
    checks["deriv_upper"] = bool(np.all(d1[mask] <= 2.0 / x1[mask] * (1 + tol)))

    pvals = np.where(x1 <= 0, 0.0, np.where(x1 < mu, x1**2 / (2 * mu), x1 - mu / 2))
    xp = np.maximum(x1, 0.0)
    checks["pos_part_bounds"] = bool(
        np.all(pvals >= 0.0) and np.all(pvals <= xp + slack) and np.all(np.abs(pvals - xp) <= mu / 2 + slack)
    )
    hvals = np.where(x1 <= 0, 0.0, np.where(x1 < mu, x1 / mu, 1.0))
    checks["heaviside_range"] = bool(np.all((hvals >= 0.0) & (hvals <= 1.0)))

    # vectorized closed form (valid per-sample mu)
    z0 = prox._log_resolvent(mu, np.zeros(n))
    imu1 = (y1 - np.exp(z0)) + 0.5 * mu * (z1 * z1 - z0 * z0)
    pos = x1 >= 0
    small = pos & (mu <= prox.MU_STAR)
    checks["imu_upper"] = bool(np.all(imu1[small] <= 2 * x1[small] + slack[small]))
    lower = x1 - (mu + 2) * np.log(np.abs(x1) + mu + 2) + (mu + 2) * np.log(mu + 2)
    checks["imu_lower"] = bool(np.all(imu1[pos] >= lower[pos] - slack[pos]))
    checks["imu_nonneg"] = bool(np.all(imu1 >= -slack))

    # quadrature route agrees with the closed form on a subsample
    sub = rng.choice(n, 40, replace=False)
    agree = all(
        abs(prox.i_mu(prox.YosidaParam(mu[i]), x1[i]) - imu1[i]) <= 1e-8 * (1 + abs(imu1[i]))
        for i in sub
    )
    checks["imu_quadrature"] = agree

    elapsed = time.perf_counter() - t0
    passed = all(checks.values()) and elapsed < 10.0
    failing = [k for k, v in checks.items() if not v]
    detail = f"{n} samples in {elapsed:.2f}s" + (f"; failing: {failing}" if failing else "")
    return CriterionResult(1, "proximal randomized identities", passed, detail, elapsed)


def criterion_2_mollifier() -> CriterionResult:
    t0 = time.perf_counter()
    m = build_rect_mesh(16, 16)
    spc = build_spaces(m, extract_surface(m))
    mat = default_materials()
    forms = assemble_constant_forms(spc, mat)
    rng = np.random.default_rng(7)
    ones = np.ones(spc.n_scalar)
    ok = True
    worst_mass = worst_norm = 0.0
    for eps in (1e-1, 1e-3):
        v = mollify_initial(forms, np.full(spc.n_scalar, 1.7), eps)
        ok &= bool(np.max(np.abs(v - 1.7)) < 1e-12)
    for _ in range(100):
        theta0 = rng.uniform(0.1, 3.0, spc.n_scalar)
        eps = 10.0 ** rng.uniform(-5, -1)
        v = mollify_initial(forms, theta0, eps)
        mass0 = float(ones @ (forms.M @ theta0))
        worst_mass = max(worst_mass, abs(float(ones @ (forms.M @ v)) - mass0) / abs(mass0))
        n_v = float(v @ (forms.M @ v))
        n_0 = float(theta0 @ (forms.M @ theta0))
        worst_norm = max(worst_norm, n_v / n_0)
    ok &= worst_mass <= 1e-12
    ok &= worst_norm <= 1.0 + 1e-12
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 5.0
    detail = f"mass defect {worst_mass:.2e}, norm ratio {worst_norm:.12f}, {elapsed:.2f}s"
    return CriterionResult(2, "initial-data mollifier", ok, detail, elapsed)


def _random_state(spc, rng, kink_safe=False):
    st = zero_state(spc)
    st.theta = rng.uniform(0.2, 2.0, spc.n_scalar)
    st.theta_s = rng.uniform(0.2, 2.0, spc.n_surface)
    st.u = spc.apply_constraints(rng.normal(0.0, 0.1, 2 * spc.n_scalar))
    st.chi = rng.uniform(-0.5, 1.5, spc.n_surface)
    if kink_safe:
        for kink in (0.0, 1.0, 0.05):
            near = np.abs(st.chi - kink) < 0.02
            st.chi[near] += 0.04
    return st


def criterion_3_assembly_oracle() -> CriterionResult:
    t0 = time.perf_counter()
    m = build_rect_mesh(4, 4)  # 32 triangles
    spc = build_spaces(m, extract_surface(m))
    mat = default_materials()
    forms = assemble_constant_forms(spc, mat)
    rp = RegularizationParams(eps=1e-3, mu=0.05)
    orc = DenseOracle(spc, mat, rp)
    src = SourceData(
        h=lambda x, t: 0.3 * np.sin(x[:, 0]) + 0.1 * t,
        f=lambda x, t: np.column_stack([0.02 * x[:, 1], -0.05 * np.ones(len(x))]),
        g=lambda x, t: np.column_stack([0.01 * np.ones(len(x)), 0.0 * x[:, 0]]),
    )
    rng = np.random.default_rng(99)
    dt = 0.01
    worst = 0.0
    for _ in range(20):
        st, stp = _random_state(spc, rng), _random_state(spc, rng)
        t = rng.uniform(0.0, 2.0)
        diffs = [
            np.max(np.abs(momentum_residual(st, stp, dt, forms, mat, src, t, rp) - orc.momentum(st, stp, dt, src, t))),
            np.max(np.abs(damage_residual(st, stp, dt, forms, mat, rp) - orc.damage(st, stp, dt))),
            np.max(np.abs(bulk_entropy_residual(st, stp, dt, forms, mat, src, t, rp) - orc.bulk_entropy(st, stp, dt, src, t))),
            np.max(np.abs(surface_entropy_residual(st, stp, dt, forms, mat, rp) - orc.surface_entropy(st, stp, dt))),
        ]
        fe, fo = free_energy(st, forms, mat, rp), orc.free_energy(st)
        diffs += [abs(fe[k] - fo[k]) / (1 + abs(fo[k])) for k in fe]
        dd, do = dissipation_rate(st, stp, dt, forms, mat), orc.dissipation(st, stp, dt)
        diffs += [abs(dd[k] - do[k]) / (1 + abs(do[k])) for k in dd]
        worst = max(worst, max(diffs))
    elapsed = time.perf_counter() - t0
    passed = worst < 1e-12
    return CriterionResult(
        3, "assembly vs dense oracle", passed, f"worst deviation {worst:.2e}", elapsed
    )


def criterion_4_gradient_check() -> CriterionResult:
    t0 = time.perf_counter()
    m = build_rect_mesh(4, 4)
    spc = build_spaces(m, extract_surface(m))
    mat = default_materials()
    forms = assemble_constant_forms(spc, mat)
    rp = RegularizationParams(eps=1e-3, mu=0.05)
    rng = np.random.default_rng(5)

    def functional(chi, st):
        p = rp.yosida
        chi_q = forms.surf_at_quad(chi)
        ts_q = forms.surf_at_quad(st.theta_s)
        u_q = forms.surf_vector_at_quad(st.u)
        usq = np.einsum("nqd,nqd->nq", u_q, u_q)
        val = 0.5 * chi @ (forms.Ks @ chi)
        val += forms.surf_integral(
            np.asarray(mat.constraint.envelope(rp.mu, chi_q))
            + mat.cohesion(chi_q)
            + mat.latent(chi_q) * ts_q
            + 0.5 * prox.pos_part_mu(p, chi_q) * usq
        )
        return val

    worst = 0.0
    for _ in range(20):
        st = _random_state(spc, rng, kink_safe=True)
        r = damage_residual(st, st.copy(), 0.02, forms, mat, rp)
        grad = np.zeros_like(r)
        for i in range(spc.n_surface):
            h = 1e-6 * max(1.0, abs(st.chi[i]))
            cp, cm = st.chi.copy(), st.chi.copy()
            cp[i] += h
            cm[i] -= h
            grad[i] = (functional(cp, st) - functional(cm, st)) / (2 * h)
        worst = max(worst, np.max(np.abs(r - grad)) / max(np.max(np.abs(grad)), 1e-30))
    elapsed = time.perf_counter() - t0
    return CriterionResult(
        4, "damage residual gradient check", worst < 1e-6, f"worst rel err {worst:.2e}", elapsed
    )


def criterion_5_manufactured_equilibrium() -> CriterionResult:
    t0 = time.perf_counter()
    m = build_rect_mesh(4, 4)
    spc = build_spaces(m, extract_surface(m))
    mat = default_materials(l0=0.0, w=0.0, s0=0.0)
    forms = assemble_constant_forms(spc, mat)
    rp = RegularizationParams(eps=1e-3, mu=1e-2)
    st0 = zero_state(spc, chi_value=0.0, theta_value=1.0)
    src = SourceData(f_dual_override=lambda t, f: f.D.T @ np.full(spc.n_scalar, 1.0))
    st = st0.copy()
    st.refresh_aux(forms, mat, rp)
    max_d = 0.0
    for k in range(100):
        st, _ = step(st, 0.05, forms, mat, src, 0.05 * (k + 1), rp)
    drift = max(
        np.max(np.abs(st.theta - 1.0)),
        np.max(np.abs(st.theta_s - 1.0)),
        np.max(np.abs(st.u)),
        np.max(np.abs(st.chi)),
    )
    diss = dissipation_rate(st, st0, 0.05, forms, mat)["D_total"]
    elapsed = time.perf_counter() - t0
    passed = drift < 1e-8 and diss < 1e-12
    return CriterionResult(
        5, "manufactured equilibrium", passed,
        f"drift {drift:.2e}, dissipation {diss:.2e}", elapsed,
    )


def criterion_6_energy_law() -> CriterionResult:
    t0 = time.perf_counter()
    result, _ = _memo("energy_run", lambda: _run_config(demo_energy_config()))
    led = result.ledger
    uptick = led.max_relative_uptick()
    drop, acc = led.energy_balance()
    gap = abs(acc - drop) / max(drop, 1e-300)
    elapsed = time.perf_counter() - t0
    passed = uptick <= 1e-8 and gap <= 0.05 and elapsed < 120.0
    detail = f"max rel uptick {uptick:.2e}, balance gap {gap:.2%}, {len(led.rows)} steps, {elapsed:.1f}s"
    return CriterionResult(6, "discrete energy law", passed, detail, elapsed)


def criterion_7_scalar_identities() -> CriterionResult:
    t0 = time.perf_counter()
    result, _ = _memo("energy_run", lambda: _run_config(demo_energy_config()))
    worst = max(
        max(rep.scalar_defect_bulk, rep.scalar_defect_surface) for rep in result.reports
    )
    elapsed = time.perf_counter() - t0
    return CriterionResult(
        7, "constant-test-function balances", worst <= 1e-10,
        f"worst defect {worst:.2e} over {len(result.reports)} steps", elapsed,
    )


def criterion_8_longtime() -> CriterionResult:
    t0 = time.perf_counter()
    result, ctx = _memo("longtime_run", lambda: _run_config(longtime_config()))
    spaces, mat, forms, rp, src, schedule = ctx
    eq = result.equilibrium
    flag = eq is not None and eq.equilibrium
    sups = eq.indicator_sups if eq is not None else {}
    from .diagnostics import mean_temperature_gap

    gap = mean_temperature_gap(result.state, forms)
    stat = stationary_from_state(result.state, forms, mat, rp)
    f_inf = src.load_dual(schedule.t_end, forms)
    stat_res = residual_stationary(stat, forms, mat, f_inf, rp)
    elapsed = time.perf_counter() - t0
    indicators_ok = flag and all(v < 1e-6 for v in sups.values())
    passed = indicators_ok and gap < 1e-6 and stat_res < 1e-5 and elapsed < 600.0
    detail = (
        f"flag={flag}, sup={max(sups.values()) if sups else float('nan'):.2e}, "
        f"gap={gap:.2e}, stationary residual={stat_res:.2e}, "
        f"t={result.ledger.rows[-1]['t']:.1f}, {elapsed:.1f}s"
    )
    return CriterionResult(8, "long-time equilibrium", passed, detail, elapsed)


def criterion_9_corollary() -> CriterionResult:
    t0 = time.perf_counter()
    sups = []
    ok = True
    details = []
    for mu in (1e-1, 1e-2, 1e-3):
        result, ctx = _memo(f"corollary_{mu}", lambda mu=mu: _run_config(corollary_config(mu)))
        spaces, mat, forms, rp, src, schedule = ctx
        st = result.state
        chi_q = forms.surf_at_quad(st.chi)
        u_q = forms.surf_vector_at_quad(st.u)
        usq = np.einsum("nqd,nqd->nq", u_q, u_q)
        forcing = np.abs(
            mat.cohesion_prime(chi_q)
            + mat.latent_prime(chi_q) * forms.surf_at_quad(st.theta_s)
            + 0.5 * prox.heaviside_mu(rp.yosida, chi_q) * usq
        )
        bound = 10.0 * mu * float(np.max(forcing)) + 1e-6
        sup = float(np.max(np.abs(st.chi - 0.0)))
        sups.append(sup)
        ok &= sup <= bound
        details.append(f"mu={mu:g}: |chi|={sup:.3e} bound={bound:.3e}")
    ok &= sups[0] > sups[1] > sups[2]
    elapsed = time.perf_counter() - t0
    return CriterionResult(
        9, "complete-damage limit", ok, "; ".join(details) + f"; {elapsed:.1f}s", elapsed
    )


def criterion_10_sweeps() -> CriterionResult:
    t0 = time.perf_counter()
    base = sweep_config()
    forms_ref = _memo("sweep_forms", lambda: RunConfig.from_dict(base).build()[2])

    def final_state(eps, mu):
        def build():
            cfg = dict(base)
            cfg["regularization"] = {"eps": eps, "mu": mu}
            result, _ = _run_config(cfg)
            return result.state

        return _memo(f"sweep_{eps}_{mu}", build)

    eps_list = (1e-2, 1e-3, 1e-4)
    mu_fixed = 1e-2
    finals = [final_state(e, mu_fixed) for e in eps_list]
    d_eps = [state_distance(finals[i], finals[i + 1], forms_ref) for i in range(2)]

    mu_list = (1e-1, 1e-2, 1e-3)
    eps_small = 1e-4
    finals_mu = [final_state(eps_small, m) for m in mu_list]
    d_mu = [state_distance(finals_mu[i], finals_mu[i + 1], forms_ref) for i in range(2)]

    elapsed = time.perf_counter() - t0
    ok = d_eps[0] > d_eps[1] > 0 and d_mu[0] > d_mu[1] > 0 and elapsed < 900.0
    detail = (
        f"eps chain {d_eps[0]:.3e} > {d_eps[1]:.3e}; "
        f"mu chain {d_mu[0]:.3e} > {d_mu[1]:.3e}; {elapsed:.1f}s"
    )
    return CriterionResult(10, "two-stage limit stability", ok, detail, elapsed)


def criterion_11_splitting_order() -> CriterionResult:
    t0 = time.perf_counter()
    m = build_rect_mesh(2, 2)
    spc = build_spaces(m, extract_surface(m))
    mat = default_materials()
    forms = assemble_constant_forms(spc, mat)
    rp = RegularizationParams(eps=1e-3, mu=5e-2)
    rng = np.random.default_rng(3)
    st0 = zero_state(spc)
    st0.theta = rng.uniform(0.8, 1.4, spc.n_scalar)
    st0.theta_s = rng.uniform(0.6, 1.0, spc.n_surface)
    st0.u = spc.apply_constraints(rng.normal(0, 0.05, 2 * spc.n_scalar))
    st0.chi = rng.uniform(0.3, 0.9, spc.n_surface)
    src = SourceData(
        h=lambda x, t: 0.2 + 0 * x[:, 0],
        f=lambda x, t: np.column_stack([0 * x[:, 0], -0.08 + 0 * x[:, 0]]),
    )
    dts = (5e-3, 2.5e-3, 1.25e-3)
    dist = []
    for dt in dts:
        stag, _ = step(st0, dt, forms, mat, src, dt, rp, newton_tol=1e-13)
        mono = monolithic_step(spc, forms, mat, src, rp, st0, dt, dt, tol=1e-12)
        dist.append(state_distance(stag, mono, forms))
    order = float(np.polyfit(np.log(dts), np.log(dist), 1)[0])
    elapsed = time.perf_counter() - t0
    return CriterionResult(
        11, "staggered splitting order", order >= 1.8,
        f"fitted order {order:.3f} on dt {dts}", elapsed,
    )


def criterion_12_stationary_oracle() -> CriterionResult:
    t0 = time.perf_counter()
    m = build_rect_mesh(2, 2)
    spc = build_spaces(m, extract_surface(m))
    mat = default_materials()
    forms = assemble_constant_forms(spc, mat)
    rp = RegularizationParams(eps=0.0, mu=0.05)
    rng = np.random.default_rng(0)
    F = np.zeros(2 * spc.n_scalar)
    F[spc.free_index] = rng.normal(0.0, 0.05, spc.n_vector_free)
    theta_bar = 0.8
    stat = solve_stationary(forms, mat, F, theta_bar, rp, tol=1e-12)
    sols = multistart_stationary(spc, forms, mat, F, theta_bar, rp, seed=1, n_starts=64)
    if len(sols) != 1:
        elapsed = time.perf_counter() - t0
        return CriterionResult(
            12, "stationary multi-start oracle", False,
            f"oracle found {len(sols)} distinct solutions", elapsed,
        )
    u_o, chi_o = sols[0]
    dev = max(np.max(np.abs(u_o - stat.u_inf)), np.max(np.abs(chi_o - stat.chi_inf)))
    elapsed = time.perf_counter() - t0
    return CriterionResult(
        12, "stationary multi-start oracle", dev < 1e-8, f"max deviation {dev:.2e}", elapsed
    )


CRITERIA = {
    1: criterion_1_proximal,
    2: criterion_2_mollifier,
    3: criterion_3_assembly_oracle,
    4: criterion_4_gradient_check,
    5: criterion_5_manufactured_equilibrium,
    6: criterion_6_energy_law,
    7: criterion_7_scalar_identities,
    8: criterion_8_longtime,
    9: criterion_9_corollary,
    10: criterion_10_sweeps,
    11: criterion_11_splitting_order,
    12: criterion_12_stationary_oracle,
}


def run_criterion(cid: int) -> CriterionResult:
    return CRITERIA[cid]()


def run_suite(name: str) -> int:
    results = [run_criterion(cid) for cid in SUITES[name]]
    width = max(len(r.name) for r in results)
    all_ok = True
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        all_ok &= r.passed
        print(f"[{mark}] criterion {r.cid:2d} {r.name:<{width}}  {r.detail}")
    return 0 if all_ok else 1
