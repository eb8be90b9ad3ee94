import numpy as np
import pytest

from adhesim.assembly import (
    RegularizationParams,
    SourceData,
    assemble_constant_forms,
    default_materials,
    dissipation_rate,
    zero_state,
)
from adhesim.diagnostics import state_distance
from adhesim.mesh import build_rect_mesh, build_spaces, extract_surface
from adhesim.oracle import monolithic_step
from adhesim import stepper
from adhesim.stepper import (
    NewtonDivergence,
    Schedule,
    StepTooSmall,
    mollify_initial,
    run,
    step,
)


def setup(nx=4, ny=4, mat=None, eps=1e-3, mu=1e-2):
    m = build_rect_mesh(nx, ny)
    s = extract_surface(m)
    spc = build_spaces(m, s)
    mat = default_materials() if mat is None else mat
    forms = assemble_constant_forms(spc, mat)
    return spc, mat, forms, RegularizationParams(eps=eps, mu=mu)


def equilibrium_setup(nx=4, ny=4, theta_star=1.0):
    mat = default_materials(l0=0.0, w=0.0, s0=0.0)
    spc, _, forms, rp = setup(nx, ny, mat=mat)
    st = zero_state(spc, chi_value=0.0, theta_value=theta_star)
    src = SourceData(
        f_dual_override=lambda t, f: f.D.T @ np.full(spc.n_scalar, theta_star)
    )
    return spc, mat, forms, rp, st, src


# ------------------------------------------------------------------- mollifier

def test_mollifier_preserves_constants():
    spc, mat, forms, rp = setup()
    for eps in (1e-2, 1e-4):
        for where, n in (("bulk", spc.n_scalar), ("surface", spc.n_surface)):
            v = mollify_initial(forms, np.full(n, 2.7), eps, where=where)
            assert np.max(np.abs(v - 2.7)) < 1e-12


def test_mollifier_conserves_mass_and_contracts():
    spc, mat, forms, rp = setup(6, 6)
    rng = np.random.default_rng(21)
    ones = np.ones(spc.n_scalar)
    M = forms.M
    for _ in range(100):
        theta0 = rng.uniform(0.1, 3.0, spc.n_scalar)
        eps = 10.0 ** rng.uniform(-5, -1)
        v = mollify_initial(forms, theta0, eps)
        mass0 = ones @ (M @ theta0)
        assert ones @ (M @ v) == pytest.approx(mass0, rel=1e-12)
        # discrete L2 non-expansiveness
        assert v @ (M @ v) <= theta0 @ (M @ theta0) * (1 + 1e-12)


def test_mollifier_viscosity_scaled_h1_bound():
    spc, mat, forms, rp = setup(8, 8)
    rng = np.random.default_rng(22)
    theta0 = rng.uniform(0.2, 2.0, spc.n_scalar)
    f = forms.M @ theta0
    dual = forms.dual_norm_V(f)
    for eps in (1e-1, 1e-2, 1e-3):
        v = mollify_initial(forms, theta0, eps)
        norm_v = np.sqrt(v @ (forms.M @ v) + v @ (forms.K @ v))
        assert np.sqrt(eps) * norm_v <= dual * (1 + 1e-10)


# ------------------------------------------------------------------- stepping

def test_manufactured_equilibrium_is_fixed_point():
    spc, mat, forms, rp, st0, src = equilibrium_setup()
    st = st0.copy()
    st.refresh_aux(forms, mat, rp)
    for k in range(100):
        st, rep = step(st, 0.05, forms, mat, src, 0.05 * (k + 1), rp)
    assert np.max(np.abs(st.theta - 1.0)) < 1e-8
    assert np.max(np.abs(st.theta_s - 1.0)) < 1e-8
    assert np.max(np.abs(st.u)) < 1e-8
    assert np.max(np.abs(st.chi)) < 1e-8
    d = dissipation_rate(st, st0, 0.05, forms, mat)
    assert d["D_total"] < 1e-12


def test_zero_state_zero_sources_stays_zero():
    mat = default_materials(l0=0.0, w=0.0, s0=0.0)
    spc, _, forms, rp = setup(mat=mat)
    st = zero_state(spc)
    st.refresh_aux(forms, mat, rp)
    new, rep = step(st, 0.02, forms, mat, SourceData(), 0.02, rp)
    for fld in (new.theta, new.theta_s, new.u, new.chi):
        assert np.max(np.abs(fld)) == 0.0


def test_staggered_matches_monolithic_to_second_order():
    spc, mat, forms, rp = setup(2, 2, mu=5e-2)
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
    order = np.polyfit(np.log(dts), np.log(dist), 1)[0]
    assert order >= 1.8
    assert all(d <= 40.0 * dt**2 for d, dt in zip(dist, dts))


def test_scalar_identities_at_accepted_steps():
    spc, mat, forms, rp = setup(6, 6)
    rng = np.random.default_rng(30)
    init = zero_state(spc)
    init.theta = 1.0 + 0.2 * np.sin(2 * spc.mesh.vertices[:, 0])
    init.theta_s = np.full(spc.n_surface, 0.8)
    init.chi = np.full(spc.n_surface, 0.9)
    src = SourceData(h=lambda x, t: 0.1 * np.cos(x[:, 0]))
    sched = Schedule(t_end=0.5, dt0=1e-3, dt_max=0.02)
    res = run(init, sched, forms, mat, src, rp)
    for rep in res.reports:
        assert rep.scalar_defect_bulk <= 1e-10
        assert rep.scalar_defect_surface <= 1e-10


def test_energy_law_zero_sources():
    spc, mat, forms, rp = setup(8, 8)
    init = zero_state(spc)
    xy = spc.mesh.vertices
    init.theta = 1.0 + 0.3 * np.sin(3 * xy[:, 0]) * np.cos(2 * xy[:, 1])
    init.theta_s = np.full(spc.n_surface, 0.7)
    init.chi = np.full(spc.n_surface, 0.9)
    init.theta = mollify_initial(forms, init.theta, rp.eps)
    init.theta_s = mollify_initial(forms, init.theta_s, rp.eps, where="surface")
    sched = Schedule(t_end=2.0, dt0=1e-3, dt_max=0.05)
    res = run(init, sched, forms, mat, SourceData(), rp)
    led = res.ledger
    assert led.max_relative_uptick() <= 1e-8
    drop, acc = led.energy_balance()
    assert drop > 0
    assert abs(acc - drop) <= 0.05 * drop


def test_run_on_equilibrium_keeps_zero_dissipation():
    spc, mat, forms, rp, st0, src = equilibrium_setup()
    sched = Schedule(t_end=0.5, dt0=0.05, dt_max=0.05)
    res = run(st0, sched, forms, mat, src, rp)
    D = res.ledger.column("D_total")
    assert np.all(D < 1e-12)


def test_decaying_sources_dissipation_dies_and_flag_sets():
    spc, mat, forms, rp = setup(6, 6)
    xy = spc.mesh.vertices
    init = zero_state(spc)
    init.theta = np.full(spc.n_scalar, 1.0)
    init.theta_s = np.full(spc.n_surface, 1.0)
    init.chi = np.full(spc.n_surface, 0.8)

    def h(x, t):
        return (0.4 * np.sin(2.0 * x[:, 0])) * (1.0 if t <= 0.5 else 0.0)

    src = SourceData(h=h, f=lambda x, t: np.column_stack([0 * x[:, 0], -0.02 + 0 * x[:, 0]]))
    sched = Schedule(
        t_end=60.0, dt0=1e-2, dt_max=0.25, stop_at_equilibrium=True,
        indicator_tol=1e-7, window=5.0,
    )
    res = run(init, sched, forms, mat, src, rp)
    assert res.equilibrium is not None and res.equilibrium.equilibrium
    led = res.ledger
    t = led.column("t")
    D = led.column("D_total")
    after = D[t > 1.0]
    # windowed sups decay once the sources are gone
    thirds = np.array_split(after, 3)
    sups = [np.max(part) for part in thirds]
    assert sups[1] <= sups[0] * 1.05 + 1e-14
    assert sups[2] <= sups[1] * 1.05 + 1e-14
    assert D[-1] < 1e-10


def test_adaptivity_doubles_and_clamps():
    spc, mat, forms, rp, st0, src = equilibrium_setup()
    sched = Schedule(t_end=1.0, dt0=1e-3, dt_max=0.02, double_after=2)
    res = run(st0, sched, forms, mat, src, rp)
    dts = res.ledger.column("dt")[1:]
    assert np.max(dts) <= 0.02 + 1e-15
    assert np.max(dts) == pytest.approx(0.02)
    assert dts[0] == pytest.approx(1e-3)


def test_step_too_small_raised(monkeypatch):
    spc, mat, forms, rp, st0, src = equilibrium_setup()

    def failing_step(*args, **kwargs):
        raise NewtonDivergence("chi", 1.0, 30)

    monkeypatch.setattr(stepper, "step", failing_step)
    sched = Schedule(t_end=1.0, dt0=1e-3, dt_min=1e-5, dt_max=0.01)
    with pytest.raises(StepTooSmall):
        run(st0, sched, forms, mat, src, rp)


def test_run_is_deterministic():
    spc, mat, forms, rp = setup(5, 5)
    init = zero_state(spc)
    init.theta = 1.0 + 0.1 * spc.mesh.vertices[:, 0]
    init.theta_s = np.full(spc.n_surface, 0.9)
    init.chi = np.full(spc.n_surface, 0.7)
    src = SourceData(h=lambda x, t: 0.05 + 0 * x[:, 0])
    sched = Schedule(t_end=0.4, dt0=1e-3, dt_max=0.02)
    res1 = run(init, sched, forms, mat, src, rp)
    res2 = run(init, sched, forms, mat, src, rp)
    assert np.array_equal(res1.state.theta, res2.state.theta)
    assert np.array_equal(res1.state.u, res2.state.u)
    assert np.array_equal(res1.ledger.column("L_total"), res2.ledger.column("L_total"))
