import io

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
from adhesim.diagnostics import (
    LEDGER_COLUMNS,
    EnergyLedger,
    InsufficientHistory,
    compare_to_stationary,
    detect_equilibrium,
    indicator_slopes,
    ledger_append,
    mean_temperature_gap,
    state_distance,
)
from adhesim.mesh import build_rect_mesh, build_spaces, extract_surface
from adhesim.stationary import stationary_from_state
from adhesim.stepper import Schedule, run


def setup(nx=4, ny=4):
    m = build_rect_mesh(nx, ny)
    s = extract_surface(m)
    spc = build_spaces(m, s)
    mat = default_materials()
    forms = assemble_constant_forms(spc, mat)
    return spc, mat, forms, RegularizationParams(eps=1e-3, mu=1e-2)


def random_state(spc, rng):
    st = zero_state(spc)
    st.theta = rng.uniform(0.2, 2.0, spc.n_scalar)
    st.theta_s = rng.uniform(0.2, 2.0, spc.n_surface)
    st.u = spc.apply_constraints(rng.normal(0.0, 0.1, 2 * spc.n_scalar))
    st.chi = rng.uniform(-0.5, 1.5, spc.n_surface)
    return st


def test_ledger_dissipation_matches_assembly_independently():
    spc, mat, forms, rp = setup()
    rng = np.random.default_rng(1)
    led = EnergyLedger(forms, mat, rp)
    for k in range(5):
        st, stp = random_state(spc, rng), random_state(spc, rng)
        dt = 0.01 * (k + 1)
        row = led.append(float(k + 1), dt, st, stp)
        ref = dissipation_rate(st, stp, dt, forms, mat)
        for key, val in ref.items():
            assert row[key] == pytest.approx(val, rel=1e-12, abs=1e-12)


def test_ledger_frozen_state_rows_identical_except_time():
    spc, mat, forms, rp = setup()
    rng = np.random.default_rng(2)
    st = random_state(spc, rng)
    led = EnergyLedger(forms, mat, rp)
    r1 = led.append(1.0, 0.1, st, st)
    r2 = led.append(2.0, 0.1, st, st)
    for key in LEDGER_COLUMNS:
        if key == "t":
            assert r1[key] != r2[key]
        else:
            assert r1[key] == r2[key]


def test_ledger_timestamps_strictly_increasing():
    spc, mat, forms, rp = setup()
    st = zero_state(spc)
    led = EnergyLedger(forms, mat, rp)
    led.append(1.0, 0.1, st, st)
    with pytest.raises(ValueError):
        led.append(1.0, 0.1, st, st)


def test_ledger_append_helper_advances_time():
    spc, mat, forms, rp = setup()
    st = zero_state(spc)
    led = EnergyLedger(forms, mat, rp)
    ledger_append(led, st, st, 0.5)
    ledger_append(led, st, st, 0.25)
    assert led.column("t").tolist() == [0.0, 0.25]


def test_ledger_csv_roundtrip():
    spc, mat, forms, rp = setup()
    rng = np.random.default_rng(3)
    led = EnergyLedger(forms, mat, rp)
    led.append(0.5, 0.1, random_state(spc, rng), random_state(spc, rng))
    buf = io.StringIO()
    led.to_csv(buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0].split(",") == LEDGER_COLUMNS
    values = lines[1].split(",")
    assert float(values[0]) == 0.5


def test_detector_on_frozen_equilibrium():
    spc, mat, forms, rp = setup()
    st = zero_state(spc, chi_value=0.5, theta_value=1.0)
    led = EnergyLedger(forms, mat, rp)
    for k in range(20):
        led.append(0.1 * k if k else 1e-9, 0.1, st, st)
    rep = detect_equilibrium(led, window=1.0, tol=1e-6, terminal_state=st)
    assert rep.equilibrium
    assert all(v == 0.0 for v in rep.indicator_sups.values())
    assert rep.mean_temperature_gap == pytest.approx(0.0, abs=1e-14)


def test_detector_insufficient_history():
    spc, mat, forms, rp = setup()
    st = zero_state(spc)
    led = EnergyLedger(forms, mat, rp)
    led.append(0.0, 0.1, st, st)
    with pytest.raises(InsufficientHistory):
        detect_equilibrium(led, window=1.0, tol=1e-6)


def test_persistent_forcing_keeps_flag_false():
    spc, mat, forms, rp = setup(5, 5)
    init = zero_state(spc)
    init.theta = np.full(spc.n_scalar, 1.0)
    init.theta_s = np.full(spc.n_surface, 1.0)
    init.chi = np.full(spc.n_surface, 0.8)
    src = SourceData(h=lambda x, t: 0.5 * np.sin(2.0 * t) * np.cos(x[:, 0]))
    sched = Schedule(t_end=12.0, dt0=1e-2, dt_max=0.1, window=3.0, indicator_tol=1e-6)
    res = run(init, sched, forms, mat, src, rp)
    rep = detect_equilibrium(res.ledger, 3.0, 1e-6, terminal_state=res.state)
    assert not rep.equilibrium


def test_ledger_nonnegativity_and_adhesion_floor():
    # dissipation entries and the penetration energy are non-negative; the
    # adhesion energy dominates a quadratic with a material-dependent offset
    spc, mat, forms, rp = setup()
    rng = np.random.default_rng(8)
    led = EnergyLedger(forms, mat, rp)
    length = spc.surface.total_length
    for k in range(10):
        st, stp = random_state(spc, rng), random_state(spc, rng)
        row = led.append(float(k + 1), 0.02, st, stp)
        for key in ("D_grad_theta", "D_visc", "D_grad_theta_s", "D_chi_rate", "D_exchange"):
            assert row[key] >= 0.0
        assert row["E_imp"] >= 0.0
        chi_sq = float(st.chi @ (forms.Ms @ st.chi))
        assert row["E_adh"] >= 0.05 * chi_sq - 1.0 * length


def test_flag_true_implies_small_stationary_residual():
    from adhesim.stationary import residual_stationary

    spc, mat, forms, rp = setup(5, 5)
    init = zero_state(spc)
    init.theta = 1.0 + 0.2 * np.sin(2 * spc.mesh.vertices[:, 0])
    init.theta_s = np.full(spc.n_surface, 0.8)
    init.chi = np.full(spc.n_surface, 0.8)
    src = SourceData(h=lambda x, t: (0.3 + 0 * x[:, 0]) * (1.0 if t <= 0.5 else 0.0))
    tol = 1e-6
    sched = Schedule(t_end=60.0, dt0=1e-2, dt_max=0.25, window=5.0, indicator_tol=tol,
                     stop_at_equilibrium=True)
    res = run(init, sched, forms, mat, src, rp)
    assert res.equilibrium is not None and res.equilibrium.equilibrium
    stat = stationary_from_state(res.state, forms, mat, rp)
    f_inf = src.load_dual(res.ledger.rows[-1]["t"], forms)
    assert residual_stationary(stat, forms, mat, f_inf, rp) <= 10 * tol


def test_equilibrating_run_flag_and_slopes():
    spc, mat, forms, rp = setup(5, 5)
    init = zero_state(spc)
    init.theta = 1.0 + 0.2 * np.sin(2 * spc.mesh.vertices[:, 0])
    init.theta_s = np.full(spc.n_surface, 0.8)
    init.chi = np.full(spc.n_surface, 0.8)
    src = SourceData(h=lambda x, t: (0.3 + 0 * x[:, 0]) * (1.0 if t <= 0.5 else 0.0))
    sched = Schedule(t_end=50.0, dt0=1e-2, dt_max=0.25, window=5.0, indicator_tol=1e-6,
                     stop_at_equilibrium=True)
    res = run(init, sched, forms, mat, src, rp)
    assert res.equilibrium is not None and res.equilibrium.equilibrium
    slopes = indicator_slopes(res.ledger, fraction=0.2)
    for name, slope in slopes.items():
        assert slope <= 1e-10


def test_compare_to_stationary_distances():
    spc, mat, forms, rp = setup()
    st = zero_state(spc, chi_value=0.4, theta_value=1.0)
    stat = stationary_from_state(st, forms, mat, rp)
    d = compare_to_stationary(st, stat, forms)
    for key, val in d.items():
        assert val == pytest.approx(0.0, abs=1e-14)
    st2 = st.copy()
    st2.chi = st.chi.copy()
    st2.chi[2] += 0.125
    d2 = compare_to_stationary(st2, stat, forms)
    assert d2["chi_max"] == pytest.approx(0.125, abs=1e-15)
    with pytest.raises(ValueError):
        bad = stationary_from_state(st, forms, mat, rp)
        bad.u_inf = bad.u_inf[:-2]
        compare_to_stationary(st, bad, forms)


def test_mean_gap_and_state_distance():
    spc, mat, forms, rp = setup()
    a = zero_state(spc, theta_value=1.0)
    b = zero_state(spc, theta_value=1.0)
    assert mean_temperature_gap(a, forms) == pytest.approx(0.0, abs=1e-14)
    assert state_distance(a, b, forms) == 0.0
    b.theta = b.theta + 1.0
    assert state_distance(a, b, forms) == pytest.approx(1.0, rel=1e-12)  # unit square mass
