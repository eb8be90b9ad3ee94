import numpy as np
import pytest
import yaml

from adhesim.config import (
    ConfigError,
    RunConfig,
    build_scalar_profile,
    build_source,
    build_time_profile,
)
from adhesim.proximal import BoxConstraint, PowerLawConstraint


def minimal_config(**overrides):
    cfg = {
        "geometry": {"nx": 4, "ny": 4},
        "regularization": {"eps": 1e-3, "mu": 1e-2},
        "schedule": {"t_end": 0.2, "dt0": 1e-2},
    }
    cfg.update(overrides)
    return cfg


def test_scalar_profile_whitelist():
    pts = np.array([[0.0, 0.0], [1.0, 2.0]])
    assert np.allclose(build_scalar_profile(2.5, "p")(pts), [2.5, 2.5])
    poly = build_scalar_profile({"poly": {"c": 1.0, "x": 2.0, "yy": 0.5}}, "p")
    assert np.allclose(poly(pts), [1.0, 1.0 + 2.0 + 0.5 * 4.0])
    sin = build_scalar_profile({"sin": {"amp": 2.0, "kx": np.pi / 2}}, "p")
    assert sin(pts)[1] == pytest.approx(2.0)
    total = build_scalar_profile({"sum": [1.0, {"sin": {"amp": 1.0, "kx": np.pi / 2}}]}, "p")
    assert total(pts)[1] == pytest.approx(2.0)
    with pytest.raises(ConfigError):
        build_scalar_profile({"exp": {"rate": 1.0}}, "p")  # spatial exp not allowed
    with pytest.raises(ConfigError):
        build_scalar_profile({"poly": {"zz": 1.0}}, "p")


def test_time_profile_whitelist():
    assert build_time_profile(None, "t")(3.0) == 1.0
    assert build_time_profile({"const": 0.5}, "t")(9.9) == 0.5
    cut = build_time_profile({"cutoff": {"t0": 1.0, "value": 2.0}}, "t")
    assert cut(0.5) == 2.0 and cut(1.5) == 0.0
    dec = build_time_profile({"exp": {"amp": 3.0, "rate": 2.0}}, "t")
    assert dec(1.0) == pytest.approx(3.0 * np.exp(-2.0))
    osc = build_time_profile({"sin": {"amp": 1.0, "freq": 2.0, "offset": 0.3}}, "t")
    assert osc(0.0) == pytest.approx(0.3)
    with pytest.raises(ConfigError):
        build_time_profile({"ramp": 1.0}, "t")


def test_vector_source():
    f = build_source({"y": -0.1, "time": {"cutoff": {"t0": 1.0}}}, "s", vector=True)
    pts = np.zeros((3, 2))
    assert np.allclose(f(pts, 0.5)[:, 1], -0.1)
    assert np.allclose(f(pts, 2.0), 0.0)
    assert build_source(None, "s") is None


@pytest.mark.parametrize(
    "patch, path_fragment",
    [
        ({"regularization": {"eps": 1e-3, "mu": -1.0}}, "regularization.mu"),
        ({"regularization": {"eps": -1e-3, "mu": 1e-2}}, "regularization.eps"),
        ({"geometry": {"nx": 1, "ny": 4}}, "geometry.nx"),
        ({"geometry": {"nx": 4, "ny": 4, "extents": [1.0]}}, "geometry.extents"),
        ({"material": {"constraint": {"kind": "box", "lo": 2.0, "hi": 1.0}}}, "material.constraint"),
        ({"material": {"exchange": {"base": 0.2, "amp": 0.5}}}, "material.exchange.amp"),
        ({"material": {"constraint": {"kind": "power", "q": 1.5}}}, "material.constraint.q"),
        ({"schedule": {"t_end": 0.2}}, "schedule.dt0"),
        ({"sources": {"h": {"profile": {"boom": 1}}}}, "sources.h.profile"),
    ],
)
def test_validation_reports_field_path(patch, path_fragment):
    cfg = minimal_config(**patch)
    with pytest.raises(ConfigError) as err:
        RunConfig.from_dict(cfg)
    assert path_fragment in str(err.value)


def test_initial_positivity_enforced():
    cfg = minimal_config(initial={"theta": -0.5})
    with pytest.raises(ConfigError) as err:
        RunConfig.from_dict(cfg).build()
    assert "initial.theta" in str(err.value)


def test_normalized_round_trip():
    cfg = RunConfig.from_dict(minimal_config())
    text = cfg.emit()
    cfg2 = RunConfig.from_dict(yaml.safe_load(text))
    assert cfg.normalized() == cfg2.normalized()


def test_build_produces_consistent_problem():
    cfg = RunConfig.from_dict(
        minimal_config(
            initial={"theta": 1.2, "theta_s": 0.9, "chi": 0.4, "u": {"y": {"poly": {"y": -0.01}}}},
            sources={"h": {"profile": 0.1, "time": {"cutoff": {"t0": 1.0}}}},
        )
    )
    spaces, mat, forms, rp, src, state, schedule = cfg.build()
    assert state.theta.shape == (spaces.n_scalar,)
    assert state.chi.shape == (spaces.n_surface,)
    assert np.all(state.u[~spaces.free_mask] == 0.0)
    assert isinstance(mat.constraint, BoxConstraint)
    assert schedule.t_end == 0.2
    h = src.h(np.zeros((2, 2)), 0.5)
    assert np.allclose(h, 0.1)
    assert np.allclose(src.h(np.zeros((2, 2)), 2.0), 0.0)


def test_power_law_constraint_built():
    cfg = RunConfig.from_dict(
        minimal_config(material={"constraint": {"kind": "power", "c": 2.0, "q": 3.0}})
    )
    _, mat, *_ = cfg.build()
    assert isinstance(mat.constraint, PowerLawConstraint)
    assert mat.constraint.q == 3.0


def test_shipped_configs_are_valid():
    for name in ("demo", "longtime", "corollary", "sweep"):
        cfg = RunConfig.load(f"configs/{name}.yaml")
        cfg.normalized()
