"""Run configuration: YAML ingestion, validation, normalization, problem build.

Sources and initial conditions are specified through a closed expression
whitelist (constants, low-order polynomials, sinusoids, exponential decay,
sharp time cutoffs) evaluated at nodes and quadrature points; no general
expression language is parsed.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import proximal as prox
from .assembly import (
    RegularizationParams,
    SourceData,
    assemble_constant_forms,
    default_materials,
    zero_state,
)
from .mesh import build_rect_mesh, build_spaces, extract_surface
from .stepper import Schedule


class ConfigError(ValueError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


def _need(d, key, path, types=None):
    if key not in d:
        raise ConfigError(f"{path}.{key}", "missing required field")
    val = d[key]
    if types is not None and not isinstance(val, types):
        raise ConfigError(f"{path}.{key}", f"expected {types}, got {type(val).__name__}")
    return val


def _number(d, key, path, default=None, positive=False, nonneg=False):
    if key not in d:
        if default is None:
            raise ConfigError(f"{path}.{key}", "missing required field")
        return float(default)
    val = d[key]
    if not isinstance(val, (int, float)) or isinstance(val, bool):
        raise ConfigError(f"{path}.{key}", "expected a number")
    val = float(val)
    if positive and not val > 0:
        raise ConfigError(f"{path}.{key}", f"must be positive, got {val}")
    if nonneg and val < 0:
        raise ConfigError(f"{path}.{key}", f"must be non-negative, got {val}")
    return val


# ------------------------------------------------------------------ whitelist

def build_scalar_profile(spec, path):
    """Spatial profile from the whitelist; returns pts(n,2) -> (n,)."""
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        c = float(spec)
        return lambda pts: np.full(len(pts), c)
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ConfigError(path, "expected a number or a single-key profile mapping")
    kind, body = next(iter(spec.items()))
    if kind == "const":
        c = float(body)
        return lambda pts: np.full(len(pts), c)
    if kind == "poly":
        if not isinstance(body, dict):
            raise ConfigError(f"{path}.poly", "expected coefficient mapping")
        allowed = {"c", "x", "y", "xx", "xy", "yy"}
        bad = set(body) - allowed
        if bad:
            raise ConfigError(f"{path}.poly", f"unknown terms {sorted(bad)}")
        co = {k: float(body.get(k, 0.0)) for k in allowed}

        def poly(pts):
            x, y = pts[:, 0], pts[:, 1]
            return (
                co["c"]
                + co["x"] * x
                + co["y"] * y
                + co["xx"] * x * x
                + co["xy"] * x * y
                + co["yy"] * y * y
            )

        return poly
    if kind == "sin":
        if not isinstance(body, dict):
            raise ConfigError(f"{path}.sin", "expected parameter mapping")
        amp = float(body.get("amp", 1.0))
        kx = float(body.get("kx", 0.0))
        ky = float(body.get("ky", 0.0))
        phase = float(body.get("phase", 0.0))
        return lambda pts: amp * np.sin(kx * pts[:, 0] + ky * pts[:, 1] + phase)
    if kind == "sum":
        if not isinstance(body, list):
            raise ConfigError(f"{path}.sum", "expected a list of profiles")
        parts = [build_scalar_profile(s, f"{path}.sum[{i}]") for i, s in enumerate(body)]
        return lambda pts: sum(p(pts) for p in parts)
    raise ConfigError(path, f"unknown profile kind '{kind}'")


def build_time_profile(spec, path):
    """Time factor from the whitelist; returns t -> float."""
    if spec is None:
        return lambda t: 1.0
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        c = float(spec)
        return lambda t: c
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ConfigError(path, "expected a number or a single-key time mapping")
    kind, body = next(iter(spec.items()))
    if kind == "const":
        c = float(body)
        return lambda t: c
    if kind == "sin":
        amp = float(body.get("amp", 1.0))
        freq = float(body.get("freq", 1.0))
        phase = float(body.get("phase", 0.0))
        offset = float(body.get("offset", 0.0))
        return lambda t: offset + amp * np.sin(freq * t + phase)
    if kind == "exp":
        amp = float(body.get("amp", 1.0))
        rate = float(body.get("rate", 1.0))
        return lambda t: amp * np.exp(-rate * t)
    if kind == "cutoff":
        t0 = float(body.get("t0", 1.0))
        value = float(body.get("value", 1.0))
        return lambda t: value if t <= t0 else 0.0
    raise ConfigError(path, f"unknown time kind '{kind}'")


def build_source(spec, path, vector=False):
    """Pointwise source (pts, t) -> values; None spec means absent."""
    if spec is None:
        return None
    if not isinstance(spec, dict):
        raise ConfigError(path, "expected a source mapping")
    tfun = build_time_profile(spec.get("time"), f"{path}.time")
    if vector:
        px = build_scalar_profile(spec.get("x", 0.0), f"{path}.x")
        py = build_scalar_profile(spec.get("y", 0.0), f"{path}.y")

        def vec(pts, t):
            f = tfun(t)
            return np.column_stack([f * px(pts), f * py(pts)])

        return vec
    profile = build_scalar_profile(_need(spec, "profile", path), f"{path}.profile")
    return lambda pts, t: tfun(t) * profile(pts)


# ----------------------------------------------------------------- run config

@dataclass
class RunConfig:
    raw: dict = field(repr=False)

    @classmethod
    def from_dict(cls, data) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("<root>", "configuration must be a mapping")
        cfg = cls(raw=copy.deepcopy(data))
        cfg._validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            data = yaml.safe_load(fh)
        return cls.from_dict(data)

    # ------------------------------------------------------------ validation
    def _validate(self):
        d = self.raw
        geo = _need(d, "geometry", "<root>", dict)
        nx = int(_number(geo, "nx", "geometry", positive=True))
        ny = int(_number(geo, "ny", "geometry", positive=True))
        if nx < 2 or ny < 2:
            raise ConfigError("geometry.nx", "need nx, ny >= 2")
        extents = geo.get("extents", [1.0, 1.0])
        if not (isinstance(extents, list) and len(extents) == 2):
            raise ConfigError("geometry.extents", "expected [lx, ly]")
        if not all(isinstance(v, (int, float)) and v > 0 for v in extents):
            raise ConfigError("geometry.extents", "extents must be positive numbers")

        m = d.get("material", {})
        _number(m, "lame_lambda", "material", default=1.0, positive=True)
        _number(m, "lame_mu", "material", default=1.0, positive=True)
        ex = m.get("exchange", {})
        base = _number(ex, "base", "material.exchange", default=1.0, positive=True)
        amp = _number(ex, "amp", "material.exchange", default=0.5)
        if abs(amp) >= base:
            raise ConfigError("material.exchange.amp", "floor base - |amp| must stay positive")
        con = m.get("constraint", {"kind": "box", "lo": 0.0, "hi": 1.0})
        kind = con.get("kind", "box")
        if kind == "box":
            lo = _number(con, "lo", "material.constraint", default=0.0)
            hi = _number(con, "hi", "material.constraint", default=1.0)
            if not lo < hi:
                raise ConfigError("material.constraint.lo", f"need lo < hi, got [{lo}, {hi}]")
        elif kind == "power":
            _number(con, "c", "material.constraint", default=1.0, positive=True)
            q = _number(con, "q", "material.constraint", default=4.0)
            if q <= 2.0:
                raise ConfigError("material.constraint.q", "exponent must exceed 2")
        else:
            raise ConfigError("material.constraint.kind", f"unknown kind '{kind}'")

        reg = _need(d, "regularization", "<root>", dict)
        _number(reg, "eps", "regularization", positive=True)
        _number(reg, "mu", "regularization", positive=True)

        src = d.get("sources", {})
        for key, vector in (("h", False), ("f", True), ("g", True)):
            build_source(src.get(key), f"sources.{key}", vector=vector)

        init = d.get("initial", {})
        build_scalar_profile(init.get("theta", 1.0), "initial.theta")
        build_scalar_profile(init.get("theta_s", 1.0), "initial.theta_s")
        build_scalar_profile(init.get("chi", 0.5), "initial.chi")
        u0 = init.get("u")
        if u0 is not None:
            build_scalar_profile(u0.get("x", 0.0), "initial.u.x")
            build_scalar_profile(u0.get("y", 0.0), "initial.u.y")

        sch = _need(d, "schedule", "<root>", dict)
        t_end = _number(sch, "t_end", "schedule", positive=True)
        dt0 = _number(sch, "dt0", "schedule", positive=True)
        dt_min = _number(sch, "dt_min", "schedule", default=1e-8, positive=True)
        dt_max = _number(sch, "dt_max", "schedule", default=max(dt0, 0.05), positive=True)
        if dt_min > dt_max:
            raise ConfigError("schedule.dt_min", "dt_min exceeds dt_max")
        _number(sch, "snapshot_every", "schedule", default=0, nonneg=True)

        diag = d.get("diagnostics", {})
        _number(diag, "indicator_tol", "diagnostics", default=1e-6, positive=True)
        _number(diag, "window", "diagnostics", default=0.0, nonneg=True)

        out = d.get("output", {})
        if out and not isinstance(out.get("dir", ""), str):
            raise ConfigError("output.dir", "expected a string path")

    # --------------------------------------------------------- normalization
    def normalized(self) -> dict:
        """Canonical dict with defaults applied; reload-stable."""
        d = copy.deepcopy(self.raw)
        geo = d["geometry"]
        geo.setdefault("extents", [1.0, 1.0])
        geo["extents"] = [float(v) for v in geo["extents"]]
        geo["nx"], geo["ny"] = int(geo["nx"]), int(geo["ny"])
        geo.setdefault(
            "tags", {"bottom": "gammac", "top": "gamma1", "left": "gamma2", "right": "gamma2"}
        )
        mat = d.setdefault("material", {})
        mat.setdefault("lame_lambda", 1.0)
        mat.setdefault("lame_mu", 1.0)
        mat.setdefault("latent", {"l0": 0.5})
        mat.setdefault("cohesion", {"w": 0.05, "s0": 0.2, "s1": 0.0})
        mat.setdefault("exchange", {"base": 1.0, "amp": 0.5})
        mat.setdefault("constraint", {"kind": "box", "lo": 0.0, "hi": 1.0})
        d.setdefault("sources", {})
        d["sources"].setdefault("decay", "equilibrating")
        init = d.setdefault("initial", {})
        init.setdefault("theta", 1.0)
        init.setdefault("theta_s", 1.0)
        init.setdefault("chi", 0.5)
        sch = d["schedule"]
        sch.setdefault("dt_min", 1e-8)
        sch.setdefault("dt_max", max(float(sch["dt0"]), 0.05))
        sch.setdefault("snapshot_every", 0)
        sch.setdefault("double_after", 5)
        diag = d.setdefault("diagnostics", {})
        diag.setdefault("indicator_tol", 1e-6)
        diag.setdefault("window", 0.0)
        diag.setdefault("stop_at_equilibrium", True)
        d.setdefault("output", {}).setdefault("dir", "out")
        return d

    def emit(self) -> str:
        return yaml.safe_dump(self.normalized(), sort_keys=True)

    # ----------------------------------------------------------------- build
    def build(self):
        """Assemble the discrete problem: spaces, materials, forms, sources, state."""
        d = self.normalized()
        geo = d["geometry"]
        mesh = build_rect_mesh(
            geo["nx"], geo["ny"], extents=tuple(geo["extents"]), tag_layout=geo["tags"]
        )
        surface = extract_surface(mesh)
        spaces = build_spaces(mesh, surface)

        m = d["material"]
        con_spec = m["constraint"]
        if con_spec["kind"] == "box":
            constraint = prox.BoxConstraint(float(con_spec.get("lo", 0.0)), float(con_spec.get("hi", 1.0)))
        else:
            constraint = prox.PowerLawConstraint(
                float(con_spec.get("c", 1.0)), float(con_spec.get("q", 4.0))
            )
        mat = default_materials(
            l0=float(m["latent"].get("l0", 0.5)),
            w=float(m["cohesion"].get("w", 0.05)),
            s0=float(m["cohesion"].get("s0", 0.2)),
            s1=float(m["cohesion"].get("s1", 0.0)),
            k_base=float(m["exchange"].get("base", 1.0)),
            k_amp=float(m["exchange"].get("amp", 0.5)),
            lame_lambda=float(m["lame_lambda"]),
            lame_mu=float(m["lame_mu"]),
            constraint=constraint,
        )
        forms = assemble_constant_forms(spaces, mat)
        rp = RegularizationParams(
            eps=float(d["regularization"]["eps"]), mu=float(d["regularization"]["mu"])
        )

        s = d["sources"]
        src = SourceData(
            h=build_source(s.get("h"), "sources.h"),
            f=build_source(s.get("f"), "sources.f", vector=True),
            g=build_source(s.get("g"), "sources.g", vector=True),
            equilibrating=s.get("decay", "equilibrating") == "equilibrating",
        )

        init = d["initial"]
        state = zero_state(spaces)
        nodes = spaces.mesh.vertices
        snodes = spaces.surface.coords
        state.theta = build_scalar_profile(init["theta"], "initial.theta")(nodes)
        state.theta_s = build_scalar_profile(init["theta_s"], "initial.theta_s")(snodes)
        state.chi = build_scalar_profile(init["chi"], "initial.chi")(snodes)
        if init.get("u") is not None:
            ux = build_scalar_profile(init["u"].get("x", 0.0), "initial.u.x")(nodes)
            uy = build_scalar_profile(init["u"].get("y", 0.0), "initial.u.y")(nodes)
            u = np.empty(2 * spaces.n_scalar)
            u[0::2], u[1::2] = ux, uy
            state.u = spaces.apply_constraints(u)
        if np.any(state.theta <= 0.0):
            raise ConfigError("initial.theta", "nodal values must be strictly positive")
        if np.any(state.theta_s <= 0.0):
            raise ConfigError("initial.theta_s", "nodal values must be strictly positive")

        sch = d["schedule"]
        diag = d["diagnostics"]
        schedule = Schedule(
            t_end=float(sch["t_end"]),
            dt0=float(sch["dt0"]),
            dt_min=float(sch["dt_min"]),
            dt_max=float(sch["dt_max"]),
            snapshot_every=int(sch["snapshot_every"]),
            double_after=int(sch["double_after"]),
            stop_at_equilibrium=bool(diag["stop_at_equilibrium"]),
            indicator_tol=float(diag["indicator_tol"]),
            window=float(diag["window"]),
        )
        return spaces, mat, forms, rp, src, state, schedule
