"""Direct solver for the equilibrium system at fixed regularization scale.

Both temperatures are a given common constant; the solver alternates a
semismooth Newton solve of the momentum balance (strictly monotone) with a
Levenberg-damped semismooth Newton solve of the damage equation (whose plain
Jacobian is singular while the iterate sits inside the constraint box).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import proximal as prox
from .assembly import SEG_QBASIS


class NoConvergence(RuntimeError):
    def __init__(self, outer, norm):
        super().__init__(f"stationary solve stalled: |r|={norm:.3e} after {outer} outer sweeps")
        self.outer = outer
        self.norm = norm


@dataclass
class StationaryState:
    theta_bar: float
    u_inf: np.ndarray  # (2 Nv,)
    chi_inf: np.ndarray  # (Ns,)
    xi_inf: np.ndarray
    zeta_inf: np.ndarray
    eta_density_inf: np.ndarray

    def __post_init__(self):
        if self.theta_bar < 0.0:
            raise ValueError("stationary temperature must be non-negative")


def _mu_of(rp):
    return rp.mu


def _momentum_parts(forms, mat, u_full, chi, theta_bar, mu, F_dual):
    p = prox.YosidaParam(mu)
    r = forms.A_full @ u_full + forms.D.T @ np.full(forms.spaces.n_scalar, theta_bar)
    chi_q = forms.surf_at_quad(chi)
    u_q = forms.surf_vector_at_quad(u_full)
    pmu = prox.pos_part_mu(p, chi_q)
    r = r + forms.surf_vector_functional(pmu[..., None] * u_q)
    un_q = np.einsum("nqd,nd->nq", u_q, forms.seg_normal)
    lam = prox.yosida_impen(p, un_q)
    r = r + forms.surf_vector_functional(lam[..., None] * forms.seg_normal[:, None, :])
    return forms.spaces.restrict(r - F_dual)


def _momentum_matrix(forms, mat, u_full, chi, mu):
    p = prox.YosidaParam(mu)
    chi_q = forms.surf_at_quad(chi)
    pmu = prox.pos_part_mu(p, chi_q)
    u_q = forms.surf_vector_at_quad(u_full)
    un_q = np.einsum("nqd,nd->nq", u_q, forms.seg_normal)
    act = prox.impen_active(un_q) / mu
    nn = np.einsum("nd,ne->nde", forms.seg_normal, forms.seg_normal)
    eye2 = np.eye(2)
    elem = (
        np.einsum("nq,qi,qj,de->nidje", forms.seg_qw * pmu, SEG_QBASIS, SEG_QBASIS, eye2)
        + np.einsum("nq,qi,qj,nde->nidje", forms.seg_qw * act, SEG_QBASIS, SEG_QBASIS, nn)
    )
    vdof = (2 * forms.seg_parent[:, :, None] + np.arange(2)[None, None, :]).reshape(forms.n_seg, 4)
    rows = np.repeat(vdof, 4, axis=1).ravel()
    cols = np.tile(vdof, (1, 4)).ravel()
    nv2 = 2 * forms.spaces.n_scalar
    Csurf = sp.csr_matrix((elem.reshape(forms.n_seg, 4, 4).ravel(), (rows, cols)), shape=(nv2, nv2))
    free = forms.spaces.free_index
    return (forms.A_ff + Csurf[free][:, free]).tocsc()


def _damage_parts(forms, mat, u_full, chi, theta_bar, mu):
    p = prox.YosidaParam(mu)
    chi_q = forms.surf_at_quad(chi)
    u_q = forms.surf_vector_at_quad(u_full)
    usq = np.einsum("nqd,nqd->nq", u_q, u_q)
    integ = (
        np.asarray(mat.constraint.yosida(mu, chi_q))
        + mat.cohesion_prime(chi_q)
        + mat.latent_prime(chi_q) * theta_bar
        + 0.5 * prox.heaviside_mu(p, chi_q) * usq
    )
    return forms.Ks @ chi + forms.surf_functional(integ)


def solve_stationary(forms, mat, F_inf, theta_bar, rp, init=None, tol=1e-11, max_outer=200):
    """Alternating solve of the stationary momentum and damage equations.

    F_inf is the limit load as a full-length dual vector; theta_bar is the
    prescribed common temperature (the stationary system does not determine
    it).  Raises :class:`NoConvergence` when the sweep stalls; callers may
    restart from a different initial guess.
    """
    if theta_bar < 0.0:
        raise ValueError("theta_bar must be non-negative")
    mu = _mu_of(rp)
    spaces = forms.spaces
    if init is None:
        u = np.zeros(2 * spaces.n_scalar)
        chi = np.full(spaces.n_surface, 0.5 * (getattr(mat.constraint, "m_lo", 0.0) + getattr(mat.constraint, "m_hi", 1.0)))
    else:
        u = spaces.apply_constraints(np.asarray(init[0], dtype=float))
        chi = np.asarray(init[1], dtype=float).copy()

    def joint_norm(u_, chi_):
        ru = _momentum_parts(forms, mat, u_, chi_, theta_bar, mu, F_inf)
        rc = _damage_parts(forms, mat, u_, chi_, theta_bar, mu)
        return float(np.hypot(forms.dual_norm_W(ru), forms.dual_norm_S(rc))), ru, rc

    norm, _, _ = joint_norm(u, chi)
    tau = 0.0  # Levenberg shift for the damage sweep
    for outer in range(1, max_outer + 1):
        # displacement sweep (strictly monotone)
        for _ in range(40):
            ru = _momentum_parts(forms, mat, u, chi, theta_bar, mu, F_inf)
            if forms.dual_norm_W(ru) <= 0.5 * tol:
                break
            J = _momentum_matrix(forms, mat, u, chi, mu)
            delta = spla.splu(J).solve(-ru)
            best = None
            step = 1.0
            base = forms.dual_norm_W(ru)
            for _ in range(10):
                u_try = u.copy()
                u_try[spaces.free_index] += step * delta
                n_try = forms.dual_norm_W(
                    _momentum_parts(forms, mat, u_try, chi, theta_bar, mu, F_inf)
                )
                if n_try < base:
                    best = u_try
                    break
                step *= 0.5
            if best is None:
                break
            u = best

        # damage sweep with Levenberg safeguard against the singular interior
        for _ in range(40):
            rc = _damage_parts(forms, mat, u, chi, theta_bar, mu)
            base = forms.dual_norm_S(rc)
            if base <= 0.5 * tol:
                break
            chi_q = forms.surf_at_quad(chi)
            slope = np.asarray(mat.constraint.yosida_prime(mu, chi_q))
            J = (forms.Ks + forms.surf_weighted_mass(slope)).tocsc()
            moved = False
            for _ in range(10):
                try:
                    delta = spla.splu((J + tau * forms.Ms).tocsc()).solve(-rc)
                except RuntimeError:
                    tau = max(10.0 * tau, 1e-8)
                    continue
                n_try = forms.dual_norm_S(
                    _damage_parts(forms, mat, u, chi + delta, theta_bar, mu)
                )
                if n_try < base:
                    chi = chi + delta
                    tau = tau / 10.0 if tau > 1e-12 else 0.0
                    moved = True
                    break
                tau = max(10.0 * tau, 1e-8)
            if not moved:
                break

        norm, _, _ = joint_norm(u, chi)
        if norm <= tol:
            p = prox.YosidaParam(mu)
            un = forms.contact_normal_values(u)
            return StationaryState(
                theta_bar=float(theta_bar),
                u_inf=u,
                chi_inf=chi,
                xi_inf=np.asarray(mat.constraint.yosida(mu, chi)),
                zeta_inf=prox.heaviside_mu(p, chi),
                eta_density_inf=prox.yosida_impen(p, un),
            )
    raise NoConvergence(max_outer, norm)


def residual_stationary(stat: StationaryState, forms, mat, F_inf, rp) -> float:
    """Max dual norm of the stationary momentum and damage residuals.

    The temperature residuals of the stationary system vanish identically for
    a constant field, so only the constant-gradient proxy (exactly zero here)
    would be added; the returned value is what the equilibrium detector
    compares against.
    """
    mu = _mu_of(rp)
    ru = _momentum_parts(forms, mat, stat.u_inf, stat.chi_inf, stat.theta_bar, mu, F_inf)
    rc = _damage_parts(forms, mat, stat.u_inf, stat.chi_inf, stat.theta_bar, mu)
    return max(forms.dual_norm_W(ru), forms.dual_norm_S(rc))


def stationary_from_state(st, forms, mat, rp) -> StationaryState:
    """Package a trajectory endpoint as a stationary candidate.

    The common temperature is estimated as the body mean of the terminal
    temperature field.
    """
    ones = np.ones(forms.spaces.n_scalar)
    vol = float(ones @ (forms.M @ ones))
    theta_bar = max(float(ones @ (forms.M @ st.theta)) / vol, 0.0)
    mu = _mu_of(rp)
    p = prox.YosidaParam(mu)
    un = forms.contact_normal_values(st.u)
    return StationaryState(
        theta_bar=theta_bar,
        u_inf=st.u.copy(),
        chi_inf=st.chi.copy(),
        xi_inf=np.asarray(mat.constraint.yosida(mu, st.chi)),
        zeta_inf=prox.heaviside_mu(p, st.chi),
        eta_density_inf=prox.yosida_impen(p, un),
    )


def box_inclusion_check(stat: StationaryState, mat, rp) -> dict:
    """Distance-to-box and complementarity defects of the converged selection."""
    box = mat.constraint
    mu = _mu_of(rp)
    dist = np.abs(stat.chi_inf - box.project(stat.chi_inf))
    defect = float(np.max(np.abs(dist - mu * np.abs(stat.xi_inf))))
    inside = (stat.chi_inf >= box.m_lo) & (stat.chi_inf <= box.m_hi)
    comp = float(np.max(np.abs(stat.xi_inf[inside]))) if np.any(inside) else 0.0
    return {"dist_defect": defect, "interior_multiplier": comp}


def corollary_inner_product(stat: StationaryState, forms, mat, rp) -> float:
    """Inner product of the smooth damage forcing with (chi - m_lo).

    Non-positive at a converged solve of the complete-damage configuration
    (non-decreasing latent heat, strictly positive cohesion slope).
    """
    mu = _mu_of(rp)
    p = prox.YosidaParam(mu)
    m_lo = mat.constraint.m_lo
    chi_q = forms.surf_at_quad(stat.chi_inf)
    u_q = forms.surf_vector_at_quad(stat.u_inf)
    usq = np.einsum("nqd,nqd->nq", u_q, u_q)
    smooth = (
        mat.cohesion_prime(chi_q)
        + mat.latent_prime(chi_q) * stat.theta_bar
        + 0.5 * prox.heaviside_mu(p, chi_q) * usq
    )
    return forms.surf_integral(smooth * (chi_q - m_lo))
