"""Weak-form operators of the coupled bulk-surface system.

Everything is P1 on triangles (bulk) and segments (contact line).  Quadrature
is fixed once and for all: the 3-point edge-midpoint rule on triangles and
2-point Gauss on segments, exact for products of P1 functions.  Nonlinear
coefficients are evaluated at quadrature points from interpolated nodal
values; the verification oracle reproduces the same rule through an
independent code path.

Assembly is vectorized over elements with bincount reductions, so the
summation order is fixed and runs are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import proximal as prox
from .mesh import GAMMA2, BodyMesh, Spaces, SurfaceMesh

# triangle rule: edge midpoints, weight area/3 (degree-2 exact)
TRI_QBARY = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
# segment rule: 2-point Gauss (degree-3 exact)
_G = 0.5 / np.sqrt(3.0)
SEG_QPTS = np.array([0.5 - _G, 0.5 + _G])
SEG_QBASIS = np.column_stack([1.0 - SEG_QPTS, SEG_QPTS])  # (q, loc)


@dataclass(frozen=True)
class RegularizationParams:
    """Viscosity eps and Yosida scale mu of the regularized evolution."""

    eps: float
    mu: float

    def __post_init__(self):
        if not (self.mu > 0.0):
            raise ValueError("mu must be positive")
        if self.eps < 0.0:
            raise ValueError("eps must be non-negative")

    @property
    def yosida(self) -> prox.YosidaParam:
        return prox.YosidaParam(self.mu)


@dataclass
class MaterialLaws:
    """Constitutive data: elasticity, latent heat, cohesion, exchange, constraint."""

    lame_lambda: float
    lame_mu: float
    latent: Callable
    latent_prime: Callable
    cohesion: Callable
    cohesion_prime: Callable
    exchange: Callable
    exchange_floor: float
    constraint: object  # BoxConstraint or PowerLawConstraint

    def validate(self, samples=None):
        if self.lame_lambda <= 0 or self.lame_mu <= 0:
            raise ValueError("Lame constants must be positive")
        if self.exchange_floor <= 0:
            raise ValueError("exchange coefficient floor must be positive")
        xs = np.linspace(-3.0, 3.0, 61) if samples is None else samples
        kv = self.exchange(xs)
        if np.any(kv < self.exchange_floor - 1e-12):
            raise ValueError("exchange coefficient dips below its declared floor")
        h = 1e-6
        for fn, dfn, name in (
            (self.latent, self.latent_prime, "latent"),
            (self.cohesion, self.cohesion_prime, "cohesion"),
        ):
            fd = (fn(xs + h) - fn(xs - h)) / (2 * h)
            if np.max(np.abs(fd - dfn(xs))) > 1e-6 * (1 + np.max(np.abs(dfn(xs)))):
                raise ValueError(f"{name} derivative inconsistent with the function")
        return self


def default_materials(
    l0=0.5,
    w=0.05,
    s0=0.2,
    s1=0.0,
    k_base=1.0,
    k_amp=0.5,
    lame_lambda=1.0,
    lame_mu=1.0,
    constraint=None,
) -> MaterialLaws:
    """Reference material set: linear latent heat, quadratic cohesion, tanh exchange."""
    if constraint is None:
        constraint = prox.BoxConstraint(0.0, 1.0)
    if abs(k_amp) >= k_base:
        raise ValueError("need |k_amp| < k_base so the exchange floor is positive")
    return MaterialLaws(
        lame_lambda=lame_lambda,
        lame_mu=lame_mu,
        latent=lambda x: l0 * np.asarray(x, dtype=float),
        latent_prime=lambda x: np.full_like(np.asarray(x, dtype=float), l0),
        cohesion=lambda x: w * (1.0 - np.asarray(x, float)) + 0.5 * s0 * np.asarray(x, float) ** 2 + s1 * np.asarray(x, float),
        cohesion_prime=lambda x: -w + s0 * np.asarray(x, float) + s1,
        exchange=lambda x: k_base + k_amp * np.tanh(np.asarray(x, float)),
        exchange_floor=k_base - abs(k_amp),
        constraint=constraint,
    ).validate()


@dataclass
class SourceData:
    """External loads: entropy source h, body force f, traction g on gamma2.

    Pointwise functions take quadrature coordinates (n, 2) and the time, and
    return nodal-quadrature values.  Dual overrides bypass quadrature and hand
    a ready-made load vector to the residuals (used for manufactured states).
    """

    h: Optional[Callable] = None  # (pts, t) -> (n,)
    f: Optional[Callable] = None  # (pts, t) -> (n, 2)
    g: Optional[Callable] = None  # (pts, t) -> (n, 2)
    equilibrating: bool = True
    h_dual_override: Optional[Callable] = None  # (t, forms) -> (Nv,)
    f_dual_override: Optional[Callable] = None  # (t, forms) -> (2 Nv,)

    def h_dual(self, t, forms) -> np.ndarray:
        if self.h_dual_override is not None:
            return self.h_dual_override(t, forms)
        if self.h is None:
            return np.zeros(forms.spaces.n_scalar)
        vals = self.h(forms.tri_qpts.reshape(-1, 2), t).reshape(forms.n_tri, 3)
        return forms.bulk_functional(vals)

    def load_dual(self, t, forms) -> np.ndarray:
        """Combined volume force and traction against vector test functions."""
        out = np.zeros(2 * forms.spaces.n_scalar)
        if self.f_dual_override is not None:
            out = out + self.f_dual_override(t, forms)
        elif self.f is not None:
            vals = self.f(forms.tri_qpts.reshape(-1, 2), t).reshape(forms.n_tri, 3, 2)
            out = out + forms.bulk_vector_functional(vals)
        if self.g is not None:
            vals = self.g(forms.g2_qpts.reshape(-1, 2), t).reshape(-1, 2, 2)
            out = out + forms.gamma2_vector_functional(vals)
        return out


@dataclass
class State:
    """Nodal coefficients of the four fields plus the last auxiliary selections."""

    theta: np.ndarray  # (Nv,)
    theta_s: np.ndarray  # (Ns,)
    u: np.ndarray  # (2 Nv,), clamped entries zero
    chi: np.ndarray  # (Ns,)
    xi: Optional[np.ndarray] = None  # beta_mu(chi)
    zeta: Optional[np.ndarray] = None  # H_mu(chi)
    eta_density: Optional[np.ndarray] = None  # (u.n)^+/mu at contact nodes

    def copy(self) -> "State":
        return State(
            self.theta.copy(),
            self.theta_s.copy(),
            self.u.copy(),
            self.chi.copy(),
            None if self.xi is None else self.xi.copy(),
            None if self.zeta is None else self.zeta.copy(),
            None if self.eta_density is None else self.eta_density.copy(),
        )

    def refresh_aux(self, forms: "AssembledForms", mat: MaterialLaws, rp: RegularizationParams):
        p = rp.yosida
        self.xi = np.asarray(mat.constraint.yosida(rp.mu, self.chi))
        self.zeta = prox.heaviside_mu(p, self.chi)
        un = forms.contact_normal_values(self.u)
        self.eta_density = prox.yosida_impen(p, un)
        return self

    def aux_consistent(self, forms, mat, rp, tol=1e-12) -> bool:
        if self.xi is None or self.zeta is None or self.eta_density is None:
            return False
        fresh = self.copy().refresh_aux(forms, mat, rp)
        return (
            np.allclose(fresh.xi, self.xi, atol=tol)
            and np.allclose(fresh.zeta, self.zeta, atol=tol)
            and np.allclose(fresh.eta_density, self.eta_density, atol=tol)
        )


def zero_state(spaces: Spaces, chi_value=0.0, theta_value=0.0) -> State:
    return State(
        theta=np.full(spaces.n_scalar, float(theta_value)),
        theta_s=np.full(spaces.n_surface, float(theta_value)),
        u=np.zeros(2 * spaces.n_scalar),
        chi=np.full(spaces.n_surface, float(chi_value)),
    )


class AssembledForms:
    """Constant matrices plus cached element data for the nonlinear terms."""

    def __init__(self, spaces: Spaces, mat: MaterialLaws):
        self.spaces = spaces
        self.mat = mat
        mesh = spaces.mesh
        self._build_tri_cache(mesh)
        self._build_surface_cache(spaces.surface)
        self._build_gamma2_cache(mesh)
        self._build_matrices()
        self._factor_cache = {}

    # ------------------------------------------------------------------ caches
    def _build_tri_cache(self, mesh: BodyMesh):
        t = mesh.triangles
        p = mesh.vertices
        self.tri = t
        self.n_tri = t.shape[0]
        x = p[t]  # (Nt, 3, 2)
        d1 = x[:, 1] - x[:, 0]
        d2 = x[:, 2] - x[:, 0]
        self.tri_area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        area4 = 2.0 * self.tri_area[:, None]
        # gradients of barycentric basis functions
        g = np.empty((self.n_tri, 3, 2))
        g[:, 0, 0] = x[:, 1, 1] - x[:, 2, 1]
        g[:, 0, 1] = x[:, 2, 0] - x[:, 1, 0]
        g[:, 1, 0] = x[:, 2, 1] - x[:, 0, 1]
        g[:, 1, 1] = x[:, 0, 0] - x[:, 2, 0]
        g[:, 2, 0] = x[:, 0, 1] - x[:, 1, 1]
        g[:, 2, 1] = x[:, 1, 0] - x[:, 0, 0]
        self.tri_grads = g / area4[..., None]
        self.tri_qpts = np.einsum("ql,nld->nqd", TRI_QBARY, x)  # (Nt, 3q, 2)
        self.tri_qw = np.repeat(self.tri_area[:, None] / 3.0, 3, axis=1)  # (Nt, 3q)

    def _build_surface_cache(self, surf: SurfaceMesh):
        self.surf = surf
        self.n_seg = surf.segments.shape[0]
        self.seg_local = surf.segments  # (Nseg, 2) S_h node ids
        self.seg_parent = surf.parent[surf.segments]  # (Nseg, 2) body vertex ids
        self.seg_len = surf.seg_length
        self.seg_normal = surf.seg_normals
        a = surf.coords[surf.segments[:, 0]]
        b = surf.coords[surf.segments[:, 1]]
        self.seg_qpts = a[:, None, :] + SEG_QPTS[None, :, None] * (b - a)[:, None, :]
        self.seg_qw = 0.5 * np.repeat(self.seg_len[:, None], 2, axis=1)  # (Nseg, 2q)

    def _build_gamma2_cache(self, mesh: BodyMesh):
        edges = mesh.edges_with_tag(GAMMA2)
        self.g2_edges = edges
        if edges.shape[0] == 0:
            self.g2_qpts = np.zeros((0, 2, 2))
            self.g2_qw = np.zeros((0, 2))
            return
        a = mesh.vertices[edges[:, 0]]
        b = mesh.vertices[edges[:, 1]]
        ln = np.hypot(*(b - a).T)
        self.g2_qpts = a[:, None, :] + SEG_QPTS[None, :, None] * (b - a)[:, None, :]
        self.g2_qw = 0.5 * np.repeat(ln[:, None], 2, axis=1)

    def _build_matrices(self):
        nv = self.spaces.n_scalar
        t, A, g = self.tri, self.tri_area, self.tri_grads

        # scalar stiffness and mass
        ke = np.einsum("n,nid,njd->nij", A, g, g)
        me = (A[:, None, None] / 12.0) * (np.ones((3, 3)) + np.eye(3))
        rows = np.repeat(t, 3, axis=1).ravel()
        cols = np.tile(t, (1, 3)).ravel()
        self.K = sp.csr_matrix((ke.ravel(), (rows, cols)), shape=(nv, nv))
        self.M = sp.csr_matrix((me.ravel(), (rows, cols)), shape=(nv, nv))

        # vector forms: b = eps:eps, a = lam div.div + 2 mu eps:eps
        ee = np.zeros((self.n_tri, 3, 2, 3, 2))
        gx, gy = g[..., 0], g[..., 1]
        ee[:, :, 0, :, 0] = gx[:, :, None] * gx[:, None, :] + 0.5 * gy[:, :, None] * gy[:, None, :]
        ee[:, :, 0, :, 1] = 0.5 * gy[:, :, None] * gx[:, None, :]
        ee[:, :, 1, :, 0] = 0.5 * gx[:, :, None] * gy[:, None, :]
        ee[:, :, 1, :, 1] = gy[:, :, None] * gy[:, None, :] + 0.5 * gx[:, :, None] * gx[:, None, :]
        dd = np.einsum("nid,nje->nidje", g, g)  # div(phi_i e_d) div(phi_j e_e)
        be = A[:, None, None, None, None] * ee
        ae = A[:, None, None, None, None] * (
            self.mat.lame_lambda * dd + 2.0 * self.mat.lame_mu * ee
        )
        vdof = (2 * t[:, :, None] + np.arange(2)[None, None, :]).reshape(self.n_tri, 6)
        vrows = np.repeat(vdof, 6, axis=1).ravel()
        vcols = np.tile(vdof, (1, 6)).ravel()
        self.B_full = sp.csr_matrix(
            (be.reshape(self.n_tri, 6, 6).ravel(), (vrows, vcols)), shape=(2 * nv, 2 * nv)
        )
        self.A_full = sp.csr_matrix(
            (ae.reshape(self.n_tri, 6, 6).ravel(), (vrows, vcols)), shape=(2 * nv, 2 * nv)
        )

        # divergence coupling <theta, div v>
        de = (A[:, None, None, None] / 3.0) * np.broadcast_to(
            g[:, None, :, :], (self.n_tri, 3, 3, 2)
        )
        drows = np.repeat(t, 6, axis=1).ravel()
        dcols = np.tile(vdof, (1, 3)).ravel()
        self.D = sp.csr_matrix(
            (de.reshape(self.n_tri, 3, 6).ravel(), (drows, dcols)), shape=(nv, 2 * nv)
        )

        # vector mass/stiffness (for the W norm); kron(. , I2) matches the
        # interleaved dof order
        self.M2_full = sp.kron(self.M, sp.eye(2), format="csr")
        self.K2_full = sp.kron(self.K, sp.eye(2), format="csr")

        # surface mass and stiffness on the contact polyline
        ns = self.spaces.n_surface
        L = self.seg_len
        mse = (L[:, None, None] / 6.0) * (np.ones((2, 2)) + np.eye(2))
        kse = (1.0 / L)[:, None, None] * np.array([[1.0, -1.0], [-1.0, 1.0]])
        srows = np.repeat(self.seg_local, 2, axis=1).ravel()
        scols = np.tile(self.seg_local, (1, 2)).ravel()
        self.Ms = sp.csr_matrix((mse.ravel(), (srows, scols)), shape=(ns, ns))
        self.Ks = sp.csr_matrix((kse.ravel(), (srows, scols)), shape=(ns, ns))

        free = self.spaces.free_index
        self.A_ff = self.A_full[free][:, free].tocsc()
        self.B_ff = self.B_full[free][:, free].tocsc()
        self.riesz_V = (self.M + self.K).tocsc()
        self.riesz_S = (self.Ms + self.Ks).tocsc()
        self.riesz_W = (self.M2_full + self.K2_full)[free][:, free].tocsc()

    # --------------------------------------------------------------- utilities
    def factorized(self, key, matrix):
        if key not in self._factor_cache:
            self._factor_cache[key] = spla.splu(matrix.tocsc())
        return self._factor_cache[key]

    def dual_norm_V(self, r):
        z = self.factorized("riesz_V", self.riesz_V).solve(r)
        return float(np.sqrt(max(r @ z, 0.0)))

    def dual_norm_S(self, r):
        z = self.factorized("riesz_S", self.riesz_S).solve(r)
        return float(np.sqrt(max(r @ z, 0.0)))

    def dual_norm_W(self, r_free):
        z = self.factorized("riesz_W", self.riesz_W).solve(r_free)
        return float(np.sqrt(max(r_free @ z, 0.0)))

    def norm_W(self, u_full):
        return float(np.sqrt(u_full @ (self.M2_full @ u_full) + u_full @ (self.K2_full @ u_full)))

    # bulk interpolation and functionals -------------------------------------
    def bulk_at_quad(self, nodal):
        return nodal[self.tri] @ TRI_QBARY.T  # (Nt, 3q)

    def bulk_functional(self, qvals):
        """Dual vector of integrand values given at triangle quadrature points."""
        w = self.tri_qw * qvals  # (Nt, 3q)
        contrib = w @ TRI_QBARY  # (Nt, 3loc)
        return np.bincount(self.tri.ravel(), contrib.ravel(), minlength=self.spaces.n_scalar)

    def bulk_integral(self, qvals):
        return float(np.sum(self.tri_qw * qvals))

    def bulk_weighted_mass(self, qweights):
        """Sparse matrix of ∫ w(x) phi_i phi_j with w given at quadrature points."""
        wq = self.tri_qw * qweights  # (Nt, q)
        elem = np.einsum("nq,qi,qj->nij", wq, TRI_QBARY, TRI_QBARY)
        rows = np.repeat(self.tri, 3, axis=1).ravel()
        cols = np.tile(self.tri, (1, 3)).ravel()
        nv = self.spaces.n_scalar
        return sp.csr_matrix((elem.ravel(), (rows, cols)), shape=(nv, nv))

    def bulk_vector_functional(self, qvals):
        """Dual on vector dofs of a vector integrand at triangle quad points (Nt,q,2)."""
        w = self.tri_qw[..., None] * qvals  # (Nt, q, 2)
        contrib = np.einsum("nqd,qi->nid", w, TRI_QBARY)  # (Nt, 3, 2)
        dofs = (2 * self.tri[:, :, None] + np.arange(2)[None, None, :]).ravel()
        return np.bincount(dofs, contrib.ravel(), minlength=2 * self.spaces.n_scalar)

    # surface interpolation and functionals ----------------------------------
    def surf_at_quad(self, nodal):
        return nodal[self.seg_local] @ SEG_QBASIS.T  # (Nseg, 2q)

    def surf_vector_at_quad(self, u_full):
        ux = u_full[2 * self.seg_parent]  # (Nseg, 2loc)
        uy = u_full[2 * self.seg_parent + 1]
        return np.stack([ux @ SEG_QBASIS.T, uy @ SEG_QBASIS.T], axis=-1)  # (Nseg, q, 2)

    def surf_functional(self, qvals):
        w = self.seg_qw * qvals
        contrib = w @ SEG_QBASIS
        return np.bincount(
            self.seg_local.ravel(), contrib.ravel(), minlength=self.spaces.n_surface
        )

    def surf_integral(self, qvals):
        return float(np.sum(self.seg_qw * qvals))

    def surf_weighted_mass(self, qweights):
        wq = self.seg_qw * qweights
        elem = np.einsum("nq,qi,qj->nij", wq, SEG_QBASIS, SEG_QBASIS)
        rows = np.repeat(self.seg_local, 2, axis=1).ravel()
        cols = np.tile(self.seg_local, (1, 2)).ravel()
        ns = self.spaces.n_surface
        return sp.csr_matrix((elem.ravel(), (rows, cols)), shape=(ns, ns))

    def surf_bulk_functional(self, qvals):
        """Scatter a contact-line integrand against bulk test functions."""
        w = self.seg_qw * qvals
        contrib = w @ SEG_QBASIS
        return np.bincount(
            self.seg_parent.ravel(), contrib.ravel(), minlength=self.spaces.n_scalar
        )

    def surf_vector_functional(self, qvals):
        """Scatter a vector contact integrand (Nseg,q,2) against vector tests."""
        w = self.seg_qw[..., None] * qvals
        contrib = np.einsum("nqd,qi->nid", w, SEG_QBASIS)
        dofs = (2 * self.seg_parent[:, :, None] + np.arange(2)[None, None, :]).ravel()
        return np.bincount(dofs, contrib.ravel(), minlength=2 * self.spaces.n_scalar)

    def gamma2_vector_functional(self, qvals):
        if self.g2_edges.shape[0] == 0:
            return np.zeros(2 * self.spaces.n_scalar)
        w = self.g2_qw[..., None] * qvals
        contrib = np.einsum("nqd,qi->nid", w, SEG_QBASIS)
        dofs = (2 * self.g2_edges[:, :, None] + np.arange(2)[None, None, :]).ravel()
        return np.bincount(dofs, contrib.ravel(), minlength=2 * self.spaces.n_scalar)

    def contact_normal_values(self, u_full):
        """Nodal u.n on the contact line (per-node normal from adjacent segments)."""
        nrm = np.zeros((self.spaces.n_surface, 2))
        np.add.at(nrm, self.seg_local[:, 0], self.seg_normal)
        np.add.at(nrm, self.seg_local[:, 1], self.seg_normal)
        nrm /= np.maximum(np.hypot(nrm[:, 0], nrm[:, 1]), 1e-300)[:, None]
        uv = self.spaces.trace_vector(u_full)
        return np.einsum("nd,nd->n", uv, nrm)

    def contact_normal_at_quad(self, u_full):
        uq = self.surf_vector_at_quad(u_full)  # (Nseg, q, 2)
        return np.einsum("nqd,nd->nq", uq, self.seg_normal)

    # ------------------------------------------------------- exchange coupling
    def exchange_pair(self, theta, theta_s, chi):
        """Contact heat-exchange duals for the bulk (+) and surface (-) equations.

        Both contributions are assembled from the same quadrature values, so
        they are exact negatives of each other through the trace pairing.
        """
        th_q = self.spaces.trace_scalar(theta)[self.seg_local] @ SEG_QBASIS.T
        ts_q = self.surf_at_quad(theta_s)
        k_q = self.mat.exchange(self.surf_at_quad(chi))
        integ = k_q * (th_q - ts_q)
        w = self.seg_qw * integ
        contrib = w @ SEG_QBASIS
        bulk = np.bincount(
            self.seg_parent.ravel(), contrib.ravel(), minlength=self.spaces.n_scalar
        )
        surf = -np.bincount(
            self.seg_local.ravel(), contrib.ravel(), minlength=self.spaces.n_surface
        )
        return bulk, surf


def assemble_constant_forms(spaces: Spaces, mat: MaterialLaws) -> AssembledForms:
    """Build all state-independent matrices and element caches."""
    return AssembledForms(spaces, mat)


# ---------------------------------------------------------------------------
# residuals
# ---------------------------------------------------------------------------

def momentum_residual(st, st_prev, dt, forms, mat, src, t, rp) -> np.ndarray:
    """Dual of the quasistatic momentum balance on the free vector dofs."""
    p = rp.yosida
    u_t = (st.u - st_prev.u) / dt
    r = forms.B_full @ u_t + forms.A_full @ st.u + forms.D.T @ st.theta

    chi_q = forms.surf_at_quad(st.chi)
    u_q = forms.surf_vector_at_quad(st.u)
    pmu = prox.pos_part_mu(p, chi_q)
    r = r + forms.surf_vector_functional(pmu[..., None] * u_q)

    un_q = forms.contact_normal_at_quad(st.u)
    lam = prox.yosida_impen(p, un_q)  # (Nseg, q)
    r = r + forms.surf_vector_functional(lam[..., None] * forms.seg_normal[:, None, :])

    r = r - src.load_dual(t, forms)
    return forms.spaces.restrict(r)


def momentum_jacobian(st, dt, forms, mat, rp) -> sp.csc_matrix:
    """Semismooth Jacobian of the momentum residual in u (free dofs)."""
    p = rp.yosida
    chi_q = forms.surf_at_quad(st.chi)
    pmu = prox.pos_part_mu(p, chi_q)
    un_q = forms.contact_normal_at_quad(st.u)
    act = prox.impen_active(un_q) / rp.mu  # (Nseg, q)

    # element 4x4 blocks on the two parent vertices, two components each
    nrm = forms.seg_normal  # (Nseg, 2)
    nn = np.einsum("nd,ne->nde", nrm, nrm)
    wq_p = forms.seg_qw * pmu
    wq_c = forms.seg_qw * act
    eye2 = np.eye(2)
    elem = (
        np.einsum("nq,qi,qj,de->nidje", wq_p, SEG_QBASIS, SEG_QBASIS, eye2)
        + np.einsum("nq,qi,qj,nde->nidje", wq_c, SEG_QBASIS, SEG_QBASIS, nn)
    )
    vdof = (2 * forms.seg_parent[:, :, None] + np.arange(2)[None, None, :]).reshape(
        forms.n_seg, 4
    )
    rows = np.repeat(vdof, 4, axis=1).ravel()
    cols = np.tile(vdof, (1, 4)).ravel()
    nv2 = 2 * forms.spaces.n_scalar
    Csurf = sp.csr_matrix((elem.reshape(forms.n_seg, 4, 4).ravel(), (rows, cols)), shape=(nv2, nv2))
    free = forms.spaces.free_index
    return (forms.B_ff / dt + forms.A_ff + Csurf[free][:, free]).tocsc()


def damage_residual(st, st_prev, dt, forms, mat, rp) -> np.ndarray:
    """Dual of the adhesion evolution equation on the contact nodes."""
    p = rp.yosida
    chi_t = (st.chi - st_prev.chi) / dt
    r = forms.Ms @ chi_t + forms.Ks @ st.chi

    chi_q = forms.surf_at_quad(st.chi)
    ts_q = forms.surf_at_quad(st.theta_s)
    u_q = forms.surf_vector_at_quad(st.u)
    usq = np.einsum("nqd,nqd->nq", u_q, u_q)
    integ = (
        np.asarray(mat.constraint.yosida(rp.mu, chi_q))
        + mat.cohesion_prime(chi_q)
        + mat.latent_prime(chi_q) * ts_q
        + 0.5 * prox.heaviside_mu(p, chi_q) * usq
    )
    return r + forms.surf_functional(integ)


def damage_jacobian(st, dt, forms, mat, rp) -> sp.csc_matrix:
    """Monotone part of the damage Jacobian: mass/dt + stiffness + constraint slope.

    The smooth couplings (cohesion slope, latent heat, displacement term) are
    kept on the residual side only, so the matrix is always positive definite.
    """
    chi_q = forms.surf_at_quad(st.chi)
    slope = np.asarray(mat.constraint.yosida_prime(rp.mu, chi_q))
    return (forms.Ms / dt + forms.Ks + forms.surf_weighted_mass(slope)).tocsc()


def bulk_entropy_residual(st, st_prev, dt, forms, mat, src, t, rp) -> np.ndarray:
    """Dual of the bulk entropy balance with viscosity eps."""
    p = rp.yosida
    th_q = forms.bulk_at_quad(st.theta)
    thp_q = forms.bulk_at_quad(st_prev.theta)
    dln = (prox.yosida_ln(p, th_q) - prox.yosida_ln(p, thp_q)) / dt

    dtheta = (st.theta - st_prev.theta) / dt
    r = rp.eps * (forms.M @ dtheta) + forms.bulk_functional(dln)
    r = r - forms.D @ ((st.u - st_prev.u) / dt)
    r = r + rp.eps * (forms.K @ dtheta) + forms.K @ st.theta
    ex_bulk, _ = forms.exchange_pair(st.theta, st.theta_s, st.chi)
    r = r + ex_bulk
    return r - src.h_dual(t, forms)


def surface_entropy_residual(st, st_prev, dt, forms, mat, rp) -> np.ndarray:
    """Dual of the surface entropy balance, latent heat included."""
    p = rp.yosida
    ts_q = forms.surf_at_quad(st.theta_s)
    tsp_q = forms.surf_at_quad(st_prev.theta_s)
    dln = (prox.yosida_ln(p, ts_q) - prox.yosida_ln(p, tsp_q)) / dt
    dlam = (mat.latent(forms.surf_at_quad(st.chi)) - mat.latent(forms.surf_at_quad(st_prev.chi))) / dt

    dts = (st.theta_s - st_prev.theta_s) / dt
    r = rp.eps * (forms.Ms @ dts) + forms.surf_functional(dln - dlam)
    r = r + rp.eps * (forms.Ks @ dts) + forms.Ks @ st.theta_s
    _, ex_surf = forms.exchange_pair(st.theta, st.theta_s, st.chi)
    return r + ex_surf


def entropy_jacobian(st, dt, forms, mat, rp):
    """Joint Newton matrix of the two entropy residuals in (theta, theta_s)."""
    p = rp.yosida
    th_q = forms.bulk_at_quad(st.theta)
    ts_q = forms.surf_at_quad(st.theta_s)
    Wb = forms.bulk_weighted_mass(prox.yosida_ln_deriv(p, th_q)) / dt
    Ws = forms.surf_weighted_mass(prox.yosida_ln_deriv(p, ts_q)) / dt

    k_q = mat.exchange(forms.surf_at_quad(st.chi))
    Mk = forms.surf_weighted_mass(k_q)
    P = forms.spaces.trace_matrix()

    J_tt = (rp.eps / dt) * (forms.M + forms.K) + Wb + forms.K + P.T @ Mk @ P
    J_ts = -(P.T @ Mk)
    J_st = -(Mk @ P)
    J_ss = (rp.eps / dt) * (forms.Ms + forms.Ks) + Ws + forms.Ks + Mk
    return sp.bmat([[J_tt, J_ts], [J_st, J_ss]], format="csc")


# ---------------------------------------------------------------------------
# energies and dissipation
# ---------------------------------------------------------------------------

def free_energy(st, forms, mat, rp) -> dict:
    """Breakdown of the regularized free energy (the run's Lyapunov candidate).

    The thermal component uses the antiderivative matched to the discrete
    chain rule of the log regularization, so the per-step energy identity is
    exact up to the splitting defects; the plain field integrals are reported
    separately as ``E_th_linear``.
    """
    p = rp.yosida
    e_mech = 0.5 * float(st.u @ (forms.A_full @ st.u))

    chi_q = forms.surf_at_quad(st.chi)
    u_q = forms.surf_vector_at_quad(st.u)
    usq = np.einsum("nqd,nqd->nq", u_q, u_q)
    e_adh = 0.5 * float(st.chi @ (forms.Ks @ st.chi))
    e_adh += forms.surf_integral(
        np.asarray(mat.constraint.envelope(rp.mu, chi_q))
        + mat.cohesion(chi_q)
        + 0.5 * prox.pos_part_mu(p, chi_q) * usq
    )

    un_q = forms.contact_normal_at_quad(st.u)
    e_imp = forms.surf_integral(prox.impen_envelope(p, un_q))

    th_q = forms.bulk_at_quad(st.theta)
    ts_q = forms.surf_at_quad(st.theta_s)
    e_th = forms.bulk_integral(prox.i_mu_exact(p, th_q)) + forms.surf_integral(
        prox.i_mu_exact(p, ts_q)
    )
    e_visc = 0.5 * rp.eps * (
        float(st.theta @ (forms.M @ st.theta) + st.theta @ (forms.K @ st.theta))
        + float(st.theta_s @ (forms.Ms @ st.theta_s) + st.theta_s @ (forms.Ks @ st.theta_s))
    )
    e_th_linear = forms.bulk_integral(th_q) + forms.surf_integral(ts_q)
    total = e_mech + e_adh + e_imp + e_th + e_visc
    return {
        "E_mech": e_mech,
        "E_adh": e_adh,
        "E_imp": e_imp,
        "E_th": e_th,
        "E_visc": e_visc,
        "E_th_linear": e_th_linear,
        "L_total": total,
    }


def dissipation_rate(st, st_prev, dt, forms, mat) -> dict:
    """Non-negative dissipation breakdown for the discrete rates."""
    g = forms.tri_grads
    grad_th = np.einsum("nl,nld->nd", st.theta[forms.tri], g)
    d_grad = float(np.sum(forms.tri_area * np.einsum("nd,nd->n", grad_th, grad_th)))

    u_t = (st.u - st_prev.u) / dt
    ut_loc = u_t[(2 * forms.tri[:, :, None] + np.arange(2)[None, None, :])]  # (Nt,3,2)
    gradu = np.einsum("nld,nle->nde", g, ut_loc)  # d/dx_d of component e
    epsu = 0.5 * (gradu + np.transpose(gradu, (0, 2, 1)))
    d_visc = float(np.sum(forms.tri_area * np.einsum("nde,nde->n", epsu, epsu)))

    dth_s = (st.theta_s[forms.seg_local[:, 1]] - st.theta_s[forms.seg_local[:, 0]]) / forms.seg_len
    d_grad_s = float(np.sum(forms.seg_len * dth_s**2))

    chi_t = (st.chi - st_prev.chi) / dt
    chit_q = forms.surf_at_quad(chi_t)
    d_chi = forms.surf_integral(chit_q**2)

    th_q = forms.spaces.trace_scalar(st.theta)[forms.seg_local] @ SEG_QBASIS.T
    ts_q = forms.surf_at_quad(st.theta_s)
    k_q = mat.exchange(forms.surf_at_quad(st.chi))
    d_exch = forms.surf_integral(k_q * (th_q - ts_q) ** 2)

    return {
        "D_grad_theta": d_grad,
        "D_visc": d_visc,
        "D_grad_theta_s": d_grad_s,
        "D_chi_rate": d_chi,
        "D_exchange": d_exch,
        "D_total": d_grad + d_visc + d_grad_s + d_chi + d_exch,
    }
