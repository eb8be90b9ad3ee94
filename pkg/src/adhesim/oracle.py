"""Dense reference implementations used only for verification.

Everything here is written as plain per-element loops with reference-element
shape functions and explicitly mapped quadrature points.  The production
assembly in :mod:`adhesim.assembly` never calls into this module; the test
suite and the verification command compare the two paths against each other.
"""

from __future__ import annotations

import numpy as np

from . import proximal as prox

# same quadrature rules as the production path (part of the discrete contract)
_TRI_REF_QP = [(0.5, 0.0), (0.5, 0.5), (0.0, 0.5)]
_SEG_QP = [0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)]


def _tri_shape(xi, eta):
    return np.array([1.0 - xi - eta, xi, eta])


_TRI_REF_GRAD = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


class DenseOracle:
    """Loop-based evaluation of residuals and energies on small meshes."""

    def __init__(self, spaces, mat, rp):
        self.spaces = spaces
        self.mat = mat
        self.rp = rp
        self.p = prox.YosidaParam(rp.mu)
        mesh = spaces.mesh
        self.mesh = mesh
        self.surf = spaces.surface
        self._tris = []
        for tri in mesh.triangles:
            p0, p1, p2 = mesh.vertices[tri]
            jac = np.column_stack([p1 - p0, p2 - p0])
            det = np.linalg.det(jac)
            grads = _TRI_REF_GRAD @ np.linalg.inv(jac)
            qp = []
            for xi, eta in _TRI_REF_QP:
                x = p0 + jac @ np.array([xi, eta])
                qp.append((x, _tri_shape(xi, eta), abs(det) / 6.0))
            self._tris.append((tri, grads, qp, abs(det) / 2.0))

        self._segs = []
        centroid = mesh.vertices.mean(axis=0)
        for k in range(self.surf.segments.shape[0]):
            a, b = self.surf.segments[k]
            pa, pb = self.surf.coords[a], self.surf.coords[b]
            length = float(np.linalg.norm(pb - pa))
            tang = (pb - pa) / length
            normal = np.array([tang[1], -tang[0]])
            mid = 0.5 * (pa + pb)
            if normal @ (centroid - mid) > 0:  # outward points away from the body
                normal = -normal
            qp = []
            for s in _SEG_QP:
                x = pa + s * (pb - pa)
                qp.append((x, np.array([1.0 - s, s]), length / 2.0))
            parents = (int(self.surf.parent[a]), int(self.surf.parent[b]))
            self._segs.append(((int(a), int(b)), parents, normal, qp, length))

        self._g2 = []
        for (a, b) in mesh.edges_with_tag("gamma2"):
            pa, pb = mesh.vertices[a], mesh.vertices[b]
            length = float(np.linalg.norm(pb - pa))
            qp = [(pa + s * (pb - pa), np.array([1.0 - s, s]), length / 2.0) for s in _SEG_QP]
            self._g2.append(((int(a), int(b)), qp))

    # --------------------------------------------------------------- helpers
    def _u_at(self, u_full, verts, shape):
        ux = sum(shape[i] * u_full[2 * v] for i, v in enumerate(verts))
        uy = sum(shape[i] * u_full[2 * v + 1] for i, v in enumerate(verts))
        return np.array([ux, uy])

    def _scalar_at(self, values, nodes, shape):
        return sum(shape[i] * values[n] for i, n in enumerate(nodes))

    # -------------------------------------------------------------- residuals
    def momentum(self, st, st_prev, dt, src=None, t=0.0):
        nv = self.mesh.n_vertices
        r = np.zeros(2 * nv)
        lam_e, mu_e = self.mat.lame_lambda, self.mat.lame_mu
        u_t = (st.u - st_prev.u) / dt
        for tri, grads, qp, area in self._tris:
            # strains of the current iterate and of the rate
            gu = np.zeros((2, 2))
            gut = np.zeros((2, 2))
            for i, v in enumerate(tri):
                gu += np.outer(grads[i], [st.u[2 * v], st.u[2 * v + 1]])
                gut += np.outer(grads[i], [u_t[2 * v], u_t[2 * v + 1]])
            eps_u = 0.5 * (gu + gu.T)
            eps_ut = 0.5 * (gut + gut.T)
            div_u = eps_u[0, 0] + eps_u[1, 1]
            th_avg = None
            for i, v in enumerate(tri):
                for d in range(2):
                    # eps of the test function phi_i e_d
                    e_test = np.zeros((2, 2))
                    e_test[d, :] += 0.5 * grads[i]
                    e_test[:, d] += 0.5 * grads[i]
                    div_test = grads[i][d]
                    val = (
                        np.tensordot(eps_ut, e_test) * area
                        + (lam_e * div_u * div_test + 2 * mu_e * np.tensordot(eps_u, e_test))
                        * area
                    )
                    r[2 * v + d] += val
            # theta div(v) with quadrature (theta is P1, div v constant)
            for x, shape, w in qp:
                th = self._scalar_at(st.theta, tri, shape)
                for i, v in enumerate(tri):
                    for d in range(2):
                        r[2 * v + d] += w * th * grads[i][d]
            if src is not None and src.f is not None:
                for x, shape, w in qp:
                    fval = src.f(x[None, :], t)[0]
                    for i, v in enumerate(tri):
                        for d in range(2):
                            r[2 * v + d] -= w * fval[d] * shape[i]

        for (a, b), parents, normal, qp, _ in self._segs:
            for x, shape, w in qp:
                chi = self._scalar_at(st.chi, (a, b), shape)
                uq = self._u_at(st.u, parents, shape)
                pmu = prox.pos_part_mu(self.p, chi)
                un = uq @ normal
                lam = prox.yosida_impen(self.p, un)
                for i, v in enumerate(parents):
                    for d in range(2):
                        r[2 * v + d] += w * shape[i] * (pmu * uq[d] + lam * normal[d])

        if src is not None and src.g is not None:
            for (a, b), qp in self._g2:
                for x, shape, w in qp:
                    gval = src.g(x[None, :], t)[0]
                    for i, v in enumerate((a, b)):
                        for d in range(2):
                            r[2 * v + d] -= w * gval[d] * shape[i]
        return r[self.spaces.free_index]

    def damage(self, st, st_prev, dt):
        ns = self.surf.n_nodes
        r = np.zeros(ns)
        chi_t = (st.chi - st_prev.chi) / dt
        for (a, b), parents, normal, qp, length in self._segs:
            gchi = (st.chi[b] - st.chi[a]) / length
            for i, n in enumerate((a, b)):
                gtest = (-1.0 if i == 0 else 1.0) / length
                r[n] += gchi * gtest * length
            for x, shape, w in qp:
                chi = self._scalar_at(st.chi, (a, b), shape)
                rate = self._scalar_at(chi_t, (a, b), shape)
                ts = self._scalar_at(st.theta_s, (a, b), shape)
                uq = self._u_at(st.u, parents, shape)
                val = (
                    rate
                    + float(self.mat.constraint.yosida(self.rp.mu, chi))
                    + float(self.mat.cohesion_prime(chi))
                    + float(self.mat.latent_prime(chi)) * ts
                    + 0.5 * prox.heaviside_mu(self.p, chi) * float(uq @ uq)
                )
                for i, n in enumerate((a, b)):
                    r[n] += w * val * shape[i]
        return r

    def bulk_entropy(self, st, st_prev, dt, src=None, t=0.0):
        nv = self.mesh.n_vertices
        r = np.zeros(nv)
        eps = self.rp.eps
        dth = (st.theta - st_prev.theta) / dt
        u_t = (st.u - st_prev.u) / dt
        for tri, grads, qp, area in self._tris:
            g_th = sum(st.theta[v] * grads[i] for i, v in enumerate(tri))
            g_dth = sum(dth[v] * grads[i] for i, v in enumerate(tri))
            div_ut = sum(grads[i] @ [u_t[2 * v], u_t[2 * v + 1]] for i, v in enumerate(tri))
            for i, v in enumerate(tri):
                r[v] += area * (eps * g_dth @ grads[i] + g_th @ grads[i])
            for x, shape, w in qp:
                th = self._scalar_at(st.theta, tri, shape)
                thp = self._scalar_at(st_prev.theta, tri, shape)
                dln = (prox.yosida_ln(self.p, th) - prox.yosida_ln(self.p, thp)) / dt
                rate = self._scalar_at(dth, tri, shape)
                hval = 0.0
                if src is not None and src.h is not None:
                    hval = float(src.h(x[None, :], t)[0])
                for i, v in enumerate(tri):
                    r[v] += w * shape[i] * (eps * rate + dln - div_ut - hval)
        for (a, b), parents, normal, qp, _ in self._segs:
            for x, shape, w in qp:
                chi = self._scalar_at(st.chi, (a, b), shape)
                th = self._scalar_at(st.theta, parents, shape)
                ts = self._scalar_at(st.theta_s, (a, b), shape)
                val = float(self.mat.exchange(chi)) * (th - ts)
                for i, v in enumerate(parents):
                    r[v] += w * shape[i] * val
        return r

    def surface_entropy(self, st, st_prev, dt):
        ns = self.surf.n_nodes
        r = np.zeros(ns)
        eps = self.rp.eps
        dts = (st.theta_s - st_prev.theta_s) / dt
        for (a, b), parents, normal, qp, length in self._segs:
            gts = (st.theta_s[b] - st.theta_s[a]) / length
            gdts = (dts[b] - dts[a]) / length
            for i, n in enumerate((a, b)):
                gtest = (-1.0 if i == 0 else 1.0) / length
                r[n] += (eps * gdts + gts) * gtest * length
            for x, shape, w in qp:
                ts = self._scalar_at(st.theta_s, (a, b), shape)
                tsp = self._scalar_at(st_prev.theta_s, (a, b), shape)
                dln = (prox.yosida_ln(self.p, ts) - prox.yosida_ln(self.p, tsp)) / dt
                chi = self._scalar_at(st.chi, (a, b), shape)
                chip = self._scalar_at(st_prev.chi, (a, b), shape)
                dlam = (float(self.mat.latent(chi)) - float(self.mat.latent(chip))) / dt
                rate = self._scalar_at(dts, (a, b), shape)
                th = self._scalar_at(st.theta, parents, shape)
                exch = float(self.mat.exchange(chi)) * (th - ts)
                for i, n in enumerate((a, b)):
                    r[n] += w * shape[i] * (eps * rate + dln - dlam - exch)
        return r

    # ------------------------------------------------------- energy breakdown
    def free_energy(self, st):
        lam_e, mu_e = self.mat.lame_lambda, self.mat.lame_mu
        e_mech = 0.0
        e_th = 0.0
        e_visc = 0.0
        e_lin = 0.0
        for tri, grads, qp, area in self._tris:
            gu = np.zeros((2, 2))
            g_th = np.zeros(2)
            for i, v in enumerate(tri):
                gu += np.outer(grads[i], [st.u[2 * v], st.u[2 * v + 1]])
                g_th += st.theta[v] * grads[i]
            eps_u = 0.5 * (gu + gu.T)
            div_u = np.trace(eps_u)
            e_mech += 0.5 * area * (lam_e * div_u**2 + 2 * mu_e * np.tensordot(eps_u, eps_u))
            e_visc += 0.5 * self.rp.eps * area * (g_th @ g_th)
            for x, shape, w in qp:
                th = self._scalar_at(st.theta, tri, shape)
                e_th += w * prox.i_mu_exact(self.p, th)
                e_lin += w * th
                e_visc += 0.5 * self.rp.eps * w * th**2
        e_adh = 0.0
        e_imp = 0.0
        for (a, b), parents, normal, qp, length in self._segs:
            gchi = (st.chi[b] - st.chi[a]) / length
            gts = (st.theta_s[b] - st.theta_s[a]) / length
            e_adh += 0.5 * gchi**2 * length
            e_visc += 0.5 * self.rp.eps * gts**2 * length
            for x, shape, w in qp:
                chi = self._scalar_at(st.chi, (a, b), shape)
                uq = self._u_at(st.u, parents, shape)
                ts = self._scalar_at(st.theta_s, (a, b), shape)
                e_adh += w * (
                    float(self.mat.constraint.envelope(self.rp.mu, chi))
                    + float(self.mat.cohesion(chi))
                    + 0.5 * prox.pos_part_mu(self.p, chi) * float(uq @ uq)
                )
                e_imp += w * prox.impen_envelope(self.p, float(uq @ normal))
                e_th += w * prox.i_mu_exact(self.p, ts)
                e_lin += w * ts
                e_visc += 0.5 * self.rp.eps * w * ts**2
        total = e_mech + e_adh + e_imp + e_th + e_visc
        return {
            "E_mech": e_mech,
            "E_adh": e_adh,
            "E_imp": e_imp,
            "E_th": e_th,
            "E_visc": e_visc,
            "E_th_linear": e_lin,
            "L_total": total,
        }

    def dissipation(self, st, st_prev, dt):
        u_t = (st.u - st_prev.u) / dt
        chi_t = (st.chi - st_prev.chi) / dt
        d_grad = d_visc = 0.0
        for tri, grads, qp, area in self._tris:
            g_th = sum(st.theta[v] * grads[i] for i, v in enumerate(tri))
            gut = np.zeros((2, 2))
            for i, v in enumerate(tri):
                gut += np.outer(grads[i], [u_t[2 * v], u_t[2 * v + 1]])
            eps_ut = 0.5 * (gut + gut.T)
            d_grad += area * (g_th @ g_th)
            d_visc += area * np.tensordot(eps_ut, eps_ut)
        d_grad_s = d_chi = d_exch = 0.0
        for (a, b), parents, normal, qp, length in self._segs:
            gts = (st.theta_s[b] - st.theta_s[a]) / length
            d_grad_s += gts**2 * length
            for x, shape, w in qp:
                rate = self._scalar_at(chi_t, (a, b), shape)
                chi = self._scalar_at(st.chi, (a, b), shape)
                th = self._scalar_at(st.theta, parents, shape)
                ts = self._scalar_at(st.theta_s, (a, b), shape)
                d_chi += w * rate**2
                d_exch += w * float(self.mat.exchange(chi)) * (th - ts) ** 2
        return {
            "D_grad_theta": d_grad,
            "D_visc": d_visc,
            "D_grad_theta_s": d_grad_s,
            "D_chi_rate": d_chi,
            "D_exchange": d_exch,
            "D_total": d_grad + d_visc + d_grad_s + d_chi + d_exch,
        }


# ---------------------------------------------------------------------------
# brute-force solvers for tiny instances
# ---------------------------------------------------------------------------

def _fd_jacobian(resid, x, r0):
    n = x.size
    J = np.empty((r0.size, n))
    for i in range(n):
        h = 1e-7 * max(1.0, abs(x[i]))
        xp = x.copy()
        xp[i] += h
        J[:, i] = (resid(xp) - r0) / h
    return J


def _damped_newton(resid, x0, tol, maxit=80):
    x = np.array(x0, dtype=float, copy=True)
    r = resid(x)
    norm = np.linalg.norm(r)
    for _ in range(maxit):
        if norm <= tol:
            return x, norm
        J = _fd_jacobian(resid, x, r)
        try:
            delta = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            delta = np.linalg.lstsq(J, -r, rcond=None)[0]
        step = 1.0
        for _ in range(30):
            x_try = x + step * delta
            r_try = resid(x_try)
            n_try = np.linalg.norm(r_try)
            if n_try < norm:
                x, r, norm = x_try, r_try, n_try
                break
            step *= 0.5
        else:
            return x, norm
    return x, norm


def monolithic_step(spaces, forms, mat, src, rp, st_prev, dt, t, tol=1e-12):
    """Fully implicit step: one Newton solve of all four coupled equations.

    Uses finite-difference Jacobians on the concatenated residual, so no
    staggering and no hand-coded linearization enters; intended for meshes
    with a handful of elements.
    """
    from .assembly import (
        State,
        bulk_entropy_residual,
        damage_residual,
        momentum_residual,
        surface_entropy_residual,
    )

    nv, ns = spaces.n_scalar, spaces.n_surface
    nf = spaces.n_vector_free

    def unpack(x):
        return State(
            theta=x[:nv],
            theta_s=x[nv : nv + ns],
            u=spaces.expand(x[nv + ns : nv + ns + nf]),
            chi=x[nv + ns + nf :],
        )

    def resid(x):
        st = unpack(x)
        return np.concatenate(
            [
                bulk_entropy_residual(st, st_prev, dt, forms, mat, src, t, rp),
                surface_entropy_residual(st, st_prev, dt, forms, mat, rp),
                momentum_residual(st, st_prev, dt, forms, mat, src, t, rp),
                damage_residual(st, st_prev, dt, forms, mat, rp),
            ]
        )

    x0 = np.concatenate(
        [st_prev.theta, st_prev.theta_s, spaces.restrict(st_prev.u), st_prev.chi]
    )
    x, norm = _damped_newton(resid, x0, tol)
    if norm > tol:
        raise RuntimeError(f"monolithic oracle did not converge: |r|={norm:.3e}")
    return unpack(x)


def multistart_stationary(spaces, forms, mat, F_inf, theta_bar, rp, seed=0, n_starts=64,
                          tol=1e-11, spread=0.5):
    """Damped FD-Newton on the full stationary residual from many random starts.

    Returns the list of converged points (deduplicated by distance) so the
    caller can check uniqueness and compare against the direct solver.
    """
    from .stationary import _damage_parts, _momentum_parts

    mu = rp.mu
    nf = spaces.n_vector_free
    ns = spaces.n_surface

    def resid(x):
        u = spaces.expand(x[:nf])
        chi = x[nf:]
        ru = _momentum_parts(forms, mat, u, chi, theta_bar, mu, F_inf)
        rc = _damage_parts(forms, mat, u, chi, theta_bar, mu)
        return np.concatenate([ru, rc])

    rng = np.random.default_rng(seed)
    solutions = []
    for _ in range(n_starts):
        x0 = rng.normal(0.0, spread, nf + ns)
        x, norm = _damped_newton(resid, x0, tol, maxit=200)
        if norm <= tol:
            for sol in solutions:
                if np.linalg.norm(sol - x) < 1e-6 * (1 + np.linalg.norm(sol)):
                    break
            else:
                solutions.append(x)
    return [(spaces.expand(x[:nf]), x[nf:]) for x in solutions]
