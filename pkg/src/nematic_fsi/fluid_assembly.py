"""Assembly of the coupled fluid-shell Galerkin system.

For a given geometry zeta(t), advecting velocity v and director field d the
coefficients alpha of u = sum_n alpha_n psi_n satisfy

    a(t) alpha' = b(t) alpha + bend(eta) + e(t),      eta' = alpha_boundary

with, for test index j and trial index n,

    a[j, n] = int psi_n . psi_j + delta_{jn} (boundary pairs)
    b[j, n] = -int d_t psi_n . psi_j
              - 1/2 int (v . grad) psi_n . psi_j + 1/2 int (v . grad) psi_j . psi_n
              - int grad psi_n : grad psi_j
              - 1/2 int_omega psi_j psi_n d_t zeta dy - k^2 delta_{jn}
    bend_j  = -k^4 eta_k,    e_j = int (grad d . grad d) : grad psi_j

All integrals over the moving channel are computed on the reference domain
with weight J.  Pushed basis functions are Piola transforms of the reference
modes; their Eulerian time derivative is evaluated in closed form.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import AssemblyError
from .geometry import TWO_PI, channel_snapshot, mode_table


class QuadratureGrid:
    """Trapezoid rule in the periodic x direction and Gauss-Legendre in s."""

    def __init__(self, nx, ns):
        self.nx, self.ns = int(nx), int(ns)
        self.x = TWO_PI * np.arange(nx) / nx
        xg, wg = np.polynomial.legendre.leggauss(ns)
        self.s = 0.5 * (xg + 1.0)
        self.ws = 0.5 * wg
        self.wx = np.full(nx, TWO_PI / nx)
        self.weights = np.outer(self.wx, self.ws)


def quadrature_moving_domain(integrand, zeta, quad):
    """int over the deformed channel of integrand(xhat, zhat), via pullback.

    ``zeta`` is a shell coefficient vector; ``integrand`` maps arrays of
    physical coordinates to values.
    """
    snap = channel_snapshot(zeta, np.zeros(len(zeta)), quad.x, quad.s)
    X = np.broadcast_to(quad.x[:, None], snap.J.shape)
    Z = quad.s[None, :] + np.outer(snap.zeta, _chi(quad.s))
    return float(np.sum(integrand(X, Z) * snap.J * quad.weights))


def _chi(s):
    return s * s * (3.0 - 2.0 * s)


@dataclass
class PushedFields:
    """Pushed basis on a grid: w[m, i], G[m, i, k] = d_k w_i, dt[m, i] (Eulerian)."""

    w: np.ndarray
    G: np.ndarray
    dt: np.ndarray
    J: np.ndarray


def push_fields(ref, snap, with_time=True):
    v1, v2 = ref.v[:, 0], ref.v[:, 1]
    iJ = 1.0 / snap.J
    a = snap.a
    w1 = v1 * iJ
    w = np.stack([w1, a * w1 + v2], axis=1)
    dj = []
    for j, (Jj, aj) in enumerate(((snap.Jx, snap.ax), (snap.Js, snap.as_))):
        dw1 = ref.dv[:, 0, j] * iJ - w1 * (Jj * iJ)
        dw2 = aj * w1 + a * dw1 + ref.dv[:, 1, j]
        dj.append((dw1, dw2))
    G = np.empty(w.shape[:2] + (2,) + w.shape[2:])
    r = a * iJ
    for i in range(2):
        G[:, i, 0] = dj[0][i] - r * dj[1][i]
        G[:, i, 1] = dj[1][i] * iJ
    dt = None
    if with_time:
        t1 = -w1 * (snap.Jt * iJ)
        t2 = snap.at * w1 + a * t1
        dt = np.stack([t1 - G[:, 0, 1] * snap.mesh_w, t2 - G[:, 1, 1] * snap.mesh_w], axis=1)
    return PushedFields(w=w, G=G, dt=dt, J=snap.J)


@dataclass
class CoefficientMatrices:
    a: np.ndarray
    b: np.ndarray
    c_diag: np.ndarray
    dvec: np.ndarray
    evec: np.ndarray
    transport: np.ndarray
    dirichlet: np.ndarray
    boundary: np.ndarray
    gram: np.ndarray = None
    area: float = None

    def bending(self, eta, eta0=None):
        """Folded memory term c (eta - eta0) + dvec = -k^4 eta."""
        out = np.zeros(self.a.shape[0])
        out[self.boundary] = self.c_diag * eta
        return out

    def memory_raw(self, times, alpha_hist):
        """Raw path: int_0^t c alpha_b(s) ds + dvec by trapezoid over stored history."""
        hist = np.asarray(alpha_hist)[:, self.boundary]
        integral = np.trapezoid(hist, np.asarray(times), axis=0) if len(times) > 1 else 0.0 * hist[0]
        out = np.zeros(self.a.shape[0])
        out[self.boundary] = self.c_diag * integral + self.dvec
        return out


class Assembler:
    """Builds CoefficientMatrices for a basis on fixed quadrature and director grids."""

    def __init__(self, basis, quad, dgrid=None, stabilization=True):
        self.basis = basis
        self.quad = quad
        self.dgrid = dgrid
        self.stabilization = stabilization
        self.M = len(basis)
        self.bidx = basis.boundary_globals
        self.k = basis.shell_wavenumbers()
        self.ref_q = basis.reference_fields(quad.x, quad.s)
        self.ref_d = basis.reference_fields(dgrid.x, dgrid.s) if dgrid is not None else None
        self.shell_q = mode_table(basis.n_shell, quad.x)

    def push_quad(self, zeta, zeta_t):
        snap = channel_snapshot(zeta, zeta_t, self.quad.x, self.quad.s)
        return push_fields(self.ref_q, snap)

    def push_nodes(self, zeta, zeta_t=None):
        zeta_t = np.zeros_like(zeta) if zeta_t is None else zeta_t
        snap = channel_snapshot(zeta, zeta_t, self.dgrid.x, self.dgrid.s)
        return push_fields(self.ref_d, snap, with_time=False)

    def static_blocks(self, pf):
        """Fluid Gram, time-derivative pairing and Dirichlet blocks (no v dependence)."""
        M = self.M
        W = (self.quad.weights * pf.J).ravel()
        w = pf.w.reshape(M, -1, W.size)
        wW = (w * W).reshape(M, -1)
        gram = wW @ w.reshape(M, -1).T
        pt = wW @ pf.dt.reshape(M, -1).T
        G = pf.G.reshape(M, -1, W.size)
        dirichlet = (G * W).reshape(M, -1) @ G.reshape(M, -1).T
        return gram, pt, dirichlet

    def transport_block(self, pf, alpha_v):
        M = self.M
        W = (self.quad.weights * pf.J).ravel()
        v = np.tensordot(alpha_v, pf.w, axes=1)
        Gv = np.einsum("mikpq,kpq->mipq", pf.G, v)
        wW = (pf.w.reshape(M, 2, -1) * W).reshape(M, -1)
        t1 = wW @ Gv.reshape(M, -1).T
        return -0.5 * t1 + 0.5 * t1.T

    def node_snapshot(self, zeta, zeta_t=None):
        zeta_t = np.zeros_like(zeta) if zeta_t is None else zeta_t
        return channel_snapshot(zeta, zeta_t, self.dgrid.x, self.dgrid.s)

    def ericksen_vector(self, stress, snap):
        """e_j = int (grad d . grad d) : grad psi_j with the director nodal masses.

        The pushed gradient is linear in the reference fields, so the stress is
        first contracted with the geometric coefficients and only then with
        the M reference modes.
        """
        if stress is None:
            return np.zeros(self.M)
        J, a = snap.J, snap.a
        WJ = self.dgrid.energy_weights * J
        r = a / J
        P = np.empty((2, 2) + J.shape)
        for i in range(2):
            P[i, 0] = WJ * stress[i, 0]
            P[i, 1] = WJ * (stress[i, 1] / J - r * stress[i, 0])
        Q = P[0] + a * P[1]
        jac = (snap.Jx, snap.Js)
        dad = (snap.ax, snap.as_)
        cv1 = sum(P[1, j] * dad[j] / J - Q[j] * jac[j] / J ** 2 for j in range(2))
        ref = self.ref_d
        e = np.tensordot(ref.v[:, 0], cv1, axes=2)
        e += np.tensordot(ref.dv[:, 0], Q / J, axes=3)
        e += np.tensordot(ref.dv[:, 1], P[1], axes=3)
        return e

    def assemble(self, zeta, zeta_t, alpha_v=None, stress=None, snap=None, eta0=None):
        zeta = np.asarray(zeta, dtype=float)
        zeta_t = np.asarray(zeta_t, dtype=float)
        pf = self.push_quad(zeta, zeta_t)
        gram, pt, dirichlet = self.static_blocks(pf)
        if alpha_v is not None and np.any(alpha_v):
            transport = self.transport_block(pf, alpha_v)
        else:
            transport = np.zeros((self.M, self.M))
        B = self.bidx
        a = gram.copy()
        a[B, B] += 1.0
        b = -pt + transport - dirichlet
        k2 = self.k ** 2
        if self.stabilization and np.any(zeta_t):
            zt = zeta_t @ self.shell_q
            S = (self.shell_q * (zt * self.quad.wx)) @ self.shell_q.T
            b[np.ix_(B, B)] -= 0.5 * S
        b[B, B] -= k2
        if stress is not None:
            evec = self.ericksen_vector(stress, snap if snap is not None else self.node_snapshot(zeta))
        else:
            evec = np.zeros(self.M)
        eta0 = np.zeros(B.size) if eta0 is None else np.asarray(eta0, dtype=float)
        return CoefficientMatrices(
            a=a, b=b, c_diag=-(k2 ** 2), dvec=-(k2 ** 2) * eta0, evec=evec,
            transport=transport, dirichlet=dirichlet, boundary=B, gram=gram,
            area=float(np.sum(self.quad.weights * pf.J)),
        )


def assemble_coefficients(assembler, zeta, zeta_t, alpha_v=None, stress=None, eta0=None):
    return assembler.assemble(zeta, zeta_t, alpha_v, stress, eta0=eta0)


def factor_mass(a, check=False):
    """Cholesky factor of the mass matrix; raises AssemblyError when singular."""
    try:
        fac = sla.cho_factor(a, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise AssemblyError("mass matrix is not positive definite") from exc
    if check:
        ev = np.linalg.eigvalsh(a)
        if ev[0] <= 0.0 or ev[-1] / ev[0] > 1e12:
            raise AssemblyError(f"mass matrix ill conditioned (cond = {ev[-1] / max(ev[0], 1e-300):.3e})")
    return fac
