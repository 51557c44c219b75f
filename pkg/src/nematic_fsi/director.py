"""Director field on the reference channel grid.

The director is stored in reference coordinates as an array of shape
(2, nx, ns): Fourier collocation in the periodic x direction and a uniform
wall-to-wall grid in s.  The moving-domain operators are pulled back with the
metric A = J F^{-1} F^{-T}:

    Lap d = (1/J) div(A grad d)      (reference divergence and gradient)

Discretely, Lap is defined as the variational derivative of a quadrature of
the Dirichlet energy 1/2 int grad d . A grad d.  The quadrature only couples
interior nodes, so the free condition (A grad d) . e_s = 0 is natural; wall
values are reconstructed afterwards with one-sided second-order stencils.
This makes the discrete energy identity dE/dt = -<Lap d, d_t> exact.

Time stepping is a Strang splitting: half an exact reaction step, a
transport-diffusion step (Crank-Nicolson diffusion, explicit midpoint
transport), another half reaction step.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import SolverError
from .geometry import TWO_PI, channel_snapshot

CG_RTOL = 1e-10
CG_MAXIT = 500


class DirectorGrid:
    """Tensor grid x_i = 2 pi i / nx, s_j = j / (ns - 1).

    ``weights`` is the plain trapezoid rule.  ``energy_weights`` vanish on the
    walls and carry 3h/2 on the first interior rows: they are the nodal
    masses paired with the variational Laplacian.
    """

    def __init__(self, nx, ns):
        if nx < 4 or ns < 5:
            raise ValueError("director grid needs nx >= 4 and ns >= 5")
        self.nx, self.ns = int(nx), int(ns)
        self.x = TWO_PI * np.arange(nx) / nx
        self.s = np.linspace(0.0, 1.0, ns)
        self.h = h = 1.0 / (ns - 1)
        self.wx = TWO_PI / nx
        self.s_half = 0.5 * (self.s[1:] + self.s[:-1])
        ws = np.full(ns, h)
        ws[0] = ws[-1] = 0.5 * h
        self.weights = np.outer(np.full(nx, self.wx), ws)
        we = np.full(ns, h)
        we[0] = we[-1] = 0.0
        we[1] = we[-2] = 1.5 * h
        self.ws_energy = we
        self.energy_weights = np.outer(np.full(nx, self.wx), we)
        k = np.fft.rfftfreq(nx, 1.0 / nx)
        self.k = k
        self.k_d1 = k.copy()
        if nx % 2 == 0:
            self.k_d1[-1] = 0.0
        self._dx_mat = None
        self._precond = {}

    @property
    def shape(self):
        return (self.nx, self.ns)

    def dx(self, f):
        """Spectral x-derivative along axis -2 (Nyquist mode dropped)."""
        fh = np.fft.rfft(f, axis=-2)
        fh *= (1j * self.k_d1)[:, None]
        return np.fft.irfft(fh, n=self.nx, axis=-2)

    def ds(self, f):
        """Second-order s-derivative, one-sided at the walls."""
        h = self.h
        out = np.empty_like(f)
        out[..., 1:-1] = (f[..., 2:] - f[..., :-2]) / (2 * h)
        out[..., 0] = (-3 * f[..., 0] + 4 * f[..., 1] - f[..., 2]) / (2 * h)
        out[..., -1] = (3 * f[..., -1] - 4 * f[..., -2] + f[..., -3]) / (2 * h)
        return out

    @property
    def dx_matrix(self):
        if self._dx_mat is None:
            eye = np.eye(self.nx)[:, :, None]
            self._dx_mat = self.dx(eye)[:, :, 0].T
        return self._dx_mat

    def integrate(self, f, J=None):
        """Trapezoid quadrature of f (trailing shape (nx, ns)), optionally times J."""
        w = self.weights if J is None else self.weights * J
        return np.sum(f * w, axis=(-2, -1))

    def flat_preconditioner(self, theta):
        """Per-x-mode inverses of the flat symmetrized operator W (I - theta Lap).

        Acts on interior rows only; the x weight is included.
        """
        key = float(theta)
        if key not in self._precond:
            n = self.ns - 2
            ws = self.ws_energy[1:-1]
            T = np.zeros((n, n))
            for e in range(n - 1):
                T[e, e] += 1.0
                T[e + 1, e + 1] += 1.0
                T[e, e + 1] -= 1.0
                T[e + 1, e] -= 1.0
            T /= self.h
            K = np.empty((self.k.size, n, n))
            for i, kk in enumerate(self.k_d1):
                K[i] = self.wx * (np.diag(ws * (1.0 + theta * kk * kk)) + theta * T)
            self._precond[key] = np.linalg.inv(K)
        return self._precond[key]


@dataclass
class DirectorState:
    d: np.ndarray
    grid: DirectorGrid = field(repr=False)


@dataclass(frozen=True)
class GLParams:
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be positive")


class DirectorOperator:
    """Pulled-back differential operators for one channel geometry snapshot.

    ``zeta`` and ``zeta_t`` are shell coefficient vectors of the displacement
    and its rate (the rate only enters the mesh velocity).
    """

    def __init__(self, grid, zeta, zeta_t=None):
        self.grid = grid
        zeta = np.asarray(zeta, dtype=float)
        zeta_t = np.zeros_like(zeta) if zeta_t is None else np.asarray(zeta_t, dtype=float)
        snap = channel_snapshot(zeta, zeta_t, grid.x, grid.s)
        half = channel_snapshot(zeta, zeta_t, grid.x, grid.s_half)
        self.snap = snap
        self.J = snap.J
        self.a = snap.a
        self.Axx = snap.J
        self.Axs = -snap.a
        self.Ass = (1.0 + snap.a ** 2) / snap.J
        self.Ass_half = (1.0 + half.a ** 2) / half.J
        self.Axs_half = -half.a
        self.mesh_w = snap.mesh_w
        self.mass = grid.energy_weights * snap.J
        self.flat = not np.any(zeta)
        # edge coefficients with the wall edges removed
        wx = grid.wx
        self._c_ss = wx * self.Ass_half
        self._c_xs = wx * self.Axs_half
        for c in (self._c_ss, self._c_xs):
            c[:, 0] = 0.0
            c[:, -1] = 0.0
        self._bc = {}

    # -- gradients ---------------------------------------------------------
    def ref_gradient(self, d):
        g = self.grid
        return g.dx(d), g.ds(d)

    def physical_gradient(self, d):
        """Physical gradient (d_xhat d, d_zhat d), each of shape (2, nx, ns)."""
        Dx, Ds = self.ref_gradient(d)
        return Dx - (self.a / self.J) * Ds, Ds / self.J

    # -- discrete Dirichlet energy -------------------------------------------
    def _edge_terms(self, d):
        g = self.grid
        Dx = g.dx(d)
        diff = (d[..., 1:] - d[..., :-1]) / g.h
        Dxe = 0.5 * (Dx[..., 1:] + Dx[..., :-1])
        return Dx, diff, Dxe

    def dirichlet_energy(self, d):
        """1/2 int grad d . A grad d: nodal x part, edge-based s and cross parts."""
        g = self.grid
        Dx, diff, Dxe = self._edge_terms(d)
        nodal = np.sum(g.energy_weights * self.Axx * np.sum(Dx * Dx, axis=0))
        ss = g.h * np.sum(self._c_ss * np.sum(diff * diff, axis=0))
        xs = g.h * np.sum(self._c_xs * np.sum(Dxe * diff, axis=0))
        return float(0.5 * (nodal + ss) + xs)

    def energy_gradient(self, d):
        """Gradient of dirichlet_energy with respect to the nodal values."""
        g = self.grid
        Dx, diff, Dxe = self._edge_terms(d)
        out = -g.dx(g.energy_weights * self.Axx * Dx)
        fl = self._c_ss * diff + self._c_xs * Dxe
        out[..., 1:] += fl
        out[..., :-1] -= fl
        u = 0.5 * g.h * self._c_xs * diff
        v = np.zeros_like(d)
        v[..., 1:] += u
        v[..., :-1] += u
        out -= g.dx(v)
        return out

    # -- Laplacian ---------------------------------------------------------
    def laplacian(self, d, boundary=True):
        """Variational Laplacian -(W J)^{-1} grad E on interior rows.

        Wall rows carry no mass; with ``boundary`` they are filled by cubic
        extrapolation (diagnostics only), otherwise zero.
        """
        out = np.zeros_like(d)
        out[..., 1:-1] = -self.energy_gradient(d)[..., 1:-1] / self.mass[:, 1:-1]
        if boundary:
            out[..., 0] = 3 * out[..., 1] - 3 * out[..., 2] + out[..., 3]
            out[..., -1] = 3 * out[..., -2] - 3 * out[..., -3] + out[..., -4]
        return out

    # -- free boundary condition ---------------------------------------------
    def neumann_residual(self, d):
        """Normalized conormal derivative d_s d + (A_sx / A_ss) d_x d at both walls."""
        g = self.grid
        h = g.h
        bot = (-3 * d[..., 0] + 4 * d[..., 1] - d[..., 2]) / (2 * h)
        top = (3 * d[..., -1] - 4 * d[..., -2] + d[..., -3]) / (2 * h)
        if not self.flat:
            bot = bot + (self.Axs[:, 0] / self.Ass[:, 0]) * g.dx(d[..., 0:1])[..., 0]
            top = top + (self.Axs[:, -1] / self.Ass[:, -1]) * g.dx(d[..., -1:])[..., 0]
        return np.stack([bot, top], axis=-1)

    def _bc_matrix(self, wall):
        if wall not in self._bc:
            g = self.grid
            col = 0 if wall == 0 else -1
            sgn = -1.0 if wall == 0 else 1.0
            r = self.Axs[:, col] / self.Ass[:, col]
            if np.max(np.abs(r)) == 0.0:
                self._bc[wall] = None
            else:
                M = np.diag(np.full(g.nx, sgn * 3.0 / (2 * g.h))) + r[:, None] * g.dx_matrix
                self._bc[wall] = np.linalg.inv(M)
        return self._bc[wall]

    def enforce_neumann(self, d):
        """Overwrite the wall nodes so that the conormal derivative vanishes."""
        d = d.copy()
        h = self.grid.h
        for wall, (b, i1, i2, sgn) in enumerate(((0, 1, 2, -1.0), (-1, -2, -3, 1.0))):
            rhs_vals = (4 * d[..., i1] - d[..., i2]) / 3.0
            Minv = self._bc_matrix(wall)
            if Minv is None:
                d[..., b] = rhs_vals
            else:
                rhs = sgn * 3.0 / (2 * h) * rhs_vals
                d[..., b] = np.einsum("ij,cj->ci", Minv, rhs)
        return d

    # -- implicit solve --------------------------------------------------------
    def implicit_solve(self, rhs, theta, x0=None, explicit=None):
        """Solve u - theta Lap u = rhs (+ theta Lap explicit) on interior rows.

        The system is symmetrized with the nodal mass W J and solved by
        preconditioned CG; wall values are slaved afterwards.
        Returns (u, iteration count).
        """
        g = self.grid
        nx, ns = g.nx, g.ns
        shape = (rhs.shape[0], nx, ns - 2)
        mass = self.mass[:, 1:-1]
        Kinv = g.flat_preconditioner(theta)
        full = np.zeros(rhs.shape)

        def hess(u):
            full[..., 1:-1] = u
            return self.energy_gradient(full)[..., 1:-1]

        def matvec(u):
            u = u.reshape(shape)
            return (mass * u + theta * hess(u)).ravel()

        nc = shape[0]

        def precond(r):
            rh = np.fft.rfft(r.reshape(shape), axis=-2)
            # (k, n, 2c) real batch so the per-mode solves run as one matmul
            ri = np.concatenate([rh.real, rh.imag]).transpose(1, 2, 0)
            z = np.matmul(Kinv, ri).transpose(2, 0, 1)
            return np.fft.irfft(z[:nc] + 1j * z[nc:], n=nx, axis=-2).ravel()

        b = mass * rhs[..., 1:-1]
        if explicit is not None:
            b = b - theta * hess(explicit[..., 1:-1])
        n = b.size
        A = spla.LinearOperator((n, n), matvec=matvec, dtype=float)
        M = spla.LinearOperator((n, n), matvec=precond, dtype=float)
        count = [0]

        def cb(_):
            count[0] += 1

        guess = (x0 if x0 is not None else rhs)[..., 1:-1].ravel()
        sol, info = spla.cg(A, b.ravel(), x0=guess, rtol=CG_RTOL, atol=0.0,
                            maxiter=CG_MAXIT, M=M, callback=cb)
        if info != 0:
            resid = np.linalg.norm(matvec(sol) - b.ravel()) / max(np.linalg.norm(b), 1e-300)
            raise SolverError(
                f"implicit director solve failed (info={info}, iterations={count[0]}, rel. residual={resid:.3e})",
                info={"info": info, "iterations": count[0], "residual": resid},
            )
        out = np.zeros(rhs.shape)
        out[..., 1:-1] = sol.reshape(shape)
        return self.enforce_neumann(out), count[0]

    # -- transport -------------------------------------------------------------
    def reference_velocity(self, vbar):
        """Reference-coordinate advection speed c = F^{-1}(u o Psi - d_t Psi).

        ``vbar`` is the pulled-back (Piola) velocity, so c = (vbar - (0, w)) / J.
        """
        return vbar[0] / self.J, (vbar[1] - self.mesh_w) / self.J

    def transport(self, d, c):
        Dx, Ds = self.ref_gradient(d)
        return -(c[0] * Dx + c[1] * Ds)


# ---------------------------------------------------------------------------
# Substeps
# ---------------------------------------------------------------------------

def reaction_substep_exact(d, dt, epsilon):
    """Exact flow of d_t = -(|d|^2 - 1) d / eps^2 over dt (direction preserved)."""
    r2 = np.sum(d * d, axis=0)
    decay = np.exp(-2.0 * dt / epsilon ** 2)
    return d / np.sqrt(r2 + (1.0 - r2) * decay)


def radial_exact(r0, dt, epsilon):
    r0 = np.asarray(r0, dtype=float)
    return r0 / np.sqrt(r0 * r0 + (1.0 - r0 * r0) * np.exp(-2.0 * dt / epsilon ** 2))


def transport_diffusion_substep(d, dt, op_mid, vbar=None, op_end=None, diffusion=True):
    """One step of d_t + c . grad d = Lap d in reference coordinates.

    Diffusion is Crank-Nicolson with the midpoint metric; transport is
    explicit, evaluated on a backward-Euler half-step predictor so the step
    is second order.  Wall values are slaved to ``op_end``.
    Returns (new field, Krylov iteration count).
    """
    op_end = op_mid if op_end is None else op_end
    if vbar is None:
        vbar = np.zeros_like(d)
    c = op_mid.reference_velocity(vbar)
    if not diffusion:
        mid = d + 0.5 * dt * op_mid.transport(d, c)
        return op_end.enforce_neumann(d + dt * op_mid.transport(mid, c)), 0
    theta = 0.5 * dt
    moving = np.any(c[0]) or np.any(c[1])
    iters = 0
    if moving:
        pred, it = op_mid.implicit_solve(d + theta * op_mid.transport(d, c), theta, x0=d)
        iters += it
        adv = dt * op_mid.transport(pred, c)
    else:
        adv = 0.0
    new, it = op_mid.implicit_solve(d + adv, theta, x0=d, explicit=d)
    if op_end is not op_mid:
        new = op_end.enforce_neumann(new)
    return new, iters + it


def project_ball(d, radius, op):
    """Clip |d| to the ball of given radius, keeping the flat wall condition.

    Wall columns whose value exceeds the radius after the boundary update are
    scaled together with their two stencil neighbours.  Returns the field and
    the largest overshoot removed.
    """
    r = np.sqrt(np.sum(d * d, axis=0))
    over = float(max(np.max(r) - radius, 0.0))
    if over > 0.0:
        d = d * np.minimum(1.0, radius / np.maximum(r, 1e-300))
    d = op.enforce_neumann(d)
    for cols in ((0, 1, 2), (-1, -2, -3)):
        rb = np.sqrt(np.sum(d[..., cols[0]] ** 2, axis=0))
        if np.any(rb > radius):
            over = max(over, float(np.max(rb) - radius))
            lam = np.minimum(1.0, radius / np.maximum(rb, 1e-300))
            for c in cols:
                d[..., c] = d[..., c] * lam
    return d, over


@dataclass
class StepInfo:
    krylov_iterations: int
    overshoot: float


def director_step(d, dt, params, op_mid, op_end, vbar_mid=None, radius=1.0):
    """Strang step: half reaction, transport-diffusion, half reaction, wall update."""
    eps = params.epsilon
    d = reaction_substep_exact(d, 0.5 * dt, eps)
    d, iters = transport_diffusion_substep(d, dt, op_mid, vbar_mid, op_end)
    d = reaction_substep_exact(d, 0.5 * dt, eps)
    d, over = project_ball(d, radius, op_end)
    return d, StepInfo(iters, over)


# ---------------------------------------------------------------------------
# Derived fields
# ---------------------------------------------------------------------------

def ericksen_stress(d, op):
    """(grad d . grad d)_{ij} = d_i d . d_j d at every node, shape (2, 2, nx, ns)."""
    gx, gz = op.physical_gradient(d)
    g = (gx, gz)
    out = np.empty((2, 2) + d.shape[1:])
    for i in range(2):
        for j in range(i, 2):
            out[i, j] = np.sum(g[i] * g[j], axis=0)
            out[j, i] = out[i, j]
    return out


def harmonic_limit_rhs(d, op):
    """Lap d + |grad d|^2 d."""
    gx, gz = op.physical_gradient(d)
    grad2 = np.sum(gx * gx + gz * gz, axis=0)
    return op.laplacian(d) + grad2 * d


def gl_rhs(d, op, epsilon):
    """Lap d - (|d|^2 - 1) d / eps^2."""
    return op.laplacian(d) - (np.sum(d * d, axis=0) - 1.0) * d / epsilon ** 2


def max_norm_monitor(d):
    return float(np.sqrt(np.max(np.sum(d * d, axis=0))))
