"""Windowed Picard coupling of the director and the fluid-shell Galerkin system.

One pass over a window of steps:

1. mollify the current iterate (geometry zeta, velocity coefficients);
2. advance the director over the window in that frozen geometry/velocity;
3. assemble and integrate the Galerkin system (RK4) with the new director;
4. measure the distance to the previous iterate.

Passes repeat until the distance drops below the tolerance.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .basis import BasisSet
from .director import (
    DirectorGrid, DirectorOperator, GLParams, director_step, ericksen_stress, max_norm_monitor,
    project_ball,
)
from .energy_ledger import EnergyLedger, compute_ledger
from .errors import AdmissibilityError, DivergenceError, NonConvergenceError
from .fluid_assembly import Assembler, QuadratureGrid, factor_mass
from .geometry import TWO_PI, mode_table


# fluid quadrature (x trapezoid, s Gauss); resolves every mode product for N <= 16
DEFAULT_QUAD = (64, 33)


@dataclass(frozen=True)
class PicardConfig:
    window_steps: int = 10
    tol: float = 1e-8
    max_iter: int = 12
    cutoff_k: int = None
    max_halvings: int = 4

    def __post_init__(self):
        if self.window_steps < 1 or not self.tol > 0 or self.max_iter < 1:
            raise ValueError("invalid Picard configuration")
        if self.cutoff_k is not None and self.cutoff_k < 1:
            raise ValueError("mollifier cutoff must be >= 1")


@dataclass
class CoupledState:
    t: float
    step: int
    alpha: np.ndarray
    eta: np.ndarray
    d: np.ndarray
    radius: float = 1.0

    def copy(self):
        return CoupledState(self.t, self.step, self.alpha.copy(), self.eta.copy(), self.d.copy(), self.radius)


@dataclass
class WindowReport:
    t0: float
    steps: int
    passes: int
    distances: list = field(default_factory=list)
    krylov_iterations: int = 0
    overshoot: float = 0.0

    @property
    def contraction(self):
        d = self.distances
        return [d[i + 1] / d[i] for i in range(len(d) - 1) if d[i] > 0]


# ---------------------------------------------------------------------------
# Mollifier and generic RK4
# ---------------------------------------------------------------------------

def mollify_given_pair(zeta, v, K, shell_k, fluid_k):
    """Spectral cutoff keeping wavenumbers <= K in both the shell and fluid fields."""
    if K is None:
        return zeta, v
    keep_s = np.asarray(shell_k) <= K
    keep_f = np.asarray(fluid_k) <= K
    return zeta * keep_s, v * keep_f


def _rhs(m, fac, alpha, eta):
    r = m.b @ alpha + m.evec
    r[m.boundary] += m.c_diag * eta
    return sla.cho_solve(fac, r, check_finite=False), alpha[m.boundary]


def rk4_step(m0, mh, m1, alpha, eta, dt, facs=None):
    """Classical RK4 for a(t) alpha' = b alpha + bend(eta) + e, eta' = alpha_boundary."""
    if facs is None:
        facs = [factor_mass(m.a) for m in (m0, mh, m1)]
    f0, fh, f1 = facs
    ka1, ke1 = _rhs(m0, f0, alpha, eta)
    ka2, ke2 = _rhs(mh, fh, alpha + 0.5 * dt * ka1, eta + 0.5 * dt * ke1)
    ka3, ke3 = _rhs(mh, fh, alpha + 0.5 * dt * ka2, eta + 0.5 * dt * ke2)
    ka4, ke4 = _rhs(m1, f1, alpha + dt * ka3, eta + dt * ke3)
    alpha = alpha + dt / 6.0 * (ka1 + 2 * ka2 + 2 * ka3 + ka4)
    eta = eta + dt / 6.0 * (ke1 + 2 * ke2 + 2 * ke3 + ke4)
    return alpha, eta


def integrate_galerkin_ode(provider, alpha0, dt, steps, t0=0.0, eta0=None):
    """RK4 trajectory of the coefficient system; ``provider(t)`` returns CoefficientMatrices.

    Returns arrays alpha (steps + 1, M) and eta (steps + 1, n_boundary).
    """
    alpha = np.array(alpha0, dtype=float)
    cache = {}

    def get(t):
        key = round(t / dt * 2)
        if key not in cache:
            for old in [k for k in cache if k < key - 2]:
                del cache[old]
            m = provider(t)
            cache[key] = (m, factor_mass(m.a))
        return cache[key]

    m0, _ = get(t0)
    eta = np.zeros(len(m0.boundary)) if eta0 is None else np.array(eta0, dtype=float)
    A, E = [alpha.copy()], [eta.copy()]
    for n in range(steps):
        t = t0 + n * dt
        (a0, f0), (ah, fh), (a1, f1) = get(t), get(t + 0.5 * dt), get(t + dt)
        alpha, eta = rk4_step(a0, ah, a1, alpha, eta, dt, (f0, fh, f1))
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(eta))):
            raise DivergenceError(f"non-finite coefficients at step {n + 1}", last_good=(A[-1], E[-1]))
        A.append(alpha.copy())
        E.append(eta.copy())
    return np.array(A), np.array(E)


def hermite_mid(z0, z1, v0, v1, dt):
    """Cubic Hermite value and slope at the midpoint of a step."""
    zm = 0.5 * (z0 + z1) + dt / 8.0 * (v0 - v1)
    vm = 1.5 * (z1 - z0) / dt - 0.25 * (v0 + v1)
    return zm, vm


# ---------------------------------------------------------------------------
# Coupled simulation
# ---------------------------------------------------------------------------

class CoupledSimulation:
    """Channel fluid-shell-director solver on fixed grids and basis."""

    def __init__(self, nx=64, ns=33, n_modes=16, dt=1e-3, epsilon=0.1, quad=None,
                 picard=None, stabilization=True, alpha_margin=0.5, n_shell=None):
        self.dgrid = DirectorGrid(nx, ns)
        self.basis = BasisSet(n_modes, n_shell)
        qnx, qns = quad if quad is not None else DEFAULT_QUAD
        self.quad = QuadratureGrid(qnx, qns)
        self.assembler = Assembler(self.basis, self.quad, self.dgrid, stabilization=stabilization)
        self.params = GLParams(epsilon)
        self.dt = float(dt)
        self.picard = picard or PicardConfig()
        self.alpha_margin = alpha_margin
        self.B = self.basis.boundary_globals
        self.k = self.basis.shell_wavenumbers()
        self.fluid_k = self.basis.x_wavenumbers()
        self.n_shell = self.basis.n_shell
        self._sup_y = np.linspace(0.0, TWO_PI, 512, endpoint=False)
        self._sup_tab = mode_table(self.n_shell, self._sup_y)
        self._top_tab = mode_table(self.n_shell, self.dgrid.x)
        # set to a list to keep every accepted state
        self.trajectory = None

    # -- helpers -------------------------------------------------------------
    def sup_eta(self, zeta):
        return float(np.max(np.abs(np.asarray(zeta) @ self._sup_tab))) if self.n_shell else 0.0

    def check_admissible(self, zetas):
        zetas = np.atleast_2d(zetas)
        sup = np.max(np.abs(zetas @ self._sup_tab)) if self.n_shell else 0.0
        if sup >= self.alpha_margin:
            raise AdmissibilityError(
                f"shell displacement sup = {sup:.4g} reached the margin {self.alpha_margin}; "
                "try a shorter Picard window"
            )

    def vbar_nodes(self, alpha):
        return np.tensordot(alpha, self.assembler.ref_d.v, axes=1)

    def initial_state(self, eta0, alpha0, d0, radius=None):
        d0 = np.array(d0, dtype=float)
        if radius is None:
            radius = max(1.0, max_norm_monitor(d0))
        eta0 = np.array(eta0, dtype=float)
        alpha0 = np.array(alpha0, dtype=float)
        self.check_admissible(eta0)
        op = DirectorOperator(self.dgrid, eta0, alpha0[self.B])
        d0, _ = project_ball(d0, radius, op)
        return CoupledState(0.0, 0, alpha0, eta0, d0, float(radius))

    def record(self, ledger, state, mats, op, diag=None):
        gram = mats.gram
        energies, rates, defect = compute_ledger(
            self.k, state.eta, state.alpha[self.B], state.alpha, gram, mats.dirichlet,
            state.d, op, self.params.epsilon,
        )
        ledger.append(state.t, energies, rates, max_norm_monitor(state.d), defect, diag)

    def diagnostics(self, state, mats, snap):
        """Interface mismatch at the flexible wall and fluid area."""
        v = np.tensordot(state.alpha, self.assembler.ref_d.v[..., -1], axes=1)
        w1 = v[0] / snap.J[:, -1]
        top = (w1, snap.a[:, -1] * w1 + v[1])
        shell_v = state.alpha[self.B] @ self._top_tab
        mismatch = max(float(np.max(np.abs(top[0]))), float(np.max(np.abs(top[1] - shell_v))))
        return {"interface_mismatch": mismatch, "area": mats.area}

    # -- one Picard pass -----------------------------------------------------
    def _pass(self, state, zeta, zeta_t, abar, n):
        dt = self.dt
        asm = self.assembler
        K = self.picard.cutoff_k
        zk, ak = mollify_given_pair(zeta, abar, K, self.k, self.fluid_k)
        ztk, _ = mollify_given_pair(zeta_t, abar, K, self.k, self.fluid_k)
        mids = [hermite_mid(zk[i], zk[i + 1], ztk[i], ztk[i + 1], dt) for i in range(n)]
        self.check_admissible(np.vstack([zk] + [m[0] for m in mids]))
        am = [0.5 * (ak[i] + ak[i + 1]) for i in range(n)]
        ops = [DirectorOperator(self.dgrid, zk[i], ztk[i]) for i in range(n + 1)]

        # director over the window
        d = [state.d]
        stress = [ericksen_stress(state.d, ops[0])]
        mid_ops = []
        iters, over = 0, 0.0
        for i in range(n):
            op_mid = DirectorOperator(self.dgrid, mids[i][0], mids[i][1])
            mid_ops.append(op_mid)
            dn, info = director_step(d[i], dt, self.params, op_mid, ops[i + 1], self.vbar_nodes(am[i]), state.radius)
            iters += info.krylov_iterations
            over = max(over, info.overshoot)
            d.append(dn)
            stress.append(ericksen_stress(dn, ops[i + 1]))

        # Galerkin system over the window
        mats = [asm.assemble(zk[i], ztk[i], ak[i], stress[i], ops[i].snap) for i in range(n + 1)]
        facs = [factor_mass(m.a) for m in mats]
        alpha = np.empty((n + 1, state.alpha.size))
        eta = np.empty((n + 1, state.eta.size))
        alpha[0], eta[0] = state.alpha, state.eta
        for i in range(n):
            sm = 0.5 * (stress[i] + stress[i + 1])
            mm = asm.assemble(mids[i][0], mids[i][1], am[i], sm, mid_ops[i].snap)
            alpha[i + 1], eta[i + 1] = rk4_step(
                mats[i], mm, mats[i + 1], alpha[i], eta[i], dt, (facs[i], factor_mass(mm.a), facs[i + 1])
            )
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(eta))):
            raise DivergenceError("non-finite Galerkin coefficients", last_good=state)
        return alpha, eta, d, mats, ops, iters, over

    def distance(self, mats, alpha, eta, alpha_old, eta_old):
        out = 0.0
        k2 = self.k ** 2
        for i, m in enumerate(mats):
            da = alpha[i] - alpha_old[i]
            u = np.sqrt(max(float(da @ m.gram @ da), 0.0))
            out = max(out, u + float(np.linalg.norm(da[self.B])) + float(np.linalg.norm(k2 * (eta[i] - eta_old[i]))))
        return out

    def advance_window(self, state, n, ledger=None):
        """Advance n steps by Picard passes; returns (new state, report)."""
        cfg = self.picard
        dt = self.dt
        steps = np.arange(n + 1)[:, None] * dt
        zeta = state.eta[None, :] + steps * state.alpha[self.B][None, :]
        zeta_t = np.repeat(state.alpha[self.B][None, :], n + 1, axis=0)
        abar = np.repeat(state.alpha[None, :], n + 1, axis=0)
        report = WindowReport(state.t, n, 0)
        for p in range(cfg.max_iter):
            alpha, eta, d, mats, ops, iters, over = self._pass(state, zeta, zeta_t, abar, n)
            dist = self.distance(mats, alpha, eta, abar, zeta)
            report.passes = p + 1
            report.distances.append(dist)
            report.krylov_iterations += iters
            report.overshoot = max(report.overshoot, over)
            zeta, zeta_t, abar = eta, alpha[:, self.B], alpha
            if dist < cfg.tol:
                break
        else:
            if report.distances[-1] > 10 * cfg.tol:
                raise NonConvergenceError(
                    f"Picard iteration did not converge at t = {state.t:.6g} "
                    f"(distance {report.distances[-1]:.3e} after {cfg.max_iter} passes)",
                    distances=report.distances, state=state,
                )
        states = []
        for i in range(1, n + 1):
            st = CoupledState(state.t + i * dt, state.step + i, alpha[i].copy(), eta[i].copy(), d[i], state.radius)
            states.append(st)
            if self.trajectory is not None:
                self.trajectory.append(st)
            if ledger is not None:
                diag = self.diagnostics(st, mats[i], ops[i].snap)
                diag["picard_passes"] = report.passes
                self.record(ledger, st, mats[i], ops[i], diag)
        return states[-1], report

    def advance(self, state, n, ledger=None, depth=0):
        """Advance n steps with halve-and-retry on Picard non-convergence."""
        try:
            new, rep = self.advance_window(state, n, ledger)
            return new, [rep]
        except NonConvergenceError:
            if depth >= self.picard.max_halvings or n == 1:
                raise
        h = n // 2
        s1, r1 = self.advance(state, h, ledger, depth + 1)
        s2, r2 = self.advance(s1, n - h, ledger, depth + 1)
        return s2, r1 + r2

    def start_ledger(self, state):
        ledger = EnergyLedger()
        asm = self.assembler
        zt = state.alpha[self.B]
        op = DirectorOperator(self.dgrid, state.eta, zt)
        mats = asm.assemble(state.eta, zt, state.alpha, ericksen_stress(state.d, op), op.snap)
        diag = self.diagnostics(state, mats, op.snap)
        diag["picard_passes"] = 0
        self.record(ledger, state, mats, op, diag)
        return ledger

    def run(self, state, t_end, ledger=None, on_window=None):
        """Integrate to t_end in windows; ``on_window(state, ledger, reports)`` after each."""
        if ledger is None:
            ledger = self.start_ledger(state)
        if self.trajectory is not None and not self.trajectory:
            self.trajectory.append(state.copy())
        total = int(round(t_end / self.dt))
        reports = []
        while state.step < total:
            n = min(self.picard.window_steps, total - state.step)
            state, reps = self.advance(state, n, ledger)
            reports.extend(reps)
            if on_window is not None:
                on_window(state, ledger, reports)
        return state, ledger, reports


def picard_advance_window(sim, state, ledger=None):
    """One window of the configured length."""
    return sim.advance(state, sim.picard.window_steps, ledger)


def check_kinematics(ledger, tol=1e-10):
    vals = [d.get("interface_mismatch", 0.0) for d in ledger.diagnostics]
    return max(vals, default=0.0) < tol, max(vals, default=0.0)
