"""Verification experiments.

* ``identity_suite``: the unit-length director identities
      Lap d + |grad d|^2 d = d_perp (Lap d . d_perp) = d_perp div((grad d)^T d_perp)
      d_t = d_perp (d_t . d_perp),   (u . grad) d = d_perp ((u . grad) d . d_perp)
  for d = (cos theta, sin theta), with symbolic or finite-difference derivatives.
* ``weak_residual_check``: mismatch of the time-integrated weak formulation on
  a stored coupled trajectory.
* ``modes_convergence_sweep`` / ``epsilon_sweep``: Galerkin Cauchy behaviour
  and the Ginzburg-Landau penalty envelope.
"""

from dataclasses import asdict, dataclass, field

import numpy as np
import sympy as sp

from .director import DirectorOperator, ericksen_stress, harmonic_limit_rhs
from .errors import NematicFSIError
from .geometry import TWO_PI

T_SYM, X_SYM, S_SYM = sp.symbols("t x s", real=True)
IDENTITY_NAMES = ("harmonic", "divergence", "time", "transport")
IDENTITY_TIME = 0.3


def theta_corpus():
    """Ten smooth angle fields theta(t, x, s)."""
    t, x, s = T_SYM, X_SYM, S_SYM
    return [
        x,
        (x ** 2 + s ** 2) / 2,
        t,
        sp.sin(x) * sp.cos(sp.pi * s),
        sp.Rational(3, 10) * sp.cos(x) * sp.cos(sp.pi * s) + sp.Rational(1, 5) * sp.sin(2 * x + sp.Rational(2, 5)),
        sp.exp(s) * sp.sin(x) + t / 2,
        x * s + t,
        sp.sin(x + t) * s ** 2,
        sp.log(2 + sp.cos(x)) + s ** 3,
        sp.cos(2 * x) * sp.sin(3 * s) + t ** 2,
    ]


def _test_velocity(x, s):
    return np.sin(np.pi * s) * np.cos(x), 1.0 + 0.5 * s * np.sin(x)


def _perp(d):
    return np.stack([-d[1], d[0]])


def _dot(a, b):
    return np.sum(a * b, axis=0)


def _identity_residuals(d, Dx, Ds, Dt, lap, divV, u):
    dp = _perp(d)
    grad2 = _dot(Dx, Dx) + _dot(Ds, Ds)
    lhs = lap + grad2 * d
    adv = u[0] * Dx + u[1] * Ds
    res = (
        lhs - dp * _dot(lap, dp),
        lhs - dp * divV,
        Dt - dp * _dot(Dt, dp),
        adv - dp * _dot(adv, dp),
    )
    return np.array([np.max(np.abs(r)) for r in res])


def _analytic_fields(theta):
    t, x, s = T_SYM, X_SYM, S_SYM
    d = sp.Matrix([sp.cos(theta), sp.sin(theta)])
    dp = sp.Matrix([-sp.sin(theta), sp.cos(theta)])
    Dx, Ds, Dt = d.diff(x), d.diff(s), d.diff(t)
    lap = d.diff(x, 2) + d.diff(s, 2)
    divV = sp.diff(Dx.dot(dp), x) + sp.diff(Ds.dot(dp), s)
    f = sp.lambdify((t, x, s), [list(d), list(Dx), list(Ds), list(Dt), list(lap), divV], "numpy")

    def ev(tv, X, S):
        out = f(tv, X, S)
        arr = [np.stack([np.broadcast_to(c, X.shape) for c in comp]) for comp in out[:5]]
        return arr + [np.broadcast_to(out[5], X.shape)]

    return ev


def _grid(n):
    nx, ns = n
    x = TWO_PI * np.arange(nx) / nx
    s = np.linspace(0.0, 1.0, ns)
    return np.meshgrid(x, s, indexing="ij")


def identity_residuals_analytic(theta, n=(64, 33)):
    X, S = _grid(n)
    d, Dx, Ds, Dt, lap, divV = _analytic_fields(theta)(IDENTITY_TIME, X, S)
    return _identity_residuals(d, Dx, Ds, Dt, lap, divV, _test_velocity(X, S))


def identity_residuals_fd(theta, n=(64, 33)):
    """Second-order central differences; off-grid values come from theta itself."""
    nx, ns = n
    hx, hs = TWO_PI / nx, 1.0 / (ns - 1)
    ht = hs
    f = sp.lambdify((T_SYM, X_SYM, S_SYM), theta, "numpy")
    x = hx * np.arange(-2, nx + 2)
    s = hs * np.arange(-2, ns + 2)
    X, S = np.meshgrid(x, s, indexing="ij")

    def director(tv):
        th = np.broadcast_to(f(tv, X, S), X.shape)
        return np.stack([np.cos(th), np.sin(th)])

    d = director(IDENTITY_TIME)
    Dt = (director(IDENTITY_TIME + ht) - director(IDENTITY_TIME - ht)) / (2 * ht)

    def cx(g):
        return (g[:, 2:, 1:-1] - g[:, :-2, 1:-1]) / (2 * hx)

    def cs(g):
        return (g[:, 1:-1, 2:] - g[:, 1:-1, :-2]) / (2 * hs)

    # one-layer-trimmed arrays
    Dx, Ds = cx(d), cs(d)
    inner = d[:, 1:-1, 1:-1]
    lap = (
        (d[:, 2:, 1:-1] - 2 * inner + d[:, :-2, 1:-1]) / hx ** 2
        + (d[:, 1:-1, 2:] - 2 * inner + d[:, 1:-1, :-2]) / hs ** 2
    )
    dp = _perp(inner)
    Vx, Vs = _dot(Dx, dp), _dot(Ds, dp)
    divV = cx(Vx[None])[0] + cs(Vs[None])[0]

    def core(a):
        return a[..., 1:-1, 1:-1]

    Xc, Sc = X[2:-2, 2:-2], S[2:-2, 2:-2]
    return _identity_residuals(
        core(inner), core(Dx), core(Ds), Dt[:, 2:-2, 2:-2], core(lap), divV, _test_velocity(Xc, Sc),
    )


def observed_order(hs, errs, floor=1e-13):
    """Least-squares slope of log err against log h; nan when the error is at round-off."""
    errs = np.asarray(errs, dtype=float)
    if np.any(errs <= floor):
        return float("nan")
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


@dataclass
class IdentityReport:
    thetas: list
    analytic: np.ndarray
    fd: np.ndarray
    grids: list
    orders: np.ndarray

    def to_dict(self):
        return {
            "thetas": self.thetas,
            "identities": list(IDENTITY_NAMES),
            "analytic_max": self.analytic.tolist(),
            "fd_residuals": self.fd.tolist(),
            "grids": [list(g) for g in self.grids],
            "fd_orders": [[None if np.isnan(o) else o for o in row] for row in self.orders],
        }


def identity_suite(thetas=None, grids=((64, 17), (128, 33), (256, 65)), analytic_grid=(64, 33)):
    """Residuals of the unit-director identities for each theta.

    ``analytic`` has shape (n_theta, 4); ``fd`` (n_theta, n_grids, 4);
    ``orders`` (n_theta, 4) is the fitted order in the s spacing.
    """
    thetas = theta_corpus() if thetas is None else [sp.sympify(th) for th in thetas]
    analytic = np.array([identity_residuals_analytic(th, analytic_grid) for th in thetas])
    fd = np.array([[identity_residuals_fd(th, g) for g in grids] for th in thetas])
    hs = np.array([1.0 / (g[1] - 1) for g in grids])
    orders = np.array([[observed_order(hs, fd[i, :, j]) for j in range(4)] for i in range(len(thetas))])
    return IdentityReport([str(th) for th in thetas], analytic, fd, list(grids), orders)


# ---------------------------------------------------------------------------
# Weak formulation residual
# ---------------------------------------------------------------------------

_DIRECTOR_TESTS = 6


def _director_test_space(X, Z):
    """Scalar shape functions and their (x, z) gradients at physical points."""
    one = np.ones_like(X)
    c, s = np.cos(X), np.sin(X)
    P = np.stack([one, c, s, Z, Z * c, Z * Z])
    Px = np.stack([0 * one, -s, c, 0 * one, -Z * s, 0 * one])
    Pz = np.stack([0 * one, 0 * one, 0 * one, one, c, 2 * Z])
    return P, Px, Pz


@dataclass
class TestTriple:
    """phi = c(t) gamma_B . psi_k on the shell, c(t) gamma . w on the fluid, c_d(t) B . P on the director."""

    gamma: np.ndarray
    time_coeffs: np.ndarray
    director_coeffs: np.ndarray
    director_time: np.ndarray

    def c(self, t, which="fluid"):
        p = self.time_coeffs if which == "fluid" else self.director_time
        return p[0] + p[1] * t + p[2] * t * t, p[1] + 2 * p[2] * t


def random_test_triples(n_fluid_modes, count=10, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        out.append(TestTriple(
            gamma=rng.normal(size=n_fluid_modes),
            time_coeffs=np.array([1.0, rng.normal(), rng.normal()]),
            director_coeffs=rng.normal(size=(2, _DIRECTOR_TESTS)),
            director_time=np.array([1.0, rng.normal(), rng.normal()]),
        ))
    return out


def _weak_terms(sim, state, triples):
    """Pairings P and right-hand-side densities Q of every triple at one state."""
    asm = sim.assembler
    B = sim.B
    k2 = sim.k ** 2
    eps = sim.params.epsilon
    alpha, eta, d, t = state.alpha, state.eta, state.d, state.t
    zt = alpha[B]

    pf = asm.push_quad(eta, zt)
    W = asm.quad.weights * pf.J
    u = np.tensordot(alpha, pf.w, axes=1)
    Gu = np.tensordot(alpha, pf.G, axes=1)

    op = DirectorOperator(sim.dgrid, eta, zt)
    snap = op.snap
    evec = asm.ericksen_vector(ericksen_stress(d, op), snap)
    mass = op.mass
    vbar = np.tensordot(alpha, asm.ref_d.v, axes=1)
    un1 = vbar[0] / snap.J
    un = np.stack([un1, snap.a * un1 + vbar[1]])
    X = np.broadcast_to(sim.dgrid.x[:, None], snap.J.shape)
    Z = sim.dgrid.s[None, :] + snap.zeta[:, None] * (sim.dgrid.s ** 2 * (3 - 2 * sim.dgrid.s))[None, :]
    P, Px, Pz = _director_test_space(X, Z)
    lap = op.laplacian(d)
    react = (np.sum(d * d, axis=0) - 1.0) / eps ** 2 * d

    Ps, Qs = [], []
    for tr in triples:
        c, dc = tr.c(t)
        cd, dcd = tr.c(t, "director")
        g = tr.gamma
        beta = g[B]
        wphi = np.tensordot(g, pf.w, axes=1)
        Gphi = np.tensordot(g, pf.G, axes=1)
        dtphi = np.tensordot(g, pf.dt, axes=1)
        psi = np.tensordot(tr.director_coeffs, P, axes=1)
        psix = np.tensordot(tr.director_coeffs, Px, axes=1)
        psiz = np.tensordot(tr.director_coeffs, Pz, axes=1)

        p_shell = c * float(zt @ beta)
        p_fluid = c * float(np.sum(W * _dot(u, wphi)))
        p_dir = cd * float(np.sum(mass * _dot(d, psi)))

        q_shell = float(np.sum(beta * (dc * zt - c * k2 * zt - c * k2 * k2 * eta)))
        conv = np.einsum("ipq,jpq,ijpq->pq", u, u, Gphi)
        q_fluid = float(np.sum(W * (
            _dot(u, dc * wphi + c * dtphi) + c * conv - c * np.einsum("ijpq,ijpq->pq", Gu, Gphi)
        ))) + c * float(evec @ g)
        transport = un[0] * _dot(d, psix) + un[1] * _dot(d, psiz)
        q_dir = float(np.sum(mass * (dcd * _dot(d, psi) + cd * (transport + _dot(lap - react, psi)))))
        Ps.append(p_shell + p_fluid + p_dir)
        Qs.append(q_shell + q_fluid + q_dir)
    return np.array(Ps), np.array(Qs)


def weak_residual_check(sim, trajectory, triples=None, count=10, seed=0):
    """|[P]_0^T - int_0^T Q dt| per test triple (trapezoid in time).

    ``trajectory`` is the list of accepted CoupledState objects from t = 0.
    """
    if triples is None:
        triples = random_test_triples(len(sim.basis), count, seed)
    if len(trajectory) < 2:
        return np.zeros(len(triples))
    times = np.array([st.t for st in trajectory])
    P, Q = zip(*(_weak_terms(sim, st, triples) for st in trajectory))
    P, Q = np.array(P), np.array(Q)
    integral = np.trapezoid(Q, times, axis=0)
    return np.abs(P[-1] - P[0] - integral)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepReport:
    parameter: str
    values: list
    metrics: dict = field(default_factory=dict)
    slopes: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    def to_dict(self):
        out = asdict(self)
        out["failures"] = {str(k): v for k, v in self.failures.items()}
        return out


def loglog_slope(x, y):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def energy_components(ledger):
    return ledger.array()[:, 1:9]


def modes_convergence_sweep(n_list, build, t_end, on_run=None):
    """Sup-t distances of ledger trajectories between consecutive mode counts.

    ``build(N)`` returns (simulation, initial state) for N modes;
    ``on_run(N, ledger)`` is called after each run.
    """
    n_list = list(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("mode counts must increase")
    report = SweepReport("N", n_list)
    comps = []
    for N in n_list:
        sim, state = build(N)
        _, ledger, _ = sim.run(state, t_end)
        comps.append(energy_components(ledger))
        if on_run is not None:
            on_run(N, ledger)
    dist = [float(np.max(np.abs(b - a))) for a, b in zip(comps, comps[1:])]
    report.metrics["distance"] = dist
    report.metrics["final_energy"] = [float(c[-1, :5].sum()) for c in comps]
    report.flags["monotone"] = bool(all(b < a for a, b in zip(dist, dist[1:])))
    return report


def limit_residual(sim, trajectory):
    """L2(0,T; L2) norm of the d_perp-projected harmonic-map residual.

    Evaluated at step midpoints: (d_t + (u . grad) d - Lap d - |grad d|^2 d) . d_perp.
    """
    if len(trajectory) < 2:
        return 0.0
    total = 0.0
    for a, b in zip(trajectory, trajectory[1:]):
        dt = b.t - a.t
        eta = 0.5 * (a.eta + b.eta)
        alpha = 0.5 * (a.alpha + b.alpha)
        op = DirectorOperator(sim.dgrid, eta, (b.eta - a.eta) / dt)
        dm = op.enforce_neumann(0.5 * (a.d + b.d))
        c = op.reference_velocity(sim.vbar_nodes(alpha))
        r = (b.d - a.d) / dt - op.transport(dm, c) - harmonic_limit_rhs(dm, op)
        proj = _dot(r, _perp(dm))
        total += dt * float(np.sum(op.mass * proj * proj))
    return float(np.sqrt(total))


def epsilon_sweep(eps_list, build, t_end, on_run=None):
    """GL penalty, limit residual and int ||Lap d||^2 per epsilon.

    ``build(eps)`` returns (simulation, initial state).  Failed runs are
    recorded and the sweep continues.
    """
    eps_list = [float(e) for e in eps_list]
    report = SweepReport("epsilon", eps_list)
    keys = ("penalty", "envelope", "limit_residual", "lap_integral", "E0")
    for k in keys:
        report.metrics[k] = []
    ok = []
    for eps in eps_list:
        try:
            sim, state = build(eps)
            sim.trajectory = []
            _, ledger, _ = sim.run(state, t_end)
        except NematicFSIError as exc:
            report.failures[eps] = f"{type(exc).__name__}: {exc}"
            for k in keys:
                report.metrics[k].append(None)
            continue
        if on_run is not None:
            on_run(eps, ledger)
        E0 = float(ledger.total_energy()[0])
        pen = max(ledger.gl_defect)
        env = 2.0 * eps * np.sqrt(E0) * (1.0 + 1e-3)
        report.metrics["penalty"].append(pen)
        report.metrics["envelope"].append(env)
        report.metrics["limit_residual"].append(limit_residual(sim, sim.trajectory))
        report.metrics["lap_integral"].append(ledger.D_lap[-1])
        report.metrics["E0"].append(E0)
        ok.append(pen <= env)
        sim.trajectory = None
    good = [i for i, p in enumerate(report.metrics["penalty"]) if p is not None]
    report.slopes["penalty"] = loglog_slope([eps_list[i] for i in good], [report.metrics["penalty"][i] for i in good])
    report.flags["envelope"] = bool(ok) and all(ok)
    return report
