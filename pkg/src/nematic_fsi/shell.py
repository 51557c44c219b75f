"""Viscoelastic shell in the orthonormal Fourier mode basis.

The shell obeys eta_tt - eta_txx + eta_xxxx = f with unit constants, which is
diagonal in the modes psi_k: each coefficient satisfies
a'' + k^2 a' + k^4 a = f_k.
"""

from dataclasses import dataclass, field

import numpy as np

from .geometry import TWO_PI, mode_table, mode_wavenumbers


@dataclass
class ShellState:
    eta: np.ndarray
    eta_t: np.ndarray
    k: np.ndarray = field(default=None)

    def __post_init__(self):
        self.eta = np.asarray(self.eta, dtype=float)
        self.eta_t = np.asarray(self.eta_t, dtype=float)
        if self.k is None:
            self.k = mode_wavenumbers(self.eta.size)[0].astype(float)

    @classmethod
    def zeros(cls, n_modes):
        return cls(np.zeros(n_modes), np.zeros(n_modes))

    def profile_sup(self, n_samples=1024):
        y = np.linspace(0.0, TWO_PI, n_samples, endpoint=False)
        return float(np.max(np.abs(self.eta @ mode_table(self.eta.size, y)))) if self.eta.size else 0.0


def shell_operator_apply(state):
    """Modal image of eta_txx - eta_xxxx: -k^2 eta_t - k^4 eta."""
    k2 = state.k ** 2
    return -k2 * state.eta_t - k2 * k2 * state.eta


def shell_energies(state):
    """(kinetic, bending, dissipation rate) of a shell state."""
    k2 = state.k ** 2
    kin = 0.5 * float(np.sum(state.eta_t ** 2))
    bend = 0.5 * float(np.sum((k2 * state.eta) ** 2))
    rate = float(np.sum(k2 * state.eta_t ** 2))
    return kin, bend, rate


def integrate_shell(state, dt, steps, forcing=None):
    """RK4 for the decoupled modal system; returns the list of states."""
    k = state.k
    k2 = k ** 2

    def rhs(t, eta, eta_t):
        acc = -k2 * eta_t - k2 * k2 * eta
        if forcing is not None:
            acc = acc + forcing(t)
        return eta_t, acc

    eta, vel = state.eta.copy(), state.eta_t.copy()
    out = [ShellState(eta.copy(), vel.copy(), k)]
    for n in range(steps):
        t = n * dt
        k1 = rhs(t, eta, vel)
        k2_ = rhs(t + dt / 2, eta + dt / 2 * k1[0], vel + dt / 2 * k1[1])
        k3 = rhs(t + dt / 2, eta + dt / 2 * k2_[0], vel + dt / 2 * k2_[1])
        k4 = rhs(t + dt, eta + dt * k3[0], vel + dt * k3[1])
        eta = eta + dt / 6 * (k1[0] + 2 * k2_[0] + 2 * k3[0] + k4[0])
        vel = vel + dt / 6 * (k1[1] + 2 * k2_[1] + 2 * k3[1] + k4[1])
        out.append(ShellState(eta.copy(), vel.copy(), k))
    return out


def exact_mode_oracle(k, t, a0, v0):
    """Closed form of a'' + k^2 a' + k^4 a = 0 with a(0) = a0, a'(0) = v0.

    Roots are k^2 (-1 +- i sqrt(3)) / 2.
    """
    if k < 1:
        raise ValueError("k >= 1 required")
    t = np.asarray(t, dtype=float)
    lam = 0.5 * k * k
    om = np.sqrt(3.0) * 0.5 * k * k
    A = a0
    B = (v0 + lam * a0) / om
    e = np.exp(-lam * t)
    c, s = np.cos(om * t), np.sin(om * t)
    a = e * (A * c + B * s)
    da = e * ((B * om - lam * A) * c - (A * om + lam * B) * s)
    return a, da


def exact_mode_dissipation(k, t, a0, v0, n_quad=64):
    """int_0^t k^2 a'(s)^2 ds by Gauss-Legendre on the closed form."""
    xg, wg = np.polynomial.legendre.leggauss(n_quad)
    ts = 0.5 * t * (xg + 1.0)
    _, da = exact_mode_oracle(k, ts, a0, v0)
    return 0.5 * t * float(np.sum(wg * k * k * da ** 2))


def surface_force(stress, hmap, y, n_modes):
    """Modal projection of f(y) = -(T n_eta) o phi_eta . n |d_y phi_eta|.

    ``stress`` holds 2x2 tensors sampled at phi_eta(y) for a uniform y grid.
    Pressure is not included.
    """
    hmap.require_admissible()
    y = np.asarray(y, dtype=float)
    stress = np.asarray(stress, dtype=float)
    _, _, n = hmap.curve.frame(y)
    tan = hmap.deformed_tangent(y)
    speed = np.linalg.norm(tan, axis=-1)
    n_eta = np.stack([-tan[:, 1], tan[:, 0]], axis=-1) / speed[:, None]
    traction = np.einsum("pij,pj->pi", stress, n_eta)
    f = -np.einsum("pi,pi->p", traction, n) * speed
    return mode_table(n_modes, y) @ f * (TWO_PI / y.size)
