"""Divergence-free fluid modes, boundary lifts and shell modes.

Every velocity mode is the rotated gradient of a separable stream function
Phi(x, s) = X(x) S(s), v = (d_s Phi, -d_x Phi), so it is divergence free by
construction.  Interior modes use S = B_m(s) = sin^2(pi s) sin(m pi s) and
vanish on both walls.  Boundary modes use Phi = -P_k(x) g(s) where P_k is the
antiderivative of the shell mode psi_k and g(s) = s^2 (3 - 2 s); their trace on
the flexible wall is (0, psi_k) = psi_k n.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import TWO_PI, cutoff, mode_wavenumbers, piola_transform

SQRT_PI = np.sqrt(np.pi)


def _trig(k, is_cos, x, order):
    """order-th derivative of the normalized cos/sin(kx); order -1 is the antiderivative."""
    x = np.asarray(x, dtype=float)
    if k == 0:
        if order == 0:
            return np.full_like(x, 1.0 / np.sqrt(TWO_PI))
        if order > 0:
            return np.zeros_like(x)
        raise ValueError("no periodic antiderivative for k = 0")
    ph = k * x + order * np.pi / 2.0
    base = np.cos(ph) if is_cos else np.sin(ph)
    return base * float(k) ** order / SQRT_PI


@dataclass(frozen=True)
class ShellMode:
    k: int
    is_cos: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("shell modes need k >= 1 (zero-mean constraint)")

    @property
    def norm_const(self):
        return 1.0 / SQRT_PI

    def __call__(self, y, order=0):
        return _trig(self.k, self.is_cos, y, order)


def shell_mode(k, parity="cos"):
    return ShellMode(int(k), parity == "cos")


def _wall_profile(m, s, order):
    """B_m(s) = sin^2(pi s) sin(m pi s) and its first two derivatives."""
    s = np.asarray(s, dtype=float)
    p = np.pi
    S, Sm, Cm = np.sin(p * s), np.sin(m * p * s), np.cos(m * p * s)
    S2, C2 = np.sin(2 * p * s), np.cos(2 * p * s)
    if order == 0:
        return S * S * Sm
    if order == 1:
        return p * S2 * Sm + m * p * S * S * Cm
    if order == 2:
        return 2 * p * p * C2 * Sm + 2 * m * p * p * S2 * Cm - (m * p) ** 2 * S * S * Sm
    raise ValueError("order must be 0, 1 or 2")


@dataclass(frozen=True)
class InteriorMode:
    k: int
    m: int
    is_cos: bool = True

    def xfac(self, x, order):
        return _trig(self.k, self.is_cos, x, order)

    def sfac(self, s, order):
        return _wall_profile(self.m, s, order)


@dataclass(frozen=True)
class BoundaryMode:
    k: int
    is_cos: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("boundary modes need k >= 1")

    @property
    def shell(self):
        return ShellMode(self.k, self.is_cos)

    def xfac(self, x, order):
        return -_trig(self.k, self.is_cos, x, order - 1)

    def sfac(self, s, order):
        return cutoff(s, order)


def interior_mode(k, m, parity="cos"):
    if m < 1 or k < 0:
        raise ValueError("interior modes need m >= 1 and k >= 0")
    return InteriorMode(int(k), int(m), parity == "cos" or k == 0)


def boundary_extension_mode(k, parity="cos"):
    return BoundaryMode(int(k), parity == "cos")


def enumerate_interior(n):
    """First n interior modes ordered by k^2 + (m pi)^2, then (k, m), cosine first.

    The key approximates the Stokes eigenvalue of the mode, so growing n adds
    the next-slowest modes; cosine and sine partners stay adjacent.
    """
    cand = [(k * k + (m * np.pi) ** 2, k, m, par) for k in range(n + 1) for m in range(1, n + 1)
            for par in ((0,) if k == 0 else (0, 1))]
    cand.sort()
    return [InteriorMode(k, m, par == 0) for _, k, m, par in cand[:n]]


def enumerate_boundary(n):
    k, is_cos = mode_wavenumbers(n)
    return [BoundaryMode(int(kk), bool(c)) for kk, c in zip(k, is_cos)]


# ---------------------------------------------------------------------------
# Evaluation of reference fields
# ---------------------------------------------------------------------------

def mode_velocity(mode, x, s):
    """Reference velocity (d_s Phi, -d_x Phi) at paired points."""
    X0, X1 = mode.xfac(x, 0), mode.xfac(x, 1)
    S0, S1 = mode.sfac(s, 0), mode.sfac(s, 1)
    return np.stack([X0 * S1, -X1 * S0], axis=-1)


def mode_divergence(mode, x, s):
    """Analytic divergence d_x v1 + d_s v2 (cancels term by term)."""
    X1, S1 = mode.xfac(x, 1), mode.sfac(s, 1)
    return X1 * S1 - X1 * S1


@dataclass(frozen=True)
class RefFields:
    """Reference velocities on a tensor grid.

    v[m, i] has shape (nx, ns); dv[m, i, j] = d_j v_i with j = 0 for x and 1 for s.
    """

    v: np.ndarray
    dv: np.ndarray


class BasisSet:
    """Interleaved fluid basis: even global index = interior, odd = boundary."""

    def __init__(self, n_interior, n_boundary=None):
        n_boundary = n_interior if n_boundary is None else n_boundary
        if n_interior < 0 or n_boundary < 0:
            raise ValueError("basis sizes must be non-negative")
        self.interior = enumerate_interior(n_interior)
        self.boundary = enumerate_boundary(n_boundary)
        order = []
        for i in range(max(n_interior, n_boundary)):
            if i < n_interior:
                order.append(("interior", i))
            if i < n_boundary:
                order.append(("boundary", i))
        self.order = order
        self.modes = [self.interior[i] if kind == "interior" else self.boundary[i] for kind, i in order]
        self.boundary_globals = np.array(
            [g for g, (kind, _) in enumerate(order) if kind == "boundary"], dtype=int
        )
        self.interior_globals = np.array(
            [g for g, (kind, _) in enumerate(order) if kind == "interior"], dtype=int
        )
        self.n_shell = n_boundary

    def __len__(self):
        return len(self.modes)

    def to_local(self, g):
        return self.order[g]

    def to_global(self, kind, i):
        return self.order.index((kind, i))

    def shell_wavenumbers(self):
        return np.array([m.k for m in self.boundary], dtype=float)

    def x_wavenumbers(self):
        return np.array([m.k for m in self.modes], dtype=int)

    def reference_fields(self, x, s):
        """Reference velocities and gradients on the tensor grid x (nx) by s (ns)."""
        x = np.asarray(x, dtype=float)
        s = np.asarray(s, dtype=float)
        M = len(self.modes)
        X = np.empty((3, M, x.size))
        S = np.empty((3, M, s.size))
        for g, mode in enumerate(self.modes):
            for p in range(3):
                X[p, g] = mode.xfac(x, p)
                S[p, g] = mode.sfac(s, p)
        o = np.einsum
        v = np.empty((M, 2, x.size, s.size))
        dv = np.empty((M, 2, 2, x.size, s.size))
        v[:, 0] = o("mi,mj->mij", X[0], S[1])
        v[:, 1] = -o("mi,mj->mij", X[1], S[0])
        dv[:, 0, 0] = o("mi,mj->mij", X[1], S[1])
        dv[:, 0, 1] = o("mi,mj->mij", X[0], S[2])
        dv[:, 1, 0] = -o("mi,mj->mij", X[2], S[0])
        dv[:, 1, 1] = -dv[:, 0, 0]
        return RefFields(v=v, dv=dv)


# ---------------------------------------------------------------------------
# Push to the moving domain
# ---------------------------------------------------------------------------

@dataclass
class PushedMode:
    mode: object
    velocity: object
    shell_function: object
    scaling: object


def push_to_moving_domain(hmap, mode):
    """Piola push of a reference mode together with its shell counterpart.

    The Piola push of a boundary mode already has trace psi_k n on the
    deformed wall of the channel (chi(1) = 1, chi'(1) = 0 give F v = J v there),
    so the shell counterpart is psi_k itself with unit scaling.
    """
    hmap.require_admissible()

    def ref(p):
        return mode_velocity(mode, p[..., 0], p[..., 1])

    pushed = piola_transform(hmap, ref, "push")
    if isinstance(mode, BoundaryMode):
        shell = mode.shell
        scaling = lambda y: np.ones_like(np.asarray(y, dtype=float))  # noqa: E731
    else:
        shell = lambda y, order=0: np.zeros_like(np.asarray(y, dtype=float))  # noqa: E731
        scaling = shell
    return PushedMode(mode=mode, velocity=pushed, shell_function=shell, scaling=scaling)


def arc_length_factor(hmap, y):
    """|d_y phi_zeta|^{-1}, the scaling used by an arc-length normalized lift."""
    return 1.0 / np.linalg.norm(hmap.deformed_tangent(y), axis=-1)
