"""Boundary curves, Hanzawa maps, Piola transforms and pullback tensors.

Two geometries are supported:

* ``channel``: reference domain [0, 2pi) x (0, 1), periodic in x, with the
  flexible wall at s = 1 (unit normal (0, 1)) and a rigid wall at s = 0.
  The Hanzawa map is Psi(x, s) = (x, s + eta(x) chi(s)) with the clamped
  cubic chi(s) = s^2 (3 - 2 s).
* ``annulus``: the unit disc with a flexible unit circle.  Used for
  geometry property checks only.

Gradients of vector fields follow the row convention (grad v)_{ij} = d_i v_j,
so that B = J grad(Psi^{-1}) o Psi = J F^{-T} and A = F^{-1} B = J F^{-1} F^{-T}
where F = D Psi is the ordinary Jacobian matrix F_{ij} = d_j Psi_i.
"""

from dataclasses import dataclass

import numpy as np

from .errors import AdmissibilityError, DomainError, GeometryError, InversionError

TWO_PI = 2.0 * np.pi
NEWTON_TOL = 1e-13
NEWTON_MAXIT = 50


# ---------------------------------------------------------------------------
# Fourier shell profiles
# ---------------------------------------------------------------------------

def mode_wavenumbers(n_modes):
    """Wavenumber and parity of the zero-mean shell modes in storage order.

    Index j maps to k = j // 2 + 1, cosine for even j and sine for odd j.
    """
    j = np.arange(n_modes)
    return j // 2 + 1, (j % 2 == 0)


def mode_table(n_modes, y, order=0):
    """Values of the order-th y-derivative of every orthonormal shell mode.

    Returns an array of shape (n_modes, len(y)).
    """
    y = np.asarray(y, dtype=float)
    k, is_cos = mode_wavenumbers(n_modes)
    phase = np.outer(k, y)
    # d^p/dy^p cos(ky) = k^p cos(ky + p pi/2), likewise for sin
    shift = order * np.pi / 2.0
    vals = np.where(is_cos[:, None], np.cos(phase + shift), np.sin(phase + shift))
    return vals * (k[:, None].astype(float) ** order) / np.sqrt(np.pi)


class FourierProfile:
    """Zero-mean periodic profile eta(y) = sum_j c_j psi_j(y)."""

    def __init__(self, coeffs):
        self.coeffs = np.array(coeffs, dtype=float)
        self.coeffs.setflags(write=False)

    def __call__(self, y, order=0):
        y = np.asarray(y, dtype=float)
        if self.coeffs.size == 0:
            return np.zeros_like(y)
        return (self.coeffs @ mode_table(self.coeffs.size, y.ravel(), order)).reshape(y.shape)

    def sup_norm(self, n_samples=1024):
        y = np.linspace(0.0, TWO_PI, n_samples, endpoint=False)
        return float(np.max(np.abs(self(y)))) if self.coeffs.size else 0.0


class CallableProfile:
    """Profile given by explicit callables for the value and two derivatives."""

    def __init__(self, f, df=None, ddf=None):
        self._f = [f, df, ddf]

    def __call__(self, y, order=0):
        fn = self._f[order]
        if fn is None:
            raise GeometryError(f"derivative of order {order} not provided")
        y = np.asarray(y, dtype=float)
        return np.broadcast_to(np.asarray(fn(y), dtype=float), y.shape).copy()

    def sup_norm(self, n_samples=1024):
        y = np.linspace(0.0, TWO_PI, n_samples, endpoint=False)
        return float(np.max(np.abs(self(y))))


def constant_profile(value):
    return CallableProfile(lambda y: value + 0.0 * y, lambda y: 0.0 * y, lambda y: 0.0 * y)


# ---------------------------------------------------------------------------
# Cutoff
# ---------------------------------------------------------------------------

def cutoff(s, order=0):
    """Clamped cubic chi(s) = s^2 (3 - 2 s) on [0, 1], constant outside."""
    s = np.asarray(s, dtype=float)
    sc = np.clip(s, 0.0, 1.0)
    inside = (s >= 0.0) & (s <= 1.0)
    if order == 0:
        return sc * sc * (3.0 - 2.0 * sc)
    if order == 1:
        return np.where(inside, 6.0 * sc * (1.0 - sc), 0.0)
    if order == 2:
        return np.where(inside, 6.0 - 12.0 * sc, 0.0)
    raise ValueError("order must be 0, 1 or 2")


# ---------------------------------------------------------------------------
# Boundary curve
# ---------------------------------------------------------------------------

def perp(v):
    """Rotate by +90 degrees: (v1, v2) -> (-v2, v1)."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


@dataclass(frozen=True)
class BoundaryCurve:
    kind: str
    clockwise: bool = True

    def __post_init__(self):
        if self.kind not in ("channel", "annulus"):
            raise GeometryError(f"unknown geometry '{self.kind}'")
        if self.kind == "annulus":
            y = np.linspace(0.0, TWO_PI, 64, endpoint=False)
            p, _, n = self._raw_frame(y)
            centroid = p.mean(axis=0)
            if np.any(np.einsum("ij,ij->i", p - centroid, n) <= 0.0):
                raise GeometryError("parametrization yields an inward normal; reverse its direction")

    def point(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "channel":
            return np.stack([np.mod(y, TWO_PI), np.ones_like(y)], axis=-1)
        sgn = -1.0 if self.clockwise else 1.0
        return np.stack([np.cos(y), sgn * np.sin(y)], axis=-1)

    def tangent(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "channel":
            return np.stack([np.ones_like(y), np.zeros_like(y)], axis=-1)
        sgn = -1.0 if self.clockwise else 1.0
        return np.stack([-np.sin(y), sgn * np.cos(y)], axis=-1)

    def _raw_frame(self, y):
        t = self.tangent(y)
        speed = np.linalg.norm(t, axis=-1)
        if np.any(speed < 1e-12):
            raise GeometryError("degenerate tangent")
        return self.point(y), t, perp(t) / speed[..., None]

    def frame(self, y):
        return self._raw_frame(np.mod(np.asarray(y, dtype=float), TWO_PI))

    def coordinate(self, x):
        """Boundary coordinate y(x) of the nearest boundary point."""
        x = np.asarray(x, dtype=float)
        if self.kind == "channel":
            return np.mod(x[..., 0], TWO_PI)
        sgn = -1.0 if self.clockwise else 1.0
        return np.mod(np.arctan2(sgn * x[..., 1], x[..., 0]), TWO_PI)

    def depth(self, x):
        """Signed distance coordinate s(x) to the flexible boundary (0 on it)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "channel":
            return x[..., 1] - 1.0
        return np.linalg.norm(x, axis=-1) - 1.0

    def div_normal(self, tau):
        """Divergence of the extended normal field at phi(y) + tau n(y)."""
        tau = np.asarray(tau, dtype=float)
        if self.kind == "channel":
            return np.zeros_like(tau)
        return 1.0 / (1.0 + tau)


def boundary_frame(curve, y):
    """Return phi(y), d_y phi(y) and the outward unit normal at y."""
    return curve.frame(y)


CHANNEL = BoundaryCurve("channel")
ANNULUS = BoundaryCurve("annulus")


# ---------------------------------------------------------------------------
# Hanzawa map
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PullbackTensors:
    J: np.ndarray
    B: np.ndarray
    A: np.ndarray


class HanzawaMap:
    """Psi_eta(x) = x + n(y(x)) eta(y(x)) chi((s(x) + L) / L).

    ``profile`` is any callable ``profile(y, order)``.  The channel uses the
    full channel height L = 1 so that (s + L) / L is the reference height.
    """

    def __init__(self, profile, curve=CHANNEL, L=None, alpha=0.5):
        self.curve = curve
        self.profile = profile
        self.L = float(L if L is not None else (1.0 if curve.kind == "channel" else 0.75))
        self.alpha = float(alpha)
        if not 0.0 < self.alpha < self.L + 1e-15:
            raise GeometryError("admissibility margin must satisfy 0 < alpha < L")
        self.sup_eta = float(profile.sup_norm()) if hasattr(profile, "sup_norm") else np.inf

    # -- admissibility -----------------------------------------------------
    @property
    def margin_ok(self):
        return self.sup_eta < self.alpha

    def require_admissible(self):
        if not self.margin_ok:
            raise AdmissibilityError(
                f"inadmissible displacement: sup|eta| = {self.sup_eta:.4g} >= alpha = {self.alpha}"
            )

    # -- forward ----------------------------------------------------------
    def _sigma(self, x):
        return (self.curve.depth(x) + self.L) / self.L

    def forward(self, x):
        self.require_admissible()
        x = np.asarray(x, dtype=float)
        y = self.curve.coordinate(x)
        _, _, n = self.curve.frame(y)
        disp = self.profile(y) * cutoff(self._sigma(x))
        return x + n * disp[..., None]

    # -- inverse ----------------------------------------------------------
    def inverse(self, xh, tol=NEWTON_TOL, maxit=NEWTON_MAXIT):
        """Newton iteration on the depth coordinate along the normal ray."""
        self.require_admissible()
        xh = np.asarray(xh, dtype=float)
        y = self.curve.coordinate(xh)
        eta = self.profile(y)
        if self.curve.kind == "channel":
            target = xh[..., 1]
            top = 1.0 + eta
            if np.any(target < -1e-14) or np.any(target > top + 1e-14):
                raise DomainError("point outside the deformed channel")
            r = target / np.maximum(top, 1e-300)
            r = np.clip(r, 0.0, 1.0)
            L, base = 1.0, 0.0
        else:
            target = np.linalg.norm(xh, axis=-1)
            if np.any(target > 1.0 + eta + 1e-14):
                raise DomainError("point outside the deformed disc")
            r = target.copy()
            L, base = self.L, 1.0 - self.L
        for _ in range(maxit):
            sig = (r - base) / L
            res = r + eta * cutoff(sig) - target
            if np.all(np.abs(res) <= tol * np.maximum(1.0, np.abs(target))):
                break
            r = r - res / (1.0 + eta * cutoff(sig, 1) / L)
        else:
            raise InversionError(f"Newton did not converge in {maxit} iterations")
        if self.curve.kind == "channel":
            return np.stack([xh[..., 0], r], axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(target > 0.0, r / target, 1.0)
        return xh * scale[..., None]

    # -- Jacobian ------------------------------------------------------------
    def jacobian(self, x, fd_step=1e-6):
        """F_{ij} = d_j Psi_i (analytic for the channel, central differences otherwise)."""
        x = np.asarray(x, dtype=float)
        if self.curve.kind == "channel":
            xs, s = x[..., 0], x[..., 1]
            eta, deta = self.profile(xs), self.profile(xs, 1)
            F = np.zeros(x.shape[:-1] + (2, 2))
            F[..., 0, 0] = 1.0
            F[..., 1, 0] = deta * cutoff(s)
            F[..., 1, 1] = 1.0 + eta * cutoff(s, 1)
        else:
            F = np.empty(x.shape[:-1] + (2, 2))
            for j in range(2):
                e = np.zeros(2)
                e[j] = fd_step
                F[..., :, j] = (self._forward_raw(x + e) - self._forward_raw(x - e)) / (2 * fd_step)
        return F, np.linalg.det(F)

    def _forward_raw(self, x):
        y = self.curve.coordinate(x)
        _, _, n = self.curve.frame(y)
        return x + n * (self.profile(y) * cutoff(self._sigma(x)))[..., None]

    def jacobian_and_admissibility(self, x):
        F, det = self.jacobian(x)
        return F, det, bool(np.all(det > 0.0) and self.margin_ok)

    def inverse_jacobian_direct(self, x):
        """D(Psi^{-1}) at Psi(x) by implicit differentiation of the depth equation."""
        x = np.asarray(x, dtype=float)
        if self.curve.kind != "channel":
            raise GeometryError("closed-form inverse Jacobian only for the channel")
        xs, s = x[..., 0], x[..., 1]
        Js = 1.0 + self.profile(xs) * cutoff(s, 1)
        G = np.zeros(x.shape[:-1] + (2, 2))
        G[..., 0, 0] = 1.0
        # s(xh, zh) solves s + eta(xh) chi(s) = zh
        G[..., 1, 0] = -self.profile(xs, 1) * cutoff(s) / Js
        G[..., 1, 1] = 1.0 / Js
        return G

    def pullback_tensors(self, x):
        self.require_admissible()
        F, J = self.jacobian(x)
        Finv = np.linalg.inv(F)
        B = J[..., None, None] * np.swapaxes(Finv, -1, -2)
        A = Finv @ B
        return PullbackTensors(J=J, B=B, A=A)

    def boundary_image(self, y):
        """phi_eta(y) = phi(y) + n(y) eta(y)."""
        p, _, n = self.curve.frame(y)
        return p + n * self.profile(y)[..., None]

    def deformed_tangent(self, y):
        _, t, n = self.curve.frame(y)
        if self.curve.kind == "channel":
            return t + n * self.profile(y, 1)[..., None]
        # annulus: d/dy [phi (1 + eta)] with n = phi
        return t * (1.0 + self.profile(y))[..., None] + n * self.profile(y, 1)[..., None]

    def deformed_normal(self, y):
        t = self.deformed_tangent(y)
        return perp(t) / np.linalg.norm(t, axis=-1)[..., None]


def hanzawa_forward(hmap, x):
    return hmap.forward(x)


def hanzawa_inverse(hmap, xh):
    return hmap.inverse(xh)


def jacobian_and_admissibility(hmap, x):
    return hmap.jacobian_and_admissibility(x)


def pullback_tensors(hmap, x):
    return hmap.pullback_tensors(x)


def metric_adjugate(F):
    """A = adj(F) adj(F)^T / det F, an evaluation order independent of inv()."""
    F = np.asarray(F, dtype=float)
    adj = np.empty_like(F)
    adj[..., 0, 0] = F[..., 1, 1]
    adj[..., 1, 1] = F[..., 0, 0]
    adj[..., 0, 1] = -F[..., 0, 1]
    adj[..., 1, 0] = -F[..., 1, 0]
    det = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    return adj @ np.swapaxes(adj, -1, -2) / det[..., None, None]


# ---------------------------------------------------------------------------
# Piola transform
# ---------------------------------------------------------------------------

def piola_transform(hmap, field, direction="push"):
    """Return the Piola push (or pull) of a vector field as a callable.

    push: v -> (F v / J) o Psi^{-1}, a field on the deformed domain.
    pull: u -> J F^{-1} (u o Psi), a field on the reference domain.
    """
    hmap.require_admissible()
    if direction == "push":
        def pushed(xh):
            x = hmap.inverse(xh)
            F, J = hmap.jacobian(x)
            return np.einsum("...ij,...j->...i", F, field(x)) / J[..., None]
        return pushed
    if direction == "pull":
        def pulled(x):
            F, J = hmap.jacobian(x)
            u = field(hmap.forward(x))
            return J[..., None] * np.linalg.solve(F, u[..., None])[..., 0]
        return pulled
    raise ValueError("direction must be 'push' or 'pull'")


# ---------------------------------------------------------------------------
# Corrected interface velocity
# ---------------------------------------------------------------------------

def corrected_interface_velocity(eta0, eta_moll, eta_star, curve=CHANNEL, alpha=0.5, n_quad=24):
    """exp(-int_{eta0}^{eta_moll} div n(phi + tau n) dtau) * eta_star, pointwise.

    All inputs are sampled profiles on a common y grid.
    """
    eta0 = np.asarray(eta0, dtype=float)
    eta_moll = np.asarray(eta_moll, dtype=float)
    if np.max(np.abs(eta0), initial=0.0) >= alpha or np.max(np.abs(eta_moll), initial=0.0) >= alpha:
        raise AdmissibilityError("inadmissible shell profile in velocity correction")
    if curve.kind == "channel":
        return np.array(eta_star, dtype=float)
    xg, wg = np.polynomial.legendre.leggauss(n_quad)
    half = 0.5 * (eta_moll - eta0)
    mid = 0.5 * (eta_moll + eta0)
    tau = mid[..., None] + half[..., None] * xg
    integral = half * np.sum(wg * curve.div_normal(tau), axis=-1)
    return np.exp(-integral) * eta_star


# ---------------------------------------------------------------------------
# Channel snapshot on tensor grids (vectorized fast path)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelSnapshot:
    """Geometric factors of the channel map on a tensor grid (x, s).

    Arrays with a trailing grid shape (nx, ns); ``a`` is the lower-left entry
    zeta' chi of F and ``J`` its determinant.  Time-derivative entries are
    those of a moving profile with rate coefficients ``zeta_t``.
    """

    J: np.ndarray
    a: np.ndarray
    Jx: np.ndarray
    Js: np.ndarray
    ax: np.ndarray
    as_: np.ndarray
    Jt: np.ndarray
    at: np.ndarray
    mesh_w: np.ndarray
    zeta: np.ndarray
    zeta_x: np.ndarray


def channel_snapshot(zeta, zeta_t, x, s):
    """Evaluate the channel map factors for coefficient vectors zeta, zeta_t."""
    zeta = np.asarray(zeta, dtype=float)
    zeta_t = np.asarray(zeta_t, dtype=float)
    tab = [mode_table(zeta.size, x, p) for p in range(3)]
    z0, z1, z2 = (zeta @ t for t in tab)
    zt0 = zeta_t @ tab[0] if zeta_t.size else np.zeros_like(z0)
    zt1 = zeta_t @ tab[1] if zeta_t.size else np.zeros_like(z0)
    c0, c1, c2 = cutoff(s), cutoff(s, 1), cutoff(s, 2)
    o = np.multiply.outer
    return ChannelSnapshot(
        J=1.0 + o(z0, c1),
        a=o(z1, c0),
        Jx=o(z1, c1),
        Js=o(z0, c2),
        ax=o(z2, c0),
        as_=o(z1, c1),
        Jt=o(zt0, c1),
        at=o(zt1, c0),
        mesh_w=o(zt0, c0),
        zeta=z0,
        zeta_x=z1,
    )
