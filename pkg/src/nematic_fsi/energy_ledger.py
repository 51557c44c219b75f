"""Energy and dissipation bookkeeping for coupled runs.

Instantaneous energies are recorded per accepted step; dissipation rates are
integrated in time by the trapezoid rule.  The discrete energy inequality is
E(t) + D(0, t) <= E(0) (1 + tol_rel) + tol_abs.
"""

from dataclasses import dataclass, field

import numpy as np

from .director import gl_rhs
from .errors import BoundViolation, EnergyViolation

CSV_COLUMNS = (
    "t", "E_shell_kin", "E_bend", "E_fluid", "E_dirichlet", "E_gl",
    "D_shell", "D_visc", "D_director", "slack", "max_abs_d",
)
ENERGY_KEYS = ("E_shell_kin", "E_bend", "E_fluid", "E_dirichlet", "E_gl")
RATE_KEYS = ("D_shell", "D_visc", "D_director", "D_lap")

TOL_REL = 1e-3
TOL_ABS = 1e-10


@dataclass
class EnergyLedger:
    rows: list = field(default_factory=list)
    rates: list = field(default_factory=list)
    gl_defect: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    D_lap: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def append(self, t, energies, rates, max_abs_d, gl_defect=0.0, diag=None):
        """Add one accepted step; cumulative dissipation by trapezoid."""
        rate = np.array([float(rates.get(k, 0.0)) for k in RATE_KEYS])
        if self.rows:
            prev = self.rows[-1]
            dt = t - prev[0]
            cum = np.array([prev[6], prev[7], prev[8], self.D_lap[-1]]) + 0.5 * dt * (rate + self.rates[-1])
        else:
            cum = np.zeros(4)
        E = [float(energies.get(k, 0.0)) for k in ENERGY_KEYS]
        E0 = sum(self.rows[0][1:6]) if self.rows else sum(E)
        slack = E0 - sum(E) - float(np.sum(cum[:3]))
        self.rows.append([float(t)] + E + [float(c) for c in cum[:3]] + [slack, float(max_abs_d)])
        self.rates.append(rate)
        self.D_lap.append(float(cum[3]))
        self.gl_defect.append(float(gl_defect))
        self.diagnostics.append(dict(diag or {}))

    def array(self):
        return np.array(self.rows, dtype=float).reshape(-1, len(CSV_COLUMNS))

    def column(self, name):
        return self.array()[:, CSV_COLUMNS.index(name)]

    def total_energy(self):
        return self.array()[:, 1:6].sum(axis=1)

    def total_dissipation(self):
        return self.array()[:, 6:9].sum(axis=1)

    def energy_defect(self):
        """max_t |E(t) + D(0, t) - E(0)| / E(0): zero for an exact energy balance."""
        E = self.total_energy()
        if E.size == 0 or E[0] == 0.0:
            return 0.0
        return float(np.max(np.abs(E + self.total_dissipation() - E[0])) / E[0])

    # -- serialization helpers ---------------------------------------------
    def to_dict(self):
        return {
            "rows": [list(r) for r in self.rows],
            "rates": [list(map(float, r)) for r in self.rates],
            "gl_defect": list(self.gl_defect),
            "D_lap": list(self.D_lap),
            "diagnostics": list(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, data):
        led = cls()
        led.rows = [list(map(float, r)) for r in data["rows"]]
        led.rates = [np.array(r, dtype=float) for r in data["rates"]]
        led.gl_defect = list(map(float, data["gl_defect"]))
        led.D_lap = list(map(float, data["D_lap"]))
        led.diagnostics = list(data["diagnostics"])
        return led


def compute_ledger(k, eta, eta_t, alpha=None, gram=None, dirichlet=None, d=None, op=None, epsilon=None):
    """Energies, dissipation rates and GL defect of one state.

    Fluid terms need (alpha, gram, dirichlet); director terms need (d, op, epsilon).
    """
    energies, rates = shell_terms(k, eta, eta_t)
    if alpha is not None:
        e, r = fluid_terms(alpha, gram, dirichlet)
        energies.update(e)
        rates.update(r)
    defect = 0.0
    if d is not None:
        e, r, defect = director_terms(d, op, epsilon)
        energies.update(e)
        rates.update(r)
    return energies, rates, defect


def shell_terms(k, eta, eta_t):
    k2 = np.asarray(k, dtype=float) ** 2
    return (
        {"E_shell_kin": 0.5 * float(eta_t @ eta_t), "E_bend": 0.5 * float(np.sum((k2 * eta) ** 2))},
        {"D_shell": float(np.sum(k2 * eta_t ** 2))},
    )


def fluid_terms(alpha, gram, dirichlet):
    return (
        {"E_fluid": 0.5 * float(alpha @ gram @ alpha)},
        {"D_visc": float(alpha @ dirichlet @ alpha)},
    )


def director_terms(d, op, epsilon):
    """Director energies and rates with the nodal masses of the variational Laplacian."""
    W = op.mass
    r2m1 = np.sum(d * d, axis=0) - 1.0
    lap = op.laplacian(d)
    res = gl_rhs(d, op, epsilon)
    energies = {
        "E_dirichlet": op.dirichlet_energy(d),
        "E_gl": float(np.sum(W * r2m1 ** 2)) / (4.0 * epsilon ** 2),
    }
    rates = {
        "D_director": float(np.sum(W * np.sum(res * res, axis=0))),
        "D_lap": float(np.sum(W * np.sum(lap * lap, axis=0))),
    }
    gl_defect = float(np.sqrt(np.sum(W * r2m1 ** 2)))
    return energies, rates, gl_defect


def check_inequality(ledger, tol_rel=TOL_REL, tol_abs=TOL_ABS, raise_on_fail=True):
    """Check E(t) + D(0, t) <= E(0)(1 + tol_rel) + tol_abs at every step.

    Returns (ok, slack array) where slack = E(0) - E(t) - D(0, t).
    """
    if len(ledger) == 0:
        return True, np.zeros(0)
    E = ledger.total_energy()
    D = ledger.total_dissipation()
    slack = E[0] - E - D
    bad = np.nonzero(E + D > E[0] * (1.0 + tol_rel) + tol_abs)[0]
    if bad.size:
        if raise_on_fail:
            i = int(bad[0])
            raise EnergyViolation(
                f"energy inequality violated at step {i} (t = {ledger.rows[i][0]:.6g}, slack = {slack[i]:.3e})",
                step=i, slack=float(slack[i]),
            )
        return False, slack
    return True, slack


def gl_penalty_bound_check(ledger, epsilon, raise_on_fail=True):
    """sup_t || |d|^2 - 1 ||_{L2} <= 2 eps sqrt(E(0)) (1 + 1e-3).

    Returns (ok, sup value, bound).
    """
    sup = max(ledger.gl_defect) if ledger.gl_defect else 0.0
    E0 = float(ledger.total_energy()[0]) if len(ledger) else 0.0
    bound = 2.0 * epsilon * np.sqrt(max(E0, 0.0)) * (1.0 + 1e-3)
    ok = sup <= bound + 1e-14
    if not ok and raise_on_fail:
        raise BoundViolation(f"GL penalty {sup:.4e} exceeds envelope {bound:.4e}")
    return ok, sup, bound
